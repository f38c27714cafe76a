// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hardgen/common.hpp"

#include <atomic>
#include <chrono>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace hardgen
{

enum class Role
{
    System,
    User,
    Assistant,
    Tool,
};

std::string_view to_string(Role role);
std::optional<Role> parse_role(std::string_view text);

struct ChatMessage
{
    Role role = Role::User;
    std::string content;

    friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct CompletionParams
{
    std::string model;
    double temperature = 0.7;
    int max_tokens = 2048;
    std::optional<std::int64_t> seed;
};

/// Transport failure after the retry budget, or a non-retryable HTTP error.
class TransportError: public Error
{
  public:
    using Error::Error;
};

/// Replay lookup found no recorded response.
class CassetteMiss: public Error
{
  public:
    explicit CassetteMiss(const std::string& hash): Error("no cassette entry for request " + hash), hash(hash) {}

    std::string hash;
};

/// Wire body: {messages:[{role,content}], model, temperature, max_tokens[, seed]}.
Json request_json(const std::vector<ChatMessage>& messages, const CompletionParams& params);

/// SHA-256 over the canonical request body.
std::string request_hash(const std::vector<ChatMessage>& messages, const CompletionParams& params);

class LlmBackend
{
  public:
    virtual ~LlmBackend() = default;

    /// Must be safe to call concurrently.
    virtual std::string complete(const std::vector<ChatMessage>& messages, const CompletionParams& params) = 0;
};

using BackendPtr = std::shared_ptr<LlmBackend>;

/// Validates the request, then forwards to the backend.
std::string complete(LlmBackend& backend, const std::vector<ChatMessage>& messages, const CompletionParams& params);

/// Spaces request starts at least 1/rate seconds apart. A rate <= 0 disables it.
class RateLimiter
{
  public:
    explicit RateLimiter(double requests_per_second = 0.0);
    void acquire();

  private:
    std::mutex _mutex;
    std::chrono::steady_clock::duration _interval {};
    std::chrono::steady_clock::time_point _next {};
};

struct HttpBackendOptions
{
    std::string endpoint; // base URL; "/chat/completions" is appended
    std::string api_key;
    std::string default_model;
    int max_retries = 4;
    std::chrono::milliseconds initial_backoff {500};
    double backoff_factor = 2.0;
    std::chrono::seconds timeout {120};
    double requests_per_second = 0.0;
};

/// Options from HARDGEN_ENDPOINT, HARDGEN_API_KEY and HARDGEN_MODEL.
HttpBackendOptions http_options_from_env();

/// Live chat-completion client. Connection errors, 408, 429 and 5xx are
/// retried with exponential backoff; other statuses fail immediately.
class HttpBackend: public LlmBackend
{
  public:
    explicit HttpBackend(HttpBackendOptions options);

    std::string complete(const std::vector<ChatMessage>& messages, const CompletionParams& params) override;

    [[nodiscard]] std::size_t requests_sent() const { return _requests_sent.load(); }

  private:
    HttpBackendOptions _options;
    std::string _host;
    std::string _path;
    RateLimiter _limiter;
    std::atomic<std::size_t> _requests_sent {0};
};

struct CassetteEntry
{
    std::string request_hash;
    Json request;
    std::string response;
};

/// JSONL of {request_hash, request, response}. Missing file reads as empty.
std::vector<CassetteEntry> load_cassette(const std::filesystem::path& path);

/// Answers from a cassette keyed by request hash; the first entry per hash wins.
class ReplayBackend: public LlmBackend
{
  public:
    explicit ReplayBackend(const std::filesystem::path& cassette);
    explicit ReplayBackend(const std::vector<CassetteEntry>& entries);

    std::string complete(const std::vector<ChatMessage>& messages, const CompletionParams& params) override;

    [[nodiscard]] std::size_t size() const { return _responses.size(); }

  private:
    std::map<std::string, std::string> _responses;
};

/// Forwards to `inner` and appends every exchange to the cassette.
class RecordingBackend: public LlmBackend
{
  public:
    RecordingBackend(BackendPtr inner, std::filesystem::path cassette);

    std::string complete(const std::vector<ChatMessage>& messages, const CompletionParams& params) override;

  private:
    BackendPtr _inner;
    std::filesystem::path _cassette;
    std::mutex _mutex;
};

/// Wraps `live` so that every exchange is recorded to `cassette`.
BackendPtr record(BackendPtr live, const std::filesystem::path& cassette);

/// In-process backend driven by a function or a fixed queue of replies.
class ScriptedBackend: public LlmBackend
{
  public:
    using Responder = std::function<std::string(const std::vector<ChatMessage>&, const CompletionParams&)>;

    explicit ScriptedBackend(Responder responder);
    explicit ScriptedBackend(std::vector<std::string> replies);

    std::string complete(const std::vector<ChatMessage>& messages, const CompletionParams& params) override;

    [[nodiscard]] std::size_t calls() const;

  private:
    mutable std::mutex _mutex;
    Responder _responder;
    std::deque<std::string> _queue;
    std::size_t _calls = 0;
};

} // namespace hardgen
