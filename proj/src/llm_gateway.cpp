// SPDX-License-Identifier: Apache-2.0
#include "hardgen/llm_gateway.hpp"

#include <cmath>
#include <fstream>
#include <thread>

namespace hardgen
{

namespace
{

constexpr std::string_view kRoleNames[] = {"system", "user", "assistant", "tool"};

} // namespace

std::string_view to_string(Role role)
{
    return kRoleNames[static_cast<int>(role)];
}

std::optional<Role> parse_role(std::string_view text)
{
    for (int i = 0; i < 4; ++i)
        if (kRoleNames[i] == text)
            return static_cast<Role>(i);
    return std::nullopt;
}

Json request_json(const std::vector<ChatMessage>& messages, const CompletionParams& params)
{
    Json list = Json::array();
    for (const auto& m: messages)
        list.push_back({{"role", to_string(m.role)}, {"content", m.content}});
    Json body = {
        {"messages", std::move(list)},
        {"model", params.model},
        {"temperature", params.temperature},
        {"max_tokens", params.max_tokens},
    };
    if (params.seed)
        body["seed"] = *params.seed;
    return body;
}

std::string request_hash(const std::vector<ChatMessage>& messages, const CompletionParams& params)
{
    return sha256_hex(canonical_value(request_json(messages, params)));
}

std::string complete(LlmBackend& backend, const std::vector<ChatMessage>& messages, const CompletionParams& params)
{
    if (messages.empty())
        throw Error("completion request without messages");
    if (!std::isfinite(params.temperature) || params.temperature < 0.0)
        throw Error("completion temperature must be finite and non-negative");
    if (params.max_tokens <= 0)
        throw Error("completion max_tokens must be positive");
    return backend.complete(messages, params);
}

RateLimiter::RateLimiter(double requests_per_second)
{
    if (requests_per_second > 0.0)
        _interval = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
            std::chrono::duration<double>(1.0 / requests_per_second));
}

void RateLimiter::acquire()
{
    if (_interval.count() == 0)
        return;
    std::chrono::steady_clock::time_point slot;
    {
        std::lock_guard lock(_mutex);
        const auto now = std::chrono::steady_clock::now();
        slot = std::max(now, _next);
        _next = slot + _interval;
    }
    std::this_thread::sleep_until(slot);
}

std::vector<CassetteEntry> load_cassette(const std::filesystem::path& path)
{
    std::vector<CassetteEntry> entries;
    if (!std::filesystem::exists(path))
        return entries;
    for (const auto& row: read_jsonl(path))
    {
        if (!row.contains("request_hash") || !row.contains("response"))
            throw IoError(path.string() + ": cassette rows need request_hash and response");
        entries.push_back({row.at("request_hash").get<std::string>(), row.value("request", Json()),
                           row.at("response").get<std::string>()});
    }
    return entries;
}

ReplayBackend::ReplayBackend(const std::filesystem::path& cassette): ReplayBackend(load_cassette(cassette)) {}

ReplayBackend::ReplayBackend(const std::vector<CassetteEntry>& entries)
{
    for (const auto& e: entries)
        _responses.emplace(e.request_hash, e.response);
}

std::string ReplayBackend::complete(const std::vector<ChatMessage>& messages, const CompletionParams& params)
{
    const auto hash = request_hash(messages, params);
    auto it = _responses.find(hash);
    if (it == _responses.end())
        throw CassetteMiss(hash);
    return it->second;
}

RecordingBackend::RecordingBackend(BackendPtr inner, std::filesystem::path cassette):
    _inner(std::move(inner)), _cassette(std::move(cassette))
{
    std::error_code ec;
    if (_cassette.has_parent_path())
        std::filesystem::create_directories(_cassette.parent_path(), ec);
    if (ec)
        throw IoError("cannot create cassette directory " + _cassette.parent_path().string() + ": " + ec.message());
    std::ofstream probe(_cassette, std::ios::app);
    if (!probe)
        throw IoError("cannot open cassette for writing: " + _cassette.string());
}

std::string RecordingBackend::complete(const std::vector<ChatMessage>& messages, const CompletionParams& params)
{
    auto response = _inner->complete(messages, params);
    const Json row = {
        {"request_hash", request_hash(messages, params)},
        {"request", request_json(messages, params)},
        {"response", response},
    };
    std::lock_guard lock(_mutex);
    std::ofstream out(_cassette, std::ios::app);
    out << canonical_value(row) << '\n';
    out.flush();
    if (!out)
        throw IoError("cassette write failed: " + _cassette.string());
    return response;
}

BackendPtr record(BackendPtr live, const std::filesystem::path& cassette)
{
    return std::make_shared<RecordingBackend>(std::move(live), cassette);
}

ScriptedBackend::ScriptedBackend(Responder responder): _responder(std::move(responder)) {}

ScriptedBackend::ScriptedBackend(std::vector<std::string> replies): _queue(replies.begin(), replies.end()) {}

std::string ScriptedBackend::complete(const std::vector<ChatMessage>& messages, const CompletionParams& params)
{
    Responder responder;
    {
        std::lock_guard lock(_mutex);
        ++_calls;
        if (!_responder)
        {
            if (_queue.empty())
                throw Error("scripted backend has no reply left");
            auto reply = std::move(_queue.front());
            _queue.pop_front();
            return reply;
        }
        responder = _responder;
    }
    return responder(messages, params);
}

std::size_t ScriptedBackend::calls() const
{
    std::lock_guard lock(_mutex);
    return _calls;
}

} // namespace hardgen
