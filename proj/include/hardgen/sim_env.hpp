// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hardgen/common.hpp"
#include "hardgen/tool_universe.hpp"

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace hardgen
{

class ApiGraph;

struct Call
{
    std::string tool_id;
    Json args = Json::object();

    [[nodiscard]] Json to_json() const { return {{"tool_id", tool_id}, {"args", args}}; }
    static Call from_json(const Json& json);
};

/// Kind-aware equality: same tool id and identical canonical argument maps.
bool operator==(const Call& a, const Call& b);

/// Sorted-key rendering of an argument map; the keying form for payload
/// generation and fixture lookup.
std::string canonical_args(const Json& args);

struct Feedback
{
    bool ok = false;
    Json payload;      // object when ok, null otherwise
    std::string error; // non-empty when !ok

    static Feedback success(Json payload);
    static Feedback failure(std::string error);

    [[nodiscard]] Json to_json() const;
    static Feedback from_json(const Json& json);

    friend bool operator==(const Feedback& a, const Feedback& b);
};

struct HistoryEntry
{
    Call call;
    Feedback feedback;
};

/// One environment episode. `called` always equals the tool ids of the ok
/// entries in `history`.
struct EnvSession
{
    std::map<std::string, Json> state;
    std::set<std::string> called;
    std::uint64_t seed = 0;
    std::vector<HistoryEntry> history;
};

EnvSession new_session(const ToolRegistry& registry, std::uint64_t seed);

/// Pinned outputs for specific (tool, args) calls.
class FixtureTable
{
  public:
    void pin(const Call& call, Json payload);
    [[nodiscard]] const Json* find(const Call& call) const;
    [[nodiscard]] std::size_t size() const { return _pins.size(); }

    /// JSONL of {tool_id, args, payload}.
    static FixtureTable load(const std::filesystem::path& path);

  private:
    std::map<std::string, Json> _pins; // key: tool_id + '\n' + canonical args
};

/// Deterministic simulated tool environment. Feedback is a pure function of
/// (session seed, prior history, call).
class Environment
{
  public:
    explicit Environment(const ToolRegistry& registry, FixtureTable fixtures = {});

    [[nodiscard]] EnvSession new_session(std::uint64_t seed) const;

    /// Validates and executes one call. Illegal or invalid calls return error
    /// feedback, are appended to history, and leave state/called untouched.
    Feedback execute(EnvSession& session, const Call& call, const ApiGraph& graph) const;

    /// Payload that a legal call would produce, without touching any session.
    [[nodiscard]] Json payload_for(std::uint64_t seed, const Call& call) const;

    [[nodiscard]] const ToolRegistry& registry() const { return *_registry; }
    [[nodiscard]] const FixtureTable& fixtures() const { return _fixtures; }

  private:
    const ToolRegistry* _registry;
    FixtureTable _fixtures;
};

} // namespace hardgen
