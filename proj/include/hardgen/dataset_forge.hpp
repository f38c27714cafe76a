// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hardgen/cot_refinery.hpp"
#include "hardgen/llm_gateway.hpp"
#include "hardgen/sim_env.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace hardgen
{

struct Trajectory
{
    std::string id;
    std::vector<ChatMessage> turns; // roles user, assistant, tool
    std::size_t n_turns = 0;        // user messages
    std::size_t n_calls = 0;
    std::string domain_tag;
    Json provenance = Json::object(); // {session_id, trace_id, target, env_seed, steps: [[call...]...]}
    std::vector<ToolSpec> tools;

    [[nodiscard]] Json to_json() const;
    static Trajectory from_json(const Json& json);

    friend bool operator==(const Trajectory& a, const Trajectory& b);
};

struct AssemblyOptions
{
    bool closing_summary = false; // final think-only assistant message
};

/// One user message per query segment; each verified step becomes an
/// assistant message (think + tool_call) followed by a tool message.
Trajectory assemble(const VerifiedTrajectorySeed& seed, const AssemblyOptions& options = {});

/// Ground-truth calls per assistant step, as recorded in provenance.
std::vector<std::vector<Call>> provenance_steps(const Trajectory& trajectory);

/// Re-parses every assistant message, checks its calls against provenance
/// and replays them in a fresh session. Returns the first problem found.
std::optional<std::string> reverify(const Trajectory& trajectory, const ApiGraph& graph, const Environment& env);

struct DatasetStats
{
    std::size_t total = 0;
    std::optional<double> avg_calls;
    std::optional<std::size_t> min_calls;
    std::optional<std::size_t> max_calls;
    std::optional<double> avg_turns;
    std::optional<std::size_t> min_turns;
    std::optional<std::size_t> max_turns;
    std::map<std::string, double> domain_distribution;
    std::optional<double> multi_turn_fraction;
    std::map<std::size_t, std::size_t> calls_histogram;
    std::map<std::size_t, std::size_t> turns_histogram;

    [[nodiscard]] Json to_json() const;
};

DatasetStats stats(const std::vector<Trajectory>& dataset);

std::size_t export_jsonl(const std::vector<Trajectory>& dataset, const std::filesystem::path& path);
std::vector<Trajectory> import_jsonl(const std::filesystem::path& path);

/// One row per assistant message: {context, target, tools}.
std::vector<Json> sft_samples(const std::vector<Trajectory>& dataset);
std::size_t export_sft(const std::vector<Trajectory>& dataset, const std::filesystem::path& path);

/// One row per assistant message: {context, truth, tools}; truth is the
/// step's call list, or null for a turn that needs no call.
std::vector<Json> rl_samples(const std::vector<Trajectory>& dataset);
std::size_t export_rl(const std::vector<Trajectory>& dataset, const std::filesystem::path& path);

Json message_to_json(const ChatMessage& message);
ChatMessage message_from_json(const Json& json);

} // namespace hardgen
