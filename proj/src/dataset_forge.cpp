// SPDX-License-Identifier: Apache-2.0
#include "hardgen/dataset_forge.hpp"

#include "hardgen/fc_checker.hpp"

#include <algorithm>

namespace hardgen
{

namespace
{

Json calls_to_json(const std::vector<Call>& calls)
{
    Json out = Json::array();
    for (const auto& c: calls)
        out.push_back(c.to_json());
    return out;
}

std::vector<Call> calls_from_json(const Json& json)
{
    std::vector<Call> out;
    for (const auto& c: json)
        out.push_back(Call::from_json(c));
    return out;
}

Json tools_to_json(const std::vector<ToolSpec>& tools)
{
    Json out = Json::array();
    for (const auto& t: tools)
        out.push_back(tool_to_json(t));
    return out;
}

Json context_to_json(const std::vector<ChatMessage>& turns, std::size_t end)
{
    Json out = Json::array();
    for (std::size_t i = 0; i < end; ++i)
        out.push_back(message_to_json(turns[i]));
    return out;
}

} // namespace

Json message_to_json(const ChatMessage& message)
{
    return {{"role", to_string(message.role)}, {"content", message.content}};
}

ChatMessage message_from_json(const Json& json)
{
    const auto role = parse_role(json.at("role").get<std::string>());
    if (!role)
        throw Error("unknown message role: " + json.at("role").dump());
    return {*role, json.at("content").get<std::string>()};
}

Json Trajectory::to_json() const
{
    Json messages = Json::array();
    for (const auto& m: turns)
        messages.push_back(message_to_json(m));
    return {
        {"id", id},
        {"turns", std::move(messages)},
        {"n_turns", n_turns},
        {"n_calls", n_calls},
        {"domain_tag", domain_tag},
        {"provenance", provenance},
        {"tools", tools_to_json(tools)},
    };
}

Trajectory Trajectory::from_json(const Json& json)
{
    Trajectory t;
    t.id = json.at("id").get<std::string>();
    for (const auto& m: json.at("turns"))
        t.turns.push_back(message_from_json(m));
    t.n_turns = json.at("n_turns").get<std::size_t>();
    t.n_calls = json.at("n_calls").get<std::size_t>();
    t.domain_tag = json.value("domain_tag", "");
    t.provenance = json.value("provenance", Json::object());
    if (json.contains("tools"))
        for (const auto& tool: json.at("tools"))
            t.tools.push_back(parse_tool_schema(tool));
    return t;
}

bool operator==(const Trajectory& a, const Trajectory& b)
{
    return a.to_json() == b.to_json();
}

Trajectory assemble(const VerifiedTrajectorySeed& seed, const AssemblyOptions& options)
{
    if (seed.steps.empty())
        throw Error("cannot assemble a session without verified steps");

    Trajectory t;
    t.id = "tj-" + (starts_with(seed.session_id, "ss-") ? seed.session_id.substr(3) : seed.session_id);
    t.tools = seed.tools;

    Json steps = Json::array();
    std::optional<std::size_t> open_segment;
    for (const auto& step: seed.steps)
    {
        if (!open_segment || *open_segment != step.segment)
        {
            if (step.segment >= seed.segments.size())
                throw Error("verified step refers to a missing segment");
            t.turns.push_back({Role::User, seed.segments[step.segment].query.text});
            ++t.n_turns;
            open_segment = step.segment;
        }
        t.turns.push_back({Role::Assistant, render_output({step.cot, step.calls, true, ""})});
        t.turns.push_back({Role::Tool, render_feedback(step.calls, step.feedback)});
        t.n_calls += step.calls.size();
        steps.push_back(calls_to_json(step.calls));
    }

    if (options.closing_summary)
    {
        const auto& last = seed.steps.back().feedback.back();
        const auto result = last.ok ? canonical_value(last.payload) : last.error;
        t.turns.push_back({Role::Assistant, render_output({"Every requested operation has returned; report the final result.",
                                                           {},
                                                           false,
                                                           "The request is complete. Result: " + result})});
    }

    t.domain_tag = "unknown";
    for (const auto& tool: seed.tools)
        if (tool.id == seed.target)
            t.domain_tag = tool.domain_tag;

    t.provenance = {
        {"session_id", seed.session_id},
        {"trace_id", seed.trace_id},
        {"target", seed.target},
        {"env_seed", seed.env_seed},
        {"steps", std::move(steps)},
    };
    return t;
}

std::vector<std::vector<Call>> provenance_steps(const Trajectory& trajectory)
{
    std::vector<std::vector<Call>> out;
    for (const auto& step: trajectory.provenance.at("steps"))
        out.push_back(calls_from_json(step));
    return out;
}

std::optional<std::string> reverify(const Trajectory& trajectory, const ApiGraph& graph, const Environment& env)
{
    const auto truth = provenance_steps(trajectory);
    auto session = env.new_session(trajectory.provenance.at("env_seed").get<std::uint64_t>());
    std::size_t step = 0;
    std::size_t calls = 0;
    for (std::size_t i = 0; i < trajectory.turns.size(); ++i)
    {
        const auto& message = trajectory.turns[i];
        if (message.role != Role::Assistant)
            continue;
        AgentOutput output;
        try
        {
            output = parse_output(message.content);
        }
        catch (const FcParseError& e)
        {
            return "message " + std::to_string(i) + " does not parse: " + e.what();
        }
        if (!output.cot)
            return "message " + std::to_string(i) + " has no think block";
        if (!output.has_tool_call)
            continue;
        if (step >= truth.size())
            return "more call steps than recorded in provenance";
        if (!check(output.calls, truth[step]))
            return "step " + std::to_string(step + 1) + " differs from ground truth";
        if (i + 1 >= trajectory.turns.size() || trajectory.turns[i + 1].role != Role::Tool)
            return "step " + std::to_string(step + 1) + " has no tool message";
        std::vector<Feedback> feedback;
        for (const auto& call: output.calls)
            feedback.push_back(env.execute(session, call, graph));
        if (render_feedback(output.calls, feedback) != trajectory.turns[i + 1].content)
            return "replay of step " + std::to_string(step + 1) + " does not reproduce the recorded feedback";
        calls += output.calls.size();
        ++step;
    }
    if (step != truth.size())
        return "fewer call steps than recorded in provenance";
    if (calls != trajectory.n_calls)
        return "n_calls disagrees with the assistant messages";
    return std::nullopt;
}

Json DatasetStats::to_json() const
{
    auto opt = [](const auto& v) { return v ? Json(*v) : Json(nullptr); };
    Json calls_hist = Json::object();
    for (const auto& [k, v]: calls_histogram)
        calls_hist[std::to_string(k)] = v;
    Json turns_hist = Json::object();
    for (const auto& [k, v]: turns_histogram)
        turns_hist[std::to_string(k)] = v;
    return {
        {"total", total},
        {"avg_calls", opt(avg_calls)},
        {"min_calls", opt(min_calls)},
        {"max_calls", opt(max_calls)},
        {"avg_turns", opt(avg_turns)},
        {"min_turns", opt(min_turns)},
        {"max_turns", opt(max_turns)},
        {"domain_distribution", domain_distribution},
        {"multi_turn_fraction", opt(multi_turn_fraction)},
        {"calls_histogram", std::move(calls_hist)},
        {"turns_histogram", std::move(turns_hist)},
    };
}

DatasetStats stats(const std::vector<Trajectory>& dataset)
{
    DatasetStats s;
    s.total = dataset.size();
    if (dataset.empty())
        return s;

    std::size_t calls = 0;
    std::size_t turns = 0;
    std::size_t multi = 0;
    std::map<std::string, std::size_t> domains;
    s.min_calls = s.max_calls = dataset.front().n_calls;
    s.min_turns = s.max_turns = dataset.front().n_turns;
    for (const auto& t: dataset)
    {
        calls += t.n_calls;
        turns += t.n_turns;
        multi += t.n_turns > 1 ? 1 : 0;
        ++domains[t.domain_tag];
        ++s.calls_histogram[t.n_calls];
        ++s.turns_histogram[t.n_turns];
        s.min_calls = std::min(*s.min_calls, t.n_calls);
        s.max_calls = std::max(*s.max_calls, t.n_calls);
        s.min_turns = std::min(*s.min_turns, t.n_turns);
        s.max_turns = std::max(*s.max_turns, t.n_turns);
    }
    const auto n = static_cast<double>(dataset.size());
    s.avg_calls = static_cast<double>(calls) / n;
    s.avg_turns = static_cast<double>(turns) / n;
    s.multi_turn_fraction = static_cast<double>(multi) / n;
    for (const auto& [tag, count]: domains)
        s.domain_distribution[tag] = static_cast<double>(count) / n;
    return s;
}

std::size_t export_jsonl(const std::vector<Trajectory>& dataset, const std::filesystem::path& path)
{
    std::vector<Json> rows;
    rows.reserve(dataset.size());
    for (const auto& t: dataset)
        rows.push_back(t.to_json());
    return write_jsonl(path, rows);
}

std::vector<Trajectory> import_jsonl(const std::filesystem::path& path)
{
    std::vector<Trajectory> out;
    for (const auto& row: read_jsonl(path))
        out.push_back(Trajectory::from_json(row));
    return out;
}

std::vector<Json> sft_samples(const std::vector<Trajectory>& dataset)
{
    std::vector<Json> rows;
    for (const auto& t: dataset)
    {
        const auto tools = tools_to_json(t.tools);
        for (std::size_t i = 0; i < t.turns.size(); ++i)
            if (t.turns[i].role == Role::Assistant)
                rows.push_back({
                    {"context", context_to_json(t.turns, i)},
                    {"target", message_to_json(t.turns[i])},
                    {"tools", tools},
                });
    }
    return rows;
}

std::size_t export_sft(const std::vector<Trajectory>& dataset, const std::filesystem::path& path)
{
    return write_jsonl(path, sft_samples(dataset));
}

std::vector<Json> rl_samples(const std::vector<Trajectory>& dataset)
{
    std::vector<Json> rows;
    for (const auto& t: dataset)
    {
        const auto tools = tools_to_json(t.tools);
        const auto& steps = t.provenance.at("steps");
        std::size_t step = 0;
        for (std::size_t i = 0; i < t.turns.size(); ++i)
        {
            if (t.turns[i].role != Role::Assistant)
                continue;
            // A step's assistant message is always followed by its tool message.
            const bool calls = i + 1 < t.turns.size() && t.turns[i + 1].role == Role::Tool && step < steps.size();
            rows.push_back({
                {"context", context_to_json(t.turns, i)},
                {"truth", calls ? steps[step] : Json(nullptr)},
                {"tools", tools},
            });
            step += calls ? 1 : 0;
        }
    }
    return rows;
}

std::size_t export_rl(const std::vector<Trajectory>& dataset, const std::filesystem::path& path)
{
    return write_jsonl(path, rl_samples(dataset));
}

} // namespace hardgen
