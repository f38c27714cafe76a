// SPDX-License-Identifier: Apache-2.0
#include "hardgen/self_eval.hpp"

#include "hardgen/cot_refinery.hpp"
#include "hardgen/fc_checker.hpp"

namespace hardgen
{

Json FailureVerdict::to_json() const
{
    return {
        {"tool", tool},
        {"per_model", per_model},
        {"challenging", challenging},
        {"reasons", reasons},
        {"needs_rerun", needs_rerun},
    };
}

EvalItem build_eval_item(const ApiGraph& graph, const Environment& env, const std::string& tool, std::uint64_t seed,
                         const EvalBuilders& builders, const PromptLibrary& prompts, const SamplerOptions& sampler)
{
    if (env.registry().find(tool) == nullptr)
        throw Error("self-eval tool not registered: " + tool);
    if (builders.tool_maker == nullptr || builders.query_generator == nullptr)
        throw Error("self-eval needs a tool maker and a query generator");

    auto options = sampler;
    options.allow_any_target = true;
    auto trace = sample_trace(graph, env, tool, 1, seed, options);
    auto adv = make_advanced_tool(*builders.tool_maker, trace, env.registry(), prompts, builders.tool_maker_params);
    auto query = make_hard_query(*builders.query_generator, adv, trace, prompts, builders.query_params,
                                 builders.evolution);
    auto truth = trace.calls();
    return {tool, std::move(trace), std::move(query.text), std::move(truth)};
}

std::pair<bool, std::string> run_model(const EvalItem& item, const EvalModel& model, const ApiGraph& graph,
                                       const Environment& env, const PromptLibrary& prompts)
{
    std::vector<ToolSpec> tools;
    std::set<std::string> seen;
    for (const auto& c: item.ground_truth)
        if (seen.insert(c.tool_id).second)
            tools.push_back(*env.registry().find(c.tool_id));

    std::vector<ChatMessage> messages = {
        {Role::System,
         prompts.get("self_eval").render({{"query", item.query}, {"tool_descriptions", render_tool_descriptions(tools)}})},
        {Role::User, item.query},
    };
    auto session = env.new_session(item.trace.seed);
    std::vector<Call> executed;
    const std::size_t max_rounds = item.ground_truth.size() + 2;

    for (std::size_t round = 0; round < max_rounds; ++round)
    {
        const auto reply = complete(*model.backend, messages, model.params);
        AgentOutput output;
        try
        {
            output = parse_output(reply);
        }
        catch (const FcParseError& e)
        {
            return {false, std::string("format: ") + e.what()};
        }
        if (!output.has_tool_call || output.calls.empty())
            break;
        std::vector<Feedback> feedback;
        for (const auto& call: output.calls)
        {
            feedback.push_back(env.execute(session, call, graph));
            executed.push_back(call);
        }
        messages.push_back({Role::Assistant, reply});
        messages.push_back(
            {Role::Tool, "<tool_response>\n" + render_feedback(output.calls, feedback) + "\n</tool_response>"});
    }

    if (check(executed, item.ground_truth))
        return {true, ""};
    return {false, "calls " + render_calls(executed) + " differ from ground truth"};
}

FailureVerdict evaluate_tool(const EvalItem& item, const std::vector<EvalModel>& models, const ApiGraph& graph,
                             const Environment& env, const PromptLibrary& prompts)
{
    if (models.empty())
        throw Error("self-eval needs at least one model");
    FailureVerdict verdict;
    verdict.tool = item.tool;
    bool all_failed = true;
    for (const auto& model: models)
    {
        bool passed = false;
        try
        {
            auto [ok, reason] = run_model(item, model, graph, env, prompts);
            passed = ok;
            if (!ok)
                verdict.reasons[model.name] = reason;
        }
        catch (const Error& e)
        {
            verdict.reasons[model.name] = std::string("backend: ") + e.what();
            verdict.needs_rerun = true;
        }
        verdict.per_model[model.name] = passed;
        all_failed = all_failed && !passed;
    }
    verdict.challenging = all_failed;
    return verdict;
}

std::set<std::string> commit_verdicts(ApiGraph& graph, const std::vector<FailureVerdict>& verdicts)
{
    std::set<std::string> ids;
    for (const auto& v: verdicts)
        if (v.challenging && !v.needs_rerun)
            ids.insert(v.tool);
    add_failure_tools(graph, ids);
    return ids;
}

} // namespace hardgen
