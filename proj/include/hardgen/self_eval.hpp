// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hardgen/api_graph.hpp"
#include "hardgen/llm_gateway.hpp"
#include "hardgen/prompt_template.hpp"
#include "hardgen/sim_env.hpp"
#include "hardgen/tool_evolution.hpp"
#include "hardgen/trace_sampler.hpp"

#include <map>
#include <string>
#include <vector>

namespace hardgen
{

struct EvalItem
{
    std::string tool;
    HardTrace trace;
    std::string query;
    std::vector<Call> ground_truth; // == trace.calls()
};

struct FailureVerdict
{
    std::string tool;
    std::map<std::string, bool> per_model; // model name -> passed
    bool challenging = false;              // every model failed
    std::map<std::string, std::string> reasons;
    bool needs_rerun = false; // some failure came from the backend, not the model

    [[nodiscard]] Json to_json() const;
};

struct EvalModel
{
    std::string name;
    BackendPtr backend;
    CompletionParams params;
};

/// Agents used to turn a sampled trace into an evaluation query.
struct EvalBuilders
{
    LlmBackend* tool_maker = nullptr;
    LlmBackend* query_generator = nullptr;
    CompletionParams tool_maker_params;
    CompletionParams query_params;
    EvolutionOptions evolution;
};

/// Shortest trace ending in `tool`, abstracted into a hard query.
EvalItem build_eval_item(const ApiGraph& graph, const Environment& env, const std::string& tool, std::uint64_t seed,
                         const EvalBuilders& builders, const PromptLibrary& prompts,
                         const SamplerOptions& sampler = {});

/// Runs one model interactively (call, feedback, next call) until it stops
/// calling or the round limit is hit, then exact-matches the executed call
/// sequence against ground truth. Returns {passed, reason}.
std::pair<bool, std::string> run_model(const EvalItem& item, const EvalModel& model, const ApiGraph& graph,
                                       const Environment& env, const PromptLibrary& prompts);

/// challenging <=> every model failed. Backend errors count as failure and set needs_rerun.
FailureVerdict evaluate_tool(const EvalItem& item, const std::vector<EvalModel>& models, const ApiGraph& graph,
                             const Environment& env, const PromptLibrary& prompts);

/// Adds every challenging tool without needs_rerun to the failure set; returns those ids.
std::set<std::string> commit_verdicts(ApiGraph& graph, const std::vector<FailureVerdict>& verdicts);

} // namespace hardgen
