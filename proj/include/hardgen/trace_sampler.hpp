// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hardgen/api_graph.hpp"
#include "hardgen/common.hpp"
#include "hardgen/sim_env.hpp"
#include "hardgen/tool_universe.hpp"

#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace hardgen
{

/// One executed call of a trace; feedback.ok is always true.
struct TraceStep
{
    Call call;
    Feedback feedback;
};

/// Γ: prefix-legal executed calls that include `target`.
struct HardTrace
{
    std::string trace_id;
    std::string target;
    std::vector<TraceStep> steps;
    std::uint64_t seed = 0;

    [[nodiscard]] std::size_t m() const { return steps.size(); }
    [[nodiscard]] std::vector<Call> calls() const;
};

Json trace_to_json(const HardTrace& trace);
HardTrace trace_from_json(const Json& json);

struct SamplerOptions
{
    std::size_t max_steps = 8;
    std::size_t retry_budget = 4;  // fresh attempts with perturbed seeds
    std::size_t arg_redraws = 8;   // redraws to avoid repeating an identical call
    bool allow_any_target = false; // skip the failure-set precondition
};

/// Sampling failure. `partial` holds the ok steps of the last attempt.
class SamplingError: public Error
{
  public:
    SamplingError(const std::string& message, std::vector<TraceStep> partial = {}):
        Error(message), partial(std::move(partial))
    {
    }

    std::vector<TraceStep> partial;
};

/// Greedy next-tool policy:
///   (a) target called         -> uniform draw from the legal set
///   (b) target legal, uncalled -> target
///   (c) otherwise              -> legal tool nearest to target, lexicographic ties;
///                                 called tools only when no uncalled one can reach target
/// Throws SamplingError("dead end") or SamplingError("target unreachable").
std::string sample_next(const ApiGraph& graph, const std::string& target, const std::set<std::string>& called,
                        Rng& rng);

/// Result of argument planning. `shortfall` names a producer that must run
/// again (with new args) before every linked param can get a distinct value.
struct ArgPlan
{
    Json args = Json::object();
    std::optional<std::string> shortfall;
};

/// Plans args for `tool`. Linked params take payload values from the session
/// history; k params sharing one (producer, field) take the k most recent
/// distinct values in chronological order. Other params draw from their
/// constraint, preferring values this tool has not used yet in the session.
/// Optional params are filled only through links.
/// Throws Error("unfillable param ...") for a required param with neither.
ArgPlan plan_args(const ApiGraph& graph, const ToolSpec& tool, const EnvSession& session, Rng& rng);

/// plan_args with any shortfall covered by repeating the most recent value.
Json choose_args(const ApiGraph& graph, const ToolSpec& tool, const EnvSession& session, Rng& rng);

/// Called after every ok step with the session that produced it.
using StepObserver = std::function<void(const Call&, const Feedback&, const EnvSession&)>;

/// Builds a hard trace in a fresh session of `env`. Stops once at least
/// m_target ok steps are recorded and the target has run.
HardTrace sample_trace(const ApiGraph& graph, const Environment& env, const std::string& target,
                       std::size_t m_target, std::uint64_t seed, const SamplerOptions& options = {},
                       const StepObserver& observer = {});

/// Same, feeding every ok step back into `graph` via update_from_feedback.
HardTrace sample_trace(ApiGraph& graph, const Environment& env, const std::string& target, std::size_t m_target,
                       std::uint64_t seed, const SamplerOptions& options = {});

/// Re-executes a trace in a fresh session; true iff every call succeeds and
/// reproduces its recorded payload.
bool replay_trace(const HardTrace& trace, const ApiGraph& graph, const Environment& env);

} // namespace hardgen
