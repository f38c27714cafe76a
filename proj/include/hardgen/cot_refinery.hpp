// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hardgen/api_graph.hpp"
#include "hardgen/common.hpp"
#include "hardgen/fc_checker.hpp"
#include "hardgen/llm_gateway.hpp"
#include "hardgen/prompt_template.hpp"
#include "hardgen/sim_env.hpp"
#include "hardgen/tool_evolution.hpp"
#include "hardgen/trace_sampler.hpp"

#include <optional>
#include <string>
#include <vector>

namespace hardgen
{

struct Diagnosis
{
    std::string error_type;
    std::string error_location;
    std::string root_cause;
    std::string corrective_hint;
    std::vector<std::string> should_reconsider;

    [[nodiscard]] Json to_json() const;
    static Diagnosis from_json(const Json& json);
    /// Text handed to the Reasoner in a refinement turn.
    [[nodiscard]] std::string render() const;
};

/// Synthetic diagnosis for a reply that breaks the think/tool_call template.
Diagnosis format_diagnosis(const std::string& problem);

/// True iff any field of `d` contains a truth call in canonical rendering.
bool leaks_answer(const Diagnosis& d, const std::vector<Call>& truth);

/// Drops everything but error_type and error_location; generic text replaces
/// any field that still leaks.
Diagnosis sanitize_diagnosis(const Diagnosis& d, const std::vector<Call>& truth);

/// Parses a Verifier reply. Unparseable or hint-less replies yield a
/// "verifier-format" diagnosis.
Diagnosis parse_diagnosis(std::string_view reply);

/// One JSON object per line describing every primitive tool.
std::string render_tool_descriptions(const std::vector<ToolSpec>& tools);

/// `<tool_response>` body: JSON array of {rendered call: payload or error}.
std::string render_feedback(const std::vector<Call>& calls, const std::vector<Feedback>& feedback);

/// System message from the initial Reasoner template plus the query as the
/// user message. Throws for an empty query or a trace tool missing from
/// `primitive_tools`.
std::vector<ChatMessage> build_initial_prompt(const HardQueryRecord& query, const std::vector<ToolSpec>& primitive_tools,
                                              const HardTrace& trace, const PromptLibrary& prompts);

/// nullopt when `calls` exactly match `truth` (no backend call); otherwise the
/// Verifier's diagnosis, sanitized against answer leaks.
std::optional<Diagnosis> verify_step(LlmBackend& verifier, const std::vector<Call>& calls,
                                     const std::vector<Call>& truth, const std::vector<Feedback>& exec_result,
                                     const std::string& query, const PromptLibrary& prompts,
                                     const CompletionParams& params);

enum class SessionStatus
{
    Running,
    Retained,
    Discarded,
};

std::string_view to_string(SessionStatus status);

struct AttemptRecord
{
    std::size_t step = 0;    // 0-based
    std::size_t attempt = 0; // 1-based
    std::string raw;
    std::string cot;
    std::vector<Call> calls;
    bool format_ok = false;
    std::optional<bool> correct; // unset until verified
    std::optional<Diagnosis> diagnosis;

    [[nodiscard]] Json to_json() const;
};

/// One user turn: the query governing steps [first_step, next segment).
struct Segment
{
    HardQueryRecord query;
    std::size_t first_step = 0;
};

struct VerifiedStep
{
    std::size_t segment = 0;
    std::string cot;
    std::vector<Call> calls;
    std::vector<Feedback> feedback;
    std::size_t attempts = 0;
};

struct VerifiedTrajectorySeed
{
    std::string session_id;
    std::string trace_id;
    std::string target;
    std::vector<Segment> segments;
    std::vector<VerifiedStep> steps;
    std::vector<ToolSpec> tools;
    std::uint64_t env_seed = 0; // replaying the steps from this seed reproduces the feedback
};

struct RefinementOptions
{
    std::size_t k_max = 3;
    bool prune_failed_attempts = false;
    bool include_correction_narrative = false;
    CompletionParams reasoner;
    CompletionParams verifier;
};

/// Reasoner-Verifier state machine over the steps of one trace.
///
/// The transcript only grows: a refinement appends a user message, and
/// advancing appends the verified calls and their feedback (unless
/// prune_failed_attempts drops the step's refinement messages first).
class RefinementSession
{
  public:
    /// `step_sizes` groups consecutive trace calls into steps; empty means one call per step.
    RefinementSession(std::vector<Segment> segments, HardTrace trace, const ApiGraph& graph, const Environment& env,
                      const PromptLibrary& prompts, RefinementOptions options, std::vector<std::size_t> step_sizes = {});

    [[nodiscard]] SessionStatus status() const { return _status; }
    [[nodiscard]] std::size_t step() const { return _step; }
    [[nodiscard]] std::size_t attempt() const { return _attempt; }
    [[nodiscard]] std::size_t step_count() const { return _steps.size(); }
    [[nodiscard]] const std::vector<ChatMessage>& prompt() const { return _prompt; }
    [[nodiscard]] const std::vector<AttemptRecord>& attempts_log() const { return _log; }
    [[nodiscard]] const std::string& session_id() const { return _session_id; }
    [[nodiscard]] std::vector<Call> truth(std::size_t step) const;

    /// Asks the Reasoner for the current step and logs the parsed reply.
    const AttemptRecord& attempt_step(LlmBackend& reasoner);

    /// Judges the latest attempt. nullopt means correct.
    std::optional<Diagnosis> verify_step(LlmBackend& verifier);

    /// Appends the refinement turn. Throws "budget exhausted" (and discards) at k_max.
    void refine(const Diagnosis& diagnosis);

    /// Executes the verified calls, appends them and their feedback, and moves on.
    void advance_step();

    /// Drives the loop to completion.
    std::optional<VerifiedTrajectorySeed> run(LlmBackend& reasoner, LlmBackend& verifier);

    [[nodiscard]] VerifiedTrajectorySeed result() const;

    /// Audit record: transcript, attempts_log and status.
    [[nodiscard]] Json dump() const;

  private:
    [[nodiscard]] const Segment& segment_of(std::size_t step) const;
    [[nodiscard]] std::string tool_descriptions() const;

    std::vector<Segment> _segments;
    HardTrace _trace;
    const ApiGraph* _graph;
    const Environment* _env;
    const PromptLibrary* _prompts;
    RefinementOptions _options;
    std::vector<std::pair<std::size_t, std::size_t>> _steps; // [begin, end) into trace steps
    std::vector<ToolSpec> _tools;
    EnvSession _env_session;
    std::vector<ChatMessage> _prompt;
    std::vector<AttemptRecord> _log;
    std::vector<VerifiedStep> _verified;
    std::size_t _step_prompt_start = 0;
    std::size_t _step = 0;
    std::size_t _attempt = 1;
    bool _awaiting_verdict = false;
    SessionStatus _status = SessionStatus::Running;
    std::string _session_id;
};

} // namespace hardgen
