// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hardgen/common.hpp"
#include "hardgen/llm_gateway.hpp"
#include "hardgen/prompt_template.hpp"
#include "hardgen/tool_universe.hpp"
#include "hardgen/trace_sampler.hpp"

#include <optional>
#include <string>
#include <vector>

namespace hardgen
{

/// T_adv: one high-level operation standing for a whole trace.
struct AdvancedToolSpec
{
    std::string name;
    std::vector<ParamSpec> params;
    std::string description;
    std::string source_trace;
    std::vector<std::string> primitive_tools; // distinct ids in first-use order
    Json bindings = Json::object();           // param name -> value taken from the trace
    std::vector<std::string> returns;         // return fields of the final step

    /// `buy_tickets_adv(cityA, cityB) -> ticket_id`
    [[nodiscard]] std::string signature() const;
    /// Signature with bound values: `buy_tickets_adv(cityA="Rivermist", ...) -> ticket_id`
    [[nodiscard]] std::string instance() const;

    [[nodiscard]] Json to_json() const;
    static AdvancedToolSpec from_json(const Json& json);
};

struct HardQueryRecord
{
    std::string text;
    AdvancedToolSpec adv;
    std::string hint; // adv.description, reused as the reasoning hint
    std::optional<std::string> easy_text;

    [[nodiscard]] Json to_json() const;
    static HardQueryRecord from_json(const Json& json);
};

/// Agent output rejected after the corrective re-prompt.
class RejectionError: public Error
{
  public:
    RejectionError(const std::string& message, std::string raw_text): Error(message), raw_text(std::move(raw_text)) {}

    std::string raw_text;
};

struct EvolutionOptions
{
    std::vector<std::string> banned_cues {"first", "then", "after that"};
    bool emit_easy_query = false;
};

/// Arguments of a trace that no earlier payload supplied, in call order.
struct ExternalArg
{
    std::size_t step = 0;
    std::string tool;
    std::string param;
    Json value;
};
std::vector<ExternalArg> external_args(const HardTrace& trace);

/// Output fields consumed by later calls, plus the names of the params that consumed them.
std::set<std::string> intermediate_names(const HardTrace& trace);

/// "Tool Call i: name(args) -> payload" lines.
std::string render_trace_details(const HardTrace& trace);
std::string render_tool_maker_prompt(const PromptLibrary& prompts, const HardTrace& trace);
std::string render_hard_query_prompt(const PromptLibrary& prompts, const AdvancedToolSpec& adv);

/// Parses a Tool Maker reply: the first JSON object carries advanced_tool_name
/// and parameters; the description comes from a "description" field or a
/// "Description:" line. Bindings and provenance are filled from the trace.
AdvancedToolSpec parse_advanced_tool(std::string_view reply, const HardTrace& trace, const ToolRegistry& registry);

/// First violated invariant, if any.
std::optional<std::string> validate_advanced_tool(const AdvancedToolSpec& adv, const HardTrace& trace,
                                                  const ToolRegistry& registry);

/// Query line of a generator reply: labels and surrounding quotes removed.
std::string extract_query_line(std::string_view reply);

/// First violated rule: a primitive id as a whole word, or a banned cue.
/// Both checks are case-insensitive.
std::optional<std::string> validate_hard_query(std::string_view text, const std::vector<std::string>& primitive_ids,
                                               const std::vector<std::string>& banned_cues);

/// Step-by-step counterpart of a hard query; names every primitive call.
std::string render_easy_query(const HardTrace& trace);

AdvancedToolSpec make_advanced_tool(LlmBackend& backend, const HardTrace& trace, const ToolRegistry& registry,
                                    const PromptLibrary& prompts, const CompletionParams& params);

HardQueryRecord make_hard_query(LlmBackend& backend, const AdvancedToolSpec& adv, const HardTrace& trace,
                                const PromptLibrary& prompts, const CompletionParams& params,
                                const EvolutionOptions& options = {});

} // namespace hardgen
