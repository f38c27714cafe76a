// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hardgen/common.hpp"
#include "hardgen/sim_env.hpp"

#include <optional>
#include <string>
#include <vector>

namespace hardgen
{

/// Malformed agent output. `position` is a byte offset into the parsed text.
class FcParseError: public Error
{
  public:
    FcParseError(std::size_t position, const std::string& expectation);

    std::size_t position;
    std::string expectation;
};

struct AgentOutput
{
    std::optional<std::string> cot; // set iff a think block is present
    std::vector<Call> calls;
    bool has_tool_call = false;
    std::string free_text; // prose outside the blocks, trimmed

    friend bool operator==(const AgentOutput&, const AgentOutput&) = default;
};

/// Grammar:
///   output    := ws [think ws [tool_call]] [text]  |  ws tool_call [text]  |  text
///   think     := "<think>" text "</think>"
///   tool_call := "<tool_call>" ws "[" [call ("," call)*] "]" ws "</tool_call>"
///   call      := name "(" [name "=" value ("," name "=" value)*] ")"
///   value     := string | integer | float | true | false | null | object | array
/// Python spellings True/False/None are accepted. A second block of either
/// kind, prose between think and tool_call, or a stray tag is an error.
AgentOutput parse_output(std::string_view text);

/// Parses a bracketed call list on its own.
std::vector<Call> parse_call_list(std::string_view text);

/// `name(a="x", b=7)` with sorted keys.
std::string render_call(const Call& call);
std::string render_calls(const std::vector<Call>& calls);
std::string render_output(const AgentOutput& output);

/// Order-sensitive exact match on tool ids and canonical args.
bool check(const std::vector<Call>& calls, const std::vector<Call>& truth);

struct RewardInput
{
    std::string output;
    std::optional<std::vector<Call>> truth; // nullopt: the turn needs no call
};

/// 1 iff the output follows the think/tool_call template and its calls
/// exactly match truth; for a no-call truth, 1 iff think is present and no
/// tool_call block appears.
int reward(const RewardInput& input);
int reward(std::string_view output, const std::optional<std::vector<Call>>& truth);

} // namespace hardgen
