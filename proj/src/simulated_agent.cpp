// SPDX-License-Identifier: Apache-2.0
#include "hardgen/simulated_agent.hpp"

#include "hardgen/fc_checker.hpp"

#include <algorithm>
#include <cctype>
#include <set>

namespace hardgen
{

namespace
{

std::string first_line(std::string_view text)
{
    return trim(text.substr(0, text.find('\n')));
}

/// Rest of the first line starting with `label`, trimmed.
std::optional<std::string> labelled(std::string_view text, std::string_view label)
{
    std::size_t pos = 0;
    while (pos < text.size())
    {
        auto end = text.find('\n', pos);
        auto line = text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
        auto stripped = trim(line);
        if (starts_with(stripped, label))
            return trim(std::string_view(stripped).substr(label.size()));
        if (end == std::string_view::npos)
            break;
        pos = end + 1;
    }
    return std::nullopt;
}

/// First non-empty line after the line starting with `label`.
std::optional<std::string> line_after(std::string_view text, std::string_view label)
{
    auto at = text.find(label);
    if (at == std::string_view::npos)
        return std::nullopt;
    auto pos = text.find('\n', at);
    while (pos != std::string_view::npos && pos < text.size())
    {
        auto end = text.find('\n', pos + 1);
        auto line = trim(text.substr(pos + 1, end == std::string_view::npos ? std::string_view::npos : end - pos - 1));
        if (!line.empty())
            return line;
        pos = end;
    }
    return std::nullopt;
}

std::string kind_name(const Json& value)
{
    if (value.is_boolean())
        return "boolean";
    if (value.is_number_integer())
        return "integer";
    if (value.is_number())
        return "float";
    if (value.is_object())
        return "object";
    return "string";
}

std::string words(std::string_view id)
{
    std::string out(id);
    std::replace(out.begin(), out.end(), '_', ' ');
    return out;
}

std::string plain(const Json& value)
{
    return value.is_string() ? value.get<std::string>() : canonical_value(value);
}

std::string quoted_token(std::string_view message)
{
    auto open = message.find('\'');
    if (open == std::string_view::npos)
        return {};
    auto close = message.find('\'', open + 1);
    if (close == std::string_view::npos)
        return {};
    return std::string(message.substr(open + 1, close - open - 1));
}

/// Replaces whole-word, case-insensitive occurrences of `word`.
std::string replace_word(const std::string& text, const std::string& word, const std::string& with)
{
    if (word.empty())
        return text;
    const auto lower = to_lower(text);
    const auto needle = to_lower(word);
    auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_'; };
    std::string out;
    std::size_t pos = 0;
    while (true)
    {
        auto hit = lower.find(needle, pos);
        while (hit != std::string::npos
               && ((hit > 0 && is_word(lower[hit - 1]))
                   || (hit + needle.size() < lower.size() && is_word(lower[hit + needle.size()]))))
            hit = lower.find(needle, hit + 1);
        if (hit == std::string::npos)
            break;
        out += text.substr(pos, hit - pos) + with;
        pos = hit + needle.size();
    }
    return out + text.substr(pos);
}

std::vector<Call> calls_in(std::string_view content)
{
    try
    {
        return parse_output(content).calls;
    }
    catch (const FcParseError&)
    {
        return {};
    }
}

// Bodies of the tool messages seen so far, tags stripped.
std::vector<std::string> tool_responses(const std::vector<ChatMessage>& messages)
{
    constexpr std::string_view open = "<tool_response>";
    constexpr std::string_view close = "</tool_response>";
    std::vector<std::string> out;
    for (const auto& m: messages)
    {
        if (m.role != Role::Tool)
            continue;
        std::string_view body = m.content;
        if (starts_with(body, open))
            body.remove_prefix(open.size());
        if (body.size() >= close.size() && body.substr(body.size() - close.size()) == close)
            body.remove_suffix(close.size());
        out.push_back(trim(body));
    }
    return out;
}

Call mutate(Call call)
{
    if (!call.args.is_object() || call.args.empty())
    {
        call.args = Json {{"unexpected", "value"}};
        return call;
    }
    auto& value = call.args.begin().value();
    if (value.is_string())
        value = value.get<std::string>() + "_x";
    else if (value.is_number_integer())
        value = value.get<std::int64_t>() + 1;
    else if (value.is_number())
        value = value.get<double>() + 0.5;
    else if (value.is_boolean())
        value = !value.get<bool>();
    else
        value = "wrong";
    return call;
}

std::string reply(const std::string& cot, const std::vector<Call>& calls)
{
    return "<think>\n" + cot + "\n</think>\n<tool_call>\n" + render_calls(calls) + "\n</tool_call>";
}

} // namespace

void AnswerKey::add(std::vector<std::string> queries, Steps steps, std::vector<std::string> responses)
{
    if (queries.empty())
        throw Error("answer key entry without a query");
    std::lock_guard lock(_mutex);
    auto& bucket = _entries[queries.front()];
    bucket.push_back({std::move(queries), std::move(steps), std::move(responses)});
}

std::vector<AnswerKey::Steps> AnswerKey::lookup(const std::vector<std::string>& queries, const Steps& done,
                                                const std::vector<std::string>& seen) const
{
    std::lock_guard lock(_mutex);
    std::vector<Steps> out;
    if (queries.empty())
        return out;
    auto it = _entries.find(queries.front());
    if (it == _entries.end())
        return out;
    for (const auto& entry: it->second)
    {
        if (entry.queries.size() < queries.size() || entry.steps.size() < done.size())
            continue;
        bool match = std::equal(queries.begin(), queries.end(), entry.queries.begin());
        for (std::size_t i = 0; i < done.size() && match; ++i)
            match = check(done[i], entry.steps[i]);
        if (!entry.responses.empty())
            for (std::size_t i = 0; i < seen.size() && match; ++i)
                match = i < entry.responses.size() && entry.responses[i] == seen[i];
        if (match)
            out.push_back(entry.steps);
    }
    return out;
}

SimulatedAgent::SimulatedAgent(std::shared_ptr<const AnswerKey> key, SimulatedAgentOptions options):
    _key(std::move(key)), _options(std::move(options))
{
}

double SimulatedAgent::draw(const std::vector<ChatMessage>& messages, std::string_view salt) const
{
    auto h = mix_seed(_options.seed, salt);
    for (const auto& m: messages)
        h = mix_seed(h, std::string(to_string(m.role)) + '\n' + m.content);
    return Rng(h).uniform01();
}

std::string SimulatedAgent::complete(const std::vector<ChatMessage>& messages, const CompletionParams&)
{
    if (messages.empty() || messages.front().role != Role::System)
        throw Error("simulated agent expects a system prompt");
    const auto role = first_line(messages.front().content);
    if (starts_with(role, "You are a Tool Maker agent"))
        return tool_maker(messages);
    if (starts_with(role, "You are a Hard Query Generator agent"))
        return query_generator(messages);
    if (starts_with(role, "You are a reasoning agent"))
        return reasoner(messages);
    if (starts_with(role, "You are a Verifier agent"))
        return verifier(messages);
    if (starts_with(role, "You are a tool-use assistant"))
        return self_eval(messages);
    throw Error("simulated agent cannot tell its role from: " + role);
}

std::string SimulatedAgent::tool_maker(const std::vector<ChatMessage>& messages) const
{
    const auto& prompt = messages.front().content;
    std::vector<Call> calls;
    std::vector<Json> payloads;
    std::size_t pos = 0;
    while ((pos = prompt.find("Tool Call ", pos)) != std::string::npos)
    {
        const auto colon = prompt.find(": ", pos);
        const auto arrow = prompt.find(") -> ", colon);
        const auto end = prompt.find('\n', arrow);
        if (colon == std::string::npos || arrow == std::string::npos)
            break;
        auto parsed = parse_call_list("[" + prompt.substr(colon + 2, arrow + 1 - colon - 2) + "]");
        calls.push_back(parsed.front());
        payloads.push_back(Json::parse(prompt.substr(arrow + 5, end == std::string::npos ? std::string::npos
                                                                                          : end - arrow - 5)));
        pos = arrow;
    }
    if (calls.empty())
        throw Error("simulated tool maker found no trace in the prompt");

    // High-level inputs are the arguments no earlier output supplied.
    std::set<std::string> produced;
    std::vector<std::pair<std::string, Json>> externals;
    for (std::size_t i = 0; i < calls.size(); ++i)
    {
        for (const auto& [key, value]: calls[i].args.items())
            if (!produced.contains(canonical_value(value)))
                externals.emplace_back(key, value);
        if (payloads[i].is_object())
            for (const auto& [_, value]: payloads[i].items())
                produced.insert(canonical_value(value));
    }
    std::map<std::string, int> totals;
    for (const auto& [name, _]: externals)
        ++totals[name];

    const bool retry = messages.back().role == Role::User && starts_with(messages.back().content, "Your answer was rejected");
    std::map<std::string, int> seen;
    Json params = Json::array();
    for (const auto& [name, value]: externals)
    {
        auto param = name;
        if (totals[name] > 1)
            param += static_cast<char>('A' + seen[name]++);
        if (retry)
            param = "input_" + param;
        params.push_back({{"name", param}, {"type", kind_name(value)}, {"description", "the " + words(param)}});
    }

    const auto& last = calls.back().tool_id;
    std::string returns;
    if (payloads.back().is_object())
        for (const auto& [field, _]: payloads.back().items())
            returns += (returns.empty() ? "" : " and ") + words(field);
    std::string description = "Carry out " + words(last) + " from high-level inputs";
    if (!returns.empty())
        description += ", returning the " + returns;
    description += ".";

    const Json out = {
        {"advanced_tool_name", last + (retry ? "_task" : "_adv")},
        {"parameters", params},
        {"description", description},
    };
    return out.dump(2);
}

std::string SimulatedAgent::query_generator(const std::vector<ChatMessage>& messages) const
{
    const auto& prompt = messages.front().content;
    auto description = labelled(prompt, "Description:").value_or("complete the task");
    auto instance = line_after(prompt, "Given the following advanced tool:").value_or("");

    std::string values;
    if (auto close = instance.find(')'); close != std::string::npos)
    {
        try
        {
            for (const auto& call: parse_call_list("[" + instance.substr(0, close + 1) + "]"))
                for (const auto& [key, value]: call.args.items())
                    values += (values.empty() ? "" : " and ") + words(key) + " " + plain(value);
        }
        catch (const FcParseError&)
        {
        }
    }

    if (!description.empty() && description.back() == '.')
        description.pop_back();
    if (!description.empty())
        description.front() = static_cast<char>(std::tolower(static_cast<unsigned char>(description.front())));
    std::string query = "Please " + description + (values.empty() ? "" : ", with " + values) + ".";

    // On a rejection, drop the word it names.
    for (const auto& m: messages)
        if (m.role == Role::User && starts_with(m.content, "Your query was rejected"))
            query = replace_word(query, quoted_token(m.content), "the task");
    return "Query: \"" + query + "\"";
}

std::string SimulatedAgent::reasoner(const std::vector<ChatMessage>& messages) const
{
    std::string query;
    for (const auto& m: messages)
        if (m.role == Role::User)
        {
            query = m.content;
            break;
        }

    AnswerKey::Steps done;
    std::size_t last_progress = 0;
    for (std::size_t i = 0; i < messages.size(); ++i)
        if (messages[i].role == Role::Assistant)
        {
            done.push_back(calls_in(messages[i].content));
            last_progress = i;
        }
    bool refined = false;
    for (auto i = std::max<std::size_t>(last_progress, 1); i < messages.size(); ++i)
        if (messages[i].role == Role::User && starts_with(messages[i].content, "You are refining"))
            refined = true;

    std::vector<std::string> queries {query};
    constexpr std::string_view follow_up = "Follow-up request: ";
    for (const auto& m: messages)
        if (m.role == Role::User && starts_with(m.content, follow_up))
            queries.push_back(m.content.substr(follow_up.size(), m.content.find('\n') - follow_up.size()));

    auto candidates = _key->lookup(queries, done, tool_responses(messages));
    std::erase_if(candidates, [&](const AnswerKey::Steps& c) { return c.size() <= done.size(); });
    if (candidates.empty())
        return "<think>\nI cannot tell which tool fits this request.\n</think>";
    const auto& truth = candidates.front()[done.size()];
    const auto& final_step = candidates.front().back();

    const double p = refined ? _options.refined_accuracy : _options.first_attempt_accuracy;
    std::string cot = refined ? "The feedback shows my previous call was wrong. " : "";
    if (draw(messages, "reasoner") < p)
    {
        cot += "The request needs " + std::to_string(candidates.front().size() - done.size())
               + " more step(s). The next step is " + render_calls(truth)
               + ", whose inputs are available from the request or from earlier tool outputs.";
        return reply(cot, truth);
    }

    const double kind = draw(messages, "corruption");
    if (kind < 0.2)
        return "<tool_call>\n" + render_calls(truth) + "\n</tool_call>";
    std::vector<Call> wrong;
    if (kind < 0.5 && !final_step.empty() && final_step.front().tool_id != truth.front().tool_id)
        wrong = final_step;
    else
        for (const auto& c: truth)
            wrong.push_back(mutate(c));
    cot += "I will go straight to " + render_calls(wrong) + ".";
    return reply(cot, wrong);
}

std::string SimulatedAgent::verifier(const std::vector<ChatMessage>& messages) const
{
    const auto& prompt = messages.front().content;
    std::vector<Call> attempt;
    std::vector<Call> truth;
    try
    {
        attempt = parse_call_list(labelled(prompt, "Model's Attempt:").value_or("[]"));
        truth = parse_call_list(labelled(prompt, "Ground Truth:").value_or("[]"));
    }
    catch (const FcParseError&)
    {
        return "The attempt could not be read.";
    }

    Json d = {{"should_reconsider", {"tool dependencies", "parameter mapping"}}};
    std::size_t i = 0;
    while (i < attempt.size() && i < truth.size() && attempt[i] == truth[i])
        ++i;
    if (i < attempt.size() && i < truth.size() && attempt[i].tool_id != truth[i].tool_id)
    {
        d["error_type"] = "wrong tool selection";
        d["error_location"] = "call " + std::to_string(i + 1) + " (" + attempt[i].tool_id + ")";
        d["root_cause"] = "The attempt skipped an implicit dependency of the request.";
        d["corrective_hint"] = "You called " + attempt[i].tool_id
                               + " before it could succeed. Consider what information you need to obtain first "
                                 "and which tool provides it.";
    }
    else if (i < attempt.size() && i < truth.size())
    {
        std::string param = "arguments";
        for (const auto& [key, value]: truth[i].args.items())
            if (!attempt[i].args.contains(key) || canonical_value(attempt[i].args.at(key)) != canonical_value(value))
            {
                param = key;
                break;
            }
        d["error_type"] = "incorrect parameters";
        d["error_location"] = "parameter '" + param + "' of " + attempt[i].tool_id;
        d["root_cause"] = "The parameter value was not derived from the request or from earlier tool outputs.";
        d["corrective_hint"] = "Check the value you passed for '" + param + "' in " + attempt[i].tool_id
                               + "; take it from the request or from the output of an earlier call.";
    }
    else
    {
        d["error_type"] = attempt.size() < truth.size() ? "missing tool calls" : "spurious tool calls";
        d["error_location"] = "call " + std::to_string(i + 1);
        d["root_cause"] = "The number of calls does not fit what this step requires.";
        d["corrective_hint"] = "Reconsider how many calls this step needs before the request can progress.";
    }
    return d.dump(2);
}

std::string SimulatedAgent::self_eval(const std::vector<ChatMessage>& messages) const
{
    std::string query;
    for (const auto& m: messages)
        if (m.role == Role::User)
        {
            query = m.content;
            break;
        }
    AnswerKey::Steps done;
    for (const auto& m: messages)
        if (m.role == Role::Assistant)
            for (const auto& c: calls_in(m.content))
                done.push_back({c});

    auto candidates = _key->lookup({query}, done, tool_responses(messages));
    std::erase_if(candidates, [&](const AnswerKey::Steps& c) { return c.size() <= done.size(); });
    if (candidates.empty())
        return "<think>\nThe request is complete.\n</think>";
    const auto& next = candidates.front()[done.size()];
    if (draw(messages, _options.name) < _options.accuracy)
        return reply("Next I call " + next.front().tool_id + ".", next);
    return reply("Next I call " + next.front().tool_id + ".", {mutate(next.front())});
}

} // namespace hardgen
