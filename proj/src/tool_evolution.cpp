// SPDX-License-Identifier: Apache-2.0
#include "hardgen/tool_evolution.hpp"

#include "hardgen/fc_checker.hpp"

#include <cctype>
#include <map>

namespace hardgen
{

namespace
{

bool is_word_char(char c)
{
    return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
}

bool is_identifier(std::string_view s)
{
    if (s.empty() || std::isdigit(static_cast<unsigned char>(s.front())) != 0)
        return false;
    for (char c: s)
        if (!is_word_char(c))
            return false;
    return true;
}

/// Whole-word, case-insensitive search. Runs of whitespace in `needle`
/// match any whitespace run in `haystack`.
bool contains_word(std::string_view haystack, std::string_view needle)
{
    const auto text = to_lower(haystack);
    const auto word = to_lower(trim(needle));
    if (word.empty())
        return false;
    for (std::size_t start = 0; start < text.size(); ++start)
    {
        if (start > 0 && is_word_char(text[start - 1]))
            continue;
        std::size_t i = start;
        std::size_t j = 0;
        while (i < text.size() && j < word.size())
        {
            if (std::isspace(static_cast<unsigned char>(word[j])) != 0)
            {
                if (std::isspace(static_cast<unsigned char>(text[i])) == 0)
                    break;
                while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i])) != 0)
                    ++i;
                while (j < word.size() && std::isspace(static_cast<unsigned char>(word[j])) != 0)
                    ++j;
                continue;
            }
            if (text[i] != word[j])
                break;
            ++i, ++j;
        }
        if (j == word.size() && (i == text.size() || !is_word_char(text[i])))
            return true;
    }
    return false;
}

std::optional<ParamKind> parse_type_alias(std::string_view type)
{
    static const std::map<std::string, ParamKind, std::less<>> aliases = {
        {"string", ParamKind::String},   {"str", ParamKind::String},      {"text", ParamKind::String},
        {"integer", ParamKind::Integer}, {"int", ParamKind::Integer},     {"float", ParamKind::Float},
        {"number", ParamKind::Float},    {"double", ParamKind::Float},    {"boolean", ParamKind::Boolean},
        {"bool", ParamKind::Boolean},    {"enum", ParamKind::Enum},       {"object", ParamKind::Object},
        {"dict", ParamKind::Object},
    };
    auto it = aliases.find(to_lower(trim(type)));
    if (it == aliases.end())
        return std::nullopt;
    return it->second;
}

/// Extent of the first balanced JSON object in `text`, skipping braces inside strings.
std::optional<std::string_view> first_json_object(std::string_view text)
{
    const auto start = text.find('{');
    if (start == std::string_view::npos)
        return std::nullopt;
    int depth = 0;
    bool in_string = false;
    for (auto i = start; i < text.size(); ++i)
    {
        const char c = text[i];
        if (in_string)
        {
            if (c == '\\')
                ++i;
            else if (c == '"')
                in_string = false;
            continue;
        }
        if (c == '"')
            in_string = true;
        else if (c == '{')
            ++depth;
        else if (c == '}' && --depth == 0)
            return text.substr(start, i - start + 1);
    }
    return std::nullopt;
}

std::string strip_quotes(std::string text)
{
    text = trim(text);
    static const std::vector<std::pair<std::string, std::string>> pairs = {
        {"\"", "\""}, {"'", "'"}, {"“", "”"}, {"`", "`"}};
    for (const auto& [open, close]: pairs)
        if (text.size() >= open.size() + close.size() && starts_with(text, open)
            && text.compare(text.size() - close.size(), close.size(), close) == 0)
            return trim(text.substr(open.size(), text.size() - open.size() - close.size()));
    return text;
}

std::string describe_params(const AdvancedToolSpec& adv)
{
    std::string out;
    for (const auto& p: adv.params)
    {
        if (!out.empty())
            out += ", ";
        out += p.name + " (" + std::string(to_string(p.kind)) + ")";
        if (!p.description.empty())
            out += ": " + p.description;
    }
    return out.empty() ? "(none)" : out;
}

void bind_params(AdvancedToolSpec& adv, const HardTrace& trace)
{
    auto externals = external_args(trace);
    std::vector<bool> used(externals.size(), false);
    auto take = [&](auto&& accept) -> const ExternalArg* {
        for (std::size_t i = 0; i < externals.size(); ++i)
            if (!used[i] && accept(externals[i]))
            {
                used[i] = true;
                return &externals[i];
            }
        return nullptr;
    };
    std::vector<const ParamSpec*> unbound;
    for (const auto& p: adv.params)
    {
        const auto name = to_lower(p.name);
        const auto* hit = take([&](const ExternalArg& e) {
            const auto param = to_lower(e.param);
            return name == param || starts_with(name, param) || starts_with(param, name);
        });
        if (hit != nullptr)
            adv.bindings[p.name] = hit->value;
        else
            unbound.push_back(&p);
    }
    for (const auto* p: unbound)
        if (const auto* hit = take([&](const ExternalArg& e) { return value_matches(e.value, p->kind); }))
            adv.bindings[p->name] = hit->value;
}

Json params_to_json(const std::vector<ParamSpec>& params)
{
    Json out = Json::array();
    for (const auto& p: params)
        out.push_back({{"name", p.name}, {"type", to_string(p.kind)}, {"description", p.description}});
    return out;
}

} // namespace

std::string AdvancedToolSpec::signature() const
{
    std::string out = name + "(";
    for (std::size_t i = 0; i < params.size(); ++i)
        out += (i > 0 ? ", " : "") + params[i].name;
    out += ")";
    if (!returns.empty())
    {
        out += " -> ";
        for (std::size_t i = 0; i < returns.size(); ++i)
            out += (i > 0 ? ", " : "") + returns[i];
    }
    return out;
}

std::string AdvancedToolSpec::instance() const
{
    std::string out = name + "(";
    for (std::size_t i = 0; i < params.size(); ++i)
    {
        out += (i > 0 ? ", " : "") + params[i].name;
        if (auto it = bindings.find(params[i].name); it != bindings.end())
            out += "=" + canonical_value(*it);
    }
    out += ")";
    if (!returns.empty())
    {
        out += " -> ";
        for (std::size_t i = 0; i < returns.size(); ++i)
            out += (i > 0 ? ", " : "") + returns[i];
    }
    return out;
}

Json AdvancedToolSpec::to_json() const
{
    return {
        {"name", name},
        {"params", params_to_json(params)},
        {"description", description},
        {"source_trace", source_trace},
        {"primitive_tools", primitive_tools},
        {"bindings", bindings},
        {"returns", returns},
    };
}

AdvancedToolSpec AdvancedToolSpec::from_json(const Json& json)
{
    AdvancedToolSpec adv;
    adv.name = json.at("name").get<std::string>();
    for (const auto& p: json.at("params"))
    {
        auto kind = parse_type_alias(p.at("type").get<std::string>());
        if (!kind)
            throw Error("advanced tool param with unknown type");
        adv.params.push_back({p.at("name").get<std::string>(), *kind, true, std::nullopt,
                              p.value("description", std::string())});
    }
    adv.description = json.value("description", std::string());
    adv.source_trace = json.value("source_trace", std::string());
    adv.primitive_tools = json.value("primitive_tools", std::vector<std::string>());
    adv.bindings = json.value("bindings", Json::object());
    adv.returns = json.value("returns", std::vector<std::string>());
    return adv;
}

Json HardQueryRecord::to_json() const
{
    Json out = {{"text", text}, {"adv_tool", adv.to_json()}, {"hint", hint}};
    if (easy_text)
        out["easy_text"] = *easy_text;
    return out;
}

HardQueryRecord HardQueryRecord::from_json(const Json& json)
{
    HardQueryRecord record;
    record.text = json.at("text").get<std::string>();
    record.adv = AdvancedToolSpec::from_json(json.at("adv_tool"));
    record.hint = json.value("hint", record.adv.description);
    if (auto it = json.find("easy_text"); it != json.end() && it->is_string())
        record.easy_text = it->get<std::string>();
    return record;
}

std::vector<ExternalArg> external_args(const HardTrace& trace)
{
    std::vector<ExternalArg> out;
    std::set<std::string> produced;
    for (std::size_t i = 0; i < trace.steps.size(); ++i)
    {
        const auto& step = trace.steps[i];
        for (const auto& [key, value]: step.call.args.items())
            if (!produced.contains(canonical_value(value)))
                out.push_back({i, step.call.tool_id, key, value});
        if (step.feedback.payload.is_object())
            for (const auto& [_, value]: step.feedback.payload.items())
                produced.insert(canonical_value(value));
    }
    return out;
}

std::set<std::string> intermediate_names(const HardTrace& trace)
{
    std::set<std::string> out;
    std::map<std::string, std::string> produced; // canonical value -> field name
    for (const auto& step: trace.steps)
    {
        for (const auto& [key, value]: step.call.args.items())
            if (auto it = produced.find(canonical_value(value)); it != produced.end())
            {
                out.insert(it->second);
                out.insert(key);
            }
        if (step.feedback.payload.is_object())
            for (const auto& [field, value]: step.feedback.payload.items())
                produced.emplace(canonical_value(value), field);
    }
    return out;
}

std::string render_trace_details(const HardTrace& trace)
{
    std::string out;
    for (std::size_t i = 0; i < trace.steps.size(); ++i)
    {
        const auto& s = trace.steps[i];
        out += "- Tool Call " + std::to_string(i + 1) + ": " + render_call(s.call) + " -> "
               + canonical_value(s.feedback.payload) + "\n";
    }
    return out;
}

std::string render_tool_maker_prompt(const PromptLibrary& prompts, const HardTrace& trace)
{
    return prompts.get("tool_maker").render({
        {"execution_trace", canonical_value(trace_to_json(trace))},
        {"trace_details", trim(render_trace_details(trace))},
    });
}

std::string render_hard_query_prompt(const PromptLibrary& prompts, const AdvancedToolSpec& adv)
{
    return prompts.get("hard_query").render({
        {"advanced_tool_specification", adv.instance()},
        {"tool_name", adv.name},
        {"parameters", describe_params(adv)},
        {"description", adv.description},
    });
}

AdvancedToolSpec parse_advanced_tool(std::string_view reply, const HardTrace& trace, const ToolRegistry& registry)
{
    auto object = first_json_object(reply);
    if (!object)
        throw Error("no JSON object in Tool Maker reply");
    Json json;
    try
    {
        json = Json::parse(*object);
    }
    catch (const Json::parse_error& e)
    {
        throw Error(std::string("malformed JSON in Tool Maker reply: ") + e.what());
    }

    AdvancedToolSpec adv;
    auto name = json.find("advanced_tool_name");
    if (name == json.end() || !name->is_string())
        throw Error("Tool Maker reply lacks a string advanced_tool_name");
    adv.name = trim(name->get<std::string>());

    auto params = json.find("parameters");
    if (params == json.end() || !params->is_array())
        throw Error("Tool Maker reply lacks a parameters array");
    for (const auto& p: *params)
    {
        if (!p.is_object() || !p.contains("name") || !p.at("name").is_string())
            throw Error("Tool Maker parameter without a string name");
        const auto type = p.value("type", std::string("string"));
        auto kind = parse_type_alias(type);
        if (!kind)
            throw Error("Tool Maker parameter '" + p.at("name").get<std::string>() + "' has unknown type '" + type
                        + "'");
        adv.params.push_back({p.at("name").get<std::string>(), *kind, true, std::nullopt,
                              p.value("description", std::string())});
    }

    if (auto d = json.find("description"); d != json.end() && d->is_string())
        adv.description = trim(d->get<std::string>());
    if (adv.description.empty())
    {
        std::size_t pos = 0;
        while (pos <= reply.size())
        {
            auto end = reply.find('\n', pos);
            auto line = trim(reply.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos));
            const auto lowered = to_lower(line);
            for (std::string_view label: {"description:", "**description:**", "**description**:"})
                if (starts_with(lowered, label))
                {
                    adv.description = strip_quotes(line.substr(label.size()));
                    break;
                }
            if (!adv.description.empty() || end == std::string_view::npos)
                break;
            pos = end + 1;
        }
    }

    adv.source_trace = trace.trace_id;
    std::set<std::string> seen;
    for (const auto& s: trace.steps)
        if (seen.insert(s.call.tool_id).second)
            adv.primitive_tools.push_back(s.call.tool_id);
    if (!trace.steps.empty())
        if (const auto* last = registry.find(trace.steps.back().call.tool_id))
            for (const auto& r: last->returns)
                adv.returns.push_back(r.name);
    bind_params(adv, trace);
    return adv;
}

std::optional<std::string> validate_advanced_tool(const AdvancedToolSpec& adv, const HardTrace& trace,
                                                  const ToolRegistry& registry)
{
    if (!is_identifier(adv.name))
        return "advanced tool name '" + adv.name + "' is not an identifier";
    if (registry.contains(adv.name))
        return "advanced tool name '" + adv.name + "' collides with a primitive tool";
    if (adv.description.empty())
        return "advanced tool has no description";
    const auto banned = intermediate_names(trace);
    std::set<std::string> names;
    for (const auto& p: adv.params)
    {
        if (!is_identifier(p.name))
            return "parameter name '" + p.name + "' is not an identifier";
        if (!names.insert(p.name).second)
            return "duplicate parameter '" + p.name + "'";
        if (banned.contains(p.name))
            return "parameter '" + p.name + "' exposes an intermediate value; use high-level inputs";
    }
    return std::nullopt;
}

std::string extract_query_line(std::string_view reply)
{
    std::size_t pos = 0;
    while (pos <= reply.size())
    {
        auto end = reply.find('\n', pos);
        auto line = trim(reply.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos));
        pos = end == std::string_view::npos ? reply.size() + 1 : end + 1;
        if (line.empty())
            continue;
        // Drop a leading label such as "Query:" or "GOOD (hard) query:".
        if (auto colon = line.find(':'); colon != std::string::npos && colon < 40)
        {
            const auto label = to_lower(line.substr(0, colon));
            if (label.find("query") != std::string::npos)
                line = trim(line.substr(colon + 1));
        }
        line = strip_quotes(line);
        if (!line.empty())
            return line;
    }
    return {};
}

std::optional<std::string> validate_hard_query(std::string_view text, const std::vector<std::string>& primitive_ids,
                                               const std::vector<std::string>& banned_cues)
{
    if (trim(text).empty())
        return "empty query";
    for (const auto& id: primitive_ids)
        if (contains_word(text, id))
            return "query mentions primitive tool '" + id + "'";
    for (const auto& cue: banned_cues)
        if (contains_word(text, cue))
            return "query contains sequencing cue '" + cue + "'";
    return std::nullopt;
}

std::string render_easy_query(const HardTrace& trace)
{
    std::string out = "Please";
    for (std::size_t i = 0; i < trace.steps.size(); ++i)
    {
        const auto& call = trace.steps[i].call;
        out += i == 0 ? " first" : (i + 1 == trace.steps.size() ? ", and then" : ", then");
        out += " call " + call.tool_id;
        std::string args;
        for (const auto& [key, value]: call.args.items())
            args += (args.empty() ? "" : ", ") + key + " " + canonical_value(value);
        if (!args.empty())
            out += " with " + args;
    }
    return out + ".";
}

AdvancedToolSpec make_advanced_tool(LlmBackend& backend, const HardTrace& trace, const ToolRegistry& registry,
                                    const PromptLibrary& prompts, const CompletionParams& params)
{
    if (trace.steps.empty())
        throw Error("cannot abstract an empty trace");
    std::vector<ChatMessage> messages = {
        {Role::System, render_tool_maker_prompt(prompts, trace)},
        {Role::User, "Create the advanced tool for trace " + trace.trace_id + "."},
    };
    std::string violation;
    for (int round = 0; round < 2; ++round)
    {
        auto reply = complete(backend, messages, params);
        try
        {
            auto adv = parse_advanced_tool(reply, trace, registry);
            auto problem = validate_advanced_tool(adv, trace, registry);
            if (!problem)
                return adv;
            violation = *problem;
        }
        catch (const Error& e)
        {
            violation = e.what();
        }
        if (round == 1)
            throw RejectionError("advanced tool rejected: " + violation, reply);
        messages.push_back({Role::Assistant, reply});
        messages.push_back({Role::User, "Your answer was rejected: " + violation
                                            + ". Reply with a corrected JSON object in the required format."});
    }
    throw Error("unreachable");
}

HardQueryRecord make_hard_query(LlmBackend& backend, const AdvancedToolSpec& adv, const HardTrace& trace,
                                const PromptLibrary& prompts, const CompletionParams& params,
                                const EvolutionOptions& options)
{
    std::vector<ChatMessage> messages = {
        {Role::System, render_hard_query_prompt(prompts, adv)},
        {Role::User, "Write the hard query for " + adv.name + "."},
    };
    for (int round = 0; round < 2; ++round)
    {
        auto reply = complete(backend, messages, params);
        auto text = extract_query_line(reply);
        auto problem = validate_hard_query(text, adv.primitive_tools, options.banned_cues);
        if (!problem)
        {
            HardQueryRecord record {text, adv, adv.description, std::nullopt};
            if (options.emit_easy_query)
                record.easy_text = render_easy_query(trace);
            return record;
        }
        if (round == 1)
            throw RejectionError("hard query rejected: " + *problem, text);
        messages.push_back({Role::Assistant, reply});
        messages.push_back({Role::User, "Your query was rejected: " + *problem
                                            + ". Reply with one corrected query on a single line."});
    }
    throw Error("unreachable");
}

} // namespace hardgen
