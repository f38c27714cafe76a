// SPDX-License-Identifier: Apache-2.0
#include "hardgen/tool_universe.hpp"

#include <fstream>
#include <set>

namespace hardgen
{

namespace
{

constexpr std::string_view kKindNames[] = {"string", "integer", "float", "boolean", "enum", "object"};

const std::set<std::string, std::less<>> kKnownToolFields = {
    "id", "description", "params", "returns", "domain_tag", "is_failure",
};

std::string require_string(const Json& json, const char* key, const std::string& where)
{
    auto it = json.find(key);
    if (it == json.end())
        throw SchemaError(where + ": missing field '" + key + "'");
    if (!it->is_string())
        throw SchemaError(where + ": field '" + key + "' must be a string");
    return it->get<std::string>();
}

ParamKind require_kind(const Json& json, const std::string& where)
{
    auto name = require_string(json, "kind", where);
    auto kind = parse_param_kind(name);
    if (!kind)
        throw SchemaError(where + ": unknown kind '" + name + "'");
    return *kind;
}

} // namespace

std::string_view to_string(ParamKind kind)
{
    return kKindNames[static_cast<int>(kind)];
}

std::optional<ParamKind> parse_param_kind(std::string_view text)
{
    for (int i = 0; i < 6; ++i)
        if (kKindNames[i] == text)
            return static_cast<ParamKind>(i);
    return std::nullopt;
}

bool ValueConstraint::admits(const Json& value) const
{
    if (is_enumerated())
    {
        const auto canon = canonical_value(value);
        for (const auto& v: values)
            if (canonical_value(v) == canon)
                return true;
        return false;
    }
    if (value.is_number())
    {
        const auto x = value.get<double>();
        if (min && x < *min)
            return false;
        if (max && x > *max)
            return false;
    }
    return true;
}

Json ValueConstraint::to_json() const
{
    Json out = Json::object();
    if (min)
        out["min"] = *min;
    if (max)
        out["max"] = *max;
    if (!values.empty())
        out["values"] = values;
    return out;
}

ValueConstraint ValueConstraint::from_json(const Json& json)
{
    if (!json.is_object())
        throw SchemaError("constraint must be an object");
    ValueConstraint c;
    if (auto it = json.find("min"); it != json.end())
    {
        if (!it->is_number())
            throw SchemaError("constraint.min must be a number");
        c.min = it->get<double>();
    }
    if (auto it = json.find("max"); it != json.end())
    {
        if (!it->is_number())
            throw SchemaError("constraint.max must be a number");
        c.max = it->get<double>();
    }
    if (auto it = json.find("values"); it != json.end())
    {
        if (!it->is_array())
            throw SchemaError("constraint.values must be an array");
        for (const auto& v: *it)
            c.values.push_back(v);
    }
    if (c.min && c.max && *c.min > *c.max)
        throw SchemaError("constraint.min exceeds constraint.max");
    return c;
}

const ParamSpec* ToolSpec::find_param(std::string_view name) const
{
    for (const auto& p: params)
        if (p.name == name)
            return &p;
    return nullptr;
}

const ReturnField* ToolSpec::find_return(std::string_view name) const
{
    for (const auto& r: returns)
        if (r.name == name)
            return &r;
    return nullptr;
}

bool value_matches(const Json& value, ParamKind kind, const ValueConstraint* constraint)
{
    bool shape = false;
    switch (kind)
    {
        case ParamKind::String: shape = value.is_string(); break;
        case ParamKind::Integer: shape = value.is_number_integer(); break;
        case ParamKind::Float: shape = value.is_number(); break;
        case ParamKind::Boolean: shape = value.is_boolean(); break;
        case ParamKind::Enum: shape = value.is_primitive() && !value.is_null(); break;
        case ParamKind::Object: shape = value.is_object(); break;
    }
    if (!shape)
        return false;
    return constraint == nullptr || constraint->admits(value);
}

ToolSpec parse_tool_schema(const Json& json)
{
    if (!json.is_object())
        throw SchemaError("schema line must be a JSON object");

    ToolSpec tool;
    tool.id = require_string(json, "id", "tool");
    if (tool.id.empty())
        throw SchemaError("tool: empty id");
    const std::string where = "tool '" + tool.id + "'";

    if (auto it = json.find("description"); it != json.end())
    {
        if (!it->is_string())
            throw SchemaError(where + ": description must be a string");
        tool.description = it->get<std::string>();
    }

    if (auto it = json.find("params"); it != json.end())
    {
        if (!it->is_array())
            throw SchemaError(where + ": params must be an array");
        std::set<std::string> seen;
        for (const auto& p: *it)
        {
            if (!p.is_object())
                throw SchemaError(where + ": each param must be an object");
            ParamSpec param;
            param.name = require_string(p, "name", where + " param");
            if (param.name.empty())
                throw SchemaError(where + ": param with empty name");
            const std::string pwhere = where + " param '" + param.name + "'";
            if (!seen.insert(param.name).second)
                throw SchemaError(pwhere + ": duplicate param name");
            param.kind = require_kind(p, pwhere);
            if (auto r = p.find("required"); r != p.end())
            {
                if (!r->is_boolean())
                    throw SchemaError(pwhere + ": required must be a boolean");
                param.required = r->get<bool>();
            }
            if (auto c = p.find("constraint"); c != p.end() && !c->is_null())
            {
                try
                {
                    param.constraint = ValueConstraint::from_json(*c);
                }
                catch (const SchemaError& e)
                {
                    throw SchemaError(pwhere + ": " + e.what());
                }
            }
            if (auto d = p.find("description"); d != p.end() && d->is_string())
                param.description = d->get<std::string>();
            if (param.kind == ParamKind::Enum && !(param.constraint && param.constraint->is_enumerated()))
                throw SchemaError(pwhere + ": enum kind requires a non-empty constraint.values set");
            tool.params.push_back(std::move(param));
        }
    }

    if (auto it = json.find("returns"); it != json.end())
    {
        if (!it->is_array())
            throw SchemaError(where + ": returns must be an array");
        std::set<std::string> seen;
        for (const auto& r: *it)
        {
            if (!r.is_object())
                throw SchemaError(where + ": each returns field must be an object");
            ReturnField field;
            field.name = require_string(r, "name", where + " returns");
            if (field.name.empty() || !seen.insert(field.name).second)
                throw SchemaError(where + ": returns field names must be non-empty and unique");
            field.kind = require_kind(r, where + " returns '" + field.name + "'");
            tool.returns.push_back(std::move(field));
        }
    }

    if (auto it = json.find("domain_tag"); it != json.end() && !it->is_null())
    {
        if (!it->is_string() || it->get<std::string>().empty())
            throw SchemaError(where + ": domain_tag must be a non-empty string");
        tool.domain_tag = it->get<std::string>();
    }

    if (auto it = json.find("is_failure"); it != json.end())
    {
        if (!it->is_boolean())
            throw SchemaError(where + ": is_failure must be a boolean");
        tool.is_failure = it->get<bool>();
    }

    for (const auto& [key, value]: json.items())
        if (!kKnownToolFields.contains(key))
            tool.metadata[key] = value;

    return tool;
}

Json tool_to_json(const ToolSpec& tool)
{
    Json params = Json::array();
    for (const auto& p: tool.params)
    {
        Json j = {{"name", p.name}, {"kind", to_string(p.kind)}, {"required", p.required}};
        if (p.constraint)
            j["constraint"] = p.constraint->to_json();
        if (!p.description.empty())
            j["description"] = p.description;
        params.push_back(std::move(j));
    }
    Json returns = Json::array();
    for (const auto& r: tool.returns)
        returns.push_back({{"name", r.name}, {"kind", to_string(r.kind)}});

    Json out = tool.metadata.is_object() ? tool.metadata : Json::object();
    out["id"] = tool.id;
    out["description"] = tool.description;
    out["params"] = std::move(params);
    out["returns"] = std::move(returns);
    out["domain_tag"] = tool.domain_tag;
    out["is_failure"] = tool.is_failure;
    return out;
}

bool ToolRegistry::add(ToolSpec tool)
{
    auto id = tool.id;
    return _tools.emplace(std::move(id), std::move(tool)).second;
}

const ToolSpec* ToolRegistry::find(std::string_view id) const
{
    auto it = _tools.find(id);
    return it == _tools.end() ? nullptr : &it->second;
}

std::vector<std::string> ToolRegistry::ids() const
{
    std::vector<std::string> out;
    out.reserve(_tools.size());
    for (const auto& [id, _]: _tools)
        out.push_back(id);
    return out;
}

std::optional<ToolSpec> lookup(const ToolRegistry& registry, std::string_view id)
{
    if (const auto* tool = registry.find(id))
        return *tool;
    return std::nullopt;
}

IngestResult ingest_schemas(std::istream& in)
{
    IngestResult result;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line))
    {
        ++number;
        if (trim(line).empty())
            continue;
        try
        {
            auto tool = parse_tool_schema(Json::parse(line));
            const auto id = tool.id;
            if (!result.registry.add(std::move(tool)))
                result.rejects.push_back({number, "duplicate id '" + id + "'"});
        }
        catch (const Json::parse_error& e)
        {
            result.rejects.push_back({number, std::string("invalid JSON: ") + e.what()});
        }
        catch (const SchemaError& e)
        {
            result.rejects.push_back({number, e.what()});
        }
    }
    return result;
}

IngestResult ingest_schemas(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot read tool schema file: " + path.string());
    return ingest_schemas(in);
}

} // namespace hardgen
