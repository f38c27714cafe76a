// SPDX-License-Identifier: Apache-2.0
#include "hardgen/sim_env.hpp"

#include "hardgen/api_graph.hpp"

namespace hardgen
{

namespace
{

std::string fixture_key(const Call& call)
{
    return call.tool_id + '\n' + canonical_args(call.args);
}

std::string hex_token(Rng& rng, int digits)
{
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (int i = 0; i < digits; ++i)
        out.push_back(hex[rng.uniform_index(16)]);
    return out;
}

Json generate_value(const ReturnField& field, Rng& rng)
{
    switch (field.kind)
    {
        case ParamKind::String:
        case ParamKind::Enum: return field.name + "_" + hex_token(rng, 6);
        case ParamKind::Integer: return rng.uniform_int(0, 99999);
        case ParamKind::Float: return static_cast<double>(rng.uniform_int(0, 99999)) / 100.0 + 0.01;
        case ParamKind::Boolean: return rng.bernoulli(0.5);
        case ParamKind::Object: return Json {{"id", hex_token(rng, 8)}, {"value", rng.uniform_int(0, 999)}};
    }
    return nullptr;
}

} // namespace

Call Call::from_json(const Json& json)
{
    Call call;
    call.tool_id = json.at("tool_id").get<std::string>();
    if (auto it = json.find("args"); it != json.end() && !it->is_null())
    {
        if (!it->is_object())
            throw Error("call args must be an object");
        call.args = *it;
    }
    return call;
}

bool operator==(const Call& a, const Call& b)
{
    return a.tool_id == b.tool_id && canonical_args(a.args) == canonical_args(b.args);
}

std::string canonical_args(const Json& args)
{
    return args.is_null() ? std::string("{}") : canonical_value(args);
}

Feedback Feedback::success(Json payload)
{
    return Feedback {true, std::move(payload), {}};
}

Feedback Feedback::failure(std::string error)
{
    return Feedback {false, nullptr, std::move(error)};
}

Json Feedback::to_json() const
{
    if (ok)
        return {{"ok", true}, {"payload", payload}};
    return {{"ok", false}, {"error", error}};
}

Feedback Feedback::from_json(const Json& json)
{
    if (json.at("ok").get<bool>())
        return success(json.at("payload"));
    return failure(json.value("error", std::string("error")));
}

bool operator==(const Feedback& a, const Feedback& b)
{
    if (a.ok != b.ok)
        return false;
    return a.ok ? canonical_value(a.payload) == canonical_value(b.payload) : a.error == b.error;
}

EnvSession new_session(const ToolRegistry&, std::uint64_t seed)
{
    EnvSession session;
    session.seed = seed;
    return session;
}

void FixtureTable::pin(const Call& call, Json payload)
{
    _pins[fixture_key(call)] = std::move(payload);
}

const Json* FixtureTable::find(const Call& call) const
{
    auto it = _pins.find(fixture_key(call));
    return it == _pins.end() ? nullptr : &it->second;
}

FixtureTable FixtureTable::load(const std::filesystem::path& path)
{
    FixtureTable table;
    for (const auto& row: read_jsonl(path))
    {
        if (!row.contains("tool_id") || !row.contains("payload") || !row.at("payload").is_object())
            throw IoError(path.string() + ": fixture rows need tool_id and an object payload");
        table.pin(Call::from_json(row), row.at("payload"));
    }
    return table;
}

Environment::Environment(const ToolRegistry& registry, FixtureTable fixtures):
    _registry(&registry), _fixtures(std::move(fixtures))
{
}

EnvSession Environment::new_session(std::uint64_t seed) const
{
    return hardgen::new_session(*_registry, seed);
}

Json Environment::payload_for(std::uint64_t seed, const Call& call) const
{
    const auto* tool = _registry->find(call.tool_id);
    if (tool == nullptr)
        throw Error("unknown tool: " + call.tool_id);

    const Json* pinned = _fixtures.find(call);
    Rng rng(mix_seed(seed, call.tool_id + '\n' + canonical_args(call.args)));
    Json payload = Json::object();
    for (const auto& field: tool->returns)
    {
        // Always draw so that pinning one field never shifts the others.
        auto generated = generate_value(field, rng);
        if (pinned != nullptr && pinned->contains(field.name))
            payload[field.name] = pinned->at(field.name);
        else
            payload[field.name] = std::move(generated);
    }
    return payload;
}

Feedback Environment::execute(EnvSession& session, const Call& call, const ApiGraph& graph) const
{
    auto reject = [&](std::string message) {
        auto feedback = Feedback::failure(std::move(message));
        session.history.push_back({call, feedback});
        return feedback;
    };

    const auto* tool = _registry->find(call.tool_id);
    if (tool == nullptr || !graph.has_tool(call.tool_id))
        return reject("unknown tool: " + call.tool_id);

    if (!call.args.is_object())
        return reject("arguments must be an object");

    for (const auto& [key, _]: call.args.items())
        if (tool->find_param(key) == nullptr)
            return reject("unknown parameter '" + key + "' for tool " + tool->id);

    for (const auto& prerequisite: graph.prerequisites(tool->id))
        if (!session.called.contains(prerequisite))
            return reject("dependency unmet: " + tool->id + " requires prerequisite " + prerequisite);

    for (const auto& param: tool->params)
    {
        auto it = call.args.find(param.name);
        if (it == call.args.end())
        {
            if (param.required)
                return reject("missing required parameter '" + param.name + "'");
            continue;
        }
        const auto* constraint = param.constraint ? &*param.constraint : nullptr;
        if (!value_matches(*it, param.kind, constraint))
            return reject("invalid value for parameter '" + param.name + "': expected "
                          + std::string(to_string(param.kind))
                          + (constraint != nullptr ? " within constraint" : ""));
    }

    auto payload = payload_for(session.seed, call);
    for (const auto& [field, value]: payload.items())
        session.state[tool->id + "." + field] = value;
    session.called.insert(tool->id);
    auto feedback = Feedback::success(std::move(payload));
    session.history.push_back({call, feedback});
    return feedback;
}

} // namespace hardgen
