// SPDX-License-Identifier: Apache-2.0
#include "hardgen/api_graph.hpp"

#include <deque>

namespace hardgen
{

namespace
{

const std::set<std::string> kNoTools;

bool field_feeds_param(std::string_view field, std::string_view param)
{
    if (field == param)
        return true;
    const std::string suffix = "_" + std::string(field);
    const std::string prefix = std::string(field) + "_";
    return (param.size() > suffix.size() && param.substr(param.size() - suffix.size()) == suffix)
           || (param.size() > prefix.size() && param.substr(0, prefix.size()) == prefix);
}

} // namespace

bool ValueRange::contains(const Json& value) const
{
    if (value.is_number() && !value.is_boolean())
    {
        const auto x = value.get<double>();
        return min && *min <= x && x <= *max;
    }
    return values.contains(canonical_value(value));
}

bool ValueRange::extend(const Json& value)
{
    if (value.is_number())
    {
        const auto x = value.get<double>();
        if (!min)
        {
            min = max = x;
            return true;
        }
        bool grew = false;
        if (x < *min)
            min = x, grew = true;
        if (x > *max)
            max = x, grew = true;
        return grew;
    }
    return values.insert(canonical_value(value)).second;
}

Json ValueRange::to_json() const
{
    Json out = Json::object();
    if (min)
    {
        out["min"] = *min;
        out["max"] = *max;
    }
    if (!values.empty())
    {
        Json list = Json::array();
        for (const auto& v: values)
            list.push_back(Json::parse(v));
        out["values"] = std::move(list);
    }
    return out;
}

ValueRange ValueRange::from_json(const Json& json)
{
    ValueRange range;
    if (json.contains("min") && json.contains("max"))
    {
        range.min = json.at("min").get<double>();
        range.max = json.at("max").get<double>();
    }
    if (auto it = json.find("values"); it != json.end())
        for (const auto& v: *it)
            range.values.insert(canonical_value(v));
    return range;
}

ApiGraph::ApiGraph(const ToolRegistry& registry)
{
    for (const auto& [id, tool]: registry)
    {
        _tools.insert(id);
        if (tool.is_failure)
            _failure_set.insert(id);
    }
}

ApiGraph::ApiGraph(std::set<std::string> tools): _tools(std::move(tools)) {}

void ApiGraph::add_edge(const std::string& from, const std::string& to)
{
    if (from == to)
        throw Error("self-dependency on " + from);
    if (!has_tool(from) || !has_tool(to))
        throw Error("edge endpoint not registered: " + from + " -> " + to);
    if (_edges.emplace(std::pair {from, to}, 0).second)
    {
        _prerequisites[to].insert(from);
        _dependents[from].insert(to);
    }
}

void ApiGraph::add_link(ParamLink link)
{
    if (!has_tool(link.producer) || !has_tool(link.consumer))
        throw Error("link endpoint not registered: " + link.producer + " -> " + link.consumer);
    for (const auto& existing: _links)
        if (existing.producer == link.producer && existing.output_field == link.output_field
            && existing.consumer == link.consumer && existing.input_param == link.input_param)
            return;
    _links.push_back(std::move(link));
}

std::vector<DependencyEdge> ApiGraph::edges() const
{
    std::vector<DependencyEdge> out;
    out.reserve(_edges.size());
    for (const auto& [key, count]: _edges)
        out.push_back({key.first, key.second, count});
    return out;
}

const std::set<std::string>& ApiGraph::prerequisites(const std::string& tool) const
{
    auto it = _prerequisites.find(tool);
    return it == _prerequisites.end() ? kNoTools : it->second;
}

const std::set<std::string>& ApiGraph::dependents(const std::string& tool) const
{
    auto it = _dependents.find(tool);
    return it == _dependents.end() ? kNoTools : it->second;
}

std::size_t ApiGraph::confirmed_count(const std::string& from, const std::string& to) const
{
    auto it = _edges.find({from, to});
    return it == _edges.end() ? 0 : it->second;
}

std::map<std::string, std::size_t> ApiGraph::distances_to(const std::string& target) const
{
    std::map<std::string, std::size_t> dist;
    if (!has_tool(target))
        return dist;
    dist[target] = 0;
    std::deque<std::string> queue {target};
    while (!queue.empty())
    {
        auto node = std::move(queue.front());
        queue.pop_front();
        const auto d = dist[node];
        for (const auto& prerequisite: prerequisites(node))
            if (dist.emplace(prerequisite, d + 1).second)
                queue.push_back(prerequisite);
    }
    return dist;
}

std::size_t ApiGraph::ancestor_count(const std::string& tool) const
{
    return distances_to(tool).size() - (has_tool(tool) ? 1 : 0);
}

bool legality(const ApiGraph& graph, const std::string& tool, const std::set<std::string>& called)
{
    if (!graph.has_tool(tool))
        throw Error("legality query for unregistered tool: " + tool);
    for (const auto& prerequisite: graph.prerequisites(tool))
        if (!called.contains(prerequisite))
            return false;
    return true;
}

std::set<std::string> legal_set(const ApiGraph& graph, const std::set<std::string>& called)
{
    std::set<std::string> out;
    for (const auto& tool: graph.tools())
        if (legality(graph, tool, called))
            out.insert(out.end(), tool);
    return out;
}

std::optional<std::size_t> distance(const ApiGraph& graph, const std::string& from, const std::string& to)
{
    if (!graph.has_tool(from) || !graph.has_tool(to))
        throw Error("distance query for unregistered tool");
    if (from == to)
        return 0;
    std::map<std::string, std::size_t> dist {{from, 0}};
    std::deque<std::string> queue {from};
    while (!queue.empty())
    {
        auto node = std::move(queue.front());
        queue.pop_front();
        const auto d = dist[node];
        for (const auto& next: graph.dependents(node))
        {
            if (next == to)
                return d + 1;
            if (dist.emplace(next, d + 1).second)
                queue.push_back(next);
        }
    }
    return std::nullopt;
}

ChangeSummary update_from_feedback(ApiGraph& graph, const Call& call, const Feedback& feedback,
                                   const EnvSession& session)
{
    if (session.history.empty() || !(session.history.back().call == call)
        || !(session.history.back().feedback == feedback))
        throw Error("feedback does not belong to the newest call of the session");

    ChangeSummary summary;
    if (!feedback.ok)
        return summary;

    std::set<std::string> called_before;
    for (std::size_t i = 0; i + 1 < session.history.size(); ++i)
        if (session.history[i].feedback.ok)
            called_before.insert(session.history[i].call.tool_id);

    if (!called_before.contains(call.tool_id))
    {
        for (const auto& dependent: graph.dependents(call.tool_id))
        {
            if (!legality(graph, dependent, session.called) || legality(graph, dependent, called_before))
                continue;
            auto& count = graph._edges.at({call.tool_id, dependent});
            if (count == 0)
                ++summary.edges_added;
            ++count;
            ++summary.edges_confirmed;
        }
    }

    for (auto& link: graph._links)
    {
        if (link.producer != call.tool_id)
            continue;
        auto it = feedback.payload.find(link.output_field);
        if (it == feedback.payload.end() || !value_matches(*it, link.kind))
            continue;
        if (!link.observed_range)
            link.observed_range.emplace();
        if (link.observed_range->extend(*it))
            ++summary.links_refined;
    }
    return summary;
}

void add_failure_tools(ApiGraph& graph, const std::set<std::string>& ids)
{
    for (const auto& id: ids)
        if (!graph.has_tool(id))
            throw Error("cannot mark unregistered tool as failure: " + id);
    graph._failure_set.insert(ids.begin(), ids.end());
}

std::size_t derive_param_links(ApiGraph& graph, const ToolRegistry& registry)
{
    const auto before = graph.links().size();
    for (const auto& edge: graph.edges())
    {
        const auto* producer = registry.find(edge.from);
        const auto* consumer = registry.find(edge.to);
        if (producer == nullptr || consumer == nullptr)
            continue;
        for (const auto& param: consumer->params)
            for (const auto& field: producer->returns)
                if (field.kind == param.kind && field_feeds_param(field.name, param.name))
                    graph.add_link({edge.from, field.name, edge.to, param.name, param.kind, std::nullopt});
    }
    return graph.links().size() - before;
}

Json graph_to_json(const ApiGraph& graph)
{
    Json edges = Json::array();
    for (const auto& e: graph.edges())
        edges.push_back({{"from", e.from}, {"to", e.to}, {"confirmed_count", e.confirmed_count}});
    Json links = Json::array();
    for (const auto& l: graph.links())
        links.push_back({
            {"producer", l.producer},
            {"output_field", l.output_field},
            {"consumer", l.consumer},
            {"input_param", l.input_param},
            {"kind", to_string(l.kind)},
            {"observed_range", l.observed_range ? l.observed_range->to_json() : Json(nullptr)},
        });
    return {{"failure_set", graph.failure_set()}, {"edges", std::move(edges)}, {"links", std::move(links)}};
}

ApiGraph graph_from_json(const Json& json, const ToolRegistry& registry)
{
    ApiGraph graph(registry);
    std::vector<std::pair<std::pair<std::string, std::string>, std::size_t>> confirmations;
    for (const auto& e: json.value("edges", Json::array()))
    {
        auto from = e.at("from").get<std::string>();
        auto to = e.at("to").get<std::string>();
        graph.add_edge(from, to);
        confirmations.push_back({{from, to}, e.value("confirmed_count", std::size_t {0})});
    }

    std::set<std::string> failures;
    for (const auto& id: json.value("failure_set", Json::array()))
        failures.insert(id.get<std::string>());
    add_failure_tools(graph, failures);

    if (auto it = json.find("links"); it != json.end())
    {
        for (const auto& l: *it)
        {
            auto kind = parse_param_kind(l.at("kind").get<std::string>());
            if (!kind)
                throw Error("link with unknown kind");
            ParamLink link {l.at("producer"), l.at("output_field"), l.at("consumer"), l.at("input_param"), *kind,
                            std::nullopt};
            if (auto r = l.find("observed_range"); r != l.end() && !r->is_null())
                link.observed_range = ValueRange::from_json(*r);
            graph.add_link(std::move(link));
        }
    }
    else
    {
        derive_param_links(graph, registry);
    }

    for (const auto& [key, count]: confirmations)
        graph._edges[key] = count;
    return graph;
}

ApiGraph load_graph(const std::filesystem::path& path, const ToolRegistry& registry)
{
    Json json;
    try
    {
        json = Json::parse(read_text(path));
    }
    catch (const Json::parse_error& e)
    {
        throw IoError(path.string() + ": " + e.what());
    }
    return graph_from_json(json, registry);
}

ApiGraph GraphOwner::snapshot() const
{
    std::lock_guard lock(_mutex);
    return _graph;
}

ChangeSummary GraphOwner::update(const Call& call, const Feedback& feedback, const EnvSession& session)
{
    std::lock_guard lock(_mutex);
    return update_from_feedback(_graph, call, feedback, session);
}

void GraphOwner::add_failure_tools(const std::set<std::string>& ids)
{
    std::lock_guard lock(_mutex);
    hardgen::add_failure_tools(_graph, ids);
}

} // namespace hardgen
