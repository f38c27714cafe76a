// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hardgen/common.hpp"
#include "hardgen/sim_env.hpp"
#include "hardgen/tool_universe.hpp"

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace hardgen
{

/// Prerequisite edge: `to` requires `from` to have executed.
struct DependencyEdge
{
    std::string from;
    std::string to;
    std::size_t confirmed_count = 0;
};

/// Observed values of a linked parameter. Numbers widen [min, max]; every
/// other kind accumulates its canonical values.
struct ValueRange
{
    std::optional<double> min;
    std::optional<double> max;
    std::set<std::string> values;

    [[nodiscard]] bool empty() const { return !min && values.empty(); }
    [[nodiscard]] bool contains(const Json& value) const;
    /// Returns true when the range grew.
    bool extend(const Json& value);

    [[nodiscard]] Json to_json() const;
    static ValueRange from_json(const Json& json);
};

/// Output field of `producer` feeding input parameter of `consumer`.
struct ParamLink
{
    std::string producer;
    std::string output_field;
    std::string consumer;
    std::string input_param;
    ParamKind kind = ParamKind::String;
    std::optional<ValueRange> observed_range;
};

struct ChangeSummary
{
    std::size_t edges_added = 0;    // edges confirmed for the first time
    std::size_t edges_confirmed = 0; // confirmations recorded, including repeats
    std::size_t links_refined = 0;

    [[nodiscard]] bool empty() const { return edges_confirmed == 0 && links_refined == 0; }
};

/// G = (failure set, dependency edges, parameter links) over a tool universe.
///
/// Edges form a declared base set; feedback only adds confirmations, so
/// legality stays stable while a trace is being built.
class ApiGraph
{
  public:
    ApiGraph() = default;
    explicit ApiGraph(const ToolRegistry& registry);
    explicit ApiGraph(std::set<std::string> tools);

    void add_edge(const std::string& from, const std::string& to);
    void add_link(ParamLink link);

    [[nodiscard]] bool has_tool(std::string_view id) const { return _tools.contains(std::string(id)); }
    [[nodiscard]] const std::set<std::string>& tools() const { return _tools; }
    [[nodiscard]] const std::set<std::string>& failure_set() const { return _failure_set; }
    [[nodiscard]] std::vector<DependencyEdge> edges() const;
    [[nodiscard]] const std::vector<ParamLink>& links() const { return _links; }
    [[nodiscard]] std::vector<ParamLink>& links() { return _links; }
    [[nodiscard]] std::size_t edge_count() const { return _edges.size(); }

    /// D_tool: tools with an edge into `tool`. Unknown tools yield an empty set.
    [[nodiscard]] const std::set<std::string>& prerequisites(const std::string& tool) const;
    [[nodiscard]] const std::set<std::string>& dependents(const std::string& tool) const;
    [[nodiscard]] std::size_t confirmed_count(const std::string& from, const std::string& to) const;

    /// Hop distances from every tool that can reach `target`, following edge direction.
    [[nodiscard]] std::map<std::string, std::size_t> distances_to(const std::string& target) const;

    /// Number of distinct transitive prerequisites of `tool`.
    [[nodiscard]] std::size_t ancestor_count(const std::string& tool) const;

  private:
    friend ChangeSummary update_from_feedback(ApiGraph&, const Call&, const Feedback&, const EnvSession&);
    friend void add_failure_tools(ApiGraph&, const std::set<std::string>&);
    friend ApiGraph graph_from_json(const Json&, const ToolRegistry&);

    std::set<std::string> _tools;
    std::set<std::string> _failure_set;
    std::map<std::pair<std::string, std::string>, std::size_t> _edges;
    std::map<std::string, std::set<std::string>> _prerequisites;
    std::map<std::string, std::set<std::string>> _dependents;
    std::vector<ParamLink> _links;
};

/// I(tool, called) = 1 iff every prerequisite of tool is in called.
/// Throws for tools outside the graph.
bool legality(const ApiGraph& graph, const std::string& tool, const std::set<std::string>& called);

std::set<std::string> legal_set(const ApiGraph& graph, const std::set<std::string>& called);

/// Shortest directed hop count; nullopt when unreachable, 0 for from == to.
std::optional<std::size_t> distance(const ApiGraph& graph, const std::string& from, const std::string& to);

/// Confirms edges toward tools activated by this call and widens the observed
/// ranges of links fed by its payload. `call`/`feedback` must be the newest
/// entry of `session.history`.
ChangeSummary update_from_feedback(ApiGraph& graph, const Call& call, const Feedback& feedback,
                                   const EnvSession& session);

/// Grows the failure set; idempotent. Throws for ids outside the graph.
void add_failure_tools(ApiGraph& graph, const std::set<std::string>& ids);

/// Adds a link for every declared edge whose producer returns a field that
/// names a consumer parameter of the same kind ("zipcode" feeds "zipcode",
/// "cityA_zipcode", "zipcode_from", ...). Returns the number of links added.
std::size_t derive_param_links(ApiGraph& graph, const ToolRegistry& registry);

/// Graph dump: {failure_set, edges:[{from,to,confirmed_count}], links:[...]}.
Json graph_to_json(const ApiGraph& graph);

/// Loads a dump over `registry`. Missing "links" are derived from the schemas.
/// Tools flagged is_failure in the registry join the failure set.
ApiGraph graph_from_json(const Json& json, const ToolRegistry& registry);
ApiGraph load_graph(const std::filesystem::path& path, const ToolRegistry& registry);

/// Single writer for a shared graph; readers take copies.
class GraphOwner
{
  public:
    explicit GraphOwner(ApiGraph graph): _graph(std::move(graph)) {}

    [[nodiscard]] ApiGraph snapshot() const;
    ChangeSummary update(const Call& call, const Feedback& feedback, const EnvSession& session);
    void add_failure_tools(const std::set<std::string>& ids);

  private:
    mutable std::mutex _mutex;
    ApiGraph _graph;
};

} // namespace hardgen
