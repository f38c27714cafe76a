// SPDX-License-Identifier: Apache-2.0
#include "hardgen/api_graph.hpp"

#include "hardgen_test_support.hpp"

#include <gtest/gtest.h>

#include <thread>

using namespace hardgen;

namespace
{

ApiGraph chain_abc()
{
    ApiGraph g(std::set<std::string> {"A", "B", "C"});
    g.add_edge("A", "B");
    g.add_edge("B", "C");
    return g;
}

std::set<std::string> subset(const std::vector<std::string>& names, std::uint64_t mask)
{
    std::set<std::string> out;
    for (std::size_t i = 0; i < names.size(); ++i)
        if ((mask >> i) & 1U)
            out.insert(names[i]);
    return out;
}

} // namespace

TEST(ApiGraph, NoIncomingEdgesIsAlwaysLegal)
{
    ApiGraph g(std::set<std::string> {"A"});
    EXPECT_TRUE(legality(g, "A", {}));
}

TEST(ApiGraph, TwoPrerequisitesOverAllSubsets)
{
    hgtest::EdgeList el {{"A", "B", "C"}, {{0, 2}, {1, 2}}};
    const auto g = hgtest::to_graph(el);
    for (std::uint64_t mask = 0; mask < 4; ++mask)
    {
        const auto called = subset({"A", "B"}, mask);
        EXPECT_EQ(legality(g, "C", called), hgtest::oracle_legal(el, "C", called)) << mask;
    }
    EXPECT_FALSE(legality(g, "C", {"A"}));
    EXPECT_TRUE(legality(g, "C", {"A", "B"}));
}

TEST(ApiGraph, CaseStudyDependency)
{
    const auto dir = hgtest::data_dir() / "case_study";
    const auto registry = ingest_schemas(dir / "tools.jsonl").registry;
    const auto g = load_graph(dir / "graph.json", registry);
    EXPECT_TRUE(legality(g, "buy_tickets", {"get_zipcode"}));
    EXPECT_FALSE(legality(g, "buy_tickets", {}));
}

TEST(ApiGraph, UnregisteredToolIsAnError)
{
    EXPECT_THROW((void)legality(chain_abc(), "Z", {}), Error);
}

TEST(ApiGraph, LegalSetExamples)
{
    ApiGraph empty(std::set<std::string> {"x", "y", "z"});
    EXPECT_EQ(legal_set(empty, {}), (std::set<std::string> {"x", "y", "z"}));
    EXPECT_EQ(legal_set(chain_abc(), {}), (std::set<std::string> {"A"}));
    EXPECT_EQ(legal_set(chain_abc(), {"A", "B"}), (std::set<std::string> {"A", "B", "C"}));
}

TEST(ApiGraph, DistanceExamples)
{
    const auto g = chain_abc();
    EXPECT_EQ(distance(g, "A", "A"), 0U);
    EXPECT_EQ(distance(g, "A", "C"), 2U);
    EXPECT_FALSE(distance(g, "C", "A").has_value());
}

TEST(ApiGraph, LegalityMatchesBruteForceAndLegalSetIsMonotone)
{
    Rng rng(101);
    for (int round = 0; round < 200; ++round)
    {
        const auto el = hgtest::random_digraph(rng, 1 + rng.uniform_index(10), 0.25);
        const auto g = hgtest::to_graph(el);
        std::set<std::string> called;
        auto previous = legal_set(g, called);
        for (const auto& name: el.names)
        {
            for (const auto& tool: el.names)
                ASSERT_EQ(legality(g, tool, called), hgtest::oracle_legal(el, tool, called));
            called.insert(name);
            auto grown = legal_set(g, called);
            for (const auto& t: previous)
                ASSERT_TRUE(grown.count(t)) << "legal set shrank";
            previous = std::move(grown);
        }
    }
}

TEST(ApiGraph, DistanceMatchesIndependentBfsUpTo50Nodes)
{
    Rng rng(202);
    for (int round = 0; round < 60; ++round)
    {
        const auto n = 1 + rng.uniform_index(50);
        const auto el = hgtest::random_digraph(rng, n, 2.0 / static_cast<double>(n));
        const auto g = hgtest::to_graph(el);
        for (const auto& a: el.names)
            for (const auto& b: el.names)
                ASSERT_EQ(distance(g, a, b), hgtest::oracle_bfs(el, a, b)) << a << "->" << b;
    }
}

TEST(ApiGraph, UpdateFromFeedbackRefinesTheZipcodeLink)
{
    const auto dir = hgtest::data_dir() / "case_study";
    const auto registry = ingest_schemas(dir / "tools.jsonl").registry;
    auto g = load_graph(dir / "graph.json", registry);
    Environment env(registry, FixtureTable::load(dir / "fixtures.jsonl"));
    auto s = env.new_session(0);
    const Call call {"get_zipcode", {{"city", "Rivermist"}}};
    const auto fb = env.execute(s, call, g);
    ASSERT_TRUE(fb.ok);
    const auto change = update_from_feedback(g, call, fb, s);
    EXPECT_EQ(change.edges_added, 1U);
    EXPECT_GE(change.links_refined, 1U);
    EXPECT_EQ(g.confirmed_count("get_zipcode", "buy_tickets"), 1U);
    bool found = false;
    for (const auto& link: g.links())
    {
        if (link.producer == "get_zipcode" && link.consumer == "buy_tickets" && link.input_param == "cityA_zipcode")
        {
            found = true;
            ASSERT_TRUE(link.observed_range.has_value());
            EXPECT_TRUE(link.observed_range->contains(Json("83214")));
        }
    }
    EXPECT_TRUE(found);
}

TEST(ApiGraph, ErrorFeedbackAndLeafToolsChangeNothing)
{
    const auto dir = hgtest::data_dir() / "case_study";
    const auto registry = ingest_schemas(dir / "tools.jsonl").registry;
    auto g = load_graph(dir / "graph.json", registry);
    Environment env(registry);
    auto s = env.new_session(0);
    const Call bad {"buy_tickets", {{"cityA_zipcode", "1"}, {"cityB_zipcode", "2"}}};
    const auto err = env.execute(s, bad, g);
    ASSERT_FALSE(err.ok);
    EXPECT_TRUE(update_from_feedback(g, bad, err, s).empty());

    const Call leaf {"get_weather", {{"city", "Stonebrook"}}};
    const auto ok = env.execute(s, leaf, g);
    ASSERT_TRUE(ok.ok);
    EXPECT_TRUE(update_from_feedback(g, leaf, ok, s).empty());
}

TEST(ApiGraph, MismatchedCallAndFeedbackIsRejected)
{
    const auto dir = hgtest::data_dir() / "case_study";
    const auto registry = ingest_schemas(dir / "tools.jsonl").registry;
    auto g = load_graph(dir / "graph.json", registry);
    Environment env(registry);
    auto s = env.new_session(0);
    const Call call {"get_weather", {{"city", "Stonebrook"}}};
    const auto fb = env.execute(s, call, g);
    EXPECT_THROW(update_from_feedback(g, {"get_zipcode", {{"city", "Rivermist"}}}, fb, s), Error);
}

TEST(ApiGraph, UpdatesNeverRemoveEdgesOrShrinkRanges)
{
    Rng rng(303);
    for (int round = 0; round < 40; ++round)
    {
        auto el = hgtest::random_dag(rng, 2 + rng.uniform_index(8), 0.4);
        auto registry = hgtest::random_registry(el, rng);
        auto g = hgtest::to_graph(el);
        // Give every consumer a link from each prerequisite so ranges have somewhere to grow.
        for (const auto& [a, b]: el.edges)
            g.add_link({el.names[a], "out_" + el.names[a], el.names[b], "seq", ParamKind::String, std::nullopt});
        Environment env(*registry);
        auto s = env.new_session(round);
        for (int step = 0; step < 15; ++step)
        {
            const auto before_edges = g.edges();
            const auto before_links = g.links();
            const Call call {el.names[rng.uniform_index(el.names.size())], {{"seq", rng.uniform_int(0, 9)}}};
            Json args = call.args;
            if (registry->find(call.tool_id)->find_param("mode"))
                args["mode"] = "a";
            const Call full {call.tool_id, args};
            const auto fb = env.execute(s, full, g);
            update_from_feedback(g, full, fb, s);
            ASSERT_GE(g.edge_count(), before_edges.size());
            for (const auto& e: before_edges)
                ASSERT_GE(g.confirmed_count(e.from, e.to), e.confirmed_count);
            ASSERT_EQ(g.links().size(), before_links.size());
            for (std::size_t i = 0; i < before_links.size(); ++i)
            {
                if (!before_links[i].observed_range)
                    continue;
                ASSERT_TRUE(g.links()[i].observed_range.has_value());
                for (const auto& v: before_links[i].observed_range->values)
                    ASSERT_TRUE(g.links()[i].observed_range->values.count(v));
            }
        }
    }
}

TEST(ApiGraph, AddFailureToolsIsIdempotent)
{
    auto g = chain_abc();
    const auto before = graph_to_json(g);
    add_failure_tools(g, {});
    EXPECT_EQ(graph_to_json(g), before);
    add_failure_tools(g, {"A", "C"});
    const auto once = graph_to_json(g);
    add_failure_tools(g, {"A", "C"});
    EXPECT_EQ(graph_to_json(g), once);
    EXPECT_THROW(add_failure_tools(g, {"Z"}), Error);
}

TEST(ApiGraph, FailureSetAtRegistryScale)
{
    std::set<std::string> tools;
    for (int i = 0; i < 2095; ++i)
        tools.insert("tool_" + std::to_string(i));
    ApiGraph g(tools);
    std::set<std::string> ids;
    for (int i = 0; i < 1204; ++i)
        ids.insert("tool_" + std::to_string(i * 1741 % 2095));
    ASSERT_EQ(ids.size(), 1204U);
    add_failure_tools(g, ids);
    EXPECT_EQ(g.failure_set().size(), 1204U);
}

TEST(ApiGraph, DumpLoadRoundTrip)
{
    const auto dir = hgtest::data_dir() / "toy";
    const auto registry = ingest_schemas(dir / "tools.jsonl").registry;
    const auto g = load_graph(dir / "graph.json", registry);
    const auto dumped = graph_to_json(g);
    EXPECT_EQ(graph_to_json(graph_from_json(dumped, registry)), dumped);
    EXPECT_TRUE(dumped.contains("failure_set"));
    EXPECT_TRUE(dumped.contains("edges"));
    EXPECT_TRUE(dumped.contains("links"));
}

TEST(ApiGraph, GraphOwnerSerializesConcurrentUpdates)
{
    const auto dir = hgtest::data_dir() / "case_study";
    const auto registry = ingest_schemas(dir / "tools.jsonl").registry;
    GraphOwner owner(load_graph(dir / "graph.json", registry));
    Environment env(registry, FixtureTable::load(dir / "fixtures.jsonl"));
    std::vector<std::thread> workers;
    for (int t = 0; t < 4; ++t)
        workers.emplace_back([&] {
            for (int i = 0; i < 50; ++i)
            {
                auto s = env.new_session(static_cast<std::uint64_t>(i));
                const auto snap = owner.snapshot();
                const Call call {"get_zipcode", {{"city", "Stonebrook"}}};
                const auto fb = env.execute(s, call, snap);
                owner.update(call, fb, s);
            }
        });
    for (auto& w: workers)
        w.join();
    EXPECT_EQ(owner.snapshot().confirmed_count("get_zipcode", "buy_tickets"), 200U);
}
