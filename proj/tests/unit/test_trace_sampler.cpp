// SPDX-License-Identifier: Apache-2.0
#include "hardgen/trace_sampler.hpp"

#include "hardgen_test_support.hpp"

#include <gtest/gtest.h>

using namespace hardgen;

namespace
{

struct CaseWorld
{
    ToolRegistry registry;
    ApiGraph graph;
    std::unique_ptr<Environment> env;

    CaseWorld()
    {
        const auto dir = hgtest::data_dir() / "case_study";
        registry = ingest_schemas(dir / "tools.jsonl").registry;
        graph = load_graph(dir / "graph.json", registry);
        env = std::make_unique<Environment>(registry, FixtureTable::load(dir / "fixtures.jsonl"));
    }
};

std::vector<std::string> tool_ids(const HardTrace& trace)
{
    std::vector<std::string> out;
    for (const auto& s: trace.steps)
        out.push_back(s.call.tool_id);
    return out;
}

} // namespace

TEST(SampleNext, LegalUncalledTargetIsChosen)
{
    hgtest::EdgeList el {{"A", "T"}, {}};
    Rng rng(1);
    EXPECT_EQ(sample_next(hgtest::to_graph(el), "T", {"A"}, rng), "T");
}

TEST(SampleNext, CalledTargetDrawsUniformlyFromTheLegalSet)
{
    // P and Q require each other, so P, Q and T stay illegal.
    hgtest::EdgeList el {{"P", "Q", "T", "X", "Y", "Z"}, {{0, 1}, {1, 0}, {0, 2}}};
    const auto g = hgtest::to_graph(el);
    ASSERT_EQ(legal_set(g, {"T"}), (std::set<std::string> {"X", "Y", "Z"}));
    Rng rng(2024);
    std::map<std::string, int> counts;
    const int draws = 10000;
    for (int i = 0; i < draws; ++i)
        ++counts[sample_next(g, "T", {"T"}, rng)];
    ASSERT_EQ(counts.size(), 3U);
    for (const auto& [tool, n]: counts)
        EXPECT_NEAR(static_cast<double>(n) / draws, 1.0 / 3.0, 0.02) << tool;
}

TEST(SampleNext, NearestLegalPrerequisite)
{
    hgtest::EdgeList el {{"A", "B", "T"}, {{0, 2}, {1, 0}}};
    Rng rng(3);
    EXPECT_EQ(sample_next(hgtest::to_graph(el), "T", {}, rng), "B");
}

TEST(SampleNext, LexicographicTieBreak)
{
    hgtest::EdgeList el {{"m", "b", "T"}, {{0, 2}, {1, 2}}};
    Rng rng(4);
    // Both are at distance 1; "b" sorts first.
    EXPECT_EQ(sample_next(hgtest::to_graph(el), "T", {}, rng), "b");
    EXPECT_EQ(sample_next(hgtest::to_graph(el), "T", {"b"}, rng), "m");
}

TEST(SampleNext, DeadEndAndUnreachable)
{
    Rng rng(5);
    hgtest::EdgeList cycle {{"P", "Q"}, {{0, 1}, {1, 0}}};
    try
    {
        (void)sample_next(hgtest::to_graph(cycle), "P", {}, rng);
        FAIL();
    }
    catch (const SamplingError& e)
    {
        EXPECT_NE(std::string(e.what()).find("dead end"), std::string::npos);
    }
    hgtest::EdgeList island {{"P", "Q", "T", "X"}, {{0, 1}, {1, 0}, {0, 2}}};
    try
    {
        (void)sample_next(hgtest::to_graph(island), "T", {}, rng);
        FAIL();
    }
    catch (const SamplingError& e)
    {
        EXPECT_NE(std::string(e.what()).find("target unreachable"), std::string::npos);
    }
}

TEST(SampleNext, MatchesOracleOnEverySmallDag)
{
    Rng rng(6);
    for (std::size_t n = 1; n <= 4; ++n)
    {
        const auto pairs = n * (n - 1) / 2;
        for (std::uint64_t mask = 0; mask < (1ULL << pairs); ++mask)
        {
            const auto el = hgtest::dag_from_mask(hgtest::shuffled_names(n, rng), mask);
            const auto g = hgtest::to_graph(el);
            for (const auto& target: el.names)
                for (std::uint64_t sub = 0; sub < (1ULL << n); ++sub)
                {
                    std::set<std::string> called;
                    for (std::size_t i = 0; i < n; ++i)
                        if ((sub >> i) & 1U)
                            called.insert(el.names[i]);
                    const auto want = hgtest::oracle_next(el, target, called);
                    std::string got;
                    std::string error;
                    try
                    {
                        got = sample_next(g, target, called, rng);
                    }
                    catch (const SamplingError& e)
                    {
                        error = e.what();
                    }
                    switch (want.kind)
                    {
                    case hgtest::NextExpectation::DeadEnd: ASSERT_EQ(error, "dead end"); break;
                    case hgtest::NextExpectation::Unreachable: ASSERT_EQ(error, "target unreachable"); break;
                    case hgtest::NextExpectation::AnyLegal: ASSERT_TRUE(want.legal.count(got)) << got; break;
                    case hgtest::NextExpectation::Exact: ASSERT_EQ(got, want.tool); break;
                    }
                }
        }
    }
}

TEST(ChooseArgs, ZipcodesFlowIntoBuyTickets)
{
    CaseWorld w;
    auto s = w.env->new_session(0);
    ASSERT_TRUE(w.env->execute(s, {"get_zipcode", {{"city", "Rivermist"}}}, w.graph).ok);
    ASSERT_TRUE(w.env->execute(s, {"get_zipcode", {{"city", "Stonebrook"}}}, w.graph).ok);
    Rng rng(0);
    const auto args = choose_args(w.graph, *w.registry.find("buy_tickets"), s, rng);
    EXPECT_EQ(args, Json::parse(R"({"cityA_zipcode":"83214","cityB_zipcode":"74532"})"));
}

TEST(ChooseArgs, SingleMemberEnumIsForced)
{
    ToolSpec tool;
    tool.id = "only";
    tool.params.push_back({"mode", ParamKind::Enum, true, ValueConstraint {std::nullopt, std::nullopt, {"solo"}}, ""});
    ToolRegistry registry;
    registry.add(tool);
    ApiGraph graph(registry);
    Environment env(registry);
    const auto s = env.new_session(0);
    for (std::uint64_t seed = 0; seed < 10; ++seed)
    {
        Rng rng(seed);
        EXPECT_EQ(choose_args(graph, tool, s, rng), Json::parse(R"({"mode":"solo"})"));
    }
}

TEST(ChooseArgs, EqualSeedsGiveEqualArgs)
{
    const auto registry = ingest_schemas(hgtest::data_dir() / "toy" / "tools.jsonl").registry;
    const auto graph = load_graph(hgtest::data_dir() / "toy" / "graph.json", registry);
    Environment env(registry);
    const auto s = env.new_session(1);
    for (const auto& [id, tool]: registry)
    {
        Rng a(77);
        Rng b(77);
        try
        {
            EXPECT_EQ(choose_args(graph, tool, s, a), choose_args(graph, tool, s, b)) << id;
        }
        catch (const Error&)
        {
            // Tools whose params only come through links cannot be planned in an empty session.
            Rng c(77);
            EXPECT_THROW((void)choose_args(graph, tool, s, c), Error);
        }
    }
}

TEST(ChooseArgs, UnfillableParamIsAnError)
{
    ToolSpec tool;
    tool.id = "needs";
    tool.params.push_back({"token", ParamKind::String, true, std::nullopt, ""});
    ToolRegistry registry;
    registry.add(tool);
    ApiGraph graph(registry);
    Environment env(registry);
    Rng rng(0);
    try
    {
        (void)choose_args(graph, tool, env.new_session(0), rng);
        FAIL();
    }
    catch (const Error& e)
    {
        EXPECT_NE(std::string(e.what()).find("unfillable param"), std::string::npos);
    }
}

TEST(SampleTrace, IsolatedTargetSingleStep)
{
    ToolSpec tool;
    tool.id = "solo";
    tool.is_failure = true;
    tool.params.push_back({"n", ParamKind::Integer, true, ValueConstraint {1.0, 5.0, {}}, ""});
    tool.returns.push_back({"r", ParamKind::String});
    ToolRegistry registry;
    registry.add(tool);
    const auto graph = graph_from_json(Json::parse(R"({"failure_set":[],"edges":[]})"), registry);
    Environment env(registry);
    const auto trace = sample_trace(graph, env, "solo", 1, 0);
    EXPECT_EQ(tool_ids(trace), std::vector<std::string> {"solo"});
}

TEST(SampleTrace, CaseStudyThreeCallTrace)
{
    CaseWorld w;
    const auto trace = sample_trace(w.graph, *w.env, "buy_tickets", 3, 0);
    EXPECT_EQ(tool_ids(trace), (std::vector<std::string> {"get_zipcode", "get_zipcode", "buy_tickets"}));
    std::set<std::string> cities;
    for (std::size_t i = 0; i < 2; ++i)
        cities.insert(trace.steps[i].call.args.at("city").get<std::string>());
    EXPECT_EQ(cities, (std::set<std::string> {"Rivermist", "Stonebrook"}));
    const auto& buy = trace.steps[2].call.args;
    EXPECT_EQ(buy.at("cityA_zipcode"), trace.steps[0].feedback.payload.at("zipcode"));
    EXPECT_EQ(buy.at("cityB_zipcode"), trace.steps[1].feedback.payload.at("zipcode"));
    EXPECT_TRUE(replay_trace(trace, w.graph, *w.env));
}

TEST(SampleTrace, TargetOutsideFailureSetIsRejected)
{
    CaseWorld w;
    EXPECT_THROW((void)sample_trace(w.graph, *w.env, "get_weather", 1, 0), SamplingError);
    SamplerOptions any;
    any.allow_any_target = true;
    EXPECT_EQ(sample_trace(w.graph, *w.env, "get_weather", 1, 0, any).m(), 1U);
}

TEST(SampleTrace, RandomDagTracesArePrefixLegalAndReproducible)
{
    Rng rng(8);
    std::size_t produced = 0;
    for (int round = 0; round < 150; ++round)
    {
        const auto el = hgtest::random_dag(rng, 2 + rng.uniform_index(19), 0.2);
        auto registry = hgtest::random_registry(el, rng);
        auto graph = hgtest::to_graph(el);
        const auto target = el.names[rng.uniform_index(el.names.size())];
        add_failure_tools(graph, {target});
        Environment env(*registry);
        const auto m = 1 + rng.uniform_index(8);
        const auto seed = rng.next();
        HardTrace trace;
        try
        {
            trace = sample_trace(graph, env, target, m, seed);
        }
        catch (const SamplingError&)
        {
            continue;
        }
        ++produced;
        ASSERT_GE(trace.m(), m);
        ASSERT_LE(trace.m(), 8U);
        for (const auto& step: trace.steps)
            ASSERT_TRUE(step.feedback.ok);
        const auto problem = hgtest::oracle_trace_problem(el, tool_ids(trace), target);
        ASSERT_FALSE(problem.has_value()) << *problem;
        ASSERT_TRUE(replay_trace(trace, graph, env));
        const auto again = sample_trace(graph, env, target, m, seed);
        ASSERT_EQ(trace_to_json(again), trace_to_json(trace));
    }
    EXPECT_GT(produced, 100U);
}

TEST(SampleTrace, JsonRoundTrip)
{
    CaseWorld w;
    const auto trace = sample_trace(w.graph, *w.env, "buy_tickets", 3, 0);
    const auto json = trace_to_json(trace);
    EXPECT_EQ(trace_to_json(trace_from_json(json)), json);
    for (const auto& step: json.at("steps"))
    {
        EXPECT_TRUE(step.contains("tool_id"));
        EXPECT_TRUE(step.contains("args"));
        EXPECT_TRUE(step.contains("ok"));
        EXPECT_TRUE(step.contains("payload"));
    }
}

TEST(SampleTrace, FeedbackVariantUpdatesTheGraph)
{
    CaseWorld w;
    auto graph = w.graph;
    (void)sample_trace(graph, *w.env, "buy_tickets", 3, 0);
    EXPECT_EQ(graph.confirmed_count("get_zipcode", "buy_tickets"), 1U);
}
