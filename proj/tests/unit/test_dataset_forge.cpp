// SPDX-License-Identifier: Apache-2.0
#include "hardgen/dataset_forge.hpp"

#include "hardgen_refinery_support.hpp"

#include <gtest/gtest.h>

using namespace hardgen;

namespace
{

Trajectory shaped(std::size_t calls, std::size_t turns, std::string domain)
{
    Trajectory t;
    t.id = "tj-" + std::to_string(calls) + "-" + std::to_string(turns);
    t.n_calls = calls;
    t.n_turns = turns;
    t.domain_tag = std::move(domain);
    return t;
}

std::vector<Call> calls_from_json(const Json& json)
{
    std::vector<Call> calls;
    for (const auto& c: json)
        calls.push_back(Call::from_json(c));
    return calls;
}

/// Seed with 2 query segments over 6 calls: steps of 1, 2, 1 calls, then 2 single calls.
struct TwoTurnWorld
{
    hgtest::ChainWorld world {6, 3};
    std::unique_ptr<RefinementSession> session;
    VerifiedTrajectorySeed seed;

    TwoTurnWorld()
    {
        auto second = world.query;
        second.text = "Now finish the remaining part of the job.";
        std::vector<Segment> segments {{world.query, 0}, {second, 3}};
        session = std::make_unique<RefinementSession>(segments, world.trace, world.graph, *world.env, world.prompts,
                                                      RefinementOptions {}, std::vector<std::size_t> {1, 2, 1, 1, 1});
        const RefinementSession* h = session.get();
        auto r = hgtest::pattern_reasoner(&h, [](std::size_t, std::size_t) { return hgtest::Outcome::Correct; });
        auto v = hgtest::fixed_verifier();
        seed = *session->run(*r, *v);
    }
};

} // namespace

TEST(DatasetForge, StatsWorkedExamples)
{
    const auto s = stats({shaped(2, 1, "A"), shaped(4, 1, "A"), shaped(3, 1, "B")});
    EXPECT_DOUBLE_EQ(*s.avg_calls, 3.0);
    EXPECT_EQ(*s.min_calls, 2U);
    EXPECT_EQ(*s.max_calls, 4U);
    EXPECT_DOUBLE_EQ(*s.multi_turn_fraction, 0.0);

    const auto t = stats({shaped(1, 1, "A"), shaped(2, 3, "A"), shaped(2, 3, "A")});
    EXPECT_DOUBLE_EQ(*t.multi_turn_fraction, 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(*t.avg_turns, 7.0 / 3.0);
    EXPECT_EQ(t.turns_histogram.at(3), 2U);

    const auto e = stats({});
    EXPECT_EQ(e.total, 0U);
    EXPECT_FALSE(e.avg_calls.has_value());
    EXPECT_FALSE(e.multi_turn_fraction.has_value());
    EXPECT_TRUE(e.domain_distribution.empty());
    EXPECT_TRUE(e.to_json().at("avg_calls").is_null());
}

TEST(DatasetForge, StatsAgreeWithNaiveAggregation)
{
    Rng rng(5);
    const std::vector<std::string> domains {"Travel", "Finance", "Retail", "Health"};
    for (int round = 0; round < 200; ++round)
    {
        std::vector<Trajectory> data;
        const auto n = 1 + rng.uniform_index(40);
        long sum_calls = 0;
        long sum_turns = 0;
        long multi = 0;
        std::size_t lo = 100;
        std::size_t hi = 0;
        std::map<std::string, long> counts;
        for (std::size_t i = 0; i < n; ++i)
        {
            const auto c = 1 + rng.uniform_index(8);
            const auto t = 1 + rng.uniform_index(c);
            const auto& d = domains[rng.uniform_index(domains.size())];
            data.push_back(shaped(c, t, d));
            sum_calls += static_cast<long>(c);
            sum_turns += static_cast<long>(t);
            multi += t > 1;
            lo = std::min(lo, c);
            hi = std::max(hi, c);
            ++counts[d];
        }
        const auto s = stats(data);
        const double dn = static_cast<double>(n);
        ASSERT_NEAR(*s.avg_calls, static_cast<double>(sum_calls) / dn, 1e-12);
        ASSERT_NEAR(*s.avg_turns, static_cast<double>(sum_turns) / dn, 1e-12);
        ASSERT_NEAR(*s.multi_turn_fraction, static_cast<double>(multi) / dn, 1e-12);
        ASSERT_EQ(*s.min_calls, lo);
        ASSERT_EQ(*s.max_calls, hi);
        double total = 0;
        for (const auto& [d, f]: s.domain_distribution)
        {
            ASSERT_NEAR(f, static_cast<double>(counts.at(d)) / dn, 1e-12);
            total += f;
        }
        ASSERT_NEAR(total, 1.0, 1e-9);
        std::size_t hist = 0;
        for (const auto& [k, v]: s.calls_histogram)
            hist += v;
        ASSERT_EQ(hist, n);
    }
}

TEST(DatasetForge, AssemblyOfTwoTurnsAndSixCalls)
{
    TwoTurnWorld w;
    const auto t = assemble(w.seed);
    EXPECT_EQ(t.n_turns, 2U);
    EXPECT_EQ(t.n_calls, 6U);
    std::vector<Role> roles;
    for (const auto& m: t.turns)
        roles.push_back(m.role);
    const std::vector<Role> expected {Role::User, Role::Assistant, Role::Tool, Role::Assistant, Role::Tool,
                                      Role::Assistant, Role::Tool, Role::User, Role::Assistant, Role::Tool,
                                      Role::Assistant, Role::Tool};
    EXPECT_EQ(roles, expected);
    EXPECT_EQ(t.turns[0].content, w.world.query.text);
    EXPECT_EQ(t.turns[7].content, "Now finish the remaining part of the job.");
    EXPECT_EQ(parse_output(t.turns[3].content).calls.size(), 2U);
    EXPECT_EQ(provenance_steps(t).size(), 5U);
    EXPECT_EQ(t.provenance.at("env_seed"), w.world.trace.seed);
    EXPECT_FALSE(reverify(t, w.world.graph, *w.world.env).has_value());
}

TEST(DatasetForge, ReverifyCatchesTampering)
{
    TwoTurnWorld w;
    const auto good = assemble(w.seed);
    auto bad_call = good;
    bad_call.turns[1].content = render_output({std::string("x"), parse_call_list("[s9(seq=1)]"), true, ""});
    EXPECT_TRUE(reverify(bad_call, w.world.graph, *w.world.env).has_value());
    auto bad_feedback = good;
    bad_feedback.turns[2].content = "[]";
    EXPECT_TRUE(reverify(bad_feedback, w.world.graph, *w.world.env).has_value());
    auto bad_count = good;
    bad_count.n_calls = 5;
    EXPECT_TRUE(reverify(bad_count, w.world.graph, *w.world.env).has_value());
    auto no_think = good;
    no_think.turns[1].content = "<tool_call>[" + render_call(w.world.trace.steps[0].call) + "]</tool_call>";
    EXPECT_TRUE(reverify(no_think, w.world.graph, *w.world.env).has_value());
}

TEST(DatasetForge, ClosingSummaryIsACallFreeTurn)
{
    TwoTurnWorld w;
    const auto t = assemble(w.seed, AssemblyOptions {true});
    ASSERT_EQ(t.turns.back().role, Role::Assistant);
    const auto out = parse_output(t.turns.back().content);
    EXPECT_FALSE(out.has_tool_call);
    EXPECT_TRUE(out.cot.has_value());
    EXPECT_FALSE(reverify(t, w.world.graph, *w.world.env).has_value());
    const auto rl = rl_samples({t});
    EXPECT_TRUE(rl.back().at("truth").is_null());
    EXPECT_EQ(reward(t.turns.back().content, std::nullopt), 1);
}

TEST(DatasetForge, ExportImportRoundTrip)
{
    TwoTurnWorld w;
    hgtest::TempDir dir;
    const std::vector<Trajectory> data {assemble(w.seed), assemble(w.seed, AssemblyOptions {true})};
    EXPECT_EQ(export_jsonl(data, dir / "t.jsonl"), 2U);
    EXPECT_EQ(hgtest::slurp(dir / "t.jsonl").find('\n'), hgtest::slurp(dir / "t.jsonl").find("}\n") + 1);
    EXPECT_EQ(import_jsonl(dir / "t.jsonl"), data);
    EXPECT_EQ(export_jsonl({}, dir / "e.jsonl"), 0U);
    EXPECT_TRUE(import_jsonl(dir / "e.jsonl").empty());
    EXPECT_EQ(hgtest::slurp(dir / "e.jsonl"), "");
}

TEST(DatasetForge, SftRowsRebuildTheirPrefix)
{
    TwoTurnWorld w;
    const std::vector<Trajectory> data {assemble(w.seed), assemble(w.seed, AssemblyOptions {true})};
    const auto rows = sft_samples(data);
    std::size_t assistants = 0;
    for (const auto& t: data)
        for (const auto& m: t.turns)
            assistants += m.role == Role::Assistant;
    ASSERT_EQ(rows.size(), assistants);
    std::size_t r = 0;
    for (const auto& t: data)
        for (std::size_t i = 0; i < t.turns.size(); ++i)
        {
            if (t.turns[i].role != Role::Assistant)
                continue;
            const auto& row = rows[r++];
            ASSERT_EQ(row.at("context").size(), i);
            for (std::size_t j = 0; j < i; ++j)
                ASSERT_EQ(message_from_json(row.at("context")[j]), t.turns[j]);
            ASSERT_EQ(message_from_json(row.at("target")), t.turns[i]);
        }
    hgtest::TempDir dir;
    EXPECT_EQ(export_sft(data, dir / "sft.jsonl"), assistants);
}

TEST(DatasetForge, RlTruthMatchesProvenance)
{
    TwoTurnWorld w;
    const auto t = assemble(w.seed);
    const auto rows = rl_samples({t});
    const auto steps = provenance_steps(t);
    ASSERT_EQ(rows.size(), steps.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        EXPECT_EQ(calls_from_json(rows[i].at("truth")), steps[i]);
    std::size_t k = 0;
    for (std::size_t i = 0; i < t.turns.size(); ++i)
        if (t.turns[i].role == Role::Assistant)
            EXPECT_EQ(reward(t.turns[i].content, calls_from_json(rows[k++].at("truth"))), 1);
}

TEST(DatasetForge, MessageJsonRoundTripAndErrors)
{
    for (auto role: {Role::User, Role::Assistant, Role::Tool, Role::System})
    {
        const ChatMessage m {role, "content \"quoted\""};
        EXPECT_EQ(message_from_json(message_to_json(m)), m);
    }
    EXPECT_THROW((void)message_from_json(Json {{"role", "narrator"}, {"content", "x"}}), Error);
    EXPECT_ANY_THROW((void)Trajectory::from_json(Json::object()));
}
