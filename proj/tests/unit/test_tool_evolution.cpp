// SPDX-License-Identifier: Apache-2.0
#include "hardgen/fc_checker.hpp"
#include "hardgen/tool_evolution.hpp"

#include "hardgen_test_support.hpp"

#include <gtest/gtest.h>

using namespace hardgen;

namespace
{

const char* const kGoodAdv = R"({
  "advanced_tool_name": "buy_tickets_adv",
  "parameters": [
    {"name": "cityA", "type": "string", "description": "name of the departure city"},
    {"name": "cityB", "type": "string", "description": "name of the destination city"}
  ],
  "description": "Purchase air tickets between two cities by city names, returning the purchased ticket information."
})";

const std::string kGood = "Please purchase air tickets between the city Rivermist and the city Stonebrook.";
const std::string kBad = "Please check the zip code of Rivermist and Stonebrook first, then purchase the air tickets.";

struct CaseWorld
{
    ToolRegistry registry;
    ApiGraph graph;
    std::unique_ptr<Environment> env;
    PromptLibrary prompts = PromptLibrary::embedded();

    CaseWorld()
    {
        const auto dir = hgtest::data_dir() / "case_study";
        registry = ingest_schemas(dir / "tools.jsonl").registry;
        graph = load_graph(dir / "graph.json", registry);
        env = std::make_unique<Environment>(registry, FixtureTable::load(dir / "fixtures.jsonl"));
    }

    HardTrace run(const std::vector<Call>& calls, const std::string& target) const
    {
        HardTrace trace;
        trace.trace_id = "tr-test";
        trace.target = target;
        auto s = env->new_session(0);
        for (const auto& c: calls)
        {
            auto fb = env->execute(s, c, graph);
            if (!fb.ok)
                throw Error(fb.error);
            trace.steps.push_back({c, fb});
        }
        return trace;
    }

    HardTrace zipcode_trace() const
    {
        return run({{"get_zipcode", {{"city", "Rivermist"}}},
                    {"get_zipcode", {{"city", "Stonebrook"}}},
                    {"buy_tickets", {{"cityA_zipcode", "83214"}, {"cityB_zipcode", "74532"}}}},
                   "buy_tickets");
    }
};

} // namespace

TEST(ToolEvolution, CaseStudyAdvancedTool)
{
    CaseWorld w;
    const auto trace = w.zipcode_trace();
    ScriptedBackend backend(std::vector<std::string> {kGoodAdv});
    const auto adv = make_advanced_tool(backend, trace, w.registry, w.prompts, {});
    EXPECT_EQ(adv.name, "buy_tickets_adv");
    ASSERT_EQ(adv.params.size(), 2U);
    EXPECT_EQ(adv.params[0].name, "cityA");
    EXPECT_EQ(adv.params[1].name, "cityB");
    EXPECT_EQ(adv.description,
              "Purchase air tickets between two cities by city names, returning the purchased ticket information.");
    EXPECT_EQ(adv.source_trace, "tr-test");
    EXPECT_EQ(adv.primitive_tools, (std::vector<std::string> {"get_zipcode", "buy_tickets"}));
    EXPECT_EQ(adv.bindings.at("cityA"), "Rivermist");
    EXPECT_EQ(adv.bindings.at("cityB"), "Stonebrook");
    EXPECT_EQ(adv.signature(), "buy_tickets_adv(cityA, cityB) -> ticket_id");
    EXPECT_EQ(backend.calls(), 1U);
    EXPECT_EQ(AdvancedToolSpec::from_json(adv.to_json()).to_json(), adv.to_json());
}

TEST(ToolEvolution, MalformedJsonTwiceIsRejectedWithRawText)
{
    CaseWorld w;
    ScriptedBackend backend(std::vector<std::string> {"not json", "still {not json"});
    try
    {
        (void)make_advanced_tool(backend, w.zipcode_trace(), w.registry, w.prompts, {});
        FAIL();
    }
    catch (const RejectionError& e)
    {
        EXPECT_EQ(e.raw_text, "still {not json");
    }
    EXPECT_EQ(backend.calls(), 2U);
}

TEST(ToolEvolution, ViolationIsRepromptedOnce)
{
    CaseWorld w;
    const std::string leaky = R"({"advanced_tool_name":"buy_tickets_adv","parameters":[{"name":"zipcode","type":"string"}],
      "description":"Buys tickets."})";
    std::vector<std::vector<ChatMessage>> seen;
    ScriptedBackend backend([&](const std::vector<ChatMessage>& m, const CompletionParams&) {
        seen.push_back(m);
        return seen.size() == 1 ? leaky : std::string(kGoodAdv);
    });
    const auto adv = make_advanced_tool(backend, w.zipcode_trace(), w.registry, w.prompts, {});
    EXPECT_EQ(adv.params.size(), 2U);
    ASSERT_EQ(seen.size(), 2U);
    EXPECT_NE(seen[1].back().content.find("zipcode"), std::string::npos);

    ScriptedBackend stubborn(std::vector<std::string> {leaky, leaky});
    EXPECT_THROW((void)make_advanced_tool(stubborn, w.zipcode_trace(), w.registry, w.prompts, {}), RejectionError);
}

TEST(ToolEvolution, AdvancedToolInvariants)
{
    CaseWorld w;
    const auto trace = w.zipcode_trace();
    ScriptedBackend backend(std::vector<std::string> {kGoodAdv});
    auto adv = make_advanced_tool(backend, trace, w.registry, w.prompts, {});
    EXPECT_FALSE(validate_advanced_tool(adv, trace, w.registry).has_value());
    auto clash = adv;
    clash.name = "buy_tickets";
    EXPECT_TRUE(validate_advanced_tool(clash, trace, w.registry).has_value());
    for (const auto& name: intermediate_names(trace))
    {
        auto leaky = adv;
        leaky.params[0].name = name;
        EXPECT_TRUE(validate_advanced_tool(leaky, trace, w.registry).has_value()) << name;
    }
    EXPECT_TRUE(intermediate_names(trace).count("zipcode"));
}

TEST(ToolEvolution, SingleCallTraceKeepsItsExternalParams)
{
    CaseWorld w;
    const auto trace = w.run({{"get_weather", {{"city", "Rivermist"}}}}, "get_weather");
    const auto external = external_args(trace);
    ASSERT_EQ(external.size(), 1U);
    EXPECT_EQ(external[0].param, "city");
    ScriptedBackend backend(std::vector<std::string> {
        R"({"advanced_tool_name":"city_forecast","parameters":[{"name":"city","type":"string"}],"description":"Weather report for a city."})"});
    const auto adv = make_advanced_tool(backend, trace, w.registry, w.prompts, {});
    EXPECT_EQ(adv.params.size(), external.size());
    EXPECT_EQ(adv.bindings.at("city"), "Rivermist");
}

TEST(ToolEvolution, ExternalArgsSkipPayloadFedValues)
{
    CaseWorld w;
    const auto external = external_args(w.zipcode_trace());
    ASSERT_EQ(external.size(), 2U);
    EXPECT_EQ(external[0].value, "Rivermist");
    EXPECT_EQ(external[1].value, "Stonebrook");
}

TEST(ToolEvolution, ToolMakerPromptIsLossless)
{
    CaseWorld w;
    const auto trace = w.zipcode_trace();
    const auto prompt = render_tool_maker_prompt(w.prompts, trace);
    for (const auto& step: trace.steps)
    {
        EXPECT_NE(prompt.find(render_call(step.call)), std::string::npos) << render_call(step.call);
        EXPECT_NE(prompt.find(canonical_value(step.feedback.payload)), std::string::npos);
    }
}

TEST(ToolEvolution, HardQueryGoodAcceptedWithHint)
{
    CaseWorld w;
    const auto trace = w.zipcode_trace();
    ScriptedBackend maker(std::vector<std::string> {kGoodAdv});
    const auto adv = make_advanced_tool(maker, trace, w.registry, w.prompts, {});
    ScriptedBackend gen(std::vector<std::string> {"Query: " + kGood});
    const auto q = make_hard_query(gen, adv, trace, w.prompts, {});
    EXPECT_EQ(q.text, kGood);
    EXPECT_EQ(q.hint, adv.description);
    EXPECT_FALSE(q.easy_text.has_value());
    EXPECT_EQ(HardQueryRecord::from_json(q.to_json()).to_json(), q.to_json());
}

TEST(ToolEvolution, HardQueryBadRejectedAfterOneReprompt)
{
    CaseWorld w;
    const auto trace = w.zipcode_trace();
    ScriptedBackend maker(std::vector<std::string> {kGoodAdv});
    const auto adv = make_advanced_tool(maker, trace, w.registry, w.prompts, {});
    ScriptedBackend stubborn(std::vector<std::string> {kBad, kBad});
    try
    {
        (void)make_hard_query(stubborn, adv, trace, w.prompts, {});
        FAIL();
    }
    catch (const RejectionError& e)
    {
        EXPECT_NE(e.raw_text.find("first"), std::string::npos);
    }
    ScriptedBackend learns(std::vector<std::string> {kBad, kGood});
    EXPECT_EQ(make_hard_query(learns, adv, trace, w.prompts, {}).text, kGood);
    EXPECT_EQ(learns.calls(), 2U);
}

TEST(ToolEvolution, EasyQueryBehindFlag)
{
    CaseWorld w;
    const auto trace = w.zipcode_trace();
    ScriptedBackend maker(std::vector<std::string> {kGoodAdv});
    const auto adv = make_advanced_tool(maker, trace, w.registry, w.prompts, {});
    EvolutionOptions options;
    options.emit_easy_query = true;
    ScriptedBackend gen(std::vector<std::string> {kGood});
    const auto q = make_hard_query(gen, adv, trace, w.prompts, {}, options);
    ASSERT_TRUE(q.easy_text.has_value());
    EXPECT_TRUE(validate_hard_query(*q.easy_text, adv.primitive_tools, options.banned_cues).has_value());
}

TEST(ToolEvolution, ValidatorRules)
{
    const std::vector<std::string> ids {"get_zipcode", "buy_tickets"};
    const EvolutionOptions defaults;
    EXPECT_FALSE(validate_hard_query(kGood, ids, defaults.banned_cues).has_value());
    EXPECT_TRUE(validate_hard_query(kBad, ids, defaults.banned_cues).has_value());
    EXPECT_TRUE(validate_hard_query("Use get_zipcode for Rivermist.", ids, defaults.banned_cues).has_value());
    EXPECT_TRUE(validate_hard_query("Use GET_ZIPCODE for Rivermist.", ids, defaults.banned_cues).has_value());
    EXPECT_FALSE(validate_hard_query("Use get_zipcodes_v2 for Rivermist.", ids, defaults.banned_cues).has_value());
    EXPECT_TRUE(validate_hard_query("  ", ids, defaults.banned_cues).has_value());
    EXPECT_FALSE(validate_hard_query("Book a trip, then relax.", ids, {}).has_value());
    EXPECT_TRUE(validate_hard_query("Book a trip; after  that relax.", ids, defaults.banned_cues).has_value());
}

TEST(ToolEvolution, QueryLineExtraction)
{
    EXPECT_EQ(extract_query_line("Query: \"" + kGood + "\""), kGood);
    EXPECT_EQ(extract_query_line("\n\nGOOD (hard) query: " + kGood + "\nextra"), kGood);
    EXPECT_EQ(extract_query_line(kGood), kGood);
}
