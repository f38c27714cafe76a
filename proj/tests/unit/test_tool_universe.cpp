// SPDX-License-Identifier: Apache-2.0
#include "hardgen/tool_universe.hpp"

#include "hardgen_test_support.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace hardgen;

namespace
{

const char* const kZipcodeLine =
    R"({"id":"get_zipcode","params":[{"name":"city","kind":"string","required":true}],"returns":[{"name":"zipcode","kind":"string"}]})";

IngestResult ingest_text(const std::string& text)
{
    std::istringstream in(text);
    return ingest_schemas(in);
}

std::string tool_line(const std::string& id, const std::string& extra = "")
{
    return R"({"id":")" + id + R"(","description":"d","params":[],"returns":[{"name":"r","kind":"integer"}])" + extra + "}";
}

} // namespace

TEST(ToolUniverse, EmptyFileGivesEmptyRegistry)
{
    hgtest::TempDir dir;
    write_text(dir / "tools.jsonl", "");
    const auto result = ingest_schemas(dir / "tools.jsonl");
    EXPECT_EQ(result.registry.count(), 0U);
    EXPECT_TRUE(result.rejects.empty());
}

TEST(ToolUniverse, IngestsTheZipcodeSchema)
{
    const auto result = ingest_text(std::string(kZipcodeLine) + "\n");
    ASSERT_TRUE(result.rejects.empty()) << result.rejects.front().reason;
    const auto tool = lookup(result.registry, "get_zipcode");
    ASSERT_TRUE(tool.has_value());
    ASSERT_EQ(tool->params.size(), 1U);
    EXPECT_EQ(tool->params[0].name, "city");
    EXPECT_EQ(tool->params[0].kind, ParamKind::String);
    EXPECT_TRUE(tool->params[0].required);
    ASSERT_EQ(tool->returns.size(), 1U);
    EXPECT_EQ(tool->returns[0].name, "zipcode");
    EXPECT_EQ(tool->domain_tag, "Tools");
    EXPECT_FALSE(tool->is_failure);
}

TEST(ToolUniverse, DuplicateIdRejectsTheSecondLine)
{
    const auto result = ingest_text(tool_line("a") + "\n" + tool_line("a") + "\n");
    EXPECT_EQ(result.registry.count(), 1U);
    ASSERT_EQ(result.rejects.size(), 1U);
    EXPECT_EQ(result.rejects[0].line, 2U);
    EXPECT_NE(result.rejects[0].reason.find("duplicate"), std::string::npos);
}

TEST(ToolUniverse, MalformedLinesAreReportedWithLineNumbers)
{
    const std::string text = tool_line("ok") + "\n"
                             + "not json\n"
                             + R"({"id":"k","params":[{"name":"x","kind":"blob"}],"returns":[]})" + "\n"
                             + R"({"id":"e","params":[{"name":"x","kind":"enum","required":true}],"returns":[]})" + "\n"
                             + R"({"id":"d","params":[{"name":"x","kind":"string"},{"name":"x","kind":"string"}],"returns":[]})" + "\n"
                             + "\n"
                             + tool_line("ok2") + "\n";
    const auto result = ingest_text(text);
    EXPECT_EQ(result.registry.count(), 2U);
    ASSERT_EQ(result.rejects.size(), 4U);
    EXPECT_EQ(result.rejects[0].line, 2U);
    EXPECT_EQ(result.rejects[1].line, 3U);
    EXPECT_EQ(result.rejects[2].line, 4U);
    EXPECT_EQ(result.rejects[3].line, 5U);
}

TEST(ToolUniverse, UnreadableFileIsFatal)
{
    EXPECT_THROW((void)ingest_schemas(std::filesystem::path("/nonexistent/tools.jsonl")), IoError);
}

TEST(ToolUniverse, UnknownFieldsArePreservedAsMetadata)
{
    const auto result = ingest_text(tool_line("m", R"(,"vendor":{"x":1})") + "\n");
    const auto tool = lookup(result.registry, "m");
    ASSERT_TRUE(tool.has_value());
    EXPECT_EQ(tool->metadata.at("vendor"), Json::parse(R"({"x":1})"));
    EXPECT_EQ(parse_tool_schema(tool_to_json(*tool)), *tool);
}

TEST(ToolUniverse, LookupMissingOnEmptyRegistry)
{
    ToolRegistry registry;
    EXPECT_FALSE(lookup(registry, "missing").has_value());
}

TEST(ToolUniverse, IngestIsIdempotent)
{
    hgtest::TempDir dir;
    const auto path = hgtest::data_dir() / "toy" / "tools.jsonl";
    const auto a = ingest_schemas(path);
    const auto b = ingest_schemas(path);
    EXPECT_EQ(a.registry, b.registry);
    EXPECT_EQ(a.registry.count(), 12U);
}

TEST(ToolUniverse, EveryEnumeratedIdRoundTripsAndLookupIgnoresUnrelatedTools)
{
    Rng rng(5);
    for (int round = 0; round < 50; ++round)
    {
        const auto n = 1 + rng.uniform_index(20);
        auto g = hgtest::random_dag(rng, n, 0.2);
        auto registry = hgtest::random_registry(g, rng);
        EXPECT_EQ(registry->count(), n);
        for (const auto& id: registry->ids())
        {
            const auto tool = lookup(*registry, id);
            ASSERT_TRUE(tool.has_value());
            EXPECT_EQ(tool->id, id);
        }
        const auto probe = g.names[rng.uniform_index(n)];
        const auto before = lookup(*registry, probe);
        ToolSpec extra;
        extra.id = "unrelated_" + std::to_string(round);
        ASSERT_TRUE(registry->add(extra));
        EXPECT_EQ(lookup(*registry, probe), before);
    }
}

TEST(ToolUniverse, ValueMatchesChecksKindAndConstraint)
{
    const ValueConstraint range {0.0, 10.0, {}};
    EXPECT_TRUE(value_matches(Json(3), ParamKind::Integer, &range));
    EXPECT_FALSE(value_matches(Json(11), ParamKind::Integer, &range));
    EXPECT_FALSE(value_matches(Json(3.5), ParamKind::Integer));
    EXPECT_TRUE(value_matches(Json(3), ParamKind::Float));
    EXPECT_FALSE(value_matches(Json("3"), ParamKind::Float));
    EXPECT_TRUE(value_matches(Json(true), ParamKind::Boolean));
    const ValueConstraint set {std::nullopt, std::nullopt, {"x", "y"}};
    EXPECT_TRUE(value_matches(Json("x"), ParamKind::Enum, &set));
    EXPECT_FALSE(value_matches(Json("z"), ParamKind::Enum, &set));
    EXPECT_TRUE(value_matches(Json::object(), ParamKind::Object));
}
