// SPDX-License-Identifier: Apache-2.0
#include "hardgen/dataset_forge.hpp"

#include "hardgen_test_support.hpp"

#include <gtest/gtest.h>

#include <sstream>

#include <sys/wait.h>

using namespace hardgen;

namespace
{

struct Exit
{
    int code = -1;
    std::string out;
};

Exit cli(const std::string& args, const hgtest::TempDir& dir)
{
    const auto out = dir / "stdout.txt";
    const auto command = std::string("'") + HARDGEN_CLI_PATH + "' -q " + args + " > '" + out.string() + "' 2> '"
                         + (dir / "stderr.txt").string() + "'";
    const int status = std::system(command.c_str());
    Exit e;
    e.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    e.out = std::filesystem::exists(out) ? hgtest::slurp(out) : "";
    return e;
}

std::string q(const std::filesystem::path& p)
{
    return "'" + p.string() + "'";
}

} // namespace

TEST(Cli, ConfigErrorsExitWithOne)
{
    hgtest::TempDir dir;
    write_text(dir / "bad.json", "{\"refinement\": {\"k_max\": 0}}");
    EXPECT_EQ(cli("run -c " + q(dir / "bad.json"), dir).code, 1);
    EXPECT_EQ(cli("run -c " + q(dir / "missing.json"), dir).code, 1);
    EXPECT_EQ(cli("frobnicate", dir).code, 1);
    const auto toy = hgtest::data_dir() / "toy" / "config.json";
    EXPECT_EQ(cli("sample -c " + q(toy) + " --set nokey", dir).code, 1);
}

TEST(Cli, SampleSynthStatsAndExports)
{
    hgtest::TempDir dir;
    const auto toy = hgtest::data_dir() / "toy" / "config.json";
    const auto out = dir / "out";
    const auto common = " -c " + q(toy) + " --set output_dir=" + q(out) + " --set targets.count=8";
    const auto sampled = cli("sample" + common, dir);
    ASSERT_EQ(sampled.code, 0) << hgtest::slurp(dir / "stderr.txt");
    EXPECT_EQ(Json::parse(sampled.out).at("attempted"), 8);
    const auto synth = cli("synth" + common + " --traces " + q(out / "traces.jsonl"), dir);
    ASSERT_EQ(synth.code, 0) << hgtest::slurp(dir / "stderr.txt");
    const auto retained = Json::parse(synth.out).at("retained").get<std::size_t>();

    const auto trajectories = out / "trajectories.jsonl";
    const auto dataset = import_jsonl(trajectories);
    EXPECT_EQ(dataset.size(), retained);
    const auto st = cli("stats " + q(trajectories), dir);
    ASSERT_EQ(st.code, 0);
    EXPECT_EQ(Json::parse(st.out), stats(dataset).to_json());

    const auto sft = cli("export-sft " + q(trajectories) + " -o " + q(dir / "sft.jsonl"), dir);
    ASSERT_EQ(sft.code, 0);
    EXPECT_EQ(Json::parse(sft.out).at("samples").get<std::size_t>(), sft_samples(dataset).size());
    EXPECT_EQ(read_jsonl(dir / "sft.jsonl").size(), sft_samples(dataset).size());
    const auto rl = cli("export-rl " + q(trajectories) + " -o " + q(dir / "rl.jsonl"), dir);
    ASSERT_EQ(rl.code, 0);
    EXPECT_EQ(read_jsonl(dir / "rl.jsonl").size(), rl_samples(dataset).size());
}

TEST(Cli, FcCheckScoresLines)
{
    hgtest::TempDir dir;
    write_jsonl(dir / "fc.jsonl",
                {Json {{"candidate", "<think>x</think><tool_call>[pwd()]</tool_call>"}, {"truth", "[pwd()]"}},
                 Json {{"candidate", "<think>x</think><tool_call>[ls()]</tool_call>"}, {"truth", "[pwd()]"}},
                 Json {{"candidate", "<think>nothing to call</think>Done."}, {"truth", nullptr}}});
    const auto r = cli("fc-check " + q(dir / "fc.jsonl"), dir);
    ASSERT_EQ(r.code, 0);
    std::vector<std::string> lines;
    std::istringstream in(r.out);
    for (std::string line; std::getline(in, line);)
        lines.push_back(line);
    ASSERT_EQ(lines.size(), 4U);
    EXPECT_EQ(Json::parse(lines[0]).at("reward"), 1);
    EXPECT_EQ(Json::parse(lines[1]).at("reward"), 0);
    EXPECT_EQ(Json::parse(lines[2]).at("reward"), 1);
    EXPECT_EQ(Json::parse(lines[3]).at("correct"), 2);
}
