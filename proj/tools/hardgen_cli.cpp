// SPDX-License-Identifier: Apache-2.0
// hardgen: command-line front end of the trajectory synthesis pipeline.
// Exit codes: 0 success, 1 config error, 2 stage failure.
#include "hardgen/dataset_forge.hpp"
#include "hardgen/fc_checker.hpp"
#include "hardgen/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace
{

using namespace hardgen;

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kStageFailure = 2;

struct ConfigArgs
{
    std::string path;
    std::vector<std::string> sets;
    std::map<std::string, std::string> dotted; // filled by the per-key flags
};

void add_config_options(CLI::App& cmd, ConfigArgs& args)
{
    cmd.add_option("-c,--config", args.path, "pipeline config (JSON)")->required()->check(CLI::ExistingFile);
    cmd.add_option("--set", args.sets, "override, key=value with a dotted key");
    for (const auto& [key, value]: flatten(default_config_json()))
    {
        auto* opt = cmd.add_option_function<std::string>(
            "--" + key, [&args, key = key](const std::string& v) { args.dotted[key] = v; },
            "default " + value.dump());
        opt->group("Config keys");
    }
}

PipelineConfig resolve_config(const ConfigArgs& args)
{
    auto overrides = args.dotted;
    for (const auto& s: args.sets)
    {
        const auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ConfigError("--set expects key=value, got " + s);
        overrides[s.substr(0, eq)] = s.substr(eq + 1);
    }
    return load_config(args.path, overrides);
}

std::vector<HardTrace> read_traces(const std::filesystem::path& path)
{
    std::vector<HardTrace> traces;
    for (const auto& row: read_jsonl(path))
        traces.push_back(trace_from_json(row));
    return traces;
}

std::optional<std::vector<Call>> truth_from_json(const Json& json)
{
    if (json.is_null())
        return std::nullopt;
    if (json.is_string())
        return parse_call_list(json.get<std::string>());
    std::vector<Call> calls;
    for (const auto& c: json)
        calls.push_back(Call::from_json(c));
    return calls;
}

void print_json(const Json& json)
{
    std::cout << json.dump(2) << '\n';
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app {"Synthesizes verified multi-turn tool-use trajectories."};
    app.require_subcommand(1);
    bool quiet = false;
    app.add_flag("-q,--quiet", quiet, "suppress JSON-lines events on stderr");

    ConfigArgs run_args;
    auto* run = app.add_subcommand("run", "all stages, writing every output under output_dir");
    add_config_options(*run, run_args);

    ConfigArgs self_eval_args;
    auto* self_eval = app.add_subcommand("self-eval", "evaluate tools and write verdicts.jsonl and graph.json");
    add_config_options(*self_eval, self_eval_args);

    ConfigArgs sample_args;
    auto* sample = app.add_subcommand("sample", "sample hard traces into traces.jsonl");
    add_config_options(*sample, sample_args);

    ConfigArgs synth_args;
    std::string synth_traces;
    auto* synth = app.add_subcommand("synth", "evolve and refine sampled traces into trajectories");
    add_config_options(*synth, synth_args);
    synth->add_option("--traces", synth_traces, "trace JSONL from `sample`")->required()->check(CLI::ExistingFile);

    std::string stats_input;
    auto* stats_cmd = app.add_subcommand("stats", "dataset statistics of a trajectory JSONL file");
    stats_cmd->add_option("input", stats_input)->required()->check(CLI::ExistingFile);

    std::string sft_input;
    std::string sft_output;
    auto* sft = app.add_subcommand("export-sft", "one SFT sample per assistant message");
    sft->add_option("input", sft_input)->required()->check(CLI::ExistingFile);
    sft->add_option("-o,--output", sft_output)->required();

    std::string rl_input;
    std::string rl_output;
    auto* rl = app.add_subcommand("export-rl", "(context, ground truth) pairs for reward-based training");
    rl->add_option("input", rl_input)->required()->check(CLI::ExistingFile);
    rl->add_option("-o,--output", rl_output)->required();

    std::string fc_input;
    auto* fc = app.add_subcommand("fc-check", "score {candidate, truth} JSONL lines with the binary reward");
    fc->add_option("input", fc_input)->required()->check(CLI::ExistingFile);

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError& e)
    {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    EventLog log(quiet ? nullptr : &std::cerr);
    try
    {
        if (*run)
        {
            Pipeline pipeline(resolve_config(run_args), &log);
            print_json(pipeline.run().to_json());
        }
        else if (*self_eval)
        {
            Pipeline pipeline(resolve_config(self_eval_args), &log);
            const auto& out = pipeline.config().output_dir;
            std::filesystem::create_directories(out);
            std::vector<Json> rows;
            for (const auto& v: pipeline.self_eval())
                rows.push_back(v.to_json());
            write_jsonl(out / "verdicts.jsonl", rows);
            write_text(out / "graph.json", graph_to_json(pipeline.graph()).dump(2) + "\n");
            print_json({{"verdicts", rows.size()}, {"failure_set", pipeline.graph().failure_set()}});
        }
        else if (*sample)
        {
            Pipeline pipeline(resolve_config(sample_args), &log);
            const auto& out = pipeline.config().output_dir;
            std::filesystem::create_directories(out);
            const auto result = pipeline.sample();
            std::vector<Json> rows;
            for (const auto& t: result.traces)
                rows.push_back(trace_to_json(t));
            write_jsonl(out / "traces.jsonl", rows);
            print_json({{"attempted", result.counts.attempted},
                        {"ok", result.counts.ok},
                        {"rejected", result.counts.rejected}});
        }
        else if (*synth)
        {
            Pipeline pipeline(resolve_config(synth_args), &log);
            const auto& out = pipeline.config().output_dir;
            std::filesystem::create_directories(out);
            const auto result = pipeline.synth(read_traces(synth_traces));
            std::vector<Json> queries;
            for (const auto& item: result.items)
                queries.push_back(item.to_json());
            write_jsonl(out / "queries.jsonl", queries);
            write_jsonl(out / "sessions.jsonl", result.sessions);
            export_jsonl(result.trajectories, out / "trajectories.jsonl");
            export_sft(result.trajectories, out / "sft.jsonl");
            export_rl(result.trajectories, out / "rl.jsonl");
            const auto s = stats(result.trajectories);
            write_text(out / "stats.json", s.to_json().dump(2) + "\n");
            print_json({{"evolved", result.evolution.ok},
                        {"retained", result.refinement.retained},
                        {"discarded", result.refinement.discarded},
                        {"rejected", result.refinement.rejected + result.evolution.rejected}});
        }
        else if (*stats_cmd)
        {
            print_json(stats(import_jsonl(stats_input)).to_json());
        }
        else if (*sft)
        {
            print_json({{"samples", export_sft(import_jsonl(sft_input), sft_output)}});
        }
        else if (*rl)
        {
            print_json({{"samples", export_rl(import_jsonl(rl_input), rl_output)}});
        }
        else if (*fc)
        {
            std::size_t total = 0;
            std::size_t correct = 0;
            for (const auto& row: read_jsonl(fc_input))
            {
                const int r = reward(row.at("candidate").get<std::string>(), truth_from_json(row.at("truth")));
                std::cout << Json {{"line", total + 1}, {"reward", r}}.dump() << '\n';
                ++total;
                correct += static_cast<std::size_t>(r);
            }
            const double accuracy = total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
            std::cout << Json {{"total", total}, {"correct", correct}, {"accuracy", accuracy}}.dump() << '\n';
        }
    }
    catch (const ConfigError& e)
    {
        log.emit("error", {{"kind", "config"}, {"message", e.what()}});
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigError;
    }
    catch (const StageError& e)
    {
        log.emit("error", {{"kind", "stage"}, {"stage", e.stage}, {"item", e.item}, {"message", e.what()}});
        std::cerr << "stage failure: " << e.what() << '\n';
        return kStageFailure;
    }
    catch (const std::exception& e)
    {
        log.emit("error", {{"kind", "stage"}, {"message", e.what()}});
        std::cerr << "failure: " << e.what() << '\n';
        return kStageFailure;
    }
    return kOk;
}
