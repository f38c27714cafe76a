// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hardgen/api_graph.hpp"
#include "hardgen/cot_refinery.hpp"
#include "hardgen/dataset_forge.hpp"
#include "hardgen/llm_gateway.hpp"
#include "hardgen/prompt_template.hpp"
#include "hardgen/self_eval.hpp"
#include "hardgen/sim_env.hpp"
#include "hardgen/simulated_agent.hpp"
#include "hardgen/tool_evolution.hpp"
#include "hardgen/tool_universe.hpp"
#include "hardgen/trace_sampler.hpp"

#include <atomic>
#include <exception>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace hardgen
{

class ConfigError: public Error
{
  public:
    using Error::Error;
};

/// Fatal failure of one pipeline stage on one item.
class StageError: public Error
{
  public:
    StageError(std::string stage, std::string item, const std::string& what)
        : Error(stage + " failed on " + item + ": " + what), stage(std::move(stage)), item(std::move(item))
    {
    }

    std::string stage;
    std::string item;
};

/// Backend settings of one agent role.
struct AgentConfig
{
    std::string name;                 // report label; self-eval model name
    std::string backend = "simulated"; // simulated | live | replay
    CompletionParams params;
    std::filesystem::path cassette;  // replay source
    std::filesystem::path record_to; // when set, every exchange is appended here
    std::string endpoint;            // live; falls back to HARDGEN_ENDPOINT
    int max_retries = 4;
    double requests_per_second = 0.0;
    SimulatedAgentOptions simulated;
};

struct PipelineConfig
{
    std::filesystem::path schema_path;
    std::filesystem::path graph_path;
    std::filesystem::path fixtures_path; // optional
    std::filesystem::path prompts_dir;   // optional overrides of the embedded templates
    std::filesystem::path output_dir = "out";

    std::uint64_t seed = 0;
    std::size_t target_count = 20;
    std::vector<std::string> target_tools; // explicit targets, cycled; empty = draw from the failure set

    SamplerOptions sampler;
    std::vector<double> m_distribution {0.18, 0.199, 0.25, 0.17, 0.09, 0.051, 0.034, 0.026}; // P(m = 1..8)
    std::size_t m_target = 0; // fixed m for every trace; 0 = draw from m_distribution

    double single_turn_fraction = 0.363;
    std::size_t max_turns = 8;
    std::string step_grouping = "single"; // single | same_tool

    RefinementOptions refinement;
    EvolutionOptions evolution;
    AssemblyOptions assembly;

    AgentConfig tool_maker;
    AgentConfig query_generator;
    AgentConfig reasoner;
    AgentConfig verifier;

    bool self_eval_enabled = false;
    std::vector<std::string> self_eval_tools; // empty = every registered tool
    std::vector<AgentConfig> self_eval_models;

    std::size_t concurrency = 1;

    /// Paths in `json` are resolved against `base_dir`. Throws ConfigError.
    static PipelineConfig from_json(const Json& json, const std::filesystem::path& base_dir = {});
};

/// Every configurable key with its default value, nested.
Json default_config_json();

/// Flattened "a.b.c" -> leaf value view of a nested document.
std::map<std::string, Json> flatten(const Json& json);

/// Sets a dotted key; `value` is parsed as JSON, falling back to a plain string.
void set_dotted(Json& json, const std::string& key, const std::string& value);

/// Reads the config file, applies dotted overrides, validates.
PipelineConfig load_config(const std::filesystem::path& path, const std::map<std::string, std::string>& overrides = {});

/// Line-delimited JSON events.
class EventLog
{
  public:
    explicit EventLog(std::ostream* sink = nullptr): _sink(sink) {}

    void emit(const std::string& event, Json fields = Json::object()) const;

  private:
    std::ostream* _sink;
    mutable std::mutex _mutex;
};

/// Runs `fn(i)` for i in [0, n) on up to `width` threads. Exceptions are
/// rethrown after all workers finish, lowest index first.
template <class Fn>
void parallel_for(std::size_t n, std::size_t width, Fn fn)
{
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next {0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++)
        {
            try
            {
                fn(i);
            }
            catch (...)
            {
                errors[i] = std::current_exception();
            }
        }
    };
    const auto threads = std::max<std::size_t>(1, std::min(width, n));
    if (threads == 1)
    {
        worker();
    }
    else
    {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t)
            pool.emplace_back(worker);
        for (auto& t: pool)
            t.join();
    }
    for (const auto& e: errors)
        if (e)
            std::rethrow_exception(e);
}

BackendPtr make_backend(const AgentConfig& config, std::shared_ptr<const AnswerKey> key);

/// Builds the backend of one agent role; the default is make_backend.
using BackendFactory = std::function<BackendPtr(const AgentConfig&, std::shared_ptr<const AnswerKey>)>;

/// attempted = ok + rejected (sampling, evolution); attempted = retained + discarded + rejected (refinement).
struct StageCounts
{
    std::size_t attempted = 0;
    std::size_t ok = 0;
    std::size_t retained = 0;
    std::size_t discarded = 0;
    std::size_t rejected = 0;
};

struct SampleResult
{
    std::vector<HardTrace> traces;
    StageCounts counts;
};

struct SynthItem
{
    HardTrace trace;
    std::vector<Segment> segments;
    std::vector<std::size_t> step_sizes;

    [[nodiscard]] Json to_json() const;
};

struct SynthResult
{
    std::vector<SynthItem> items; // evolved traces
    std::vector<Json> sessions;   // refinement dumps
    std::vector<Trajectory> trajectories;
    StageCounts evolution;
    StageCounts refinement;
};

struct RunReport
{
    std::size_t self_eval_tools = 0;
    std::size_t challenging = 0;
    std::size_t needs_rerun = 0;
    StageCounts sampling;
    StageCounts evolution;
    StageCounts refinement;
    DatasetStats stats;

    [[nodiscard]] double retained_fraction() const;
    [[nodiscard]] Json to_json() const;
};

class Pipeline
{
  public:
    explicit Pipeline(PipelineConfig config, const EventLog* log = nullptr, BackendFactory factory = make_backend);

    [[nodiscard]] const PipelineConfig& config() const { return _config; }
    [[nodiscard]] const ToolRegistry& registry() const { return _registry; }
    [[nodiscard]] const Environment& environment() const { return *_env; }
    [[nodiscard]] ApiGraph graph() const { return _graph->snapshot(); }

    /// Evaluates tools and commits challenging ones to the failure set.
    std::vector<FailureVerdict> self_eval();

    /// Targets and m values per item, drawn from the configured distributions.
    [[nodiscard]] std::vector<std::pair<std::string, std::size_t>> plan_targets() const;

    SampleResult sample();

    /// Phases II and III plus assembly over already sampled traces.
    SynthResult synth(const std::vector<HardTrace>& traces);

    /// Every stage; writes all outputs under output_dir.
    RunReport run();

  private:
    [[nodiscard]] std::vector<std::size_t> step_sizes(const HardTrace& trace) const;
    [[nodiscard]] std::vector<std::size_t> segment_starts(std::size_t steps, std::uint64_t seed) const;
    void log(const std::string& event, Json fields = Json::object()) const;

    PipelineConfig _config;
    const EventLog* _log;
    ToolRegistry _registry;
    std::unique_ptr<GraphOwner> _graph;
    std::unique_ptr<Environment> _env;
    PromptLibrary _prompts;
    std::shared_ptr<AnswerKey> _key;
    BackendPtr _tool_maker;
    BackendPtr _query_generator;
    BackendPtr _reasoner;
    BackendPtr _verifier;
    BackendFactory _factory;
};

} // namespace hardgen
