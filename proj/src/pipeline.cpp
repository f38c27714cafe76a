// SPDX-License-Identifier: Apache-2.0
#include "hardgen/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <ostream>

namespace hardgen
{

namespace
{

Json agent_defaults(const std::string& name)
{
    return {
        {"name", name},
        {"backend", "simulated"},
        {"model", "hardgen-sim"},
        {"temperature", 0.7},
        {"max_tokens", 2048},
        {"seed", nullptr},
        {"cassette", ""},
        {"record_to", ""},
        {"endpoint", ""},
        {"max_retries", 4},
        {"requests_per_second", 0.0},
        {"first_attempt_accuracy", 0.7},
        {"refined_accuracy", 1.0},
        {"accuracy", 0.5},
    };
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& path)
{
    if (path.empty())
        return {};
    std::filesystem::path p(path);
    return p.is_absolute() || base.empty() ? p : base / p;
}

template <class T>
T get_as(const Json& json, const char* key, const std::string& where)
{
    try
    {
        return json.at(key).get<T>();
    }
    catch (const Json::exception& e)
    {
        throw ConfigError("config key " + where + key + ": " + e.what());
    }
}

AgentConfig parse_agent(const Json& json, const std::string& where, const std::filesystem::path& base)
{
    Json merged = agent_defaults(json.value("name", where));
    merged.merge_patch(json);
    const auto w = where + ".";

    AgentConfig a;
    a.name = get_as<std::string>(merged, "name", w);
    a.backend = get_as<std::string>(merged, "backend", w);
    if (a.backend != "simulated" && a.backend != "live" && a.backend != "replay")
        throw ConfigError(w + "backend must be simulated, live or replay, got " + a.backend);
    a.params.model = get_as<std::string>(merged, "model", w);
    a.params.temperature = get_as<double>(merged, "temperature", w);
    a.params.max_tokens = get_as<int>(merged, "max_tokens", w);
    if (!merged.at("seed").is_null())
        a.params.seed = get_as<std::int64_t>(merged, "seed", w);
    if (!std::isfinite(a.params.temperature) || a.params.temperature < 0)
        throw ConfigError(w + "temperature must be finite and >= 0");
    if (a.params.max_tokens <= 0)
        throw ConfigError(w + "max_tokens must be positive");
    a.cassette = resolve(base, get_as<std::string>(merged, "cassette", w));
    a.record_to = resolve(base, get_as<std::string>(merged, "record_to", w));
    if (a.backend == "replay" && a.cassette.empty())
        throw ConfigError(w + "cassette is required for the replay backend");
    a.endpoint = get_as<std::string>(merged, "endpoint", w);
    a.max_retries = get_as<int>(merged, "max_retries", w);
    a.requests_per_second = get_as<double>(merged, "requests_per_second", w);
    a.simulated.name = a.name;
    a.simulated.first_attempt_accuracy = get_as<double>(merged, "first_attempt_accuracy", w);
    a.simulated.refined_accuracy = get_as<double>(merged, "refined_accuracy", w);
    a.simulated.accuracy = get_as<double>(merged, "accuracy", w);
    for (double p: {a.simulated.first_attempt_accuracy, a.simulated.refined_accuracy, a.simulated.accuracy})
        if (!(p >= 0.0 && p <= 1.0))
            throw ConfigError(w + "accuracies must lie in [0, 1]");
    return a;
}

// Item-level failures that reject one item; anything else aborts the stage.
bool is_item_rejection(const std::exception& e)
{
    return dynamic_cast<const Error*>(&e) != nullptr && dynamic_cast<const IoError*>(&e) == nullptr
           && dynamic_cast<const ConfigError*>(&e) == nullptr;
}

HardTrace sub_trace(const HardTrace& trace, std::size_t begin, std::size_t end, std::size_t index)
{
    HardTrace sub;
    sub.trace_id = trace.trace_id + "-s" + std::to_string(index);
    sub.seed = trace.seed;
    sub.steps.assign(trace.steps.begin() + static_cast<std::ptrdiff_t>(begin),
                     trace.steps.begin() + static_cast<std::ptrdiff_t>(end));
    sub.target = sub.steps.back().call.tool_id;
    return sub;
}

} // namespace

Json default_config_json()
{
    return {
        {"schema_path", "tools.jsonl"},
        {"graph_path", "graph.json"},
        {"fixtures_path", ""},
        {"prompts_dir", ""},
        {"output_dir", "out"},
        {"seed", 0},
        {"concurrency", 1},
        {"targets", {{"count", 20}, {"tools", Json::array()}}},
        {"sampler",
         {
             {"max_steps", 8},
             {"retry_budget", 4},
             {"arg_redraws", 8},
             {"m_distribution", {0.18, 0.199, 0.25, 0.17, 0.09, 0.051, 0.034, 0.026}},
             {"m_target", 0},
         }},
        {"turns", {{"single_turn_fraction", 0.363}, {"max_turns", 8}, {"step_grouping", "single"}}},
        {"refinement", {{"k_max", 3}, {"prune_failed_attempts", false}, {"include_correction_narrative", false}}},
        {"evolution", {{"banned_cues", {"first", "then", "after that"}}, {"emit_easy_query", false}}},
        {"assembly", {{"closing_summary", false}}},
        {"agents",
         {
             {"tool_maker", agent_defaults("tool_maker")},
             {"query_generator", agent_defaults("query_generator")},
             {"reasoner", agent_defaults("reasoner")},
             {"verifier", agent_defaults("verifier")},
         }},
        {"self_eval", {{"enabled", false}, {"tools", Json::array()}, {"models", Json::array()}}},
    };
}

std::map<std::string, Json> flatten(const Json& json)
{
    std::map<std::string, Json> out;
    auto walk = [&](const auto& self, const Json& node, const std::string& prefix) -> void {
        if (node.is_object() && !node.empty())
        {
            for (const auto& [key, value]: node.items())
                self(self, value, prefix.empty() ? key : prefix + "." + key);
            return;
        }
        out[prefix] = node;
    };
    walk(walk, json, "");
    return out;
}

void set_dotted(Json& json, const std::string& key, const std::string& value)
{
    if (key.empty())
        throw ConfigError("empty override key");
    Json* node = &json;
    std::size_t start = 0;
    while (true)
    {
        const auto dot = key.find('.', start);
        const auto part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty())
            throw ConfigError("malformed override key: " + key);
        if (node->is_null())
            *node = Json::object();
        if (!node->is_object())
            throw ConfigError("override " + key + " descends into a non-object");
        node = &(*node)[part];
        if (dot == std::string::npos)
            break;
        start = dot + 1;
    }
    auto parsed = Json::parse(value, nullptr, false);
    *node = parsed.is_discarded() ? Json(value) : parsed;
}

PipelineConfig PipelineConfig::from_json(const Json& input, const std::filesystem::path& base)
{
    if (!input.is_object())
        throw ConfigError("config must be a JSON object");
    Json json = default_config_json();
    // Agent sections are merged per role below so partial overrides keep their defaults.
    Json agents = input.value("agents", Json::object());
    Json patch = input;
    patch.erase("agents");
    json.merge_patch(patch);

    PipelineConfig c;
    try
    {
        c.schema_path = resolve(base, json.at("schema_path").get<std::string>());
        c.graph_path = resolve(base, json.at("graph_path").get<std::string>());
        c.fixtures_path = resolve(base, json.at("fixtures_path").get<std::string>());
        c.prompts_dir = resolve(base, json.at("prompts_dir").get<std::string>());
        c.output_dir = resolve(base, json.at("output_dir").get<std::string>());
        c.seed = json.at("seed").get<std::uint64_t>();
        c.concurrency = json.at("concurrency").get<std::size_t>();
        c.target_count = json.at("targets").at("count").get<std::size_t>();
        c.target_tools = json.at("targets").at("tools").get<std::vector<std::string>>();

        const auto& s = json.at("sampler");
        c.sampler.max_steps = s.at("max_steps").get<std::size_t>();
        c.sampler.retry_budget = s.at("retry_budget").get<std::size_t>();
        c.sampler.arg_redraws = s.at("arg_redraws").get<std::size_t>();
        c.m_distribution = s.at("m_distribution").get<std::vector<double>>();
        c.m_target = s.at("m_target").get<std::size_t>();

        const auto& t = json.at("turns");
        c.single_turn_fraction = t.at("single_turn_fraction").get<double>();
        c.max_turns = t.at("max_turns").get<std::size_t>();
        c.step_grouping = t.at("step_grouping").get<std::string>();

        const auto& r = json.at("refinement");
        c.refinement.k_max = r.at("k_max").get<std::size_t>();
        c.refinement.prune_failed_attempts = r.at("prune_failed_attempts").get<bool>();
        c.refinement.include_correction_narrative = r.at("include_correction_narrative").get<bool>();

        c.evolution.banned_cues = json.at("evolution").at("banned_cues").get<std::vector<std::string>>();
        c.evolution.emit_easy_query = json.at("evolution").at("emit_easy_query").get<bool>();
        c.assembly.closing_summary = json.at("assembly").at("closing_summary").get<bool>();

        const auto& se = json.at("self_eval");
        c.self_eval_enabled = se.at("enabled").get<bool>();
        c.self_eval_tools = se.at("tools").get<std::vector<std::string>>();
        for (std::size_t i = 0; i < se.at("models").size(); ++i)
            c.self_eval_models.push_back(
                parse_agent(se.at("models")[i], "self_eval.models[" + std::to_string(i) + "]", base));
    }
    catch (const Json::exception& e)
    {
        throw ConfigError(std::string("config: ") + e.what());
    }

    c.tool_maker = parse_agent(agents.value("tool_maker", Json::object()), "tool_maker", base);
    c.query_generator = parse_agent(agents.value("query_generator", Json::object()), "query_generator", base);
    c.reasoner = parse_agent(agents.value("reasoner", Json::object()), "reasoner", base);
    c.verifier = parse_agent(agents.value("verifier", Json::object()), "verifier", base);
    c.refinement.reasoner = c.reasoner.params;
    c.refinement.verifier = c.verifier.params;

    if (c.refinement.k_max < 1)
        throw ConfigError("refinement.k_max must be >= 1");
    if (c.m_distribution.size() != 8)
        throw ConfigError("sampler.m_distribution must have 8 entries (m = 1..8)");
    double sum = 0.0;
    for (double p: c.m_distribution)
    {
        if (!(p >= 0.0))
            throw ConfigError("sampler.m_distribution entries must be >= 0");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw ConfigError("sampler.m_distribution must sum to 1");
    if (c.m_target > c.sampler.max_steps)
        throw ConfigError("sampler.m_target exceeds sampler.max_steps");
    if (c.sampler.max_steps < 1 || c.sampler.retry_budget < 1)
        throw ConfigError("sampler.max_steps and sampler.retry_budget must be >= 1");
    if (!(c.single_turn_fraction >= 0.0 && c.single_turn_fraction <= 1.0))
        throw ConfigError("turns.single_turn_fraction must lie in [0, 1]");
    if (c.max_turns < 1)
        throw ConfigError("turns.max_turns must be >= 1");
    if (c.step_grouping != "single" && c.step_grouping != "same_tool")
        throw ConfigError("turns.step_grouping must be single or same_tool");
    if (c.concurrency < 1)
        throw ConfigError("concurrency must be >= 1");
    if (c.self_eval_enabled && c.self_eval_models.empty())
        throw ConfigError("self_eval.models is empty");
    return c;
}

PipelineConfig load_config(const std::filesystem::path& path, const std::map<std::string, std::string>& overrides)
{
    Json json;
    try
    {
        json = Json::parse(read_text(path));
    }
    catch (const Json::exception& e)
    {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    catch (const IoError& e)
    {
        throw ConfigError(e.what());
    }
    for (const auto& [key, value]: overrides)
        set_dotted(json, key, value);
    return PipelineConfig::from_json(json, path.parent_path());
}

void EventLog::emit(const std::string& event, Json fields) const
{
    if (_sink == nullptr)
        return;
    fields["event"] = event;
    std::lock_guard lock(_mutex);
    *_sink << fields.dump() << '\n';
    _sink->flush();
}

BackendPtr make_backend(const AgentConfig& config, std::shared_ptr<const AnswerKey> key)
{
    BackendPtr backend;
    if (config.backend == "simulated")
    {
        backend = std::make_shared<SimulatedAgent>(std::move(key), config.simulated);
    }
    else if (config.backend == "replay")
    {
        backend = std::make_shared<ReplayBackend>(config.cassette);
    }
    else if (config.backend == "live")
    {
        auto options = http_options_from_env();
        if (!config.endpoint.empty())
            options.endpoint = config.endpoint;
        if (options.endpoint.empty())
            throw ConfigError(config.name + ": live backend needs an endpoint (config or HARDGEN_ENDPOINT)");
        options.max_retries = config.max_retries;
        options.requests_per_second = config.requests_per_second;
        backend = std::make_shared<HttpBackend>(options);
    }
    else
    {
        throw ConfigError("unknown backend " + config.backend);
    }
    return config.record_to.empty() ? backend : record(backend, config.record_to);
}

Json SynthItem::to_json() const
{
    Json segs = Json::array();
    for (const auto& s: segments)
        segs.push_back({{"first_step", s.first_step}, {"query", s.query.to_json()}});
    return {{"trace_id", trace.trace_id}, {"step_sizes", step_sizes}, {"segments", std::move(segs)}};
}

double RunReport::retained_fraction() const
{
    return refinement.attempted == 0 ? 0.0
                                     : static_cast<double>(refinement.retained)
                                           / static_cast<double>(refinement.attempted);
}

Json RunReport::to_json() const
{
    auto counts = [](const StageCounts& c, bool refine) {
        Json j = {{"attempted", c.attempted}, {"rejected", c.rejected}};
        if (refine)
        {
            j["retained"] = c.retained;
            j["discarded"] = c.discarded;
        }
        else
        {
            j["ok"] = c.ok;
        }
        return j;
    };
    return {
        {"self_eval", {{"tools", self_eval_tools}, {"challenging", challenging}, {"needs_rerun", needs_rerun}}},
        {"sampling", counts(sampling, false)},
        {"evolution", counts(evolution, false)},
        {"refinement", counts(refinement, true)},
        {"retained_fraction", retained_fraction()},
        {"stats", stats.to_json()},
    };
}

Pipeline::Pipeline(PipelineConfig config, const EventLog* log, BackendFactory factory)
    : _config(std::move(config)), _log(log), _key(std::make_shared<AnswerKey>()), _factory(std::move(factory))
{
    // Unreadable or malformed inputs named by the config are config errors.
    try
    {
        auto ingest = ingest_schemas(_config.schema_path);
        for (const auto& r: ingest.rejects)
            this->log("schema_reject", {{"line", r.line}, {"reason", r.reason}});
        _registry = std::move(ingest.registry);
        if (_registry.count() == 0)
            throw ConfigError("no tools ingested from " + _config.schema_path.string());
        _graph = std::make_unique<GraphOwner>(load_graph(_config.graph_path, _registry));
        auto fixtures = _config.fixtures_path.empty() ? FixtureTable {} : FixtureTable::load(_config.fixtures_path);
        _env = std::make_unique<Environment>(_registry, std::move(fixtures));
        _prompts = _config.prompts_dir.empty() ? PromptLibrary::embedded()
                                               : PromptLibrary::with_overrides(_config.prompts_dir);
    }
    catch (const ConfigError&)
    {
        throw;
    }
    catch (const Error& e)
    {
        throw ConfigError(e.what());
    }
    _tool_maker = _factory(_config.tool_maker, _key);
    _query_generator = _factory(_config.query_generator, _key);
    _reasoner = _factory(_config.reasoner, _key);
    _verifier = _factory(_config.verifier, _key);
}

void Pipeline::log(const std::string& event, Json fields) const
{
    if (_log != nullptr)
        _log->emit(event, std::move(fields));
}

std::vector<FailureVerdict> Pipeline::self_eval()
{
    auto tools = _config.self_eval_tools.empty() ? _registry.ids() : _config.self_eval_tools;
    for (const auto& t: tools)
        if (!_registry.contains(t))
            throw ConfigError("self_eval.tools names unknown tool " + t);

    std::vector<EvalModel> models;
    for (const auto& m: _config.self_eval_models)
        models.push_back({m.name, _factory(m, _key), m.params});

    const auto graph = _graph->snapshot();
    EvalBuilders builders {_tool_maker.get(), _query_generator.get(), _config.tool_maker.params,
                           _config.query_generator.params, _config.evolution};
    SamplerOptions sampler = _config.sampler;

    std::vector<std::optional<EvalItem>> items(tools.size());
    parallel_for(tools.size(), _config.concurrency, [&](std::size_t i) {
        try
        {
            items[i] = build_eval_item(graph, *_env, tools[i], mix_seed(_config.seed, "self-eval/" + tools[i]),
                                       builders, _prompts, sampler);
        }
        catch (const std::exception& e)
        {
            if (!is_item_rejection(e))
                throw StageError("self-eval", tools[i], e.what());
            log("self_eval_build_rejected", {{"tool", tools[i]}, {"reason", e.what()}});
        }
    });
    for (const auto& item: items)
        if (item)
        {
            AnswerKey::Steps steps;
            std::vector<std::string> responses;
            for (const auto& s: item->trace.steps)
            {
                steps.push_back({s.call});
                responses.push_back(render_feedback({s.call}, {s.feedback}));
            }
            _key->add({item->query}, std::move(steps), std::move(responses));
        }

    std::vector<std::optional<FailureVerdict>> verdicts(tools.size());
    parallel_for(tools.size(), _config.concurrency, [&](std::size_t i) {
        if (!items[i])
            return;
        verdicts[i] = evaluate_tool(*items[i], models, graph, *_env, _prompts);
    });

    std::vector<FailureVerdict> out;
    for (auto& v: verdicts)
        if (v)
        {
            log("self_eval_verdict", v->to_json());
            out.push_back(std::move(*v));
        }
    std::set<std::string> ids;
    for (const auto& v: out)
        if (v.challenging && !v.needs_rerun)
            ids.insert(v.tool);
    _graph->add_failure_tools(ids);
    return out;
}

std::vector<std::pair<std::string, std::size_t>> Pipeline::plan_targets() const
{
    const auto graph = _graph->snapshot();
    std::vector<std::string> failure(graph.failure_set().begin(), graph.failure_set().end());
    const auto count = _config.target_count;
    if (_config.target_tools.empty() && failure.empty())
        throw ConfigError("the failure set is empty; enable self_eval or flag tools with is_failure");
    for (const auto& t: _config.target_tools)
        if (!graph.has_tool(t))
            throw ConfigError("targets.tools names unknown tool " + t);

    std::vector<std::pair<std::string, std::size_t>> plan;
    for (std::size_t i = 0; i < count; ++i)
    {
        Rng rng(mix_seed(mix_seed(_config.seed, i), "target"));
        std::size_t m = _config.m_target;
        if (m == 0)
        {
            const double u = rng.uniform01();
            double acc = 0.0;
            m = _config.m_distribution.size();
            for (std::size_t k = 0; k < _config.m_distribution.size(); ++k)
            {
                acc += _config.m_distribution[k];
                if (u < acc)
                {
                    m = k + 1;
                    break;
                }
            }
            m = std::min(m, _config.sampler.max_steps);
        }
        if (!_config.target_tools.empty())
        {
            plan.emplace_back(_config.target_tools[i % _config.target_tools.size()], m);
            continue;
        }
        std::vector<std::string> fitting;
        for (const auto& t: failure)
            if (graph.ancestor_count(t) + 1 <= m)
                fitting.push_back(t);
        const auto& pool = fitting.empty() ? failure : fitting;
        plan.emplace_back(pool[rng.uniform_index(pool.size())], m);
    }
    return plan;
}

SampleResult Pipeline::sample()
{
    const auto plan = plan_targets();
    const auto graph = _graph->snapshot();
    SamplerOptions options = _config.sampler;
    options.allow_any_target = !_config.target_tools.empty();

    std::vector<std::optional<HardTrace>> traces(plan.size());
    parallel_for(plan.size(), _config.concurrency, [&](std::size_t i) {
        const auto& [target, m] = plan[i];
        try
        {
            traces[i] = sample_trace(graph, *_env, target, m, mix_seed(mix_seed(_config.seed, i), "trace"), options);
        }
        catch (const std::exception& e)
        {
            if (!is_item_rejection(e))
                throw StageError("sample", "item " + std::to_string(i), e.what());
            log("sample_rejected", {{"item", i}, {"target", target}, {"reason", e.what()}});
        }
    });

    SampleResult result;
    result.counts.attempted = plan.size();
    for (auto& t: traces)
    {
        if (!t)
        {
            ++result.counts.rejected;
            continue;
        }
        // Graph feedback is applied in item order so the final graph is independent of scheduling.
        auto session = _env->new_session(t->seed);
        const auto snapshot = _graph->snapshot();
        for (const auto& step: t->steps)
        {
            auto fb = _env->execute(session, step.call, snapshot);
            if (fb.ok)
                _graph->update(step.call, fb, session);
        }
        ++result.counts.ok;
        log("trace_sampled", {{"trace_id", t->trace_id}, {"target", t->target}, {"m", t->m()}});
        result.traces.push_back(std::move(*t));
    }
    return result;
}

std::vector<std::size_t> Pipeline::step_sizes(const HardTrace& trace) const
{
    std::vector<std::size_t> sizes;
    for (std::size_t i = 0; i < trace.steps.size(); ++i)
    {
        if (_config.step_grouping == "same_tool" && i > 0
            && trace.steps[i].call.tool_id == trace.steps[i - 1].call.tool_id)
            ++sizes.back();
        else
            sizes.push_back(1);
    }
    return sizes;
}

std::vector<std::size_t> Pipeline::segment_starts(std::size_t steps, std::uint64_t seed) const
{
    Rng rng(mix_seed(seed, "turns"));
    const auto limit = std::min(steps, _config.max_turns);
    // One-step traces are single-turn by necessity; the rest are single-turn
    // with the probability that brings the overall share to single_turn_fraction.
    const double forced = _config.m_target == 0 ? _config.m_distribution.front() : (_config.m_target == 1 ? 1.0 : 0.0);
    const double single = forced >= 1.0 ? 1.0 : std::clamp((_config.single_turn_fraction - forced) / (1.0 - forced), 0.0, 1.0);
    std::size_t turns = 1;
    if (limit >= 2 && rng.uniform01() >= single)
        turns = static_cast<std::size_t>(rng.uniform_int(2, static_cast<std::int64_t>(limit)));
    std::vector<std::size_t> starts;
    for (std::size_t k = 0; k < turns; ++k)
        starts.push_back(k * steps / turns);
    return starts;
}

SynthResult Pipeline::synth(const std::vector<HardTrace>& traces)
{
    const auto graph = _graph->snapshot();
    SynthResult result;

    // Phase II: one advanced tool and hard query per user turn.
    std::vector<std::optional<SynthItem>> evolved(traces.size());
    parallel_for(traces.size(), _config.concurrency, [&](std::size_t i) {
        const auto& trace = traces[i];
        try
        {
            if (trace.steps.empty())
                throw Error("empty trace");
            SynthItem item {trace, {}, step_sizes(trace)};
            const auto starts = segment_starts(item.step_sizes.size(), trace.seed);
            std::vector<std::size_t> call_offset {0};
            for (auto s: item.step_sizes)
                call_offset.push_back(call_offset.back() + s);
            for (std::size_t k = 0; k < starts.size(); ++k)
            {
                const auto end_step = k + 1 < starts.size() ? starts[k + 1] : item.step_sizes.size();
                const auto part = starts.size() == 1 ? trace
                                                     : sub_trace(trace, call_offset[starts[k]], call_offset[end_step], k);
                auto adv = make_advanced_tool(*_tool_maker, part, _registry, _prompts, _config.tool_maker.params);
                auto query = make_hard_query(*_query_generator, adv, part, _prompts, _config.query_generator.params,
                                             _config.evolution);
                item.segments.push_back({std::move(query), starts[k]});
            }
            evolved[i] = std::move(item);
        }
        catch (const std::exception& e)
        {
            if (!is_item_rejection(e))
                throw StageError("evolve", trace.trace_id, e.what());
            log("evolve_rejected", {{"trace_id", trace.trace_id}, {"reason", e.what()}});
        }
    });

    result.evolution.attempted = traces.size();
    for (auto& item: evolved)
    {
        if (!item)
        {
            ++result.evolution.rejected;
            continue;
        }
        ++result.evolution.ok;
        AnswerKey::Steps steps;
        std::vector<std::string> responses;
        std::size_t offset = 0;
        for (auto size: item->step_sizes)
        {
            std::vector<Call> calls;
            std::vector<Feedback> feedback;
            for (std::size_t j = offset; j < offset + size; ++j)
            {
                calls.push_back(item->trace.steps[j].call);
                feedback.push_back(item->trace.steps[j].feedback);
            }
            responses.push_back(render_feedback(calls, feedback));
            steps.push_back(std::move(calls));
            offset += size;
        }
        std::vector<std::string> queries;
        for (const auto& seg: item->segments)
            queries.push_back(seg.query.text);
        _key->add(std::move(queries), std::move(steps), std::move(responses));
        result.items.push_back(std::move(*item));
    }

    // Phase III.
    const auto n = result.items.size();
    std::vector<std::optional<Json>> dumps(n);
    std::vector<std::optional<VerifiedTrajectorySeed>> seeds(n);
    std::vector<int> outcome(n, 0); // 1 retained, 2 discarded, 3 rejected
    parallel_for(n, _config.concurrency, [&](std::size_t i) {
        const auto& item = result.items[i];
        try
        {
            RefinementSession session(item.segments, item.trace, graph, *_env, _prompts, _config.refinement,
                                      item.step_sizes);
            try
            {
                seeds[i] = session.run(*_reasoner, *_verifier);
                outcome[i] = seeds[i] ? 1 : 2;
            }
            catch (const std::exception& e)
            {
                if (!is_item_rejection(e))
                    throw;
                outcome[i] = 3;
                log("refine_rejected", {{"trace_id", item.trace.trace_id}, {"reason", e.what()}});
            }
            dumps[i] = session.dump();
        }
        catch (const std::exception& e)
        {
            if (outcome[i] == 0 && is_item_rejection(e))
            {
                outcome[i] = 3;
                log("refine_rejected", {{"trace_id", item.trace.trace_id}, {"reason", e.what()}});
                return;
            }
            throw StageError("refine", item.trace.trace_id, e.what());
        }
    });

    result.refinement.attempted = n;
    for (std::size_t i = 0; i < n; ++i)
    {
        if (dumps[i])
            result.sessions.push_back(std::move(*dumps[i]));
        switch (outcome[i])
        {
        case 1:
            ++result.refinement.retained;
            result.trajectories.push_back(assemble(*seeds[i], _config.assembly));
            break;
        case 2:
            ++result.refinement.discarded;
            break;
        default:
            ++result.refinement.rejected;
            break;
        }
    }
    log("synth_done", {{"retained", result.refinement.retained},
                       {"discarded", result.refinement.discarded},
                       {"rejected", result.refinement.rejected}});
    return result;
}

RunReport Pipeline::run()
{
    RunReport report;
    const auto& out = _config.output_dir;
    std::filesystem::create_directories(out);

    if (_config.self_eval_enabled)
    {
        log("stage", {{"name", "self-eval"}});
        const auto verdicts = self_eval();
        std::vector<Json> rows;
        for (const auto& v: verdicts)
        {
            rows.push_back(v.to_json());
            report.challenging += v.challenging ? 1 : 0;
            report.needs_rerun += v.needs_rerun ? 1 : 0;
        }
        report.self_eval_tools = verdicts.size();
        write_jsonl(out / "verdicts.jsonl", rows);
    }

    log("stage", {{"name", "sample"}});
    const auto sampled = sample();
    report.sampling = sampled.counts;
    std::vector<Json> trace_rows;
    for (const auto& t: sampled.traces)
        trace_rows.push_back(trace_to_json(t));
    write_jsonl(out / "traces.jsonl", trace_rows);
    write_text(out / "graph.json", graph_to_json(_graph->snapshot()).dump(2) + "\n");

    log("stage", {{"name", "synth"}});
    const auto synth_result = synth(sampled.traces);
    report.evolution = synth_result.evolution;
    report.refinement = synth_result.refinement;
    std::vector<Json> query_rows;
    for (const auto& item: synth_result.items)
        query_rows.push_back(item.to_json());
    write_jsonl(out / "queries.jsonl", query_rows);
    write_jsonl(out / "sessions.jsonl", synth_result.sessions);
    export_jsonl(synth_result.trajectories, out / "trajectories.jsonl");
    export_sft(synth_result.trajectories, out / "sft.jsonl");
    export_rl(synth_result.trajectories, out / "rl.jsonl");

    report.stats = stats(synth_result.trajectories);
    write_text(out / "stats.json", report.stats.to_json().dump(2) + "\n");
    write_text(out / "report.json", report.to_json().dump(2) + "\n");
    log("run_done", report.to_json());
    return report;
}

} // namespace hardgen
