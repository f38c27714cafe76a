// SPDX-License-Identifier: Apache-2.0
#include "hardgen/trace_sampler.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace hardgen
{

namespace
{

/// Retryable failure of one sampling attempt.
struct AttemptFailed
{
    std::string reason;
};

std::string trace_id_for(const std::string& target, std::uint64_t seed)
{
    static constexpr char hex[] = "0123456789abcdef";
    auto h = mix_seed(seed, target);
    std::string id = "tr-";
    for (int i = 0; i < 12; ++i, h >>= 4)
        id.push_back(hex[h & 0xf]);
    return id;
}

bool called_before(const EnvSession& session, const Call& call)
{
    for (const auto& entry: session.history)
        if (entry.feedback.ok && entry.call == call)
            return true;
    return false;
}

/// Values already passed to `param` of `tool` in this session.
std::set<std::string> used_values(const EnvSession& session, const std::string& tool, const std::string& param)
{
    std::set<std::string> out;
    for (const auto& entry: session.history)
        if (entry.call.tool_id == tool)
            if (auto it = entry.call.args.find(param); it != entry.call.args.end())
                out.insert(canonical_value(*it));
    return out;
}

std::optional<Json> draw_from_constraint(const ParamSpec& param, const ToolSpec& tool, const EnvSession& session,
                                         Rng& rng)
{
    const auto* constraint = param.constraint ? &*param.constraint : nullptr;
    if (constraint != nullptr && constraint->is_enumerated())
    {
        std::vector<Json> members;
        for (const auto& v: constraint->values)
            if (value_matches(v, param.kind, constraint))
                members.push_back(v);
        if (members.empty())
            return std::nullopt;
        const auto used = used_values(session, tool.id, param.name);
        std::vector<Json> fresh;
        for (const auto& v: members)
            if (!used.contains(canonical_value(v)))
                fresh.push_back(v);
        const auto& pool = fresh.empty() ? members : fresh;
        return std::optional<Json>(std::in_place, pool[rng.uniform_index(pool.size())]);
    }

    const bool numeric = param.kind == ParamKind::Integer || param.kind == ParamKind::Float;
    if (numeric && constraint != nullptr && (constraint->min || constraint->max))
    {
        const double lo = constraint->min ? *constraint->min : *constraint->max - 100.0;
        const double hi = constraint->max ? *constraint->max : *constraint->min + 100.0;
        const double mid = (lo + hi) / 2.0;
        const double jitter = (hi - lo) / 4.0;
        if (param.kind == ParamKind::Integer)
        {
            auto a = static_cast<std::int64_t>(std::ceil(mid - jitter));
            auto b = static_cast<std::int64_t>(std::floor(mid + jitter));
            a = std::max(a, static_cast<std::int64_t>(std::ceil(lo)));
            b = std::min(b, static_cast<std::int64_t>(std::floor(hi)));
            if (a > b)
                return std::nullopt;
            return rng.uniform_int(a, b);
        }
        double x = mid + (rng.uniform01() * 2.0 - 1.0) * jitter;
        x = std::clamp(std::round(x * 100.0) / 100.0, lo, hi);
        return x;
    }

    if (param.kind == ParamKind::Boolean)
        return rng.bernoulli(0.5);
    return std::nullopt;
}

/// Distinct payload values of `producer.field` in chronological order of
/// their latest occurrence, restricted to values the consumer param admits.
std::vector<Json> linked_values(const EnvSession& session, const ParamLink& link, const ParamSpec& param)
{
    const auto* constraint = param.constraint ? &*param.constraint : nullptr;
    std::vector<Json> newest_first;
    std::set<std::string> seen;
    for (auto it = session.history.rbegin(); it != session.history.rend(); ++it)
    {
        if (!it->feedback.ok || it->call.tool_id != link.producer || !it->feedback.payload.is_object())
            continue;
        auto field = it->feedback.payload.find(link.output_field);
        if (field == it->feedback.payload.end() || !value_matches(*field, param.kind, constraint))
            continue;
        if (seen.insert(canonical_value(*field)).second)
            newest_first.push_back(*field);
    }
    return {newest_first.rbegin(), newest_first.rend()};
}

} // namespace

std::vector<Call> HardTrace::calls() const
{
    std::vector<Call> out;
    out.reserve(steps.size());
    for (const auto& s: steps)
        out.push_back(s.call);
    return out;
}

Json trace_to_json(const HardTrace& trace)
{
    Json steps = Json::array();
    for (const auto& s: trace.steps)
        steps.push_back({{"tool_id", s.call.tool_id},
                         {"args", s.call.args},
                         {"ok", s.feedback.ok},
                         {"payload", s.feedback.payload}});
    return {{"trace_id", trace.trace_id}, {"target", trace.target}, {"seed", trace.seed}, {"steps", std::move(steps)}};
}

HardTrace trace_from_json(const Json& json)
{
    HardTrace trace;
    trace.trace_id = json.at("trace_id").get<std::string>();
    trace.target = json.at("target").get<std::string>();
    trace.seed = json.at("seed").get<std::uint64_t>();
    for (const auto& s: json.at("steps"))
    {
        Call call {s.at("tool_id").get<std::string>(), s.value("args", Json::object())};
        auto feedback = s.value("ok", true) ? Feedback::success(s.at("payload"))
                                            : Feedback::failure(s.value("error", std::string("error")));
        trace.steps.push_back({std::move(call), std::move(feedback)});
    }
    return trace;
}

std::string sample_next(const ApiGraph& graph, const std::string& target, const std::set<std::string>& called,
                        Rng& rng)
{
    const auto legal = legal_set(graph, called);
    if (legal.empty())
        throw SamplingError("dead end");

    if (called.contains(target))
    {
        auto it = legal.begin();
        std::advance(it, static_cast<std::ptrdiff_t>(rng.uniform_index(legal.size())));
        return *it;
    }
    if (legal.contains(target))
        return target;

    const auto dist = graph.distances_to(target);
    const std::string* best = nullptr;
    std::size_t best_dist = 0;
    const std::string* best_called = nullptr;
    std::size_t best_called_dist = 0;
    // `legal` iterates in lexicographic order, so strict < keeps the smallest id on ties.
    for (const auto& tool: legal)
    {
        auto it = dist.find(tool);
        if (it == dist.end())
            continue;
        if (!called.contains(tool))
        {
            if (best == nullptr || it->second < best_dist)
                best = &tool, best_dist = it->second;
        }
        else if (best_called == nullptr || it->second < best_called_dist)
        {
            best_called = &tool, best_called_dist = it->second;
        }
    }
    if (best != nullptr)
        return *best;
    if (best_called != nullptr)
        return *best_called;
    throw SamplingError("target unreachable");
}

ArgPlan plan_args(const ApiGraph& graph, const ToolSpec& tool, const EnvSession& session, Rng& rng)
{
    ArgPlan plan;

    // Group linked params by the (producer, field) they read, in declaration order.
    std::map<std::pair<std::string, std::string>, std::vector<const ParamSpec*>> groups;
    std::vector<std::pair<std::string, std::string>> group_order;
    std::set<std::string> linked;
    for (const auto& param: tool.params)
    {
        for (const auto& link: graph.links())
        {
            if (link.consumer != tool.id || link.input_param != param.name)
                continue;
            if (linked_values(session, link, param).empty())
                continue;
            std::pair key {link.producer, link.output_field};
            auto [it, inserted] = groups.try_emplace(key);
            if (inserted)
                group_order.push_back(key);
            it->second.push_back(&param);
            linked.insert(param.name);
            break;
        }
    }

    for (const auto& key: group_order)
    {
        const auto& params = groups.at(key);
        const ParamLink probe {key.first, key.second, tool.id, params.front()->name, params.front()->kind, {}};
        // Values admitted by each param may differ under constraints; use the first param's view.
        auto values = linked_values(session, probe, *params.front());
        if (values.size() < params.size())
        {
            if (!plan.shortfall)
                plan.shortfall = key.first;
            for (const auto* p: params)
                plan.args[p->name] = values.back();
            continue;
        }
        const auto offset = values.size() - params.size();
        for (std::size_t i = 0; i < params.size(); ++i)
            plan.args[params[i]->name] = values[offset + i];
    }

    for (const auto& param: tool.params)
    {
        if (linked.contains(param.name))
            continue;
        if (!param.required)
            continue;
        auto value = draw_from_constraint(param, tool, session, rng);
        if (!value)
            throw Error("unfillable param '" + param.name + "' of tool " + tool.id);
        plan.args[param.name] = std::move(*value);
    }
    return plan;
}

Json choose_args(const ApiGraph& graph, const ToolSpec& tool, const EnvSession& session, Rng& rng)
{
    return plan_args(graph, tool, session, rng).args;
}

HardTrace sample_trace(const ApiGraph& graph, const Environment& env, const std::string& target,
                       std::size_t m_target, std::uint64_t seed, const SamplerOptions& options,
                       const StepObserver& observer)
{
    if (!graph.has_tool(target) || env.registry().find(target) == nullptr)
        throw SamplingError("unknown target: " + target);
    if (!options.allow_any_target && !graph.failure_set().contains(target))
        throw SamplingError("target not in failure set: " + target);
    if (m_target < 1 || m_target > options.max_steps)
        throw SamplingError("m_target out of range: " + std::to_string(m_target));

    const auto& registry = env.registry();
    std::string last_failure;
    std::vector<TraceStep> partial;

    for (std::size_t attempt = 0; attempt <= options.retry_budget; ++attempt)
    {
        const auto attempt_seed = attempt == 0 ? seed : mix_seed(seed, attempt);
        auto session = env.new_session(attempt_seed);
        Rng rng(mix_seed(attempt_seed, std::string_view("sampler")));
        std::vector<TraceStep> steps;
        bool target_done = false;

        auto execute = [&](const Call& call) {
            if (steps.size() >= options.max_steps)
                throw AttemptFailed {"step limit reached before target"};
            auto feedback = env.execute(session, call, graph);
            if (!feedback.ok)
                throw AttemptFailed {"execution error: " + feedback.error};
            steps.push_back({call, feedback});
            if (observer)
                observer(call, feedback, session);
            if (call.tool_id == target)
                target_done = true;
        };

        auto tool_spec = [&](const std::string& id) -> const ToolSpec& {
            const auto* spec = registry.find(id);
            if (spec == nullptr)
                throw SamplingError("graph tool missing from registry: " + id, steps);
            return *spec;
        };

        // Executes `tool` with fresh args, re-running producers whose values run short.
        auto run_with_supply = [&](const ToolSpec& tool) {
            for (std::size_t redraw = 0; redraw <= options.arg_redraws; ++redraw)
            {
                auto plan = plan_args(graph, tool, session, rng);
                while (plan.shortfall)
                {
                    const auto& producer = tool_spec(*plan.shortfall);
                    bool supplied = false;
                    for (std::size_t r = 0; r <= options.arg_redraws && !supplied; ++r)
                    {
                        auto supply = plan_args(graph, producer, session, rng);
                        Call call {producer.id, supply.args};
                        if (supply.shortfall || called_before(session, call))
                            continue;
                        execute(call);
                        supplied = true;
                    }
                    if (!supplied)
                        throw AttemptFailed {"cannot supply distinct values from " + producer.id};
                    plan = plan_args(graph, tool, session, rng);
                }
                Call call {tool.id, plan.args};
                if (!called_before(session, call))
                {
                    execute(call);
                    return;
                }
            }
            throw AttemptFailed {"no fresh arguments for " + tool.id};
        };

        try
        {
            while (!(target_done && steps.size() >= m_target))
            {
                if (steps.size() >= options.max_steps)
                {
                    if (target_done)
                        break;
                    throw AttemptFailed {"step limit reached before target"};
                }

                if (!target_done)
                {
                    run_with_supply(tool_spec(sample_next(graph, target, session.called, rng)));
                    continue;
                }

                // Past the target: extend with fresh legal calls, stop when none is possible.
                bool extended = false;
                for (std::size_t pick = 0; pick <= options.arg_redraws && !extended; ++pick)
                {
                    const auto& tool = tool_spec(sample_next(graph, target, session.called, rng));
                    ArgPlan plan;
                    try
                    {
                        plan = plan_args(graph, tool, session, rng);
                    }
                    catch (const Error&)
                    {
                        continue; // unfillable tool; pick another
                    }
                    Call call {tool.id, plan.args};
                    if (plan.shortfall || called_before(session, call))
                        continue;
                    execute(call);
                    extended = true;
                }
                if (!extended)
                    break;
            }

            HardTrace trace;
            trace.trace_id = trace_id_for(target, seed);
            trace.target = target;
            trace.seed = attempt_seed;
            trace.steps = std::move(steps);
            return trace;
        }
        catch (const AttemptFailed& failure)
        {
            last_failure = failure.reason;
            partial = std::move(steps);
        }
        catch (const SamplingError& e)
        {
            throw SamplingError(e.what(), e.partial.empty() ? std::move(steps) : e.partial);
        }
        catch (const Error& e)
        {
            throw SamplingError(e.what(), std::move(steps));
        }
    }
    throw SamplingError("retry budget exhausted: " + last_failure, std::move(partial));
}

HardTrace sample_trace(ApiGraph& graph, const Environment& env, const std::string& target, std::size_t m_target,
                       std::uint64_t seed, const SamplerOptions& options)
{
    return sample_trace(static_cast<const ApiGraph&>(graph), env, target, m_target, seed, options,
                        [&graph](const Call& call, const Feedback& feedback, const EnvSession& session) {
                            update_from_feedback(graph, call, feedback, session);
                        });
}

bool replay_trace(const HardTrace& trace, const ApiGraph& graph, const Environment& env)
{
    auto session = env.new_session(trace.seed);
    for (const auto& step: trace.steps)
    {
        auto feedback = env.execute(session, step.call, graph);
        if (!feedback.ok || !(feedback == step.feedback))
            return false;
    }
    return true;
}

} // namespace hardgen
