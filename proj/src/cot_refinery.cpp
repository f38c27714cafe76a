// SPDX-License-Identifier: Apache-2.0
#include "hardgen/cot_refinery.hpp"

#include <set>

namespace hardgen
{

namespace
{

constexpr std::string_view kGenericHint =
    "Re-examine which tools the query needs and how the outputs of earlier calls feed later parameters.";

std::string field_or(const Json& json, const char* key)
{
    auto it = json.find(key);
    if (it == json.end() || it->is_null())
        return {};
    return it->is_string() ? it->get<std::string>() : it->dump();
}

std::optional<std::string_view> first_object(std::string_view text)
{
    const auto start = text.find('{');
    if (start == std::string_view::npos)
        return std::nullopt;
    int depth = 0;
    bool in_string = false;
    for (auto i = start; i < text.size(); ++i)
    {
        const char c = text[i];
        if (in_string)
        {
            if (c == '\\')
                ++i;
            else if (c == '"')
                in_string = false;
            continue;
        }
        if (c == '"')
            in_string = true;
        else if (c == '{')
            ++depth;
        else if (c == '}' && --depth == 0)
            return text.substr(start, i - start + 1);
    }
    return std::nullopt;
}

bool mentions(std::string_view text, const std::vector<std::string>& needles)
{
    for (const auto& n: needles)
        if (text.find(n) != std::string_view::npos)
            return true;
    return false;
}

std::vector<std::string> truth_renderings(const std::vector<Call>& truth)
{
    std::vector<std::string> out;
    for (const auto& c: truth)
        out.push_back(render_call(c));
    return out;
}

} // namespace

Json Diagnosis::to_json() const
{
    return {
        {"error_type", error_type},
        {"error_location", error_location},
        {"root_cause", root_cause},
        {"corrective_hint", corrective_hint},
        {"should_reconsider", should_reconsider},
    };
}

Diagnosis Diagnosis::from_json(const Json& json)
{
    Diagnosis d;
    d.error_type = field_or(json, "error_type");
    d.error_location = field_or(json, "error_location");
    d.root_cause = field_or(json, "root_cause");
    d.corrective_hint = field_or(json, "corrective_hint");
    if (auto it = json.find("should_reconsider"); it != json.end())
    {
        if (it->is_array())
        {
            for (const auto& v: *it)
                d.should_reconsider.push_back(v.is_string() ? v.get<std::string>() : v.dump());
        }
        else if (it->is_string())
        {
            d.should_reconsider.push_back(it->get<std::string>());
        }
    }
    return d;
}

std::string Diagnosis::render() const
{
    std::string out;
    auto line = [&](std::string_view label, const std::string& value) {
        if (!value.empty())
            out += std::string(label) + ": " + value + "\n";
    };
    line("Error type", error_type);
    line("Error location", error_location);
    line("Root cause", root_cause);
    line("Corrective hint", corrective_hint);
    std::string reconsider;
    for (const auto& s: should_reconsider)
        reconsider += (reconsider.empty() ? "" : "; ") + s;
    line("Reconsider", reconsider);
    return trim(out);
}

Diagnosis format_diagnosis(const std::string& problem)
{
    return {"format", "output", problem,
            "Reply with exactly one <think> block followed by exactly one <tool_call> block holding a bracketed "
            "list of calls.",
            {"output format"}};
}

bool leaks_answer(const Diagnosis& d, const std::vector<Call>& truth)
{
    const auto needles = truth_renderings(truth);
    if (mentions(d.error_type, needles) || mentions(d.error_location, needles) || mentions(d.root_cause, needles)
        || mentions(d.corrective_hint, needles))
        return true;
    for (const auto& s: d.should_reconsider)
        if (mentions(s, needles))
            return true;
    return false;
}

Diagnosis sanitize_diagnosis(const Diagnosis& d, const std::vector<Call>& truth)
{
    const auto needles = truth_renderings(truth);
    Diagnosis out;
    out.error_type = mentions(d.error_type, needles) ? "incorrect call" : d.error_type;
    out.error_location = mentions(d.error_location, needles) ? "tool call" : d.error_location;
    out.corrective_hint = out.error_type.empty() ? std::string(kGenericHint)
                                                 : out.error_type + " at " + out.error_location;
    return out;
}

Diagnosis parse_diagnosis(std::string_view reply)
{
    auto object = first_object(reply);
    if (object)
    {
        try
        {
            auto d = Diagnosis::from_json(Json::parse(*object));
            if (!trim(d.corrective_hint).empty())
                return d;
        }
        catch (const Json::exception&)
        {
        }
    }
    return {"verifier-format", "verifier output", "the verifier reply could not be parsed",
            std::string(kGenericHint), {}};
}

std::string render_tool_descriptions(const std::vector<ToolSpec>& tools)
{
    std::string out;
    for (const auto& t: tools)
    {
        Json params = Json::array();
        for (const auto& p: t.params)
        {
            Json j = {{"name", p.name}, {"type", to_string(p.kind)}, {"required", p.required}};
            if (!p.description.empty())
                j["description"] = p.description;
            if (p.constraint)
                j["constraint"] = p.constraint->to_json();
            params.push_back(std::move(j));
        }
        Json returns = Json::array();
        for (const auto& r: t.returns)
            returns.push_back({{"name", r.name}, {"type", to_string(r.kind)}});
        out += canonical_value(
                   {{"name", t.id}, {"description", t.description}, {"parameters", params}, {"returns", returns}})
               + "\n";
    }
    return trim(out);
}

std::string render_feedback(const std::vector<Call>& calls, const std::vector<Feedback>& feedback)
{
    Json out = Json::array();
    for (std::size_t i = 0; i < calls.size() && i < feedback.size(); ++i)
    {
        Json entry = Json::object();
        entry[render_call(calls[i])] = feedback[i].ok ? feedback[i].payload : Json {{"error", feedback[i].error}};
        out.push_back(std::move(entry));
    }
    return canonical_value(out);
}

std::vector<ChatMessage> build_initial_prompt(const HardQueryRecord& query, const std::vector<ToolSpec>& primitive_tools,
                                              const HardTrace& trace, const PromptLibrary& prompts)
{
    if (trim(query.text).empty())
        throw Error("empty query");
    std::set<std::string> offered;
    for (const auto& t: primitive_tools)
        offered.insert(t.id);
    for (const auto& s: trace.steps)
        if (!offered.contains(s.call.tool_id))
            throw Error("primitive tool missing from prompt: " + s.call.tool_id);
    return {
        {Role::System, prompts.get("reasoner_initial")
                           .render({{"hard_query", query.text},
                                    {"tool_descriptions", render_tool_descriptions(primitive_tools)},
                                    {"advanced_tool_description", query.hint}})},
        {Role::User, query.text},
    };
}

std::optional<Diagnosis> verify_step(LlmBackend& verifier, const std::vector<Call>& calls,
                                     const std::vector<Call>& truth, const std::vector<Feedback>& exec_result,
                                     const std::string& query, const PromptLibrary& prompts,
                                     const CompletionParams& params)
{
    if (truth.empty())
        throw Error("verify_step needs a non-empty truth");
    if (check(calls, truth))
        return std::nullopt;
    const std::vector<ChatMessage> messages = {
        {Role::System, prompts.get("verifier").render({
                           {"hard_query", query},
                           {"incorrect_function_call", render_calls(calls)},
                           {"correct_function_call", render_calls(truth)},
                           {"execution_result", render_feedback(calls, exec_result)},
                       })},
        {Role::User, "Diagnose the attempt."},
    };
    auto diagnosis = parse_diagnosis(complete(verifier, messages, params));
    if (leaks_answer(diagnosis, truth))
        diagnosis = sanitize_diagnosis(diagnosis, truth);
    return diagnosis;
}

std::string_view to_string(SessionStatus status)
{
    switch (status)
    {
        case SessionStatus::Running: return "running";
        case SessionStatus::Retained: return "retained";
        case SessionStatus::Discarded: return "discarded";
    }
    return "unknown";
}

Json AttemptRecord::to_json() const
{
    Json calls_json = Json::array();
    for (const auto& c: calls)
        calls_json.push_back(render_call(c));
    return {
        {"step", step},
        {"attempt", attempt},
        {"raw", raw},
        {"cot", cot},
        {"calls", std::move(calls_json)},
        {"format_ok", format_ok},
        {"correct", correct ? Json(*correct) : Json(nullptr)},
        {"diagnosis", diagnosis ? diagnosis->to_json() : Json(nullptr)},
    };
}

RefinementSession::RefinementSession(std::vector<Segment> segments, HardTrace trace, const ApiGraph& graph,
                                     const Environment& env, const PromptLibrary& prompts, RefinementOptions options,
                                     std::vector<std::size_t> step_sizes):
    _segments(std::move(segments)),
    _trace(std::move(trace)),
    _graph(&graph),
    _env(&env),
    _prompts(&prompts),
    _options(std::move(options))
{
    if (_trace.steps.empty())
        throw Error("refinement needs a non-empty trace");
    if (_options.k_max < 1)
        throw Error("k_max must be at least 1");

    if (step_sizes.empty())
        step_sizes.assign(_trace.steps.size(), 1);
    std::size_t begin = 0;
    for (auto size: step_sizes)
    {
        if (size == 0)
            throw Error("empty step in step grouping");
        _steps.emplace_back(begin, begin + size);
        begin += size;
    }
    if (begin != _trace.steps.size())
        throw Error("step grouping does not cover the trace");

    if (_segments.empty() || _segments.front().first_step != 0)
        throw Error("segments must start at step 0");
    for (std::size_t i = 1; i < _segments.size(); ++i)
        if (_segments[i].first_step <= _segments[i - 1].first_step || _segments[i].first_step >= _steps.size())
            throw Error("segment boundaries must increase within the trace");

    std::set<std::string> seen;
    for (const auto& s: _trace.steps)
    {
        if (!seen.insert(s.call.tool_id).second)
            continue;
        const auto* spec = env.registry().find(s.call.tool_id);
        if (spec == nullptr)
            throw Error("primitive tool missing from registry: " + s.call.tool_id);
        _tools.push_back(*spec);
    }

    _env_session = env.new_session(_trace.seed);
    _prompt = build_initial_prompt(_segments.front().query, _tools, _trace, prompts);
    _step_prompt_start = _prompt.size();

    static constexpr char hex[] = "0123456789abcdef";
    auto h = mix_seed(_trace.seed, _trace.trace_id + '\n' + _segments.front().query.text);
    _session_id = "ss-";
    for (int i = 0; i < 12; ++i, h >>= 4)
        _session_id.push_back(hex[h & 0xf]);
}

std::vector<Call> RefinementSession::truth(std::size_t step) const
{
    std::vector<Call> out;
    for (auto i = _steps.at(step).first; i < _steps.at(step).second; ++i)
        out.push_back(_trace.steps[i].call);
    return out;
}

const Segment& RefinementSession::segment_of(std::size_t step) const
{
    const Segment* current = &_segments.front();
    for (const auto& s: _segments)
        if (s.first_step <= step)
            current = &s;
    return *current;
}

std::string RefinementSession::tool_descriptions() const
{
    return render_tool_descriptions(_tools);
}

const AttemptRecord& RefinementSession::attempt_step(LlmBackend& reasoner)
{
    if (_status != SessionStatus::Running)
        throw Error("attempt on a finished session");
    if (_awaiting_verdict)
        throw Error("previous attempt has not been verified");
    if (_attempt > _options.k_max)
        throw Error("budget exhausted");

    AttemptRecord record;
    record.step = _step;
    record.attempt = _attempt;
    record.raw = complete(reasoner, _prompt, _options.reasoner);
    try
    {
        auto parsed = parse_output(record.raw);
        record.cot = parsed.cot.value_or("");
        record.calls = parsed.calls;
        if (!parsed.cot)
            record.diagnosis = format_diagnosis("missing <think> block");
        else if (!parsed.has_tool_call)
            record.diagnosis = format_diagnosis("missing <tool_call> block");
        else
            record.format_ok = true;
    }
    catch (const FcParseError& e)
    {
        record.diagnosis = format_diagnosis(e.what());
    }
    _log.push_back(std::move(record));
    _awaiting_verdict = true;
    return _log.back();
}

std::optional<Diagnosis> RefinementSession::verify_step(LlmBackend& verifier)
{
    if (!_awaiting_verdict)
        throw Error("no attempt to verify");
    auto& record = _log.back();
    _awaiting_verdict = false;
    if (!record.format_ok)
    {
        record.correct = false;
        return record.diagnosis;
    }

    const auto expected = truth(_step);
    if (check(record.calls, expected))
    {
        record.correct = true;
        return std::nullopt;
    }

    auto sandbox = _env_session;
    std::vector<Feedback> exec;
    for (const auto& call: record.calls)
        exec.push_back(_env->execute(sandbox, call, *_graph));

    record.correct = false;
    record.diagnosis = hardgen::verify_step(verifier, record.calls, expected, exec, segment_of(_step).query.text,
                                            *_prompts, _options.verifier);
    return record.diagnosis;
}

void RefinementSession::refine(const Diagnosis& diagnosis)
{
    if (_status != SessionStatus::Running)
        throw Error("refine on a finished session");
    if (_awaiting_verdict || _log.empty() || _log.back().step != _step || _log.back().attempt != _attempt)
        throw Error("refine requires a verified attempt at the current step");
    if (_log.back().correct.value_or(false))
        throw Error("refine after a correct attempt is not permitted");
    if (_attempt >= _options.k_max)
    {
        _status = SessionStatus::Discarded;
        throw Error("budget exhausted");
    }

    const auto& last = _log.back();
    const auto& segment = segment_of(_step);
    _prompt.push_back({Role::User, _prompts->get("reasoner_refine")
                                       .render({
                                           {"hard_query", segment.query.text},
                                           {"tool_descriptions", tool_descriptions()},
                                           {"advanced_tool_description", segment.query.hint},
                                           {"previous_reasoning", last.format_ok ? last.cot : last.raw},
                                           {"previous_function_call", last.format_ok ? render_calls(last.calls) : ""},
                                           {"error_diagnosis_and_hint", diagnosis.render()},
                                       })});
    ++_attempt;
}

void RefinementSession::advance_step()
{
    if (_status != SessionStatus::Running)
        throw Error("advance on a finished session");
    if (_step >= _steps.size())
        throw Error("advance past the last step");
    if (_awaiting_verdict || _log.empty() || _log.back().step != _step || !_log.back().correct.value_or(false))
        throw Error("advance requires a verified correct attempt");

    const auto calls = truth(_step);
    std::vector<Feedback> feedback;
    for (auto i = _steps[_step].first; i < _steps[_step].second; ++i)
    {
        auto fb = _env->execute(_env_session, _trace.steps[i].call, *_graph);
        if (!(fb == _trace.steps[i].feedback))
            throw Error("replay diverged from the recorded trace at call " + std::to_string(i + 1));
        feedback.push_back(std::move(fb));
    }

    VerifiedStep verified;
    verified.segment = 0;
    for (std::size_t s = 0; s < _segments.size(); ++s)
        if (_segments[s].first_step <= _step)
            verified.segment = s;
    verified.calls = calls;
    verified.feedback = feedback;
    verified.attempts = _attempt;
    if (_options.include_correction_narrative && _attempt > 1)
    {
        std::string narrative;
        for (const auto& r: _log)
            if (r.step == _step && !r.correct.value_or(false))
                narrative += "Attempt " + std::to_string(r.attempt) + ": " + (r.format_ok ? r.cot : r.raw)
                             + "\nFeedback: " + (r.diagnosis ? r.diagnosis->corrective_hint : std::string()) + "\n\n";
        verified.cot = narrative + "Revised reasoning: " + _log.back().cot;
    }
    else
    {
        verified.cot = _log.back().cot;
    }
    _verified.push_back(std::move(verified));

    if (_options.prune_failed_attempts)
        _prompt.resize(_step_prompt_start);
    _prompt.push_back({Role::Assistant, "<tool_call>\n" + render_calls(calls) + "\n</tool_call>"});
    _prompt.push_back({Role::Tool, "<tool_response>\n" + render_feedback(calls, feedback) + "\n</tool_response>"});

    ++_step;
    _attempt = 1;
    if (_step == _steps.size())
    {
        _status = SessionStatus::Retained;
        return;
    }
    for (const auto& s: _segments)
        if (s.first_step == _step)
            _prompt.push_back({Role::User, _prompts->get("turn").render({
                                               {"hard_query", s.query.text},
                                               {"advanced_tool_description", s.query.hint},
                                           })});
    _step_prompt_start = _prompt.size();
}

std::optional<VerifiedTrajectorySeed> RefinementSession::run(LlmBackend& reasoner, LlmBackend& verifier)
{
    while (_status == SessionStatus::Running)
    {
        attempt_step(reasoner);
        auto diagnosis = verify_step(verifier);
        if (!diagnosis)
            advance_step();
        else if (_attempt >= _options.k_max)
            _status = SessionStatus::Discarded;
        else
            refine(*diagnosis);
    }
    if (_status != SessionStatus::Retained)
        return std::nullopt;
    return result();
}

VerifiedTrajectorySeed RefinementSession::result() const
{
    if (_status != SessionStatus::Retained)
        throw Error("session was not retained");
    return {_session_id, _trace.trace_id, _trace.target, _segments, _verified, _tools, _trace.seed};
}

Json RefinementSession::dump() const
{
    Json transcript = Json::array();
    for (const auto& m: _prompt)
        transcript.push_back({{"role", to_string(m.role)}, {"content", m.content}});
    Json log = Json::array();
    for (const auto& r: _log)
        log.push_back(r.to_json());
    return {
        {"session_id", _session_id},
        {"trace_id", _trace.trace_id},
        {"status", to_string(_status)},
        {"k_max", _options.k_max},
        {"transcript", std::move(transcript)},
        {"attempts_log", std::move(log)},
    };
}

} // namespace hardgen
