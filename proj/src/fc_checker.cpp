// SPDX-License-Identifier: Apache-2.0
#include "hardgen/fc_checker.hpp"

#include <cctype>

namespace hardgen
{

namespace
{

constexpr std::string_view kThinkOpen = "<think>";
constexpr std::string_view kThinkClose = "</think>";
constexpr std::string_view kCallOpen = "<tool_call>";
constexpr std::string_view kCallClose = "</tool_call>";
constexpr std::string_view kTags[] = {kThinkOpen, kThinkClose, kCallOpen, kCallClose};

bool is_space(char c)
{
    return std::isspace(static_cast<unsigned char>(c)) != 0;
}

bool is_name_start(char c)
{
    return std::isalpha(static_cast<unsigned char>(c)) != 0 || c == '_';
}

bool is_name_char(char c)
{
    return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_' || c == '.' || c == '-';
}

/// Recursive-descent reader for the call-list grammar. Positions are
/// reported relative to the enclosing text via `base`.
class CallListReader
{
  public:
    CallListReader(std::string_view text, std::size_t base): _text(text), _base(base) {}

    std::vector<Call> read_list()
    {
        std::vector<Call> calls;
        skip_ws();
        expect('[', "'[' opening the call list");
        skip_ws();
        if (peek() == ']')
        {
            ++_pos;
        }
        else
        {
            while (true)
            {
                calls.push_back(read_call());
                skip_ws();
                if (peek() == ',')
                {
                    ++_pos;
                    continue;
                }
                expect(']', "',' or ']' after a call");
                break;
            }
        }
        skip_ws();
        if (_pos != _text.size())
            fail("end of call list");
        return calls;
    }

  private:
    [[noreturn]] void fail(const std::string& expectation) const { throw FcParseError(_base + _pos, expectation); }

    char peek() const { return _pos < _text.size() ? _text[_pos] : '\0'; }

    void skip_ws()
    {
        while (_pos < _text.size() && is_space(_text[_pos]))
            ++_pos;
    }

    void expect(char c, const std::string& expectation)
    {
        if (peek() != c)
            fail(expectation);
        ++_pos;
    }

    std::string read_name(const std::string& what)
    {
        if (!is_name_start(peek()))
            fail(what);
        const auto start = _pos;
        while (_pos < _text.size() && is_name_char(_text[_pos]))
            ++_pos;
        return std::string(_text.substr(start, _pos - start));
    }

    Call read_call()
    {
        skip_ws();
        Call call;
        call.tool_id = read_name("tool name");
        skip_ws();
        expect('(', "'(' after tool name");
        skip_ws();
        if (peek() == ')')
        {
            ++_pos;
            return call;
        }
        while (true)
        {
            skip_ws();
            const auto key_pos = _pos;
            auto key = read_name("parameter name");
            skip_ws();
            expect('=', "'=' after parameter name");
            skip_ws();
            auto value = read_value();
            if (call.args.contains(key))
            {
                _pos = key_pos;
                fail("distinct parameter names");
            }
            call.args[key] = std::move(value);
            skip_ws();
            if (peek() == ',')
            {
                ++_pos;
                continue;
            }
            expect(')', "',' or ')' in argument list");
            return call;
        }
    }

    /// Scans a quoted string, returning the end offset just past the closing quote.
    std::size_t scan_string(std::size_t from) const
    {
        const char quote = _text[from];
        for (auto i = from + 1; i < _text.size(); ++i)
        {
            if (_text[i] == '\\')
                ++i;
            else if (_text[i] == quote)
                return i + 1;
        }
        throw FcParseError(_base + from, "closing quote");
    }

    Json parse_slice(std::size_t start, std::size_t end, const std::string& what)
    {
        try
        {
            return Json::parse(_text.substr(start, end - start));
        }
        catch (const Json::parse_error&)
        {
            _pos = start;
            fail(what);
        }
    }

    Json read_value()
    {
        const auto start = _pos;
        const char c = peek();
        if (c == '"')
        {
            _pos = scan_string(start);
            return parse_slice(start, _pos, "valid string literal");
        }
        if (c == '\'')
        {
            _pos = scan_string(start);
            std::string inner;
            for (auto i = start + 1; i + 1 < _pos; ++i)
            {
                if (_text[i] == '\\' && i + 2 < _pos)
                    ++i;
                inner.push_back(_text[i]);
            }
            return inner;
        }
        if (c == '{' || c == '[')
        {
            int depth = 0;
            for (auto i = _pos; i < _text.size(); ++i)
            {
                const char d = _text[i];
                if (d == '"')
                {
                    i = scan_string(i) - 1;
                    continue;
                }
                if (d == '{' || d == '[')
                    ++depth;
                else if (d == '}' || d == ']')
                {
                    if (--depth == 0)
                    {
                        _pos = i + 1;
                        return parse_slice(start, _pos, "valid JSON object or array");
                    }
                }
            }
            fail("balanced object or array literal");
        }
        if (c == '-' || std::isdigit(static_cast<unsigned char>(c)) != 0)
        {
            ++_pos;
            while (_pos < _text.size()
                   && (std::isdigit(static_cast<unsigned char>(_text[_pos])) != 0 || _text[_pos] == '.'
                       || _text[_pos] == 'e' || _text[_pos] == 'E' || _text[_pos] == '+' || _text[_pos] == '-'))
                ++_pos;
            return parse_slice(start, _pos, "valid number");
        }
        if (is_name_start(c))
        {
            auto word = read_name("value");
            if (word == "true" || word == "True")
                return true;
            if (word == "false" || word == "False")
                return false;
            if (word == "null" || word == "None")
                return nullptr;
            _pos = start;
            fail("quoted string, number, boolean or null");
        }
        fail("value");
    }

    std::string_view _text;
    std::size_t _base;
    std::size_t _pos = 0;
};

std::size_t skip_ws(std::string_view text, std::size_t pos)
{
    while (pos < text.size() && is_space(text[pos]))
        ++pos;
    return pos;
}

bool at(std::string_view text, std::size_t pos, std::string_view token)
{
    return text.substr(pos, token.size()) == token;
}

/// Rejects any tag in text[from, to).
void forbid_tags(std::string_view text, std::size_t from, std::size_t to, const std::string& context)
{
    for (auto tag: kTags)
    {
        auto hit = text.substr(0, to).find(tag, from);
        if (hit != std::string_view::npos)
        {
            const bool open = tag == kThinkOpen || tag == kCallOpen;
            throw FcParseError(hit, open ? "no further " + std::string(tag) + " block " + context
                                         : "no unmatched " + std::string(tag) + " " + context);
        }
    }
}

} // namespace

FcParseError::FcParseError(std::size_t position, const std::string& expectation):
    Error("parse error at offset " + std::to_string(position) + ": expected " + expectation),
    position(position),
    expectation(expectation)
{
}

std::vector<Call> parse_call_list(std::string_view text)
{
    return CallListReader(text, 0).read_list();
}

AgentOutput parse_output(std::string_view text)
{
    AgentOutput out;
    std::size_t pos = skip_ws(text, 0);
    std::string free_text;

    if (at(text, pos, kThinkOpen))
    {
        const auto body = pos + kThinkOpen.size();
        const auto close = text.find(kThinkClose, body);
        if (close == std::string_view::npos)
            throw FcParseError(text.size(), std::string(kThinkClose));
        forbid_tags(text, body, close, "inside think");
        out.cot = trim(text.substr(body, close - body));
        pos = close + kThinkClose.size();

        const auto next = skip_ws(text, pos);
        if (!at(text, next, kCallOpen))
        {
            const auto misplaced = text.find(kCallOpen, pos);
            if (misplaced != std::string_view::npos)
            {
                forbid_tags(text, pos, misplaced, "after think");
                throw FcParseError(misplaced, "<tool_call> directly after </think>");
            }
        }
        pos = next;
    }
    else if (!at(text, pos, kCallOpen))
    {
        for (auto tag: kTags)
            if (text.find(tag, pos) != std::string_view::npos)
                throw FcParseError(pos, "<think> before any other content");
    }

    if (at(text, pos, kCallOpen))
    {
        const auto body = pos + kCallOpen.size();
        const auto close = text.find(kCallClose, body);
        if (close == std::string_view::npos)
            throw FcParseError(text.size(), std::string(kCallClose));
        forbid_tags(text, body, close, "inside tool_call");
        out.calls = CallListReader(text.substr(body, close - body), body).read_list();
        out.has_tool_call = true;
        pos = close + kCallClose.size();
    }

    forbid_tags(text, pos, text.size(), "after the blocks");
    out.free_text = trim(text.substr(pos));
    return out;
}

std::string render_call(const Call& call)
{
    std::string out = call.tool_id + "(";
    bool first = true;
    if (call.args.is_object())
    {
        for (const auto& [key, value]: call.args.items())
        {
            if (!first)
                out += ", ";
            first = false;
            out += key + "=" + canonical_value(value);
        }
    }
    return out + ")";
}

std::string render_calls(const std::vector<Call>& calls)
{
    std::string out = "[";
    for (std::size_t i = 0; i < calls.size(); ++i)
    {
        if (i > 0)
            out += ", ";
        out += render_call(calls[i]);
    }
    return out + "]";
}

std::string render_output(const AgentOutput& output)
{
    std::string out;
    if (output.cot)
        out += std::string(kThinkOpen) + "\n" + *output.cot + "\n" + std::string(kThinkClose);
    if (output.has_tool_call)
    {
        if (!out.empty())
            out += "\n";
        out += std::string(kCallOpen) + "\n" + render_calls(output.calls) + "\n" + std::string(kCallClose);
    }
    if (!output.free_text.empty())
    {
        if (!out.empty())
            out += "\n";
        out += output.free_text;
    }
    return out;
}

bool check(const std::vector<Call>& calls, const std::vector<Call>& truth)
{
    if (calls.size() != truth.size())
        return false;
    for (std::size_t i = 0; i < calls.size(); ++i)
        if (!(calls[i] == truth[i]))
            return false;
    return true;
}

int reward(std::string_view output, const std::optional<std::vector<Call>>& truth)
{
    AgentOutput parsed;
    try
    {
        parsed = parse_output(output);
    }
    catch (const FcParseError&)
    {
        return 0;
    }
    if (!parsed.cot)
        return 0;
    if (!truth)
        return parsed.has_tool_call ? 0 : 1;
    return parsed.has_tool_call && check(parsed.calls, *truth) ? 1 : 0;
}

int reward(const RewardInput& input)
{
    return reward(input.output, input.truth);
}

} // namespace hardgen
