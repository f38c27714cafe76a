// SPDX-License-Identifier: Apache-2.0
#include "hardgen/prompt_template.hpp"

namespace hardgen
{

namespace
{

/// Calls `on_text(literal)` and `on_slot(name)` in document order.
template <typename Text, typename Slot>
void scan(std::string_view text, Text&& on_text, Slot&& on_slot)
{
    std::size_t pos = 0;
    while (pos < text.size())
    {
        const auto open = text.find("{{", pos);
        if (open == std::string_view::npos)
            break;
        const auto close = text.find("}}", open + 2);
        if (close == std::string_view::npos)
            break;
        const auto name = text.substr(open + 2, close - open - 2);
        const bool valid = !name.empty() && name.find_first_not_of("abcdefghijklmnopqrstuvwxyz0123456789_") == std::string_view::npos;
        if (!valid)
        {
            on_text(text.substr(pos, open + 2 - pos));
            pos = open + 2;
            continue;
        }
        on_text(text.substr(pos, open - pos));
        on_slot(name);
        pos = close + 2;
    }
    on_text(text.substr(pos));
}

} // namespace

PromptTemplate::PromptTemplate(std::string name, std::string text): _name(std::move(name)), _text(std::move(text))
{
    scan(_text, [](std::string_view) {}, [this](std::string_view slot) { _placeholders.emplace(slot); });
}

std::string PromptTemplate::render(const std::map<std::string, std::string>& values) const
{
    std::string out;
    out.reserve(_text.size());
    scan(
        _text, [&](std::string_view literal) { out.append(literal); },
        [&](std::string_view slot) {
            auto it = values.find(std::string(slot));
            if (it == values.end())
                throw Error("template '" + _name + "' has no value for {{" + std::string(slot) + "}}");
            out.append(it->second);
        });
    return out;
}

PromptLibrary PromptLibrary::embedded()
{
    PromptLibrary library;
    for (const auto& [name, text]: detail::embedded_prompts())
        library._templates.emplace(name, PromptTemplate(name, text));
    return library;
}

std::string strip_license_header(std::string_view text)
{
    constexpr std::string_view marker = "# SPDX-License-Identifier:";
    if (!starts_with(text, marker))
        return std::string(text);
    const auto eol = text.find('\n');
    return eol == std::string_view::npos ? std::string() : std::string(text.substr(eol + 1));
}

PromptLibrary PromptLibrary::with_overrides(const std::filesystem::path& directory)
{
    auto library = embedded();
    if (!std::filesystem::is_directory(directory))
        throw IoError("prompt directory not found: " + directory.string());
    for (const auto& entry: std::filesystem::directory_iterator(directory))
    {
        if (!entry.is_regular_file() || entry.path().extension() != ".txt")
            continue;
        const auto name = entry.path().stem().string();
        library._templates.insert_or_assign(name, PromptTemplate(name, strip_license_header(read_text(entry.path()))));
    }
    return library;
}

const PromptTemplate& PromptLibrary::get(std::string_view name) const
{
    auto it = _templates.find(name);
    if (it == _templates.end())
        throw Error("unknown prompt template: " + std::string(name));
    return it->second;
}

} // namespace hardgen
