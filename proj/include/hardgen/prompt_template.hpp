// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hardgen/common.hpp"

#include <filesystem>
#include <map>
#include <set>
#include <string>

namespace hardgen
{

namespace detail
{
/// Generated at build time from prompts/*.txt, keyed by file stem.
const std::map<std::string, std::string, std::less<>>& embedded_prompts();
} // namespace detail

/// Text with `{{name}}` placeholders. Substitution is single-pass, so values
/// containing braces are inserted literally.
class PromptTemplate
{
  public:
    PromptTemplate(std::string name, std::string text);

    [[nodiscard]] const std::string& name() const { return _name; }
    [[nodiscard]] const std::string& text() const { return _text; }
    [[nodiscard]] const std::set<std::string>& placeholders() const { return _placeholders; }

    /// Throws Error naming the first placeholder without a value.
    [[nodiscard]] std::string render(const std::map<std::string, std::string>& values) const;

  private:
    std::string _name;
    std::string _text;
    std::set<std::string> _placeholders;
};

/// Drops a leading "# SPDX-License-Identifier:" line from a template file.
std::string strip_license_header(std::string_view text);

/// Named templates: the embedded set, optionally overridden file by file
/// from a directory of `<name>.txt` files.
class PromptLibrary
{
  public:
    static PromptLibrary embedded();
    static PromptLibrary with_overrides(const std::filesystem::path& directory);

    [[nodiscard]] const PromptTemplate& get(std::string_view name) const;
    [[nodiscard]] bool contains(std::string_view name) const { return _templates.contains(std::string(name)); }

  private:
    std::map<std::string, PromptTemplate, std::less<>> _templates;
};

} // namespace hardgen
