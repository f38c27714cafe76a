// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hardgen/common.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace hardgen
{

enum class ParamKind
{
    String,
    Integer,
    Float,
    Boolean,
    Enum,
    Object,
};

std::string_view to_string(ParamKind kind);
std::optional<ParamKind> parse_param_kind(std::string_view text);

/// Value-range or enumerated-set descriptor attached to a parameter.
///
/// JSON form: {"min": x, "max": y} for ranges, {"values": [...]} for sets.
/// Either bound of a range may be omitted.
struct ValueConstraint
{
    std::optional<double> min;
    std::optional<double> max;
    std::vector<Json> values;

    [[nodiscard]] bool is_enumerated() const { return !values.empty(); }
    [[nodiscard]] bool admits(const Json& value) const;

    [[nodiscard]] Json to_json() const;
    static ValueConstraint from_json(const Json& json);

    friend bool operator==(const ValueConstraint&, const ValueConstraint&) = default;
};

struct ParamSpec
{
    std::string name;
    ParamKind kind = ParamKind::String;
    bool required = false;
    std::optional<ValueConstraint> constraint;
    std::string description;

    friend bool operator==(const ParamSpec&, const ParamSpec&) = default;
};

struct ReturnField
{
    std::string name;
    ParamKind kind = ParamKind::String;

    friend bool operator==(const ReturnField&, const ReturnField&) = default;
};

struct ToolSpec
{
    std::string id;
    std::string description;
    std::vector<ParamSpec> params;
    std::vector<ReturnField> returns;
    std::string domain_tag = "Tools";
    bool is_failure = false;
    /// Unrecognised fields of the schema line, kept verbatim.
    Json metadata = Json::object();

    [[nodiscard]] const ParamSpec* find_param(std::string_view name) const;
    [[nodiscard]] const ReturnField* find_return(std::string_view name) const;

    friend bool operator==(const ToolSpec&, const ToolSpec&) = default;
};

/// True when `value` has the JSON shape demanded by `kind` and satisfies the
/// optional constraint. Float parameters also accept integer literals.
bool value_matches(const Json& value, ParamKind kind, const ValueConstraint* constraint = nullptr);

/// Thrown when a schema object is structurally invalid.
class SchemaError: public Error
{
  public:
    using Error::Error;
};

ToolSpec parse_tool_schema(const Json& json);
Json tool_to_json(const ToolSpec& tool);

/// Immutable-after-ingest map of tool id to schema.
class ToolRegistry
{
  public:
    using Map = std::map<std::string, ToolSpec, std::less<>>;

    /// Returns false (and leaves the registry unchanged) when the id is taken.
    bool add(ToolSpec tool);

    [[nodiscard]] const ToolSpec* find(std::string_view id) const;
    [[nodiscard]] bool contains(std::string_view id) const { return find(id) != nullptr; }
    [[nodiscard]] std::size_t count() const { return _tools.size(); }
    [[nodiscard]] std::vector<std::string> ids() const;

    [[nodiscard]] Map::const_iterator begin() const { return _tools.begin(); }
    [[nodiscard]] Map::const_iterator end() const { return _tools.end(); }

    friend bool operator==(const ToolRegistry&, const ToolRegistry&) = default;

  private:
    Map _tools;
};

std::optional<ToolSpec> lookup(const ToolRegistry& registry, std::string_view id);

struct SchemaReject
{
    std::size_t line = 0; // 1-based
    std::string reason;
};

struct IngestResult
{
    ToolRegistry registry;
    std::vector<SchemaReject> rejects;
};

/// Reads a tool-schema JSONL file. Unreadable file throws IoError; malformed
/// lines are collected in `rejects`, never silently dropped. Blank lines are skipped.
IngestResult ingest_schemas(const std::filesystem::path& path);
IngestResult ingest_schemas(std::istream& in);

} // namespace hardgen
