// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hardgen
{

using Json = nlohmann::json;

/// Base class for every error raised by the library.
class Error: public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

/// Raised for malformed files, unreadable paths and bad configuration.
class IoError: public Error
{
  public:
    using Error::Error;
};

/// Canonical textual form of a JSON value: object keys sorted, no whitespace,
/// integers and floats kept distinct ("7" vs "7.0").
std::string canonical_value(const Json& value);

std::uint64_t fnv1a64(std::string_view bytes);
std::uint64_t splitmix64(std::uint64_t x);

/// Combines two 64-bit values into a well-mixed derived seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);
std::uint64_t mix_seed(std::uint64_t seed, std::string_view salt);

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view bytes);

/// Seeded random source with portable draws. std::uniform_*_distribution is
/// implementation-defined, so bounded draws are done here by rejection.
class Rng
{
  public:
    explicit Rng(std::uint64_t seed): _engine(seed) {}

    std::uint64_t next() { return _engine(); }

    /// Uniform in [0, n). n must be positive.
    std::size_t uniform_index(std::size_t n);

    /// Uniform in [lo, hi] inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

    /// Uniform in [0, 1).
    double uniform01();

    bool bernoulli(double p) { return uniform01() < p; }

  private:
    std::mt19937_64 _engine;
};

/// Reads all lines of a text file; throws IoError when unreadable.
std::vector<std::string> read_lines(const std::filesystem::path& path);
std::string read_text(const std::filesystem::path& path);

/// Writes text atomically enough for our purposes (truncate + write); throws on failure.
void write_text(const std::filesystem::path& path, std::string_view text);

/// Writes one compact JSON document per line.
std::size_t write_jsonl(const std::filesystem::path& path, const std::vector<Json>& rows);
std::vector<Json> read_jsonl(const std::filesystem::path& path);

std::string trim(std::string_view text);
std::string to_lower(std::string_view text);
bool starts_with(std::string_view text, std::string_view prefix);

} // namespace hardgen
