// SPDX-License-Identifier: Apache-2.0
#include "hardgen/common.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <limits>
#include <sstream>

namespace hardgen
{

std::string canonical_value(const Json& value)
{
    // nlohmann::json keeps object keys in a std::map, so dump() is already key-sorted.
    return value.dump(-1, ' ', false, Json::error_handler_t::replace);
}

std::uint64_t fnv1a64(std::string_view bytes)
{
    std::uint64_t hash = 0xcbf29ce484222325ull;
    for (unsigned char c: bytes)
    {
        hash ^= c;
        hash *= 0x00000100000001b3ull;
    }
    return hash;
}

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt)
{
    return splitmix64(splitmix64(seed) ^ (salt * 0x9e3779b97f4a7c15ull + 0x632be59bd9b4e019ull));
}

std::uint64_t mix_seed(std::uint64_t seed, std::string_view salt)
{
    return mix_seed(seed, fnv1a64(salt));
}

std::string sha256_hex(std::string_view bytes)
{
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest {};
    unsigned int length = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &length, EVP_sha256(), nullptr) != 1)
        throw Error("sha256 digest failed");

    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(length * 2);
    for (unsigned int i = 0; i < length; ++i)
    {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0x0f]);
    }
    return out;
}

std::size_t Rng::uniform_index(std::size_t n)
{
    if (n == 0)
        throw Error("uniform_index over an empty range");
    const auto bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max()
                                - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t draw = 0;
    do
        draw = _engine();
    while (draw >= limit);
    return static_cast<std::size_t>(draw % bound);
}

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi)
{
    if (hi < lo)
        std::swap(lo, hi);
    const auto span = static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo) + 1;
    if (span == 0) // full 64-bit range
        return static_cast<std::int64_t>(_engine());
    return lo + static_cast<std::int64_t>(uniform_index(static_cast<std::size_t>(span)));
}

double Rng::uniform01()
{
    return static_cast<double>(_engine() >> 11) * 0x1.0p-53;
}

std::vector<std::string> read_lines(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot read file: " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line))
    {
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        lines.push_back(std::move(line));
    }
    return lines;
}

std::string read_text(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot read file: " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_text(const std::filesystem::path& path, std::string_view text)
{
    if (path.has_parent_path())
    {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot write file: " + path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out)
        throw IoError("write failed: " + path.string());
}

std::size_t write_jsonl(const std::filesystem::path& path, const std::vector<Json>& rows)
{
    std::string text;
    for (const auto& row: rows)
    {
        text += canonical_value(row);
        text += '\n';
    }
    write_text(path, text);
    return rows.size();
}

std::vector<Json> read_jsonl(const std::filesystem::path& path)
{
    std::vector<Json> rows;
    std::size_t number = 0;
    for (const auto& line: read_lines(path))
    {
        ++number;
        if (trim(line).empty())
            continue;
        try
        {
            rows.push_back(Json::parse(line));
        }
        catch (const Json::exception& e)
        {
            throw IoError(path.string() + ":" + std::to_string(number) + ": " + e.what());
        }
    }
    return rows;
}

std::string trim(std::string_view text)
{
    auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
    while (!text.empty() && is_space(static_cast<unsigned char>(text.front())))
        text.remove_prefix(1);
    while (!text.empty() && is_space(static_cast<unsigned char>(text.back())))
        text.remove_suffix(1);
    return std::string(text);
}

std::string to_lower(std::string_view text)
{
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
        return static_cast<char>(std::tolower(c));
    });
    return out;
}

bool starts_with(std::string_view text, std::string_view prefix)
{
    return text.substr(0, prefix.size()) == prefix;
}

} // namespace hardgen
