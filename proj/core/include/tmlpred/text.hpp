// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace tmlpred
{

using Json = nlohmann::json;

namespace text
{

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);

/// ASCII case-fold plus trim; the key used for case-insensitive identifier matching.
std::string fold(std::string_view s);

bool iequals(std::string_view a, std::string_view b);
bool ends_with(std::string_view s, std::string_view suffix);
bool contains_word(std::string_view haystack, std::string_view needle);

std::vector<std::string> split(std::string_view s, char sep);
std::string join(std::span<const std::string> parts, std::string_view sep);

/// Lowercased alphanumeric tokens; everything else separates.
std::vector<std::string> tokenize(std::string_view s);

/// Shortest decimal text that parses back to exactly `value`.
std::string format_number(double value);

/// Parses a full string as a finite double. Leading/trailing blanks allowed.
std::optional<double> parse_number(std::string_view s);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view data, std::uint64_t seed = 14695981039346656037ull);
std::string hex64(std::uint64_t value);

/// Replaces every `{name}` in `tmpl` with `values[name]`. Unknown names are left as-is.
std::string substitute(std::string_view tmpl, const std::map<std::string, std::string>& values);

/// Reads a whole file; throws InputError when it cannot be opened.
std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

Json read_json_file(const std::string& path);

/// Parses one JSON document per nonblank line.
std::vector<Json> read_jsonl_file(const std::string& path);

/// Deterministic dump used for anything that is hashed or byte-compared.
std::string canonical_dump(const Json& value);

} // namespace text

/// Case-insensitive ordering for identifier-keyed maps.
struct FoldLess
{
    using is_transparent = void;
    bool operator()(std::string_view a, std::string_view b) const;
};

/// Alias table mapping alternative spellings to one canonical identifier.
/// Lookups are case-insensitive; unknown names resolve to themselves.
class AliasTable
{
  public:
    AliasTable() = default;

    void add(std::string_view alias, std::string_view canonical);
    std::string resolve(std::string_view name) const;
    bool empty() const noexcept { return aliases_.empty(); }

    /// `{ "<canonical>": ["alias", ...] }`
    static AliasTable from_json(const Json& doc);

  private:
    std::map<std::string, std::string, std::less<>> aliases_; // folded alias -> canonical
};

} // namespace tmlpred
