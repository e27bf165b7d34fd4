// SPDX-License-Identifier: Apache-2.0
#include <tmlpred/error.hpp>
#include <tmlpred/text.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace tmlpred::text
{

namespace
{
bool is_space(char c)
{
    return std::isspace(static_cast<unsigned char>(c)) != 0;
}

char lower(char c)
{
    return static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
}
} // namespace

std::string trim(std::string_view s)
{
    auto first = std::find_if_not(s.begin(), s.end(), is_space);
    auto last = std::find_if_not(s.rbegin(), s.rend(), is_space).base();
    if (first >= last)
        return {};
    return std::string(first, last);
}

std::string to_lower(std::string_view s)
{
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), lower);
    return out;
}

std::string fold(std::string_view s)
{
    return to_lower(trim(s));
}

bool iequals(std::string_view a, std::string_view b)
{
    return fold(a) == fold(b);
}

bool ends_with(std::string_view s, std::string_view suffix)
{
    return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

bool contains_word(std::string_view haystack, std::string_view needle)
{
    auto const words = tokenize(haystack);
    auto const wanted = tokenize(needle);
    if (wanted.empty())
        return false;
    for (std::size_t i = 0; i + wanted.size() <= words.size(); ++i)
    {
        if (std::equal(wanted.begin(), wanted.end(), words.begin() + static_cast<std::ptrdiff_t>(i)))
            return true;
    }
    return false;
}

std::vector<std::string> split(std::string_view s, char sep)
{
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true)
    {
        auto const pos = s.find(sep, start);
        if (pos == std::string_view::npos)
        {
            parts.emplace_back(s.substr(start));
            break;
        }
        parts.emplace_back(s.substr(start, pos - start));
        start = pos + 1;
    }
    return parts;
}

std::string join(std::span<const std::string> parts, std::string_view sep)
{
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i)
    {
        if (i > 0)
            out += sep;
        out += parts[i];
    }
    return out;
}

std::vector<std::string> tokenize(std::string_view s)
{
    std::vector<std::string> tokens;
    std::string current;
    for (char c: s)
    {
        if (std::isalnum(static_cast<unsigned char>(c)))
            current.push_back(lower(c));
        else if (!current.empty())
            tokens.push_back(std::exchange(current, {}));
    }
    if (!current.empty())
        tokens.push_back(std::move(current));
    return tokens;
}

std::string format_number(double value)
{
    if (value == 0.0)
        return "0";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc {})
        throw Error(fmt::format("cannot format number {}", value));
    return std::string(buf, ptr);
}

std::optional<double> parse_number(std::string_view s)
{
    auto const t = trim(s);
    if (t.empty())
        return std::nullopt;
    std::string_view body = t;
    if (body.front() == '+')
        body.remove_prefix(1);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(body.data(), body.data() + body.size(), value);
    if (ec != std::errc {} || ptr != body.data() + body.size() || !std::isfinite(value))
        return std::nullopt;
    return value;
}

std::uint64_t fnv1a(std::string_view data, std::uint64_t seed)
{
    std::uint64_t hash = seed;
    for (unsigned char c: data)
    {
        hash ^= c;
        hash *= 1099511628211ull;
    }
    return hash;
}

std::string hex64(std::uint64_t value)
{
    return fmt::format("{:016x}", value);
}

std::string substitute(std::string_view tmpl, const std::map<std::string, std::string>& values)
{
    std::string out;
    out.reserve(tmpl.size());
    std::size_t i = 0;
    while (i < tmpl.size())
    {
        if (tmpl[i] == '{')
        {
            auto const close = tmpl.find('}', i + 1);
            if (close != std::string_view::npos)
            {
                auto const name = std::string(tmpl.substr(i + 1, close - i - 1));
                if (auto it = values.find(name); it != values.end())
                {
                    out += it->second;
                    i = close + 1;
                    continue;
                }
            }
        }
        out.push_back(tmpl[i]);
        ++i;
    }
    return out;
}

std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw InputError(fmt::format("cannot open '{}'", path));
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_file(const std::string& path, std::string_view content)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw InputError(fmt::format("cannot write '{}'", path));
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

Json read_json_file(const std::string& path)
{
    auto const content = read_file(path);
    try
    {
        return Json::parse(content);
    }
    catch (const Json::parse_error& e)
    {
        throw InputError(fmt::format("{}: {}", path, e.what()));
    }
}

std::vector<Json> read_jsonl_file(const std::string& path)
{
    std::istringstream in(read_file(path));
    std::vector<Json> docs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line))
    {
        ++lineno;
        if (trim(line).empty())
            continue;
        try
        {
            docs.push_back(Json::parse(line));
        }
        catch (const Json::parse_error& e)
        {
            throw InputError(fmt::format("{}:{}: {}", path, lineno, e.what()));
        }
    }
    return docs;
}

std::string canonical_dump(const Json& value)
{
    return value.dump(-1, ' ', false, Json::error_handler_t::replace);
}

} // namespace tmlpred::text

namespace tmlpred
{

bool FoldLess::operator()(std::string_view a, std::string_view b) const
{
    auto const n = std::min(a.size(), b.size());
    for (std::size_t i = 0; i < n; ++i)
    {
        auto const ca = std::tolower(static_cast<unsigned char>(a[i]));
        auto const cb = std::tolower(static_cast<unsigned char>(b[i]));
        if (ca != cb)
            return ca < cb;
    }
    return a.size() < b.size();
}

void AliasTable::add(std::string_view alias, std::string_view canonical)
{
    aliases_[text::fold(alias)] = std::string(canonical);
}

std::string AliasTable::resolve(std::string_view name) const
{
    if (auto it = aliases_.find(text::fold(name)); it != aliases_.end())
        return it->second;
    return text::trim(name);
}

AliasTable AliasTable::from_json(const Json& doc)
{
    if (!doc.is_object())
        throw InputError("alias table must be a JSON object");
    AliasTable table;
    for (auto const& [canonical, aliases]: doc.items())
    {
        table.add(canonical, canonical);
        if (!aliases.is_array())
            throw InputError(fmt::format("aliases of '{}' must be an array", canonical));
        for (auto const& alias: aliases)
            table.add(alias.get<std::string>(), canonical);
    }
    return table;
}

} // namespace tmlpred
