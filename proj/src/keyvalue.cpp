#include "lossbal/keyvalue.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>

#include "lossbal/error.hpp"

namespace lossbal {

std::string_view trim(std::string_view text) noexcept {
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = text.find_last_not_of(" \t\r\n");
    return text.substr(first, last - first + 1);
}

std::vector<std::string> split(std::string_view text, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = text.find(sep, start);
        out.emplace_back(trim(text.substr(start, pos == std::string_view::npos ? pos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_double(std::string_view text) {
    text = trim(text);
    double v = 0.0;
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end) throw ConfigError("not a number: '" + std::string(text) + "'");
    return v;
}

std::int64_t parse_integer(std::string_view text) {
    text = trim(text);
    std::int64_t v = 0;
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end) throw ConfigError("not an integer: '" + std::string(text) + "'");
    return v;
}

std::vector<double> parse_doubles(std::string_view text) {
    std::string normalized(text);
    std::replace(normalized.begin(), normalized.end(), ',', ' ');
    std::vector<double> out;
    std::size_t i = 0;
    while (i < normalized.size()) {
        while (i < normalized.size() && (normalized[i] == ' ' || normalized[i] == '\t')) ++i;
        if (i >= normalized.size()) break;
        std::size_t j = i;
        while (j < normalized.size() && normalized[j] != ' ' && normalized[j] != '\t') ++j;
        out.push_back(parse_double(std::string_view(normalized).substr(i, j - i)));
        i = j;
    }
    return out;
}

KeyValueDoc KeyValueDoc::parse(std::string_view text) {
    KeyValueDoc doc;
    std::size_t line_no = 0;
    for (const auto& raw : split(text, '\n')) {
        ++line_no;
        const auto line = trim(raw);
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value', got '" +
                              std::string(line) + "'");
        }
        const auto key = trim(line.substr(0, eq));
        if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
        doc.entries_.emplace_back(std::string(key), std::string(trim(line.substr(eq + 1))));
    }
    return doc;
}

void KeyValueDoc::add(std::string key, std::string value) { entries_.emplace_back(std::move(key), std::move(value)); }

void KeyValueDoc::add(std::string key, double value) { add(std::move(key), format_double(value)); }

void KeyValueDoc::add(std::string key, std::span<const double> values) {
    std::string joined;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) joined += ' ';
        joined += format_double(values[i]);
    }
    add(std::move(key), std::move(joined));
}

bool KeyValueDoc::contains(std::string_view key) const { return find(key).has_value(); }

std::optional<std::string> KeyValueDoc::find(std::string_view key) const {
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it)
        if (it->first == key) return it->second;
    return std::nullopt;
}

std::string KeyValueDoc::at(std::string_view key) const {
    auto v = find(key);
    if (!v) throw ConfigError("missing key '" + std::string(key) + "'");
    return *v;
}

std::vector<std::string> KeyValueDoc::all(std::string_view key) const {
    std::vector<std::string> out;
    for (const auto& [k, v] : entries_)
        if (k == key) out.push_back(v);
    return out;
}

double KeyValueDoc::number(std::string_view key) const {
    try {
        return parse_double(at(key));
    } catch (const ConfigError& e) {
        throw ConfigError("key '" + std::string(key) + "': " + e.what());
    }
}

std::int64_t KeyValueDoc::integer(std::string_view key) const {
    try {
        return parse_integer(at(key));
    } catch (const ConfigError& e) {
        throw ConfigError("key '" + std::string(key) + "': " + e.what());
    }
}

std::vector<double> KeyValueDoc::numbers(std::string_view key) const {
    try {
        return parse_doubles(at(key));
    } catch (const ConfigError& e) {
        throw ConfigError("key '" + std::string(key) + "': " + e.what());
    }
}

void KeyValueDoc::reject_unknown(std::span<const std::string_view> allowed) const {
    for (const auto& [k, v] : entries_) {
        if (std::find(allowed.begin(), allowed.end(), std::string_view(k)) == allowed.end())
            throw ConfigError("unknown key '" + k + "'");
    }
}

std::string KeyValueDoc::str() const {
    std::string out;
    for (const auto& [k, v] : entries_) {
        out += k;
        out += " = ";
        out += v;
        out += '\n';
    }
    return out;
}

} // namespace lossbal
