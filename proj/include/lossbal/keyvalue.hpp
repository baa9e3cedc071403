#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace lossbal {

/// Line-oriented `key = value` text. Blank lines and lines starting with '#'
/// are ignored. Keys may repeat; order is preserved.
class KeyValueDoc {
public:
    static KeyValueDoc parse(std::string_view text);

    void add(std::string key, std::string value);
    void add(std::string key, double value);
    void add(std::string key, std::span<const double> values);

    bool contains(std::string_view key) const;
    /// Last value for key, or nullopt.
    std::optional<std::string> find(std::string_view key) const;
    /// Value for key; throws ConfigError if absent.
    std::string at(std::string_view key) const;
    std::vector<std::string> all(std::string_view key) const;

    double number(std::string_view key) const;
    std::int64_t integer(std::string_view key) const;
    std::vector<double> numbers(std::string_view key) const;

    /// Throws ConfigError naming the first key not in `allowed`.
    void reject_unknown(std::span<const std::string_view> allowed) const;

    const std::vector<std::pair<std::string, std::string>>& entries() const noexcept { return entries_; }
    std::string str() const;

private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

/// Shortest form is not used; always 17 significant digits so text round-trips exactly.
std::string format_double(double v);
double parse_double(std::string_view text);
std::int64_t parse_integer(std::string_view text);
/// Whitespace- or comma-separated numbers.
std::vector<double> parse_doubles(std::string_view text);
std::vector<std::string> split(std::string_view text, char sep);
std::string_view trim(std::string_view text) noexcept;

} // namespace lossbal
