#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace tailor::toml {

// Minimal TOML subset: [dotted.section] headers, `key = value` pairs (keys may
// be dotted), strings, integers, floats, booleans and flat homogeneous arrays,
// '#' comments. Enough for modification-space configuration files.

struct Value {
    std::variant<std::int64_t, double, std::string, bool,
                 std::vector<std::int64_t>, std::vector<double>,
                 std::vector<std::string>> data;
};

struct Entry {
    std::string section; // "" for root
    std::string key;     // possibly dotted
    Value value;
    int line = 0;
};

// Throws ParseError with a line number on malformed input.
std::vector<Entry> parse(const std::string& text);

} // namespace tailor::toml
