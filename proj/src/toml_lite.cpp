#include "tailor/toml_lite.hpp"
#include "tailor/errors.hpp"

#include <cctype>
#include <charconv>

namespace tailor::toml {

namespace {

[[noreturn]] void fail(int line, const std::string& why) {
    throw ParseError("config line " + std::to_string(line) + ": " + why);
}

struct Cursor {
    const std::string& s;
    std::size_t pos = 0;
    int line;

    void skip_ws() {
        while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
    }
    bool done() {
        skip_ws();
        return pos >= s.size() || s[pos] == '#';
    }
    char peek() { return pos < s.size() ? s[pos] : '\0'; }
};

std::string parse_string(Cursor& c) {
    // opening quote consumed by caller check
    ++c.pos;
    std::string out;
    while (c.pos < c.s.size() && c.s[c.pos] != '"') {
        if (c.s[c.pos] == '\\' && c.pos + 1 < c.s.size()) ++c.pos;
        out += c.s[c.pos++];
    }
    if (c.pos >= c.s.size()) fail(c.line, "unterminated string");
    ++c.pos;
    return out;
}

struct Scalar {
    enum class Kind { Int, Float, Str, Bool } kind;
    std::int64_t i = 0;
    double f = 0;
    std::string s;
    bool b = false;
};

Scalar parse_scalar(Cursor& c) {
    c.skip_ws();
    Scalar out;
    if (c.peek() == '"') {
        out.kind = Scalar::Kind::Str;
        out.s = parse_string(c);
        return out;
    }
    std::size_t start = c.pos;
    while (c.pos < c.s.size() && c.s[c.pos] != ',' && c.s[c.pos] != ']' && c.s[c.pos] != '#' &&
           c.s[c.pos] != ' ' && c.s[c.pos] != '\t')
        ++c.pos;
    std::string tok = c.s.substr(start, c.pos - start);
    if (tok.empty()) fail(c.line, "expected a value");
    if (tok == "true" || tok == "false") {
        out.kind = Scalar::Kind::Bool;
        out.b = (tok == "true");
        return out;
    }
    bool is_float = tok.find('.') != std::string::npos || tok.find('e') != std::string::npos ||
                    tok.find('E') != std::string::npos;
    if (is_float) {
        out.kind = Scalar::Kind::Float;
        char* end = nullptr;
        out.f = std::strtod(tok.c_str(), &end);
        if (!end || *end != '\0') fail(c.line, "malformed number '" + tok + "'");
        return out;
    }
    out.kind = Scalar::Kind::Int;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out.i);
    if (ec != std::errc() || p != tok.data() + tok.size())
        fail(c.line, "malformed integer '" + tok + "'");
    return out;
}

Value parse_value(Cursor& c) {
    c.skip_ws();
    Value v;
    if (c.peek() != '[') {
        Scalar s = parse_scalar(c);
        switch (s.kind) {
            case Scalar::Kind::Int: v.data = s.i; break;
            case Scalar::Kind::Float: v.data = s.f; break;
            case Scalar::Kind::Str: v.data = s.s; break;
            case Scalar::Kind::Bool: v.data = s.b; break;
        }
        return v;
    }
    ++c.pos; // '['
    std::vector<Scalar> items;
    c.skip_ws();
    if (c.peek() == ']') {
        ++c.pos;
        v.data = std::vector<std::int64_t>{};
        return v;
    }
    while (true) {
        items.push_back(parse_scalar(c));
        c.skip_ws();
        if (c.peek() == ',') {
            ++c.pos;
            c.skip_ws();
            if (c.peek() == ']') { ++c.pos; break; } // trailing comma
            continue;
        }
        if (c.peek() == ']') { ++c.pos; break; }
        fail(c.line, "expected ',' or ']' in array");
    }
    bool any_float = false, any_str = false, any_other = false;
    for (const auto& s : items) {
        if (s.kind == Scalar::Kind::Float) any_float = true;
        else if (s.kind == Scalar::Kind::Str) any_str = true;
        else if (s.kind != Scalar::Kind::Int) any_other = true;
    }
    if (any_other || (any_str && (any_float || items[0].kind != Scalar::Kind::Str)))
        fail(c.line, "arrays must be homogeneous");
    if (any_str) {
        std::vector<std::string> out;
        for (const auto& s : items) {
            if (s.kind != Scalar::Kind::Str) fail(c.line, "arrays must be homogeneous");
            out.push_back(s.s);
        }
        v.data = out;
    } else if (any_float) {
        std::vector<double> out;
        for (const auto& s : items)
            out.push_back(s.kind == Scalar::Kind::Float ? s.f : static_cast<double>(s.i));
        v.data = out;
    } else {
        std::vector<std::int64_t> out;
        for (const auto& s : items) out.push_back(s.i);
        v.data = out;
    }
    return v;
}

bool valid_key_char(char ch) {
    return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '.' || ch == '-';
}

} // namespace

std::vector<Entry> parse(const std::string& text) {
    std::vector<Entry> entries;
    std::string section;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t eol = text.find('\n', pos);
        std::string line = text.substr(pos, eol == std::string::npos ? std::string::npos : eol - pos);
        pos = eol == std::string::npos ? text.size() + 1 : eol + 1;
        ++line_no;

        Cursor c{line, 0, line_no};
        if (c.done()) continue;
        if (c.peek() == '[') {
            ++c.pos;
            std::size_t start = c.pos;
            while (c.pos < line.size() && line[c.pos] != ']') ++c.pos;
            if (c.pos >= line.size()) fail(line_no, "unterminated section header");
            section = line.substr(start, c.pos - start);
            ++c.pos;
            if (!c.done()) fail(line_no, "unexpected content after section header");
            continue;
        }
        std::size_t kstart = c.pos;
        while (c.pos < line.size() && valid_key_char(line[c.pos])) ++c.pos;
        std::string key = line.substr(kstart, c.pos - kstart);
        if (key.empty()) fail(line_no, "expected a key");
        c.skip_ws();
        if (c.peek() != '=') fail(line_no, "expected '=' after key '" + key + "'");
        ++c.pos;
        Entry e{section, key, parse_value(c), line_no};
        if (!c.done()) fail(line_no, "unexpected trailing content");
        entries.push_back(std::move(e));
    }
    return entries;
}

} // namespace tailor::toml
