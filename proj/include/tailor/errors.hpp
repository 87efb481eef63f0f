#pragma once

#include <stdexcept>
#include <string>

namespace tailor {

// Malformed input documents (graph files, configs, artifact files).
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// Structurally well-formed input that violates a model/space invariant.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape contradiction discovered while updating a module tree.
class LegalityError : public std::runtime_error {
public:
    LegalityError(const std::string& msg, std::string path_a, std::string path_b)
        : std::runtime_error(msg), first_path(std::move(path_a)), second_path(std::move(path_b)) {}
    std::string first_path;
    std::string second_path;
};

// No feasible architecture exists under the requested budget.
class InfeasibleError : public std::runtime_error {
public:
    InfeasibleError(const std::string& msg, double min_known_latency_ms)
        : std::runtime_error(msg), min_known_latency_ms(min_known_latency_ms) {}
    double min_known_latency_ms;
};

} // namespace tailor
