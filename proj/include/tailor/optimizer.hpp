#pragma once

#include "tailor/enumerator.hpp"
#include "tailor/modspace.hpp"
#include "tailor/predictors.hpp"

#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace tailor::search {

struct SearchConfig {
    int population = 100;
    int generations = 500;
    double mutation_prob = 0.1;
    double parent_fraction = 0.25;
    double mutate_fraction = 0.5;
    double crossover_fraction = 0.25;
    int beam_width = 8;
    std::uint64_t seed = 0;
    int jobs = 1;
};

void validate_config(const SearchConfig& cfg);

// Everything the search needs to score a candidate.
struct PredictorSet {
    const space::ModificationSpace* space = nullptr;
    ir::ModulePtr model;
    const predict::SensitivityTable* table = nullptr;
    const predict::LatencyLUT* lut = nullptr;
    std::vector<enumerate::FusionRule> fusion_rules;
};

// Memoizing wrapper around the pure predictors; evaluation results are keyed
// by canonical spec string so outcomes are independent of evaluation order.
class Evaluator {
public:
    explicit Evaluator(const PredictorSet& p) : p_(&p) {}
    struct Score {
        double latency_ms;
        double accuracy;
    };
    Score eval(const space::SubNetSpec& spec);
    void eval_batch(const std::vector<space::SubNetSpec>& specs, int jobs);
    std::uint64_t evaluations() const { return evaluations_; }
    double min_latency_seen() const { return min_latency_; }

private:
    const PredictorSet* p_;
    std::map<std::string, Score> memo_;
    std::uint64_t evaluations_ = 0;
    double min_latency_ = std::numeric_limits<double>::infinity();
};

// Beam over dimensions in canonical order (global, stages, blocks), scored by
// predicted accuracy with unassigned dimensions at their defaults, pruning
// partials whose optimistic latency (remaining dims at their cheapest choices)
// exceeds the budget. Empty result signals infeasibility.
std::vector<space::SubNetSpec> beam_init(const PredictorSet& p, double budget_ms, int width);

// Genetic search seeded from beam_init. Deterministic under cfg.seed; ties
// break toward lower latency, then lexicographic spec order. Throws
// InfeasibleError carrying the minimum latency seen when nothing fits.
space::SubNetSpec genetic_search(const PredictorSet& p, double budget_ms, const SearchConfig& cfg,
                                 Evaluator* shared_eval = nullptr);

struct ParetoPoint {
    double budget_ms;
    space::SubNetSpec spec;
    double pred_latency_ms;
    double pred_accuracy;
};

struct SweepResult {
    std::vector<ParetoPoint> frontier;  // non-dominated, ascending latency
    std::vector<double> infeasible_budgets;
};

SweepResult pareto_sweep(const PredictorSet& p, const std::vector<double>& budgets,
                         const SearchConfig& cfg);

// Frontier file: "# tfg-frontier/1" header then CSV rows
// budget_ms,pred_latency_ms,pred_accuracy,spec.
void save_frontier(const SweepResult& sweep, const PredictorSet& p, const std::string& path);
SweepResult load_frontier(const std::string& path, const PredictorSet& p);

} // namespace tailor::search
