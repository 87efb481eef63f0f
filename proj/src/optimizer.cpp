#include "tailor/optimizer.hpp"
#include "tailor/errors.hpp"
#include "tailor/parallel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace tailor::search {

using space::SubNetSpec;

void validate_config(const SearchConfig& cfg) {
    auto frac_ok = [](double f) { return f > 0.0 && f <= 1.0; };
    if (cfg.population < 2) throw ValidationError("search population must be >= 2");
    if (cfg.generations < 1) throw ValidationError("search generations must be >= 1");
    if (!frac_ok(cfg.parent_fraction) || !frac_ok(cfg.mutate_fraction) ||
        !frac_ok(cfg.crossover_fraction))
        throw ValidationError("search fractions must lie in (0, 1]");
    if (cfg.parent_fraction + cfg.mutate_fraction + cfg.crossover_fraction > 1.0 + 1e-12)
        throw ValidationError("search fractions must sum to at most 1");
    if (cfg.mutation_prob < 0.0 || cfg.mutation_prob > 1.0)
        throw ValidationError("mutation_prob must lie in [0, 1]");
    if (cfg.beam_width < 0) throw ValidationError("beam_width must be >= 0");
}

namespace {

std::string spec_key(const PredictorSet& p, const SubNetSpec& spec) {
    return space::spec_to_string(spec, *p.space, p.model);
}

} // namespace

Evaluator::Score Evaluator::eval(const SubNetSpec& spec) {
    auto key = spec_key(*p_, spec);
    auto it = memo_.find(key);
    if (it != memo_.end()) return it->second;
    Score s;
    s.latency_ms = predict::predict_latency(spec, p_->model, *p_->space, *p_->lut, p_->fusion_rules);
    s.accuracy = predict::predict_accuracy(spec, *p_->table, *p_->space, p_->model);
    ++evaluations_;
    min_latency_ = std::min(min_latency_, s.latency_ms);
    memo_.emplace(key, s);
    return s;
}

void Evaluator::eval_batch(const std::vector<SubNetSpec>& specs, int jobs) {
    // Deduplicate against the memo, evaluate misses in parallel into indexed
    // slots, then merge in canonical order so worker count cannot matter.
    std::vector<std::pair<std::string, const SubNetSpec*>> misses;
    std::set<std::string> seen;
    for (const auto& s : specs) {
        auto key = spec_key(*p_, s);
        if (memo_.count(key) || !seen.insert(key).second) continue;
        misses.emplace_back(key, &s);
    }
    std::sort(misses.begin(), misses.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<Score> scores(misses.size());
    parallel_for(misses.size(), jobs, [&](std::size_t i) {
        Score s;
        s.latency_ms = predict::predict_latency(*misses[i].second, p_->model, *p_->space, *p_->lut,
                                                p_->fusion_rules);
        s.accuracy = predict::predict_accuracy(*misses[i].second, *p_->table, *p_->space, p_->model);
        scores[i] = s;
    });
    for (std::size_t i = 0; i < misses.size(); ++i) {
        ++evaluations_;
        min_latency_ = std::min(min_latency_, scores[i].latency_ms);
        memo_.emplace(misses[i].first, scores[i]);
    }
}

// ---------------------------------------------------------------------------
// Beam initialization
// ---------------------------------------------------------------------------

namespace {

// Active depth of the stage owning a block-scoped dimension under a partial
// assignment; used to skip choices inside already-dropped blocks.
bool block_dropped_under(const PredictorSet& p, const space::Dimension& dim,
                         const SubNetSpec& partial) {
    if (dim.scope != space::Scope::Block) return false;
    auto slash = dim.target_path.rfind('/');
    if (slash == std::string::npos) return false;
    std::string stage_path = dim.target_path.substr(0, slash);
    std::string comp = dim.target_path.substr(slash + 1);
    if (comp.rfind("block[", 0) != 0) return false;
    std::int64_t block_idx = std::strtoll(comp.c_str() + 6, nullptr, 10);

    const ir::TailorModule* stage = ir::find_module(p.model, stage_path);
    if (!stage || !stage->feature.attrs.count("depth")) return false;
    std::int64_t depth = std::get<std::int64_t>(stage->feature.attrs.at("depth").meta);
    auto it = partial.assignment.find(stage_path + "/reduce_depth");
    if (it != partial.assignment.end()) depth += std::get<std::int64_t>(it->second);
    return block_idx >= depth;
}

} // namespace

std::vector<SubNetSpec> beam_init(const PredictorSet& p, double budget_ms, int width) {
    if (width <= 0) return {};
    Evaluator eval(p);
    const auto& dims = p.space->dims;

    // Cheapest candidate per dimension by single-dimension latency.
    std::vector<const AttrValue*> cheapest(dims.size());
    for (std::size_t i = 0; i < dims.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& c : dims[i].candidates) {
            SubNetSpec one;
            one.assignment[dims[i].dim_id] = c;
            double lat = eval.eval(one).latency_ms;
            if (lat < best) {
                best = lat;
                cheapest[i] = &c;
            }
        }
    }

    struct Partial {
        SubNetSpec spec;
        double accuracy;
        double optimistic_latency;
        std::string key;
    };
    auto better = [](const Partial& a, const Partial& b) {
        if (a.accuracy != b.accuracy) return a.accuracy > b.accuracy;
        if (a.optimistic_latency != b.optimistic_latency)
            return a.optimistic_latency < b.optimistic_latency;
        return a.key < b.key;
    };

    auto lower_bound_of = [&](const SubNetSpec& assigned, std::size_t next_dim) {
        SubNetSpec filled = assigned;
        for (std::size_t i = next_dim; i < dims.size(); ++i)
            filled.assignment[dims[i].dim_id] = *cheapest[i];
        return eval.eval(filled).latency_ms;
    };

    std::vector<Partial> beam{{SubNetSpec{}, 0.0, 0.0, ""}};
    beam[0].accuracy = predict::predict_accuracy({}, *p.table, *p.space, p.model);
    beam[0].optimistic_latency = lower_bound_of({}, 0);
    if (beam[0].optimistic_latency > budget_ms) return {};

    for (std::size_t d = 0; d < dims.size(); ++d) {
        std::vector<Partial> next;
        for (const auto& partial : beam) {
            bool dropped = block_dropped_under(p, dims[d], partial.spec);
            for (const auto& c : dims[d].candidates) {
                if (dropped && space::value_to_string(c) !=
                                   space::value_to_string(dims[d].default_value))
                    continue; // collapsed choice: identical architecture
                Partial cand;
                cand.spec = partial.spec;
                cand.spec.assignment[dims[d].dim_id] = c;
                cand.optimistic_latency = lower_bound_of(cand.spec, d + 1);
                if (cand.optimistic_latency > budget_ms) continue;
                cand.accuracy =
                    predict::predict_accuracy(cand.spec, *p.table, *p.space, p.model);
                cand.key = spec_key(p, cand.spec);
                next.push_back(std::move(cand));
            }
        }
        std::sort(next.begin(), next.end(), better);
        // Normalization can collapse two partials to the same architecture.
        std::vector<Partial> unique;
        std::set<std::string> seen;
        for (auto& cand : next) {
            if (!seen.insert(cand.key).second) continue;
            unique.push_back(std::move(cand));
            if (static_cast<int>(unique.size()) == width) break;
        }
        beam = std::move(unique);
        if (beam.empty()) return {};
    }

    std::vector<SubNetSpec> out;
    for (const auto& partial : beam) {
        if (eval.eval(partial.spec).latency_ms <= budget_ms)
            out.push_back(space::normalize_spec(partial.spec, *p.space, p.model));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Genetic search
// ---------------------------------------------------------------------------

namespace {

struct RankedSpec {
    SubNetSpec spec;
    Evaluator::Score score;
    std::string key;
};

bool fitter(const RankedSpec& a, const RankedSpec& b) {
    if (a.score.accuracy != b.score.accuracy) return a.score.accuracy > b.score.accuracy;
    if (a.score.latency_ms != b.score.latency_ms) return a.score.latency_ms < b.score.latency_ms;
    return a.key < b.key;
}

} // namespace

SubNetSpec genetic_search(const PredictorSet& p, double budget_ms, const SearchConfig& cfg,
                          Evaluator* shared_eval) {
    validate_config(cfg);
    Evaluator local_eval(p);
    Evaluator& eval = shared_eval ? *shared_eval : local_eval;
    std::mt19937_64 rng(cfg.seed);
    const auto& dims = p.space->dims;

    auto feasible = [&](const SubNetSpec& s) { return eval.eval(s).latency_ms <= budget_ms; };

    // Seed population: beam results padded with feasible random samples.
    std::vector<SubNetSpec> population;
    for (auto& s : beam_init(p, budget_ms, cfg.beam_width)) {
        population.push_back(std::move(s));
        if (static_cast<int>(population.size()) == cfg.population) break;
    }
    const std::uint64_t attempt_bound =
        1000ULL * static_cast<std::uint64_t>(std::max(cfg.population, 1));
    std::uint64_t attempts = 0;
    while (static_cast<int>(population.size()) < cfg.population && attempts < attempt_bound) {
        ++attempts;
        auto s = space::sample_subnet_rng(*p.space, p.model, rng);
        if (feasible(s)) population.push_back(std::move(s));
    }
    if (population.empty())
        throw InfeasibleError("no architecture satisfies the latency budget " +
                                  std::to_string(budget_ms) + " ms",
                              eval.min_latency_seen());
    for (std::size_t i = 0, seeds = population.size();
         static_cast<int>(population.size()) < cfg.population; ++i)
        population.push_back(population[i % seeds]);

    auto rank = [&](std::vector<SubNetSpec>& specs) {
        eval.eval_batch(specs, cfg.jobs);
        std::vector<RankedSpec> ranked;
        ranked.reserve(specs.size());
        for (auto& s : specs) {
            RankedSpec r;
            r.score = eval.eval(s);
            r.key = spec_key(p, s);
            r.spec = std::move(s);
            ranked.push_back(std::move(r));
        }
        std::sort(ranked.begin(), ranked.end(), fitter);
        return ranked;
    };

    auto ranked = rank(population);
    RankedSpec best = ranked.front();

    const int n_parents =
        std::max(1, static_cast<int>(std::ceil(cfg.parent_fraction * cfg.population)));
    const int n_mutate = static_cast<int>(std::round(cfg.mutate_fraction * cfg.population));
    const int n_cross = static_cast<int>(std::round(cfg.crossover_fraction * cfg.population));

    auto mutate = [&](const SubNetSpec& parent) {
        for (int attempt = 0; attempt < 100; ++attempt) {
            SubNetSpec child = parent;
            for (const auto& d : dims) {
                if (static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0) >=
                    cfg.mutation_prob)
                    continue;
                child.assignment[d.dim_id] = d.candidates[rng() % d.candidates.size()];
            }
            child = space::normalize_spec(child, *p.space, p.model);
            if (feasible(child)) return child;
        }
        return parent; // bounded rejection: fall back, never repair
    };
    auto crossover = [&](const SubNetSpec& a, const SubNetSpec& b) {
        for (int attempt = 0; attempt < 100; ++attempt) {
            std::size_t cut = dims.empty() ? 0 : rng() % (dims.size() + 1);
            SubNetSpec child;
            for (std::size_t i = 0; i < dims.size(); ++i) {
                const SubNetSpec& src = i < cut ? a : b;
                auto it = src.assignment.find(dims[i].dim_id);
                if (it != src.assignment.end()) child.assignment[dims[i].dim_id] = it->second;
            }
            child = space::normalize_spec(child, *p.space, p.model);
            if (feasible(child)) return child;
        }
        return a;
    };

    for (int gen = 0; gen < cfg.generations; ++gen) {
        std::vector<SubNetSpec> next;
        next.reserve(static_cast<std::size_t>(cfg.population));
        for (int i = 0; i < n_parents && i < static_cast<int>(ranked.size()); ++i)
            next.push_back(ranked[static_cast<std::size_t>(i)].spec);
        auto parent_count = next.size();
        auto random_parent = [&]() -> const SubNetSpec& {
            return next[rng() % parent_count];
        };
        for (int i = 0; i < n_mutate; ++i) next.push_back(mutate(random_parent()));
        for (int i = 0; i < n_cross; ++i) {
            const SubNetSpec& a = random_parent();
            const SubNetSpec& b = random_parent();
            next.push_back(crossover(a, b));
        }
        while (static_cast<int>(next.size()) < cfg.population) {
            auto s = space::sample_subnet_rng(*p.space, p.model, rng);
            if (feasible(s)) next.push_back(std::move(s));
        }
        next.resize(static_cast<std::size_t>(cfg.population));

        ranked = rank(next);
        if (fitter(ranked.front(), best)) best = ranked.front();
    }
    return space::normalize_spec(best.spec, *p.space, p.model);
}

// ---------------------------------------------------------------------------
// Pareto sweep
// ---------------------------------------------------------------------------

SweepResult pareto_sweep(const PredictorSet& p, const std::vector<double>& budgets,
                         const SearchConfig& cfg) {
    std::vector<double> sorted = budgets;
    std::sort(sorted.begin(), sorted.end());

    SweepResult result;
    Evaluator eval(p);
    std::vector<ParetoPoint> points;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        SearchConfig per = cfg;
        per.seed = cfg.seed + i;
        try {
            auto spec = genetic_search(p, sorted[i], per, &eval);
            auto score = eval.eval(spec);
            points.push_back({sorted[i], spec, score.latency_ms, score.accuracy});
        } catch (const InfeasibleError&) {
            result.infeasible_budgets.push_back(sorted[i]);
        }
    }

    // Non-dominated filter: keep points whose accuracy strictly improves as
    // latency grows.
    std::sort(points.begin(), points.end(), [](const ParetoPoint& a, const ParetoPoint& b) {
        if (a.pred_latency_ms != b.pred_latency_ms) return a.pred_latency_ms < b.pred_latency_ms;
        return a.pred_accuracy > b.pred_accuracy;
    });
    double best_acc = -std::numeric_limits<double>::infinity();
    for (auto& pt : points) {
        if (pt.pred_accuracy > best_acc) {
            best_acc = pt.pred_accuracy;
            result.frontier.push_back(std::move(pt));
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Frontier I/O
// ---------------------------------------------------------------------------

namespace {

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

} // namespace

void save_frontier(const SweepResult& sweep, const PredictorSet& p, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write frontier '" + path + "'");
    out << "# tfg-frontier/1\n";
    for (double b : sweep.infeasible_budgets)
        out << "# infeasible_budget_ms=" << format_double(b) << "\n";
    out << "budget_ms,pred_latency_ms,pred_accuracy,spec\n";
    for (const auto& pt : sweep.frontier) {
        out << format_double(pt.budget_ms) << "," << format_double(pt.pred_latency_ms) << ","
            << format_double(pt.pred_accuracy) << "," << spec_key(p, pt.spec) << "\n";
    }
}

SweepResult load_frontier(const std::string& path, const PredictorSet& p) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open frontier '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line != "# tfg-frontier/1")
        throw ValidationError("frontier '" + path + "' has unsupported format version");
    SweepResult out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line.rfind("# infeasible_budget_ms=", 0) == 0) {
            out.infeasible_budgets.push_back(std::strtod(line.c_str() + 23, nullptr));
            continue;
        }
        if (line[0] == '#' || line.rfind("budget_ms", 0) == 0) continue;
        ParetoPoint pt;
        std::size_t c1 = line.find(',');
        std::size_t c2 = line.find(',', c1 + 1);
        std::size_t c3 = line.find(',', c2 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos || c3 == std::string::npos)
            throw ParseError("malformed frontier row: " + line);
        pt.budget_ms = std::strtod(line.substr(0, c1).c_str(), nullptr);
        pt.pred_latency_ms = std::strtod(line.substr(c1 + 1, c2 - c1 - 1).c_str(), nullptr);
        pt.pred_accuracy = std::strtod(line.substr(c2 + 1, c3 - c2 - 1).c_str(), nullptr);
        pt.spec = space::spec_from_string(line.substr(c3 + 1), *p.space);
        out.frontier.push_back(std::move(pt));
    }
    return out;
}

} // namespace tailor::search
