#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "tailor/compiler.hpp"
#include "tailor/errors.hpp"
#include "tailor/fixtures.hpp"
#include "tailor/optimizer.hpp"

#include <filesystem>

using namespace tailor;

namespace {

struct Bench {
    compiler::CompileResult r;
    predict::SensitivityTable table;
    predict::LatencyLUT lut;
    search::PredictorSet p;
    std::unique_ptr<predict::SyntheticOracle> oracle;

    Bench(const ComputationGraph& g, const std::string& cfg_text, std::uint64_t seed,
          double eps = 0.0)
        : r(compiler::compile(g, space::parse_config(cfg_text))) {
        oracle = std::make_unique<predict::SyntheticOracle>(r.space, r.model, seed, eps);
        table = predict::build_sensitivity_table(r.space, r.model, *oracle);
        auto rules = enumerate::default_fusion_rules();
        auto keys = enumerate::enumerate_unique_operators(r.model, r.space, rules);
        std::vector<enumerate::OperatorFeatureKey> manifest(keys.begin(), keys.end());
        predict::AnalyticalBackend backend("bench-device");
        lut = predict::build_latency_lut(manifest, backend, "bench-device",
                                         enumerate::fusion_ruleset_hash(rules), "test");
        p = {&r.space, r.model, &table, &lut, rules};
    }
};

struct Exhaustive {
    std::vector<std::pair<double, double>> lat_acc; // per spec
    std::vector<space::SubNetSpec> specs;

    Exhaustive(Bench& b) {
        search::Evaluator eval(b.p);
        for (auto& s : space::enumerate_all_specs(b.r.space, b.r.model)) {
            auto score = eval.eval(s);
            lat_acc.emplace_back(score.latency_ms, score.accuracy);
            specs.push_back(std::move(s));
        }
    }
    double min_latency() const {
        double m = lat_acc[0].first;
        for (auto& [l, a] : lat_acc) m = std::min(m, l);
        return m;
    }
    double max_latency() const {
        double m = lat_acc[0].first;
        for (auto& [l, a] : lat_acc) m = std::max(m, l);
        return m;
    }
    // best accuracy among specs with latency <= budget
    std::pair<double, const space::SubNetSpec*> best_under(double budget) const {
        double best = -1e30;
        const space::SubNetSpec* arg = nullptr;
        for (std::size_t i = 0; i < lat_acc.size(); ++i) {
            if (lat_acc[i].first > budget) continue;
            if (lat_acc[i].second > best) {
                best = lat_acc[i].second;
                arg = &specs[i];
            }
        }
        return {best, arg};
    }
};

search::SearchConfig test_config(std::uint64_t seed) {
    search::SearchConfig cfg;
    cfg.population = 24;
    cfg.generations = 30;
    cfg.beam_width = 6;
    cfg.seed = seed;
    return cfg;
}

} // namespace

TEST_CASE("beam keeps the most accurate spec when the budget allows it") {
    Bench b(fixtures::tinynet1s(), fixtures::tinynet1s_config(), 21);
    Exhaustive ex(b);

    search::Evaluator eval(b.p);
    // The globally most accurate spec (ties by latency) is the default spec
    // under a monotone synthetic oracle; verify via the exhaustive table.
    auto best = ex.best_under(ex.max_latency() + 1.0);
    REQUIRE(best.second != nullptr);
    double budget = eval.eval(*best.second).latency_ms;

    auto beam = search::beam_init(b.p, budget, 8);
    REQUIRE(!beam.empty());
    bool found = false;
    auto want = space::spec_to_string(*best.second, b.r.space, b.r.model);
    for (const auto& s : beam)
        if (space::spec_to_string(s, b.r.space, b.r.model) == want) found = true;
    CHECK(found);
}

TEST_CASE("beam returns nothing below the minimum achievable latency") {
    Bench b(fixtures::tinynet1s(), fixtures::tinynet1s_config(), 21);
    Exhaustive ex(b);
    CHECK(search::beam_init(b.p, ex.min_latency() * 0.5, 8).empty());
}

TEST_CASE("width-1 beam equals the greedy per-dimension trace") {
    Bench b(fixtures::tinynet1s(), fixtures::tinynet1s_config(), 33);
    Exhaustive ex(b);
    double budget = (ex.min_latency() + ex.max_latency()) / 2;

    auto beam = search::beam_init(b.p, budget, 1);
    REQUIRE(beam.size() == 1);

    // Exhaustive greedy trace mirroring the documented beam rule.
    search::Evaluator eval(b.p);
    space::SubNetSpec greedy;
    for (const auto& d : b.r.space.dims) {
        double best_acc = -1e30, best_lb = 1e30;
        std::string best_key;
        AttrValue chosen = d.default_value;
        bool any = false;
        for (const auto& c : d.candidates) {
            auto partial = greedy;
            partial.assignment[d.dim_id] = c;
            // optimistic completion: remaining dims at their cheapest choice
            auto filled = partial;
            bool later = false;
            for (const auto& d2 : b.r.space.dims) {
                if (d2.dim_id == d.dim_id) { later = true; continue; }
                if (!later || filled.assignment.count(d2.dim_id)) continue;
                double cheapest = 1e30;
                AttrValue pick = d2.default_value;
                for (const auto& c2 : d2.candidates) {
                    space::SubNetSpec one;
                    one.assignment[d2.dim_id] = c2;
                    double l = eval.eval(one).latency_ms;
                    if (l < cheapest) { cheapest = l; pick = c2; }
                }
                filled.assignment[d2.dim_id] = pick;
            }
            double lb = eval.eval(filled).latency_ms;
            if (lb > budget) continue;
            double acc = predict::predict_accuracy(partial, *b.p.table, b.r.space, b.r.model);
            auto key = space::spec_to_string(partial, b.r.space, b.r.model);
            if (acc > best_acc || (acc == best_acc && (lb < best_lb ||
                                                       (lb == best_lb && key < best_key)))) {
                best_acc = acc;
                best_lb = lb;
                best_key = key;
                chosen = c;
                any = true;
            }
        }
        REQUIRE(any);
        greedy.assignment[d.dim_id] = chosen;
    }
    CHECK(space::spec_to_string(beam[0], b.r.space, b.r.model) ==
          space::spec_to_string(greedy, b.r.space, b.r.model));
}

TEST_CASE("genetic search finds the feasible optimum on TinyNet-1S across budgets") {
    Bench b(fixtures::tinynet1s(), fixtures::tinynet1s_config(), 5);
    Exhaustive ex(b);
    double lo = ex.min_latency(), hi = ex.max_latency();
    for (int i = 0; i < 10; ++i) {
        double budget = lo + (hi - lo) * (i + 0.5) / 10.0;
        auto spec = search::genetic_search(b.p, budget, test_config(100 + i));
        search::Evaluator eval(b.p);
        auto score = eval.eval(spec);
        auto best = ex.best_under(budget);
        CHECK(score.latency_ms <= budget);
        CHECK(score.accuracy >= best.first - 0.5);
    }
}

TEST_CASE("an impossible budget raises the documented infeasibility error") {
    Bench b(fixtures::tinynet1s(), fixtures::tinynet1s_config(), 5);
    Exhaustive ex(b);
    try {
        search::genetic_search(b.p, ex.min_latency() * 0.25, test_config(1));
        FAIL("expected infeasibility");
    } catch (const InfeasibleError& e) {
        CHECK(e.min_known_latency_ms >= ex.min_latency() * 0.25);
        CHECK(std::isfinite(e.min_known_latency_ms));
    }
}

TEST_CASE("search is deterministic under a seed and independent of worker count") {
    Bench b(fixtures::tinynet4s(), fixtures::tinynet4s_config(), 5);
    search::Evaluator probe(b.p);
    double budget = probe.eval({}).latency_ms * 0.7;

    auto cfg = test_config(77);
    auto s1 = search::genetic_search(b.p, budget, cfg);
    auto s2 = search::genetic_search(b.p, budget, cfg);
    cfg.jobs = 4;
    auto s3 = search::genetic_search(b.p, budget, cfg);
    auto key = [&](const space::SubNetSpec& s) {
        return space::spec_to_string(s, b.r.space, b.r.model);
    };
    CHECK(key(s1) == key(s2));
    CHECK(key(s1) == key(s3));
}

TEST_CASE("search beats an equal-evaluation random sample") {
    Bench b(fixtures::tinynet4s(), fixtures::tinynet4s_config(), 5);
    search::Evaluator probe(b.p);
    double budget = probe.eval({}).latency_ms * 0.75;

    search::Evaluator ga_eval(b.p);
    auto cfg = test_config(123);
    auto ga_spec = search::genetic_search(b.p, budget, cfg, &ga_eval);
    double ga_acc = ga_eval.eval(ga_spec).accuracy;
    auto evals = ga_eval.evaluations();

    std::mt19937_64 rng(321);
    search::Evaluator rnd_eval(b.p);
    double best_random = -1e30;
    for (std::uint64_t i = 0; i < evals; ++i) {
        auto s = space::sample_subnet_rng(b.r.space, b.r.model, rng);
        auto score = rnd_eval.eval(s);
        if (score.latency_ms <= budget) best_random = std::max(best_random, score.accuracy);
    }
    CHECK(ga_acc >= best_random);
}

TEST_CASE("sweeps produce a monotone frontier and collapse duplicates") {
    Bench b(fixtures::tinynet1s(), fixtures::tinynet1s_config(), 9);
    Exhaustive ex(b);
    double lo = ex.min_latency(), hi = ex.max_latency();

    std::vector<double> budgets;
    for (int i = 0; i < 12; ++i) budgets.push_back(lo + (hi - lo) * i / 11.0);
    budgets.push_back(budgets[3]); // duplicate
    budgets.push_back(lo * 0.1);   // infeasible

    auto sweep = search::pareto_sweep(b.p, budgets, test_config(55));
    REQUIRE(!sweep.frontier.empty());
    CHECK(sweep.infeasible_budgets.size() == 1);
    for (std::size_t i = 1; i < sweep.frontier.size(); ++i) {
        CHECK(sweep.frontier[i].pred_latency_ms > sweep.frontier[i - 1].pred_latency_ms);
        CHECK(sweep.frontier[i].pred_accuracy > sweep.frontier[i - 1].pred_accuracy);
    }
    for (const auto& pt : sweep.frontier) CHECK(pt.pred_latency_ms <= pt.budget_ms);

    SUBCASE("single budget gives a single point") {
        auto one = search::pareto_sweep(b.p, {hi}, test_config(55));
        CHECK(one.frontier.size() == 1);
    }
}

TEST_CASE("frontier files round-trip") {
    Bench b(fixtures::tinynet1s(), fixtures::tinynet1s_config(), 9);
    search::Evaluator probe(b.p);
    double base_lat = probe.eval({}).latency_ms;
    auto sweep = search::pareto_sweep(b.p, {base_lat * 0.6, base_lat * 0.8, base_lat},
                                      test_config(2));
    auto path = (std::filesystem::temp_directory_path() / "tailor_frontier.csv").string();
    search::save_frontier(sweep, b.p, path);
    auto loaded = search::load_frontier(path, b.p);
    REQUIRE(loaded.frontier.size() == sweep.frontier.size());
    for (std::size_t i = 0; i < loaded.frontier.size(); ++i) {
        CHECK(loaded.frontier[i].pred_latency_ms == sweep.frontier[i].pred_latency_ms);
        CHECK(loaded.frontier[i].pred_accuracy == sweep.frontier[i].pred_accuracy);
        CHECK(space::spec_to_string(loaded.frontier[i].spec, b.r.space, b.r.model) ==
              space::spec_to_string(sweep.frontier[i].spec, b.r.space, b.r.model));
    }
    std::filesystem::remove(path);
}
