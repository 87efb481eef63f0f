#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "tailor/compiler.hpp"
#include "tailor/errors.hpp"
#include "tailor/fixtures.hpp"
#include "tailor/modspace.hpp"

#include <cmath>
#include <set>

using namespace tailor;

namespace {

compiler::CompileResult compiled(const ComputationGraph& g, const std::string& cfg_text) {
    return compiler::compile(g, space::parse_config(cfg_text));
}

} // namespace

TEST_CASE("the example config document parses verbatim") {
    auto cfg = space::parse_config(fixtures::tinynet_example_config());
    CHECK(cfg.title == "Example");
    CHECK(cfg.block_templates == std::vector<std::string>{"FFNBlock"});
    REQUIRE(cfg.global_vars.size() == 1);
    CHECK(cfg.global_vars[0].first == "resolution");
    REQUIRE(cfg.global_vars[0].second.size() == 4);
    CHECK(std::get<std::int64_t>(cfg.global_vars[0].second[0]) == 128);
    CHECK(std::get<std::int64_t>(cfg.global_vars[0].second[3]) == 224);
    REQUIRE(cfg.stage_vars.size() == 1);
    CHECK(std::get<std::int64_t>(cfg.stage_vars[0].second[0]) == -3);
    REQUIRE(cfg.block_vars.size() == 1);
    CHECK(cfg.block_vars[0].template_name == "FFNBlock");
    CHECK(cfg.block_vars[0].attr == "expand_ratio");
}

TEST_CASE("title-only config gives a zero-dimension space counting one variant") {
    auto cfg = space::parse_config("title = \"Empty\"\n");
    CHECK(cfg.block_templates.empty());
    auto r = compiler::compile(fixtures::tinynet(), cfg);
    CHECK(r.space.dims.empty());
    CHECK(space::count_variants(r.space, r.model).to_string() == "1");
    CHECK(space::sample_subnet(r.space, r.model, 1).assignment.empty());
    CHECK(space::enumerate_all_specs(r.space, r.model).size() == 1);
}

TEST_CASE("positive reduce_depth values are rejected at parse time") {
    CHECK_THROWS_AS(space::parse_config("[var.stage_vars]\nreduce_depth = [1]\n"), ValidationError);
}

TEST_CASE("TinyNet-1S counts 78 distinct variants, matching brute force") {
    auto r = compiled(fixtures::tinynet1s(), fixtures::tinynet1s_config());
    CHECK(space::count_variants(r.space, r.model).to_string() == "78");

    auto specs = space::enumerate_all_specs(r.space, r.model);
    CHECK(specs.size() == 78);

    // Distinct specs build distinct architectures.
    std::set<std::string> forms;
    for (const auto& s : specs)
        forms.insert(canonical_form(space::apply_subnet(r.model, s, r.space)));
    CHECK(forms.size() == 78);
}

TEST_CASE("TinyNet full config counts match enumeration") {
    auto r = compiled(fixtures::tinynet(), fixtures::tinynet_full_config());
    auto n = space::count_variants(r.space, r.model);
    CHECK(n.to_string() == "468");
    CHECK(space::enumerate_all_specs(r.space, r.model).size() == 468);
}

TEST_CASE("TinyNet-4S counts about 2e4 variants") {
    auto r = compiled(fixtures::tinynet4s(), fixtures::tinynet4s_config());
    CHECK(space::count_variants(r.space, r.model).to_string() == "21168");
}

TEST_CASE("sampling is deterministic under a seed") {
    auto r = compiled(fixtures::tinynet1s(), fixtures::tinynet1s_config());
    auto a = space::sample_subnet(r.space, r.model, 1234);
    auto b = space::sample_subnet(r.space, r.model, 1234);
    CHECK(a == b);
    CHECK(space::sample_subnet(r.space, r.model, 0).assignment !=
          space::sample_subnet(r.space, r.model, 99999).assignment);
}

TEST_CASE("per-dimension sampling frequencies stay within 3 sigma") {
    auto r = compiled(fixtures::tinynet1s(), fixtures::tinynet1s_config());
    const int n = 10000;
    std::map<std::string, std::map<std::string, int>> counts;
    std::map<std::string, int> active_draws;
    std::mt19937_64 rng(13);
    for (int i = 0; i < n; ++i) {
        auto spec = space::sample_subnet_rng(r.space, r.model, rng);
        for (const auto& d : r.space.dims) {
            // Normalization resets dropped-block dims; count a draw only when
            // the dimension survives (its block is active under the spec).
            bool block_scope = d.scope == space::Scope::Block;
            auto it = spec.assignment.find(d.dim_id);
            std::string v = it != spec.assignment.end() ? space::value_to_string(it->second)
                                                        : space::value_to_string(d.default_value);
            if (block_scope && it == spec.assignment.end()) {
                // Could be a genuine default draw or a collapsed dim; skip the
                // ambiguity by only counting explicit survivals for block dims
                // of dropped positions. Stage/global dims are always counted.
                auto depth_it = spec.assignment.find("stage[0]/reduce_depth");
                std::int64_t reduce = depth_it == spec.assignment.end()
                                          ? 0
                                          : std::get<std::int64_t>(depth_it->second);
                std::int64_t active_depth = 3 + reduce;
                auto bpos = d.target_path.find("block[");
                std::int64_t bidx = std::strtoll(d.target_path.c_str() + bpos + 6, nullptr, 10);
                if (bidx >= active_depth) continue; // dropped: draw not observable
            }
            ++counts[d.dim_id][v];
            ++active_draws[d.dim_id];
        }
    }
    for (const auto& d : r.space.dims) {
        double p = 1.0 / static_cast<double>(d.candidates.size());
        int total = active_draws[d.dim_id];
        double sigma = std::sqrt(p * (1 - p) * total);
        for (const auto& c : d.candidates) {
            auto v = space::value_to_string(c);
            double observed = counts[d.dim_id][v];
            CAPTURE(d.dim_id);
            CAPTURE(v);
            CHECK(std::abs(observed - p * total) <= 3.0 * sigma + 1.0);
        }
    }
}

TEST_CASE("empty spec builds the original graph") {
    auto r = compiled(fixtures::tinynet1s(), fixtures::tinynet1s_config());
    auto g = space::apply_subnet(r.model, {}, r.space);
    CHECK(graph_isomorphic(g, fixtures::tinynet1s()));
}

TEST_CASE("depth reduction drops exactly the trailing blocks' nodes") {
    auto r = compiled(fixtures::tinynet1s(), fixtures::tinynet1s_config());
    space::SubNetSpec spec;
    spec.assignment["stage[0]/reduce_depth"] = std::int64_t(-2);
    auto g = space::apply_subnet(r.model, spec, r.space);
    CHECK(g.nodes.size() == 21 - 12);
}

TEST_CASE("specs differing only in dropped-block choices are the same architecture") {
    auto r = compiled(fixtures::tinynet1s(), fixtures::tinynet1s_config());
    space::SubNetSpec a, b;
    a.assignment["stage[0]/reduce_depth"] = std::int64_t(-2);
    b = a;
    b.assignment["stage[0]/block[2]/expand_ratio"] = 2.0; // block 2 is dropped
    CHECK(space::spec_to_string(a, r.space, r.model) == space::spec_to_string(b, r.space, r.model));
    CHECK(graph_isomorphic(space::apply_subnet(r.model, a, r.space),
                           space::apply_subnet(r.model, b, r.space)));
}

TEST_CASE("monotone legality: moving any dimension to its default keeps a spec legal") {
    auto r = compiled(fixtures::tinynet4s(), fixtures::tinynet4s_config());
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        auto spec = space::sample_subnet(r.space, r.model, seed);
        CHECK_NOTHROW(space::apply_subnet(r.model, spec, r.space));
        for (const auto& [dim_id, value] : spec.assignment) {
            auto relaxed = spec;
            relaxed.assignment.erase(dim_id);
            CHECK_NOTHROW(space::apply_subnet(r.model, relaxed, r.space));
        }
    }
}

TEST_CASE("spec strings round-trip") {
    auto r = compiled(fixtures::tinynet1s(), fixtures::tinynet1s_config());
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto spec = space::sample_subnet(r.space, r.model, seed);
        auto text = space::spec_to_string(spec, r.space, r.model);
        auto parsed = space::spec_from_string(text, r.space);
        CHECK(space::spec_to_string(parsed, r.space, r.model) == text);
    }
    CHECK(space::spec_from_string("default", r.space).assignment.empty());
    CHECK_THROWS_AS(space::spec_from_string("nope=3", r.space), ValidationError);
    CHECK_THROWS_AS(space::spec_from_string("global/resolution=999", r.space), ValidationError);
}

TEST_CASE("space serialization round-trips") {
    auto r = compiled(fixtures::tinynet4s(), fixtures::tinynet4s_config());
    auto text = space::space_to_json(r.space);
    auto loaded = space::space_from_json(text);
    CHECK(space::space_to_json(loaded) == text);
}
