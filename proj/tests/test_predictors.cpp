#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "tailor/compiler.hpp"
#include "tailor/errors.hpp"
#include "tailor/fixtures.hpp"
#include "tailor/predictors.hpp"
#include "support/oracles.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>

using namespace tailor;

namespace {

compiler::CompileResult compiled(const ComputationGraph& g, const std::string& cfg_text) {
    return compiler::compile(g, space::parse_config(cfg_text));
}

std::vector<enumerate::OperatorFeatureKey> manifest_for(const compiler::CompileResult& r,
                                                        const std::vector<enumerate::FusionRule>& rules) {
    auto keys = enumerate::enumerate_unique_operators(r.model, r.space, rules);
    return std::vector<enumerate::OperatorFeatureKey>(keys.begin(), keys.end());
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

} // namespace

TEST_CASE("analytical backend is pure and device-specific") {
    auto r = compiled(fixtures::tinynet1s(), fixtures::tinynet1s_config());
    auto manifest = manifest_for(r, {});
    predict::AnalyticalBackend a("pixel8"), a2("pixel8"), b("orin");
    for (const auto& key : manifest) {
        auto s1 = a.measure(key);
        auto s2 = a2.measure(key);
        CHECK(s1.latency_ms == s2.latency_ms);
        CHECK(s1.latency_ms >= 0);
        REQUIRE(s1.energy_mj.has_value());
    }
    bool any_diff = false;
    for (const auto& key : manifest)
        if (a.measure(key).latency_ms != b.measure(key).latency_ms) any_diff = true;
    CHECK(any_diff);
}

TEST_CASE("LUT building calls the backend once per unique key") {
    auto r = compiled(fixtures::tinynet4s(), fixtures::tinynet4s_config());
    auto rules = enumerate::default_fusion_rules();
    auto manifest = manifest_for(r, rules);
    predict::AnalyticalBackend backend("pixel8");
    auto lut = predict::build_latency_lut(manifest, backend, "pixel8",
                                          enumerate::fusion_ruleset_hash(rules), "test", 2);
    CHECK(backend.call_count() == manifest.size());
    CHECK(lut.entries.size() == manifest.size());
}

TEST_CASE("missing measurement-file keys produce a partial-LUT error naming them") {
    auto r = compiled(fixtures::tinynet1s(), fixtures::tinynet1s_config());
    auto manifest = manifest_for(r, {});
    predict::AnalyticalBackend backend("pixel8");
    auto full = predict::build_latency_lut(manifest, backend, "pixel8", 0, "test");

    // Drop one entry and round-trip through a measurement file.
    auto dropped_key = full.entries.begin()->first;
    predict::LatencyLUT partial = full;
    partial.entries.erase(dropped_key);
    auto path = temp_path("tailor_partial_lut.txt");
    predict::save_lut(partial, path);
    predict::MeasurementFileBackend file_backend(path);
    try {
        predict::build_latency_lut(manifest, file_backend, "pixel8", 0, "test");
        FAIL("expected a partial-LUT error");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find(dropped_key) != std::string::npos);
    }
    std::filesystem::remove(path);
}

TEST_CASE("LUT files round-trip exactly") {
    auto r = compiled(fixtures::tinynet1s(), fixtures::tinynet1s_config());
    auto rules = enumerate::default_fusion_rules();
    auto manifest = manifest_for(r, rules);
    predict::AnalyticalBackend backend("orin");
    auto lut = predict::build_latency_lut(manifest, backend, "orin",
                                          enumerate::fusion_ruleset_hash(rules), "2024-01-01");
    auto path = temp_path("tailor_lut_roundtrip.txt");
    predict::save_lut(lut, path);
    auto loaded = predict::load_lut(path);
    CHECK(loaded.provenance.device_id == "orin");
    CHECK(loaded.provenance.created_at == "2024-01-01");
    CHECK(loaded.provenance.fusion_ruleset_hash == lut.provenance.fusion_ruleset_hash);
    REQUIRE(loaded.entries.size() == lut.entries.size());
    for (const auto& [k, s] : lut.entries) {
        CHECK(loaded.entries.at(k).latency_ms == s.latency_ms); // exact round-trip
        CHECK(loaded.entries.at(k).energy_mj == s.energy_mj);
    }
    std::filesystem::remove(path);
}

TEST_CASE("latency is additive over LUT entries") {
    predict::LatencyLUT lut;
    enumerate::OpFeature f;
    f.op_type = "relu";
    f.in_shapes = {TensorShape{{1, 4}, Dtype::Float32}};
    f.out_shapes = f.in_shapes;
    enumerate::OperatorFeatureKey k1{{f}, ""};
    k1.text = enumerate::serialize_key(k1.op_seq);
    f.op_type = "gelu";
    enumerate::OperatorFeatureKey k2{{f}, ""};
    k2.text = enumerate::serialize_key(k2.op_seq);
    lut.entries[k1.text] = {1.5, std::nullopt};
    lut.entries[k2.text] = {2.5, std::nullopt};

    CHECK(predict::sum_cost({}, lut).latency_ms == 0.0);
    CHECK(predict::sum_cost({k1, k2}, lut).latency_ms == 4.0);
    CHECK_THROWS_AS(predict::sum_cost({k1, k2, enumerate::parse_key(
                         "softmax{}(1x4:float32)->(1x4:float32)")}, lut),
                    ValidationError);
}

TEST_CASE("prediction equals whole-graph costing on random specs, fused and unfused") {
    auto r = compiled(fixtures::tinynet4s(), fixtures::tinynet4s_config());
    for (bool fused : {false, true}) {
        std::vector<enumerate::FusionRule> rules =
            fused ? enumerate::default_fusion_rules() : std::vector<enumerate::FusionRule>{};
        auto manifest = manifest_for(r, rules);
        predict::AnalyticalBackend backend("pixel8");
        auto lut = predict::build_latency_lut(manifest, backend, "pixel8",
                                              enumerate::fusion_ruleset_hash(rules), "test");
        for (std::uint64_t seed = 0; seed < 150; ++seed) {
            auto spec = space::sample_subnet(r.space, r.model, seed);
            double predicted = predict::predict_latency(spec, r.model, r.space, lut, rules);

            auto g = space::apply_subnet(r.model, spec, r.space);
            auto seq = oracles::built_graph_key_sequence(g, rules);
            std::sort(seq.begin(), seq.end()); // the documented summation order
            double oracle = 0;
            for (const auto& text : seq) oracle += lut.entries.at(text).latency_ms;
            CHECK(predicted == oracle); // exact, zero tolerance
        }
    }
}

TEST_CASE("fusion rules without a matching pattern change nothing") {
    auto r = compiled(fixtures::tinynet1s(), fixtures::tinynet1s_config());
    std::vector<enumerate::FusionRule> absent = {{{"conv2d", "batchnorm"}, "conv_bn"}};
    auto m_plain = manifest_for(r, {});
    auto m_absent = manifest_for(r, absent);
    predict::AnalyticalBackend backend("pixel8");
    auto lut_plain = predict::build_latency_lut(m_plain, backend, "pixel8", 0, "t");
    auto lut_absent = predict::build_latency_lut(m_absent, backend, "pixel8", 0, "t");
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        auto spec = space::sample_subnet(r.space, r.model, seed);
        CHECK(predict::predict_latency(spec, r.model, r.space, lut_plain, {}) ==
              predict::predict_latency(spec, r.model, r.space, lut_absent, absent));
    }

    // A matching rule must reduce the predicted cost (intermediates stay on chip).
    std::vector<enumerate::FusionRule> matching = {{{"conv2d", "relu"}, "conv_relu"}};
    auto m_match = manifest_for(r, matching);
    auto lut_match = predict::build_latency_lut(m_match, backend, "pixel8", 0, "t");
    CHECK(predict::predict_latency({}, r.model, r.space, lut_match, matching) <
          predict::predict_latency({}, r.model, r.space, lut_plain, {}));
}

TEST_CASE("energy aggregates like latency") {
    auto r = compiled(fixtures::tinynet1s(), fixtures::tinynet1s_config());
    auto manifest = manifest_for(r, {});
    predict::AnalyticalBackend backend("pixel8");
    auto lut = predict::build_latency_lut(manifest, backend, "pixel8", 0, "t");
    auto cost = predict::predict_cost({}, r.model, r.space, lut, {});
    REQUIRE(cost.energy_mj.has_value());
    auto g = space::apply_subnet(r.model, {}, r.space);
    auto seq = oracles::built_graph_key_sequence(g, {});
    std::sort(seq.begin(), seq.end());
    double sum = 0;
    for (const auto& text : seq) sum += *lut.entries.at(text).energy_mj;
    CHECK(*cost.energy_mj == sum);
}

TEST_CASE("parameter bytes of a single float16 conv") {
    ComputationGraph g;
    g.nodes.push_back({"c0", "conv2d",
                       {{"kernel", std::vector<std::int64_t>{3, 3}},
                        {"out_channels", std::int64_t(32)},
                        {"padding", std::vector<std::int64_t>{1, 1}}},
                       {"e0"}, {"e1"}});
    g.edges["e0"] = TensorShape{{1, 3, 16, 16}, Dtype::Float16};
    g.edges["e1"] = TensorShape{{1, 32, 16, 16}, Dtype::Float16};
    g.graph_inputs = {"e0"};
    g.graph_outputs = {"e1"};
    CHECK(predict::graph_param_bytes(g) == 1792); // 3*3*3*32*2 + 32*2
}

TEST_CASE("peak activation of an identity-only graph is one live tensor") {
    ComputationGraph g;
    g.nodes.push_back({"id0", "identity", {}, {"e0"}, {"e1"}});
    g.edges["e0"] = TensorShape{{1, 3, 224, 224}, Dtype::Float32};
    g.edges["e1"] = TensorShape{{1, 3, 224, 224}, Dtype::Float32};
    g.graph_inputs = {"e0"};
    g.graph_outputs = {"e1"};
    CHECK(predict::graph_peak_activation_bytes(g) == 602112);
    CHECK(oracles::peak_activation_bytes(g) == 602112);
}

TEST_CASE("memory prediction matches the liveness oracle") {
    auto r = compiled(fixtures::tinynet(), fixtures::tinynet_full_config());
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto spec = space::sample_subnet(r.space, r.model, seed);
        auto g = space::apply_subnet(r.model, spec, r.space);
        auto mem = predict::predict_memory(spec, r.model, r.space);
        CHECK(mem.peak_activation_bytes == oracles::peak_activation_bytes(g));
        CHECK(mem.total_bytes == mem.param_bytes + mem.peak_activation_bytes);
        CHECK(mem.param_bytes > 0);
    }
}

TEST_CASE("sensitivity build uses exactly one call per non-default pair plus baseline") {
    auto r = compiled(fixtures::tinynet1s(), fixtures::tinynet1s_config());
    predict::SyntheticOracle oracle(r.space, r.model, 42, 0.0);
    auto table = predict::build_sensitivity_table(r.space, r.model, oracle);

    std::uint64_t expected = 1;
    for (const auto& d : r.space.dims) expected += d.candidates.size() - 1;
    CHECK(oracle.call_count() == expected);
    CHECK(expected == 10); // 1 + (2-1) + (3-1) + 3*(3-1)
    CHECK(table.base_acc == 80.0);
    CHECK(table.deltas.size() == expected - 1);
}

TEST_CASE("with a purely additive oracle the deltas equal the declared weights") {
    auto r = compiled(fixtures::tinynet1s(), fixtures::tinynet1s_config());
    predict::SyntheticOracle oracle(r.space, r.model, 7, 0.0);
    auto table = predict::build_sensitivity_table(r.space, r.model, oracle);
    for (const auto& [key, delta] : table.deltas) {
        const auto* dim = r.space.find(key.first);
        REQUIRE(dim != nullptr);
        for (const auto& c : dim->candidates)
            if (space::value_to_string(c) == key.second)
                CHECK(delta == doctest::Approx(oracle.weight(key.first, c)).epsilon(1e-12));
    }
}

TEST_CASE("accuracy prediction arithmetic") {
    predict::SensitivityTable table;
    table.base_acc = 80.0;
    table.deltas[{"a/x", "1"}] = 0.5;
    table.deltas[{"a/y", "2"}] = 1.2;

    // Hand-rolled one-dim space for arithmetic checks.
    space::ModificationSpace sp;
    sp.dims.push_back({"a/x", space::Scope::Global, {std::int64_t(0), std::int64_t(1)},
                       std::int64_t(0), "", "resolution"});
    sp.dims.push_back({"a/y", space::Scope::Global, {std::int64_t(0), std::int64_t(2)},
                       std::int64_t(0), "", "resolution"});

    auto r = compiled(fixtures::tinynet1s(), fixtures::tinynet1s_config());
    // Empty spec: base accuracy.
    CHECK(predict::predict_accuracy({}, table, r.space, r.model) == 80.0);

    space::SubNetSpec spec;
    spec.assignment["a/x"] = std::int64_t(1);
    spec.assignment["a/y"] = std::int64_t(2);
    // normalize against the hand space via a model-free path: both dims non-default
    double acc = table.base_acc;
    for (const auto& [k, v] : spec.assignment) acc -= table.deltas.at({k, space::value_to_string(v)});
    CHECK(acc == doctest::Approx(78.3));
}

TEST_CASE("additive oracle predictions are exact over every TinyNet-1S variant") {
    auto r = compiled(fixtures::tinynet1s(), fixtures::tinynet1s_config());
    predict::SyntheticOracle oracle(r.space, r.model, 3, 0.0);
    auto table = predict::build_sensitivity_table(r.space, r.model, oracle);
    auto specs = space::enumerate_all_specs(r.space, r.model);
    REQUIRE(specs.size() == 78);
    for (const auto& spec : specs) {
        double predicted = predict::predict_accuracy(spec, table, r.space, r.model);
        double truth = oracle.acc(spec);
        CHECK(predicted == doctest::Approx(truth).epsilon(1e-12));
    }
}

TEST_CASE("default-valued assignments do not change predictions") {
    auto r = compiled(fixtures::tinynet1s(), fixtures::tinynet1s_config());
    predict::SyntheticOracle oracle(r.space, r.model, 11, 0.0);
    auto table = predict::build_sensitivity_table(r.space, r.model, oracle);
    auto spec = space::sample_subnet(r.space, r.model, 5);
    double base = predict::predict_accuracy(spec, table, r.space, r.model);
    auto padded = spec;
    for (const auto& d : r.space.dims)
        if (!padded.assignment.count(d.dim_id)) padded.assignment[d.dim_id] = d.default_value;
    CHECK(predict::predict_accuracy(padded, table, r.space, r.model) == base);
}

TEST_CASE("uncovered modifications are an error") {
    auto r = compiled(fixtures::tinynet1s(), fixtures::tinynet1s_config());
    predict::SensitivityTable empty;
    empty.base_acc = 80.0;
    space::SubNetSpec spec;
    spec.assignment["global/resolution"] = std::int64_t(128);
    CHECK_THROWS_AS(predict::predict_accuracy(spec, empty, r.space, r.model), ValidationError);
}

TEST_CASE("file oracles reproduce a table built from recorded accuracies") {
    auto r = compiled(fixtures::tinynet1s(), fixtures::tinynet1s_config());
    predict::SyntheticOracle truth(r.space, r.model, 13, 0.0);

    // Record baseline + every single-modification accuracy, as an external
    // evaluation harness would.
    auto path = temp_path("tailor_acc_file.txt");
    {
        std::ofstream out(path);
        out << std::setprecision(17);
        out << "# tfg-acc/1\n";
        out << "default\t" << truth.acc({}) << "\n";
        for (const auto& d : r.space.dims) {
            for (const auto& c : d.candidates) {
                if (space::value_to_string(c) == space::value_to_string(d.default_value)) continue;
                space::SubNetSpec one;
                one.assignment[d.dim_id] = c;
                out << space::spec_to_string(one, r.space, r.model) << "\t" << truth.acc(one) << "\n";
            }
        }
    }
    predict::FileOracle file_oracle(path);
    file_oracle.bind(r.space, r.model);
    auto from_file = predict::build_sensitivity_table(r.space, r.model, file_oracle);
    auto from_truth = predict::build_sensitivity_table(r.space, r.model, truth);
    CHECK(from_file.base_acc == doctest::Approx(from_truth.base_acc));
    for (const auto& [key, delta] : from_truth.deltas)
        CHECK(from_file.deltas.at(key) == doctest::Approx(delta));

    // A spec outside the recorded set is a hard error.
    auto full = space::sample_subnet(r.space, r.model, 99);
    if (full.assignment.size() > 1) CHECK_THROWS_AS(file_oracle.acc(full), ValidationError);
    std::filesystem::remove(path);
}

TEST_CASE("sensitivity tables round-trip through their file format") {
    auto r = compiled(fixtures::tinynet1s(), fixtures::tinynet1s_config());
    predict::SyntheticOracle oracle(r.space, r.model, 9, 0.05);
    auto table = predict::build_sensitivity_table(r.space, r.model, oracle);
    auto path = temp_path("tailor_sens_roundtrip.txt");
    predict::save_sensitivity(table, path);
    auto loaded = predict::load_sensitivity(path);
    CHECK(loaded.base_acc == table.base_acc);
    CHECK(loaded.deltas == table.deltas);
    std::filesystem::remove(path);
}
