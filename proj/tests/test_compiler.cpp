#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "tailor/compiler.hpp"
#include "tailor/errors.hpp"
#include "tailor/fixtures.hpp"
#include "support/oracles.hpp"

#include <functional>

using namespace tailor;

namespace {

int count_blocks(const ir::ModulePtr& model, const std::string& template_name) {
    int n = 0;
    std::function<void(const ir::TailorModule&)> walk = [&](const ir::TailorModule& m) {
        if (m.kind == ir::ModuleKind::Block && m.template_name == template_name) ++n;
        for (const auto& c : m.children) walk(*c);
    };
    walk(*model);
    return n;
}

int count_stages(const ir::ModulePtr& model) {
    int n = 0;
    for (const auto& c : model->children)
        if (c->kind == ir::ModuleKind::Stage) ++n;
    return n;
}

std::vector<const compiler::BlockTemplate*> templates(std::initializer_list<const char*> names) {
    std::vector<const compiler::BlockTemplate*> out;
    for (const char* n : names) out.push_back(compiler::find_template(n));
    return out;
}

} // namespace

TEST_CASE("a lone relu becomes one static bypass module") {
    ComputationGraph g;
    g.nodes.push_back({"r0", "relu", {}, {"e0"}, {"e1"}});
    g.edges["e0"] = TensorShape{{1, 4, 8, 8}, Dtype::Float32};
    g.edges["e1"] = std::nullopt;
    g.graph_inputs = {"e0"};
    g.graph_outputs = {"e1"};
    auto mods = compiler::parse_operators(g);
    REQUIRE(mods.size() == 1);
    CHECK(mods[0]->kind == ir::ModuleKind::StaticBypass);
}

TEST_CASE("FFN chain parses into 2 operator and 3 bypass modules") {
    auto mods = compiler::parse_operators(fixtures::tinyffn());
    REQUIRE(mods.size() == 5);
    int dynamic = 0, bypass = 0;
    for (const auto& m : mods) {
        if (m->kind == ir::ModuleKind::Operator) ++dynamic;
        if (m->kind == ir::ModuleKind::StaticBypass) ++bypass;
    }
    CHECK(dynamic == 2);
    CHECK(bypass == 3);
}

TEST_CASE("residual fork-join groups into one DefaultBlock, agreeing with the postdominator oracle") {
    auto g = fixtures::tinynet();
    auto mods = compiler::parse_operators(g);

    const ir::TailorModule* first_block = nullptr;
    for (const auto& m : mods)
        if (m->kind == ir::ModuleKind::Block) { first_block = m.get(); break; }
    REQUIRE(first_block != nullptr);
    CHECK(first_block->template_name == "DefaultBlock");
    CHECK(first_block->source_nodes ==
          std::vector<std::string>{"rcb0_conv_a", "rcb0_relu", "rcb0_conv_b", "rcb0_add"});

    auto join = oracles::join_of_fork(g, first_block->entry_edge);
    REQUIRE(join.has_value());
    CHECK(*join == "rcb0_add");
    CHECK(first_block->source_nodes.back() == *join);
}

TEST_CASE("FFN chain matches the FFNBlock template and exposes expand_ratio") {
    auto g = fixtures::tinyffn();
    auto matched = compiler::match_blocks(compiler::parse_operators(g), g, templates({"FFNBlock"}));
    REQUIRE(matched.size() == 1);
    CHECK(matched[0]->template_name == "FFNBlock");
    REQUIRE(matched[0]->hooks.size() == 1);
    CHECK(matched[0]->hooks[0].hook == "expand_ratio");
    CHECK(std::get<double>(matched[0]->feature.attrs.at("expand_ratio").meta) == doctest::Approx(4.0));
}

TEST_CASE("empty template list leaves the module list unchanged") {
    auto g = fixtures::tinynet();
    auto step1 = compiler::parse_operators(g);
    auto step2 = compiler::match_blocks(step1, g, {});
    REQUIRE(step1.size() == step2.size());
    for (std::size_t i = 0; i < step1.size(); ++i) {
        CHECK(step1[i]->kind == step2[i]->kind);
        CHECK(step1[i]->template_name == step2[i]->template_name);
        CHECK(step1[i]->source_nodes == step2[i]->source_nodes);
    }
}

TEST_CASE("TinyNet matches 3 residual conv blocks and 1 FFN block, no defaults") {
    auto r = compiler::compile(fixtures::tinynet(),
                               space::parse_config(fixtures::tinynet_full_config()));
    CHECK(count_blocks(r.model, "ResidualConvBlock") == 3);
    CHECK(count_blocks(r.model, "FFNBlock") == 1);
    CHECK(count_blocks(r.model, "DefaultBlock") == 0);
    CHECK(count_stages(r.model) == 2);
}

TEST_CASE("stage division groups by output width") {
    // Blocks with widths [64, 64, 128, 128, 128] split into stages of depth 2 and 3.
    ComputationGraph g;
    auto conv = [](std::int64_t oc) {
        return AttrMap{{"kernel", std::vector<std::int64_t>{3, 3}},
                       {"stride", std::vector<std::int64_t>{1, 1}},
                       {"padding", std::vector<std::int64_t>{1, 1}},
                       {"out_channels", oc}};
    };
    int e = 0;
    auto edge = [&]() { return "e" + std::to_string(e++); };
    std::string cur = edge();
    g.edges[cur] = TensorShape{{1, 64, 16, 16}, Dtype::Float32};
    g.graph_inputs = {cur};
    auto rcb = [&](const std::string& p, std::int64_t ch) {
        auto c1 = edge(); g.nodes.push_back({p + "_a", "conv2d", conv(ch), {cur}, {c1}}); g.edges[c1] = std::nullopt;
        auto r1 = edge(); g.nodes.push_back({p + "_r", "relu", {}, {c1}, {r1}}); g.edges[r1] = std::nullopt;
        auto c2 = edge(); g.nodes.push_back({p + "_b", "conv2d", conv(ch), {r1}, {c2}}); g.edges[c2] = std::nullopt;
        auto ad = edge(); g.nodes.push_back({p + "_add", "add", {}, {cur, c2}, {ad}}); g.edges[ad] = std::nullopt;
        cur = ad;
    };
    rcb("b0", 64);
    rcb("b1", 64);
    auto w = edge();
    g.nodes.push_back({"widen", "conv2d", conv(128), {cur}, {w}});
    g.edges[w] = std::nullopt;
    cur = w;
    rcb("b2", 128);
    rcb("b3", 128);
    rcb("b4", 128);
    g.graph_outputs = {cur};

    auto step2 = compiler::match_blocks(compiler::parse_operators(g), g,
                                        templates({"ResidualConvBlock"}));
    auto model = compiler::divide_stages(step2, g);
    REQUIRE(count_stages(model) == 2);
    const auto* s0 = ir::find_module(model, "stage[0]");
    const auto* s1 = ir::find_module(model, "stage[1]");
    CHECK(std::get<std::int64_t>(s0->feature.attrs.at("depth").meta) == 2);
    CHECK(std::get<std::int64_t>(s1->feature.attrs.at("depth").meta) == 3);
}

TEST_CASE("fixture stage counts") {
    auto r1 = compiler::compile(fixtures::tinynet1s(),
                                space::parse_config(fixtures::tinynet1s_config()));
    CHECK(count_stages(r1.model) == 1);

    auto r4 = compiler::compile(fixtures::tinynet4s(),
                                space::parse_config(fixtures::tinynet4s_config()));
    CHECK(count_stages(r4.model) == 4);

    auto rf = compiler::compile(fixtures::tinyformer(),
                                space::parse_config(fixtures::tinyformer_config()));
    CHECK(count_stages(rf.model) == 1);
    CHECK(count_blocks(rf.model, "AttentionBlock") == 1);
    CHECK(count_blocks(rf.model, "FFNBlock") == 1);
}

TEST_CASE("example config binds 1 resolution, 2 stage and 1 block dimension on TinyNet") {
    auto r = compiler::compile(fixtures::tinynet(),
                               space::parse_config(fixtures::tinynet_example_config()));
    int global = 0, stage = 0, block = 0;
    for (const auto& d : r.space.dims) {
        if (d.scope == space::Scope::Global) ++global;
        if (d.scope == space::Scope::Stage) ++stage;
        if (d.scope == space::Scope::Block) ++block;
    }
    CHECK(global == 1);
    CHECK(stage == 2);
    CHECK(block == 1);
    CHECK(r.space.find("global/resolution")->candidates.size() == 4);
    CHECK(r.space.find("stage[1]/block[0]/expand_ratio")->candidates.size() == 3);
    CHECK(r.report.find("FFNBlock=1") != std::string::npos);
}

TEST_CASE("unsatisfiable configs are rejected") {
    auto g = fixtures::tinynet();
    CHECK_THROWS_AS(compiler::compile(g, space::parse_config(
                        "title = \"x\"\n[arch]\nblocks = [\"TransformerBlock\"]\n")),
                    ValidationError);
    CHECK_THROWS_AS(compiler::compile(g, space::parse_config(
                        "title = \"x\"\n[arch]\nblocks = [\"AttentionBlock\"]\n")),
                    ValidationError);
    CHECK_THROWS_AS(compiler::compile(fixtures::tinyformer(), space::parse_config(
                        "title = \"x\"\n[var.global_vars]\nresolution = [128, 224]\n")),
                    ValidationError);
}

TEST_CASE("equal-length matches of different templates are an ambiguity error") {
    compiler::BlockTemplate a, b;
    a.name = "ChainA";
    b.name = "ChainB";
    compiler::PatternVariant v;
    v.nodes = {{"matmul", {-1}}, {"act", {0}}, {"matmul", {1}}};
    a.variants = {v};
    b.variants = {v};

    auto g = fixtures::tinynet();
    auto step1 = compiler::parse_operators(g);
    try {
        compiler::match_blocks(step1, g, {&a, &b});
        FAIL("expected an ambiguity error");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("ChainA") != std::string::npos);
        CHECK(std::string(e.what()).find("ChainB") != std::string::npos);
    }
}

TEST_CASE("custom ops pass through compilation and are flagged in the report") {
    ComputationGraph g;
    g.nodes.push_back({"c0", "conv2d",
                       {{"kernel", std::vector<std::int64_t>{3, 3}},
                        {"out_channels", std::int64_t(8)}},
                       {"e0"}, {"e1"}});
    g.nodes.push_back({"m0", "custom:mish", {}, {"e1"}, {"e2"}});
    g.edges["e0"] = TensorShape{{1, 3, 8, 8}, Dtype::Float32};
    g.edges["e1"] = std::nullopt;
    g.edges["e2"] = std::nullopt;
    g.graph_inputs = {"e0"};
    g.graph_outputs = {"e2"};

    auto r = compiler::compile(g, space::parse_config("title = \"t\"\n"));
    CHECK(r.report.find("custom_passthrough: 1") != std::string::npos);
    CHECK(r.report.find("custom:mish") != std::string::npos);
    auto built = ir::build(r.model);
    CHECK(graph_isomorphic(built, g));
    // pass-through default deduction
    CHECK(built.edges.at("e2")->dims == std::vector<std::int64_t>{1, 8, 6, 6});
}

TEST_CASE("compilation is deterministic") {
    auto g = fixtures::tinynet4s();
    auto cfg = space::parse_config(fixtures::tinynet4s_config());
    auto a = compiler::compile(g, cfg);
    auto b = compiler::compile(g, cfg);
    CHECK(a.report == b.report);
    CHECK(ir::dump_tree(a.model) == ir::dump_tree(b.model));
    CHECK(space::space_to_json(a.space) == space::space_to_json(b.space));
}

TEST_CASE("reduce_depth candidates are clamped to keep at least one block") {
    auto r = compiler::compile(fixtures::tinynet(),
                               space::parse_config(fixtures::tinynet_example_config()));
    // Stage of depth 3 with declared [-3,-2,-1,0]: -3 would empty the stage.
    const auto* d0 = r.space.find("stage[0]/reduce_depth");
    REQUIRE(d0 != nullptr);
    CHECK(d0->candidates.size() == 3);
    const auto* d1 = r.space.find("stage[1]/reduce_depth");
    REQUIRE(d1 != nullptr);
    CHECK(d1->candidates.size() == 1); // single-block stage keeps only 0
}

TEST_CASE("maximal subnet of every compiled fixture is isomorphic to its input") {
    auto check = [](const ComputationGraph& g, const std::string& cfg) {
        auto r = compiler::compile(g, space::parse_config(cfg));
        CHECK(graph_isomorphic(ir::build(r.model), g));
    };
    check(fixtures::tinynet(), fixtures::tinynet_full_config());
    check(fixtures::tinynet1s(), fixtures::tinynet1s_config());
    check(fixtures::tinynet4s(), fixtures::tinynet4s_config());
    check(fixtures::tinyformer(), fixtures::tinyformer_config());
}
