#include "tailor/fixtures.hpp"

namespace tailor::fixtures {

namespace {

using I = std::int64_t;
using IList = std::vector<std::int64_t>;

struct GraphBuilder {
    ComputationGraph g;
    int edge_counter = 0;

    std::string fresh_edge() { return "e" + std::to_string(edge_counter++); }

    std::string input(IList dims, Dtype dtype = Dtype::Float32) {
        auto e = fresh_edge();
        g.edges[e] = TensorShape{dims, dtype};
        g.graph_inputs.push_back(e);
        return e;
    }

    std::string node(const std::string& id, const std::string& op, AttrMap attrs,
                     std::vector<std::string> inputs) {
        auto out = fresh_edge();
        g.nodes.push_back({id, op, std::move(attrs), std::move(inputs), {out}});
        g.edges[out] = std::nullopt;
        return out;
    }

    ComputationGraph finish(const std::string& out_edge, const std::string& name) {
        g.graph_outputs.push_back(out_edge);
        g.metadata["name"] = name;
        return std::move(g);
    }
};

AttrMap conv(I kernel, I stride, I padding, I out_channels) {
    return {{"kernel", IList{kernel, kernel}},
            {"stride", IList{stride, stride}},
            {"padding", IList{padding, padding}},
            {"out_channels", out_channels}};
}

AttrMap dwconv(I kernel, I stride, I padding) {
    return {{"kernel", IList{kernel, kernel}},
            {"stride", IList{stride, stride}},
            {"padding", IList{padding, padding}}};
}

std::string residual_conv_block(GraphBuilder& b, const std::string& prefix,
                                const std::string& in, I channels) {
    auto c1 = b.node(prefix + "_conv_a", "conv2d", conv(3, 1, 1, channels), {in});
    auto r1 = b.node(prefix + "_relu", "relu", {}, {c1});
    auto c2 = b.node(prefix + "_conv_b", "conv2d", conv(3, 1, 1, channels), {r1});
    return b.node(prefix + "_add", "add", {}, {in, c2});
}

std::string inverted_residual_block(GraphBuilder& b, const std::string& prefix,
                                    const std::string& in, I channels, I expand) {
    auto e = b.node(prefix + "_exp", "conv2d", conv(1, 1, 0, channels * expand), {in});
    auto a1 = b.node(prefix + "_act_a", "relu", {}, {e});
    auto d = b.node(prefix + "_dw", "depthwise_conv2d", dwconv(3, 1, 1), {a1});
    auto a2 = b.node(prefix + "_act_b", "relu", {}, {d});
    auto p = b.node(prefix + "_proj", "conv2d", conv(1, 1, 0, channels), {a2});
    return b.node(prefix + "_add", "add", {}, {in, p});
}

} // namespace

ComputationGraph tinynet() {
    GraphBuilder b;
    auto x = b.input({1, 3, 224, 224});
    auto stem = b.node("stem_conv", "conv2d", conv(3, 2, 1, 16), {x});
    auto cur = b.node("stem_relu", "relu", {}, {stem});
    for (int i = 0; i < 3; ++i) cur = residual_conv_block(b, "rcb" + std::to_string(i), cur, 16);
    cur = b.node("pool", "global_pool", {}, {cur});
    cur = b.node("ffn_fc1", "matmul", {{"out_features", I(64)}}, {cur});
    cur = b.node("ffn_gelu", "gelu", {}, {cur});
    cur = b.node("ffn_fc2", "matmul", {{"out_features", I(10)}}, {cur});
    return b.finish(cur, "TinyNet");
}

ComputationGraph tinynet1s() {
    GraphBuilder b;
    auto x = b.input({1, 3, 224, 224});
    auto cur = b.node("stem_conv", "conv2d", conv(3, 2, 1, 8), {x});
    for (int i = 0; i < 3; ++i)
        cur = inverted_residual_block(b, "irb" + std::to_string(i), cur, 8, 4);
    cur = b.node("pool", "global_pool", {}, {cur});
    cur = b.node("head_fc", "matmul", {{"out_features", I(4)}}, {cur});
    return b.finish(cur, "TinyNet-1S");
}

ComputationGraph tinynet4s() {
    GraphBuilder b;
    auto x = b.input({1, 3, 160, 160});
    auto cur = b.node("stem_conv", "conv2d", conv(3, 2, 1, 8), {x});
    const I widths[4] = {8, 16, 24, 32};
    const int depths[4] = {2, 3, 3, 2};
    for (int s = 0; s < 4; ++s) {
        if (s > 0)
            cur = b.node("down" + std::to_string(s), "conv2d", conv(3, 2, 1, widths[s]), {cur});
        for (int i = 0; i < depths[s]; ++i)
            cur = inverted_residual_block(b, "s" + std::to_string(s) + "_irb" + std::to_string(i),
                                          cur, widths[s], 4);
    }
    cur = b.node("pool", "global_pool", {}, {cur});
    cur = b.node("head_fc", "matmul", {{"out_features", I(10)}}, {cur});
    return b.finish(cur, "TinyNet-4S");
}

ComputationGraph tinyformer() {
    GraphBuilder b;
    auto x = b.input({1, 16, 64});
    auto ln1 = b.node("attn_ln", "layernorm", {}, {x});
    auto q = b.node("attn_q", "matmul", {{"out_features", I(64)}}, {ln1});
    auto k = b.node("attn_k", "matmul", {{"out_features", I(64)}}, {ln1});
    auto v = b.node("attn_v", "matmul", {{"out_features", I(64)}}, {ln1});
    auto kt = b.node("attn_kt", "transpose", {{"perm", IList{0, 2, 1}}}, {k});
    auto scores = b.node("attn_scores", "matmul", {}, {q, kt});
    auto probs = b.node("attn_softmax", "softmax", {}, {scores});
    auto ctx = b.node("attn_ctx", "matmul", {}, {probs, v});
    auto proj = b.node("attn_proj", "matmul", {{"out_features", I(64)}}, {ctx});
    auto res1 = b.node("attn_add", "add", {}, {x, proj});
    auto ln2 = b.node("ffn_ln", "layernorm", {}, {res1});
    auto f1 = b.node("ffn_fc1", "matmul", {{"out_features", I(256)}}, {ln2});
    auto act = b.node("ffn_gelu", "gelu", {}, {f1});
    auto f2 = b.node("ffn_fc2", "matmul", {{"out_features", I(64)}}, {act});
    auto res2 = b.node("ffn_add", "add", {}, {res1, f2});
    return b.finish(res2, "TinyFormer");
}

ComputationGraph tinyffn() {
    GraphBuilder b;
    auto x = b.input({1, 32});
    auto f1 = b.node("fc1", "matmul", {{"out_features", I(128)}}, {x});
    auto a1 = b.node("bias1", "add", {}, {f1});
    auto g = b.node("gelu", "gelu", {}, {a1});
    auto f2 = b.node("fc2", "matmul", {{"out_features", I(32)}}, {g});
    auto a2 = b.node("bias2", "add", {}, {f2});
    return b.finish(a2, "TinyFFN");
}

std::string tinynet_example_config() {
    return R"(title = "Example"
[arch]
blocks = ["FFNBlock"]
[var.global_vars]
resolution = [128, 160, 192, 224]
[var.stage_vars]
reduce_depth = [-3, -2, -1, 0]
[var.block_vars]
FFNBlock.expand_ratio = [2, 3, 4]
)";
}

std::string tinynet_full_config() {
    return R"(title = "TinyNet"
[arch]
blocks = ["ResidualConvBlock", "FFNBlock"]
[var.global_vars]
resolution = [128, 160, 192, 224]
[var.stage_vars]
reduce_depth = [-2, -1, 0]
[var.block_vars]
ResidualConvBlock.width_ratio = [0.5, 0.75, 1.0]
FFNBlock.expand_ratio = [2, 3, 4]
)";
}

std::string tinynet1s_config() {
    return R"(title = "TinyNet-1S"
[arch]
blocks = ["InvertedResidualBlock"]
[var.global_vars]
resolution = [128, 224]
[var.stage_vars]
reduce_depth = [-2, -1, 0]
[var.block_vars]
InvertedResidualBlock.expand_ratio = [2, 3, 4]
)";
}

std::string tinynet4s_config() {
    return R"(title = "TinyNet-4S"
[arch]
blocks = ["InvertedResidualBlock"]
[var.global_vars]
resolution = [96, 128, 160]
[var.stage_vars]
reduce_depth = [-2, -1, 0]
[var.block_vars]
InvertedResidualBlock.expand_ratio = [3, 4]
)";
}

std::string tinyformer_config() {
    return R"(title = "TinyFormer"
[arch]
blocks = ["AttentionBlock", "FFNBlock"]
[var.stage_vars]
reduce_depth = [-1, 0]
[var.block_vars]
FFNBlock.expand_ratio = [2, 3, 4]
)";
}

} // namespace tailor::fixtures
