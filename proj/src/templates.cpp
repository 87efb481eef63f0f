#include "tailor/templates.hpp"

namespace tailor::compiler {

namespace {

std::vector<BlockTemplate> make_templates() {
    std::vector<BlockTemplate> out;

    // FFN: two projections around an activation, with or without bias adds,
    // optionally as a pre-norm residual sub-block.
    {
        BlockTemplate t;
        t.name = "FFNBlock";
        PatternVariant biased;
        biased.nodes = {
            {"matmul", {-1}}, {"add", {0}, false}, {"act", {1}},
            {"matmul", {2}}, {"add", {3}, false},
        };
        biased.hook_targets = {{"expand_ratio", 0}};
        PatternVariant plain;
        plain.nodes = {{"matmul", {-1}}, {"act", {0}}, {"matmul", {1}}};
        plain.hook_targets = {{"expand_ratio", 0}};
        PatternVariant residual;
        residual.fork_join = true;
        residual.nodes = {
            {"layernorm", {-1}}, {"matmul", {0}}, {"act", {1}},
            {"matmul", {2}}, {"add", {-1, 3}, false},
        };
        residual.hook_targets = {{"expand_ratio", 1}};
        t.variants = {biased, residual, plain};
        t.hooks = {{"expand_ratio", "out_features", HookSpec::Base::BlockInputWidth}};
        out.push_back(t);
    }

    // Two stacked convolutions with a skip connection.
    {
        BlockTemplate t;
        t.name = "ResidualConvBlock";
        PatternVariant with_bn;
        with_bn.fork_join = true;
        with_bn.nodes = {
            {"conv2d", {-1}}, {"batchnorm", {0}}, {"act", {1}},
            {"conv2d", {2}}, {"batchnorm", {3}}, {"add", {-1, 4}, false},
        };
        with_bn.hook_targets = {{"width_ratio", 0}};
        PatternVariant bare;
        bare.fork_join = true;
        bare.nodes = {
            {"conv2d", {-1}}, {"act", {0}}, {"conv2d", {1}}, {"add", {-1, 2}, false},
        };
        bare.hook_targets = {{"width_ratio", 0}};
        t.variants = {with_bn, bare};
        t.hooks = {{"width_ratio", "out_channels", HookSpec::Base::MetaAttr}};
        out.push_back(t);
    }

    // MobileNet-style expand / depthwise / project with a skip connection.
    {
        BlockTemplate t;
        t.name = "InvertedResidualBlock";
        PatternVariant v;
        v.fork_join = true;
        v.nodes = {
            {"conv2d", {-1}}, {"act", {0}}, {"depthwise_conv2d", {1}},
            {"act", {2}}, {"conv2d", {3}}, {"add", {-1, 4}, false},
        };
        v.hook_targets = {{"expand_ratio", 0}};
        t.variants = {v};
        t.hooks = {{"expand_ratio", "out_channels", HookSpec::Base::BlockInputWidth}};
        out.push_back(t);
    }

    // Pre-norm single-head self-attention with residual.
    {
        BlockTemplate t;
        t.name = "AttentionBlock";
        PatternVariant v;
        v.fork_join = true;
        v.nodes = {
            {"layernorm", {-1}},       // 0
            {"matmul", {0}},           // 1 query
            {"matmul", {0}},           // 2 key
            {"matmul", {0}},           // 3 value
            {"transpose", {2}},        // 4
            {"matmul", {1, 4}},        // 5 scores
            {"softmax", {5}},          // 6
            {"matmul", {6, 3}},        // 7 context
            {"matmul", {7}},           // 8 output projection
            {"add", {-1, 8}, false},   // 9
        };
        t.variants = {v};
        out.push_back(t);
    }

    return out;
}

} // namespace

const std::vector<BlockTemplate>& shipped_templates() {
    static const std::vector<BlockTemplate> templates = make_templates();
    return templates;
}

const BlockTemplate* find_template(const std::string& name) {
    for (const auto& t : shipped_templates())
        if (t.name == name) return &t;
    return nullptr;
}

bool pred_matches(const std::string& pred, const std::string& op_type) {
    if (pred == "act") return op_type == "relu" || op_type == "gelu";
    std::size_t start = 0;
    while (start <= pred.size()) {
        std::size_t bar = pred.find('|', start);
        std::string alt = pred.substr(start, bar == std::string::npos ? std::string::npos : bar - start);
        if (alt == op_type) return true;
        if (bar == std::string::npos) break;
        start = bar + 1;
    }
    return false;
}

} // namespace tailor::compiler
