#pragma once

#include <map>
#include <string>
#include <vector>

namespace tailor::compiler {

// A pattern node predicate: an exact op_type, alternatives separated by '|',
// or the "act" wildcard (relu|gelu).
struct PatternNode {
    std::string pred;
    std::vector<int> inputs;     // indices into the variant's node list, -1 = block entry
    bool ordered_inputs = true;  // false for commutative ops (add, mul)
};

struct PatternVariant {
    std::vector<PatternNode> nodes; // topological order, last node is the exit
    bool fork_join = false;         // matches a fork-join region instead of a linear chain
    std::map<std::string, int> hook_targets; // hook name -> pattern node index
};

struct HookSpec {
    std::string name;  // modification dimension exposed by the block
    std::string attr;  // driven child attribute (out_channels / out_features)
    enum class Base { BlockInputWidth, MetaAttr } base = Base::BlockInputWidth;
};

struct BlockTemplate {
    std::string name;
    std::vector<PatternVariant> variants;
    std::vector<HookSpec> hooks;
};

// FFNBlock, ResidualConvBlock, InvertedResidualBlock, AttentionBlock.
// DefaultBlock is the fallback produced by fork-join grouping, not a template.
const std::vector<BlockTemplate>& shipped_templates();
const BlockTemplate* find_template(const std::string& name);

bool pred_matches(const std::string& pred, const std::string& op_type);

} // namespace tailor::compiler
