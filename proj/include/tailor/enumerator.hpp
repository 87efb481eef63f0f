#pragma once

#include "tailor/bigint.hpp"
#include "tailor/graph.hpp"
#include "tailor/ir.hpp"
#include "tailor/modspace.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace tailor::enumerate {

// One (possibly fused) operator configuration: the latency-LUT key. Two keys
// are equal iff their canonical serializations are byte-equal.
struct OpFeature {
    std::string op_type;
    AttrMap attrs;                       // sorted by name (AttrMap is ordered)
    std::vector<TensorShape> in_shapes;  // fully concrete active shapes
    std::vector<TensorShape> out_shapes;
};

struct OperatorFeatureKey {
    std::vector<OpFeature> op_seq; // length 1 unless fused
    std::string text;              // canonical serialization

    bool operator==(const OperatorFeatureKey& o) const { return text == o.text; }
    bool operator<(const OperatorFeatureKey& o) const { return text < o.text; }
};

std::string serialize_key(const std::vector<OpFeature>& op_seq);
OperatorFeatureKey parse_key(const std::string& text);

// Linear-chain fusion rule, applied greedily left-to-right, longest-first,
// non-overlapping.
struct FusionRule {
    std::vector<std::string> pattern; // op_type sequence, length >= 2
    std::string name;
};

// conv2d+batchnorm+relu, conv2d+batchnorm, matmul+add, conv2d+relu.
const std::vector<FusionRule>& default_fusion_rules();
std::uint64_t fusion_ruleset_hash(const std::vector<FusionRule>& rules);

// Per operator path: the set of dimension ids whose value can change that
// operator's key. Depth dimensions never appear.
struct DependencyMap {
    std::map<std::string, std::set<std::string>> deps;
};

DependencyMap dependency_groups(const ir::ModulePtr& model, const space::ModificationSpace& space);

// Fusion groups over the maximal architecture: lists of leaf paths, in
// topological order, chains confined to one drop unit (a block or the loose
// model level) so grouping is stable across depth variants.
std::vector<std::vector<std::string>> fusion_groups(const ir::ModulePtr& model,
                                                    const std::vector<FusionRule>& rules);

struct EnumerationStats {
    std::uint64_t positions = 0;            // fused groups enumerated
    std::uint64_t key_computations = 0;     // product-space key evaluations
    BigUint naive_key_computations;         // positions x design-space variants
    std::uint64_t unique_keys = 0;
};

// Iterates, per operator group, only the cartesian product of its affecting
// dimensions' candidates; shapes come from infer_shapes (no graph execution).
std::set<OperatorFeatureKey> enumerate_unique_operators(const ir::ModulePtr& model,
                                                        const space::ModificationSpace& space,
                                                        const std::vector<FusionRule>& rules,
                                                        int jobs = 1,
                                                        EnumerationStats* stats = nullptr);

// Key of one operator (or its fused group) under a spec; nullopt when the
// operator sits in a depth-dropped block.
std::optional<OperatorFeatureKey> key_of(const std::string& op_path,
                                         const space::SubNetSpec& spec,
                                         const ir::ModulePtr& model,
                                         const space::ModificationSpace& space,
                                         const std::vector<FusionRule>& rules);

// Keys of every active (fused) operator of a spec'd tree, in topological order.
std::vector<OperatorFeatureKey> active_keys(const ir::ModulePtr& spec_tree,
                                            const std::vector<std::vector<std::string>>& groups);

// Manifest file: header lines, then one canonical key per line, sorted.
void save_manifest(const std::set<OperatorFeatureKey>& keys,
                   const std::vector<FusionRule>& rules, const std::string& path);
std::vector<OperatorFeatureKey> load_manifest(const std::string& path,
                                              std::uint64_t* fusion_hash = nullptr);

} // namespace tailor::enumerate
