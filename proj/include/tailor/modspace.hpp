#pragma once

#include "tailor/bigint.hpp"
#include "tailor/graph.hpp"
#include "tailor/ir.hpp"

#include <map>
#include <random>
#include <string>
#include <vector>

namespace tailor::space {

// Parsed configuration document; declaration order and raw values preserved.
struct SpaceConfig {
    std::string title;
    std::vector<std::string> block_templates;
    std::vector<std::pair<std::string, std::vector<AttrValue>>> global_vars;
    std::vector<std::pair<std::string, std::vector<AttrValue>>> stage_vars;
    struct BlockVar {
        std::string template_name;
        std::string attr;
        std::vector<AttrValue> candidates;
    };
    std::vector<BlockVar> block_vars;
};

SpaceConfig parse_config(const std::string& text);
SpaceConfig parse_config_file(const std::string& path);

enum class Scope { Global, Stage, Block };

struct Dimension {
    std::string dim_id;      // global/resolution, stage[1]/reduce_depth, stage[0]/block[2]/expand_ratio
    Scope scope;
    std::vector<AttrValue> candidates; // ordered as declared (depth: filtered to legal values)
    AttrValue default_value;           // the identity/meta choice
    std::string target_path;           // module path the dimension addresses
    std::string attr;                  // resolution / reduce_depth / hook name
};

struct ModificationSpace {
    std::vector<Dimension> dims; // canonical order: global, stages, blocks
    const Dimension* find(const std::string& dim_id) const;
};

struct Modification {
    std::string dim_id;
    AttrValue value;
};

// One SubNet: assignment per dimension; absent dimensions take their default.
struct SubNetSpec {
    std::map<std::string, AttrValue> assignment;
    bool operator==(const SubNetSpec&) const = default;
};

// Binds config declarations to a compiled model. Throws ValidationError when a
// declaration matches nothing (unsatisfiable user intent) or candidates violate
// meta bounds.
ModificationSpace bind_space(const ir::ModulePtr& model, const SpaceConfig& cfg);

// Exact count of distinct architectures: dropped blocks' dimensions collapse.
BigUint count_variants(const ModificationSpace& space, const ir::ModulePtr& model);

SubNetSpec sample_subnet(const ModificationSpace& space, const ir::ModulePtr& model,
                         std::uint64_t seed);
SubNetSpec sample_subnet_rng(const ModificationSpace& space, const ir::ModulePtr& model,
                             std::mt19937_64& rng);

// Canonical form: default-valued assignments removed, dimensions of depth-dropped
// blocks reset to default.
SubNetSpec normalize_spec(const SubNetSpec& spec, const ModificationSpace& space,
                          const ir::ModulePtr& model);

void validate_spec(const SubNetSpec& spec, const ModificationSpace& space);

// transform chain + update (tree form, for shape/key extraction).
ir::ModulePtr apply_spec(const ir::ModulePtr& model, const SubNetSpec& spec,
                         const ModificationSpace& space);
// transform chain + update + build (graph form).
ComputationGraph apply_subnet(const ir::ModulePtr& model, const SubNetSpec& spec,
                              const ModificationSpace& space);

// Canonical value/spec strings ("dim=value;dim=value", sorted; "default" for empty).
std::string value_to_string(const AttrValue& v);
std::string spec_to_string(const SubNetSpec& spec, const ModificationSpace& space,
                           const ir::ModulePtr& model);
SubNetSpec spec_from_string(const std::string& text, const ModificationSpace& space);

// Enumerate every distinct architecture assignment (normalized, deduplicated).
// Only valid on spaces small enough to enumerate; used by oracles and sweeps.
std::vector<SubNetSpec> enumerate_all_specs(const ModificationSpace& space,
                                            const ir::ModulePtr& model);

std::string space_to_json(const ModificationSpace& space);
ModificationSpace space_from_json(const std::string& text);

} // namespace tailor::space
