#pragma once

#include "tailor/graph.hpp"

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace tailor::ir {

// Every architecture quantity is tracked twice: the meta (maximal) value fixed
// at compile time and the active value selected by modifications.
struct AttrState {
    AttrValue meta;
    AttrValue active;
};

struct ShapeState {
    TensorShape meta;
    TensorShape active;
};

struct Feature {
    std::map<std::string, AttrState> attrs;
    std::vector<ShapeState> in_shapes;
    std::vector<ShapeState> out_shapes;
};

enum class ModuleKind { Operator, StaticBypass, Block, Stage, Model };

const char* module_kind_name(ModuleKind k);

// Ties a block-level hook (e.g. expand_ratio) to the child operator attribute
// it drives: active attr value = round(hook_value * base).
struct HookBinding {
    std::string hook;
    std::size_t child_index;
    std::string attr;
    double base = 1.0;
};

struct TailorModule;
using ModulePtr = std::shared_ptr<const TailorModule>;

struct TailorModule {
    ModuleKind kind = ModuleKind::Operator;
    std::string path;                    // "" for the model root
    Feature feature;
    std::vector<ModulePtr> children;
    bool active = true;

    // Leaves: the single source node this module covers. Blocks: all covered nodes.
    std::vector<std::string> source_nodes;

    // Blocks only.
    std::string template_name;
    std::vector<HookBinding> hooks;
    std::string entry_edge;
    std::string exit_edge;

    // Model root only.
    std::shared_ptr<const ComputationGraph> source_graph;
    bool updated = false;
};

// A single architecture modification at IR level, addressed by module path.
// attr is "resolution" for the model root, "reduce_depth" for stages, or a
// block hook name.
struct IrModification {
    std::string target_path;
    std::string attr;
    AttrValue value;
};

// Returns a new tree with the addressed Feature's active attrs changed; shapes
// are not recomputed until update() runs. Unmodified substructure is shared.
ModulePtr transform(const ModulePtr& model, const IrModification& mod);

// Recomputes every active attribute and shape top-down through the shipped
// per-op deduction rules, rewiring around inactive blocks. Throws LegalityError
// on shape contradictions.
ModulePtr update(const ModulePtr& model);

// Emits the active-architecture computation graph. Requires update() first.
ComputationGraph build(const ModulePtr& model);

struct OpShapes {
    std::vector<TensorShape> in_shapes;
    std::vector<TensorShape> out_shapes;
};

// Active shapes per operator-level module path, without building or executing
// the SubNet. Requires update() first.
std::map<std::string, OpShapes> infer_shapes(const ModulePtr& model);

// Tree access helpers.
const TailorModule* find_module(const ModulePtr& model, const std::string& path);
void for_each_leaf(const ModulePtr& model,
                   const std::function<void(const TailorModule&)>& fn,
                   bool active_only = false);

// Deterministic structural dump used by tests and the compile report.
std::string dump_tree(const ModulePtr& model);

// Shape deduction for one operator given active attributes and input shapes.
// Exposed for the compiler's meta pass. Throws ValidationError on rule
// violations (callers wrap with module paths).
std::vector<TensorShape> deduce_output_shapes(const std::string& op_type,
                                              const AttrMap& attrs,
                                              const std::vector<TensorShape>& inputs,
                                              std::size_t output_count);

} // namespace tailor::ir
