#include "tailor/ir.hpp"
#include "tailor/errors.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace tailor::ir {

const char* module_kind_name(ModuleKind k) {
    switch (k) {
        case ModuleKind::Operator: return "operator";
        case ModuleKind::StaticBypass: return "static_bypass";
        case ModuleKind::Block: return "block";
        case ModuleKind::Stage: return "stage";
        case ModuleKind::Model: return "model";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Shape deduction rules
// ---------------------------------------------------------------------------

namespace {

std::int64_t attr_int(const AttrMap& attrs, const std::string& name, std::int64_t fallback) {
    auto it = attrs.find(name);
    if (it == attrs.end()) return fallback;
    return std::get<std::int64_t>(it->second);
}

std::vector<std::int64_t> attr_pair(const AttrMap& attrs, const std::string& name,
                                    std::vector<std::int64_t> fallback) {
    auto it = attrs.find(name);
    if (it == attrs.end()) return fallback;
    return std::get<std::vector<std::int64_t>>(it->second);
}

[[noreturn]] void rule_fail(const std::string& op, const std::string& why) {
    throw ValidationError(op + ": " + why);
}

TensorShape spatial_window_op(const std::string& op, const TensorShape& in,
                              const AttrMap& attrs, std::int64_t out_channels,
                              bool stride_defaults_to_kernel) {
    if (in.dims.size() != 4) rule_fail(op, "expects a 4-d input, got rank " + std::to_string(in.dims.size()));
    auto kernel = attr_pair(attrs, "kernel", {});
    if (kernel.size() != 2) rule_fail(op, "missing kernel");
    auto stride = attr_pair(attrs, "stride", stride_defaults_to_kernel ? kernel : std::vector<std::int64_t>{1, 1});
    auto padding = attr_pair(attrs, "padding", {0, 0});
    TensorShape out;
    out.dtype = in.dtype;
    out.dims = {in.dims[0], out_channels, 0, 0};
    for (int d = 0; d < 2; ++d) {
        std::int64_t extent = (in.dims[2 + d] + 2 * padding[d] - kernel[d]) / stride[d] + 1;
        if (extent < 1)
            rule_fail(op, "spatial extent collapses below 1 (input " + in.to_string() + ")");
        out.dims[2 + d] = extent;
    }
    return out;
}

} // namespace

std::vector<TensorShape> deduce_output_shapes(const std::string& op_type,
                                              const AttrMap& attrs,
                                              const std::vector<TensorShape>& inputs,
                                              std::size_t output_count) {
    if (inputs.empty()) rule_fail(op_type, "no inputs");
    const TensorShape& in0 = inputs[0];

    if (op_type == "conv2d") {
        return {spatial_window_op(op_type, in0, attrs, attr_int(attrs, "out_channels", 0), false)};
    }
    if (op_type == "depthwise_conv2d") {
        if (in0.dims.size() != 4) rule_fail(op_type, "expects a 4-d input");
        return {spatial_window_op(op_type, in0, attrs, in0.dims[1], false)};
    }
    if (op_type == "pool_avg" || op_type == "pool_max") {
        if (in0.dims.size() != 4) rule_fail(op_type, "expects a 4-d input");
        return {spatial_window_op(op_type, in0, attrs, in0.dims[1], true)};
    }
    if (op_type == "global_pool") {
        if (in0.dims.size() < 3) rule_fail(op_type, "expects rank >= 3");
        TensorShape out;
        out.dtype = in0.dtype;
        out.dims = {in0.dims[0], in0.dims[1]};
        return {out};
    }
    if (op_type == "matmul") {
        if (in0.dims.size() < 2) rule_fail(op_type, "expects rank >= 2");
        if (inputs.size() == 1) {
            TensorShape out = in0;
            out.dims.back() = attr_int(attrs, "out_features", 0);
            return {out};
        }
        const TensorShape& b = inputs[1];
        if (b.dims.size() != in0.dims.size())
            rule_fail(op_type, "operand ranks differ (" + in0.to_string() + " vs " + b.to_string() + ")");
        for (std::size_t i = 0; i + 2 < in0.dims.size(); ++i)
            if (in0.dims[i] != b.dims[i])
                rule_fail(op_type, "leading dims differ (" + in0.to_string() + " vs " + b.to_string() + ")");
        std::int64_t k1 = in0.dims.back();
        std::int64_t k2 = b.dims[b.dims.size() - 2];
        if (k1 != k2)
            rule_fail(op_type, "inner dims do not match (" + in0.to_string() + " vs " + b.to_string() + ")");
        TensorShape out = in0;
        out.dims.back() = b.dims.back();
        return {out};
    }
    if (op_type == "add" || op_type == "mul") {
        if (inputs.size() == 2 && !(inputs[0] == inputs[1]))
            rule_fail(op_type, "operand shapes differ (" + inputs[0].to_string() + " vs " +
                                   inputs[1].to_string() + ")");
        return {in0};
    }
    if (op_type == "concat") {
        std::int64_t axis = attr_int(attrs, "axis", 0);
        if (axis < 0) axis += static_cast<std::int64_t>(in0.dims.size());
        if (axis < 0 || axis >= static_cast<std::int64_t>(in0.dims.size()))
            rule_fail(op_type, "axis out of range");
        TensorShape out = in0;
        for (std::size_t i = 1; i < inputs.size(); ++i) {
            const TensorShape& s = inputs[i];
            if (s.dims.size() != in0.dims.size())
                rule_fail(op_type, "operand ranks differ");
            for (std::size_t d = 0; d < s.dims.size(); ++d) {
                if (static_cast<std::int64_t>(d) == axis) continue;
                if (s.dims[d] != in0.dims[d])
                    rule_fail(op_type, "non-axis dims differ (" + in0.to_string() + " vs " + s.to_string() + ")");
            }
            out.dims[axis] += s.dims[axis];
        }
        return {out};
    }
    if (op_type == "split") {
        std::int64_t axis = attr_int(attrs, "axis", 0);
        if (axis < 0) axis += static_cast<std::int64_t>(in0.dims.size());
        std::int64_t parts = attr_int(attrs, "parts", static_cast<std::int64_t>(output_count));
        if (axis < 0 || axis >= static_cast<std::int64_t>(in0.dims.size()))
            rule_fail(op_type, "axis out of range");
        if (in0.dims[axis] % parts != 0)
            rule_fail(op_type, "axis extent not divisible into " + std::to_string(parts) + " parts");
        TensorShape part = in0;
        part.dims[axis] /= parts;
        return std::vector<TensorShape>(static_cast<std::size_t>(parts), part);
    }
    if (op_type == "transpose") {
        auto perm = attr_pair(attrs, "perm", {});
        if (perm.size() != in0.dims.size()) rule_fail(op_type, "perm length must equal rank");
        std::vector<bool> seen(perm.size(), false);
        TensorShape out = in0;
        for (std::size_t i = 0; i < perm.size(); ++i) {
            auto p = perm[i];
            if (p < 0 || p >= static_cast<std::int64_t>(perm.size()) || seen[static_cast<std::size_t>(p)])
                rule_fail(op_type, "perm is not a permutation");
            seen[static_cast<std::size_t>(p)] = true;
            out.dims[i] = in0.dims[static_cast<std::size_t>(p)];
        }
        return {out};
    }
    if (op_type == "reshape") {
        auto target = attr_pair(attrs, "target_dims", {});
        std::int64_t total = in0.element_count();
        std::int64_t known = 1;
        int inferred = -1;
        for (std::size_t i = 0; i < target.size(); ++i) {
            if (target[i] == -1) {
                if (inferred >= 0) rule_fail(op_type, "at most one inferred (-1) slot allowed");
                inferred = static_cast<int>(i);
            } else if (target[i] < 1) {
                rule_fail(op_type, "target dims must be positive or -1");
            } else {
                known *= target[i];
            }
        }
        TensorShape out;
        out.dtype = in0.dtype;
        out.dims.assign(target.begin(), target.end());
        if (inferred >= 0) {
            if (total % known != 0)
                rule_fail(op_type, "element count " + std::to_string(total) +
                                       " not divisible for inferred slot");
            out.dims[static_cast<std::size_t>(inferred)] = total / known;
        } else if (known != total) {
            rule_fail(op_type, "target element count " + std::to_string(known) +
                                   " differs from input " + std::to_string(total));
        }
        return {out};
    }
    // Element-wise / normalization / custom ops pass shapes through.
    return std::vector<TensorShape>(output_count, in0);
}

// ---------------------------------------------------------------------------
// Tree plumbing
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_path(const std::string& path) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (start <= path.size() && !path.empty()) {
        std::size_t slash = path.find('/', start);
        if (slash == std::string::npos) {
            parts.push_back(path.substr(start));
            break;
        }
        parts.push_back(path.substr(start, slash - start));
        start = slash + 1;
    }
    return parts;
}

std::string last_component(const std::string& path) {
    auto slash = path.rfind('/');
    return slash == std::string::npos ? path : path.substr(slash + 1);
}

const TailorModule* find_in(const TailorModule& m, const std::vector<std::string>& parts,
                            std::size_t depth) {
    if (depth == parts.size()) return &m;
    for (const auto& c : m.children)
        if (last_component(c->path) == parts[depth])
            return find_in(*c, parts, depth + 1);
    return nullptr;
}

// Clone the spine from root to the addressed module, apply fn to the copy of
// the target, share everything else.
ModulePtr clone_spine(const ModulePtr& m, const std::vector<std::string>& parts,
                      std::size_t depth, const std::function<void(TailorModule&)>& fn) {
    auto copy = std::make_shared<TailorModule>(*m);
    if (depth == parts.size()) {
        fn(*copy);
        return copy;
    }
    bool found = false;
    for (auto& c : copy->children) {
        if (last_component(c->path) == parts[depth]) {
            c = clone_spine(c, parts, depth + 1, fn);
            found = true;
            break;
        }
    }
    if (!found)
        throw ValidationError("unknown module path component '" + parts[depth] + "'");
    return copy;
}

void collect_leaves(const TailorModule& m, std::vector<const TailorModule*>& out,
                    bool active_only, bool parent_active) {
    bool act = parent_active && m.active;
    if (m.kind == ModuleKind::Operator || m.kind == ModuleKind::StaticBypass) {
        if (!active_only || act) out.push_back(&m);
        return;
    }
    for (const auto& c : m.children) collect_leaves(*c, out, active_only, act);
}

} // namespace

const TailorModule* find_module(const ModulePtr& model, const std::string& path) {
    if (path.empty()) return model.get();
    return find_in(*model, split_path(path), 0);
}

void for_each_leaf(const ModulePtr& model,
                   const std::function<void(const TailorModule&)>& fn,
                   bool active_only) {
    std::vector<const TailorModule*> leaves;
    collect_leaves(*model, leaves, active_only, true);
    for (auto* l : leaves) fn(*l);
}

// ---------------------------------------------------------------------------
// transform
// ---------------------------------------------------------------------------

namespace {

double attr_as_double(const AttrValue& v) {
    if (auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
    if (auto* d = std::get_if<double>(&v)) return *d;
    throw ValidationError("modification value must be numeric");
}

} // namespace

ModulePtr transform(const ModulePtr& model, const IrModification& mod) {
    if (!model || model->kind != ModuleKind::Model)
        throw ValidationError("transform requires a model root");

    auto parts = split_path(mod.target_path);
    const TailorModule* target = mod.target_path.empty() ? model.get() : find_in(*model, parts, 0);
    if (!target)
        throw ValidationError("unknown module path '" + mod.target_path + "'");

    std::function<void(TailorModule&)> apply;
    if (target->kind == ModuleKind::Model) {
        if (mod.attr != "resolution")
            throw ValidationError("unknown dimension '" + mod.attr + "' for the model root");
        auto it = target->feature.attrs.find("resolution");
        if (it == target->feature.attrs.end())
            throw ValidationError("model has no resolution attribute (input is not spatial)");
        std::int64_t meta = std::get<std::int64_t>(it->second.meta);
        std::int64_t v = std::get<std::int64_t>(mod.value);
        if (v < 1 || v > meta)
            throw ValidationError("resolution " + std::to_string(v) + " outside (0, " +
                                  std::to_string(meta) + "]");
        apply = [v](TailorModule& m) { m.feature.attrs.at("resolution").active = v; };
    } else if (target->kind == ModuleKind::Stage) {
        if (mod.attr != "reduce_depth")
            throw ValidationError("unknown dimension '" + mod.attr + "' for stage '" +
                                  target->path + "'");
        if (!target->feature.attrs.count("depth"))
            throw ValidationError("stage '" + target->path + "' exposes no depth hook");
        std::int64_t meta_depth = std::get<std::int64_t>(target->feature.attrs.at("depth").meta);
        std::int64_t r = std::get<std::int64_t>(mod.value);
        if (r > 0) throw ValidationError("reduce_depth must be <= 0, got " + std::to_string(r));
        std::int64_t depth = meta_depth + r;
        if (depth < 1)
            throw ValidationError("stage '" + target->path + "' of depth " +
                                  std::to_string(meta_depth) + " cannot take reduce_depth " +
                                  std::to_string(r));
        apply = [depth](TailorModule& m) {
            m.feature.attrs.at("depth").active = depth;
            for (std::size_t i = 0; i < m.children.size(); ++i) {
                auto c = std::make_shared<TailorModule>(*m.children[i]);
                c->active = static_cast<std::int64_t>(i) < depth;
                m.children[i] = c;
            }
        };
    } else if (target->kind == ModuleKind::Block) {
        bool known = false;
        for (const auto& h : target->hooks)
            if (h.hook == mod.attr) known = true;
        if (!known)
            throw ValidationError("block '" + target->path + "' (" + target->template_name +
                                  ") exposes no dimension '" + mod.attr + "'");
        double v = attr_as_double(mod.value);
        double meta = attr_as_double(target->feature.attrs.at(mod.attr).meta);
        if (v <= 0 || v > meta + 1e-12)
            throw ValidationError("value " + std::to_string(v) + " for '" + mod.attr +
                                  "' on '" + target->path + "' exceeds meta " + std::to_string(meta));
        AttrValue value = mod.value;
        std::string attr = mod.attr;
        apply = [value, attr](TailorModule& m) { m.feature.attrs.at(attr).active = value; };
    } else {
        throw ValidationError("modifications cannot address operator-level module '" +
                              target->path + "'");
    }

    auto result = mod.target_path.empty()
                      ? clone_spine(model, {}, 0, apply)
                      : clone_spine(model, parts, 0, apply);
    auto root = std::make_shared<TailorModule>(*result);
    root->updated = false;
    return root;
}

// ---------------------------------------------------------------------------
// update
// ---------------------------------------------------------------------------

namespace {

struct ActiveState {
    // Edge substitution around dropped blocks: exit edge -> entry edge.
    std::unordered_map<std::string, std::string> subst;
    std::unordered_map<std::string, TensorShape> edge_shapes;
    std::unordered_map<std::string, std::string> edge_producer_path;

    std::string resolve(const std::string& edge) const {
        auto cur = edge;
        auto it = subst.find(cur);
        while (it != subst.end()) {
            cur = it->second;
            it = subst.find(cur);
        }
        return cur;
    }
};

void collect_block_substitutions(const TailorModule& m, bool parent_active, ActiveState& st) {
    bool act = parent_active && m.active;
    if (m.kind == ModuleKind::Block && !act && !m.entry_edge.empty() && !m.exit_edge.empty()) {
        st.subst[m.exit_edge] = m.entry_edge;
        return;
    }
    for (const auto& c : m.children) collect_block_substitutions(*c, act, st);
}

// Mutable deep copy for the recompute pass.
std::shared_ptr<TailorModule> deep_copy(const TailorModule& m) {
    auto c = std::make_shared<TailorModule>(m);
    for (auto& ch : c->children) ch = deep_copy(*ch);
    return c;
}

void derive_hooked_attrs(TailorModule& m) {
    if (m.kind == ModuleKind::Block) {
        for (const auto& hb : m.hooks) {
            double hv = attr_as_double(m.feature.attrs.at(hb.hook).active);
            double raw = hv * hb.base;
            double rounded = std::llround(raw);
            if (std::abs(raw - rounded) > 1e-6)
                throw ValidationError("hook '" + hb.hook + "' value on '" + m.path +
                                      "' yields non-integral attribute (" + std::to_string(raw) + ")");
            auto child = std::make_shared<TailorModule>(*m.children.at(hb.child_index));
            child->feature.attrs.at(hb.attr).active = static_cast<std::int64_t>(rounded);
            m.children[hb.child_index] = child;
        }
    }
    for (auto& ch : m.children) {
        auto c = std::make_shared<TailorModule>(*ch);
        derive_hooked_attrs(*c);
        ch = c;
    }
}

// Leaf attrs not driven by a hook return to meta on every update.
void reset_leaf_attrs(TailorModule& m) {
    if (m.kind == ModuleKind::Operator || m.kind == ModuleKind::StaticBypass) {
        for (auto& [name, st] : m.feature.attrs) st.active = st.meta;
        return;
    }
    for (auto& ch : m.children) {
        auto c = std::make_shared<TailorModule>(*ch);
        reset_leaf_attrs(*c);
        ch = c;
    }
}

AttrMap active_attrs_of(const GraphNode& node, const TailorModule& leaf) {
    AttrMap out = node.attrs;
    for (const auto& [name, st] : leaf.feature.attrs) out[name] = st.active;
    return out;
}

void write_back_shapes(TailorModule& m, ActiveState& st, const ComputationGraph& g,
                       bool parent_active) {
    bool act = parent_active && m.active;
    if (m.kind == ModuleKind::Operator || m.kind == ModuleKind::StaticBypass) {
        if (!act) return;
        const GraphNode* node = g.node_by_id(m.source_nodes.at(0));
        for (std::size_t i = 0; i < node->inputs.size(); ++i)
            m.feature.in_shapes[i].active = st.edge_shapes.at(st.resolve(node->inputs[i]));
        for (std::size_t i = 0; i < node->outputs.size(); ++i)
            m.feature.out_shapes[i].active = st.edge_shapes.at(node->outputs[i]);
        return;
    }
    for (auto& ch : m.children) {
        auto c = std::make_shared<TailorModule>(*ch);
        write_back_shapes(*c, st, g, act);
        ch = c;
    }
    if (m.kind == ModuleKind::Block && act && !m.entry_edge.empty()) {
        if (!m.feature.in_shapes.empty())
            m.feature.in_shapes[0].active = st.edge_shapes.at(st.resolve(m.entry_edge));
        if (!m.feature.out_shapes.empty())
            m.feature.out_shapes[0].active = st.edge_shapes.at(m.exit_edge);
    }
    if (m.kind == ModuleKind::Stage && act) {
        const TailorModule* first = nullptr;
        const TailorModule* last = nullptr;
        for (const auto& c : m.children)
            if (c->active) {
                if (!first) first = c.get();
                last = c.get();
            }
        if (first && !first->feature.in_shapes.empty() && !m.feature.in_shapes.empty())
            m.feature.in_shapes[0].active = first->feature.in_shapes[0].active;
        if (last && !last->feature.out_shapes.empty() && !m.feature.out_shapes.empty())
            m.feature.out_shapes[0].active = last->feature.out_shapes[0].active;
    }
}

} // namespace

ModulePtr update(const ModulePtr& model) {
    if (!model || model->kind != ModuleKind::Model)
        throw ValidationError("update requires a model root");
    const ComputationGraph& g = *model->source_graph;

    auto root = deep_copy(*model);
    reset_leaf_attrs(*root);
    derive_hooked_attrs(*root);

    ActiveState st;
    collect_block_substitutions(*root, true, st);

    // Seed graph input shapes, applying the active resolution if present.
    std::optional<std::int64_t> resolution;
    auto res_it = root->feature.attrs.find("resolution");
    if (res_it != root->feature.attrs.end()) {
        std::int64_t active = std::get<std::int64_t>(res_it->second.active);
        std::int64_t meta = std::get<std::int64_t>(res_it->second.meta);
        if (active != meta) resolution = active;
    }
    for (const auto& eid : g.graph_inputs) {
        TensorShape s = g.edges.at(eid).value();
        if (resolution && s.dims.size() == 4) {
            s.dims[2] = *resolution;
            s.dims[3] = *resolution;
        }
        st.edge_shapes[eid] = s;
        st.edge_producer_path[eid] = "<graph input>";
    }

    // Propagate through active leaves in source topological order.
    std::unordered_map<std::string, const TailorModule*> leaf_by_node;
    std::vector<const TailorModule*> active_leaves;
    collect_leaves(*root, active_leaves, true, true);
    for (auto* l : active_leaves) leaf_by_node[l->source_nodes.at(0)] = l;

    for (auto idx : topological_order(g)) {
        const GraphNode& node = g.nodes[idx];
        auto leaf_it = leaf_by_node.find(node.id);
        if (leaf_it == leaf_by_node.end()) continue; // dropped
        const TailorModule* leaf = leaf_it->second;

        std::vector<TensorShape> ins;
        ins.reserve(node.inputs.size());
        for (const auto& eid : node.inputs) {
            auto resolved = st.resolve(eid);
            auto sh = st.edge_shapes.find(resolved);
            if (sh == st.edge_shapes.end())
                throw LegalityError("edge '" + resolved + "' has no computed shape feeding '" +
                                        leaf->path + "'",
                                    leaf->path, "<unknown>");
            ins.push_back(sh->second);
        }
        std::vector<TensorShape> outs;
        try {
            outs = deduce_output_shapes(node.op_type, active_attrs_of(node, *leaf), ins,
                                        node.outputs.size());
        } catch (const ValidationError& e) {
            std::string other = node.inputs.empty()
                                    ? std::string("<none>")
                                    : st.edge_producer_path[st.resolve(node.inputs.back())];
            throw LegalityError(std::string("shape contradiction at '") + leaf->path + "': " + e.what(),
                                leaf->path, other);
        }
        for (std::size_t i = 0; i < node.outputs.size(); ++i) {
            st.edge_shapes[node.outputs[i]] = outs[i];
            st.edge_producer_path[node.outputs[i]] = leaf->path;
        }
    }

    write_back_shapes(*root, st, g, true);

    // Model-level shapes.
    for (std::size_t i = 0; i < g.graph_inputs.size(); ++i)
        root->feature.in_shapes[i].active = st.edge_shapes.at(g.graph_inputs[i]);
    for (std::size_t i = 0; i < g.graph_outputs.size(); ++i) {
        auto resolved = st.resolve(g.graph_outputs[i]);
        auto it = st.edge_shapes.find(resolved);
        if (it == st.edge_shapes.end())
            throw LegalityError("graph output '" + g.graph_outputs[i] + "' unfed after update",
                                "<model>", "<graph output>");
        root->feature.out_shapes[i].active = it->second;
    }

    root->updated = true;
    return root;
}

// ---------------------------------------------------------------------------
// build
// ---------------------------------------------------------------------------

ComputationGraph build(const ModulePtr& model) {
    if (!model || model->kind != ModuleKind::Model)
        throw ValidationError("build requires a model root");
    if (!model->updated)
        throw ValidationError("build called on a module tree without a prior update");
    const ComputationGraph& g = *model->source_graph;

    ActiveState st;
    collect_block_substitutions(*model, true, st);

    std::unordered_map<std::string, const TailorModule*> leaf_by_node;
    std::vector<const TailorModule*> active_leaves;
    {
        std::vector<const TailorModule*> tmp;
        collect_leaves(*model, tmp, true, true);
        active_leaves = tmp;
    }
    for (auto* l : active_leaves) leaf_by_node[l->source_nodes.at(0)] = l;

    ComputationGraph out;
    out.metadata = g.metadata;
    out.graph_inputs = g.graph_inputs;
    for (const auto& eid : g.graph_outputs) out.graph_outputs.push_back(st.resolve(eid));

    for (std::size_t i = 0; i < g.graph_inputs.size(); ++i)
        out.edges[g.graph_inputs[i]] = model->feature.in_shapes[i].active;

    for (auto idx : topological_order(g)) {
        const GraphNode& node = g.nodes[idx];
        auto leaf_it = leaf_by_node.find(node.id);
        if (leaf_it == leaf_by_node.end()) continue;
        const TailorModule* leaf = leaf_it->second;

        GraphNode n;
        n.id = node.id;
        n.op_type = node.op_type;
        n.attrs = node.attrs;
        for (const auto& [name, stt] : leaf->feature.attrs) n.attrs[name] = stt.active;
        for (const auto& eid : node.inputs) n.inputs.push_back(st.resolve(eid));
        n.outputs = node.outputs;
        for (std::size_t i = 0; i < node.outputs.size(); ++i)
            out.edges[node.outputs[i]] = leaf->feature.out_shapes[i].active;
        out.nodes.push_back(std::move(n));
    }
    return out;
}

std::map<std::string, OpShapes> infer_shapes(const ModulePtr& model) {
    if (!model || !model->updated)
        throw ValidationError("infer_shapes requires an updated module tree");
    std::map<std::string, OpShapes> result;
    for_each_leaf(model, [&](const TailorModule& leaf) {
        OpShapes s;
        for (const auto& st : leaf.feature.in_shapes) s.in_shapes.push_back(st.active);
        for (const auto& st : leaf.feature.out_shapes) s.out_shapes.push_back(st.active);
        result[leaf.path] = std::move(s);
    }, /*active_only=*/true);
    return result;
}

// ---------------------------------------------------------------------------
// dump
// ---------------------------------------------------------------------------

namespace {

void dump_module(const TailorModule& m, std::ostringstream& out, int depth) {
    for (int i = 0; i < depth; ++i) out << "  ";
    out << (m.path.empty() ? "model" : m.path) << " [" << module_kind_name(m.kind);
    if (!m.template_name.empty()) out << ':' << m.template_name;
    if (!m.active) out << " inactive";
    out << ']';
    for (const auto& [name, st] : m.feature.attrs)
        out << ' ' << name << '=' << attr_value_to_string(st.active) << "/"
            << attr_value_to_string(st.meta);
    if (!m.feature.out_shapes.empty())
        out << " -> " << m.feature.out_shapes[0].active.to_string();
    if ((m.kind == ModuleKind::Operator || m.kind == ModuleKind::StaticBypass) &&
        !m.source_nodes.empty())
        out << " (" << m.source_nodes[0] << ')';
    out << '\n';
    for (const auto& c : m.children) dump_module(*c, out, depth + 1);
}

} // namespace

std::string dump_tree(const ModulePtr& model) {
    std::ostringstream out;
    dump_module(*model, out, 0);
    return out.str();
}

} // namespace tailor::ir
