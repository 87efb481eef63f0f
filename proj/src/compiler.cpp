#include "tailor/compiler.hpp"
#include "tailor/errors.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

namespace tailor::compiler {

using ir::Feature;
using ir::ModuleKind;
using ir::ModulePtr;
using ir::TailorModule;

bool is_dynamic_op(const std::string& op_type) {
    return op_type == "conv2d" || op_type == "depthwise_conv2d" || op_type == "matmul" ||
           op_type == "concat";
}

namespace {

// Meta shape propagation over the source graph. Declared internal shapes are
// verified against the deduction rules.
std::unordered_map<std::string, TensorShape> compute_meta_shapes(const ComputationGraph& g) {
    std::unordered_map<std::string, TensorShape> shapes;
    for (const auto& eid : g.graph_inputs) {
        const auto& declared = g.edges.at(eid);
        if (!declared)
            throw ValidationError("graph input '" + eid + "' must declare a tensor shape");
        shapes[eid] = *declared;
    }
    for (auto idx : topological_order(g)) {
        const GraphNode& n = g.nodes[idx];
        std::vector<TensorShape> ins;
        for (const auto& eid : n.inputs) ins.push_back(shapes.at(eid));
        std::vector<TensorShape> outs;
        try {
            outs = ir::deduce_output_shapes(n.op_type, n.attrs, ins, n.outputs.size());
        } catch (const ValidationError& e) {
            throw ValidationError("node '" + n.id + "': " + e.what());
        }
        for (std::size_t i = 0; i < n.outputs.size(); ++i) {
            const auto& eid = n.outputs[i];
            const auto& declared = g.edges.at(eid);
            if (declared && !(*declared == outs[i]))
                throw ValidationError("edge '" + eid + "': declared shape " + declared->to_string() +
                                      " contradicts deduced " + outs[i].to_string());
            shapes[eid] = outs[i];
        }
    }
    return shapes;
}

ModulePtr make_leaf(const GraphNode& n,
                    const std::unordered_map<std::string, TensorShape>& shapes) {
    auto m = std::make_shared<TailorModule>();
    m->kind = is_dynamic_op(n.op_type) ? ModuleKind::Operator : ModuleKind::StaticBypass;
    m->source_nodes = {n.id};
    if (n.op_type == "conv2d") {
        auto oc = n.attrs.at("out_channels");
        m->feature.attrs["out_channels"] = {oc, oc};
    } else if (n.op_type == "matmul" && n.attrs.count("out_features")) {
        auto of = n.attrs.at("out_features");
        m->feature.attrs["out_features"] = {of, of};
    }
    for (const auto& eid : n.inputs) {
        const auto& s = shapes.at(eid);
        m->feature.in_shapes.push_back({s, s});
    }
    for (const auto& eid : n.outputs) {
        const auto& s = shapes.at(eid);
        m->feature.out_shapes.push_back({s, s});
    }
    return m;
}

struct GraphIndex {
    const ComputationGraph* g = nullptr;
    std::unordered_map<std::string, std::size_t> node_idx;
    std::unordered_map<std::string, std::size_t> producer;          // edge -> node index
    std::unordered_map<std::string, std::vector<std::size_t>> consumers;
    std::vector<std::size_t> topo;
    std::vector<std::size_t> topo_rank;

    explicit GraphIndex(const ComputationGraph& graph) : g(&graph) {
        for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
            node_idx[graph.nodes[i].id] = i;
            for (const auto& e : graph.nodes[i].outputs) producer[e] = i;
            for (const auto& e : graph.nodes[i].inputs) consumers[e].push_back(i);
        }
        topo = topological_order(graph);
        topo_rank.resize(graph.nodes.size());
        for (std::size_t r = 0; r < topo.size(); ++r) topo_rank[topo[r]] = r;
    }
};

// Nodes reachable downstream of an edge.
std::vector<bool> reachable_from_edge(const GraphIndex& gi, const std::string& edge) {
    std::vector<bool> reach(gi.g->nodes.size(), false);
    std::vector<std::size_t> stack;
    auto it = gi.consumers.find(edge);
    if (it != gi.consumers.end())
        for (auto c : it->second) { reach[c] = true; stack.push_back(c); }
    while (!stack.empty()) {
        auto i = stack.back();
        stack.pop_back();
        for (const auto& out : gi.g->nodes[i].outputs) {
            auto ct = gi.consumers.find(out);
            if (ct == gi.consumers.end()) continue;
            for (auto c : ct->second)
                if (!reach[c]) { reach[c] = true; stack.push_back(c); }
        }
    }
    return reach;
}

std::vector<bool> reaches_node(const GraphIndex& gi, std::size_t target) {
    std::vector<bool> co(gi.g->nodes.size(), false);
    co[target] = true;
    // Walk in reverse topological order.
    for (auto it = gi.topo.rbegin(); it != gi.topo.rend(); ++it) {
        std::size_t i = *it;
        if (co[i]) continue;
        for (const auto& out : gi.g->nodes[i].outputs) {
            auto ct = gi.consumers.find(out);
            if (ct == gi.consumers.end()) continue;
            for (auto c : ct->second)
                if (co[c]) { co[i] = true; break; }
            if (co[i]) break;
        }
    }
    return co;
}

struct Region {
    std::string entry_edge;
    std::string exit_edge;
    std::vector<std::size_t> nodes; // topo order
};

// Trace the consumers of a fan-out edge until they converge; a groupable region
// must be single-entry (only the fork edge crosses in) and single-exit.
std::optional<Region> trace_region(const GraphIndex& gi, const std::string& edge) {
    const auto& cons = gi.consumers.at(edge);
    std::vector<bool> reach = reachable_from_edge(gi, edge);

    // Convergence node: reachable (inclusively) from every consumer, minimal rank.
    std::vector<std::size_t> counts(gi.g->nodes.size(), 0);
    for (auto c : cons) {
        std::vector<bool> r = reachable_from_edge(gi, gi.g->nodes[c].outputs.empty()
                                                          ? std::string()
                                                          : gi.g->nodes[c].outputs[0]);
        // include the consumer itself
        r[c] = true;
        // nodes with multiple outputs: union reachability over all outputs
        for (std::size_t oi = 1; oi < gi.g->nodes[c].outputs.size(); ++oi) {
            auto r2 = reachable_from_edge(gi, gi.g->nodes[c].outputs[oi]);
            for (std::size_t k = 0; k < r.size(); ++k) r[k] = r[k] || r2[k];
        }
        for (std::size_t k = 0; k < r.size(); ++k)
            if (r[k]) ++counts[k];
    }
    std::optional<std::size_t> join;
    for (auto i : gi.topo) {
        if (counts[i] == cons.size()) { join = i; break; }
    }
    if (!join) return std::nullopt;

    std::vector<bool> co = reaches_node(gi, *join);
    Region region;
    region.entry_edge = edge;
    for (auto i : gi.topo)
        if (reach[i] && co[i]) region.nodes.push_back(i);

    std::unordered_set<std::size_t> inside(region.nodes.begin(), region.nodes.end());
    // Single entry: every external input of the region is the fork edge itself.
    for (auto i : region.nodes) {
        for (const auto& in : gi.g->nodes[i].inputs) {
            if (in == edge) continue;
            auto p = gi.producer.find(in);
            if (p == gi.producer.end() || !inside.count(p->second)) return std::nullopt;
        }
    }
    // Single exit: only the join feeds anything outside.
    const GraphNode& join_node = gi.g->nodes[*join];
    if (join_node.outputs.size() != 1) return std::nullopt;
    for (auto i : region.nodes) {
        for (const auto& out : gi.g->nodes[i].outputs) {
            bool is_graph_output = std::find(gi.g->graph_outputs.begin(), gi.g->graph_outputs.end(),
                                             out) != gi.g->graph_outputs.end();
            bool external_consumer = false;
            auto ct = gi.consumers.find(out);
            if (ct != gi.consumers.end())
                for (auto c : ct->second)
                    if (!inside.count(c)) external_consumer = true;
            if (i == *join) continue;
            if (is_graph_output || external_consumer) return std::nullopt;
        }
    }
    region.exit_edge = join_node.outputs[0];
    return region;
}

std::int64_t width_of(const TensorShape& s) {
    return s.dims.size() == 4 ? s.dims[1] : s.dims.back();
}

std::string resolution_key(const TensorShape& s) {
    if (s.dims.size() == 4) return std::to_string(s.dims[2]) + "x" + std::to_string(s.dims[3]);
    return "none";
}

} // namespace

// ---------------------------------------------------------------------------
// Step 1
// ---------------------------------------------------------------------------

std::vector<ModulePtr> parse_operators(const ComputationGraph& g) {
    validate_graph(g);
    auto shapes = compute_meta_shapes(g);
    GraphIndex gi(g);

    // Fan-out edges ordered by producer position (graph inputs first).
    std::vector<std::pair<long long, std::string>> fork_edges;
    for (const auto& [eid, cons] : gi.consumers) {
        if (cons.size() < 2) continue;
        auto p = gi.producer.find(eid);
        long long rank = p == gi.producer.end() ? -1 : static_cast<long long>(gi.topo_rank[p->second]);
        fork_edges.emplace_back(rank, eid);
    }
    std::sort(fork_edges.begin(), fork_edges.end());

    std::vector<bool> claimed(g.nodes.size(), false);
    std::vector<Region> regions;
    for (const auto& [rank, eid] : fork_edges) {
        (void)rank;
        auto region = trace_region(gi, eid);
        if (!region) continue;
        bool overlap = false;
        for (auto i : region->nodes)
            if (claimed[i]) { overlap = true; break; }
        if (overlap) continue;
        for (auto i : region->nodes) claimed[i] = true;
        regions.push_back(std::move(*region));
    }

    std::unordered_map<std::size_t, const Region*> region_at_first_node;
    std::unordered_set<std::size_t> in_region;
    for (const auto& r : regions) {
        region_at_first_node[r.nodes.front()] = &r;
        for (auto i : r.nodes) in_region.insert(i);
    }

    std::vector<ModulePtr> out;
    for (auto idx : gi.topo) {
        auto rit = region_at_first_node.find(idx);
        if (rit != region_at_first_node.end()) {
            const Region& r = *rit->second;
            auto block = std::make_shared<TailorModule>();
            block->kind = ModuleKind::Block;
            block->template_name = "DefaultBlock";
            block->entry_edge = r.entry_edge;
            block->exit_edge = r.exit_edge;
            for (auto i : r.nodes) {
                block->children.push_back(make_leaf(g.nodes[i], shapes));
                block->source_nodes.push_back(g.nodes[i].id);
            }
            const auto& in_s = shapes.at(r.entry_edge);
            const auto& out_s = shapes.at(r.exit_edge);
            block->feature.in_shapes.push_back({in_s, in_s});
            block->feature.out_shapes.push_back({out_s, out_s});
            out.push_back(block);
            continue;
        }
        if (in_region.count(idx)) continue;
        out.push_back(make_leaf(g.nodes[idx], shapes));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Step 2
// ---------------------------------------------------------------------------

namespace {

struct RegionMatch {
    const BlockTemplate* tmpl = nullptr;
    const PatternVariant* variant = nullptr;
    std::vector<std::size_t> assignment; // pattern index -> position in region node list
};

bool try_match_region(const GraphIndex& gi, const std::vector<std::string>& region_node_ids,
                      const std::string& entry_edge, const PatternVariant& variant,
                      std::vector<std::size_t>& assignment) {
    const std::size_t k = variant.nodes.size();
    if (region_node_ids.size() != k) return false;

    std::vector<const GraphNode*> region;
    for (const auto& id : region_node_ids) region.push_back(&gi.g->nodes[gi.node_idx.at(id)]);

    assignment.assign(k, SIZE_MAX);
    std::vector<bool> used(k, false);

    std::function<bool(std::size_t)> assign = [&](std::size_t p) -> bool {
        if (p == k) return true;
        const PatternNode& pn = variant.nodes[p];
        for (std::size_t cand = 0; cand < k; ++cand) {
            if (used[cand]) continue;
            const GraphNode* node = region[cand];
            if (!pred_matches(pn.pred, node->op_type)) continue;
            if (node->inputs.size() != pn.inputs.size()) continue;
            // Expected input edges, derived from already-assigned pattern inputs.
            std::vector<std::string> expected;
            bool ok = true;
            for (int pi : pn.inputs) {
                if (pi < 0) {
                    expected.push_back(entry_edge);
                } else {
                    std::size_t src = assignment[static_cast<std::size_t>(pi)];
                    if (src == SIZE_MAX) { ok = false; break; }
                    const GraphNode* src_node = region[src];
                    if (src_node->outputs.size() != 1) { ok = false; break; }
                    expected.push_back(src_node->outputs[0]);
                }
            }
            if (!ok) continue;
            bool input_ok;
            if (pn.ordered_inputs) {
                input_ok = std::equal(expected.begin(), expected.end(), node->inputs.begin());
            } else {
                auto a = expected;
                auto b = node->inputs;
                std::sort(a.begin(), a.end());
                std::sort(b.begin(), b.end());
                input_ok = a == b;
            }
            if (!input_ok) continue;
            used[cand] = true;
            assignment[p] = cand;
            if (assign(p + 1)) return true;
            used[cand] = false;
            assignment[p] = SIZE_MAX;
        }
        return false;
    };
    return assign(0);
}

// A linear run of loose leaves starting at list position `start` matching the
// chain variant: every internal edge single-producer/single-consumer.
bool try_match_chain(const GraphIndex& gi, const std::vector<ModulePtr>& mods, std::size_t start,
                     const PatternVariant& variant, std::vector<std::string>& node_ids) {
    const std::size_t k = variant.nodes.size();
    if (start + k > mods.size()) return false;
    node_ids.clear();
    std::string prev_out;
    for (std::size_t j = 0; j < k; ++j) {
        const ModulePtr& m = mods[start + j];
        if (m->kind != ModuleKind::Operator && m->kind != ModuleKind::StaticBypass) return false;
        const GraphNode& node = gi.g->nodes[gi.node_idx.at(m->source_nodes[0])];
        if (!pred_matches(variant.nodes[j].pred, node.op_type)) return false;
        if (node.inputs.size() != 1) return false;
        if (j > 0) {
            if (node.inputs[0] != prev_out) return false;
        }
        if (node.outputs.size() != 1) return false;
        if (j + 1 < k) {
            // Internal edges must be consumed only by the next chain member.
            auto ct = gi.consumers.find(node.outputs[0]);
            if (ct == gi.consumers.end() || ct->second.size() != 1) return false;
            bool is_graph_output = std::find(gi.g->graph_outputs.begin(), gi.g->graph_outputs.end(),
                                             node.outputs[0]) != gi.g->graph_outputs.end();
            if (is_graph_output) return false;
        }
        prev_out = node.outputs[0];
        node_ids.push_back(node.id);
    }
    return true;
}

double hook_base_value(const GraphIndex& gi, const HookSpec& hook, const std::string& entry_edge,
                       const GraphNode& target,
                       const std::unordered_map<std::string, TensorShape>& shapes) {
    if (hook.base == HookSpec::Base::MetaAttr) {
        const auto& v = target.attrs.at(hook.attr);
        if (auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
        return std::get<double>(v);
    }
    (void)gi;
    return static_cast<double>(width_of(shapes.at(entry_edge)));
}

ModulePtr build_template_block(const GraphIndex& gi, const BlockTemplate& tmpl,
                               const PatternVariant& variant,
                               const std::vector<std::string>& node_ids_in_topo,
                               const std::vector<std::size_t>& pattern_to_pos,
                               const std::string& entry_edge, const std::string& exit_edge,
                               const std::unordered_map<std::string, TensorShape>& shapes) {
    auto block = std::make_shared<TailorModule>();
    block->kind = ModuleKind::Block;
    block->template_name = tmpl.name;
    block->entry_edge = entry_edge;
    block->exit_edge = exit_edge;
    for (const auto& id : node_ids_in_topo) {
        block->children.push_back(make_leaf(gi.g->nodes[gi.node_idx.at(id)], shapes));
        block->source_nodes.push_back(id);
    }
    const auto& in_s = shapes.at(entry_edge);
    const auto& out_s = shapes.at(exit_edge);
    block->feature.in_shapes.push_back({in_s, in_s});
    block->feature.out_shapes.push_back({out_s, out_s});

    for (const auto& hook : tmpl.hooks) {
        auto tit = variant.hook_targets.find(hook.name);
        if (tit == variant.hook_targets.end()) continue;
        const std::string& target_id = node_ids_in_topo[pattern_to_pos[static_cast<std::size_t>(tit->second)]];
        const GraphNode& target = gi.g->nodes[gi.node_idx.at(target_id)];
        double base = hook_base_value(gi, hook, entry_edge, target, shapes);
        double meta_attr;
        {
            const auto& v = target.attrs.at(hook.attr);
            meta_attr = std::holds_alternative<std::int64_t>(v)
                            ? static_cast<double>(std::get<std::int64_t>(v))
                            : std::get<double>(v);
        }
        double ratio = meta_attr / base;
        std::size_t child_index = 0;
        for (std::size_t i = 0; i < block->source_nodes.size(); ++i)
            if (block->source_nodes[i] == target_id) child_index = i;
        block->hooks.push_back({hook.name, child_index, hook.attr, base});
        block->feature.attrs[hook.name] = {AttrValue(ratio), AttrValue(ratio)};
    }
    return block;
}

} // namespace

std::vector<ModulePtr> match_blocks(const std::vector<ModulePtr>& mods, const ComputationGraph& g,
                                    const std::vector<const BlockTemplate*>& templates) {
    GraphIndex gi(g);
    auto shapes = compute_meta_shapes(g);

    std::vector<ModulePtr> out;
    std::size_t i = 0;
    while (i < mods.size()) {
        const ModulePtr& m = mods[i];

        struct Candidate {
            const BlockTemplate* tmpl;
            const PatternVariant* variant;
            std::vector<std::string> node_ids; // topo order
            std::vector<std::size_t> pattern_to_pos;
            std::size_t consumed; // modules consumed from the list
        };
        std::vector<Candidate> candidates;

        if (m->kind == ModuleKind::Block && m->template_name == "DefaultBlock") {
            for (const auto* tmpl : templates) {
                for (const auto& variant : tmpl->variants) {
                    if (!variant.fork_join) continue;
                    std::vector<std::size_t> assignment;
                    if (try_match_region(gi, m->source_nodes, m->entry_edge, variant, assignment))
                        candidates.push_back({tmpl, &variant, m->source_nodes, assignment, 1});
                }
            }
        } else if (m->kind == ModuleKind::Operator || m->kind == ModuleKind::StaticBypass) {
            for (const auto* tmpl : templates) {
                for (const auto& variant : tmpl->variants) {
                    if (variant.fork_join) continue;
                    std::vector<std::string> node_ids;
                    if (try_match_chain(gi, mods, i, variant, node_ids)) {
                        std::vector<std::size_t> identity(node_ids.size());
                        for (std::size_t k = 0; k < identity.size(); ++k) identity[k] = k;
                        candidates.push_back({tmpl, &variant, node_ids, identity, node_ids.size()});
                    }
                }
            }
        }

        if (candidates.empty()) {
            out.push_back(m);
            ++i;
            continue;
        }
        std::stable_sort(candidates.begin(), candidates.end(),
                         [](const Candidate& a, const Candidate& b) {
                             return a.node_ids.size() > b.node_ids.size();
                         });
        if (candidates.size() > 1 && candidates[0].tmpl != candidates[1].tmpl &&
            candidates[0].node_ids.size() == candidates[1].node_ids.size()) {
            throw ValidationError("ambiguous template match over nodes starting at '" +
                                  candidates[0].node_ids.front() + "': " +
                                  candidates[0].tmpl->name + " vs " + candidates[1].tmpl->name);
        }
        const Candidate& best = candidates.front();
        std::string entry, exit;
        if (m->kind == ModuleKind::Block) {
            entry = m->entry_edge;
            exit = m->exit_edge;
        } else {
            entry = gi.g->nodes[gi.node_idx.at(best.node_ids.front())].inputs[0];
            exit = gi.g->nodes[gi.node_idx.at(best.node_ids.back())].outputs[0];
        }
        out.push_back(build_template_block(gi, *best.tmpl, *best.variant, best.node_ids,
                                           best.pattern_to_pos, entry, exit, shapes));
        i += best.consumed;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Step 3
// ---------------------------------------------------------------------------

namespace {

ModulePtr with_paths(const TailorModule& m, const std::string& path) {
    auto c = std::make_shared<TailorModule>(m);
    c->path = path;
    std::size_t op_count = 0, block_count = 0, stage_count = 0;
    for (auto& ch : c->children) {
        std::string component;
        switch (ch->kind) {
            case ModuleKind::Stage: component = "stage[" + std::to_string(stage_count++) + "]"; break;
            case ModuleKind::Block: component = "block[" + std::to_string(block_count++) + "]"; break;
            default: component = "op[" + std::to_string(op_count++) + "]"; break;
        }
        ch = with_paths(*ch, path.empty() ? component : path + "/" + component);
    }
    return c;
}

} // namespace

ir::ModulePtr divide_stages(const std::vector<ModulePtr>& mods, const ComputationGraph& g) {
    std::vector<ModulePtr> children;
    std::vector<ModulePtr> run;
    std::string run_key;

    auto block_key = [](const TailorModule& b) {
        const TensorShape& out = b.feature.out_shapes[0].meta;
        return resolution_key(out) + "/" + std::to_string(width_of(out));
    };
    auto flush = [&]() {
        if (run.empty()) return;
        auto stage = std::make_shared<TailorModule>();
        stage->kind = ModuleKind::Stage;
        stage->children = run;
        std::int64_t depth = static_cast<std::int64_t>(run.size());
        stage->feature.attrs["depth"] = {AttrValue(depth), AttrValue(depth)};
        stage->feature.in_shapes = run.front()->feature.in_shapes;
        stage->feature.out_shapes = run.back()->feature.out_shapes;
        for (const auto& b : run)
            for (const auto& sn : b->source_nodes) stage->source_nodes.push_back(sn);
        children.push_back(stage);
        run.clear();
        run_key.clear();
    };

    for (const auto& m : mods) {
        if (m->kind != ModuleKind::Block) {
            flush();
            children.push_back(m);
            continue;
        }
        bool res_changing_default =
            m->template_name == "DefaultBlock" &&
            resolution_key(m->feature.in_shapes[0].meta) != resolution_key(m->feature.out_shapes[0].meta);
        if (res_changing_default) {
            // Cannot be safely depth-dropped: isolate without a depth hook.
            flush();
            auto stage = std::make_shared<TailorModule>();
            stage->kind = ModuleKind::Stage;
            stage->children = {m};
            stage->feature.in_shapes = m->feature.in_shapes;
            stage->feature.out_shapes = m->feature.out_shapes;
            stage->source_nodes = m->source_nodes;
            children.push_back(stage);
            continue;
        }
        std::string key = block_key(*m);
        if (!run.empty() && key != run_key) flush();
        run.push_back(m);
        run_key = key;
    }
    flush();

    auto root = std::make_shared<TailorModule>();
    root->kind = ModuleKind::Model;
    root->children = children;
    root->source_graph = std::make_shared<ComputationGraph>(g);

    auto shapes = compute_meta_shapes(g);
    for (const auto& eid : g.graph_inputs) {
        const auto& s = shapes.at(eid);
        root->feature.in_shapes.push_back({s, s});
    }
    for (const auto& eid : g.graph_outputs) {
        const auto& s = shapes.at(eid);
        root->feature.out_shapes.push_back({s, s});
    }
    if (!g.graph_inputs.empty()) {
        const auto& in0 = shapes.at(g.graph_inputs[0]);
        if (in0.dims.size() == 4 && in0.dims[2] == in0.dims[3]) {
            AttrValue r(in0.dims[2]);
            root->feature.attrs["resolution"] = {r, r};
        }
    }

    auto pathed = with_paths(*root, "");
    return ir::update(pathed);
}

// ---------------------------------------------------------------------------
// compile
// ---------------------------------------------------------------------------

namespace {

void check_node_conservation(const ir::ModulePtr& model, const ComputationGraph& g) {
    std::map<std::string, int> seen;
    ir::for_each_leaf(model, [&](const TailorModule& leaf) {
        for (const auto& id : leaf.source_nodes) ++seen[id];
    });
    for (const auto& n : g.nodes) {
        auto it = seen.find(n.id);
        if (it == seen.end() || it->second != 1)
            throw ValidationError("node conservation violated for '" + n.id + "'");
    }
    std::size_t total = 0;
    for (const auto& [id, c] : seen) total += static_cast<std::size_t>(c);
    if (total != g.nodes.size())
        throw ValidationError("node conservation violated: leaf cover differs from node set");
}

std::string make_report(const ComputationGraph& g, const ir::ModulePtr& model,
                        const space::ModificationSpace& sp) {
    std::size_t dynamic = 0, bypassed = 0;
    std::vector<std::string> custom_ops;
    ir::for_each_leaf(model, [&](const TailorModule& leaf) {
        if (leaf.kind == ModuleKind::Operator) ++dynamic; else ++bypassed;
        const GraphNode* n = g.node_by_id(leaf.source_nodes[0]);
        if (is_custom_op(n->op_type)) custom_ops.push_back(n->id + " (" + n->op_type + ")");
    });

    std::map<std::string, int> block_counts;
    std::vector<const TailorModule*> stages;
    std::function<void(const TailorModule&)> walk = [&](const TailorModule& m) {
        if (m.kind == ModuleKind::Block) ++block_counts[m.template_name];
        if (m.kind == ModuleKind::Stage) stages.push_back(&m);
        for (const auto& c : m.children) walk(*c);
    };
    walk(*model);

    std::ostringstream out;
    out << "# tfg-report/1\n";
    auto name_it = g.metadata.find("name");
    out << "model: " << (name_it != g.metadata.end() ? name_it->second : "unnamed") << "\n";
    out << "nodes: " << g.nodes.size() << "\n";
    out << "dynamic_operators: " << dynamic << "\n";
    out << "bypassed_operators: " << bypassed << "\n";
    out << "custom_passthrough: " << custom_ops.size() << "\n";
    for (const auto& c : custom_ops) out << "  custom: " << c << "\n";
    out << "blocks:";
    if (block_counts.empty()) out << " none";
    for (const auto& [name, count] : block_counts) out << ' ' << name << '=' << count;
    out << "\n";
    out << "stages: " << stages.size() << "\n";
    for (const auto* s : stages) {
        out << "  " << s->path << ": blocks=" << s->children.size();
        auto d = s->feature.attrs.find("depth");
        if (d != s->feature.attrs.end())
            out << " depth=" << attr_value_to_string(d->second.meta);
        else
            out << " depth=fixed";
        out << " out=" << s->feature.out_shapes[0].meta.to_string() << "\n";
    }
    out << "dimensions: " << sp.dims.size() << "\n";
    for (const auto& d : sp.dims) {
        out << "  " << d.dim_id << ": [";
        for (std::size_t i = 0; i < d.candidates.size(); ++i) {
            if (i) out << ", ";
            out << space::value_to_string(d.candidates[i]);
        }
        out << "] default=" << space::value_to_string(d.default_value) << "\n";
    }
    return out.str();
}

} // namespace

CompileResult compile(const ComputationGraph& g, const space::SpaceConfig& cfg) {
    std::vector<const BlockTemplate*> active;
    for (const auto& name : cfg.block_templates) {
        const BlockTemplate* t = find_template(name);
        if (!t) throw ValidationError("unknown block template '" + name + "'");
        active.push_back(t);
    }

    auto step1 = parse_operators(g);
    auto step2 = match_blocks(step1, g, active);
    auto model = divide_stages(step2, g);
    check_node_conservation(model, g);

    // Every requested template must have matched at least once.
    for (const auto* t : active) {
        bool found = false;
        std::function<void(const TailorModule&)> walk = [&](const TailorModule& m) {
            if (m.kind == ModuleKind::Block && m.template_name == t->name) found = true;
            for (const auto& c : m.children) walk(*c);
        };
        walk(*model);
        if (!found)
            throw ValidationError("template '" + t->name + "' matched no subgraph in the model");
    }

    auto sp = space::bind_space(model, cfg);
    auto report = make_report(g, model, sp);
    return {model, sp, report};
}

// ---------------------------------------------------------------------------
// Artifact directory
// ---------------------------------------------------------------------------

namespace {

using nlohmann::json;

json attrvalue_to_json(const AttrValue& v) {
    if (auto* i = std::get_if<std::int64_t>(&v)) return *i;
    if (auto* d = std::get_if<double>(&v)) return *d;
    if (auto* s = std::get_if<std::string>(&v)) return *s;
    return std::get<std::vector<std::int64_t>>(v);
}

AttrValue attrvalue_from_json(const json& j) {
    if (j.is_number_integer()) return j.get<std::int64_t>();
    if (j.is_number_float()) return j.get<double>();
    if (j.is_string()) return j.get<std::string>();
    std::vector<std::int64_t> lst;
    for (const auto& e : j) lst.push_back(e.get<std::int64_t>());
    return lst;
}

json config_to_json(const space::SpaceConfig& cfg) {
    json j;
    j["title"] = cfg.title;
    j["blocks"] = cfg.block_templates;
    auto vars_to_json = [](const std::vector<std::pair<std::string, std::vector<AttrValue>>>& vars) {
        json out = json::array();
        for (const auto& [name, cands] : vars) {
            json vals = json::array();
            for (const auto& v : cands) vals.push_back(attrvalue_to_json(v));
            out.push_back({{"name", name}, {"candidates", vals}});
        }
        return out;
    };
    j["global_vars"] = vars_to_json(cfg.global_vars);
    j["stage_vars"] = vars_to_json(cfg.stage_vars);
    json bv = json::array();
    for (const auto& b : cfg.block_vars) {
        json vals = json::array();
        for (const auto& v : b.candidates) vals.push_back(attrvalue_to_json(v));
        bv.push_back({{"template", b.template_name}, {"attr", b.attr}, {"candidates", vals}});
    }
    j["block_vars"] = bv;
    return j;
}

space::SpaceConfig config_from_json(const json& j) {
    space::SpaceConfig cfg;
    cfg.title = j.value("title", "");
    for (const auto& b : j.value("blocks", json::array())) cfg.block_templates.push_back(b.get<std::string>());
    auto vars_from_json = [](const json& arr) {
        std::vector<std::pair<std::string, std::vector<AttrValue>>> out;
        for (const auto& e : arr) {
            std::vector<AttrValue> cands;
            for (const auto& v : e.at("candidates")) cands.push_back(attrvalue_from_json(v));
            out.emplace_back(e.at("name").get<std::string>(), cands);
        }
        return out;
    };
    cfg.global_vars = vars_from_json(j.value("global_vars", json::array()));
    cfg.stage_vars = vars_from_json(j.value("stage_vars", json::array()));
    for (const auto& e : j.value("block_vars", json::array())) {
        space::SpaceConfig::BlockVar b;
        b.template_name = e.at("template").get<std::string>();
        b.attr = e.at("attr").get<std::string>();
        for (const auto& v : e.at("candidates")) b.candidates.push_back(attrvalue_from_json(v));
        cfg.block_vars.push_back(b);
    }
    return cfg;
}

} // namespace

void save_compiled(const ComputationGraph& g, const space::SpaceConfig& cfg,
                   const CompileResult& result, const std::string& dir) {
    std::filesystem::create_directories(dir);
    json doc;
    doc["format"] = "tailor-model/1";
    doc["graph"] = json::parse(export_graph(g));
    doc["config"] = config_to_json(cfg);
    {
        std::ofstream out(dir + "/model.json", std::ios::binary);
        if (!out) throw ParseError("cannot write '" + dir + "/model.json'");
        out << doc.dump(1) << "\n";
    }
    {
        std::ofstream out(dir + "/space.json", std::ios::binary);
        out << space::space_to_json(result.space);
    }
    {
        std::ofstream out(dir + "/report.txt", std::ios::binary);
        out << result.report;
    }
}

CompileResult load_compiled(const std::string& dir) {
    std::ifstream in(dir + "/model.json");
    if (!in) throw ParseError("cannot open '" + dir + "/model.json'");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed model.json: ") + e.what());
    }
    if (doc.value("format", "") != "tailor-model/1")
        throw ValidationError("model.json has unsupported format version (expected tailor-model/1)");
    ComputationGraph g = load_graph(doc.at("graph").dump());
    space::SpaceConfig cfg = config_from_json(doc.at("config"));
    auto result = compile(g, cfg);

    // space.json is authoritative documentation; verify it matches the rebuild.
    std::ifstream sp_in(dir + "/space.json");
    if (sp_in) {
        std::stringstream ss;
        ss << sp_in.rdbuf();
        auto loaded = space::space_from_json(ss.str());
        if (space::space_to_json(loaded) != space::space_to_json(result.space))
            throw ValidationError("space.json disagrees with the compiled model in '" + dir + "'");
    }
    return result;
}

} // namespace tailor::compiler
