#include "tailor/enumerator.hpp"
#include "tailor/errors.hpp"
#include "tailor/parallel.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace tailor::enumerate {

using ir::ModuleKind;
using ir::ModulePtr;
using ir::TailorModule;

// ---------------------------------------------------------------------------
// Key serialization
// ---------------------------------------------------------------------------

std::string serialize_key(const std::vector<OpFeature>& op_seq) {
    std::string out;
    for (std::size_t i = 0; i < op_seq.size(); ++i) {
        const OpFeature& f = op_seq[i];
        if (i) out += '+';
        out += f.op_type;
        out += '{';
        bool first = true;
        for (const auto& [name, value] : f.attrs) {
            if (!first) out += ';';
            first = false;
            out += name;
            out += '=';
            out += attr_value_to_string(value);
        }
        out += "}(";
        for (std::size_t k = 0; k < f.in_shapes.size(); ++k) {
            if (k) out += ',';
            out += f.in_shapes[k].to_string();
        }
        out += ")->(";
        for (std::size_t k = 0; k < f.out_shapes.size(); ++k) {
            if (k) out += ',';
            out += f.out_shapes[k].to_string();
        }
        out += ')';
    }
    return out;
}

namespace {

AttrValue parse_attr_value(const std::string& s) {
    if (!s.empty() && s.front() == '[') {
        std::vector<std::int64_t> lst;
        std::size_t pos = 1;
        while (pos < s.size() && s[pos] != ']') {
            std::size_t end = s.find_first_of(",]", pos);
            lst.push_back(std::strtoll(s.substr(pos, end - pos).c_str(), nullptr, 10));
            pos = s[end] == ',' ? end + 1 : end;
        }
        return lst;
    }
    std::int64_t i = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), i);
    if (ec == std::errc() && p == s.data() + s.size()) return i;
    char* end = nullptr;
    double d = std::strtod(s.c_str(), &end);
    if (end == s.c_str() + s.size() && !s.empty()) return d;
    return s;
}

TensorShape parse_shape(const std::string& s) {
    auto colon = s.rfind(':');
    if (colon == std::string::npos) throw ParseError("malformed shape '" + s + "' in key");
    TensorShape shape;
    shape.dtype = dtype_from_name(s.substr(colon + 1));
    std::size_t pos = 0;
    while (pos < colon) {
        std::size_t x = s.find('x', pos);
        if (x == std::string::npos || x > colon) x = colon;
        shape.dims.push_back(std::strtoll(s.substr(pos, x - pos).c_str(), nullptr, 10));
        pos = x + 1;
    }
    return shape;
}

std::vector<TensorShape> parse_shape_list(const std::string& s) {
    std::vector<TensorShape> out;
    std::size_t pos = 0;
    while (pos < s.size()) {
        std::size_t comma = s.find(',', pos);
        if (comma == std::string::npos) comma = s.size();
        out.push_back(parse_shape(s.substr(pos, comma - pos)));
        pos = comma + 1;
    }
    return out;
}

OpFeature parse_part(const std::string& s) {
    OpFeature f;
    auto brace = s.find('{');
    auto brace_end = s.find('}', brace);
    auto in_open = s.find('(', brace_end);
    auto in_close = s.find(")->(", in_open);
    if (brace == std::string::npos || brace_end == std::string::npos ||
        in_open == std::string::npos || in_close == std::string::npos || s.back() != ')')
        throw ParseError("malformed key part '" + s + "'");
    f.op_type = s.substr(0, brace);
    std::string attrs = s.substr(brace + 1, brace_end - brace - 1);
    std::size_t pos = 0;
    while (pos < attrs.size()) {
        std::size_t semi = attrs.find(';', pos);
        if (semi == std::string::npos) semi = attrs.size();
        std::string kv = attrs.substr(pos, semi - pos);
        auto eq = kv.find('=');
        if (eq == std::string::npos) throw ParseError("malformed key attr '" + kv + "'");
        f.attrs[kv.substr(0, eq)] = parse_attr_value(kv.substr(eq + 1));
        pos = semi + 1;
    }
    f.in_shapes = parse_shape_list(s.substr(in_open + 1, in_close - in_open - 1));
    f.out_shapes = parse_shape_list(s.substr(in_close + 4, s.size() - 1 - (in_close + 4)));
    return f;
}

} // namespace

OperatorFeatureKey parse_key(const std::string& text) {
    OperatorFeatureKey key;
    std::size_t pos = 0;
    while (pos < text.size()) {
        // Member boundary: '+' immediately after a ')'.
        std::size_t next = pos;
        int depth = 0;
        for (; next < text.size(); ++next) {
            if (text[next] == '(') ++depth;
            else if (text[next] == ')') --depth;
            else if (text[next] == '+' && depth == 0 && next > pos && text[next - 1] == ')') break;
        }
        key.op_seq.push_back(parse_part(text.substr(pos, next - pos)));
        pos = next + (next < text.size() ? 1 : 0);
    }
    key.text = serialize_key(key.op_seq);
    if (key.text != text)
        throw ParseError("key does not round-trip through its canonical form: '" + text + "'");
    return key;
}

// ---------------------------------------------------------------------------
// Fusion rules
// ---------------------------------------------------------------------------

const std::vector<FusionRule>& default_fusion_rules() {
    static const std::vector<FusionRule> rules = {
        {{"conv2d", "batchnorm", "relu"}, "conv_bn_relu"},
        {{"conv2d", "batchnorm"}, "conv_bn"},
        {{"matmul", "add"}, "matmul_bias"},
        {{"conv2d", "relu"}, "conv_relu"},
    };
    return rules;
}

std::uint64_t fusion_ruleset_hash(const std::vector<FusionRule>& rules) {
    std::uint64_t h = 1469598103934665603ULL;
    auto eat = [&](const std::string& s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ULL;
        }
        h ^= 0xFF;
        h *= 1099511628211ULL;
    };
    for (const auto& r : rules) {
        eat(r.name);
        for (const auto& p : r.pattern) eat(p);
    }
    return h;
}

// ---------------------------------------------------------------------------
// Dependency analysis (taint propagation over the source graph)
// ---------------------------------------------------------------------------

namespace {

constexpr int kChannel = 1;
constexpr int kSpatial = 2;

struct ModelIndex {
    const ComputationGraph* g;
    std::vector<std::size_t> topo;
    std::unordered_map<std::string, const GraphNode*> node_by_id;
    std::unordered_map<std::string, std::string> leaf_path_by_node;
    std::unordered_map<std::string, std::string> node_by_leaf_path;

    explicit ModelIndex(const ModulePtr& model) : g(model->source_graph.get()) {
        topo = topological_order(*g);
        for (const auto& n : g->nodes) node_by_id[n.id] = &n;
        ir::for_each_leaf(model, [&](const TailorModule& leaf) {
            leaf_path_by_node[leaf.source_nodes[0]] = leaf.path;
            node_by_leaf_path[leaf.path] = leaf.source_nodes[0];
        });
    }
};

// Returns node ids whose key can change when `dim` moves, per the shipped
// width/resolution propagation rules.
std::unordered_set<std::string> tainted_nodes(const ModelIndex& mi, const ModulePtr& model,
                                              const space::Dimension& dim) {
    std::unordered_map<std::string, int> edge_taint;
    std::string attr_target_node;

    if (dim.scope == space::Scope::Global) {
        for (const auto& eid : mi.g->graph_inputs) {
            const auto& shape = mi.g->edges.at(eid);
            if (shape && shape->dims.size() == 4) edge_taint[eid] = kSpatial;
        }
    } else if (dim.scope == space::Scope::Block) {
        const TailorModule* block = ir::find_module(model, dim.target_path);
        if (!block) throw ValidationError("dimension targets unknown path '" + dim.target_path + "'");
        for (const auto& hb : block->hooks)
            if (hb.hook == dim.attr)
                attr_target_node = block->children.at(hb.child_index)->source_nodes[0];
    }

    std::unordered_set<std::string> tainted;
    for (auto idx : mi.topo) {
        const GraphNode& n = mi.g->nodes[idx];
        int in_mask = 0;
        for (const auto& e : n.inputs) {
            auto it = edge_taint.find(e);
            if (it != edge_taint.end()) in_mask |= it->second;
        }
        bool attr_tainted = n.id == attr_target_node;

        int out_mask;
        if (n.op_type == "conv2d") {
            out_mask = (in_mask & kSpatial) | (attr_tainted ? kChannel : 0);
        } else if (n.op_type == "matmul" && n.inputs.size() == 1) {
            out_mask = (in_mask & kSpatial) | (attr_tainted ? kChannel : 0);
        } else if (n.op_type == "global_pool") {
            out_mask = in_mask & kChannel;
        } else if (n.op_type == "reshape" || n.op_type == "transpose" || n.op_type == "split" ||
                   is_custom_op(n.op_type)) {
            out_mask = in_mask ? (kChannel | kSpatial) : 0;
        } else {
            // depthwise, pools, element-wise, norms, concat, 2-input matmul:
            // every tainted aspect of the inputs survives.
            out_mask = in_mask;
        }
        for (const auto& e : n.outputs)
            if (out_mask) edge_taint[e] |= out_mask;
        if (attr_tainted || in_mask || out_mask) tainted.insert(n.id);
    }
    return tainted;
}

std::string drop_unit_of(const std::string& leaf_path) {
    auto slash = leaf_path.rfind('/');
    if (slash == std::string::npos) return "";
    return leaf_path.substr(0, slash);
}

// nullptr when the leaf (or an ancestor) is inactive.
const TailorModule* find_leaf_if_active(const ModulePtr& model, const std::string& path) {
    const TailorModule* cur = model.get();
    if (!cur->active) return nullptr;
    std::size_t start = 0;
    while (start < path.size()) {
        std::size_t slash = path.find('/', start);
        std::string comp = path.substr(start, slash == std::string::npos ? std::string::npos
                                                                         : slash - start);
        const TailorModule* next = nullptr;
        for (const auto& c : cur->children) {
            const std::string& p = c->path;
            auto s2 = p.rfind('/');
            if ((s2 == std::string::npos ? p : p.substr(s2 + 1)) == comp) { next = c.get(); break; }
        }
        if (!next || !next->active) return nullptr;
        cur = next;
        if (slash == std::string::npos) break;
        start = slash + 1;
    }
    return cur;
}

OpFeature feature_of_leaf(const ComputationGraph& g, const TailorModule& leaf) {
    const GraphNode* node = g.node_by_id(leaf.source_nodes[0]);
    OpFeature f;
    f.op_type = node->op_type;
    f.attrs = node->attrs;
    for (const auto& [name, st] : leaf.feature.attrs) f.attrs[name] = st.active;
    for (const auto& s : leaf.feature.in_shapes) f.in_shapes.push_back(s.active);
    for (const auto& s : leaf.feature.out_shapes) f.out_shapes.push_back(s.active);
    return f;
}

} // namespace

DependencyMap dependency_groups(const ModulePtr& model, const space::ModificationSpace& sp) {
    ModelIndex mi(model);
    DependencyMap out;
    ir::for_each_leaf(model, [&](const TailorModule& leaf) { out.deps[leaf.path]; });

    for (const auto& dim : sp.dims) {
        if (dim.scope == space::Scope::Stage) continue; // depth never affects keys
        auto nodes = tainted_nodes(mi, model, dim);
        for (const auto& id : nodes) {
            auto it = mi.leaf_path_by_node.find(id);
            if (it != mi.leaf_path_by_node.end()) out.deps[it->second].insert(dim.dim_id);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Fusion grouping
// ---------------------------------------------------------------------------

std::vector<std::vector<std::string>> fusion_groups(const ModulePtr& model,
                                                    const std::vector<FusionRule>& rules) {
    ModelIndex mi(model);
    const ComputationGraph& g = *mi.g;

    std::unordered_map<std::string, std::vector<const GraphNode*>> consumers;
    for (const auto& n : g.nodes)
        for (const auto& e : n.inputs) consumers[e].push_back(&n);
    auto is_graph_output = [&](const std::string& e) {
        return std::find(g.graph_outputs.begin(), g.graph_outputs.end(), e) != g.graph_outputs.end();
    };

    std::vector<FusionRule> ordered = rules;
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const FusionRule& a, const FusionRule& b) {
                         return a.pattern.size() > b.pattern.size();
                     });

    std::unordered_set<std::string> grouped;
    std::vector<std::vector<std::string>> groups;
    for (auto idx : mi.topo) {
        const GraphNode& start = g.nodes[idx];
        if (grouped.count(start.id)) continue;

        std::vector<std::string> chain;
        for (const auto& rule : ordered) {
            if (!rule.pattern.empty() && rule.pattern[0] != start.op_type) continue;
            chain.clear();
            chain.push_back(start.id);
            const GraphNode* cur = &start;
            bool ok = true;
            std::string unit = drop_unit_of(mi.leaf_path_by_node.at(start.id));
            for (std::size_t k = 1; k < rule.pattern.size(); ++k) {
                if (cur->outputs.size() != 1) { ok = false; break; }
                const std::string& e = cur->outputs[0];
                auto ct = consumers.find(e);
                if (ct == consumers.end() || ct->second.size() != 1 || is_graph_output(e)) {
                    ok = false;
                    break;
                }
                const GraphNode* next = ct->second[0];
                if (grouped.count(next->id) || next->op_type != rule.pattern[k] ||
                    next->inputs.size() != 1 ||
                    drop_unit_of(mi.leaf_path_by_node.at(next->id)) != unit) {
                    ok = false;
                    break;
                }
                chain.push_back(next->id);
                cur = next;
            }
            if (ok && chain.size() == rule.pattern.size() && chain.size() >= 2) break;
            chain.clear();
        }

        if (chain.empty()) chain.push_back(start.id);
        std::vector<std::string> paths;
        for (const auto& id : chain) {
            grouped.insert(id);
            paths.push_back(mi.leaf_path_by_node.at(id));
        }
        groups.push_back(std::move(paths));
    }
    return groups;
}

// ---------------------------------------------------------------------------
// Enumeration
// ---------------------------------------------------------------------------

std::vector<OperatorFeatureKey> active_keys(const ModulePtr& spec_tree,
                                            const std::vector<std::vector<std::string>>& groups) {
    const ComputationGraph& g = *spec_tree->source_graph;
    std::vector<OperatorFeatureKey> out;
    for (const auto& group : groups) {
        std::vector<OpFeature> seq;
        bool active = true;
        for (const auto& path : group) {
            const TailorModule* leaf = find_leaf_if_active(spec_tree, path);
            if (!leaf) { active = false; break; }
            seq.push_back(feature_of_leaf(g, *leaf));
        }
        if (!active) continue;
        OperatorFeatureKey key;
        key.op_seq = std::move(seq);
        key.text = serialize_key(key.op_seq);
        out.push_back(std::move(key));
    }
    return out;
}

std::set<OperatorFeatureKey> enumerate_unique_operators(const ModulePtr& model,
                                                        const space::ModificationSpace& sp,
                                                        const std::vector<FusionRule>& rules,
                                                        int jobs, EnumerationStats* stats) {
    auto groups = fusion_groups(model, rules);
    auto depmap = dependency_groups(model, sp);

    struct GroupTask {
        const std::vector<std::string>* paths;
        std::vector<const space::Dimension*> dims;
    };
    std::vector<GroupTask> tasks;
    for (const auto& group : groups) {
        GroupTask t;
        t.paths = &group;
        std::set<std::string> dim_ids;
        for (const auto& path : group) {
            auto it = depmap.deps.find(path);
            if (it != depmap.deps.end()) dim_ids.insert(it->second.begin(), it->second.end());
        }
        for (const auto& d : sp.dims)
            if (dim_ids.count(d.dim_id)) t.dims.push_back(&d);
        tasks.push_back(std::move(t));
    }

    std::vector<std::vector<OperatorFeatureKey>> per_group(tasks.size());
    std::atomic<std::uint64_t> computations{0};

    parallel_for(tasks.size(), jobs, [&](std::size_t ti) {
        const GroupTask& task = tasks[ti];
        std::vector<std::size_t> idx(task.dims.size(), 0);
        const ComputationGraph& g = *model->source_graph;
        while (true) {
            space::SubNetSpec spec;
            for (std::size_t i = 0; i < task.dims.size(); ++i)
                spec.assignment[task.dims[i]->dim_id] = task.dims[i]->candidates[idx[i]];
            auto tree = space::apply_spec(model, spec, sp);

            std::vector<OpFeature> seq;
            for (const auto& path : *task.paths) {
                const TailorModule* leaf = find_leaf_if_active(tree, path);
                seq.push_back(feature_of_leaf(g, *leaf));
            }
            OperatorFeatureKey key;
            key.op_seq = std::move(seq);
            key.text = serialize_key(key.op_seq);
            per_group[ti].push_back(std::move(key));
            computations.fetch_add(1);

            if (task.dims.empty()) break;
            std::size_t d = task.dims.size();
            bool done = false;
            while (d > 0) {
                --d;
                if (++idx[d] < task.dims[d]->candidates.size()) break;
                idx[d] = 0;
                if (d == 0) done = true;
            }
            if (done) break;
        }
    });

    std::set<OperatorFeatureKey> keys;
    for (const auto& grp : per_group)
        for (const auto& k : grp) keys.insert(k);

    if (stats) {
        stats->positions = tasks.size();
        stats->key_computations = computations.load();
        stats->naive_key_computations = BigUint(tasks.size()) * space::count_variants(sp, model);
        stats->unique_keys = keys.size();
    }
    return keys;
}

std::optional<OperatorFeatureKey> key_of(const std::string& op_path, const space::SubNetSpec& spec,
                                         const ModulePtr& model, const space::ModificationSpace& sp,
                                         const std::vector<FusionRule>& rules) {
    auto groups = fusion_groups(model, rules);
    const std::vector<std::string>* group = nullptr;
    for (const auto& grp : groups)
        for (const auto& path : grp)
            if (path == op_path) group = &grp;
    if (!group) throw ValidationError("unknown operator path '" + op_path + "'");

    auto tree = space::apply_spec(model, spec, sp);
    std::vector<OpFeature> seq;
    for (const auto& path : *group) {
        const TailorModule* leaf = find_leaf_if_active(tree, path);
        if (!leaf) return std::nullopt; // depth-dropped
        seq.push_back(feature_of_leaf(*model->source_graph, *leaf));
    }
    OperatorFeatureKey key;
    key.op_seq = std::move(seq);
    key.text = serialize_key(key.op_seq);
    return key;
}

// ---------------------------------------------------------------------------
// Manifest I/O
// ---------------------------------------------------------------------------

void save_manifest(const std::set<OperatorFeatureKey>& keys, const std::vector<FusionRule>& rules,
                   const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write manifest '" + path + "'");
    out << "# tfg-manifest/1\n";
    out << "# fusion_hash=" << fusion_ruleset_hash(rules) << "\n";
    for (const auto& k : keys) out << k.text << "\n";
}

std::vector<OperatorFeatureKey> load_manifest(const std::string& path, std::uint64_t* fusion_hash) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open manifest '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line != "# tfg-manifest/1")
        throw ValidationError("manifest '" + path + "' has unsupported format version");
    std::vector<OperatorFeatureKey> keys;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line.rfind("# fusion_hash=", 0) == 0) {
            if (fusion_hash) *fusion_hash = std::strtoull(line.c_str() + 14, nullptr, 10);
            continue;
        }
        if (line[0] == '#') continue;
        keys.push_back(parse_key(line));
    }
    return keys;
}

} // namespace tailor::enumerate
