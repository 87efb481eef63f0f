#include "tailor/graph.hpp"
#include "tailor/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <queue>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

namespace tailor {

using nlohmann::json;

namespace {

const char* kKnownOps[] = {
    "conv2d", "depthwise_conv2d", "matmul", "add", "mul", "relu", "gelu",
    "softmax", "batchnorm", "layernorm", "pool_avg", "pool_max", "global_pool",
    "reshape", "concat", "split", "transpose", "identity",
};

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

} // namespace

const char* dtype_name(Dtype d) {
    switch (d) {
        case Dtype::Float32: return "float32";
        case Dtype::Float16: return "float16";
        case Dtype::Int64: return "int64";
        case Dtype::Bool: return "bool";
    }
    return "float32";
}

Dtype dtype_from_name(const std::string& s) {
    if (s == "float32") return Dtype::Float32;
    if (s == "float16") return Dtype::Float16;
    if (s == "int64") return Dtype::Int64;
    if (s == "bool") return Dtype::Bool;
    throw ParseError("unknown dtype '" + s + "'");
}

std::size_t dtype_size_bytes(Dtype d) {
    switch (d) {
        case Dtype::Float32: return 4;
        case Dtype::Float16: return 2;
        case Dtype::Int64: return 8;
        case Dtype::Bool: return 1;
    }
    return 4;
}

std::int64_t TensorShape::element_count() const {
    std::int64_t n = 1;
    for (auto d : dims) n *= d;
    return n;
}

std::string TensorShape::to_string() const {
    std::string s;
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) s += 'x';
        s += std::to_string(dims[i]);
    }
    s += ':';
    s += dtype_name(dtype);
    return s;
}

std::string attr_value_to_string(const AttrValue& v) {
    if (auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
    if (auto* d = std::get_if<double>(&v)) return format_double(*d);
    if (auto* s = std::get_if<std::string>(&v)) return *s;
    const auto& lst = std::get<std::vector<std::int64_t>>(v);
    std::string out = "[";
    for (std::size_t i = 0; i < lst.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(lst[i]);
    }
    out += ']';
    return out;
}

bool is_known_op(const std::string& op_type) {
    for (const char* k : kKnownOps)
        if (op_type == k) return true;
    return false;
}

bool is_custom_op(const std::string& op_type) {
    return op_type.rfind("custom:", 0) == 0 && op_type.size() > 7;
}

const GraphNode* ComputationGraph::producer_of(const std::string& edge_id) const {
    for (const auto& n : nodes)
        for (const auto& e : n.outputs)
            if (e == edge_id) return &n;
    return nullptr;
}

std::vector<const GraphNode*> ComputationGraph::consumers_of(const std::string& edge_id) const {
    std::vector<const GraphNode*> out;
    for (const auto& n : nodes)
        for (const auto& e : n.inputs)
            if (e == edge_id) { out.push_back(&n); break; }
    return out;
}

const GraphNode* ComputationGraph::node_by_id(const std::string& id) const {
    for (const auto& n : nodes)
        if (n.id == id) return &n;
    return nullptr;
}

// ---------------------------------------------------------------------------
// Per-op attribute schemas
// ---------------------------------------------------------------------------

namespace {

enum class AttrKind { Int, IntPair, IntList, Float };

struct AttrSpec {
    const char* name;
    AttrKind kind;
    bool required;
};

struct OpSchema {
    std::vector<AttrSpec> attrs;
    int min_inputs = 1;
    int max_inputs = 1;
    int min_outputs = 1;
    int max_outputs = 1;
};

const std::map<std::string, OpSchema>& op_schemas() {
    static const std::map<std::string, OpSchema> schemas = {
        {"conv2d", {{{"kernel", AttrKind::IntPair, true},
                     {"out_channels", AttrKind::Int, true},
                     {"stride", AttrKind::IntPair, false},
                     {"padding", AttrKind::IntPair, false}}, 1, 1, 1, 1}},
        {"depthwise_conv2d", {{{"kernel", AttrKind::IntPair, true},
                               {"stride", AttrKind::IntPair, false},
                               {"padding", AttrKind::IntPair, false}}, 1, 1, 1, 1}},
        {"matmul", {{{"out_features", AttrKind::Int, false}}, 1, 2, 1, 1}},
        {"add", {{}, 1, 2, 1, 1}},
        {"mul", {{}, 1, 2, 1, 1}},
        {"relu", {{}, 1, 1, 1, 1}},
        {"gelu", {{}, 1, 1, 1, 1}},
        {"softmax", {{{"axis", AttrKind::Int, false}}, 1, 1, 1, 1}},
        {"batchnorm", {{}, 1, 1, 1, 1}},
        {"layernorm", {{}, 1, 1, 1, 1}},
        {"pool_avg", {{{"kernel", AttrKind::IntPair, true},
                       {"stride", AttrKind::IntPair, false},
                       {"padding", AttrKind::IntPair, false}}, 1, 1, 1, 1}},
        {"pool_max", {{{"kernel", AttrKind::IntPair, true},
                       {"stride", AttrKind::IntPair, false},
                       {"padding", AttrKind::IntPair, false}}, 1, 1, 1, 1}},
        {"global_pool", {{}, 1, 1, 1, 1}},
        {"reshape", {{{"target_dims", AttrKind::IntList, true}}, 1, 1, 1, 1}},
        {"concat", {{{"axis", AttrKind::Int, true}}, 2, 64, 1, 1}},
        {"split", {{{"axis", AttrKind::Int, true},
                    {"parts", AttrKind::Int, true}}, 1, 1, 2, 64}},
        {"transpose", {{{"perm", AttrKind::IntList, true}}, 1, 1, 1, 1}},
        {"identity", {{}, 1, 1, 1, 1}},
    };
    return schemas;
}

void check_attr_kind(const GraphNode& n, const AttrSpec& spec, const AttrValue& v) {
    auto fail = [&](const char* want) {
        throw ValidationError("node '" + n.id + "' (" + n.op_type + "): attribute '" +
                              spec.name + "' must be " + want);
    };
    switch (spec.kind) {
        case AttrKind::Int:
            if (!std::holds_alternative<std::int64_t>(v)) fail("an integer");
            break;
        case AttrKind::IntPair: {
            auto* lst = std::get_if<std::vector<std::int64_t>>(&v);
            if (!lst || lst->size() != 2) fail("an integer pair [h, w]");
            break;
        }
        case AttrKind::IntList:
            if (!std::holds_alternative<std::vector<std::int64_t>>(v)) fail("an integer list");
            break;
        case AttrKind::Float:
            if (!std::holds_alternative<double>(v)) fail("a number");
            break;
    }
}

void validate_node_schema(const GraphNode& n) {
    if (is_custom_op(n.op_type)) {
        if (n.inputs.empty() || n.outputs.empty())
            throw ValidationError("node '" + n.id + "': custom ops need at least one input and output");
        return;
    }
    auto it = op_schemas().find(n.op_type);
    if (it == op_schemas().end())
        throw ValidationError("node '" + n.id + "': unknown op_type '" + n.op_type + "'");
    const OpSchema& schema = it->second;

    int nin = static_cast<int>(n.inputs.size());
    int nout = static_cast<int>(n.outputs.size());
    if (nin < schema.min_inputs || nin > schema.max_inputs)
        throw ValidationError("node '" + n.id + "' (" + n.op_type + "): expects between " +
                              std::to_string(schema.min_inputs) + " and " +
                              std::to_string(schema.max_inputs) + " inputs, got " + std::to_string(nin));
    if (nout < schema.min_outputs || nout > schema.max_outputs)
        throw ValidationError("node '" + n.id + "' (" + n.op_type + "): expects between " +
                              std::to_string(schema.min_outputs) + " and " +
                              std::to_string(schema.max_outputs) + " outputs, got " + std::to_string(nout));

    for (const auto& spec : schema.attrs) {
        auto a = n.attrs.find(spec.name);
        if (a == n.attrs.end()) {
            if (spec.required)
                throw ValidationError("node '" + n.id + "' (" + n.op_type +
                                      "): missing required attribute '" + spec.name + "'");
            continue;
        }
        check_attr_kind(n, spec, a->second);
    }
    for (const auto& [name, value] : n.attrs) {
        (void)value;
        bool known = false;
        for (const auto& spec : schema.attrs)
            if (name == spec.name) { known = true; break; }
        if (!known)
            throw ValidationError("node '" + n.id + "' (" + n.op_type +
                                  "): unknown attribute '" + name + "'");
    }
    if (n.op_type == "matmul") {
        bool has_of = n.attrs.count("out_features") > 0;
        if (n.inputs.size() == 1 && !has_of)
            throw ValidationError("node '" + n.id + "' (matmul): single-input form requires 'out_features'");
        if (n.inputs.size() == 2 && has_of)
            throw ValidationError("node '" + n.id + "' (matmul): two-input form forbids 'out_features'");
    }
    if (n.op_type == "split") {
        auto parts = std::get<std::int64_t>(n.attrs.at("parts"));
        if (parts != nout)
            throw ValidationError("node '" + n.id + "' (split): 'parts' (" + std::to_string(parts) +
                                  ") must equal output count (" + std::to_string(nout) + ")");
    }
}

} // namespace

// ---------------------------------------------------------------------------
// Structural validation
// ---------------------------------------------------------------------------

void validate_graph(const ComputationGraph& g) {
    std::unordered_set<std::string> node_ids;
    for (const auto& n : g.nodes) {
        if (!node_ids.insert(n.id).second)
            throw ValidationError("duplicate node id '" + n.id + "'");
        validate_node_schema(n);
    }

    for (const auto& [eid, shape] : g.edges) {
        if (!shape) continue;
        if (shape->dims.empty())
            throw ValidationError("edge '" + eid + "': shape dims must be non-empty");
        for (auto d : shape->dims)
            if (d < 1)
                throw ValidationError("edge '" + eid + "': shape extents must be >= 1");
    }

    auto require_edge = [&](const std::string& eid, const std::string& where) {
        if (!g.edges.count(eid))
            throw ValidationError(where + ": edge '" + eid + "' not declared in edges");
    };
    for (const auto& eid : g.graph_inputs) require_edge(eid, "graph inputs");
    for (const auto& eid : g.graph_outputs) require_edge(eid, "graph outputs");

    std::unordered_map<std::string, const GraphNode*> producer;
    for (const auto& n : g.nodes) {
        for (const auto& eid : n.outputs) {
            require_edge(eid, "node '" + n.id + "'");
            auto [it, fresh] = producer.emplace(eid, &n);
            if (!fresh)
                throw ValidationError("edge '" + eid + "' has multiple producers ('" +
                                      it->second->id + "' and '" + n.id + "')");
        }
    }
    std::unordered_set<std::string> input_set(g.graph_inputs.begin(), g.graph_inputs.end());
    for (const auto& eid : g.graph_inputs)
        if (producer.count(eid))
            throw ValidationError("graph input '" + eid + "' also has a producer ('" +
                                  producer.at(eid)->id + "')");
    for (const auto& n : g.nodes) {
        for (const auto& eid : n.inputs) {
            require_edge(eid, "node '" + n.id + "'");
            if (!producer.count(eid) && !input_set.count(eid))
                throw ValidationError("edge '" + eid + "' consumed by node '" + n.id +
                                      "' has no producer and is not a graph input");
        }
    }
    for (const auto& eid : g.graph_outputs)
        if (!producer.count(eid) && !input_set.count(eid))
            throw ValidationError("graph output '" + eid + "' has no producer");

    topological_order(g); // throws on cycles

    // Output reachability from graph inputs.
    std::unordered_set<std::string> reached(g.graph_inputs.begin(), g.graph_inputs.end());
    bool changed = true;
    while (changed) {
        changed = false;
        for (const auto& n : g.nodes) {
            bool ready = !n.inputs.empty();
            for (const auto& eid : n.inputs)
                if (!reached.count(eid)) { ready = false; break; }
            if (!ready) continue;
            for (const auto& eid : n.outputs)
                if (reached.insert(eid).second) changed = true;
        }
    }
    for (const auto& eid : g.graph_outputs)
        if (!reached.count(eid))
            throw ValidationError("graph output '" + eid + "' not reachable from graph inputs");
}

std::vector<std::size_t> topological_order(const ComputationGraph& g) {
    std::unordered_map<std::string, std::size_t> producer_idx;
    for (std::size_t i = 0; i < g.nodes.size(); ++i)
        for (const auto& eid : g.nodes[i].outputs)
            producer_idx.emplace(eid, i);

    std::unordered_set<std::string> input_set(g.graph_inputs.begin(), g.graph_inputs.end());
    std::vector<int> pending(g.nodes.size(), 0);
    std::vector<std::vector<std::size_t>> dependents(g.nodes.size());
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        for (const auto& eid : g.nodes[i].inputs) {
            auto it = producer_idx.find(eid);
            if (it != producer_idx.end() && it->second != i) {
                ++pending[i];
                dependents[it->second].push_back(i);
            }
        }
    }

    auto cmp = [&](std::size_t a, std::size_t b) { return g.nodes[a].id > g.nodes[b].id; };
    std::priority_queue<std::size_t, std::vector<std::size_t>, decltype(cmp)> ready(cmp);
    for (std::size_t i = 0; i < g.nodes.size(); ++i)
        if (pending[i] == 0) ready.push(i);

    std::vector<std::size_t> order;
    order.reserve(g.nodes.size());
    while (!ready.empty()) {
        std::size_t i = ready.top();
        ready.pop();
        order.push_back(i);
        for (auto j : dependents[i])
            if (--pending[j] == 0) ready.push(j);
    }
    if (order.size() != g.nodes.size()) {
        for (std::size_t i = 0; i < g.nodes.size(); ++i)
            if (pending[i] > 0)
                throw ValidationError("graph contains a cycle (detected at node '" + g.nodes[i].id + "')");
    }
    return order;
}

// ---------------------------------------------------------------------------
// .tfg I/O
// ---------------------------------------------------------------------------

namespace {

constexpr const char* kTfgFormat = "tfg/1";

AttrValue attr_from_json(const json& j, const std::string& node_id, const std::string& name) {
    if (j.is_number_integer()) return j.get<std::int64_t>();
    if (j.is_number_float()) return j.get<double>();
    if (j.is_string()) return j.get<std::string>();
    if (j.is_array()) {
        std::vector<std::int64_t> lst;
        for (const auto& e : j) {
            if (!e.is_number_integer())
                throw ParseError("node '" + node_id + "': attribute '" + name +
                                 "' list entries must be integers");
            lst.push_back(e.get<std::int64_t>());
        }
        return lst;
    }
    throw ParseError("node '" + node_id + "': attribute '" + name + "' has unsupported type");
}

json attr_to_json(const AttrValue& v) {
    if (auto* i = std::get_if<std::int64_t>(&v)) return *i;
    if (auto* d = std::get_if<double>(&v)) return *d;
    if (auto* s = std::get_if<std::string>(&v)) return *s;
    return std::get<std::vector<std::int64_t>>(v);
}

// Scalar kernel/stride/padding are accepted and normalized to [v, v].
void normalize_conv_attrs(GraphNode& n) {
    static const std::set<std::string> pair_attrs = {"kernel", "stride", "padding"};
    if (n.op_type != "conv2d" && n.op_type != "depthwise_conv2d" &&
        n.op_type != "pool_avg" && n.op_type != "pool_max")
        return;
    for (auto& [name, value] : n.attrs) {
        if (!pair_attrs.count(name)) continue;
        if (auto* i = std::get_if<std::int64_t>(&value))
            value = std::vector<std::int64_t>{*i, *i};
    }
}

} // namespace

ComputationGraph load_graph(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed graph document: ") + e.what());
    }
    if (!doc.is_object()) throw ParseError("graph document must be a JSON object");
    if (!doc.contains("format") || !doc["format"].is_string() || doc["format"] != kTfgFormat)
        throw ParseError("graph document missing or unsupported format header (expected \"tfg/1\")");

    ComputationGraph g;
    try {
        const json jnodes = doc.value("nodes", json::array());
        const json jedges = doc.value("edges", json::object());
        const json jmeta = doc.value("metadata", json::object());
        for (const auto& jn : jnodes) {
            GraphNode n;
            n.id = jn.at("id").get<std::string>();
            n.op_type = jn.at("op").get<std::string>();
            if (jn.contains("attrs"))
                for (const auto& [name, jv] : jn["attrs"].items())
                    n.attrs[name] = attr_from_json(jv, n.id, name);
            for (const auto& e : jn.value("inputs", json::array())) n.inputs.push_back(e.get<std::string>());
            for (const auto& e : jn.value("outputs", json::array())) n.outputs.push_back(e.get<std::string>());
            normalize_conv_attrs(n);
            g.nodes.push_back(std::move(n));
        }
        for (const auto& [eid, jshape] : jedges.items()) {
            if (jshape.is_null()) {
                g.edges[eid] = std::nullopt;
            } else {
                TensorShape s;
                for (const auto& d : jshape.at("dims")) s.dims.push_back(d.get<std::int64_t>());
                s.dtype = dtype_from_name(jshape.value("dtype", "float32"));
                g.edges[eid] = s;
            }
        }
        for (const auto& e : doc.value("inputs", json::array())) g.graph_inputs.push_back(e.get<std::string>());
        for (const auto& e : doc.value("outputs", json::array())) g.graph_outputs.push_back(e.get<std::string>());
        for (const auto& [k, v] : jmeta.items()) g.metadata[k] = v.get<std::string>();
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed graph document: ") + e.what());
    }

    validate_graph(g);
    return g;
}

ComputationGraph load_graph_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open graph file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return load_graph(ss.str());
}

std::string export_graph(const ComputationGraph& g) {
    json doc;
    doc["format"] = kTfgFormat;
    json jnodes = json::array();
    for (auto idx : topological_order(g)) {
        const GraphNode& n = g.nodes[idx];
        json jn;
        jn["id"] = n.id;
        jn["op"] = n.op_type;
        json jattrs = json::object();
        for (const auto& [name, value] : n.attrs) jattrs[name] = attr_to_json(value);
        jn["attrs"] = jattrs;
        jn["inputs"] = n.inputs;
        jn["outputs"] = n.outputs;
        jnodes.push_back(jn);
    }
    doc["nodes"] = jnodes;
    json jedges = json::object();
    for (const auto& [eid, shape] : g.edges) {
        if (!shape) {
            jedges[eid] = nullptr;
        } else {
            json js;
            js["dims"] = shape->dims;
            js["dtype"] = dtype_name(shape->dtype);
            jedges[eid] = js;
        }
    }
    doc["edges"] = jedges;
    doc["inputs"] = g.graph_inputs;
    doc["outputs"] = g.graph_outputs;
    doc["metadata"] = g.metadata;
    return doc.dump(1) + "\n";
}

void export_graph_file(const ComputationGraph& g, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write graph file '" + path + "'");
    out << export_graph(g);
}

// ---------------------------------------------------------------------------
// Canonical form / isomorphism
// ---------------------------------------------------------------------------

namespace {

std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
    h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    return h;
}

std::uint64_t hash_string(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

} // namespace

std::string canonical_form(const ComputationGraph& g) {
    const std::size_t n = g.nodes.size();
    std::unordered_map<std::string, std::size_t> producer_idx;
    std::unordered_map<std::string, std::size_t> producer_slot;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t s = 0; s < g.nodes[i].outputs.size(); ++s) {
            producer_idx[g.nodes[i].outputs[s]] = i;
            producer_slot[g.nodes[i].outputs[s]] = s;
        }
    std::unordered_map<std::string, std::size_t> input_pos;
    for (std::size_t i = 0; i < g.graph_inputs.size(); ++i) input_pos[g.graph_inputs[i]] = i;
    // edge -> (consumer node, input position) pairs
    std::unordered_map<std::string, std::vector<std::pair<std::size_t, std::size_t>>> consumer_idx;
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = 0; k < g.nodes[j].inputs.size(); ++k)
            consumer_idx[g.nodes[j].inputs[k]].emplace_back(j, k);

    auto topo = topological_order(g);
    std::vector<std::size_t> layer(n, 0);
    for (auto i : topo) {
        std::size_t l = 0;
        for (const auto& eid : g.nodes[i].inputs) {
            auto it = producer_idx.find(eid);
            if (it != producer_idx.end()) l = std::max(l, layer[it->second] + 1);
        }
        layer[i] = l;
    }

    // Local signature: op type, sorted attrs, plus graph-input shape markers.
    std::vector<std::uint64_t> sig(n);
    for (std::size_t i = 0; i < n; ++i) {
        const GraphNode& nd = g.nodes[i];
        std::uint64_t h = hash_string(nd.op_type);
        for (const auto& [name, value] : nd.attrs) {
            h = mix(h, hash_string(name));
            h = mix(h, hash_string(attr_value_to_string(value)));
        }
        h = mix(h, nd.inputs.size());
        h = mix(h, nd.outputs.size());
        for (std::size_t k = 0; k < nd.inputs.size(); ++k) {
            auto it = input_pos.find(nd.inputs[k]);
            if (it != input_pos.end()) {
                h = mix(h, 0x6069);
                h = mix(h, it->second);
                const auto& shape = g.edges.at(nd.inputs[k]);
                if (shape) h = mix(h, hash_string(shape->to_string()));
            }
        }
        sig[i] = h;
    }

    // Forward + backward refinement over the DAG, twice.
    for (int round = 0; round < 2; ++round) {
        std::vector<std::uint64_t> next = sig;
        for (auto i : topo) {
            std::uint64_t h = mix(sig[i], 0xF00D);
            for (const auto& eid : g.nodes[i].inputs) {
                auto it = producer_idx.find(eid);
                if (it != producer_idx.end()) {
                    h = mix(h, sig[it->second]);
                    h = mix(h, producer_slot.at(eid));
                } else {
                    h = mix(h, 0x1234);
                }
            }
            next[i] = h;
        }
        sig = next;
        next = sig;
        for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
            std::size_t i = *it;
            std::vector<std::uint64_t> down;
            for (const auto& eid : g.nodes[i].outputs) {
                auto cit = consumer_idx.find(eid);
                if (cit != consumer_idx.end())
                    for (const auto& [j, k] : cit->second) down.push_back(mix(sig[j], k));
                for (std::size_t o = 0; o < g.graph_outputs.size(); ++o)
                    if (g.graph_outputs[o] == eid) down.push_back(mix(0xBEEF, o));
            }
            std::sort(down.begin(), down.end());
            std::uint64_t h = mix(sig[i], 0xCAFE);
            for (auto d : down) h = mix(h, d);
            next[i] = h;
        }
        sig = next;
    }

    // Canonical order: layer, then refined signature, then topo rank.
    std::vector<std::size_t> rank_in_topo(n);
    for (std::size_t r = 0; r < topo.size(); ++r) rank_in_topo[topo[r]] = r;
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (layer[a] != layer[b]) return layer[a] < layer[b];
        if (sig[a] != sig[b]) return sig[a] < sig[b];
        return rank_in_topo[a] < rank_in_topo[b];
    });
    std::vector<std::size_t> canon_idx(n);
    for (std::size_t r = 0; r < n; ++r) canon_idx[order[r]] = r;

    std::ostringstream out;
    out << "inputs:";
    for (std::size_t i = 0; i < g.graph_inputs.size(); ++i) {
        const auto& shape = g.edges.at(g.graph_inputs[i]);
        out << ' ' << (shape ? shape->to_string() : std::string("?"));
    }
    out << '\n';
    for (std::size_t r = 0; r < n; ++r) {
        const GraphNode& nd = g.nodes[order[r]];
        out << r << ": " << nd.op_type << " {";
        bool first = true;
        for (const auto& [name, value] : nd.attrs) {
            if (!first) out << ',';
            first = false;
            out << name << '=' << attr_value_to_string(value);
        }
        out << "} <-";
        for (const auto& eid : nd.inputs) {
            auto it = producer_idx.find(eid);
            if (it != producer_idx.end())
                out << " n" << canon_idx[it->second] << '.' << producer_slot.at(eid);
            else
                out << " in" << input_pos.at(eid);
        }
        out << '\n';
    }
    out << "outputs:";
    for (const auto& eid : g.graph_outputs) {
        auto it = producer_idx.find(eid);
        if (it != producer_idx.end())
            out << " n" << canon_idx[it->second] << '.' << producer_slot.at(eid);
        else
            out << " in" << input_pos.at(eid);
    }
    out << '\n';
    return out.str();
}

std::pair<std::uint64_t, std::uint64_t> canonical_hash(const ComputationGraph& g) {
    std::string form = canonical_form(g);
    std::uint64_t a = 1469598103934665603ULL;
    std::uint64_t b = 0x2b992ddfa23249d6ULL;
    for (unsigned char c : form) {
        a = (a ^ c) * 1099511628211ULL;
        b = (b ^ c) * 0x100000001b3ULL + 0x9e3779b9ULL;
    }
    return {a, b};
}

bool graph_isomorphic(const ComputationGraph& a, const ComputationGraph& b) {
    if (a.nodes.size() != b.nodes.size()) return false;
    if (a.graph_inputs.size() != b.graph_inputs.size()) return false;
    if (a.graph_outputs.size() != b.graph_outputs.size()) return false;
    return canonical_form(a) == canonical_form(b);
}

} // namespace tailor
