#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace tailor {

enum class Dtype { Float32, Float16, Int64, Bool };

const char* dtype_name(Dtype d);
Dtype dtype_from_name(const std::string& s);
std::size_t dtype_size_bytes(Dtype d);

// Tensor extents. Convention for image tensors: [batch, channels, spatial...].
struct TensorShape {
    std::vector<std::int64_t> dims;
    Dtype dtype = Dtype::Float32;

    std::int64_t element_count() const;
    std::int64_t byte_size() const { return element_count() * static_cast<std::int64_t>(dtype_size_bytes(dtype)); }
    std::string to_string() const;

    bool operator==(const TensorShape&) const = default;
};

// Node attribute values: scalar int/float/string or integer list.
using AttrValue = std::variant<std::int64_t, double, std::string, std::vector<std::int64_t>>;
using AttrMap = std::map<std::string, AttrValue>;

std::string attr_value_to_string(const AttrValue& v);

struct GraphNode {
    std::string id;
    std::string op_type;                 // one of the known kinds, or "custom:<name>"
    AttrMap attrs;
    std::vector<std::string> inputs;     // edge ids, ordered
    std::vector<std::string> outputs;    // edge ids, ordered
};

bool is_known_op(const std::string& op_type);
bool is_custom_op(const std::string& op_type);

struct ComputationGraph {
    std::vector<GraphNode> nodes;
    std::map<std::string, std::optional<TensorShape>> edges;
    std::vector<std::string> graph_inputs;
    std::vector<std::string> graph_outputs;
    std::map<std::string, std::string> metadata;

    const GraphNode* producer_of(const std::string& edge_id) const;
    std::vector<const GraphNode*> consumers_of(const std::string& edge_id) const;
    const GraphNode* node_by_id(const std::string& id) const;
};

// Throws ValidationError naming the offending node/edge. Checks per-op attribute
// schemas, unique ids, single producers, acyclicity and output reachability.
void validate_graph(const ComputationGraph& g);

// Deterministic topological order (Kahn, lexicographic tie-break on node id).
// Throws ValidationError on cycles.
std::vector<std::size_t> topological_order(const ComputationGraph& g);

// .tfg document I/O. Format: JSON with top-level keys format/nodes/edges/inputs/
// outputs/metadata; see docs in README. export is canonical: stable node order,
// sorted keys, so equal graphs serialize byte-identically.
ComputationGraph load_graph(const std::string& text);
ComputationGraph load_graph_file(const std::string& path);
std::string export_graph(const ComputationGraph& g);
void export_graph_file(const ComputationGraph& g, const std::string& path);

// Canonical form used for isomorphism: WL-style signature refinement over the
// DAG plus layered ordering. Ignores node/edge id strings and internal edge
// shapes; graph input shapes participate (they are part of the interface).
std::string canonical_form(const ComputationGraph& g);

// 128-bit FNV-1a of canonical_form, for cheap distinct-architecture counting.
std::pair<std::uint64_t, std::uint64_t> canonical_hash(const ComputationGraph& g);

bool graph_isomorphic(const ComputationGraph& a, const ComputationGraph& b);

} // namespace tailor
