#include "tailor/predictors.hpp"
#include "tailor/errors.hpp"
#include "tailor/parallel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <sstream>
#include <unordered_map>

namespace tailor::predict {

using enumerate::OpFeature;
using enumerate::OperatorFeatureKey;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t hash_str(const std::string& s, std::uint64_t seed) {
    std::uint64_t h = seed ^ 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return splitmix64(h);
}

double unit_interval(std::uint64_t h) {
    return static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0); // [0, 1)
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

std::int64_t attr_i(const AttrMap& attrs, const char* name, std::int64_t fallback) {
    auto it = attrs.find(name);
    if (it == attrs.end()) return fallback;
    return std::get<std::int64_t>(it->second);
}

std::vector<std::int64_t> attr_l(const AttrMap& attrs, const char* name,
                                 std::vector<std::int64_t> fallback) {
    auto it = attrs.find(name);
    if (it == attrs.end()) return fallback;
    return std::get<std::vector<std::int64_t>>(it->second);
}

} // namespace

// ---------------------------------------------------------------------------
// Analytical backend
// ---------------------------------------------------------------------------

AnalyticalBackend::AnalyticalBackend(const std::string& device_id) : device_id_(device_id) {
    seed_ = hash_str(device_id, 0xD441CEULL);
    alpha_lat_ = 2e-7 + 4e-7 * unit_interval(splitmix64(seed_ ^ 1));
    beta_lat_ = 5e-7 + 1.5e-6 * unit_interval(splitmix64(seed_ ^ 2));
    alpha_en_ = 4e-7 + 8e-7 * unit_interval(splitmix64(seed_ ^ 3));
    beta_en_ = 1e-6 + 3e-6 * unit_interval(splitmix64(seed_ ^ 4));
}

double AnalyticalBackend::gamma(const std::string& op_type, bool energy) const {
    std::uint64_t h = hash_str(op_type, seed_ ^ (energy ? 0xE1 : 0x1A));
    return energy ? 0.01 + 0.09 * unit_interval(h) : 0.005 + 0.045 * unit_interval(h);
}

std::int64_t AnalyticalBackend::mult_adds(const OpFeature& f) {
    const auto& ins = f.in_shapes;
    const auto& outs = f.out_shapes;
    std::int64_t out_elems = 0;
    for (const auto& s : outs) out_elems += s.element_count();
    if (f.op_type == "conv2d") {
        auto k = attr_l(f.attrs, "kernel", {1, 1});
        return out_elems * k[0] * k[1] * ins[0].dims[1];
    }
    if (f.op_type == "depthwise_conv2d") {
        auto k = attr_l(f.attrs, "kernel", {1, 1});
        return out_elems * k[0] * k[1];
    }
    if (f.op_type == "pool_avg" || f.op_type == "pool_max") {
        auto k = attr_l(f.attrs, "kernel", {1, 1});
        return out_elems * k[0] * k[1];
    }
    if (f.op_type == "matmul") return out_elems * ins[0].dims.back();
    if (f.op_type == "global_pool") return ins[0].element_count();
    if (f.op_type == "reshape" || f.op_type == "transpose" || f.op_type == "split" ||
        f.op_type == "identity" || f.op_type == "concat")
        return 0;
    return out_elems; // element-wise / normalization
}

std::int64_t AnalyticalBackend::io_bytes(const OpFeature& f) {
    std::int64_t total = 0;
    for (const auto& s : f.in_shapes) total += s.byte_size();
    for (const auto& s : f.out_shapes) total += s.byte_size();
    return total;
}

CostSample AnalyticalBackend::do_measure(const OperatorFeatureKey& key) {
    std::int64_t madds = 0;
    double gamma_lat = 0, gamma_en = 0;
    for (const auto& f : key.op_seq) {
        madds += mult_adds(f);
        gamma_lat += gamma(f.op_type, false);
        gamma_en += gamma(f.op_type, true);
    }
    // Fused chains keep intermediates on chip: io counts the first member's
    // inputs and the last member's outputs only.
    std::int64_t io = 0;
    for (const auto& s : key.op_seq.front().in_shapes) io += s.byte_size();
    for (const auto& s : key.op_seq.back().out_shapes) io += s.byte_size();

    CostSample out;
    out.latency_ms = alpha_lat_ * static_cast<double>(madds) +
                     beta_lat_ * static_cast<double>(io) + gamma_lat;
    out.energy_mj = alpha_en_ * static_cast<double>(madds) +
                    beta_en_ * static_cast<double>(io) + gamma_en;
    return out;
}

// ---------------------------------------------------------------------------
// Measurement-file backend
// ---------------------------------------------------------------------------

MeasurementFileBackend::MeasurementFileBackend(const std::string& path) : path_(path) {
    auto lut = load_lut(path);
    entries_ = std::move(lut.entries);
}

bool MeasurementFileBackend::covers(const OperatorFeatureKey& key) const {
    return entries_.count(key.text) > 0;
}

CostSample MeasurementFileBackend::do_measure(const OperatorFeatureKey& key) {
    auto it = entries_.find(key.text);
    if (it == entries_.end())
        throw ValidationError("measurement file '" + path_ + "' has no entry for key " + key.text);
    return it->second;
}

// ---------------------------------------------------------------------------
// LUT build / IO
// ---------------------------------------------------------------------------

LatencyLUT build_latency_lut(const std::vector<OperatorFeatureKey>& manifest, CostBackend& backend,
                             const std::string& device_id, std::uint64_t fusion_hash,
                             const std::string& created_at, int jobs) {
    LatencyLUT lut;
    lut.provenance = {device_id, backend.id(), created_at, fusion_hash};

    std::vector<std::optional<CostSample>> samples(manifest.size());
    std::vector<std::string> missing;
    std::mutex missing_mu;
    int workers = backend.parallel_safe() ? jobs : 1;
    parallel_for(manifest.size(), workers, [&](std::size_t i) {
        try {
            samples[i] = backend.measure(manifest[i]);
        } catch (const std::exception&) {
            std::lock_guard<std::mutex> lock(missing_mu);
            missing.push_back(manifest[i].text);
        }
    });
    if (!missing.empty()) {
        std::sort(missing.begin(), missing.end());
        std::string msg = "partial LUT: backend failed on " + std::to_string(missing.size()) +
                          " key(s):";
        for (const auto& k : missing) msg += "\n  " + k;
        throw ValidationError(msg);
    }
    for (std::size_t i = 0; i < manifest.size(); ++i) lut.entries[manifest[i].text] = *samples[i];
    return lut;
}

void save_lut(const LatencyLUT& lut, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write LUT '" + path + "'");
    out << "# tfg-lut/1\n";
    out << "# device=" << lut.provenance.device_id << "\n";
    out << "# backend=" << lut.provenance.backend_id << "\n";
    out << "# created_at=" << lut.provenance.created_at << "\n";
    out << "# fusion_hash=" << lut.provenance.fusion_ruleset_hash << "\n";
    for (const auto& [key, sample] : lut.entries) {
        out << key << "\t" << format_double(sample.latency_ms);
        if (sample.energy_mj) out << "\t" << format_double(*sample.energy_mj);
        out << "\n";
    }
}

LatencyLUT load_lut(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open LUT '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line != "# tfg-lut/1")
        throw ValidationError("LUT '" + path + "' has unsupported format version");
    LatencyLUT lut;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            auto grab = [&](const char* prefix) -> std::optional<std::string> {
                std::string p = std::string("# ") + prefix + "=";
                if (line.rfind(p, 0) == 0) return line.substr(p.size());
                return std::nullopt;
            };
            if (auto v = grab("device")) lut.provenance.device_id = *v;
            else if (auto v2 = grab("backend")) lut.provenance.backend_id = *v2;
            else if (auto v3 = grab("created_at")) lut.provenance.created_at = *v3;
            else if (auto v4 = grab("fusion_hash"))
                lut.provenance.fusion_ruleset_hash = std::strtoull(v4->c_str(), nullptr, 10);
            continue;
        }
        auto tab1 = line.find('\t');
        if (tab1 == std::string::npos) throw ParseError("malformed LUT row: " + line);
        auto tab2 = line.find('\t', tab1 + 1);
        CostSample s;
        s.latency_ms = std::strtod(line.c_str() + tab1 + 1, nullptr);
        if (s.latency_ms < 0 || !std::isfinite(s.latency_ms))
            throw ValidationError("LUT latency must be finite and >= 0: " + line);
        if (tab2 != std::string::npos) {
            double e = std::strtod(line.c_str() + tab2 + 1, nullptr);
            if (e < 0 || !std::isfinite(e))
                throw ValidationError("LUT energy must be finite and >= 0: " + line);
            s.energy_mj = e;
        }
        lut.entries[line.substr(0, tab1)] = s;
    }
    return lut;
}

// ---------------------------------------------------------------------------
// Cost prediction
// ---------------------------------------------------------------------------

CostPrediction sum_cost(const std::vector<OperatorFeatureKey>& keys, const LatencyLUT& lut) {
    // Summation runs in sorted key order so the result is one well-defined
    // floating-point value however callers ordered the operators.
    std::vector<const std::string*> ordered;
    ordered.reserve(keys.size());
    for (const auto& key : keys) ordered.push_back(&key.text);
    std::sort(ordered.begin(), ordered.end(),
              [](const std::string* a, const std::string* b) { return *a < *b; });

    CostPrediction out;
    out.energy_mj = 0.0;
    for (const auto* text : ordered) {
        auto it = lut.entries.find(*text);
        if (it == lut.entries.end())
            throw ValidationError("LUT has no entry for key " + *text +
                                  " (refusing to extrapolate)");
        out.latency_ms += it->second.latency_ms;
        if (out.energy_mj) {
            if (it->second.energy_mj) *out.energy_mj += *it->second.energy_mj;
            else out.energy_mj = std::nullopt;
        }
    }
    if (keys.empty()) out.energy_mj = std::nullopt;
    return out;
}

CostPrediction predict_cost(const space::SubNetSpec& spec, const ir::ModulePtr& model,
                            const space::ModificationSpace& sp, const LatencyLUT& lut,
                            const std::vector<enumerate::FusionRule>& rules) {
    auto groups = enumerate::fusion_groups(model, rules);
    auto tree = space::apply_spec(model, spec, sp);
    return sum_cost(enumerate::active_keys(tree, groups), lut);
}

double predict_latency(const space::SubNetSpec& spec, const ir::ModulePtr& model,
                       const space::ModificationSpace& sp, const LatencyLUT& lut,
                       const std::vector<enumerate::FusionRule>& rules) {
    return predict_cost(spec, model, sp, lut, rules).latency_ms;
}

// ---------------------------------------------------------------------------
// Memory prediction
// ---------------------------------------------------------------------------

std::int64_t graph_param_bytes(const ComputationGraph& g) {
    std::int64_t total = 0;
    std::unordered_map<std::string, const TensorShape*> shapes;
    for (const auto& [eid, s] : g.edges)
        if (s) shapes[eid] = &*s;

    for (const auto& n : g.nodes) {
        const TensorShape* in0 = shapes.count(n.inputs[0]) ? shapes.at(n.inputs[0]) : nullptr;
        const TensorShape* out0 = shapes.count(n.outputs[0]) ? shapes.at(n.outputs[0]) : nullptr;
        if (!in0 || !out0) throw ValidationError("memory prediction requires concrete shapes");
        std::int64_t dsize = static_cast<std::int64_t>(dtype_size_bytes(out0->dtype));
        std::int64_t params = 0;
        if (n.op_type == "conv2d") {
            auto k = attr_l(n.attrs, "kernel", {1, 1});
            std::int64_t oc = out0->dims[1];
            params = k[0] * k[1] * in0->dims[1] * oc + oc;
        } else if (n.op_type == "depthwise_conv2d") {
            auto k = attr_l(n.attrs, "kernel", {1, 1});
            params = k[0] * k[1] * in0->dims[1] + in0->dims[1];
        } else if (n.op_type == "matmul" && n.inputs.size() == 1) {
            std::int64_t f = attr_i(n.attrs, "out_features", out0->dims.back());
            params = in0->dims.back() * f + f;
        } else if (n.op_type == "batchnorm") {
            params = 4 * in0->dims[1];
        } else if (n.op_type == "layernorm") {
            params = 2 * in0->dims.back();
        }
        total += params * dsize;
    }
    return total;
}

std::int64_t graph_peak_activation_bytes(const ComputationGraph& g) {
    auto topo = topological_order(g);

    // identity/reshape alias their input buffer.
    std::unordered_map<std::string, std::string> alias;
    for (const auto& n : g.nodes)
        if (n.op_type == "identity" || n.op_type == "reshape") alias[n.outputs[0]] = n.inputs[0];
    std::function<std::string(const std::string&)> root = [&](const std::string& e) -> std::string {
        auto it = alias.find(e);
        return it == alias.end() ? e : root(it->second);
    };

    // Remaining reads per root buffer (graph outputs hold a reference forever).
    std::unordered_map<std::string, std::int64_t> refs;
    for (const auto& n : g.nodes)
        for (const auto& e : n.inputs) ++refs[root(e)];
    for (const auto& e : g.graph_outputs) ++refs[root(e)];

    std::unordered_map<std::string, std::int64_t> bytes;
    for (const auto& [eid, s] : g.edges)
        if (s) bytes[eid] = s->byte_size();

    std::int64_t live = 0, peak = 0;
    std::unordered_map<std::string, bool> allocated;
    auto allocate = [&](const std::string& e) {
        std::string r = root(e);
        if (allocated[r]) return;
        allocated[r] = true;
        live += bytes.at(r);
    };
    for (const auto& e : g.graph_inputs) allocate(e);
    peak = live;

    for (auto idx : topo) {
        const GraphNode& n = g.nodes[idx];
        for (const auto& e : n.outputs) allocate(e);
        peak = std::max(peak, live);
        for (const auto& e : n.inputs) {
            std::string r = root(e);
            if (--refs[r] == 0 && allocated[r]) {
                live -= bytes.at(r);
                allocated[r] = false;
            }
        }
    }
    return peak;
}

MemoryPrediction predict_memory(const space::SubNetSpec& spec, const ir::ModulePtr& model,
                                const space::ModificationSpace& sp) {
    auto g = space::apply_subnet(model, spec, sp);
    MemoryPrediction out;
    out.param_bytes = graph_param_bytes(g);
    out.peak_activation_bytes = graph_peak_activation_bytes(g);
    out.total_bytes = out.param_bytes + out.peak_activation_bytes;
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic / file accuracy oracles
// ---------------------------------------------------------------------------

SyntheticOracle::SyntheticOracle(const space::ModificationSpace& sp, ir::ModulePtr model,
                                 std::uint64_t seed, double eps, double base)
    : sp_(&sp), model_(std::move(model)), seed_(seed), eps_(eps), base_(base) {
    for (const auto& d : sp.dims) {
        double scale = 0.3 + 0.9 * unit_interval(hash_str(d.dim_id, seed_));
        // Rank candidates by distance from the default: farther hurts more.
        std::vector<std::pair<double, std::string>> ranked;
        auto num = [](const AttrValue& v) {
            if (auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
            return std::get<double>(v);
        };
        for (const auto& c : d.candidates) {
            auto text = space::value_to_string(c);
            if (text == space::value_to_string(d.default_value)) continue;
            ranked.emplace_back(std::abs(num(c) - num(d.default_value)), text);
        }
        std::sort(ranked.begin(), ranked.end());
        for (std::size_t r = 0; r < ranked.size(); ++r) {
            double jitter = 0.8 + 0.4 * unit_interval(hash_str(d.dim_id + "=" + ranked[r].second,
                                                               seed_ ^ 0x77));
            weights_[{d.dim_id, ranked[r].second}] =
                scale * static_cast<double>(r + 1) * jitter;
        }
    }
}

double SyntheticOracle::weight(const std::string& dim_id, const AttrValue& value) const {
    auto it = weights_.find({dim_id, space::value_to_string(value)});
    return it == weights_.end() ? 0.0 : it->second;
}

double SyntheticOracle::min_nonzero_weight() const {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& [key, w] : weights_)
        if (w > 0) best = std::min(best, w);
    return std::isfinite(best) ? best : 0.0;
}

double SyntheticOracle::do_acc(const space::SubNetSpec& spec) {
    auto normalized = space::normalize_spec(spec, *sp_, model_);
    double drop = 0;
    for (const auto& [dim_id, value] : normalized.assignment)
        drop += weight(dim_id, value);
    double noise = 0;
    if (eps_ != 0.0 && !normalized.assignment.empty()) {
        auto text = space::spec_to_string(normalized, *sp_, model_);
        noise = eps_ * (2.0 * unit_interval(hash_str(text, seed_ ^ 0x1717)) - 1.0);
    }
    return base_ - drop + noise;
}

FileOracle::FileOracle(const std::string& path) : path_(path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open accuracy file '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line != "# tfg-acc/1")
        throw ValidationError("accuracy file '" + path + "' has unsupported format version");
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos) throw ParseError("malformed accuracy row: " + line);
        by_spec_[line.substr(0, tab)] = std::strtod(line.c_str() + tab + 1, nullptr);
    }
}

void FileOracle::bind(const space::ModificationSpace& sp, ir::ModulePtr model) {
    sp_ = &sp;
    model_ = std::move(model);
}

double FileOracle::do_acc(const space::SubNetSpec& spec) {
    if (!sp_) throw ValidationError("file oracle used before binding to a space");
    auto text = space::spec_to_string(spec, *sp_, model_);
    auto it = by_spec_.find(text);
    if (it == by_spec_.end())
        throw ValidationError("accuracy file '" + path_ + "' has no entry for spec '" + text + "'");
    return it->second;
}

// ---------------------------------------------------------------------------
// Sensitivity table
// ---------------------------------------------------------------------------

SensitivityTable build_sensitivity_table(const space::ModificationSpace& sp,
                                         const ir::ModulePtr& model, AccuracyOracle& oracle) {
    (void)model;
    SensitivityTable table;
    table.base_acc = oracle.acc({});
    for (const auto& d : sp.dims) {
        auto default_text = space::value_to_string(d.default_value);
        for (const auto& c : d.candidates) {
            auto text = space::value_to_string(c);
            if (text == default_text) continue; // delta is exactly 0, no call
            space::SubNetSpec single;
            single.assignment[d.dim_id] = c;
            table.deltas[{d.dim_id, text}] = table.base_acc - oracle.acc(single);
        }
    }
    return table;
}

double predict_accuracy(const space::SubNetSpec& spec, const SensitivityTable& table,
                        const space::ModificationSpace& sp, const ir::ModulePtr& model) {
    auto normalized = space::normalize_spec(spec, sp, model);
    double acc = table.base_acc;
    for (const auto& [dim_id, value] : normalized.assignment) {
        auto it = table.deltas.find({dim_id, space::value_to_string(value)});
        if (it == table.deltas.end())
            throw ValidationError("sensitivity table does not cover " + dim_id + "=" +
                                  space::value_to_string(value));
        acc -= it->second;
    }
    return acc;
}

void save_sensitivity(const SensitivityTable& table, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write sensitivity table '" + path + "'");
    out << "# tfg-sens/1\n";
    out << "# base_acc=" << format_double(table.base_acc) << "\n";
    for (const auto& [key, delta] : table.deltas)
        out << key.first << "\t" << key.second << "\t" << format_double(delta) << "\n";
}

SensitivityTable load_sensitivity(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open sensitivity table '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line != "# tfg-sens/1")
        throw ValidationError("sensitivity table '" + path + "' has unsupported format version");
    SensitivityTable table;
    bool have_base = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line.rfind("# base_acc=", 0) == 0) {
            table.base_acc = std::strtod(line.c_str() + 11, nullptr);
            have_base = true;
            continue;
        }
        if (line[0] == '#') continue;
        auto t1 = line.find('\t');
        auto t2 = line.find('\t', t1 + 1);
        if (t1 == std::string::npos || t2 == std::string::npos)
            throw ParseError("malformed sensitivity row: " + line);
        table.deltas[{line.substr(0, t1), line.substr(t1 + 1, t2 - t1 - 1)}] =
            std::strtod(line.c_str() + t2 + 1, nullptr);
    }
    if (!have_base) throw ValidationError("sensitivity table missing base_acc header");
    return table;
}

} // namespace tailor::predict
