#pragma once

#include "tailor/enumerator.hpp"
#include "tailor/graph.hpp"
#include "tailor/ir.hpp"
#include "tailor/modspace.hpp"

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace tailor::predict {

struct CostSample {
    double latency_ms = 0;
    std::optional<double> energy_mj;
};

// Pure, per-key cost source standing in for on-device profiling.
class CostBackend {
public:
    virtual ~CostBackend() = default;
    CostSample measure(const enumerate::OperatorFeatureKey& key) {
        ++calls_;
        return do_measure(key);
    }
    virtual std::string id() const = 0;
    virtual bool parallel_safe() const { return true; }
    std::uint64_t call_count() const { return calls_; }

protected:
    virtual CostSample do_measure(const enumerate::OperatorFeatureKey& key) = 0;

private:
    std::atomic<std::uint64_t> calls_{0};
};

// Deterministic seeded cost model: latency = alpha*mult_adds + beta*io_bytes +
// gamma(op_type), all constants derived from the device id. Fused keys charge
// only their external tensors for io, so fusion genuinely changes the cost.
class AnalyticalBackend : public CostBackend {
public:
    explicit AnalyticalBackend(const std::string& device_id);
    std::string id() const override { return "analytical:" + device_id_; }

    static std::int64_t mult_adds(const enumerate::OpFeature& f);
    static std::int64_t io_bytes(const enumerate::OpFeature& f);

protected:
    CostSample do_measure(const enumerate::OperatorFeatureKey& key) override;

private:
    std::string device_id_;
    double alpha_lat_, beta_lat_, alpha_en_, beta_en_;
    double gamma(const std::string& op_type, bool energy) const;
    std::uint64_t seed_;
};

// Reads profiled values from a LUT-format measurement file; throws on keys the
// file does not cover.
class MeasurementFileBackend : public CostBackend {
public:
    explicit MeasurementFileBackend(const std::string& path);
    std::string id() const override { return "file:" + path_; }
    bool covers(const enumerate::OperatorFeatureKey& key) const;

protected:
    CostSample do_measure(const enumerate::OperatorFeatureKey& key) override;

private:
    std::string path_;
    std::map<std::string, CostSample> entries_;
};

struct LutProvenance {
    std::string device_id;
    std::string backend_id;
    std::string created_at;
    std::uint64_t fusion_ruleset_hash = 0;
};

struct LatencyLUT {
    std::map<std::string, CostSample> entries; // canonical key text -> sample
    LutProvenance provenance;

    const CostSample* find(const enumerate::OperatorFeatureKey& key) const {
        auto it = entries.find(key.text);
        return it == entries.end() ? nullptr : &it->second;
    }
};

// Exactly one measure call per manifest key. A backend failure or uncovered
// key aborts with a partial-LUT error listing everything missing.
LatencyLUT build_latency_lut(const std::vector<enumerate::OperatorFeatureKey>& manifest,
                             CostBackend& backend, const std::string& device_id,
                             std::uint64_t fusion_hash, const std::string& created_at,
                             int jobs = 1);

void save_lut(const LatencyLUT& lut, const std::string& path);
LatencyLUT load_lut(const std::string& path);

struct CostPrediction {
    double latency_ms = 0;
    std::optional<double> energy_mj;
};

// Sum of per-(fused-)operator LUT entries over the spec's active operators.
// Missing keys are a hard error: the predictor never extrapolates.
CostPrediction predict_cost(const space::SubNetSpec& spec, const ir::ModulePtr& model,
                            const space::ModificationSpace& sp, const LatencyLUT& lut,
                            const std::vector<enumerate::FusionRule>& rules);
double predict_latency(const space::SubNetSpec& spec, const ir::ModulePtr& model,
                       const space::ModificationSpace& sp, const LatencyLUT& lut,
                       const std::vector<enumerate::FusionRule>& rules);

// Summation core shared with whole-graph oracles; empty input sums to zero.
CostPrediction sum_cost(const std::vector<enumerate::OperatorFeatureKey>& keys,
                        const LatencyLUT& lut);

struct MemoryPrediction {
    std::int64_t param_bytes = 0;
    std::int64_t peak_activation_bytes = 0;
    std::int64_t total_bytes = 0;
};

// Parameters from active attrs (conv/depthwise/matmul weights and biases,
// batchnorm 4C, layernorm 2D); peak activations over the canonical topological
// schedule with identity/reshape aliasing their inputs.
MemoryPrediction predict_memory(const space::SubNetSpec& spec, const ir::ModulePtr& model,
                                const space::ModificationSpace& sp);
std::int64_t graph_param_bytes(const ComputationGraph& g);
std::int64_t graph_peak_activation_bytes(const ComputationGraph& g);

// ---------------------------------------------------------------------------
// Accuracy
// ---------------------------------------------------------------------------

class AccuracyOracle {
public:
    virtual ~AccuracyOracle() = default;
    double acc(const space::SubNetSpec& spec) {
        ++calls_;
        return do_acc(spec);
    }
    std::uint64_t call_count() const { return calls_; }

protected:
    virtual double do_acc(const space::SubNetSpec& spec) = 0;

private:
    std::uint64_t calls_ = 0;
};

// acc(spec) = base - sum of per-modification weights + eps * interaction(spec).
// Weights grow with distance from the default choice; everything is a pure
// function of the seed.
class SyntheticOracle : public AccuracyOracle {
public:
    SyntheticOracle(const space::ModificationSpace& sp, ir::ModulePtr model, std::uint64_t seed,
                    double eps = 0.0, double base = 80.0);
    double weight(const std::string& dim_id, const AttrValue& value) const;
    double min_nonzero_weight() const;
    double base() const { return base_; }
    double eps() const { return eps_; }

protected:
    double do_acc(const space::SubNetSpec& spec) override;

private:
    const space::ModificationSpace* sp_;
    ir::ModulePtr model_;
    std::uint64_t seed_;
    double eps_;
    double base_;
    std::map<std::pair<std::string, std::string>, double> weights_;
};

// Accuracy values keyed by canonical spec string, read from a file.
class FileOracle : public AccuracyOracle {
public:
    explicit FileOracle(const std::string& path);

protected:
    double do_acc(const space::SubNetSpec& spec) override;

private:
    std::string path_;
    std::map<std::string, double> by_spec_;
    const space::ModificationSpace* sp_ = nullptr;

public:
    // Spec strings need the bound space for canonical formatting.
    void bind(const space::ModificationSpace& sp, ir::ModulePtr model);

private:
    ir::ModulePtr model_;
};

struct SensitivityTable {
    double base_acc = 0;
    // (dim_id, canonical value string) -> accuracy drop
    std::map<std::pair<std::string, std::string>, double> deltas;
};

// One oracle call for the baseline plus one per non-default (dim, value) pair;
// default-valued modifications get delta 0 without a call.
SensitivityTable build_sensitivity_table(const space::ModificationSpace& sp,
                                         const ir::ModulePtr& model, AccuracyOracle& oracle);

// base_acc minus the summed sensitivities of the spec's modifications.
double predict_accuracy(const space::SubNetSpec& spec, const SensitivityTable& table,
                        const space::ModificationSpace& sp, const ir::ModulePtr& model);

void save_sensitivity(const SensitivityTable& table, const std::string& path);
SensitivityTable load_sensitivity(const std::string& path);

} // namespace tailor::predict
