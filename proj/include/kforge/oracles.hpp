#pragma once

#include "kforge/suite.hpp"
#include "kforge/task.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace kforge {

// CPU reference kernels. Arithmetic is f32 throughout; f16 inputs are widened
// on load and outputs are rounded to nearest-even when the output dtype is f16.

struct MergeResult {
    Tensor v_out; // [seq, heads, dim]
    Tensor s_out; // [seq, heads]
};

/// Log-sum-exp merge of two partial attention states, stabilized by
/// subtracting max(Sa, Sb) before exponentiating.
MergeResult merge_attn_states_lse_ref(const Tensor& va, const Tensor& sa, const Tensor& vb,
                                      const Tensor& sb);
MergeResult merge_attn_states_lse_ref(const Tensor& va, const Tensor& sa, const Tensor& vb,
                                      const Tensor& sb, DType v_out_dtype, DType s_out_dtype);

/// y = (x + r) / sqrt(mean((x + r)^2) + eps) * w, per row.
Tensor fused_add_rmsnorm_ref(const Tensor& x, const Tensor& residual, const Tensor& weight,
                             float eps);
Tensor fused_add_rmsnorm_ref(const Tensor& x, const Tensor& residual, const Tensor& weight,
                             float eps, DType out_dtype);

/// out = x / (1 + exp(-x)) * g, elementwise.
Tensor silu_and_mul_ref(const Tensor& x, const Tensor& gate);
Tensor silu_and_mul_ref(const Tensor& x, const Tensor& gate, DType out_dtype);

using DTypeMap = std::map<std::string, DType>;
using OracleFn =
    std::function<TensorMap(const TensorMap& inputs, const ScalarMap& scalars, const DTypeMap&)>;

struct OracleEntry {
    std::string id;
    /// Parameter names, roles and ranks the oracle expects; dtypes are free.
    std::vector<ParamSpec> signature;
    OracleFn eval;
};

class OracleRegistry {
public:
    /// Throws SignatureError on a duplicate id or an output whose symbols no input binds.
    void add(OracleEntry entry);

    bool contains(std::string_view id) const;
    const OracleEntry& at(std::string_view id) const;
    std::vector<std::string> ids() const;

    /// Throws SignatureError unless the task's oracle is registered with a
    /// matching parameter list.
    void check_task(const KernelTask& task) const;

    /// Runs the task's oracle, producing outputs in the task's declared dtypes.
    TensorMap evaluate(const KernelTask& task, const TensorMap& inputs,
                       const ScalarMap& scalars) const;

    /// Registry holding "merge_attn_states_lse", "fused_add_rmsnorm" and "silu_and_mul".
    static const OracleRegistry& builtin();

private:
    std::map<std::string, OracleEntry, std::less<>> entries_;
};

/// Input value distributions by fill kind.
struct InputGenSpec {
    float value_lo = -1.0f;
    float value_hi = 1.0f;
    float score_mean = 0.0f;
    float score_stddev = 1.0f;
    float weight_lo = 0.5f;
    float weight_hi = 1.5f;
};

struct GeneratedInputs {
    TensorMap tensors;
    ScalarMap scalars;
};

/// Deterministic inputs for one of the task's shape families. Each tensor is a
/// pure function of (spec, shape label, seed, parameter name). Throws
/// ConfigError for an unknown label.
GeneratedInputs generate_inputs(const KernelTask& task, std::string_view shape_label,
                                std::uint64_t seed, const InputGenSpec& spec = {});
/// Same, for a family that need not be one of the task's own.
GeneratedInputs generate_inputs(const KernelTask& task, const ShapeFamily& family,
                                std::uint64_t seed, const InputGenSpec& spec = {});

/// Default correctness tolerance for a task's outputs: 2e-2 when any output is
/// f16, else 1e-5.
double default_epsilon(DType widest_output);

std::string make_case_id(std::string_view shape_label, std::uint64_t seed);

/// One case per (family, seed), labeled by the oracle.
TestSuite build_suite(const KernelTask& task, const std::vector<ShapeFamily>& families,
                      std::span<const std::uint64_t> seeds, double epsilon,
                      DiscrepancyMetric metric,
                      const OracleRegistry& registry = OracleRegistry::builtin(),
                      const InputGenSpec& spec = {});
/// Uses task.shape_families.
TestSuite build_suite(const KernelTask& task, std::span<const std::uint64_t> seeds,
                      double epsilon, DiscrepancyMetric metric,
                      const OracleRegistry& registry = OracleRegistry::builtin(),
                      const InputGenSpec& spec = {});

/// Built-in task definitions with the default shape families for each kernel.
/// The baseline source is left empty; manifests supply it.
KernelTask builtin_task(std::string_view oracle_id);

} // namespace kforge
