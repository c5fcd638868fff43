#include "kforge/error.hpp"
#include "kforge/oracles.hpp"

#include <cmath>
#include <future>
#include <numbers>
#include <random>
#include <set>

namespace kforge {

namespace {

ParamSpec tensor_param(std::string name, ParamRole role, DType dtype,
                       std::vector<std::string> symbols, FillKind fill = FillKind::value) {
    ParamSpec p;
    p.name = std::move(name);
    p.role = role;
    p.dtype = dtype;
    p.fill = fill;
    for (auto& s : symbols) {
        p.shape.push_back(Dim::named(std::move(s)));
    }
    return p;
}

ParamSpec scalar_param(std::string name, float value) {
    ParamSpec p;
    p.name = std::move(name);
    p.role = ParamRole::scalar;
    p.dtype = DType::f32;
    p.scalar_value = value;
    return p;
}

const Tensor& input(const TensorMap& m, const std::string& name) {
    auto it = m.find(name);
    if (it == m.end()) {
        throw SignatureError("oracle input '" + name + "' missing");
    }
    return it->second;
}

DType out_dtype(const DTypeMap& dtypes, const std::string& name, DType fallback) {
    auto it = dtypes.find(name);
    return it == dtypes.end() ? fallback : it->second;
}

float scalar(const ScalarMap& m, const std::string& name) {
    auto it = m.find(name);
    if (it == m.end()) {
        throw SignatureError("oracle scalar '" + name + "' missing");
    }
    return it->second;
}

OracleRegistry make_builtin() {
    OracleRegistry reg;
    const auto merge_task = builtin_task("merge_attn_states_lse");
    reg.add({"merge_attn_states_lse", merge_task.signature,
             [](const TensorMap& in, const ScalarMap&, const DTypeMap& dt) {
                 const auto& va = input(in, "Va");
                 const auto& sa = input(in, "Sa");
                 auto r = merge_attn_states_lse_ref(va, sa, input(in, "Vb"), input(in, "Sb"),
                                                    out_dtype(dt, "Vout", va.dtype()),
                                                    out_dtype(dt, "Sout", sa.dtype()));
                 TensorMap out;
                 out.emplace("Vout", std::move(r.v_out));
                 out.emplace("Sout", std::move(r.s_out));
                 return out;
             }});
    reg.add({"fused_add_rmsnorm", builtin_task("fused_add_rmsnorm").signature,
             [](const TensorMap& in, const ScalarMap& sc, const DTypeMap& dt) {
                 const auto& x = input(in, "x");
                 TensorMap out;
                 out.emplace("y", fused_add_rmsnorm_ref(x, input(in, "r"), input(in, "w"),
                                                        scalar(sc, "eps"),
                                                        out_dtype(dt, "y", x.dtype())));
                 return out;
             }});
    reg.add({"silu_and_mul", builtin_task("silu_and_mul").signature,
             [](const TensorMap& in, const ScalarMap&, const DTypeMap& dt) {
                 const auto& x = input(in, "x");
                 TensorMap out;
                 out.emplace("out",
                             silu_and_mul_ref(x, input(in, "g"), out_dtype(dt, "out", x.dtype())));
                 return out;
             }});
    return reg;
}

// FNV-1a, used only to derive independent generator streams from names.
std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Uniform [0, 1) with 24 significant bits, exact in f32.
float unit_uniform(std::mt19937_64& eng) {
    return static_cast<float>(eng() >> 40) * 0x1p-24f;
}

// Box-Muller; the standard distributions are implementation-defined, this is not.
float standard_normal(std::mt19937_64& eng) {
    const double u1 = static_cast<double>((eng() >> 11) + 1) * 0x1p-53;
    const double u2 = static_cast<double>(eng() >> 11) * 0x1p-53;
    return static_cast<float>(std::sqrt(-2.0 * std::log(u1)) *
                              std::cos(2.0 * std::numbers::pi * u2));
}

Tensor fill_tensor(const ParamSpec& p, const Shape& shape, std::uint64_t stream_seed,
                   const InputGenSpec& spec) {
    std::mt19937_64 eng(stream_seed);
    std::vector<float> values(element_count(shape));
    for (auto& v : values) {
        switch (p.fill) {
        case FillKind::value:
            v = spec.value_lo + (spec.value_hi - spec.value_lo) * unit_uniform(eng);
            break;
        case FillKind::score:
            v = spec.score_mean + spec.score_stddev * standard_normal(eng);
            break;
        case FillKind::weight:
            v = spec.weight_lo + (spec.weight_hi - spec.weight_lo) * unit_uniform(eng);
            break;
        }
    }
    return Tensor::from_f32(p.dtype, shape, std::move(values));
}

bool same_structure(const ParamSpec& a, const ParamSpec& b) {
    return a.name == b.name && a.role == b.role && a.shape.size() == b.shape.size();
}

} // namespace

void OracleRegistry::add(OracleEntry entry) {
    std::set<std::string> bound;
    for (const auto& p : entry.signature) {
        if (p.role == ParamRole::input) {
            for (const auto& d : p.shape) {
                if (d.is_symbol()) {
                    bound.insert(d.symbol);
                }
            }
        }
    }
    for (const auto& p : entry.signature) {
        if (p.role == ParamRole::output) {
            for (const auto& d : p.shape) {
                if (d.is_symbol() && !bound.count(d.symbol)) {
                    throw SignatureError("oracle " + entry.id + ": output '" + p.name +
                                         "' uses unbound symbol " + d.symbol);
                }
            }
        }
    }
    const auto id = entry.id;
    if (!entries_.emplace(id, std::move(entry)).second) {
        throw SignatureError("oracle '" + id + "' registered twice");
    }
}

bool OracleRegistry::contains(std::string_view id) const { return entries_.find(id) != entries_.end(); }

const OracleEntry& OracleRegistry::at(std::string_view id) const {
    auto it = entries_.find(id);
    if (it == entries_.end()) {
        throw SignatureError("no oracle registered as '" + std::string(id) + "'");
    }
    return it->second;
}

std::vector<std::string> OracleRegistry::ids() const {
    std::vector<std::string> out;
    for (const auto& [id, _] : entries_) {
        out.push_back(id);
    }
    return out;
}

void OracleRegistry::check_task(const KernelTask& task) const {
    const auto& entry = at(task.oracle_id);
    if (entry.signature.size() != task.signature.size()) {
        throw SignatureError("task " + task.name + " signature has " +
                             std::to_string(task.signature.size()) + " parameters, oracle " +
                             entry.id + " expects " + std::to_string(entry.signature.size()));
    }
    for (std::size_t i = 0; i < entry.signature.size(); ++i) {
        if (!same_structure(entry.signature[i], task.signature[i])) {
            throw SignatureError("task " + task.name + " parameter " + std::to_string(i) + " ('" +
                                 task.signature[i].name + "') does not match oracle parameter '" +
                                 entry.signature[i].name + "'");
        }
    }
}

TensorMap OracleRegistry::evaluate(const KernelTask& task, const TensorMap& inputs,
                                   const ScalarMap& scalars) const {
    DTypeMap dtypes;
    for (const auto* p : task.params_with(ParamRole::output)) {
        dtypes[p->name] = p->dtype;
    }
    return at(task.oracle_id).eval(inputs, scalars, dtypes);
}

const OracleRegistry& OracleRegistry::builtin() {
    static const OracleRegistry registry = make_builtin();
    return registry;
}

GeneratedInputs generate_inputs(const KernelTask& task, std::string_view shape_label,
                                std::uint64_t seed, const InputGenSpec& spec) {
    return generate_inputs(task, task.family(shape_label), seed, spec);
}

GeneratedInputs generate_inputs(const KernelTask& task, const ShapeFamily& family,
                                std::uint64_t seed, const InputGenSpec& spec) {
    const auto shapes = family_input_shapes(task, family);
    const std::uint64_t family_seed = splitmix64(splitmix64(seed) ^ fnv1a(family.label));
    GeneratedInputs gen;
    for (const auto& p : task.signature) {
        if (p.role == ParamRole::scalar) {
            gen.scalars[p.name] = p.scalar_value;
        } else if (p.role == ParamRole::input) {
            const auto stream = splitmix64(family_seed ^ fnv1a(p.name));
            gen.tensors.emplace(p.name, fill_tensor(p, shapes.at(p.name), stream, spec));
        }
    }
    return gen;
}

double default_epsilon(DType widest_output) { return widest_output == DType::f16 ? 2e-2 : 1e-5; }

std::string make_case_id(std::string_view shape_label, std::uint64_t seed) {
    return std::string(shape_label) + "#" + std::to_string(seed);
}

TestSuite build_suite(const KernelTask& task, const std::vector<ShapeFamily>& families,
                      std::span<const std::uint64_t> seeds, double epsilon,
                      DiscrepancyMetric metric, const OracleRegistry& registry,
                      const InputGenSpec& spec) {
    registry.check_task(task);
    if (families.empty() || seeds.empty()) {
        throw ConfigError("suite needs at least one shape family and one seed");
    }

    struct Job {
        const ShapeFamily* family;
        std::uint64_t seed;
    };
    std::vector<Job> jobs;
    for (const auto& f : families) {
        for (auto s : seeds) {
            jobs.push_back({&f, s});
        }
    }

    // Cases are independent; results land by index so the order is fixed.
    std::vector<std::future<TestCase>> pending;
    pending.reserve(jobs.size());
    for (const auto& job : jobs) {
        pending.push_back(std::async(std::launch::async, [&task, &registry, &spec, job] {
            auto gen = generate_inputs(task, *job.family, job.seed, spec);
            TestCase tc;
            tc.case_id = make_case_id(job.family->label, job.seed);
            tc.shape_label = job.family->label;
            tc.seed = job.seed;
            tc.expected = registry.evaluate(task, gen.tensors, gen.scalars);
            tc.inputs = std::move(gen.tensors);
            tc.scalars = std::move(gen.scalars);
            return tc;
        }));
    }

    TestSuite suite;
    suite.epsilon = epsilon;
    suite.metric = metric;
    for (auto& f : pending) {
        suite.cases.push_back(f.get());
    }
    validate_suite(suite);
    return suite;
}

TestSuite build_suite(const KernelTask& task, std::span<const std::uint64_t> seeds,
                      double epsilon, DiscrepancyMetric metric, const OracleRegistry& registry,
                      const InputGenSpec& spec) {
    return build_suite(task, task.shape_families, seeds, epsilon, metric, registry, spec);
}

KernelTask builtin_task(std::string_view oracle_id) {
    KernelTask t;
    t.oracle_id = std::string(oracle_id);
    t.name = t.oracle_id;
    t.entry = "kforge_" + t.oracle_id;
    auto families = [](std::initializer_list<std::vector<std::int64_t>> shapes) {
        std::vector<ShapeFamily> out;
        for (const auto& s : shapes) {
            out.push_back({default_family_label(s), s});
        }
        return out;
    };

    if (oracle_id == "merge_attn_states_lse") {
        t.symbols = {"seq", "heads", "dim"};
        t.signature = {
            tensor_param("Va", ParamRole::input, DType::f16, {"seq", "heads", "dim"}),
            tensor_param("Sa", ParamRole::input, DType::f32, {"seq", "heads"}, FillKind::score),
            tensor_param("Vb", ParamRole::input, DType::f16, {"seq", "heads", "dim"}),
            tensor_param("Sb", ParamRole::input, DType::f32, {"seq", "heads"}, FillKind::score),
            tensor_param("Vout", ParamRole::output, DType::f16, {"seq", "heads", "dim"}),
            tensor_param("Sout", ParamRole::output, DType::f32, {"seq", "heads"}),
        };
        t.shape_families =
            families({{512, 32, 256}, {512, 40, 128}, {768, 32, 256}, {512, 64, 128}});
    } else if (oracle_id == "fused_add_rmsnorm") {
        t.symbols = {"rows", "hidden"};
        t.signature = {
            tensor_param("x", ParamRole::input, DType::f16, {"rows", "hidden"}),
            tensor_param("r", ParamRole::input, DType::f16, {"rows", "hidden"}),
            tensor_param("w", ParamRole::input, DType::f16, {"hidden"}, FillKind::weight),
            scalar_param("eps", 1e-6f),
            tensor_param("y", ParamRole::output, DType::f16, {"rows", "hidden"}),
        };
        t.shape_families = families({{256, 4096}, {1024, 4096}, {128, 11008}, {512, 14336}});
    } else if (oracle_id == "silu_and_mul") {
        t.symbols = {"rows", "hidden"};
        t.signature = {
            tensor_param("x", ParamRole::input, DType::f16, {"rows", "hidden"}),
            tensor_param("g", ParamRole::input, DType::f16, {"rows", "hidden"}),
            tensor_param("out", ParamRole::output, DType::f16, {"rows", "hidden"}),
        };
        t.shape_families = families({{16, 4096}, {32, 5120}, {64, 8192}, {16, 12288}});
    } else {
        throw SignatureError("no built-in task for oracle '" + std::string(oracle_id) + "'");
    }
    return t;
}

} // namespace kforge
