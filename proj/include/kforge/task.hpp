#pragma once

#include "kforge/tensor.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace kforge {

enum class ParamRole { input, output, scalar };

/// Which input distribution a tensor parameter is drawn from.
enum class FillKind { value, score, weight };

std::string_view to_string(ParamRole role);
ParamRole parse_role(std::string_view name);
std::string_view to_string(FillKind fill);
FillKind parse_fill(std::string_view name);

/// One axis of a symbolic shape: a named symbol ("seq") or a fixed extent.
struct Dim {
    std::string symbol;
    std::int64_t extent = 0;

    static Dim named(std::string name) { return {std::move(name), 0}; }
    static Dim fixed(std::int64_t n) { return {{}, n}; }
    bool is_symbol() const { return !symbol.empty(); }

    friend bool operator==(const Dim&, const Dim&) = default;
};

struct ParamSpec {
    std::string name;
    ParamRole role = ParamRole::input;
    DType dtype = DType::f32;
    std::vector<Dim> shape;          // empty for scalars
    FillKind fill = FillKind::value; // tensors only
    float scalar_value = 0.0f;       // scalars only, fixed per task

    friend bool operator==(const ParamSpec&, const ParamSpec&) = default;
};

/// A concrete binding of the task's shape symbols, in `KernelTask::symbols` order.
struct ShapeFamily {
    std::string label;
    std::vector<std::int64_t> extents;

    friend bool operator==(const ShapeFamily&, const ShapeFamily&) = default;
};

using ShapeMap = std::map<std::string, Shape>;

struct KernelTask {
    std::string name;
    std::string oracle_id;
    std::string entry;           // GPU entry symbol the host harness calls
    std::string baseline_source; // opaque kernel source text
    std::vector<std::string> symbols;
    std::vector<ParamSpec> signature;
    std::vector<ShapeFamily> shape_families;

    const ParamSpec& param(std::string_view name) const;
    std::vector<const ParamSpec*> params_with(ParamRole role) const;
    const ShapeFamily& family(std::string_view label) const;
    bool has_family(std::string_view label) const;
    /// Loosest output dtype: f16 if any output tensor is f16.
    DType widest_output_dtype() const;
};

/// Label used for a family when the manifest gives only extents, e.g. "[16, 4096]".
std::string default_family_label(const std::vector<std::int64_t>& extents);

/// Concrete shapes of every output parameter, inferred from input shapes.
/// Throws SignatureError on missing inputs, inconsistent bindings or an output
/// axis whose symbol no input binds.
ShapeMap resolve_output_shapes(const KernelTask& task, const ShapeMap& input_shapes);

/// Input-tensor shapes for one shape family.
ShapeMap family_input_shapes(const KernelTask& task, const ShapeFamily& family);

/// Checks the structural task invariants (unique names, resolvable outputs,
/// families matching the symbol list). Throws SignatureError.
void validate_task(const KernelTask& task);

/// Loads a JSON task manifest. The "source" path is resolved relative to the
/// manifest's directory.
KernelTask load_task_manifest(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);

} // namespace kforge
