#include "kforge/task.hpp"

#include "kforge/error.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace kforge {

using json = nlohmann::json;

std::string_view to_string(ParamRole role) {
    switch (role) {
    case ParamRole::input:
        return "input";
    case ParamRole::output:
        return "output";
    case ParamRole::scalar:
        return "scalar";
    }
    return "?";
}

ParamRole parse_role(std::string_view name) {
    if (name == "input") {
        return ParamRole::input;
    }
    if (name == "output") {
        return ParamRole::output;
    }
    if (name == "scalar") {
        return ParamRole::scalar;
    }
    throw SignatureError("unknown parameter role '" + std::string(name) + "'");
}

std::string_view to_string(FillKind fill) {
    switch (fill) {
    case FillKind::value:
        return "value";
    case FillKind::score:
        return "score";
    case FillKind::weight:
        return "weight";
    }
    return "?";
}

FillKind parse_fill(std::string_view name) {
    if (name == "value") {
        return FillKind::value;
    }
    if (name == "score") {
        return FillKind::score;
    }
    if (name == "weight") {
        return FillKind::weight;
    }
    throw SignatureError("unknown fill kind '" + std::string(name) + "'");
}

const ParamSpec& KernelTask::param(std::string_view param_name) const {
    for (const auto& p : signature) {
        if (p.name == param_name) {
            return p;
        }
    }
    throw SignatureError("task " + name + " has no parameter '" + std::string(param_name) + "'");
}

std::vector<const ParamSpec*> KernelTask::params_with(ParamRole role) const {
    std::vector<const ParamSpec*> out;
    for (const auto& p : signature) {
        if (p.role == role) {
            out.push_back(&p);
        }
    }
    return out;
}

const ShapeFamily& KernelTask::family(std::string_view label) const {
    for (const auto& f : shape_families) {
        if (f.label == label) {
            return f;
        }
    }
    throw ConfigError("task " + name + " has no shape family '" + std::string(label) + "'");
}

bool KernelTask::has_family(std::string_view label) const {
    for (const auto& f : shape_families) {
        if (f.label == label) {
            return true;
        }
    }
    return false;
}

DType KernelTask::widest_output_dtype() const {
    for (const auto* p : params_with(ParamRole::output)) {
        if (p->dtype == DType::f16) {
            return DType::f16;
        }
    }
    return DType::f32;
}

std::string default_family_label(const std::vector<std::int64_t>& extents) {
    return format_shape(extents);
}

ShapeMap resolve_output_shapes(const KernelTask& task, const ShapeMap& input_shapes) {
    std::map<std::string, std::int64_t> bound;
    for (const auto* p : task.params_with(ParamRole::input)) {
        auto it = input_shapes.find(p->name);
        if (it == input_shapes.end()) {
            throw SignatureError("no shape given for input '" + p->name + "'");
        }
        const Shape& shape = it->second;
        if (shape.size() != p->shape.size()) {
            throw SignatureError("input '" + p->name + "' expects rank " +
                                 std::to_string(p->shape.size()) + ", got " + format_shape(shape));
        }
        for (std::size_t axis = 0; axis < shape.size(); ++axis) {
            const Dim& dim = p->shape[axis];
            if (shape[axis] < 1) {
                throw SignatureError("input '" + p->name + "' has non-positive extent");
            }
            if (!dim.is_symbol()) {
                if (dim.extent != shape[axis]) {
                    throw SignatureError("input '" + p->name + "' axis " + std::to_string(axis) +
                                         " must be " + std::to_string(dim.extent));
                }
                continue;
            }
            auto [pos, inserted] = bound.emplace(dim.symbol, shape[axis]);
            if (!inserted && pos->second != shape[axis]) {
                throw SignatureError("symbol '" + dim.symbol + "' bound to both " +
                                     std::to_string(pos->second) + " and " +
                                     std::to_string(shape[axis]));
            }
        }
    }

    ShapeMap out;
    for (const auto* p : task.params_with(ParamRole::output)) {
        Shape shape;
        for (const Dim& dim : p->shape) {
            if (!dim.is_symbol()) {
                shape.push_back(dim.extent);
                continue;
            }
            auto it = bound.find(dim.symbol);
            if (it == bound.end()) {
                throw SignatureError("output '" + p->name + "' uses unresolvable symbol '" +
                                     dim.symbol + "'");
            }
            shape.push_back(it->second);
        }
        out.emplace(p->name, std::move(shape));
    }
    return out;
}

ShapeMap family_input_shapes(const KernelTask& task, const ShapeFamily& family) {
    if (family.extents.size() != task.symbols.size()) {
        throw SignatureError("shape family " + family.label + " binds " +
                             std::to_string(family.extents.size()) + " symbols, task declares " +
                             std::to_string(task.symbols.size()));
    }
    std::map<std::string, std::int64_t> bound;
    for (std::size_t i = 0; i < task.symbols.size(); ++i) {
        bound[task.symbols[i]] = family.extents[i];
    }
    ShapeMap out;
    for (const auto* p : task.params_with(ParamRole::input)) {
        Shape shape;
        for (const Dim& dim : p->shape) {
            if (!dim.is_symbol()) {
                shape.push_back(dim.extent);
                continue;
            }
            auto it = bound.find(dim.symbol);
            if (it == bound.end()) {
                throw SignatureError("input '" + p->name + "' uses undeclared symbol '" +
                                     dim.symbol + "'");
            }
            shape.push_back(it->second);
        }
        out.emplace(p->name, std::move(shape));
    }
    return out;
}

void validate_task(const KernelTask& task) {
    if (task.name.empty()) {
        throw SignatureError("task name is empty");
    }
    std::set<std::string> names;
    for (const auto& p : task.signature) {
        if (!names.insert(p.name).second) {
            throw SignatureError("duplicate parameter '" + p.name + "' in task " + task.name);
        }
        if (p.role == ParamRole::scalar && !p.shape.empty()) {
            throw SignatureError("scalar parameter '" + p.name + "' must not have a shape");
        }
        if (p.role != ParamRole::scalar && p.shape.empty()) {
            throw SignatureError("tensor parameter '" + p.name + "' needs a shape");
        }
    }
    if (task.params_with(ParamRole::output).empty()) {
        throw SignatureError("task " + task.name + " declares no outputs");
    }
    std::set<std::string> declared(task.symbols.begin(), task.symbols.end());
    for (const auto& p : task.signature) {
        for (const auto& d : p.shape) {
            if (d.is_symbol() && !declared.count(d.symbol)) {
                throw SignatureError("parameter '" + p.name + "' uses undeclared symbol '" +
                                     d.symbol + "'");
            }
            if (!d.is_symbol() && d.extent < 1) {
                throw SignatureError("parameter '" + p.name + "' has a non-positive fixed extent");
            }
        }
    }
    std::set<std::string> labels;
    for (const auto& f : task.shape_families) {
        if (!labels.insert(f.label).second) {
            throw SignatureError("duplicate shape family label " + f.label);
        }
        for (auto e : f.extents) {
            if (e < 1) {
                throw SignatureError("shape family " + f.label + " has a non-positive extent");
            }
        }
        resolve_output_shapes(task, family_input_shapes(task, f));
    }
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot read " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

namespace {

std::vector<Dim> parse_dims(const json& j) {
    std::vector<Dim> dims;
    for (const auto& d : j) {
        if (d.is_string()) {
            dims.push_back(Dim::named(d.get<std::string>()));
        } else if (d.is_number_integer()) {
            dims.push_back(Dim::fixed(d.get<std::int64_t>()));
        } else {
            throw SignatureError("shape entries must be symbol names or integers");
        }
    }
    return dims;
}

} // namespace

KernelTask load_task_manifest(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError("task manifest " + path.string() + ": " + e.what());
    }

    try {
        KernelTask task;
        task.name = j.at("name").get<std::string>();
        task.oracle_id = j.at("oracle").get<std::string>();
        task.entry = j.value("entry", std::string("kforge_") + task.name);
        task.symbols = j.at("symbols").get<std::vector<std::string>>();

        const auto source = path.parent_path() / j.at("source").get<std::string>();
        task.baseline_source = read_text_file(source);

        for (const auto& pj : j.at("signature")) {
            ParamSpec p;
            p.name = pj.at("name").get<std::string>();
            p.role = parse_role(pj.at("role").get<std::string>());
            p.dtype = parse_dtype(pj.value("dtype", std::string("f32")));
            if (p.role == ParamRole::scalar) {
                p.scalar_value = pj.at("value").get<float>();
            } else {
                p.shape = parse_dims(pj.at("shape"));
                p.fill = parse_fill(pj.value("fill", std::string("value")));
            }
            task.signature.push_back(std::move(p));
        }

        for (const auto& fj : j.at("shape_families")) {
            ShapeFamily f;
            if (fj.is_array()) {
                f.extents = fj.get<std::vector<std::int64_t>>();
                f.label = default_family_label(f.extents);
            } else {
                f.extents = fj.at("extents").get<std::vector<std::int64_t>>();
                f.label = fj.value("label", default_family_label(f.extents));
            }
            task.shape_families.push_back(std::move(f));
        }

        validate_task(task);
        return task;
    } catch (const json::exception& e) {
        throw ConfigError("task manifest " + path.string() + ": " + e.what());
    } catch (const SignatureError& e) {
        throw ConfigError("task manifest " + path.string() + ": " + e.what());
    }
}

} // namespace kforge
