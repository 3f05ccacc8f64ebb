#include "mergelab/merge.hpp"

#include "mergelab/error.hpp"
#include "mergelab/util.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"

namespace mergelab {

using json = nlohmann::json;

std::string_view merge_method_name(MergeMethod m) {
    return m == MergeMethod::linear ? "linear" : "slerp";
}

std::string_view slerp_fallback_name(SlerpFallback f) {
    switch (f) {
    case SlerpFallback::none:
        return "none";
    case SlerpFallback::linear_parallel:
        return "linear_parallel";
    case SlerpFallback::linear_zero_norm:
        return "linear_zero_norm";
    case SlerpFallback::sign_flipped:
        return "sign_flipped";
    }
    return "?";
}

void LambdaWeights::validate(std::size_t n_inputs) const {
    if (lambdas.size() != n_inputs) {
        throw InvalidWeights("expected " + std::to_string(n_inputs) + " lambdas, got " +
                             std::to_string(lambdas.size()));
    }
    double sum = 0.0;
    for (const double l : lambdas) {
        if (!std::isfinite(l) || l < 0.0) {
            throw InvalidWeights("lambda " + format_double(l) + " is negative or non-finite");
        }
        sum += l;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw InvalidWeights("lambdas sum to " + format_double(sum) + ", expected 1");
    }
}

namespace {

void require_compatible(const TensorMap& a, const TensorMap& b, std::size_t index_b) {
    const auto report = validate_compatibility(a, b);
    if (!report.compatible()) {
        throw IncompatibleInputs("input 0 vs input " + std::to_string(index_b) + ": " + report.describe());
    }
}

std::map<std::string, std::string> merged_metadata(const TensorMap& first, MergeMethod method,
                                                   const LambdaWeights& weights,
                                                   const SlerpOptions* slerp_opts) {
    auto metadata = first.metadata;
    metadata["merge.method"] = std::string(merge_method_name(method));
    std::string lambdas;
    for (std::size_t i = 0; i < weights.lambdas.size(); ++i) {
        if (i) {
            lambdas += ",";
        }
        lambdas += format_double(weights.lambdas[i]);
    }
    metadata["merge.lambdas"] = lambdas;
    if (slerp_opts) {
        metadata["merge.angle_scope"] =
            slerp_opts->angle_scope == AngleScope::per_tensor ? "per_tensor" : "global";
    }
    return metadata;
}

// (1-t)*u + t*v, written so equal inputs and endpoints come back exact.
Eigen::ArrayXf linear_combo(const Eigen::Ref<const Eigen::ArrayXf>& u,
                            const Eigen::Ref<const Eigen::ArrayXf>& v, double t) {
    if (t == 0.0) {
        return u;
    }
    if (t == 1.0) {
        return v;
    }
    return u + static_cast<float>(t) * (v - u);
}

struct AngleStats {
    double dot = 0.0;
    double norm_u_sq = 0.0;
    double norm_v_sq = 0.0;

    void accumulate(const Eigen::Ref<const Eigen::ArrayXf>& u, const Eigen::Ref<const Eigen::ArrayXf>& v) {
        dot += (u.cast<double>() * v.cast<double>()).sum();
        norm_u_sq += u.cast<double>().square().sum();
        norm_v_sq += v.cast<double>().square().sum();
    }
};

struct AngleDecision {
    double omega = 0.0;
    SlerpFallback fallback = SlerpFallback::none;
    double coeff_u = 0.0; // used only when fallback == none
    double coeff_v = 0.0;
    bool flip_v = false;
};

AngleDecision classify_angle(const AngleStats& stats, double t, const SlerpOptions& opts,
                             const std::string& label) {
    AngleDecision d;
    const double nu = std::sqrt(stats.norm_u_sq);
    const double nv = std::sqrt(stats.norm_v_sq);
    if (nu == 0.0 || nv == 0.0) {
        d.fallback = SlerpFallback::linear_zero_norm;
        return d;
    }
    const double cos_omega = std::clamp(stats.dot / (nu * nv), -1.0, 1.0);
    d.omega = std::acos(cos_omega);
    if (1.0 - cos_omega < opts.parallel_epsilon) {
        d.fallback = SlerpFallback::linear_parallel;
        return d;
    }
    if (cos_omega <= -1.0 + opts.parallel_epsilon) {
        if (opts.antipodal_policy == AntipodalPolicy::error) {
            throw AntipodalTensors(label + ": inputs are nearly antipodal (cos omega = " +
                                   format_double(cos_omega) + ")");
        }
        // Flipping v's sign makes the pair nearly parallel, so the
        // interpolation itself degenerates to linear on (u, -v).
        d.fallback = SlerpFallback::sign_flipped;
        d.flip_v = true;
        return d;
    }
    const double sin_omega = std::sin(d.omega);
    d.coeff_u = std::sin((1.0 - t) * d.omega) / sin_omega;
    d.coeff_v = std::sin(t * d.omega) / sin_omega;
    return d;
}

Eigen::ArrayXf apply_decision(const AngleDecision& d, const Eigen::Ref<const Eigen::ArrayXf>& u,
                              const Eigen::Ref<const Eigen::ArrayXf>& v, double t) {
    if (d.flip_v) {
        return linear_combo(u, -v, t);
    }
    if (d.fallback != SlerpFallback::none) {
        return linear_combo(u, v, t);
    }
    if (t == 0.0) {
        return u;
    }
    if (t == 1.0) {
        return v;
    }
    return static_cast<float>(d.coeff_u) * u + static_cast<float>(d.coeff_v) * v;
}

} // namespace

TensorMap linear_merge(const std::vector<const TensorMap*>& inputs, const LambdaWeights& weights,
                       int jobs) {
    if (inputs.size() < 2) {
        throw IncompatibleInputs("linear merge needs at least 2 inputs");
    }
    weights.validate(inputs.size());
    for (std::size_t i = 1; i < inputs.size(); ++i) {
        require_compatible(*inputs[0], *inputs[i], i);
    }

    std::vector<std::string> names;
    names.reserve(inputs[0]->entries.size());
    for (const auto& [name, tensor] : inputs[0]->entries) {
        names.push_back(name);
    }
    std::vector<Tensor> merged(names.size());
    parallel_for(names.size(), jobs, [&](std::size_t idx) {
        const auto& name = names[idx];
        Eigen::ArrayXf acc;
        bool started = false;
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            const double l = weights.lambdas[i];
            if (l == 0.0) {
                continue; // zero-weight terms contribute nothing; skipping keeps endpoints exact
            }
            Eigen::ArrayXf term = inputs[i]->at(name).values();
            if (l != 1.0) {
                term *= static_cast<float>(l);
            }
            if (!started) {
                acc = std::move(term);
                started = true;
            } else {
                acc += term;
            }
        }
        if (!started) { // all-zero weights cannot pass validate(), but stay safe
            acc = Eigen::ArrayXf::Zero(inputs[0]->at(name).size());
        }
        merged[idx] = Tensor::from_values(inputs[0]->at(name).shape(), acc, DType::f32);
    });

    TensorMap out;
    out.metadata = merged_metadata(*inputs[0], MergeMethod::linear, weights, nullptr);
    for (std::size_t i = 0; i < names.size(); ++i) {
        out.put(names[i], std::move(merged[i]));
    }
    return out;
}

std::vector<const TensorMap*> map_ptrs(const std::vector<TensorMap>& maps) {
    std::vector<const TensorMap*> ptrs;
    ptrs.reserve(maps.size());
    for (const auto& m : maps) {
        ptrs.push_back(&m);
    }
    return ptrs;
}

std::pair<Eigen::ArrayXf, SlerpEntry> slerp_vector(const Eigen::Ref<const Eigen::ArrayXf>& u,
                                                   const Eigen::Ref<const Eigen::ArrayXf>& v, double t,
                                                   const SlerpOptions& opts) {
    if (u.size() != v.size()) {
        throw LengthMismatch("slerp inputs have " + std::to_string(u.size()) + " and " +
                             std::to_string(v.size()) + " elements");
    }
    AngleStats stats;
    stats.accumulate(u, v);
    const auto decision = classify_angle(stats, t, opts, "slerp_vector");
    SlerpEntry entry;
    entry.omega = decision.omega;
    entry.fallback = decision.fallback;
    return {apply_decision(decision, u, v, t), entry};
}

std::pair<TensorMap, SlerpDiagnostics> slerp_merge(const TensorMap& a, const TensorMap& b, double t,
                                                   const SlerpOptions& opts, int jobs) {
    if (t < 0.0 || t > 1.0) {
        throw InvalidWeights("slerp t = " + format_double(t) + " outside [0, 1]");
    }
    require_compatible(a, b, 1);

    std::vector<std::string> names;
    names.reserve(a.entries.size());
    for (const auto& [name, tensor] : a.entries) {
        names.push_back(name);
    }

    TensorMap out;
    out.metadata = merged_metadata(a, MergeMethod::slerp, LambdaWeights::from_scalar(t), &opts);
    SlerpDiagnostics diag;
    diag.entries.resize(names.size());
    std::vector<Tensor> merged(names.size());

    if (opts.angle_scope == AngleScope::global) {
        AngleStats stats;
        for (const auto& name : names) {
            stats.accumulate(a.at(name).values(), b.at(name).values());
        }
        const auto decision = classify_angle(stats, t, opts, "slerp_merge[global]");
        parallel_for(names.size(), jobs, [&](std::size_t i) {
            const auto& name = names[i];
            const Eigen::ArrayXf va = a.at(name).values();
            const Eigen::ArrayXf vb = b.at(name).values();
            merged[i] = Tensor::from_values(a.at(name).shape(), apply_decision(decision, va, vb, t),
                                            DType::f32);
            diag.entries[i] = {name, decision.omega, decision.fallback};
        });
    } else {
        parallel_for(names.size(), jobs, [&](std::size_t i) {
            const auto& name = names[i];
            const Eigen::ArrayXf va = a.at(name).values();
            const Eigen::ArrayXf vb = b.at(name).values();
            AngleStats stats;
            stats.accumulate(va, vb);
            const auto decision = classify_angle(stats, t, opts, "tensor '" + name + "'");
            merged[i] = Tensor::from_values(a.at(name).shape(), apply_decision(decision, va, vb, t),
                                            DType::f32);
            diag.entries[i] = {name, decision.omega, decision.fallback};
        });
    }

    for (std::size_t i = 0; i < names.size(); ++i) {
        out.put(names[i], std::move(merged[i]));
    }
    return {std::move(out), std::move(diag)};
}

std::pair<TensorMap, SlerpDiagnostics> merge_maps(const std::vector<const TensorMap*>& inputs,
                                                  MergeMethod method, const LambdaWeights& weights,
                                                  const SlerpOptions& opts, int jobs) {
    if (method == MergeMethod::linear) {
        return {linear_merge(inputs, weights, jobs), SlerpDiagnostics{}};
    }
    if (inputs.size() != 2) {
        throw IncompatibleInputs("slerp requires exactly 2 inputs, got " + std::to_string(inputs.size()));
    }
    weights.validate(2);
    return slerp_merge(*inputs[0], *inputs[1], weights.lambdas[1], opts, jobs);
}

namespace {

MergeRecipe recipe_from_json(const json& j) {
    MergeRecipe recipe;
    if (!j.is_object()) {
        throw SchemaViolation("recipe must be a JSON object");
    }
    if (!j.contains("inputs") || !j["inputs"].is_array() || j["inputs"].size() < 2) {
        throw SchemaViolation("recipe.inputs must list at least 2 checkpoints");
    }
    for (const auto& p : j["inputs"]) {
        recipe.inputs.emplace_back(p.get<std::string>());
    }
    const auto method = j.value("method", "slerp");
    if (method == "linear") {
        recipe.method = MergeMethod::linear;
    } else if (method == "slerp") {
        recipe.method = MergeMethod::slerp;
    } else {
        throw SchemaViolation("recipe.method must be 'linear' or 'slerp'");
    }
    if (j.contains("lambdas")) {
        recipe.weights.lambdas = j["lambdas"].get<std::vector<double>>();
    } else if (j.contains("lambda")) {
        // scalar form: weight of the last-listed input
        if (recipe.inputs.size() != 2) {
            throw SchemaViolation("scalar lambda requires exactly 2 inputs");
        }
        recipe.weights = LambdaWeights::from_scalar(j["lambda"].get<double>());
    } else {
        throw SchemaViolation("recipe needs 'lambda' or 'lambdas'");
    }
    if (j.contains("slerp")) {
        const auto& s = j["slerp"];
        recipe.slerp.parallel_epsilon = s.value("parallel_epsilon", recipe.slerp.parallel_epsilon);
        if (recipe.slerp.parallel_epsilon <= 0.0 || recipe.slerp.parallel_epsilon >= 1.0) {
            throw SchemaViolation("slerp.parallel_epsilon must lie in (0, 1)");
        }
        const auto pol = s.value("antipodal_policy", "error");
        if (pol == "error") {
            recipe.slerp.antipodal_policy = AntipodalPolicy::error;
        } else if (pol == "flip_sign") {
            recipe.slerp.antipodal_policy = AntipodalPolicy::flip_sign;
        } else {
            throw SchemaViolation("slerp.antipodal_policy must be 'error' or 'flip_sign'");
        }
        const auto scope = s.value("angle_scope", "per_tensor");
        if (scope == "per_tensor") {
            recipe.slerp.angle_scope = AngleScope::per_tensor;
        } else if (scope == "global") {
            recipe.slerp.angle_scope = AngleScope::global;
        } else {
            throw SchemaViolation("slerp.angle_scope must be 'per_tensor' or 'global'");
        }
    }
    if (j.contains("output")) {
        recipe.output = j["output"].get<std::string>();
    }
    const auto policy = j.value("dtype_policy", "preserve");
    if (policy == "preserve") {
        recipe.dtype_policy = DtypePolicy::preserve;
    } else if (policy == "force_f32") {
        recipe.dtype_policy = DtypePolicy::force_f32;
    } else {
        throw SchemaViolation("recipe.dtype_policy must be 'preserve' or 'force_f32'");
    }
    recipe.strict_finite = j.value("strict_finite", false);
    return recipe;
}

} // namespace

MergeRecipe parse_recipe_json(const std::string& text) {
    const json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) {
        throw SchemaViolation("recipe is not valid JSON");
    }
    return recipe_from_json(j);
}

MergeRecipe parse_recipe_file(const std::filesystem::path& path) {
    return parse_recipe_json(read_text_file(path));
}

MergeOutcome run_recipe(const MergeRecipe& recipe, int jobs) {
    std::vector<TensorMap> maps;
    maps.reserve(recipe.inputs.size());
    for (const auto& p : recipe.inputs) {
        maps.push_back(read_checkpoint(p));
    }
    std::vector<const TensorMap*> ptrs;
    for (const auto& m : maps) {
        ptrs.push_back(&m);
    }
    auto [merged, diag] = merge_maps(ptrs, recipe.method, recipe.weights, recipe.slerp, jobs);

    std::string joined;
    for (std::size_t i = 0; i < recipe.inputs.size(); ++i) {
        if (i) {
            joined += ",";
        }
        joined += recipe.inputs[i].filename().string();
    }
    merged.metadata["merge.inputs"] = joined;

    if (recipe.output.empty()) {
        throw SchemaViolation("recipe has no output path");
    }
    WriteOptions wo;
    wo.dtype_policy = recipe.dtype_policy;
    wo.strict_finite = recipe.strict_finite;
    write_checkpoint(merged, recipe.output, wo);

    MergeOutcome outcome;
    outcome.diagnostics = std::move(diag);
    outcome.output_digest = map_content_digest(merged);
    return outcome;
}

} // namespace mergelab
