#pragma once

#include "mergelab/tensor_store.hpp"

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace mergelab {

enum class MergeMethod { linear, slerp };

std::string_view merge_method_name(MergeMethod m);

// Merge coefficients. Must sum to 1 (tolerance 1e-9) and be non-negative;
// 0 and 1 are allowed so identity merges are expressible.
struct LambdaWeights {
    std::vector<double> lambdas;

    void validate(std::size_t n_inputs) const; // throws InvalidWeights

    // Convention used throughout: a scalar lambda is the weight of the
    // LAST-listed input, 1-lambda of the first.
    static LambdaWeights from_scalar(double lambda) { return {{1.0 - lambda, lambda}}; }
};

enum class AntipodalPolicy { error, flip_sign };
enum class AngleScope { per_tensor, global };

struct SlerpOptions {
    double parallel_epsilon = 1e-8; // 1-cos(omega) below this falls back to linear
    AntipodalPolicy antipodal_policy = AntipodalPolicy::error;
    AngleScope angle_scope = AngleScope::per_tensor;
};

enum class SlerpFallback { none, linear_parallel, linear_zero_norm, sign_flipped };

std::string_view slerp_fallback_name(SlerpFallback f);

struct SlerpEntry {
    std::string name;
    double omega = 0.0; // radians, angle between the (flattened) inputs
    SlerpFallback fallback = SlerpFallback::none;
};

struct SlerpDiagnostics {
    std::vector<SlerpEntry> entries; // one per tensor, name order
};

// out[t][j] = sum_i lambda_i * in_i[t][j], accumulated in f32 in input
// order. Tensors are independent, so `jobs` may fan them out.
TensorMap linear_merge(const std::vector<const TensorMap*>& inputs, const LambdaWeights& weights,
                       int jobs = 1);

// borrow pointers from a map collection (valid for the full expression)
std::vector<const TensorMap*> map_ptrs(const std::vector<TensorMap>& maps);

// Interpolates along the arc between u and v; t is the weight of v.
// Near-parallel and zero-norm inputs fall back to linear interpolation,
// near-antipodal inputs follow opts.antipodal_policy.
std::pair<Eigen::ArrayXf, SlerpEntry> slerp_vector(const Eigen::Ref<const Eigen::ArrayXf>& u,
                                                   const Eigen::Ref<const Eigen::ArrayXf>& v, double t,
                                                   const SlerpOptions& opts = {});

std::pair<TensorMap, SlerpDiagnostics> slerp_merge(const TensorMap& a, const TensorMap& b, double t,
                                                   const SlerpOptions& opts = {}, int jobs = 1);

struct MergeRecipe {
    std::vector<std::filesystem::path> inputs;
    MergeMethod method = MergeMethod::slerp;
    LambdaWeights weights;
    SlerpOptions slerp;
    std::filesystem::path output;
    DtypePolicy dtype_policy = DtypePolicy::preserve;
    bool strict_finite = false;
};

MergeRecipe parse_recipe_file(const std::filesystem::path& path);
MergeRecipe parse_recipe_json(const std::string& text);

struct MergeOutcome {
    SlerpDiagnostics diagnostics;      // empty for linear merges
    std::string output_digest;         // content digest of the merged parameters
};

// Loads inputs, merges, writes recipe.output. `jobs` caps per-tensor workers.
MergeOutcome run_recipe(const MergeRecipe& recipe, int jobs = 1);

// In-memory variant used by the sweep; writes nothing.
std::pair<TensorMap, SlerpDiagnostics> merge_maps(const std::vector<const TensorMap*>& inputs,
                                                  MergeMethod method, const LambdaWeights& weights,
                                                  const SlerpOptions& opts, int jobs = 1);

} // namespace mergelab
