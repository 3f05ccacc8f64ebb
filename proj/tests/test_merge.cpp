#include "mergelab/merge.hpp"

#include "mergelab/error.hpp"
#include "mergelab/util.hpp"
#include "oracles.hpp"
#include "testutil.hpp"

#include "doctest.h"

#include <cmath>
#include <random>

using namespace mergelab;

namespace {

Eigen::ArrayXf arr(std::initializer_list<float> values) {
    Eigen::ArrayXf out(static_cast<Eigen::Index>(values.size()));
    Eigen::Index i = 0;
    for (const float v : values) {
        out[i++] = v;
    }
    return out;
}

TensorMap scalar_map(float value) {
    TensorMap map;
    map.put("w", Tensor::from_values({1}, arr({value})));
    return map;
}

} // namespace

TEST_CASE("linear merge endpoint identity") {
    std::mt19937_64 rng(21);
    const auto a = test_util::random_map(rng, 3, 6);
    const auto b = test_util::random_map_like(rng, a);
    const auto out = linear_merge({&a, &b}, {{1.0, 0.0}});
    for (const auto& [name, tensor] : a.entries) {
        CHECK((out.at(name).values() == tensor.values()).all());
    }
    const auto out_b = linear_merge({&a, &b}, {{0.0, 1.0}});
    for (const auto& [name, tensor] : b.entries) {
        CHECK((out_b.at(name).values() == tensor.values()).all());
    }
}

TEST_CASE("linear merge scalar cases") {
    const auto half = linear_merge(map_ptrs({scalar_map(2.0f), scalar_map(4.0f)}), {{0.5, 0.5}});
    CHECK(half.at("w").values()[0] == 3.0f);

    const auto thirds = linear_merge(map_ptrs({scalar_map(0.0f), scalar_map(3.0f), scalar_map(6.0f)}),
                                     {{1.0 / 3, 1.0 / 3, 1.0 / 3}});
    CHECK(thirds.at("w").values()[0] == doctest::Approx(3.0f).epsilon(1e-6));
}

TEST_CASE("linear merge matches elementwise brute-force oracle") {
    std::mt19937_64 rng(22);
    for (int trial = 0; trial < 20; ++trial) {
        const auto a = test_util::random_map(rng, 2, 5);
        const auto b = test_util::random_map_like(rng, a);
        const auto c = test_util::random_map_like(rng, a);
        const double l0 = rng_unit(rng);
        const double l1 = rng_unit(rng) * (1.0 - l0);
        const double l2 = 1.0 - l0 - l1;
        const auto out = linear_merge({&a, &b, &c}, {{l0, l1, l2}});
        for (const auto& [name, tensor] : a.entries) {
            const auto va = tensor.values();
            const auto vb = b.at(name).values();
            const auto vc = c.at(name).values();
            const auto vo = out.at(name).values();
            for (Eigen::Index i = 0; i < va.size(); ++i) {
                const double expected = l0 * va[i] + l1 * vb[i] + l2 * vc[i];
                CHECK(vo[i] == doctest::Approx(expected).epsilon(1e-5));
            }
        }
    }
}

TEST_CASE("linear merge convexity") {
    std::mt19937_64 rng(23);
    const auto a = test_util::random_map(rng, 2, 8);
    const auto b = test_util::random_map_like(rng, a);
    for (const double l : {0.1, 0.3, 0.5, 0.7, 0.9}) {
        const auto out = linear_merge({&a, &b}, LambdaWeights::from_scalar(l));
        for (const auto& [name, tensor] : out.entries) {
            const auto va = a.at(name).values();
            const auto vb = b.at(name).values();
            const auto vo = tensor.values();
            for (Eigen::Index i = 0; i < vo.size(); ++i) {
                const float lo = std::min(va[i], vb[i]);
                const float hi = std::max(va[i], vb[i]);
                const float slack = 4e-7f * std::max(1.0f, std::max(std::abs(lo), std::abs(hi)));
                CHECK(vo[i] >= lo - slack);
                CHECK(vo[i] <= hi + slack);
            }
        }
    }
}

TEST_CASE("weight validation") {
    const auto a = scalar_map(1.0f);
    const auto b = scalar_map(2.0f);
    CHECK_THROWS_AS(linear_merge(map_ptrs({a, b}), {{0.5, 0.6}}), InvalidWeights);
    CHECK_THROWS_AS(linear_merge(map_ptrs({a, b}), {{-0.1, 1.1}}), InvalidWeights);
    CHECK_THROWS_AS(linear_merge(map_ptrs({a, b}), {{1.0}}), InvalidWeights);
    CHECK_THROWS_AS(linear_merge(map_ptrs({a}), {{1.0}}), IncompatibleInputs);
}

TEST_CASE("incompatible inputs carry the report") {
    TensorMap a = scalar_map(1.0f);
    TensorMap b;
    b.put("w", Tensor::from_values({2}, arr({1, 2})));
    CHECK_THROWS_AS(linear_merge({&a, &b}, {{0.5, 0.5}}), IncompatibleInputs);
}

TEST_CASE("slerp_vector quarter-circle midpoint") {
    const auto [out, entry] = slerp_vector(arr({1, 0}), arr({0, 1}), 0.5);
    CHECK(entry.fallback == SlerpFallback::none);
    CHECK(entry.omega == doctest::Approx(M_PI / 2).epsilon(1e-12));
    CHECK(out[0] == doctest::Approx(std::sqrt(2.0) / 2).epsilon(1e-6));
    CHECK(out[1] == doctest::Approx(std::sqrt(2.0) / 2).epsilon(1e-6));
}

TEST_CASE("slerp_vector quarter point matches the arc-rotation oracle") {
    const auto expected = oracle::slerp_arc_equal_norm({1, 0}, {0, 1}, 0.25);
    CHECK(expected[0] == doctest::Approx(0.9238795).epsilon(1e-6));
    CHECK(expected[1] == doctest::Approx(0.3826834).epsilon(1e-6));
    const auto [out, entry] = slerp_vector(arr({1, 0}), arr({0, 1}), 0.25);
    CHECK(out[0] == doctest::Approx(expected[0]).epsilon(1e-6));
    CHECK(out[1] == doctest::Approx(expected[1]).epsilon(1e-6));
}

TEST_CASE("slerp_vector endpoints are exact") {
    std::mt19937_64 rng(24);
    const auto u = test_util::random_values(rng, 64);
    const auto v = test_util::random_values(rng, 64);
    const auto [at0, e0] = slerp_vector(u, v, 0.0);
    const auto [at1, e1] = slerp_vector(u, v, 1.0);
    CHECK((at0 == u).all());
    CHECK((at1 == v).all());
}

TEST_CASE("slerp fallbacks") {
    std::mt19937_64 rng(25);
    const auto u = test_util::random_values(rng, 16);

    SUBCASE("zero norm") {
        const auto [out, entry] = slerp_vector(Eigen::ArrayXf::Zero(16), u, 0.5);
        CHECK(entry.fallback == SlerpFallback::linear_zero_norm);
        CHECK((out == (0.5f * u).eval()).all());
    }
    SUBCASE("parallel inputs") {
        const auto [out, entry] = slerp_vector(u, u, 0.3);
        CHECK(entry.fallback == SlerpFallback::linear_parallel);
        CHECK((out == u).all());
    }
    SUBCASE("antipodal inputs error by default") {
        const Eigen::ArrayXf nu = -u;
        CHECK_THROWS_AS(slerp_vector(u, nu, 0.5), AntipodalTensors);
    }
    SUBCASE("antipodal flip_sign") {
        SlerpOptions opts;
        opts.antipodal_policy = AntipodalPolicy::flip_sign;
        const Eigen::ArrayXf nu = -u;
        const auto [out, entry] = slerp_vector(u, nu, 0.25, opts);
        CHECK(entry.fallback == SlerpFallback::sign_flipped);
        CHECK(entry.omega == doctest::Approx(M_PI).epsilon(1e-6));
        // interpolation proceeds against -v == u
        CHECK((out == u).all());
    }
    SUBCASE("length mismatch") {
        CHECK_THROWS_AS(slerp_vector(u, Eigen::ArrayXf::Zero(4), 0.5), LengthMismatch);
    }
}

TEST_CASE("slerp of a map with itself is the identity with parallel flags") {
    std::mt19937_64 rng(26);
    const auto a = test_util::random_map(rng, 3, 5);
    for (const double t : {0.0, 0.3, 0.7, 1.0}) {
        const auto [out, diag] = slerp_merge(a, a, t);
        for (const auto& [name, tensor] : a.entries) {
            CHECK((out.at(name).values() == tensor.values()).all());
        }
        for (const auto& entry : diag.entries) {
            CHECK(entry.fallback == SlerpFallback::linear_parallel);
        }
    }
}

TEST_CASE("equal-norm slerp preserves the norm") {
    std::mt19937_64 rng(27);
    for (int trial = 0; trial < 25; ++trial) {
        const auto n = static_cast<Eigen::Index>(8 + rng_below(rng, 120));
        Eigen::ArrayXf u = test_util::random_values(rng, n);
        Eigen::ArrayXf v = test_util::random_values(rng, n);
        const double r = std::sqrt(u.cast<double>().square().sum());
        v *= static_cast<float>(r / std::sqrt(v.cast<double>().square().sum()));
        for (double t = 0.0; t <= 1.0 + 1e-9; t += 0.1) {
            const auto [out, entry] = slerp_vector(u, v, t);
            const double norm = std::sqrt(out.cast<double>().square().sum());
            CHECK(norm == doctest::Approx(r).epsilon(1e-5));
        }
    }
}

TEST_CASE("slerp agrees with the arc-rotation oracle on random equal-norm pairs") {
    std::mt19937_64 rng(28);
    for (int trial = 0; trial < 10; ++trial) {
        const Eigen::Index n = 24;
        Eigen::ArrayXf u = test_util::random_values(rng, n);
        Eigen::ArrayXf v = test_util::random_values(rng, n);
        const double r = std::sqrt(u.cast<double>().square().sum());
        v *= static_cast<float>(r / std::sqrt(v.cast<double>().square().sum()));
        std::vector<double> ud(u.data(), u.data() + n);
        std::vector<double> vd(v.data(), v.data() + n);
        for (const double t : {0.2, 0.5, 0.8}) {
            const auto expected = oracle::slerp_arc_equal_norm(ud, vd, t);
            const auto [out, entry] = slerp_vector(u, v, t);
            for (Eigen::Index i = 0; i < n; ++i) {
                CHECK(out[i] == doctest::Approx(expected[static_cast<std::size_t>(i)]).epsilon(2e-5));
            }
        }
    }
}

TEST_CASE("near-parallel slerp collapses to linear") {
    std::mt19937_64 rng(29);
    const Eigen::Index n = 64;
    const Eigen::ArrayXf u = test_util::random_values(rng, n);
    Eigen::ArrayXf v = u;
    v[0] += 1e-6f; // tiny angle
    const double max_mag = std::max(u.abs().maxCoeff(), v.abs().maxCoeff());
    for (const double t : {0.25, 0.5, 0.75}) {
        const auto [s, entry] = slerp_vector(u, v, t);
        const Eigen::ArrayXf lin = (1.0f - static_cast<float>(t)) * u + static_cast<float>(t) * v;
        CHECK((s - lin).abs().maxCoeff() <= 1e-6 * max_mag);
    }
}

TEST_CASE("global angle scope applies one set of coefficients") {
    std::mt19937_64 rng(30);
    const auto a = test_util::random_map(rng, 3, 6);
    const auto b = test_util::random_map_like(rng, a);
    SlerpOptions opts;
    opts.angle_scope = AngleScope::global;
    const auto [out, diag] = slerp_merge(a, b, 0.4, opts);

    // one omega across all tensors
    REQUIRE(!diag.entries.empty());
    for (const auto& entry : diag.entries) {
        CHECK(entry.omega == diag.entries.front().omega);
    }
    // the global omega comes from the concatenation of all tensors
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (const auto& [name, tensor] : a.entries) {
        const auto va = tensor.values().cast<double>().eval();
        const auto vb = b.at(name).values().cast<double>().eval();
        dot += (va * vb).sum();
        na += va.square().sum();
        nb += vb.square().sum();
    }
    const double omega = std::acos(std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0));
    CHECK(diag.entries.front().omega == doctest::Approx(omega).epsilon(1e-12));

    const double cu = std::sin(0.6 * omega) / std::sin(omega);
    const double cv = std::sin(0.4 * omega) / std::sin(omega);
    for (const auto& [name, tensor] : out.entries) {
        const Eigen::ArrayXf expected =
            static_cast<float>(cu) * a.at(name).values() + static_cast<float>(cv) * b.at(name).values();
        CHECK((tensor.values() == expected).all());
    }
}

TEST_CASE("merge determinism: same inputs give identical bytes") {
    std::mt19937_64 rng(31);
    const auto a = test_util::random_map(rng, 3, 6);
    const auto b = test_util::random_map_like(rng, a);
    const auto [m1, d1] = slerp_merge(a, b, 0.4, {}, /*jobs=*/1);
    const auto [m2, d2] = slerp_merge(a, b, 0.4, {}, /*jobs=*/4);
    CHECK(serialize_checkpoint(m1) == serialize_checkpoint(m2));
    const auto l1 = linear_merge({&a, &b}, LambdaWeights::from_scalar(0.3));
    const auto l2 = linear_merge({&a, &b}, LambdaWeights::from_scalar(0.3));
    CHECK(serialize_checkpoint(l1) == serialize_checkpoint(l2));
}

TEST_CASE("recipe parsing and end-to-end run at lambda 0.4") {
    std::mt19937_64 rng(32);
    TempDir tmp;
    const auto a_path = tmp.path() / "instruct.ckpt";
    const auto b_path = tmp.path() / "math.ckpt";
    const auto a = test_util::random_map(rng, 4, 8);
    const auto b = test_util::random_map_like(rng, a);
    write_checkpoint(a, a_path);
    write_checkpoint(b, b_path);

    const std::string recipe_json = std::string("{") + "\"inputs\": [\"" + a_path.string() + "\", \"" +
                                    b_path.string() + "\"]," +
                                    R"("method": "slerp", "lambda": 0.4, "output": ")" +
                                    (tmp.path() / "merged.ckpt").string() + "\"}";
    const auto recipe = parse_recipe_json(recipe_json);
    CHECK(recipe.method == MergeMethod::slerp);
    CHECK(recipe.weights.lambdas[0] == doctest::Approx(0.6));
    CHECK(recipe.weights.lambdas[1] == doctest::Approx(0.4));

    const auto outcome = run_recipe(recipe);
    CHECK(outcome.diagnostics.entries.size() == a.entries.size());
    for (const auto& entry : outcome.diagnostics.entries) {
        CHECK(entry.omega > 0.0);
        CHECK(entry.omega < M_PI);
    }
    const auto merged = read_checkpoint(recipe.output);
    CHECK(merged.metadata.at("merge.method") == "slerp");
    CHECK(merged.metadata.at("merge.lambdas") == "0.6,0.4");

    // identity recipe: lambda 1 reproduces the last-listed input's parameters
    const std::string id_json = std::string("{") + "\"inputs\": [\"" + a_path.string() + "\", \"" +
                                b_path.string() + "\"]," +
                                R"("method": "linear", "lambda": 1.0, "output": ")" +
                                (tmp.path() / "identity.ckpt").string() + "\"}";
    const auto id_outcome = run_recipe(parse_recipe_json(id_json));
    CHECK(id_outcome.output_digest == map_content_digest(b));
}

TEST_CASE("recipe schema violations") {
    CHECK_THROWS_AS(parse_recipe_json("not json"), SchemaViolation);
    CHECK_THROWS_AS(parse_recipe_json(R"({"inputs": ["only_one"]})"), SchemaViolation);
    CHECK_THROWS_AS(parse_recipe_json(R"({"inputs": ["a", "b"], "method": "ties"})"), SchemaViolation);
    CHECK_THROWS_AS(parse_recipe_json(R"({"inputs": ["a", "b"]})"), SchemaViolation);
    CHECK_THROWS_AS(
        parse_recipe_json(R"({"inputs": ["a", "b"], "lambda": 0.4, "slerp": {"parallel_epsilon": 2}})"),
        SchemaViolation);
}

TEST_CASE("slerp rejects t outside the unit interval") {
    std::mt19937_64 rng(33);
    const auto a = test_util::random_map(rng, 1, 3);
    const auto b = test_util::random_map_like(rng, a);
    CHECK_THROWS_AS(slerp_merge(a, b, 1.5), InvalidWeights);
    CHECK_THROWS_AS(slerp_merge(a, b, -0.1), InvalidWeights);
}
