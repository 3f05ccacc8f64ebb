#include "mergelab/toy_lm.hpp"

#include "mergelab/error.hpp"
#include "mergelab/fixtures.hpp"
#include "mergelab/merge.hpp"
#include "mergelab/util.hpp"

#include "doctest.h"

#include <algorithm>
#include <cmath>

using namespace mergelab;

namespace {

// uniform model: all-equal logits over a given symbol set
ToyLm uniform_model(const std::string& symbols) {
    TensorMap map;
    const auto v = static_cast<std::int64_t>(symbols.size()) + 1;
    map.put(ToyLm::kLogitsName, Tensor::from_values({v, v}, Eigen::ArrayXf::Zero(v * v)));
    std::string hex;
    for (const unsigned char c : symbols) {
        const char digits[] = "0123456789abcdef";
        hex.push_back(digits[c >> 4]);
        hex.push_back(digits[c & 0xF]);
    }
    map.metadata["toylm.vocab_hex"] = hex;
    map.metadata["toylm.alpha"] = "1";
    return ToyLm::from_tensor_map(map);
}

} // namespace

TEST_CASE("training counts with smoothing") {
    const auto model = ToyLm::train({"abab"}, 1.0);
    CHECK(model.vocab_size() == 3); // BOS, a, b
    CHECK(model.symbols() == "ab");

    // a -> b twice out of two transitions from a: (2+1)/(2+3)
    const auto row_a = model.next_token_distribution('a');
    CHECK(row_a[*model.symbol_index('b')] == doctest::Approx(0.6).epsilon(1e-6));
    CHECK(row_a[*model.symbol_index('a')] == doctest::Approx(0.2).epsilon(1e-6));
    CHECK(row_a[0] == doctest::Approx(0.2).epsilon(1e-6));
}

TEST_CASE("unseen context row is uniform") {
    const auto model = ToyLm::train({"ab"}, 1.0); // row 'b' has no outgoing counts
    const auto row = model.next_token_distribution('b');
    for (Eigen::Index i = 0; i < row.size(); ++i) {
        CHECK(row[i] == doctest::Approx(1.0 / 3).epsilon(1e-9));
    }
}

TEST_CASE("training is deterministic down to the checkpoint bytes") {
    const std::vector<std::string> corpus = {"hello", "world", "42"};
    const auto a = ToyLm::train(corpus, 0.5);
    const auto b = ToyLm::train(corpus, 0.5);
    CHECK(serialize_checkpoint(a.to_tensor_map()) == serialize_checkpoint(b.to_tensor_map()));
}

TEST_CASE("distribution rows sum to one") {
    const auto model = ToyLm::train({"abcabc", "cab"}, 0.7);
    for (int i = 0; i < model.vocab_size(); ++i) {
        const auto row = model.next_token_distribution(i);
        CHECK(std::abs(row.sum() - 1.0) < 1e-12);
        CHECK((row > 0.0).all());
        CHECK((row < 1.0).all());
    }
}

TEST_CASE("uniform model perplexity equals vocab size") {
    const auto model = uniform_model("abc");
    CHECK(model.perplexity("abcba").perplexity == doctest::Approx(4.0).epsilon(1e-9));
}

TEST_CASE("perplexity composes from trained probabilities") {
    const auto model = ToyLm::train({"abab"}, 1.0);
    // p(a|BOS) = (1+1)/(1+3), p(b|a) = (2+1)/(2+3)
    const double expected = std::exp(-(std::log(0.5) + std::log(0.6)) / 2.0);
    const auto result = model.perplexity("ab");
    CHECK(result.perplexity == doctest::Approx(expected).epsilon(1e-6));
    CHECK(result.n_tokens == 2);
    CHECK(result.nll_sum == doctest::Approx(-(std::log(0.5) + std::log(0.6))).epsilon(1e-6));
}

TEST_CASE("near-deterministic model drives perplexity toward one") {
    // huge alpha-free contrast: the only transitions ever seen
    std::vector<std::string> corpus(50, "ababab");
    const auto model = ToyLm::train(corpus, 1e-6);
    CHECK(model.perplexity("ababab").perplexity == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("unknown symbols: strict throws, lenient maps to BOS") {
    const auto model = ToyLm::train({"abab"}, 1.0);
    CHECK_THROWS_AS(model.perplexity("abz"), UnknownSymbol);
    CHECK_THROWS_AS(model.next_token_distribution('z'), UnknownSymbol);
    const auto lenient = model.perplexity("abz", /*lenient=*/true);
    CHECK(lenient.n_tokens == 3);
}

TEST_CASE("yes_no_score") {
    SUBCASE("symmetric row gives 0.5") {
        const auto model = uniform_model("ny");
        CHECK(model.yes_no_score('n', 'y', 'n') == doctest::Approx(0.5).epsilon(1e-12));
    }
    SUBCASE("0.6 vs 0.2 gives 0.75") {
        TensorMap map;
        Eigen::ArrayXf logits(9);
        // row for context 'a' (index 1): p = (0.2, 0.6, 0.2) over (BOS, n, y)? vocab "ny": indices
        // BOS=0, n=1, y=2. Build logits as ln p with p(y)=0.6, p(n)=0.2, p(BOS)=0.2.
        const float ln02 = std::log(0.2f);
        const float ln06 = std::log(0.6f);
        logits << ln02, ln02, ln06, ln02, ln02, ln06, ln02, ln02, ln06;
        map.put(ToyLm::kLogitsName, Tensor::from_values({3, 3}, logits));
        map.metadata["toylm.vocab_hex"] = "6e79"; // "ny"
        const auto model = ToyLm::from_tensor_map(map);
        CHECK(model.yes_no_score('n', 'y', 'n') == doctest::Approx(0.75).epsilon(1e-6));
    }
    SUBCASE("untrained pair scores 0.5") {
        const auto model = ToyLm::train({"ynq"}, 1.0); // 'q' row unseen
        CHECK(model.yes_no_score('q', 'y', 'n') == doctest::Approx(0.5).epsilon(1e-9));
    }
    SUBCASE("unknown symbol") {
        const auto model = uniform_model("ny");
        CHECK_THROWS_AS(model.yes_no_score('n', 'z', 'n'), UnknownSymbol);
    }
}

TEST_CASE("checkpoint round trip through a file") {
    TempDir tmp;
    const auto model = ToyLm::train({"the quick brown fox", "jumps over 42"}, 1.0);
    const auto path = tmp.path() / "toy.ckpt";
    write_checkpoint(model.to_tensor_map(), path);
    const auto back = ToyLm::from_tensor_map(read_checkpoint(path));
    CHECK(back.symbols() == model.symbols());
    CHECK(back.alpha() == model.alpha());
    CHECK((back.logits().array() == model.logits().array()).all());
}

TEST_CASE("training rejects empty corpora") {
    CHECK_THROWS_AS(ToyLm::train({}, 1.0), EmptyCorpus);
    CHECK_THROWS_AS(ToyLm::train({""}, 1.0), EmptyCorpus);
    CHECK_THROWS_AS(ToyLm::train({"ab"}, 0.0), EmptyCorpus);
    const auto model = ToyLm::train({"ab"}, 1.0);
    CHECK_THROWS_AS(model.perplexity(""), EmptyCorpus);
}

TEST_CASE("merging toy checkpoints at the endpoints reproduces each model") {
    const auto fx = make_domain_fixture(17);
    const auto a = ToyLm::train(fx.letter_corpus, 1.0);
    const auto b = ToyLm::train(fx.digit_corpus, 1.0);
    REQUIRE(a.symbols() == b.symbols());
    const auto map_a = a.to_tensor_map();
    const auto map_b = b.to_tensor_map();

    const std::string probe = fx.mixed_heldout.front();
    const auto merged0 = ToyLm::from_tensor_map(linear_merge({&map_a, &map_b}, {{1.0, 0.0}}));
    const auto merged1 = ToyLm::from_tensor_map(linear_merge({&map_a, &map_b}, {{0.0, 1.0}}));
    CHECK(merged0.perplexity(probe).perplexity == a.perplexity(probe).perplexity);
    CHECK(merged1.perplexity(probe).perplexity == b.perplexity(probe).perplexity);
}

TEST_CASE("merged models keep normalized rows and an interior optimum") {
    const auto fx = make_domain_fixture(17);
    const auto map_a = ToyLm::train(fx.letter_corpus, 1.0).to_tensor_map();
    const auto map_b = ToyLm::train(fx.digit_corpus, 1.0).to_tensor_map();

    auto mixed_ppl = [&](const ToyLm& model) {
        double nll = 0.0;
        std::int64_t tokens = 0;
        for (const auto& doc : fx.mixed_heldout) {
            const auto r = model.perplexity(doc);
            nll += r.nll_sum;
            tokens += r.n_tokens;
        }
        return std::exp(nll / static_cast<double>(tokens));
    };

    std::vector<double> ppl;
    for (int i = 0; i <= 10; ++i) {
        const double lambda = 0.1 * i;
        const auto merged =
            ToyLm::from_tensor_map(linear_merge({&map_a, &map_b}, LambdaWeights::from_scalar(lambda)));
        // rows stay normalized even though merged logits are not
        const auto row = merged.next_token_distribution(0);
        CHECK(std::abs(row.sum() - 1.0) < 1e-12);
        ppl.push_back(mixed_ppl(merged));
    }
    const double best_interior = *std::min_element(ppl.begin() + 1, ppl.end() - 1);
    CHECK(best_interior < ppl.front());
    CHECK(best_interior < ppl.back());

    // slerp shows the same shape
    std::vector<double> ppl_slerp;
    for (int i = 0; i <= 10; ++i) {
        auto [merged, diag] = slerp_merge(map_a, map_b, 0.1 * i);
        ppl_slerp.push_back(mixed_ppl(ToyLm::from_tensor_map(merged)));
    }
    const double best_slerp = *std::min_element(ppl_slerp.begin() + 1, ppl_slerp.end() - 1);
    CHECK(best_slerp < ppl_slerp.front());
    CHECK(best_slerp < ppl_slerp.back());
}
