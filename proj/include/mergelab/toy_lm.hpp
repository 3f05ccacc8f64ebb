#pragma once

#include "mergelab/tensor_store.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace mergelab {

// Character-level bigram model with add-alpha smoothing. Parameters are a
// single [V,V] logit tensor stored in the regular checkpoint container, so
// the whole merge -> evaluate -> sweep pipeline runs on it at desk scale.
// Rows are contexts, columns next symbols; index 0 is BOS. Rows are NOT
// kept normalized: inference always softmaxes, so merged (unnormalized)
// logits behave like any other merged weights.
class ToyLm {
  public:
    static constexpr const char* kLogitsName = "bigram.logits";

    static ToyLm train(const std::vector<std::string>& corpus, double alpha);

    int vocab_size() const { return static_cast<int>(symbols_.size()) + 1; }
    const std::string& symbols() const { return symbols_; } // excludes BOS
    double alpha() const { return alpha_; }

    // index 0 = BOS; characters map to 1..V-1.
    std::optional<int> symbol_index(char c) const;

    Eigen::ArrayXd next_token_distribution(int context_index) const;
    Eigen::ArrayXd next_token_distribution(char context_symbol) const;

    struct PplResult {
        double perplexity = 0.0;
        std::int64_t n_tokens = 0;
        double nll_sum = 0.0;
    };
    // exp(mean NLL) over the characters of text, context chain starting at
    // BOS. Lenient mode maps unknown characters to BOS instead of throwing.
    PplResult perplexity(std::string_view text, bool lenient = false) const;

    // p(pos) / (p(pos) + p(neg)) out of the context row.
    double yes_no_score(char context_symbol, char pos_symbol, char neg_symbol) const;

    TensorMap to_tensor_map() const;
    static ToyLm from_tensor_map(const TensorMap& map);

    using MatrixRow = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const MatrixRow& logits() const { return logits_; }

  private:
    ToyLm() = default;

    std::string symbols_;
    double alpha_ = 1.0;
    MatrixRow logits_;
};

} // namespace mergelab
