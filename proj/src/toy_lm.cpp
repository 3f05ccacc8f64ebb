#include "mergelab/toy_lm.hpp"

#include "mergelab/error.hpp"
#include "mergelab/util.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace mergelab {

namespace {

std::string hex_encode(std::string_view s) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(s.size() * 2);
    for (const unsigned char c : s) {
        out.push_back(digits[c >> 4]);
        out.push_back(digits[c & 0xF]);
    }
    return out;
}

std::string hex_decode(std::string_view s) {
    if (s.size() % 2 != 0) {
        throw SchemaViolation("vocab hex string has odd length");
    }
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') {
            return c - '0';
        }
        if (c >= 'a' && c <= 'f') {
            return c - 'a' + 10;
        }
        if (c >= 'A' && c <= 'F') {
            return c - 'A' + 10;
        }
        throw SchemaViolation("vocab hex string has invalid digit");
    };
    std::string out;
    out.reserve(s.size() / 2);
    for (std::size_t i = 0; i < s.size(); i += 2) {
        out.push_back(static_cast<char>((nibble(s[i]) << 4) | nibble(s[i + 1])));
    }
    return out;
}

} // namespace

ToyLm ToyLm::train(const std::vector<std::string>& corpus, double alpha) {
    if (corpus.empty() || alpha <= 0.0) {
        throw EmptyCorpus("training needs a non-empty corpus and alpha > 0");
    }
    std::set<char> chars;
    for (const auto& doc : corpus) {
        chars.insert(doc.begin(), doc.end());
    }
    if (chars.empty()) {
        throw EmptyCorpus("corpus holds no characters");
    }

    ToyLm model;
    model.symbols_.assign(chars.begin(), chars.end()); // sorted by std::set
    model.alpha_ = alpha;
    const int v = model.vocab_size();

    Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(v, v);
    for (const auto& doc : corpus) {
        int prev = 0; // BOS
        for (const char c : doc) {
            const auto idx = model.symbol_index(c);
            counts(prev, *idx) += 1.0;
            prev = *idx;
        }
    }

    model.logits_.resize(v, v);
    for (int row = 0; row < v; ++row) {
        const double row_total = counts.row(row).sum();
        for (int col = 0; col < v; ++col) {
            const double p = (counts(row, col) + alpha) / (row_total + alpha * v);
            model.logits_(row, col) = static_cast<float>(std::log(p));
        }
    }
    return model;
}

std::optional<int> ToyLm::symbol_index(char c) const {
    const auto it = std::lower_bound(symbols_.begin(), symbols_.end(), c);
    if (it == symbols_.end() || *it != c) {
        return std::nullopt;
    }
    return static_cast<int>(it - symbols_.begin()) + 1;
}

Eigen::ArrayXd ToyLm::next_token_distribution(int context_index) const {
    if (context_index < 0 || context_index >= vocab_size()) {
        throw UnknownSymbol("context index " + std::to_string(context_index) + " outside vocab");
    }
    const Eigen::ArrayXd row = logits_.row(context_index).cast<double>().array();
    const double m = row.maxCoeff();
    Eigen::ArrayXd p = (row - m).exp();
    p /= p.sum();
    return p;
}

Eigen::ArrayXd ToyLm::next_token_distribution(char context_symbol) const {
    const auto idx = symbol_index(context_symbol);
    if (!idx) {
        throw UnknownSymbol(std::string("symbol '") + context_symbol + "' not in vocab");
    }
    return next_token_distribution(*idx);
}

ToyLm::PplResult ToyLm::perplexity(std::string_view text, bool lenient) const {
    if (text.empty()) {
        throw EmptyCorpus("cannot compute perplexity of empty text");
    }
    PplResult result;
    int prev = 0;
    for (const char c : text) {
        auto idx = symbol_index(c);
        if (!idx) {
            if (!lenient) {
                throw UnknownSymbol(std::string("symbol '") + c + "' not in vocab");
            }
            idx = 0; // reserved symbol
        }
        const Eigen::ArrayXd p = next_token_distribution(prev);
        result.nll_sum -= std::log(p[*idx]);
        result.n_tokens += 1;
        prev = *idx;
    }
    result.perplexity = std::exp(result.nll_sum / static_cast<double>(result.n_tokens));
    return result;
}

double ToyLm::yes_no_score(char context_symbol, char pos_symbol, char neg_symbol) const {
    const auto pos = symbol_index(pos_symbol);
    const auto neg = symbol_index(neg_symbol);
    if (!pos || !neg) {
        throw UnknownSymbol("pos/neg symbols must be in vocab");
    }
    const Eigen::ArrayXd p = next_token_distribution(context_symbol);
    return p[*pos] / (p[*pos] + p[*neg]);
}

TensorMap ToyLm::to_tensor_map() const {
    TensorMap map;
    const auto v = static_cast<std::int64_t>(vocab_size());
    Eigen::ArrayXf flat(v * v);
    // row-major matrix: memory already matches the [V,V] row-major layout
    std::copy(logits_.data(), logits_.data() + v * v, flat.data());
    map.put(kLogitsName, Tensor::from_values({v, v}, flat, DType::f32));
    map.metadata["toylm.type"] = "char_bigram";
    map.metadata["toylm.vocab_hex"] = hex_encode(symbols_);
    map.metadata["toylm.alpha"] = format_double(alpha_);
    return map;
}

ToyLm ToyLm::from_tensor_map(const TensorMap& map) {
    if (!map.has(kLogitsName)) {
        throw SchemaViolation(std::string("checkpoint lacks tensor '") + kLogitsName + "'");
    }
    const auto vocab_it = map.metadata.find("toylm.vocab_hex");
    if (vocab_it == map.metadata.end()) {
        throw SchemaViolation("checkpoint lacks toylm.vocab_hex metadata");
    }
    ToyLm model;
    model.symbols_ = hex_decode(vocab_it->second);
    const auto alpha_it = map.metadata.find("toylm.alpha");
    model.alpha_ = alpha_it == map.metadata.end() ? 1.0 : std::stod(alpha_it->second);

    const auto& tensor = map.at(kLogitsName);
    const int v = model.vocab_size();
    const std::vector<std::int64_t> expect = {v, v};
    if (tensor.shape() != expect) {
        throw SchemaViolation("bigram.logits shape does not match vocab size " + std::to_string(v));
    }
    if (v < 2) {
        throw SchemaViolation("vocab must hold at least one symbol besides BOS");
    }
    const Eigen::ArrayXf flat = tensor.values();
    model.logits_.resize(v, v);
    std::copy(flat.data(), flat.data() + flat.size(), model.logits_.data());
    return model;
}

} // namespace mergelab
