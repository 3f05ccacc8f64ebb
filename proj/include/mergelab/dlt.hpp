#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace mergelab {

enum class Split { train, test, ref };

std::string_view split_name(Split s);
Split split_from_name(std::string_view name);

struct PerplexityRecord {
    Split split = Split::train;
    std::string doc_id;
    std::int64_t n_tokens = 0; // >= 1
    double nll_sum = 0.0;      // natural-log NLL summed over tokens
};

// Streaming (sum nll, sum tokens) pair; partials from parallel readers
// merge associatively.
struct PerplexityAccumulator {
    double nll_sum = 0.0;
    std::int64_t n_tokens = 0;

    void add(const PerplexityRecord& r);
    void merge(const PerplexityAccumulator& other);
    bool empty() const { return n_tokens == 0; }
    double perplexity() const; // exp(sum nll / sum tokens)
};

// Token-weighted corpus perplexity of one split. Throws EmptySplit.
double corpus_perplexity(const std::vector<PerplexityRecord>& records, Split split);

struct PerplexitySummary {
    double p_train = 0.0;
    double p_test = 0.0;
    double p_ref = 0.0;
};

enum class DltInterpretation { low_risk, leak_suspected, overfit_suspected };

std::string_view dlt_interpretation_name(DltInterpretation i);

struct DltReport {
    double delta1 = 0.0; // p_test - p_ref; negative suggests absorbed eval-domain text
    double delta2 = 0.0; // p_test - p_train; large positive suggests train overfit
    PerplexitySummary summary;
    DltInterpretation interpretation = DltInterpretation::low_risk;
};

DltReport dlt_deltas(double p_train, double p_test, double p_ref, double overfit_threshold = 0.2);
DltReport dlt_from_records(const std::vector<PerplexityRecord>& records, double overfit_threshold = 0.2);

// One record per line: split doc_id n_tokens nll_sum (whitespace-separated).
std::vector<PerplexityRecord> read_perplexity_records(std::istream& in,
                                                      std::string_view source_name = "<stream>");
std::vector<PerplexityRecord> read_perplexity_records(const std::filesystem::path& path);

} // namespace mergelab
