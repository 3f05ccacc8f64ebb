#include "mergelab/dlt.hpp"

#include "mergelab/error.hpp"
#include "mergelab/util.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace mergelab {

std::string_view split_name(Split s) {
    switch (s) {
    case Split::train:
        return "train";
    case Split::test:
        return "test";
    case Split::ref:
        return "ref";
    }
    return "?";
}

Split split_from_name(std::string_view name) {
    if (name == "train") {
        return Split::train;
    }
    if (name == "test") {
        return Split::test;
    }
    if (name == "ref") {
        return Split::ref;
    }
    throw SchemaViolation("unknown split '" + std::string(name) + "' (expected train/test/ref)");
}

void PerplexityAccumulator::add(const PerplexityRecord& r) {
    if (r.n_tokens < 1) {
        throw SchemaViolation("record '" + r.doc_id + "': n_tokens must be >= 1");
    }
    if (!std::isfinite(r.nll_sum) || r.nll_sum < 0.0) {
        throw SchemaViolation("record '" + r.doc_id + "': nll_sum must be finite and >= 0");
    }
    nll_sum += r.nll_sum;
    n_tokens += r.n_tokens;
}

void PerplexityAccumulator::merge(const PerplexityAccumulator& other) {
    nll_sum += other.nll_sum;
    n_tokens += other.n_tokens;
}

double PerplexityAccumulator::perplexity() const {
    if (n_tokens == 0) {
        throw EmptySplit("no tokens accumulated");
    }
    return std::exp(nll_sum / static_cast<double>(n_tokens));
}

double corpus_perplexity(const std::vector<PerplexityRecord>& records, Split split) {
    PerplexityAccumulator acc;
    for (const auto& r : records) {
        if (r.split == split) {
            acc.add(r);
        }
    }
    if (acc.empty()) {
        throw EmptySplit("no records for split '" + std::string(split_name(split)) + "'");
    }
    return acc.perplexity();
}

std::string_view dlt_interpretation_name(DltInterpretation i) {
    switch (i) {
    case DltInterpretation::low_risk:
        return "low_risk";
    case DltInterpretation::leak_suspected:
        return "leak_suspected";
    case DltInterpretation::overfit_suspected:
        return "overfit_suspected";
    }
    return "?";
}

DltReport dlt_deltas(double p_train, double p_test, double p_ref, double overfit_threshold) {
    if (!(p_train > 0.0) || !(p_test > 0.0) || !(p_ref > 0.0)) {
        throw NonPositivePerplexity("perplexities must be positive");
    }
    DltReport report;
    report.summary = {p_train, p_test, p_ref};
    report.delta1 = p_test - p_ref;
    report.delta2 = p_test - p_train;
    if (report.delta1 < 0.0) {
        report.interpretation = DltInterpretation::leak_suspected;
    } else if (report.delta2 > overfit_threshold) {
        report.interpretation = DltInterpretation::overfit_suspected;
    } else {
        report.interpretation = DltInterpretation::low_risk;
    }
    return report;
}

DltReport dlt_from_records(const std::vector<PerplexityRecord>& records, double overfit_threshold) {
    return dlt_deltas(corpus_perplexity(records, Split::train), corpus_perplexity(records, Split::test),
                      corpus_perplexity(records, Split::ref), overfit_threshold);
}

std::vector<PerplexityRecord> read_perplexity_records(std::istream& in, std::string_view source_name) {
    std::vector<PerplexityRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        std::istringstream ss(line);
        std::string split_text;
        PerplexityRecord rec;
        if (!(ss >> split_text >> rec.doc_id >> rec.n_tokens >> rec.nll_sum)) {
            throw SchemaViolation(std::string(source_name) + ":" + std::to_string(line_no) +
                                  ": expected 'split doc_id n_tokens nll_sum'");
        }
        rec.split = split_from_name(split_text);
        records.push_back(std::move(rec));
    }
    return records;
}

std::vector<PerplexityRecord> read_perplexity_records(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoFailure("cannot open perplexity records: " + path.string());
    }
    return read_perplexity_records(in, path.string());
}

} // namespace mergelab
