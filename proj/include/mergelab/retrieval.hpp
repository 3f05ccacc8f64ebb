#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace mergelab {

// lowercase, split on non-alphanumeric, drop empty tokens
std::vector<std::string> tokenize(std::string_view text);

struct Posting {
    std::string doc_id;
    std::int64_t tf = 0;

    bool operator==(const Posting&) const = default;
};

struct InvertedIndex {
    std::map<std::string, std::vector<Posting>> postings; // doc_id-sorted postings
    std::map<std::string, std::int64_t> doc_lengths;
    double avg_doc_length = 0.0;
    std::int64_t n_docs = 0;
};

InvertedIndex build_index(const std::vector<std::pair<std::string, std::string>>& corpus);

struct ScoredDoc {
    std::string doc_id;
    double score = 0.0;
};

struct Ranking {
    std::string query_id;
    std::vector<ScoredDoc> docs; // scores non-increasing, doc_ids unique
};

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

// Okapi BM25 with idf(t) = ln(1 + (N - df + 0.5)/(df + 0.5)). Only docs
// containing at least one query term are scored; ties break by doc_id.
Ranking bm25_search(const InvertedIndex& index, std::string query_id, std::string_view query,
                    std::size_t top_k, const Bm25Params& params = {});

// query + " " + deduplicated keywords (first occurrence wins)
std::string expand_query(std::string_view query, const std::vector<std::string>& keywords);

// Reciprocal rank fusion: score(d) = sum over rankings of 1/(k + rank(d)).
Ranking rrf_fuse(const std::vector<Ranking>& rankings, int k_rrf = 60);

struct Qrels {
    // query_id -> doc_id -> grade (>= 0; > 0 means relevant)
    std::map<std::string, std::map<std::string, int>> judgments;
};

struct IrOptions {
    // MAP@100 divides by all relevant docs; capped divides by min(R, 100)
    bool map_capped_denominator = false;
};

// MRR@1000, P@10, NDCG@10 (binary gains, log2(rank+1) discount),
// Recall@1000, MAP@100.
std::map<std::string, double> ir_metrics(const Ranking& ranking, const Qrels& qrels,
                                         const IrOptions& options = {});

// Mean of per-query metrics over all queries present in both.
std::map<std::string, double> mean_ir_metrics(const std::vector<Ranking>& rankings, const Qrels& qrels,
                                              const IrOptions& options = {});

// File formats: corpus/queries "id<TAB>text"; qrels "query_id iter doc_id grade";
// keywords "query_id<TAB>kw1 kw2 ..."; runs in 6-column TREC layout.
std::vector<std::pair<std::string, std::string>> read_id_text_file(const std::filesystem::path& path);
Qrels read_qrels(const std::filesystem::path& path);
std::map<std::string, std::vector<std::string>> read_keywords(const std::filesystem::path& path);
std::vector<Ranking> read_run_file(const std::filesystem::path& path);
void write_run_file(const std::vector<Ranking>& rankings, const std::filesystem::path& path,
                    std::string_view run_tag);

} // namespace mergelab
