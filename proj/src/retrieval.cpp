#include "mergelab/retrieval.hpp"

#include "mergelab/error.hpp"
#include "mergelab/util.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

namespace mergelab {

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (const char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) {
        tokens.push_back(std::move(cur));
    }
    return tokens;
}

InvertedIndex build_index(const std::vector<std::pair<std::string, std::string>>& corpus) {
    InvertedIndex index;
    std::set<std::string> seen;
    std::int64_t total_len = 0;
    for (const auto& [doc_id, text] : corpus) {
        if (!seen.insert(doc_id).second) {
            throw DuplicateDocId("doc '" + doc_id + "' indexed twice");
        }
        const auto tokens = tokenize(text);
        std::map<std::string, std::int64_t> tf;
        for (const auto& t : tokens) {
            ++tf[t];
        }
        for (const auto& [term, count] : tf) {
            index.postings[term].push_back({doc_id, count});
        }
        index.doc_lengths[doc_id] = static_cast<std::int64_t>(tokens.size());
        total_len += static_cast<std::int64_t>(tokens.size());
        ++index.n_docs;
    }
    for (auto& [term, plist] : index.postings) {
        std::sort(plist.begin(), plist.end(),
                  [](const Posting& a, const Posting& b) { return a.doc_id < b.doc_id; });
    }
    index.avg_doc_length = index.n_docs == 0 ? 0.0 : static_cast<double>(total_len) / index.n_docs;
    return index;
}

Ranking bm25_search(const InvertedIndex& index, std::string query_id, std::string_view query,
                    std::size_t top_k, const Bm25Params& params) {
    Ranking ranking;
    ranking.query_id = std::move(query_id);
    if (index.n_docs == 0) {
        return ranking;
    }
    const double n = static_cast<double>(index.n_docs);
    std::unordered_map<std::string, double> scores;
    for (const auto& term : tokenize(query)) { // repeated query terms add again
        const auto it = index.postings.find(term);
        if (it == index.postings.end()) {
            continue;
        }
        const double df = static_cast<double>(it->second.size());
        const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
        for (const auto& posting : it->second) {
            const double tf = static_cast<double>(posting.tf);
            const double dl = static_cast<double>(index.doc_lengths.at(posting.doc_id));
            const double norm = 1.0 - params.b + params.b * dl / index.avg_doc_length;
            scores[posting.doc_id] += idf * tf * (params.k1 + 1.0) / (tf + params.k1 * norm);
        }
    }
    ranking.docs.reserve(scores.size());
    for (auto& [doc_id, score] : scores) {
        ranking.docs.push_back({doc_id, score});
    }
    std::sort(ranking.docs.begin(), ranking.docs.end(), [](const ScoredDoc& a, const ScoredDoc& b) {
        if (a.score != b.score) {
            return a.score > b.score;
        }
        return a.doc_id < b.doc_id;
    });
    if (ranking.docs.size() > top_k) {
        ranking.docs.resize(top_k);
    }
    return ranking;
}

std::string expand_query(std::string_view query, const std::vector<std::string>& keywords) {
    std::string out(query);
    std::set<std::string> seen;
    for (const auto& kw : keywords) {
        if (kw.empty() || !seen.insert(kw).second) {
            continue;
        }
        out += ' ';
        out += kw;
    }
    return out;
}

Ranking rrf_fuse(const std::vector<Ranking>& rankings, int k_rrf) {
    if (k_rrf < 1) {
        throw Error("k_rrf must be >= 1");
    }
    Ranking fused;
    if (rankings.empty()) {
        return fused;
    }
    fused.query_id = rankings.front().query_id;
    std::unordered_map<std::string, double> scores;
    for (const auto& ranking : rankings) {
        if (ranking.query_id != fused.query_id) {
            throw MixedQueryIds("cannot fuse rankings for '" + fused.query_id + "' and '" +
                                ranking.query_id + "'");
        }
        for (std::size_t i = 0; i < ranking.docs.size(); ++i) {
            scores[ranking.docs[i].doc_id] += 1.0 / (static_cast<double>(k_rrf) + static_cast<double>(i + 1));
        }
    }
    fused.docs.reserve(scores.size());
    for (auto& [doc_id, score] : scores) {
        fused.docs.push_back({doc_id, score});
    }
    std::sort(fused.docs.begin(), fused.docs.end(), [](const ScoredDoc& a, const ScoredDoc& b) {
        if (a.score != b.score) {
            return a.score > b.score;
        }
        return a.doc_id < b.doc_id;
    });
    return fused;
}

std::map<std::string, double> ir_metrics(const Ranking& ranking, const Qrels& qrels,
                                         const IrOptions& options) {
    const auto it = qrels.judgments.find(ranking.query_id);
    if (it == qrels.judgments.end()) {
        throw NoJudgments("no judgments for query '" + ranking.query_id + "'");
    }
    const auto& judged = it->second;
    std::int64_t total_relevant = 0;
    for (const auto& [doc, grade] : judged) {
        if (grade > 0) {
            ++total_relevant;
        }
    }
    if (total_relevant == 0) {
        throw NoJudgments("query '" + ranking.query_id + "' has no relevant documents");
    }

    auto is_relevant = [&](const std::string& doc_id) {
        const auto j = judged.find(doc_id);
        return j != judged.end() && j->second > 0;
    };

    double mrr = 0.0;
    std::int64_t rel_at_10 = 0;
    std::int64_t rel_at_1000 = 0;
    double dcg10 = 0.0;
    double ap100 = 0.0;
    std::int64_t rel_seen = 0;
    for (std::size_t i = 0; i < ranking.docs.size() && i < 1000; ++i) {
        const std::size_t rank = i + 1;
        if (!is_relevant(ranking.docs[i].doc_id)) {
            continue;
        }
        if (mrr == 0.0) {
            mrr = 1.0 / static_cast<double>(rank);
        }
        ++rel_at_1000;
        if (rank <= 10) {
            ++rel_at_10;
            dcg10 += 1.0 / std::log2(static_cast<double>(rank) + 1.0);
        }
        if (rank <= 100) {
            ++rel_seen;
            ap100 += static_cast<double>(rel_seen) / static_cast<double>(rank);
        }
    }
    double idcg10 = 0.0;
    for (std::int64_t i = 1; i <= std::min<std::int64_t>(total_relevant, 10); ++i) {
        idcg10 += 1.0 / std::log2(static_cast<double>(i) + 1.0);
    }

    const double map_denominator = options.map_capped_denominator
                                       ? static_cast<double>(std::min<std::int64_t>(total_relevant, 100))
                                       : static_cast<double>(total_relevant);
    return {
        {"mrr@1000", mrr},
        {"p@10", static_cast<double>(rel_at_10) / 10.0},
        {"ndcg@10", dcg10 / idcg10},
        {"recall@1000", static_cast<double>(rel_at_1000) / static_cast<double>(total_relevant)},
        {"map@100", ap100 / map_denominator},
    };
}

std::map<std::string, double> mean_ir_metrics(const std::vector<Ranking>& rankings, const Qrels& qrels,
                                              const IrOptions& options) {
    std::map<std::string, double> totals;
    std::int64_t n = 0;
    for (const auto& ranking : rankings) {
        if (qrels.judgments.count(ranking.query_id) == 0) {
            continue;
        }
        for (const auto& [name, value] : ir_metrics(ranking, qrels, options)) {
            totals[name] += value;
        }
        ++n;
    }
    if (n == 0) {
        throw NoJudgments("no ranked query has judgments");
    }
    for (auto& [name, value] : totals) {
        value /= static_cast<double>(n);
    }
    return totals;
}

std::vector<std::pair<std::string, std::string>> read_id_text_file(const std::filesystem::path& path) {
    std::vector<std::pair<std::string, std::string>> out;
    std::size_t line_no = 0;
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoFailure("cannot open file: " + path.string());
    }
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        const auto tab = line.find('\t');
        if (tab == std::string::npos || tab == 0) {
            throw SchemaViolation(path.string() + ":" + std::to_string(line_no) +
                                  ": expected 'id<TAB>text'");
        }
        out.emplace_back(line.substr(0, tab), line.substr(tab + 1));
    }
    return out;
}

Qrels read_qrels(const std::filesystem::path& path) {
    Qrels qrels;
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoFailure("cannot open qrels: " + path.string());
    }
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        std::istringstream ss(line);
        std::string qid, iteration, doc_id;
        int grade = 0;
        if (!(ss >> qid >> iteration >> doc_id >> grade)) {
            throw SchemaViolation(path.string() + ":" + std::to_string(line_no) +
                                  ": expected 'query_id iteration doc_id grade'");
        }
        if (grade < 0) {
            throw SchemaViolation(path.string() + ":" + std::to_string(line_no) +
                                  ": grade must be non-negative");
        }
        qrels.judgments[qid][doc_id] = grade;
    }
    return qrels;
}

std::map<std::string, std::vector<std::string>> read_keywords(const std::filesystem::path& path) {
    std::map<std::string, std::vector<std::string>> out;
    for (const auto& [qid, text] : read_id_text_file(path)) {
        auto words = split(text, ' ');
        std::vector<std::string> cleaned;
        for (auto& w : words) {
            if (!w.empty()) {
                cleaned.push_back(std::move(w));
            }
        }
        out[qid] = std::move(cleaned);
    }
    return out;
}

std::vector<Ranking> read_run_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoFailure("cannot open run file: " + path.string());
    }
    std::vector<Ranking> rankings;
    std::map<std::string, std::size_t> index_of;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        std::istringstream ss(line);
        std::string qid, q0, doc_id, tag;
        std::int64_t rank = 0;
        double score = 0.0;
        if (!(ss >> qid >> q0 >> doc_id >> rank >> score >> tag)) {
            throw SchemaViolation(path.string() + ":" + std::to_string(line_no) +
                                  ": expected 'query_id Q0 doc_id rank score tag'");
        }
        auto it = index_of.find(qid);
        if (it == index_of.end()) {
            index_of[qid] = rankings.size();
            rankings.push_back(Ranking{qid, {}});
            it = index_of.find(qid);
        }
        rankings[it->second].docs.push_back({doc_id, score});
    }
    return rankings;
}

void write_run_file(const std::vector<Ranking>& rankings, const std::filesystem::path& path,
                    std::string_view run_tag) {
    std::ostringstream ss;
    for (const auto& ranking : rankings) {
        for (std::size_t i = 0; i < ranking.docs.size(); ++i) {
            ss << ranking.query_id << " Q0 " << ranking.docs[i].doc_id << ' ' << (i + 1) << ' '
               << format_double(ranking.docs[i].score) << ' ' << run_tag << '\n';
        }
    }
    write_text_file(path, ss.str());
}

} // namespace mergelab
