#include "mergelab/clf_metrics.hpp"

#include "mergelab/error.hpp"
#include "mergelab/util.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace mergelab {

AnswerLexicon AnswerLexicon::defaults() {
    AnswerLexicon lex;
    lex.positive = {"yes", "dead", "1"};
    lex.negative = {"no", "survive", "alive", "0"};
    return lex;
}

namespace {

// Word runs ([A-Za-z0-9]+) of a token, lowercased.
std::vector<std::string> word_runs(std::string_view token) {
    std::vector<std::string> words;
    std::string cur;
    for (const char c : token) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else if (!cur.empty()) {
            words.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) {
        words.push_back(std::move(cur));
    }
    return words;
}

std::vector<std::string> first_tokens(std::string_view text, std::size_t max_tokens) {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    while (i < text.size() && tokens.size() < max_tokens) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) {
            ++i;
        }
        std::size_t start = i;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) {
            ++i;
        }
        if (i > start) {
            tokens.emplace_back(text.substr(start, i - start));
        }
    }
    return tokens;
}

} // namespace

AnswerClass parse_answer(std::string_view text, const AnswerLexicon& lexicon) {
    // Generation is capped at two tokens, so only the first two are scanned.
    for (const auto& token : first_tokens(text, 2)) {
        bool has_pos = false;
        bool has_neg = false;
        for (const auto& w : word_runs(token)) {
            has_pos = has_pos || lexicon.positive.count(w) > 0;
            has_neg = has_neg || lexicon.negative.count(w) > 0;
        }
        if (has_pos && has_neg) {
            return AnswerClass::unknown; // conflicting hits in one token
        }
        if (has_pos) {
            return AnswerClass::positive;
        }
        if (has_neg) {
            return AnswerClass::negative;
        }
    }
    return AnswerClass::unknown;
}

double yes_no_probability(double logprob_yes, double logprob_no) {
    if (!std::isfinite(logprob_yes) || !std::isfinite(logprob_no)) {
        throw MissingLogprob("logprobs must be finite");
    }
    const double m = std::max(logprob_yes, logprob_no);
    const double ey = std::exp(logprob_yes - m);
    const double en = std::exp(logprob_no - m);
    return ey / (ey + en);
}

namespace {

void require_both_classes(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) {
        throw LengthMismatch("scores and labels differ in length");
    }
    std::size_t pos = 0;
    for (const int l : labels) {
        if (l != 0 && l != 1) {
            throw DegenerateLabels("labels must be 0 or 1");
        }
        pos += static_cast<std::size_t>(l);
    }
    if (pos == 0 || pos == labels.size()) {
        throw DegenerateLabels("need at least one positive and one negative label");
    }
}

} // namespace

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
    require_both_classes(scores, labels);
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // rank-sum with average ranks over tied score runs
    double pos_rank_sum = 0.0;
    std::size_t n_pos = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) {
            ++j;
        }
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j); // 1-based
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]] == 1) {
                pos_rank_sum += avg_rank;
                ++n_pos;
            }
        }
        i = j;
    }
    const double p = static_cast<double>(n_pos);
    const double neg = static_cast<double>(n - n_pos);
    return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * neg);
}

double auprc(const std::vector<double>& scores, const std::vector<int>& labels) {
    require_both_classes(scores, labels);
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    std::size_t total_pos = 0;
    for (const int l : labels) {
        total_pos += static_cast<std::size_t>(l);
    }

    double ap = 0.0;
    std::size_t cum = 0;
    std::size_t cum_pos = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        std::size_t block_pos = 0;
        while (j < n && scores[order[j]] == scores[order[i]]) {
            block_pos += static_cast<std::size_t>(labels[order[j]]);
            ++j;
        }
        cum += j - i;
        cum_pos += block_pos;
        if (block_pos > 0) {
            const double precision = static_cast<double>(cum_pos) / static_cast<double>(cum);
            ap += precision * static_cast<double>(block_pos);
        }
        i = j;
    }
    return ap / static_cast<double>(total_pos);
}

double record_score(const PredictionRecord& record, const AnswerLexicon& lexicon) {
    if (record.logprob_yes && record.logprob_no) {
        return yes_no_probability(*record.logprob_yes, *record.logprob_no);
    }
    switch (parse_answer(record.answer_text, lexicon)) {
    case AnswerClass::positive:
        return 1.0;
    case AnswerClass::negative:
        return 0.0;
    case AnswerClass::unknown:
        return 0.5; // abstain
    }
    return 0.5;
}

std::vector<double> record_scores(const std::vector<PredictionRecord>& records,
                                  const AnswerLexicon& lexicon) {
    std::vector<double> scores;
    scores.reserve(records.size());
    for (const auto& r : records) {
        scores.push_back(record_score(r, lexicon));
    }
    return scores;
}

std::vector<int> record_labels(const std::vector<PredictionRecord>& records) {
    std::vector<int> labels;
    labels.reserve(records.size());
    for (const auto& r : records) {
        labels.push_back(r.label);
    }
    return labels;
}

std::vector<PredictionRecord> read_predictions(std::istream& in, std::string_view source_name) {
    std::vector<PredictionRecord> records;
    std::string line;
    std::size_t line_no = 0;
    auto fail = [&](const std::string& reason) {
        throw BadPredictionsFormat(std::string(source_name) + ":" + std::to_string(line_no) + ": " +
                                   reason);
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        const auto fields = split(line, '\t');
        if (fields.size() != 3 && fields.size() != 5) {
            fail("expected 3 or 5 tab-separated fields, got " + std::to_string(fields.size()));
        }
        PredictionRecord rec;
        rec.id = fields[0];
        if (rec.id.empty()) {
            fail("empty id");
        }
        if (fields[1] == "0") {
            rec.label = 0;
        } else if (fields[1] == "1") {
            rec.label = 1;
        } else {
            fail("label must be 0 or 1, got '" + fields[1] + "'");
        }
        rec.answer_text = fields[2];
        if (fields.size() == 5) {
            try {
                rec.logprob_yes = std::stod(fields[3]);
                rec.logprob_no = std::stod(fields[4]);
            } catch (const std::exception&) {
                fail("logprobs must be numeric");
            }
            if (!std::isfinite(*rec.logprob_yes) || !std::isfinite(*rec.logprob_no)) {
                fail("logprobs must be finite");
            }
        }
        records.push_back(std::move(rec));
    }
    return records;
}

std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoFailure("cannot open predictions file: " + path.string());
    }
    return read_predictions(in, path.string());
}

void write_predictions(const std::vector<PredictionRecord>& records, const std::filesystem::path& path) {
    std::ostringstream ss;
    for (const auto& r : records) {
        ss << r.id << '\t' << r.label << '\t' << r.answer_text;
        if (r.logprob_yes && r.logprob_no) {
            ss << '\t' << format_double(*r.logprob_yes) << '\t' << format_double(*r.logprob_no);
        }
        ss << '\n';
    }
    write_text_file(path, ss.str());
}

} // namespace mergelab
