#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace mergelab {

struct PredictionRecord {
    std::string id;
    int label = 0; // 0/1
    std::string answer_text;
    std::optional<double> logprob_yes; // natural log
    std::optional<double> logprob_no;
};

// Lowercase positive/negative answer words. Matching is whole-word.
struct AnswerLexicon {
    std::set<std::string> positive;
    std::set<std::string> negative;

    static AnswerLexicon defaults(); // yes/dead/1 vs no/survive/alive/0
};

enum class AnswerClass { positive, negative, unknown };

// Classifies the first two whitespace tokens of an answer. A token holding
// both polarities is a conflict -> unknown; otherwise the first token with
// a lexicon hit decides.
AnswerClass parse_answer(std::string_view text, const AnswerLexicon& lexicon);

// exp(ly) / (exp(ly) + exp(ln)), max-subtracted so extreme logprobs
// neither overflow nor underflow.
double yes_no_probability(double logprob_yes, double logprob_no);

// Mann-Whitney AUROC: P(score_pos > score_neg) with ties counted half.
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

// Average precision with tied scores handled as one block: the block's
// trailing precision applies to all recall gained inside it.
double auprc(const std::vector<double>& scores, const std::vector<int>& labels);

// Per-record score: normalized yes/no probability when both logprobs are
// present, else the parsed answer mapped positive->1, negative->0,
// unknown->0.5.
double record_score(const PredictionRecord& record, const AnswerLexicon& lexicon);
std::vector<double> record_scores(const std::vector<PredictionRecord>& records,
                                  const AnswerLexicon& lexicon);
std::vector<int> record_labels(const std::vector<PredictionRecord>& records);

// Predictions file: one TAB-separated record per line,
//   id <TAB> label <TAB> answer_text [<TAB> logprob_yes <TAB> logprob_no]
std::vector<PredictionRecord> read_predictions(std::istream& in, std::string_view source_name = "<stream>");
std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path);
void write_predictions(const std::vector<PredictionRecord>& records, const std::filesystem::path& path);

} // namespace mergelab
