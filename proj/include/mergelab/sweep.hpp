#pragma once

#include "mergelab/clf_metrics.hpp"
#include "mergelab/merge.hpp"

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace mergelab {

struct LambdaGrid {
    double start = 0.0;
    double stop = 1.0;
    double step = 0.1;

    // {start, start+step, ...} up to stop inclusive (1e-9 slack)
    std::vector<double> points() const;
    static LambdaGrid parse(std::string_view text); // "start:stop:step"
};

enum class MetricKind { auroc, auprc, neg_perplexity };

std::string_view metric_name(MetricKind m);
MetricKind metric_from_name(std::string_view name);

struct MetricSpec {
    MetricKind kind = MetricKind::auroc; // direction: maximize, always
};

struct EvalExample {
    std::string id;
    int label = 0;
    std::string text;
};

struct EvalTask {
    std::vector<EvalExample> examples;
    int k = 2;
    std::string prompt_template = "mortality";
    std::vector<int> folds; // filled by kfold_split when empty
};

// id<TAB>label<TAB>text per line
EvalTask load_labeled_dataset(const std::filesystem::path& path, int k = 2);
// one document per line; ids doc0000.., labels 0
EvalTask load_corpus_dataset(const std::filesystem::path& path, int k = 2);

// Stratified round-robin: the j-th example of each label class (in input
// order) goes to fold j mod k. Strict mode rejects classes smaller than k.
std::vector<int> kfold_split(const std::vector<std::string>& ids, const std::vector<int>& labels, int k,
                             bool strict = true);

class Evaluator {
  public:
    virtual ~Evaluator() = default;
    virtual void prepare(const EvalTask& task, const std::filesystem::path& workdir);
    // Metric value of the merged checkpoint on one fold. Higher is better.
    virtual double evaluate(const std::filesystem::path& checkpoint, const EvalTask& task, int fold,
                            const MetricSpec& metric) = 0;
};

// Substitutes {checkpoint}, {fold}, {out} into the template, runs it
// through the shell, and parses the predictions it wrote to {out}.
// With timeout_seconds > 0 the command runs under `timeout`.
std::vector<PredictionRecord> evaluate_external(const std::filesystem::path& checkpoint,
                                                const std::filesystem::path& fold_file,
                                                std::string_view command_template,
                                                double timeout_seconds = 0.0,
                                                const std::filesystem::path& out_path = {});

class CommandEvaluator final : public Evaluator {
  public:
    explicit CommandEvaluator(std::string command_template, double timeout_seconds = 0.0,
                              AnswerLexicon lexicon = AnswerLexicon::defaults());
    void prepare(const EvalTask& task, const std::filesystem::path& workdir) override;
    double evaluate(const std::filesystem::path& checkpoint, const EvalTask& task, int fold,
                    const MetricSpec& metric) override;

  private:
    std::string command_template_;
    double timeout_seconds_;
    AnswerLexicon lexicon_;
    std::filesystem::path workdir_;
    std::vector<std::filesystem::path> fold_files_;
};

// Evaluates toy bigram checkpoints in-process: neg_perplexity over the
// fold's documents, or auroc/auprc from yes/no scores where the scoring
// context is each example text's last character.
class ToyLmEvaluator final : public Evaluator {
  public:
    explicit ToyLmEvaluator(char pos_symbol = 'y', char neg_symbol = 'n', bool lenient = false);
    double evaluate(const std::filesystem::path& checkpoint, const EvalTask& task, int fold,
                    const MetricSpec& metric) override;

  private:
    char pos_symbol_;
    char neg_symbol_;
    bool lenient_;
};

// Test/wiring stub: reads lambda back out of the merged checkpoint's
// provenance metadata and defers to a plain function of (lambda, fold).
class FunctionEvaluator final : public Evaluator {
  public:
    explicit FunctionEvaluator(std::function<double(double, int)> fn);
    double evaluate(const std::filesystem::path& checkpoint, const EvalTask& task, int fold,
                    const MetricSpec& metric) override;

  private:
    std::function<double(double, int)> fn_;
};

struct SweepPoint {
    double lambda = 0.0;
    std::vector<double> fold_values;
    double mean = 0.0;
    std::string digest; // merged checkpoint digest, identical before/after eval
};

struct CrossFoldEntry {
    int selection_fold = 0;
    double lambda_star = 0.0;
    double selection_value = 0.0;
    double eval_value = 0.0; // mean metric of lambda_star on the other folds
};

struct SweepResult {
    std::vector<SweepPoint> points; // ascending lambda
    double lambda_star = 0.0;       // winner on the selection fold (fold 0)
    double lambda_star_value = 0.0;
    std::vector<CrossFoldEntry> cross;
    double cross_eval_mean = 0.0;
};

struct SweepOptions {
    std::filesystem::path workdir;
    int jobs = 1;
    bool keep_checkpoints = false;
};

// For each grid lambda: merge the recipe's two inputs with weights
// (1-lambda, lambda), write the checkpoint, evaluate every fold, and
// verify the file digest did not change across evaluation. lambda* is the
// fold-0 argmax, ties to the smallest lambda; the cross entries report the
// swapped-fold protocol.
SweepResult grid_sweep(const MergeRecipe& recipe_template, const LambdaGrid& grid, const EvalTask& task,
                       const MetricSpec& metric, Evaluator& evaluator, const SweepOptions& options);

} // namespace mergelab
