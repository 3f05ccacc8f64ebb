#include "mergelab/sweep.hpp"

#include "mergelab/dlt.hpp"
#include "mergelab/error.hpp"
#include "mergelab/toy_lm.hpp"
#include "mergelab/util.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

namespace mergelab {

std::vector<double> LambdaGrid::points() const {
    if (!(start >= 0.0) || !(start < stop) || !(stop <= 1.0) || !(step > 0.0)) {
        throw EmptyGrid("grid must satisfy 0 <= start < stop <= 1 and step > 0");
    }
    if ((stop - start) / step > 100000.0) {
        throw EmptyGrid("step " + format_double(step) + " yields more than 100001 grid points");
    }
    std::vector<double> pts;
    for (std::size_t i = 0;; ++i) {
        const double p = start + static_cast<double>(i) * step;
        if (p > stop + 1e-9) {
            break;
        }
        pts.push_back(std::min(p, 1.0));
    }
    return pts;
}

LambdaGrid LambdaGrid::parse(std::string_view text) {
    const auto parts = split(text, ':');
    if (parts.size() != 3) {
        throw EmptyGrid("grid must be 'start:stop:step'");
    }
    LambdaGrid grid;
    try {
        grid.start = std::stod(parts[0]);
        grid.stop = std::stod(parts[1]);
        grid.step = std::stod(parts[2]);
    } catch (const std::exception&) {
        throw EmptyGrid("grid components must be numeric");
    }
    grid.points(); // validate now
    return grid;
}

std::string_view metric_name(MetricKind m) {
    switch (m) {
    case MetricKind::auroc:
        return "auroc";
    case MetricKind::auprc:
        return "auprc";
    case MetricKind::neg_perplexity:
        return "neg_perplexity";
    }
    return "?";
}

MetricKind metric_from_name(std::string_view name) {
    if (name == "auroc") {
        return MetricKind::auroc;
    }
    if (name == "auprc") {
        return MetricKind::auprc;
    }
    if (name == "neg_perplexity") {
        return MetricKind::neg_perplexity;
    }
    throw SchemaViolation("unknown metric '" + std::string(name) + "'");
}

EvalTask load_labeled_dataset(const std::filesystem::path& path, int k) {
    EvalTask task;
    task.k = k;
    std::size_t line_no = 0;
    for (const auto& line : read_lines(path)) {
        ++line_no;
        const auto fields = split(line, '\t');
        if (fields.size() != 3) {
            throw SchemaViolation(path.string() + ":" + std::to_string(line_no) +
                                  ": expected 'id<TAB>label<TAB>text'");
        }
        EvalExample ex;
        ex.id = fields[0];
        if (fields[1] == "0") {
            ex.label = 0;
        } else if (fields[1] == "1") {
            ex.label = 1;
        } else {
            throw SchemaViolation(path.string() + ":" + std::to_string(line_no) + ": label must be 0 or 1");
        }
        ex.text = fields[2];
        task.examples.push_back(std::move(ex));
    }
    return task;
}

EvalTask load_corpus_dataset(const std::filesystem::path& path, int k) {
    EvalTask task;
    task.k = k;
    std::size_t i = 0;
    for (const auto& line : read_lines(path)) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "doc%04zu", i++);
        task.examples.push_back({buf, 0, line});
    }
    return task;
}

std::vector<int> kfold_split(const std::vector<std::string>& ids, const std::vector<int>& labels, int k,
                             bool strict) {
    if (k < 2) {
        throw KTooLarge("k must be >= 2");
    }
    if (ids.size() != labels.size()) {
        throw LengthMismatch("ids and labels differ in length");
    }
    std::map<int, std::size_t> class_counts;
    for (const int l : labels) {
        ++class_counts[l];
    }
    if (strict) {
        for (const auto& [label, count] : class_counts) {
            if (count < static_cast<std::size_t>(k)) {
                throw KTooLarge("class " + std::to_string(label) + " has only " + std::to_string(count) +
                                " examples for k=" + std::to_string(k));
            }
        }
    }
    std::map<int, int> next_in_class;
    std::vector<int> folds(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        folds[i] = next_in_class[labels[i]]++ % k;
    }
    return folds;
}

void Evaluator::prepare(const EvalTask&, const std::filesystem::path&) {}

namespace {

std::string substitute_all(std::string text, std::string_view key, const std::string& value) {
    std::size_t pos = 0;
    while ((pos = text.find(key, pos)) != std::string::npos) {
        text.replace(pos, key.size(), value);
        pos += value.size();
    }
    return text;
}

} // namespace

std::vector<PredictionRecord> evaluate_external(const std::filesystem::path& checkpoint,
                                                const std::filesystem::path& fold_file,
                                                std::string_view command_template, double timeout_seconds,
                                                const std::filesystem::path& out_path) {
    for (const std::string_view key : {"{checkpoint}", "{fold}", "{out}"}) {
        if (command_template.find(key) == std::string_view::npos) {
            throw EvaluatorFailure("command template lacks the " + std::string(key) + " placeholder");
        }
    }

    std::filesystem::path predictions = out_path;
    const bool own_out = predictions.empty();
    if (own_out) {
        predictions = std::filesystem::temp_directory_path() /
                      ("mergelab_preds_" + std::to_string(::getpid()) + "_" +
                       std::to_string(fnv1a64(checkpoint.string() + fold_file.string())) + ".tsv");
    }
    std::error_code ec;
    std::filesystem::remove(predictions, ec);

    std::string command(command_template);
    command = substitute_all(std::move(command), "{checkpoint}", checkpoint.string());
    command = substitute_all(std::move(command), "{fold}", fold_file.string());
    command = substitute_all(std::move(command), "{out}", predictions.string());
    if (timeout_seconds > 0.0) {
        command = "timeout " + format_double(timeout_seconds) + " " + command;
    }

    const int status = std::system(command.c_str());
    const int exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    if (timeout_seconds > 0.0 && exit_code == 124) {
        throw Timeout("evaluator exceeded " + format_double(timeout_seconds) + "s: " + command);
    }
    if (exit_code != 0) {
        throw EvaluatorFailure("evaluator exited with status " + std::to_string(exit_code) + ": " + command);
    }
    if (!std::filesystem::exists(predictions)) {
        throw EvaluatorFailure("evaluator wrote no predictions file at " + predictions.string());
    }
    auto records = read_predictions(predictions);
    if (own_out) {
        std::filesystem::remove(predictions, ec);
    }
    return records;
}

CommandEvaluator::CommandEvaluator(std::string command_template, double timeout_seconds,
                                   AnswerLexicon lexicon)
    : command_template_(std::move(command_template)), timeout_seconds_(timeout_seconds),
      lexicon_(std::move(lexicon)) {}

void CommandEvaluator::prepare(const EvalTask& task, const std::filesystem::path& workdir) {
    workdir_ = workdir;
    std::filesystem::create_directories(workdir);
    fold_files_.clear();
    for (int f = 0; f < task.k; ++f) {
        std::ostringstream ids;
        for (std::size_t i = 0; i < task.examples.size(); ++i) {
            if (task.folds[i] == f) {
                ids << task.examples[i].id << '\n';
            }
        }
        const auto path = workdir / ("fold" + std::to_string(f) + ".ids");
        write_text_file(path, ids.str());
        fold_files_.push_back(path);
    }
}

double CommandEvaluator::evaluate(const std::filesystem::path& checkpoint, const EvalTask& task, int fold,
                                  const MetricSpec& metric) {
    if (metric.kind == MetricKind::neg_perplexity) {
        throw EvaluatorFailure("neg_perplexity is only available through the toy evaluator");
    }
    const auto out =
        workdir_ / (checkpoint.stem().string() + ".fold" + std::to_string(fold) + ".preds.tsv");
    auto records =
        evaluate_external(checkpoint, fold_files_.at(fold), command_template_, timeout_seconds_, out);

    std::map<std::string, const PredictionRecord*> by_id;
    for (const auto& r : records) {
        if (!by_id.emplace(r.id, &r).second) {
            throw BadPredictionsFormat("duplicate prediction for id '" + r.id + "'");
        }
    }
    std::vector<PredictionRecord> ordered;
    std::size_t fold_size = 0;
    for (std::size_t i = 0; i < task.examples.size(); ++i) {
        if (task.folds[i] != fold) {
            continue;
        }
        ++fold_size;
        const auto& ex = task.examples[i];
        const auto it = by_id.find(ex.id);
        if (it == by_id.end()) {
            throw BadPredictionsFormat("prediction missing for fold id '" + ex.id + "'");
        }
        if (it->second->label != ex.label) {
            throw BadPredictionsFormat("label mismatch for id '" + ex.id + "'");
        }
        ordered.push_back(*it->second);
    }
    if (records.size() != fold_size) {
        throw BadPredictionsFormat("predictions hold " + std::to_string(records.size()) +
                                   " records but the fold has " + std::to_string(fold_size));
    }
    const auto scores = record_scores(ordered, lexicon_);
    const auto labels = record_labels(ordered);
    return metric.kind == MetricKind::auroc ? auroc(scores, labels) : auprc(scores, labels);
}

ToyLmEvaluator::ToyLmEvaluator(char pos_symbol, char neg_symbol, bool lenient)
    : pos_symbol_(pos_symbol), neg_symbol_(neg_symbol), lenient_(lenient) {}

double ToyLmEvaluator::evaluate(const std::filesystem::path& checkpoint, const EvalTask& task, int fold,
                                const MetricSpec& metric) {
    const auto model = ToyLm::from_tensor_map(read_checkpoint(checkpoint));
    if (metric.kind == MetricKind::neg_perplexity) {
        PerplexityAccumulator acc;
        for (std::size_t i = 0; i < task.examples.size(); ++i) {
            if (task.folds[i] != fold || task.examples[i].text.empty()) {
                continue;
            }
            const auto ppl = model.perplexity(task.examples[i].text, lenient_);
            acc.add({Split::test, task.examples[i].id, ppl.n_tokens, ppl.nll_sum});
        }
        return -acc.perplexity();
    }
    std::vector<double> scores;
    std::vector<int> labels;
    for (std::size_t i = 0; i < task.examples.size(); ++i) {
        if (task.folds[i] != fold) {
            continue;
        }
        const auto& ex = task.examples[i];
        if (ex.text.empty()) {
            throw SchemaViolation("example '" + ex.id + "' has empty text");
        }
        scores.push_back(model.yes_no_score(ex.text.back(), pos_symbol_, neg_symbol_));
        labels.push_back(ex.label);
    }
    return metric.kind == MetricKind::auroc ? auroc(scores, labels) : auprc(scores, labels);
}

FunctionEvaluator::FunctionEvaluator(std::function<double(double, int)> fn) : fn_(std::move(fn)) {}

double FunctionEvaluator::evaluate(const std::filesystem::path& checkpoint, const EvalTask&, int fold,
                                   const MetricSpec&) {
    const auto map = read_checkpoint(checkpoint);
    const auto it = map.metadata.find("merge.lambdas");
    if (it == map.metadata.end()) {
        throw EvaluatorFailure("merged checkpoint lacks merge.lambdas provenance");
    }
    const auto parts = split(it->second, ',');
    return fn_(std::stod(parts.back()), fold);
}

SweepResult grid_sweep(const MergeRecipe& recipe_template, const LambdaGrid& grid, const EvalTask& task,
                       const MetricSpec& metric, Evaluator& evaluator, const SweepOptions& options) {
    const auto lambdas = grid.points();
    if (lambdas.empty()) {
        throw EmptyGrid("grid produced no points");
    }
    if (recipe_template.inputs.size() != 2) {
        throw IncompatibleInputs("a scalar-lambda sweep needs exactly 2 inputs");
    }
    if (task.examples.empty()) {
        throw EmptyCorpus("evaluation task holds no examples");
    }

    EvalTask prepared = task;
    if (prepared.folds.empty()) {
        std::vector<std::string> ids;
        std::vector<int> labels;
        for (const auto& ex : prepared.examples) {
            ids.push_back(ex.id);
            labels.push_back(ex.label);
        }
        prepared.folds = kfold_split(ids, labels, prepared.k);
    }
    if (prepared.folds.size() != prepared.examples.size()) {
        throw LengthMismatch("fold assignment does not cover the dataset");
    }

    std::filesystem::create_directories(options.workdir);
    evaluator.prepare(prepared, options.workdir);

    const TensorMap map_a = read_checkpoint(recipe_template.inputs[0]);
    const TensorMap map_b = read_checkpoint(recipe_template.inputs[1]);

    SweepResult result;
    result.points.resize(lambdas.size());
    parallel_for(lambdas.size(), options.jobs, [&](std::size_t i) {
        const double lambda = lambdas[i];
        auto [merged, diag] =
            merge_maps({&map_a, &map_b}, recipe_template.method, LambdaWeights::from_scalar(lambda),
                       recipe_template.slerp, /*jobs=*/1);
        char name[32];
        std::snprintf(name, sizeof(name), "sweep_%03zu.ckpt", i);
        const auto path = options.workdir / name;
        write_checkpoint(merged, path);
        const auto digest_before = file_digest(path);

        SweepPoint point;
        point.lambda = lambda;
        point.fold_values.resize(static_cast<std::size_t>(prepared.k));
        for (int f = 0; f < prepared.k; ++f) {
            point.fold_values[static_cast<std::size_t>(f)] = evaluator.evaluate(path, prepared, f, metric);
        }
        const auto digest_after = file_digest(path);
        if (digest_after != digest_before) {
            throw EvaluatorFailure("merged checkpoint changed during evaluation (was " + digest_before +
                                   ", now " + digest_after + "); the sweep never trains");
        }
        point.digest = digest_before;
        double sum = 0.0;
        for (const double v : point.fold_values) {
            sum += v;
        }
        point.mean = sum / static_cast<double>(prepared.k);
        result.points[i] = std::move(point);
        if (!options.keep_checkpoints) {
            std::error_code ec;
            std::filesystem::remove(path, ec);
        }
    });

    for (int f = 0; f < prepared.k; ++f) {
        CrossFoldEntry entry;
        entry.selection_fold = f;
        std::size_t best = 0;
        for (std::size_t i = 1; i < result.points.size(); ++i) { // ascending lambda: ties keep the smaller
            if (result.points[i].fold_values[static_cast<std::size_t>(f)] >
                result.points[best].fold_values[static_cast<std::size_t>(f)]) {
                best = i;
            }
        }
        entry.lambda_star = result.points[best].lambda;
        entry.selection_value = result.points[best].fold_values[static_cast<std::size_t>(f)];
        double eval_sum = 0.0;
        for (int g = 0; g < prepared.k; ++g) {
            if (g != f) {
                eval_sum += result.points[best].fold_values[static_cast<std::size_t>(g)];
            }
        }
        entry.eval_value = eval_sum / static_cast<double>(prepared.k - 1);
        result.cross.push_back(entry);
    }
    result.lambda_star = result.cross.front().lambda_star;
    result.lambda_star_value = result.cross.front().selection_value;
    double cross_sum = 0.0;
    for (const auto& entry : result.cross) {
        cross_sum += entry.eval_value;
    }
    result.cross_eval_mean = cross_sum / static_cast<double>(result.cross.size());
    return result;
}

} // namespace mergelab
