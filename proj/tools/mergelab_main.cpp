#include "mergelab/clf_metrics.hpp"
#include "mergelab/dlt.hpp"
#include "mergelab/ehr_text.hpp"
#include "mergelab/error.hpp"
#include "mergelab/fixtures.hpp"
#include "mergelab/merge.hpp"
#include "mergelab/retrieval.hpp"
#include "mergelab/sweep.hpp"
#include "mergelab/tensor_store.hpp"
#include "mergelab/toy_lm.hpp"
#include "mergelab/util.hpp"

#include <chrono>
#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

namespace {

using json = nlohmann::json;
using namespace mergelab;

struct GlobalOptions {
    std::string format = "text";
    std::uint64_t seed = 17;
    int jobs = 1;
    bool deterministic = false;
};

bool structured(const GlobalOptions& g) { return g.format == "structured"; }

void emit_json(json j, const GlobalOptions& g) {
    if (!g.deterministic) {
        j["generated_at"] = static_cast<std::int64_t>(
            std::chrono::duration_cast<std::chrono::seconds>(
                std::chrono::system_clock::now().time_since_epoch())
                .count());
    }
    std::cout << j.dump(2) << "\n";
}

// ---------------------------------------------------------------- merge

struct MergeArgs {
    std::string recipe_path;
    std::vector<std::string> inputs;
    std::string method = "slerp";
    double lambda = 0.5;
    bool lambda_set = false;
    std::vector<double> lambdas;
    std::string out;
    double parallel_epsilon = 1e-8;
    std::string antipodal = "error";
    std::string angle_scope = "per_tensor";
    std::string dtype_policy = "preserve";
    bool strict_finite = false;
};

int run_merge(const MergeArgs& args, const GlobalOptions& g) {
    MergeRecipe recipe;
    if (!args.recipe_path.empty()) {
        recipe = parse_recipe_file(args.recipe_path);
    } else {
        for (const auto& p : args.inputs) {
            recipe.inputs.emplace_back(p);
        }
        recipe.method = args.method == "linear" ? MergeMethod::linear : MergeMethod::slerp;
        if (!args.lambdas.empty()) {
            recipe.weights.lambdas = args.lambdas;
        } else {
            if (recipe.inputs.size() != 2) {
                throw SchemaViolation("scalar --lambda requires exactly 2 inputs; use --lambdas");
            }
            recipe.weights = LambdaWeights::from_scalar(args.lambda);
        }
        recipe.slerp.parallel_epsilon = args.parallel_epsilon;
        recipe.slerp.antipodal_policy =
            args.antipodal == "flip_sign" ? AntipodalPolicy::flip_sign : AntipodalPolicy::error;
        recipe.slerp.angle_scope =
            args.angle_scope == "global" ? AngleScope::global : AngleScope::per_tensor;
        recipe.dtype_policy =
            args.dtype_policy == "force_f32" ? DtypePolicy::force_f32 : DtypePolicy::preserve;
        recipe.strict_finite = args.strict_finite;
    }
    if (!args.out.empty()) {
        recipe.output = args.out;
    }

    const auto outcome = run_recipe(recipe, g.jobs);
    for (const auto& entry : outcome.diagnostics.entries) {
        std::fprintf(stderr, "slerp %-32s omega=%.6f fallback=%s\n", entry.name.c_str(), entry.omega,
                     std::string(slerp_fallback_name(entry.fallback)).c_str());
    }
    if (structured(g)) {
        json j;
        j["method"] = std::string(merge_method_name(recipe.method));
        j["output"] = recipe.output.string();
        j["digest"] = outcome.output_digest;
        json lambdas = json::array();
        for (const double l : recipe.weights.lambdas) {
            lambdas.push_back(l);
        }
        j["lambdas"] = lambdas;
        json diag = json::array();
        for (const auto& entry : outcome.diagnostics.entries) {
            diag.push_back({{"tensor", entry.name},
                            {"omega", entry.omega},
                            {"fallback", std::string(slerp_fallback_name(entry.fallback))}});
        }
        j["slerp_diagnostics"] = diag;
        emit_json(j, g);
    } else {
        std::printf("method   %s\n", std::string(merge_method_name(recipe.method)).c_str());
        std::string lambdas;
        for (std::size_t i = 0; i < recipe.weights.lambdas.size(); ++i) {
            lambdas += (i ? "," : "") + format_double(recipe.weights.lambdas[i]);
        }
        std::printf("lambdas  %s\n", lambdas.c_str());
        std::printf("output   %s\n", recipe.output.string().c_str());
        std::printf("digest   %s\n", outcome.output_digest.c_str());
    }
    return 0;
}

// ---------------------------------------------------------------- sweep

struct SweepArgs {
    std::string recipe_path;
    std::vector<std::string> inputs;
    std::string method = "linear";
    bool method_set = false;
    std::string grid = "0:1:0.1";
    std::string metric = "neg_perplexity";
    int k = 2;
    std::string toy_corpus;
    std::string toy_dataset;
    std::string evaluator_cmd;
    std::string dataset;
    std::string workdir;
    std::string pos = "y";
    std::string neg = "n";
    double timeout = 0.0;
    bool keep = false;
};

int run_sweep(const SweepArgs& args, const GlobalOptions& g) {
    MergeRecipe recipe;
    if (!args.recipe_path.empty()) {
        recipe = parse_recipe_file(args.recipe_path); // lambda/output ignored by the sweep
    }
    if (!args.inputs.empty()) {
        recipe.inputs.clear();
        for (const auto& p : args.inputs) {
            recipe.inputs.emplace_back(p);
        }
    }
    if (recipe.inputs.empty()) {
        throw SchemaViolation("sweep needs --inputs or a --recipe listing them");
    }
    if (args.recipe_path.empty() || args.method_set) {
        recipe.method = args.method == "slerp" ? MergeMethod::slerp : MergeMethod::linear;
    }

    const auto grid = LambdaGrid::parse(args.grid);
    MetricSpec metric{metric_from_name(args.metric)};

    EvalTask task;
    std::unique_ptr<Evaluator> evaluator;
    if (!args.toy_corpus.empty()) {
        task = load_corpus_dataset(args.toy_corpus, args.k);
        evaluator = std::make_unique<ToyLmEvaluator>();
    } else if (!args.toy_dataset.empty()) {
        task = load_labeled_dataset(args.toy_dataset, args.k);
        evaluator = std::make_unique<ToyLmEvaluator>(args.pos.at(0), args.neg.at(0));
    } else if (!args.evaluator_cmd.empty()) {
        if (args.dataset.empty()) {
            throw SchemaViolation("--evaluator-cmd needs --dataset");
        }
        task = load_labeled_dataset(args.dataset, args.k);
        evaluator = std::make_unique<CommandEvaluator>(args.evaluator_cmd, args.timeout);
    } else {
        throw SchemaViolation("pick one of --toy-corpus, --toy-dataset, --evaluator-cmd");
    }

    std::unique_ptr<TempDir> scratch;
    SweepOptions options;
    options.jobs = g.jobs;
    options.keep_checkpoints = args.keep;
    std::string workdir = args.workdir;
    if (workdir.empty()) {
        if (const char* env = std::getenv("MERGELAB_WORKDIR")) {
            workdir = env; // path override only; flags always win
        }
    }
    if (workdir.empty()) {
        scratch = std::make_unique<TempDir>("mergelab_sweep");
        options.workdir = scratch->path();
    } else {
        options.workdir = workdir;
    }

    const auto result = grid_sweep(recipe, grid, task, metric, *evaluator, options);

    if (structured(g)) {
        json j;
        j["metric"] = args.metric;
        j["method"] = args.method;
        json points = json::array();
        for (const auto& p : result.points) {
            json fold_values = json::array();
            for (const double v : p.fold_values) {
                fold_values.push_back(v);
            }
            points.push_back({{"lambda", p.lambda},
                              {"fold_values", fold_values},
                              {"mean", p.mean},
                              {"digest", p.digest}});
        }
        j["points"] = points;
        j["lambda_star"] = result.lambda_star;
        j["lambda_star_value"] = result.lambda_star_value;
        json cross = json::array();
        for (const auto& c : result.cross) {
            cross.push_back({{"selection_fold", c.selection_fold},
                             {"lambda_star", c.lambda_star},
                             {"selection_value", c.selection_value},
                             {"eval_value", c.eval_value}});
        }
        j["cross_folds"] = cross;
        j["cross_eval_mean"] = result.cross_eval_mean;
        emit_json(j, g);
    } else {
        std::printf("%8s", "lambda");
        for (int f = 0; f < args.k; ++f) {
            std::printf("  %10s%d", "fold", f);
        }
        std::printf("  %10s\n", "mean");
        for (const auto& p : result.points) {
            std::printf("%8.3f", p.lambda);
            for (const double v : p.fold_values) {
                std::printf("  %11.6f", v);
            }
            std::printf("  %10.6f\n", p.mean);
        }
        std::printf("lambda_star %.3f (selection fold 0, value %.6f)\n", result.lambda_star,
                    result.lambda_star_value);
        for (const auto& c : result.cross) {
            std::printf("selection fold %d -> lambda %.3f, eval value %.6f\n", c.selection_fold,
                        c.lambda_star, c.eval_value);
        }
        std::printf("cross_eval_mean %.6f\n", result.cross_eval_mean);
    }
    return 0;
}

// ---------------------------------------------------------------- metrics

int run_metrics(const std::string& predictions_path, const GlobalOptions& g) {
    const auto records = read_predictions(std::filesystem::path(predictions_path));
    const auto lexicon = AnswerLexicon::defaults();
    const auto scores = record_scores(records, lexicon);
    const auto labels = record_labels(records);
    const double roc = auroc(scores, labels);
    const double prc = auprc(scores, labels);
    if (structured(g)) {
        json j;
        j["n_records"] = records.size();
        j["auroc"] = roc;
        j["auprc"] = prc;
        emit_json(j, g);
    } else {
        std::printf("records %zu\n", records.size());
        std::printf("auroc   %.6f\n", roc);
        std::printf("auprc   %.6f\n", prc);
    }
    return 0;
}

// ---------------------------------------------------------------- dlt

int run_dlt(const std::string& path, double overfit_threshold, const GlobalOptions& g) {
    const auto records = read_perplexity_records(std::filesystem::path(path));
    const auto report = dlt_from_records(records, overfit_threshold);
    if (structured(g)) {
        json j;
        j["p_train"] = report.summary.p_train;
        j["p_test"] = report.summary.p_test;
        j["p_ref"] = report.summary.p_ref;
        j["delta1"] = report.delta1;
        j["delta2"] = report.delta2;
        j["interpretation"] = std::string(dlt_interpretation_name(report.interpretation));
        emit_json(j, g);
    } else {
        std::printf("p_train %.4f\n", report.summary.p_train);
        std::printf("p_test  %.4f\n", report.summary.p_test);
        std::printf("p_ref   %.4f\n", report.summary.p_ref);
        std::printf("delta1  %.4f\n", report.delta1);
        std::printf("delta2  %.4f\n", report.delta2);
        std::printf("interpretation %s\n",
                     std::string(dlt_interpretation_name(report.interpretation)).c_str());
    }
    return 0;
}

// ---------------------------------------------------------------- toylm

int run_toylm_train(const std::string& corpus, double alpha, const std::string& out) {
    const auto lines = read_lines(corpus);
    const auto model = ToyLm::train(lines, alpha);
    write_checkpoint(model.to_tensor_map(), out);
    std::printf("vocab %d symbols (+BOS), logits [%d,%d], wrote %s (digest %s)\n",
                model.vocab_size() - 1, model.vocab_size(), model.vocab_size(), out.c_str(),
                file_digest(out).c_str());
    return 0;
}

int run_toylm_perplexity(const std::string& model_path, const std::string& corpus,
                         const std::string& split, bool records_mode, bool lenient,
                         const GlobalOptions& g) {
    const auto model = ToyLm::from_tensor_map(read_checkpoint(model_path));
    const auto lines = read_lines(corpus);
    if (lines.empty()) {
        throw EmptyCorpus("corpus is empty");
    }
    split_from_name(split); // validate
    PerplexityAccumulator acc;
    std::vector<ToyLm::PplResult> per_doc;
    per_doc.reserve(lines.size());
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto r = model.perplexity(lines[i], lenient);
        per_doc.push_back(r);
        acc.add({Split::test, "doc", r.n_tokens, r.nll_sum});
    }
    if (records_mode) {
        for (std::size_t i = 0; i < lines.size(); ++i) {
            std::printf("%s doc%04zu %lld %s\n", split.c_str(), i,
                        static_cast<long long>(per_doc[i].n_tokens),
                        format_double(per_doc[i].nll_sum).c_str());
        }
        return 0;
    }
    if (structured(g)) {
        json j;
        j["split"] = split;
        j["n_docs"] = lines.size();
        j["n_tokens"] = acc.n_tokens;
        j["nll_sum"] = acc.nll_sum;
        j["perplexity"] = acc.perplexity();
        emit_json(j, g);
    } else {
        std::printf("docs %zu tokens %lld perplexity %.6f\n", lines.size(),
                    static_cast<long long>(acc.n_tokens), acc.perplexity());
    }
    return 0;
}

int run_toylm_score(const std::string& model_path, const std::string& dataset_path,
                    const std::string& pos, const std::string& neg, const std::string& out) {
    const auto model = ToyLm::from_tensor_map(read_checkpoint(model_path));
    const auto task = load_labeled_dataset(dataset_path);
    std::vector<PredictionRecord> records;
    for (const auto& ex : task.examples) {
        if (ex.text.empty()) {
            throw SchemaViolation("example '" + ex.id + "' has empty text");
        }
        const auto dist = model.next_token_distribution(ex.text.back());
        const auto pos_idx = model.symbol_index(pos.at(0));
        const auto neg_idx = model.symbol_index(neg.at(0));
        if (!pos_idx || !neg_idx) {
            throw UnknownSymbol("pos/neg symbols must be in the model vocab");
        }
        PredictionRecord rec;
        rec.id = ex.id;
        rec.label = ex.label;
        rec.logprob_yes = std::log(dist[*pos_idx]);
        rec.logprob_no = std::log(dist[*neg_idx]);
        rec.answer_text = *rec.logprob_yes >= *rec.logprob_no ? "yes" : "no";
        records.push_back(std::move(rec));
    }
    if (out.empty()) {
        for (const auto& r : records) {
            std::printf("%s\t%d\t%s\t%s\t%s\n", r.id.c_str(), r.label, r.answer_text.c_str(),
                        format_double(*r.logprob_yes).c_str(), format_double(*r.logprob_no).c_str());
        }
    } else {
        write_predictions(records, out);
        std::printf("wrote %zu predictions to %s\n", records.size(), out.c_str());
    }
    return 0;
}

// ---------------------------------------------------------------- serialize / stats

PatientFormat patient_format_from(const std::string& name) {
    if (name == "jsonl") {
        return PatientFormat::record_per_line;
    }
    if (name == "tsv") {
        return PatientFormat::delimited;
    }
    throw SchemaViolation("--patient-format must be jsonl or tsv");
}

int run_serialize(const std::string& patients, const std::string& format, const std::string& filter,
                  const std::string& prompt, const GlobalOptions& g) {
    const auto records = load_patients(patients, patient_format_from(format));
    const auto f = filter == "hard" ? SerializeFilter::hard : SerializeFilter::full;
    if (structured(g)) {
        json out = json::array();
        for (const auto& r : records) {
            std::string text = serialize_patient(r, f);
            if (!prompt.empty()) {
                text = build_prompt(text, prompt);
            }
            out.push_back({{"patient_id", r.patient_id}, {"text", text}});
        }
        json j;
        j["patients"] = out;
        emit_json(j, g);
    } else {
        for (const auto& r : records) {
            std::string text = serialize_patient(r, f);
            if (!prompt.empty()) {
                text = build_prompt(text, prompt);
            }
            std::printf("## %s\n%s\n", r.patient_id.c_str(), text.c_str());
        }
    }
    return 0;
}

int run_stats(const std::string& patients, const std::string& format, const std::string& filter,
              const std::string& texts, const GlobalOptions& g) {
    std::vector<std::string> corpus;
    if (!texts.empty()) {
        corpus = read_lines(texts);
    } else if (!patients.empty()) {
        const auto records = load_patients(patients, patient_format_from(format));
        const auto f = filter == "hard" ? SerializeFilter::hard : SerializeFilter::full;
        for (const auto& r : records) {
            corpus.push_back(serialize_patient(r, f));
        }
    } else {
        throw SchemaViolation("pass --patients or --texts");
    }
    const auto stats = corpus_stats(corpus);
    if (structured(g)) {
        json j;
        j["avg_total_chars"] = stats.avg_total_chars;
        j["avg_digit_chars"] = stats.avg_digit_chars;
        j["avg_space_chars"] = stats.avg_space_chars;
        j["avg_letterpunct_chars"] = stats.avg_letterpunct_chars;
        j["digit_proportion"] = stats.digit_proportion;
        j["space_proportion"] = stats.space_proportion;
        j["letterpunct_proportion"] = stats.letterpunct_proportion;
        emit_json(j, g);
    } else {
        std::printf("avg_total_chars       %.2f\n", stats.avg_total_chars);
        std::printf("avg_digit_chars       %.2f (%.2f%%)\n", stats.avg_digit_chars,
                    100.0 * stats.digit_proportion);
        std::printf("avg_space_chars       %.2f (%.2f%%)\n", stats.avg_space_chars,
                    100.0 * stats.space_proportion);
        std::printf("avg_letterpunct_chars %.2f (%.2f%%)\n", stats.avg_letterpunct_chars,
                    100.0 * stats.letterpunct_proportion);
    }
    return 0;
}

// ---------------------------------------------------------------- retrieve

void print_metric_row(const char* name, const std::map<std::string, double>& m) {
    std::printf("%-12s %8.4f %8.4f %8.4f %12.4f %8.4f\n", name, m.at("mrr@1000"), m.at("p@10"),
                m.at("ndcg@10"), m.at("recall@1000"), m.at("map@100"));
}

json metrics_to_json(const std::map<std::string, double>& m) {
    json j;
    for (const auto& [k, v] : m) {
        j[k] = v;
    }
    return j;
}

int run_retrieve_search(const std::string& corpus_path, const std::string& queries_path,
                        const std::string& keywords_path, std::size_t top_k, double k1, double b,
                        const std::string& tag, const std::string& out) {
    const auto corpus = read_id_text_file(corpus_path);
    const auto queries = read_id_text_file(queries_path);
    const auto index = build_index(corpus);
    std::map<std::string, std::vector<std::string>> keywords;
    if (!keywords_path.empty()) {
        keywords = read_keywords(keywords_path);
    }
    Bm25Params params{k1, b};
    std::vector<Ranking> rankings;
    for (const auto& [qid, text] : queries) {
        std::string query = text;
        const auto kw = keywords.find(qid);
        if (kw != keywords.end()) {
            query = expand_query(query, kw->second);
        }
        rankings.push_back(bm25_search(index, qid, query, top_k, params));
    }
    if (out.empty()) {
        for (const auto& r : rankings) {
            for (std::size_t i = 0; i < r.docs.size(); ++i) {
                std::printf("%s Q0 %s %zu %s %s\n", r.query_id.c_str(), r.docs[i].doc_id.c_str(), i + 1,
                            format_double(r.docs[i].score).c_str(), tag.c_str());
            }
        }
    } else {
        write_run_file(rankings, out, tag);
        std::printf("wrote %zu rankings to %s\n", rankings.size(), out.c_str());
    }
    return 0;
}

int run_retrieve_fuse(const std::vector<std::string>& run_paths, int k_rrf, const std::string& tag,
                      const std::string& out) {
    std::vector<std::vector<Ranking>> runs;
    for (const auto& p : run_paths) {
        runs.push_back(read_run_file(p));
    }
    std::map<std::string, std::vector<Ranking>> by_query;
    for (const auto& run : runs) {
        for (const auto& r : run) {
            by_query[r.query_id].push_back(r);
        }
    }
    std::vector<Ranking> fused;
    for (const auto& [qid, rankings] : by_query) {
        fused.push_back(rrf_fuse(rankings, k_rrf));
    }
    if (out.empty()) {
        for (const auto& r : fused) {
            for (std::size_t i = 0; i < r.docs.size(); ++i) {
                std::printf("%s Q0 %s %zu %s %s\n", r.query_id.c_str(), r.docs[i].doc_id.c_str(), i + 1,
                            format_double(r.docs[i].score).c_str(), tag.c_str());
            }
        }
    } else {
        write_run_file(fused, out, tag);
        std::printf("wrote %zu fused rankings to %s\n", fused.size(), out.c_str());
    }
    return 0;
}

int run_retrieve_eval(const std::string& run_path, const std::string& qrels_path,
                      const IrOptions& ir_options, const GlobalOptions& g) {
    const auto rankings = read_run_file(run_path);
    const auto qrels = read_qrels(qrels_path);
    const auto m = mean_ir_metrics(rankings, qrels, ir_options);
    if (structured(g)) {
        emit_json(metrics_to_json(m), g);
    } else {
        std::printf("%-12s %8s %8s %8s %12s %8s\n", "run", "mrr@1000", "p@10", "ndcg@10", "recall@1000",
                    "map@100");
        print_metric_row("run", m);
    }
    return 0;
}

int run_retrieve_bench(const std::string& corpus_path, const std::string& queries_path,
                       const std::string& keywords_path, const std::string& qrels_path, std::size_t top_k,
                       int k_rrf, const IrOptions& ir_options, const GlobalOptions& g) {
    const auto corpus = read_id_text_file(corpus_path);
    const auto queries = read_id_text_file(queries_path);
    const auto keywords = read_keywords(keywords_path);
    const auto qrels = read_qrels(qrels_path);
    const auto index = build_index(corpus);

    std::vector<Ranking> base, expanded, fused;
    for (const auto& [qid, text] : queries) {
        auto r_base = bm25_search(index, qid, text, top_k, {});
        const auto kw = keywords.find(qid);
        const std::string q_exp =
            kw == keywords.end() ? text : expand_query(text, kw->second);
        auto r_exp = bm25_search(index, qid, q_exp, top_k, {});
        fused.push_back(rrf_fuse({r_base, r_exp}, k_rrf));
        base.push_back(std::move(r_base));
        expanded.push_back(std::move(r_exp));
    }
    const auto m_base = mean_ir_metrics(base, qrels, ir_options);
    const auto m_exp = mean_ir_metrics(expanded, qrels, ir_options);
    const auto m_rrf = mean_ir_metrics(fused, qrels, ir_options);
    if (structured(g)) {
        json j;
        j["bm25"] = metrics_to_json(m_base);
        j["bm25_qe"] = metrics_to_json(m_exp);
        j["rrf"] = metrics_to_json(m_rrf);
        emit_json(j, g);
    } else {
        std::printf("%-12s %8s %8s %8s %12s %8s\n", "run", "mrr@1000", "p@10", "ndcg@10", "recall@1000",
                    "map@100");
        print_metric_row("bm25", m_base);
        print_metric_row("bm25_qe", m_exp);
        print_metric_row("rrf", m_rrf);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"checkpoint merging, lambda sweeps, and the evaluation stack around them"};
    app.require_subcommand(1);
    app.fallthrough(); // global flags may appear after the subcommand

    GlobalOptions g;
    app.add_option("--format", g.format, "output format")->check(CLI::IsMember({"text", "structured"}));
    app.add_option("--seed", g.seed, "seed for fixture generation");
    app.add_option("--jobs", g.jobs, "worker cap for parallel stages");
    app.add_flag("--deterministic", g.deterministic, "omit timestamps from structured output");

    // merge
    MergeArgs margs;
    auto* merge_cmd = app.add_subcommand("merge", "merge checkpoints per a recipe");
    merge_cmd->add_option("--recipe", margs.recipe_path, "recipe JSON file");
    merge_cmd->add_option("--inputs", margs.inputs, "input checkpoints")->expected(2, -1);
    merge_cmd->add_option("--method", margs.method)->check(CLI::IsMember({"linear", "slerp"}));
    merge_cmd->add_option("--lambda", margs.lambda, "weight of the LAST-listed input");
    merge_cmd->add_option("--lambdas", margs.lambdas, "explicit weights, one per input");
    merge_cmd->add_option("--out", margs.out, "output checkpoint path");
    merge_cmd->add_option("--parallel-epsilon", margs.parallel_epsilon);
    merge_cmd->add_option("--antipodal", margs.antipodal)->check(CLI::IsMember({"error", "flip_sign"}));
    merge_cmd->add_option("--angle-scope", margs.angle_scope)
        ->check(CLI::IsMember({"per_tensor", "global"}));
    merge_cmd->add_option("--dtype-policy", margs.dtype_policy)
        ->check(CLI::IsMember({"preserve", "force_f32"}));
    merge_cmd->add_flag("--strict-finite", margs.strict_finite, "reject NaN/Inf tensors on write");

    // sweep
    SweepArgs sargs;
    auto* sweep_cmd = app.add_subcommand("sweep", "lambda grid search over merged checkpoints");
    sweep_cmd->add_option("--recipe", sargs.recipe_path, "recipe template (lambda/output ignored)");
    sweep_cmd->add_option("--inputs", sargs.inputs, "two input checkpoints")->expected(2);
    sweep_cmd->add_option("--method", sargs.method)
        ->check(CLI::IsMember({"linear", "slerp"}))
        ->each([&sargs](const std::string&) { sargs.method_set = true; });
    sweep_cmd->add_option("--grid", sargs.grid, "start:stop:step");
    sweep_cmd->add_option("--metric", sargs.metric)
        ->check(CLI::IsMember({"auroc", "auprc", "neg_perplexity"}));
    sweep_cmd->add_option("--k", sargs.k, "fold count");
    sweep_cmd->add_option("--toy-corpus", sargs.toy_corpus, "unlabeled corpus for neg_perplexity");
    sweep_cmd->add_option("--toy-dataset", sargs.toy_dataset, "labeled TSV for toy yes/no scoring");
    sweep_cmd->add_option("--evaluator-cmd", sargs.evaluator_cmd,
                          "external command with {checkpoint} {fold} {out}");
    sweep_cmd->add_option("--dataset", sargs.dataset, "labeled TSV for the external evaluator");
    sweep_cmd->add_option("--workdir", sargs.workdir, "scratch dir for merged checkpoints");
    sweep_cmd->add_option("--pos", sargs.pos, "positive symbol for toy scoring");
    sweep_cmd->add_option("--neg", sargs.neg, "negative symbol for toy scoring");
    sweep_cmd->add_option("--timeout", sargs.timeout, "evaluator timeout in seconds");
    sweep_cmd->add_flag("--keep", sargs.keep, "keep per-lambda checkpoints in workdir");

    // metrics
    std::string predictions_path;
    auto* metrics_cmd = app.add_subcommand("metrics", "AUROC/AUPRC from a predictions file");
    metrics_cmd->add_option("--predictions", predictions_path)->required();

    // dlt
    std::string perplexities_path;
    double overfit_threshold = 0.2;
    auto* dlt_cmd = app.add_subcommand("dlt", "leakage deltas from perplexity records");
    dlt_cmd->add_option("--perplexities", perplexities_path)->required();
    dlt_cmd->add_option("--overfit-threshold", overfit_threshold);

    // toylm
    auto* toylm_cmd = app.add_subcommand("toylm", "train/score the built-in bigram model");
    toylm_cmd->require_subcommand(1);
    std::string tl_corpus, tl_out, tl_model, tl_split = "test", tl_dataset, tl_pos = "y", tl_neg = "n",
                           tl_score_out, tl_fixture_dir;
    double tl_alpha = 1.0;
    bool tl_records = false, tl_lenient = false;
    auto* tl_train = toylm_cmd->add_subcommand("train", "train a bigram checkpoint");
    tl_train->add_option("--corpus", tl_corpus)->required();
    tl_train->add_option("--alpha", tl_alpha);
    tl_train->add_option("--out", tl_out)->required();
    auto* tl_ppl = toylm_cmd->add_subcommand("perplexity", "perplexity of a corpus under a model");
    tl_ppl->add_option("--model", tl_model)->required();
    tl_ppl->add_option("--corpus", tl_corpus)->required();
    tl_ppl->add_option("--split", tl_split, "split tag for emitted records");
    tl_ppl->add_flag("--records", tl_records, "emit per-document perplexity records");
    tl_ppl->add_flag("--lenient", tl_lenient, "map unknown symbols to BOS");
    auto* tl_score = toylm_cmd->add_subcommand("score", "yes/no scores as a predictions file");
    tl_score->add_option("--model", tl_model)->required();
    tl_score->add_option("--dataset", tl_dataset)->required();
    tl_score->add_option("--pos", tl_pos);
    tl_score->add_option("--neg", tl_neg);
    tl_score->add_option("--out", tl_score_out);
    auto* tl_fixture = toylm_cmd->add_subcommand("fixture", "write the seeded toy corpora");
    tl_fixture->add_option("--out-dir", tl_fixture_dir)->required();

    // serialize
    std::string se_patients, se_format = "jsonl", se_filter = "full", se_prompt;
    auto* serialize_cmd = app.add_subcommand("serialize", "patient records to prompt text");
    serialize_cmd->add_option("--patients", se_patients)->required();
    serialize_cmd->add_option("--patient-format", se_format)->check(CLI::IsMember({"jsonl", "tsv"}));
    serialize_cmd->add_option("--filter", se_filter)->check(CLI::IsMember({"full", "hard"}));
    serialize_cmd->add_option("--prompt", se_prompt, "wrap in a prompt template (mortality|qe)");

    // stats
    std::string st_patients, st_format = "jsonl", st_filter = "full", st_texts;
    auto* stats_cmd = app.add_subcommand("stats", "character-class statistics of serialized text");
    stats_cmd->add_option("--patients", st_patients);
    stats_cmd->add_option("--patient-format", st_format)->check(CLI::IsMember({"jsonl", "tsv"}));
    stats_cmd->add_option("--filter", st_filter)->check(CLI::IsMember({"full", "hard"}));
    stats_cmd->add_option("--texts", st_texts, "one text per line (alternative to --patients)");

    // retrieve
    auto* retrieve_cmd = app.add_subcommand("retrieve", "BM25 search, RRF fusion, IR metrics");
    retrieve_cmd->require_subcommand(1);
    std::string rt_corpus, rt_queries, rt_keywords, rt_qrels, rt_run, rt_out, rt_tag = "bm25";
    std::vector<std::string> rt_runs;
    std::size_t rt_top_k = 1000;
    double rt_k1 = 1.2, rt_b = 0.75;
    int rt_k_rrf = 60;
    std::string rt_map_denom = "all";
    auto* rt_search = retrieve_cmd->add_subcommand("search", "BM25 run over a corpus");
    rt_search->add_option("--corpus", rt_corpus)->required();
    rt_search->add_option("--queries", rt_queries)->required();
    rt_search->add_option("--keywords", rt_keywords, "query expansion keywords file");
    rt_search->add_option("--top-k", rt_top_k);
    rt_search->add_option("--k1", rt_k1);
    rt_search->add_option("--b", rt_b);
    rt_search->add_option("--tag", rt_tag);
    rt_search->add_option("--out", rt_out);
    auto* rt_fuse = retrieve_cmd->add_subcommand("fuse", "RRF-fuse run files");
    rt_fuse->add_option("--runs", rt_runs)->expected(2, -1)->required();
    rt_fuse->add_option("--k-rrf", rt_k_rrf);
    rt_fuse->add_option("--tag", rt_tag);
    rt_fuse->add_option("--out", rt_out);
    auto* rt_eval = retrieve_cmd->add_subcommand("eval", "score a run against qrels");
    rt_eval->add_option("--run", rt_run)->required();
    rt_eval->add_option("--qrels", rt_qrels)->required();
    rt_eval->add_option("--map-denom", rt_map_denom, "MAP@100 denominator: all relevant or capped at 100")
        ->check(CLI::IsMember({"all", "capped"}));
    auto* rt_bench = retrieve_cmd->add_subcommand("bench", "bm25 vs expanded vs RRF table");
    rt_bench->add_option("--corpus", rt_corpus)->required();
    rt_bench->add_option("--queries", rt_queries)->required();
    rt_bench->add_option("--keywords", rt_keywords)->required();
    rt_bench->add_option("--qrels", rt_qrels)->required();
    rt_bench->add_option("--top-k", rt_top_k);
    rt_bench->add_option("--k-rrf", rt_k_rrf);
    rt_bench->add_option("--map-denom", rt_map_denom, "MAP@100 denominator: all relevant or capped at 100")
        ->check(CLI::IsMember({"all", "capped"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e); // prints the offending flag / help text
        return code == 0 ? 0 : 1;     // usage errors are exit 1
    }

    try {
        if (merge_cmd->parsed()) {
            if (margs.recipe_path.empty() && margs.inputs.empty()) {
                std::fprintf(stderr, "merge: pass --recipe or --inputs\n");
                return 1;
            }
            return run_merge(margs, g);
        }
        if (sweep_cmd->parsed()) {
            return run_sweep(sargs, g);
        }
        if (metrics_cmd->parsed()) {
            return run_metrics(predictions_path, g);
        }
        if (dlt_cmd->parsed()) {
            return run_dlt(perplexities_path, overfit_threshold, g);
        }
        if (toylm_cmd->parsed()) {
            if (tl_train->parsed()) {
                return run_toylm_train(tl_corpus, tl_alpha, tl_out);
            }
            if (tl_ppl->parsed()) {
                return run_toylm_perplexity(tl_model, tl_corpus, tl_split, tl_records, tl_lenient, g);
            }
            if (tl_score->parsed()) {
                return run_toylm_score(tl_model, tl_dataset, tl_pos, tl_neg, tl_score_out);
            }
            if (tl_fixture->parsed()) {
                write_fixture_files(tl_fixture_dir, g.seed);
                std::printf("wrote fixtures (seed %llu) to %s\n",
                            static_cast<unsigned long long>(g.seed), tl_fixture_dir.c_str());
                return 0;
            }
        }
        if (serialize_cmd->parsed()) {
            return run_serialize(se_patients, se_format, se_filter, se_prompt, g);
        }
        if (stats_cmd->parsed()) {
            return run_stats(st_patients, st_format, st_filter, st_texts, g);
        }
        if (retrieve_cmd->parsed()) {
            if (rt_search->parsed()) {
                return run_retrieve_search(rt_corpus, rt_queries, rt_keywords, rt_top_k, rt_k1, rt_b,
                                           rt_tag, rt_out);
            }
            if (rt_fuse->parsed()) {
                return run_retrieve_fuse(rt_runs, rt_k_rrf, rt_tag, rt_out);
            }
            IrOptions ir_options;
            ir_options.map_capped_denominator = rt_map_denom == "capped";
            if (rt_eval->parsed()) {
                return run_retrieve_eval(rt_run, rt_qrels, ir_options, g);
            }
            if (rt_bench->parsed()) {
                return run_retrieve_bench(rt_corpus, rt_queries, rt_keywords, rt_qrels, rt_top_k,
                                          rt_k_rrf, ir_options, g);
            }
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "unexpected error: %s\n", e.what());
        return 2;
    }
    return 1;
}
