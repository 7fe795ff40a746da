// guidemod: guideline-moderated annotation toolkit.
//
// Subcommands: annotate, evaluate, analyze, moderate, loop, stats, report.
// `loop` exit codes: 0 quality threshold reached, 2 converged below the
// threshold (no-gain or iteration cap), 3 aborted inside a moderation stage.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "guidemod/annotator.hpp"
#include "guidemod/corpus.hpp"
#include "guidemod/discrepancy.hpp"
#include "guidemod/eval.hpp"
#include "guidemod/moderator.hpp"
#include "guidemod/orchestrator.hpp"
#include "guidemod/report.hpp"
#include "guidemod/stats.hpp"
#include "guidemod/util.hpp"

using namespace guidemod;

namespace {

std::map<std::string, AnnotationSet> load_preds(const std::filesystem::path& dir,
                                                const Corpus& corpus, int iteration,
                                                const std::string& model_id) {
    return corpus::load_annotation_dir(dir, corpus,
                                       Provenance::make_predicted(iteration, model_id));
}

void print_evaluation(const eval::CorpusEvaluation& result, const std::string& dataset,
                      const std::string& model, int iteration) {
    report::ScoreTableRow row;
    row.dataset = dataset;
    row.model = model;
    row.iteration = iteration;
    row.score = result.pooled_score;
    row.tp = result.pooled.tp;
    row.tp_per_label = result.tp_per_label;
    std::cout << report::render_score_table({row});
    for (const auto& [label, score] : result.per_label_scores) {
        std::printf("  %-24s P=%.4f R=%.4f F1=%.4f tp=%ld fp=%ld fn=%ld\n", label.c_str(),
                    score.precision, score.recall, score.f1, result.per_label.at(label).tp,
                    result.per_label.at(label).fp, result.per_label.at(label).fn);
    }
}

int run_annotate(const std::string& config_path, int iteration, const std::string& guideline_path,
                 const std::string& out_dir) {
    auto config = orchestrator::LoopConfig::load(config_path);
    const auto corpus = corpus::load_corpus(config.dev_corpus).corpus;
    const auto schema = EntitySchema::load(config.schema.string());
    const auto guideline = moderator::Guideline::from_text(
        iteration, util::read_file(guideline_path.empty() ? config.guideline
                                                          : std::filesystem::path(guideline_path)));
    auto gw = orchestrator::make_gateway(config);

    annotator::AnnotateOptions options;
    options.parallelism = config.parallelism;
    options.out_dir = out_dir;
    std::filesystem::create_directories(out_dir);
    const auto run =
        annotator::annotate_corpus(*gw, config.model, schema, guideline, corpus, iteration,
                                   util::read_file(config.annotation_template), options);
    long accepted = 0, repaired = 0, dropped = 0, failed = 0;
    for (const auto& [doc_id, outcome] : run.outcomes) {
        accepted += outcome.accepted;
        repaired += outcome.repaired;
        dropped += outcome.dropped;
        if (outcome.error_note) {
            ++failed;
            std::cerr << "warning: " << doc_id << ": " << *outcome.error_note << "\n";
        }
    }
    std::printf("annotated %zu documents: %ld accepted, %ld repaired, %ld dropped, %ld failed\n",
                run.sets.size(), accepted, repaired, dropped, failed);
    std::printf("cost %.6f over %.2f min of call latency\n", gw->ledger().cost_of(iteration),
                gw->ledger().minutes_of(iteration));
    return 0;
}

int run_evaluate(const std::string& gold_dir, const std::string& pred_dir,
                 const std::string& out_path) {
    const auto loaded = corpus::load_corpus(gold_dir);
    for (const auto& warning : loaded.stats.warnings) std::cerr << "warning: " << warning << "\n";
    const auto preds = load_preds(pred_dir, loaded.corpus, -1, "");
    const auto result = eval::evaluate_corpus(preds, loaded.corpus.gold);
    print_evaluation(result, std::filesystem::path(gold_dir).filename().string(), "-", -1);
    if (!out_path.empty()) {
        util::write_file(out_path, eval::evaluation_to_json(result).dump(2) + "\n");
        std::printf("wrote %s\n", out_path.c_str());
    }
    return 0;
}

int run_analyze(const std::string& gold_dir, const std::string& pred_dir,
                const std::string& schema_path, long window, const std::string& out_dir) {
    const auto loaded = corpus::load_corpus(gold_dir);
    const auto preds = load_preds(pred_dir, loaded.corpus, -1, "");
    discrepancy::AnalysisOptions options;
    options.context.window = window;
    if (!schema_path.empty()) options.label_order = EntitySchema::load(schema_path).label_names();
    const auto report = discrepancy::analyze_corpus(preds, loaded.corpus.gold, loaded.corpus,
                                                    options);
    const auto matrix_text = report::render_matrix(report.matrix);
    std::cout << matrix_text;
    if (report.dominant) {
        std::printf("dominant group: %s (%ld cases of %zu)\n",
                    discrepancy::group_key_name(*report.dominant).c_str(),
                    report.group_counts.at(*report.dominant), report.cases.size());
    } else {
        std::printf("no discrepancies: nothing to moderate\n");
    }
    if (!out_dir.empty()) {
        util::write_file(std::filesystem::path(out_dir) / "discrepancies.json",
                         discrepancy::report_to_json(report).dump(2) + "\n");
        util::write_file(std::filesystem::path(out_dir) / "matrix.txt", matrix_text);
        std::printf("wrote %s\n", out_dir.c_str());
    }
    return 0;
}

int run_moderate(const std::string& config_path, const std::string& pred_dir, int iteration,
                 const std::string& guideline_path, const std::string& out_dir) {
    auto config = orchestrator::LoopConfig::load(config_path);
    const auto corpus = corpus::load_corpus(config.dev_corpus).corpus;
    const auto schema = EntitySchema::load(config.schema.string());
    const auto guideline = moderator::Guideline::from_text(
        iteration, util::read_file(guideline_path.empty() ? config.guideline
                                                          : std::filesystem::path(guideline_path)));
    const auto preds = load_preds(pred_dir, corpus, iteration, config.model.model_id);
    const auto evaluation = eval::evaluate_corpus(preds, corpus.gold);

    discrepancy::AnalysisOptions analysis;
    analysis.context.window = config.context_window;
    analysis.label_order = schema.label_names();
    const auto report = discrepancy::analyze_corpus(preds, corpus.gold, corpus, analysis);
    if (!report.dominant) {
        std::printf("no discrepancies: nothing to moderate\n");
        return 0;
    }

    auto gw = orchestrator::make_gateway(config);
    moderator::StageTemplates templates{util::read_file(config.pattern_template),
                                        util::read_file(config.principle_template),
                                        util::read_file(config.refinement_template)};
    moderator::ModerationOptions options;
    options.tp_cap = config.tp_cap;
    options.tp_seed = config.tp_seed;
    options.rename_whitelist = config.rename_whitelist;
    const auto record =
        moderator::run_moderation_round(*gw, config.model, templates, schema, guideline, report,
                                        evaluation.matched, corpus, iteration, options);
    util::write_file(std::filesystem::path(out_dir) / "record.json",
                     record.to_json().dump(2) + "\n");
    util::write_file(std::filesystem::path(out_dir) / "guideline-after.md",
                     record.guideline_after.text);
    std::printf("moderated group %s; refined guideline v%d written to %s\n",
                discrepancy::group_key_name(record.dominant).c_str(),
                record.guideline_after.version, out_dir.c_str());
    return 0;
}

int run_loop_cmd(const std::string& config_path) {
    const auto config = orchestrator::LoopConfig::load(config_path);
    const auto summary = orchestrator::run_loop(config);
    for (const auto& it : summary.iterations) {
        std::printf("iter %d: IAA=%.4f tp=%ld fp=%ld fn=%ld cost=%.6f minutes=%.2f%s\n", it.k,
                    it.iaa, it.pooled.tp, it.pooled.fp, it.pooled.fn, it.cost, it.minutes,
                    it.moderated ? " [moderated]" : "");
    }
    std::printf("status=%s stop=%s accepted_iteration=%d refinements_accepted=%d archive=%s\n",
                summary.status.c_str(), orchestrator::stop_reason_name(summary.stop_reason),
                summary.accepted_iteration, summary.refinements_accepted,
                summary.archive.string().c_str());
    if (summary.status == "aborted") {
        std::fprintf(stderr, "aborted at stage: %s\n",
                     summary.aborted_stage.value_or("?").c_str());
        return 3;
    }
    return summary.stop_reason == orchestrator::StopReason::threshold ? 0 : 2;
}

int run_stats(const std::string& archive_g, const std::string& archive_m, long b, long r,
              std::uint64_t seed) {
    const auto paired = orchestrator::paired_counts_from_archives(archive_g, archive_m);
    const auto result = stats::run_significance(paired, b, r, seed);
    const double g = stats::pooled_f1(paired, false);
    const double m = stats::pooled_f1(paired, true);
    std::printf("G\tM\tdelta\tbootstrap_p\tar_p\n");
    std::printf("%.4f\t%.4f\t%+.4f\t%.4f\t%.4f\n", g, m, result.delta_observed,
                result.p_bootstrap, result.p_randomization);
    std::printf("(B=%ld, R=%ld, seed=%llu, %zu paired documents)\n", b, r,
                static_cast<unsigned long long>(seed), paired.size());
    return 0;
}

int run_report(const std::string& archive_path, int matrix_iteration,
               const std::string& check_scores, const std::string& check_costs) {
    if (!check_scores.empty()) {
        const auto rows = report::load_summary_rows(check_scores);
        int failures = 0;
        for (const auto& row : rows) {
            const auto check = report::check_summary_row(row);
            if (!check.f1_ok || !check.tp_ok) {
                ++failures;
                std::printf("INCONSISTENT %s/%s/%s: f1 diff %.4f%s, tp diff %.2f%s\n",
                            row.dataset.c_str(), row.model.c_str(), row.mode.c_str(),
                            check.f1_diff, check.f1_ok ? "" : " (FAIL)", check.tp_diff,
                            check.tp_ok ? "" : " (FAIL)");
            }
        }
        std::printf("%zu summary rows checked, %d inconsistent\n", rows.size(), failures);
    }
    if (!check_costs.empty()) {
        const auto rows = report::load_cost_rows(check_costs);
        int failures = 0;
        for (const auto& row : rows) {
            const auto check = report::check_cost_row(row);
            if (!check.c_ok || !check.t_ok) ++failures;
        }
        std::printf("%zu cost rows checked, %d inconsistent\n", rows.size(), failures);
    }
    if (archive_path.empty()) return 0;

    const auto summary = orchestrator::load_run_summary(archive_path);
    std::vector<report::ScoreTableRow> rows;
    for (const auto& it : summary.iterations) {
        report::ScoreTableRow row;
        row.dataset = std::filesystem::path(archive_path).filename().string();
        row.model = "-";
        row.iteration = it.k;
        char name[16];
        std::snprintf(name, sizeof(name), "iter-%03d", it.k);
        const auto ej = nlohmann::json::parse(
            util::read_file(std::filesystem::path(archive_path) / name / "evaluation.json"));
        row.score.precision = ej.at("pooled_score").at("precision").get<double>();
        row.score.recall = ej.at("pooled_score").at("recall").get<double>();
        row.score.f1 = ej.at("pooled_score").at("f1").get<double>();
        row.tp = it.pooled.tp;
        rows.push_back(std::move(row));
    }
    std::cout << report::render_score_table(rows);
    std::printf("stop=%s accepted_iteration=%d refinements_accepted=%d\n",
                orchestrator::stop_reason_name(summary.stop_reason), summary.accepted_iteration,
                summary.refinements_accepted);

    const int k = matrix_iteration >= 0 ? matrix_iteration : summary.accepted_iteration;
    char name[16];
    std::snprintf(name, sizeof(name), "iter-%03d", k);
    const auto matrix_file = std::filesystem::path(archive_path) / name / "matrix.txt";
    if (std::filesystem::exists(matrix_file)) {
        std::printf("\ndiscrepancy matrix, iteration %d:\n%s", k,
                    util::read_file(matrix_file).c_str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"guideline-moderated annotation toolkit"};
    app.require_subcommand(1);

    std::string config_path, gold_dir, pred_dir, out_path, guideline_path, schema_path;
    std::string archive_g, archive_m, check_scores, check_costs;
    int iteration = 0;
    int matrix_iteration = -1;
    long window = 60, bootstrap_n = 5000, randomization_n = 20000;
    std::uint64_t seed = 0;

    auto* annotate = app.add_subcommand("annotate", "annotate the dev corpus once");
    annotate->add_option("--config", config_path)->required();
    annotate->add_option("--iteration", iteration);
    annotate->add_option("--guideline", guideline_path, "override the config's guideline");
    annotate->add_option("--out", out_path)->required();

    auto* evaluate = app.add_subcommand("evaluate", "strict span-and-type scoring");
    evaluate->add_option("--gold", gold_dir)->required();
    evaluate->add_option("--pred", pred_dir)->required();
    evaluate->add_option("--out", out_path, "also write evaluation.json here");

    auto* analyze = app.add_subcommand("analyze", "discrepancy report and matrix");
    analyze->add_option("--gold", gold_dir)->required();
    analyze->add_option("--pred", pred_dir)->required();
    analyze->add_option("--schema", schema_path, "label order for the matrix");
    analyze->add_option("--window", window, "context characters per side");
    analyze->add_option("--out", out_path, "directory for discrepancies.json and matrix.txt");

    auto* moderate = app.add_subcommand("moderate", "one moderation round");
    moderate->add_option("--config", config_path)->required();
    moderate->add_option("--pred", pred_dir)->required();
    moderate->add_option("--iteration", iteration);
    moderate->add_option("--guideline", guideline_path, "override the config's guideline");
    moderate->add_option("--out", out_path)->required();

    auto* loop = app.add_subcommand("loop", "run the full moderation loop");
    loop->add_option("--config", config_path)->required();

    auto* stats_cmd = app.add_subcommand("stats", "paired significance tests for two runs");
    stats_cmd->add_option("--archive-g", archive_g)->required();
    stats_cmd->add_option("--archive-m", archive_m)->required();
    stats_cmd->add_option("--bootstrap", bootstrap_n);
    stats_cmd->add_option("--permutations", randomization_n);
    stats_cmd->add_option("--seed", seed);

    auto* report_cmd = app.add_subcommand("report", "tables and matrices from a run archive");
    report_cmd->add_option("--archive", archive_g);
    report_cmd->add_option("--matrix-iteration", matrix_iteration);
    report_cmd->add_option("--check-scores", check_scores,
                           "validate a reported-score summary file");
    report_cmd->add_option("--check-costs", check_costs, "validate a reported-cost file");

    CLI11_PARSE(app, argc, argv);

    try {
        if (annotate->parsed()) {
            return run_annotate(config_path, iteration, guideline_path, out_path);
        }
        if (evaluate->parsed()) return run_evaluate(gold_dir, pred_dir, out_path);
        if (analyze->parsed()) {
            return run_analyze(gold_dir, pred_dir, schema_path, window, out_path);
        }
        if (moderate->parsed()) {
            return run_moderate(config_path, pred_dir, iteration, guideline_path, out_path);
        }
        if (loop->parsed()) return run_loop_cmd(config_path);
        if (stats_cmd->parsed()) {
            return run_stats(archive_g, archive_m, bootstrap_n, randomization_n, seed);
        }
        if (report_cmd->parsed()) {
            return run_report(archive_g, matrix_iteration, check_scores, check_costs);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
