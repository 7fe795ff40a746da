#include "guidemod/orchestrator.hpp"

#include <algorithm>
#include <sstream>

#include "guidemod/corpus.hpp"
#include "guidemod/discrepancy.hpp"
#include "guidemod/report.hpp"
#include "guidemod/util.hpp"

namespace guidemod::orchestrator {

const char* stop_reason_name(StopReason r) {
    switch (r) {
        case StopReason::none: return "none";
        case StopReason::threshold: return "threshold";
        case StopReason::no_gain: return "no_gain";
        case StopReason::max_iterations: return "max_iterations";
    }
    return "?";
}

namespace {

StopReason stop_reason_from_string(const std::string& s) {
    if (s == "none") return StopReason::none;
    if (s == "threshold") return StopReason::threshold;
    if (s == "no_gain") return StopReason::no_gain;
    if (s == "max_iterations") return StopReason::max_iterations;
    throw std::invalid_argument("unknown stop reason: " + s);
}

}  // namespace

Decision decide_termination(const std::vector<double>& iaa_history, double tau,
                            int max_iterations) {
    if (iaa_history.empty()) {
        throw std::invalid_argument("decide_termination: empty history");
    }
    const int k = static_cast<int>(iaa_history.size()) - 1;
    const double iaa_k = iaa_history.back();
    if (iaa_k >= tau) {
        return {true, StopReason::threshold, k};
    }
    // the most recent refinement is discarded when it fails to improve
    if (k > 0 && iaa_k <= iaa_history[static_cast<std::size_t>(k) - 1]) {
        return {true, StopReason::no_gain, k - 1};
    }
    if (k + 1 >= max_iterations) {
        return {true, StopReason::max_iterations, k};
    }
    return {false, StopReason::none, k};
}

std::map<std::string, PriceEntry> load_price_table(const std::filesystem::path& path) {
    std::map<std::string, PriceEntry> table;
    const auto lines = util::split_lines(util::read_file(path));
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::string line = util::trim(lines[i]);
        if (line.empty() || line.starts_with("#")) continue;
        if (i == 0 && line.starts_with("model_id")) continue;  // header
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string col;
        while (std::getline(ss, col, ',')) cols.push_back(util::trim(col));
        if (cols.size() < 3) {
            throw std::runtime_error(path.string() + ": bad price row: " + line);
        }
        PriceEntry entry;
        entry.price_in = std::stod(cols[1]);
        entry.price_out = std::stod(cols[2]);
        if (cols.size() > 3) entry.currency = cols[3];
        table[cols[0]] = entry;
    }
    return table;
}

LoopConfig LoopConfig::load(const std::filesystem::path& path,
                            const std::optional<std::filesystem::path>& price_table_override) {
    const auto j = nlohmann::json::parse(util::read_file(path));
    const auto base = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
    const auto resolve = [&](const std::string& p) -> std::filesystem::path {
        std::filesystem::path fp(p);
        return fp.is_absolute() ? fp : base / fp;
    };

    LoopConfig config;
    config.dev_corpus = resolve(j.at("dev_corpus").get<std::string>());
    config.guideline = resolve(j.at("guideline").get<std::string>());
    config.schema = resolve(j.at("schema").get<std::string>());
    const auto& templates = j.at("templates");
    config.annotation_template = resolve(templates.at("annotation").get<std::string>());
    config.pattern_template = resolve(templates.at("pattern_explanation").get<std::string>());
    config.principle_template = resolve(templates.at("principle_generation").get<std::string>());
    config.refinement_template = resolve(templates.at("guideline_refinement").get<std::string>());
    config.archive = resolve(j.at("archive").get<std::string>());

    const auto& model = j.at("model");
    config.model.family = gateway::model_family_from_string(model.value("family", "other"));
    config.model.model_id = model.at("model_id").get<std::string>();
    if (model.contains("reasoning_options")) {
        for (const auto& [key, value] : model["reasoning_options"].items()) {
            config.model.reasoning_options[key] =
                value.is_string() ? value.get<std::string>() : value.dump();
        }
    }

    config.tau = j.value("tau", 0.9);
    config.max_iterations = j.value("max_iterations", 10);
    config.parallelism = j.value("parallelism", 1);
    config.context_window = j.value("context_window", 60L);
    if (j.contains("seeds")) config.tp_seed = j["seeds"].value("tp_sample", 0ULL);
    config.tp_cap = j.value("tp_examples_cap", std::size_t{10});
    if (j.contains("rename_whitelist")) {
        for (const auto& [key, value] : j["rename_whitelist"].items()) {
            config.rename_whitelist[key] = value.get<std::string>();
        }
    }

    const auto& gw = j.at("gateway");
    config.mode = gateway::gateway_mode_from_string(gw.at("mode").get<std::string>());
    if (gw.contains("store")) config.fixture_store = resolve(gw["store"].get<std::string>());
    config.provider_kind = gw.value("provider", "http");
    if (gw.contains("endpoint")) config.http.endpoint = gw["endpoint"].get<std::string>();
    if (gw.contains("api_key_env")) config.http.api_key_env = gw["api_key_env"].get<std::string>();
    if (gw.contains("script")) config.script = resolve(gw["script"].get<std::string>());

    std::optional<std::filesystem::path> price_table = price_table_override;
    if (!price_table && j.contains("price_table")) {
        price_table = resolve(j["price_table"].get<std::string>());
    }
    if (price_table) {
        const auto table = load_price_table(*price_table);
        const auto it = table.find(config.model.model_id);
        if (it != table.end()) {
            config.model.price_in = it->second.price_in;
            config.model.price_out = it->second.price_out;
        }
    }
    return config;
}

std::unique_ptr<gateway::CompletionGateway> make_gateway(const LoopConfig& config) {
    std::shared_ptr<gateway::Provider> provider;
    if (config.mode != gateway::GatewayMode::replay) {
        if (config.provider_kind == "scripted") {
            provider = std::make_shared<gateway::ScriptedProvider>(
                gateway::ScriptedProvider::load(config.script));
        } else {
            provider = std::make_shared<gateway::HttpProvider>(config.http);
        }
    }
    std::shared_ptr<gateway::ReplayStore> store;
    if (config.mode != gateway::GatewayMode::live) {
        store = std::make_shared<gateway::ReplayStore>(config.fixture_store);
    }
    return std::make_unique<gateway::CompletionGateway>(config.mode, std::move(provider),
                                                        std::move(store));
}

namespace {

std::filesystem::path iter_dir(const std::filesystem::path& archive, int k) {
    char name[16];
    std::snprintf(name, sizeof(name), "iter-%03d", k);
    return archive / name;
}

bool iteration_complete(const std::filesystem::path& dir) {
    return std::filesystem::exists(dir / "guideline.md") &&
           std::filesystem::exists(dir / "evaluation.json");
}

bool iteration_moderated(const std::filesystem::path& dir) {
    return std::filesystem::exists(dir / "moderation" / "record.json") &&
           std::filesystem::exists(dir / "moderation" / "guideline-after.md");
}

nlohmann::json run_summary_to_json(const RunSummary& summary, double tau, int max_iterations) {
    nlohmann::json iters = nlohmann::json::array();
    for (const auto& it : summary.iterations) {
        iters.push_back({{"k", it.k},
                         {"iaa", it.iaa},
                         {"tp", it.pooled.tp},
                         {"fp", it.pooled.fp},
                         {"fn", it.pooled.fn},
                         {"cost", it.cost},
                         {"minutes", it.minutes},
                         {"moderated", it.moderated}});
    }
    nlohmann::json j{{"status", summary.status},
                     {"stop_reason", stop_reason_name(summary.stop_reason)},
                     {"accepted_iteration", summary.accepted_iteration},
                     {"refinements_accepted", summary.refinements_accepted},
                     {"tau", tau},
                     {"max_iterations", max_iterations},
                     {"iterations", std::move(iters)}};
    if (summary.aborted_stage) j["aborted_stage"] = *summary.aborted_stage;
    return j;
}

RunSummary run_summary_from_json(const nlohmann::json& j, const std::filesystem::path& archive) {
    RunSummary summary;
    summary.status = j.at("status").get<std::string>();
    summary.stop_reason = stop_reason_from_string(j.at("stop_reason").get<std::string>());
    summary.accepted_iteration = j.at("accepted_iteration").get<int>();
    summary.refinements_accepted = j.at("refinements_accepted").get<int>();
    if (j.contains("aborted_stage")) summary.aborted_stage = j["aborted_stage"].get<std::string>();
    for (const auto& it : j.at("iterations")) {
        IterationSummary s;
        s.k = it.at("k").get<int>();
        s.iaa = it.at("iaa").get<double>();
        s.pooled.tp = it.at("tp").get<long>();
        s.pooled.fp = it.at("fp").get<long>();
        s.pooled.fn = it.at("fn").get<long>();
        s.cost = it.value("cost", 0.0);
        s.minutes = it.value("minutes", 0.0);
        s.moderated = it.value("moderated", false);
        summary.iterations.push_back(s);
    }
    summary.archive = archive;
    return summary;
}

struct LoopResources {
    Corpus corpus;
    EntitySchema schema;
    std::string annotation_template;
    moderator::StageTemplates stage_templates;
};

LoopResources load_resources(const LoopConfig& config) {
    LoopResources res;
    res.corpus = corpus::load_corpus(config.dev_corpus).corpus;
    res.schema = EntitySchema::load(config.schema.string());
    res.annotation_template = util::read_file(config.annotation_template);
    res.stage_templates.pattern_explanation = util::read_file(config.pattern_template);
    res.stage_templates.principle_generation = util::read_file(config.principle_template);
    res.stage_templates.guideline_refinement = util::read_file(config.refinement_template);
    return res;
}

}  // namespace

RunSummary load_run_summary(const std::filesystem::path& archive) {
    const auto j = nlohmann::json::parse(util::read_file(archive / "run.json"));
    return run_summary_from_json(j, archive);
}

RunSummary run_loop(const LoopConfig& config) {
    // A terminal archive is returned as-is: no provider calls, no writes.
    if (std::filesystem::exists(config.archive / "run.json")) {
        return load_run_summary(config.archive);
    }

    const LoopResources res = load_resources(config);
    auto gw = make_gateway(config);

    discrepancy::AnalysisOptions analysis;
    analysis.context.window = config.context_window;
    analysis.label_order = res.schema.label_names();

    moderator::ModerationOptions moderation;
    moderation.tp_cap = config.tp_cap;
    moderation.tp_seed = config.tp_seed;
    moderation.rename_whitelist = config.rename_whitelist;

    RunSummary summary;
    summary.archive = config.archive;
    std::vector<double> iaa_history;
    moderator::Guideline current =
        moderator::Guideline::from_text(0, util::read_file(config.guideline));

    for (int k = 0;; ++k) {
        const auto dir = iter_dir(config.archive, k);
        eval::CorpusEvaluation evaluation;
        std::map<std::string, AnnotationSet> preds;
        const bool resumed = iteration_complete(dir);

        if (resumed) {
            // resume path: trust the persisted iteration, skip the provider
            current = moderator::Guideline::from_text(k, util::read_file(dir / "guideline.md"));
            preds = corpus::load_annotation_dir(
                dir / "predictions", res.corpus,
                Provenance::make_predicted(k, config.model.model_id));
            evaluation = eval::evaluate_corpus(preds, res.corpus.gold);
        } else {
            std::filesystem::remove_all(dir);  // drop any partial leftovers
            util::write_file(dir / "guideline.md", current.text);
            annotator::AnnotateOptions options;
            options.parallelism = config.parallelism;
            options.out_dir = dir / "predictions";
            std::filesystem::create_directories(*options.out_dir);
            const auto run = annotator::annotate_corpus(*gw, config.model, res.schema, current,
                                                        res.corpus, k, res.annotation_template,
                                                        options);
            preds = run.sets;
            evaluation = eval::evaluate_corpus(preds, res.corpus.gold);
            nlohmann::json ej = eval::evaluation_to_json(evaluation);
            ej["iteration"] = k;
            nlohmann::json notes = nlohmann::json::object();
            for (const auto& [doc_id, outcome] : run.outcomes) {
                nlohmann::json note{{"accepted", outcome.accepted},
                                    {"repaired", outcome.repaired},
                                    {"dropped", outcome.dropped}};
                if (outcome.error_note) note["error"] = *outcome.error_note;
                notes[doc_id] = std::move(note);
            }
            ej["annotation_outcomes"] = std::move(notes);
            util::write_file(dir / "evaluation.json", ej.dump(2) + "\n");
            util::write_file(dir / "cost.json", gw->ledger().iteration_to_json(k).dump(2) + "\n");
        }

        iaa_history.push_back(evaluation.pooled_score.f1);
        IterationSummary iteration;
        iteration.k = k;
        iteration.iaa = evaluation.pooled_score.f1;
        iteration.pooled = evaluation.pooled;
        if (resumed && std::filesystem::exists(dir / "cost.json")) {
            // resumed iterations report the persisted slice; the live ledger
            // never saw their calls
            const auto cj = nlohmann::json::parse(util::read_file(dir / "cost.json"));
            iteration.cost = cj.value("cost", 0.0);
            iteration.minutes = cj.value("minutes", 0.0);
        } else {
            iteration.cost = gw->ledger().cost_of(k);
            iteration.minutes = gw->ledger().minutes_of(k);
        }
        summary.iterations.push_back(iteration);

        const Decision decision = decide_termination(iaa_history, config.tau,
                                                     config.max_iterations);
        if (decision.stop) {
            summary.status = "completed";
            summary.stop_reason = decision.reason;
            summary.accepted_iteration = decision.accepted_iteration;
            summary.refinements_accepted = decision.accepted_iteration;
            const auto accepted_dir = iter_dir(config.archive, decision.accepted_iteration);
            util::write_file(config.archive / "final-guideline.md",
                             util::read_file(accepted_dir / "guideline.md"));
            util::write_file(config.archive / "run.json",
                             run_summary_to_json(summary, config.tau, config.max_iterations)
                                     .dump(2) +
                                 "\n");
            return summary;
        }

        // moderation round k: refine the guideline for iteration k+1
        if (iteration_moderated(dir)) {
            current = moderator::Guideline::from_text(
                k + 1, util::read_file(dir / "moderation" / "guideline-after.md"));
            summary.iterations.back().moderated = true;
            continue;
        }
        const auto report =
            discrepancy::analyze_corpus(preds, res.corpus.gold, res.corpus, analysis);
        util::write_file(dir / "discrepancies.json",
                         discrepancy::report_to_json(report).dump(2) + "\n");
        util::write_file(dir / "matrix.txt", report::render_matrix(report.matrix));
        if (!report.dominant) {
            // strict mismatches remain impossible here: no discrepancies at
            // all means F1 = 1.0 >= tau, handled above; guard regardless
            summary.status = "completed";
            summary.stop_reason = StopReason::threshold;
            summary.accepted_iteration = k;
            summary.refinements_accepted = k;
            util::write_file(config.archive / "final-guideline.md", current.text);
            util::write_file(config.archive / "run.json",
                             run_summary_to_json(summary, config.tau, config.max_iterations)
                                     .dump(2) +
                                 "\n");
            return summary;
        }
        try {
            const auto record =
                moderator::run_moderation_round(*gw, config.model, res.stage_templates,
                                                res.schema, current, report, evaluation.matched,
                                                res.corpus, k, moderation);
            util::write_file(dir / "moderation" / "record.json", record.to_json().dump(2) + "\n");
            util::write_file(dir / "moderation" / "guideline-after.md",
                             record.guideline_after.text);
            // fold the moderation calls into this iteration's cost slice
            util::write_file(dir / "cost.json", gw->ledger().iteration_to_json(k).dump(2) + "\n");
            summary.iterations.back().cost = gw->ledger().cost_of(k);
            summary.iterations.back().minutes = gw->ledger().minutes_of(k);
            summary.iterations.back().moderated = true;
            current = record.guideline_after;
        } catch (const moderator::StageError& e) {
            summary.status = "aborted";
            summary.stop_reason = StopReason::none;
            summary.aborted_stage = e.stage();
            summary.accepted_iteration = k;
            summary.refinements_accepted = k;
            util::write_file(config.archive / "final-guideline.md", current.text);
            util::write_file(config.archive / "run.json",
                             run_summary_to_json(summary, config.tau, config.max_iterations)
                                     .dump(2) +
                                 "\n");
            return summary;
        }
    }
}

stats::PairedDocCounts paired_counts_from_archives(const std::filesystem::path& archive_g,
                                                   const std::filesystem::path& archive_m) {
    const auto load_per_doc = [](const std::filesystem::path& archive) {
        const auto summary = load_run_summary(archive);
        const auto dir = iter_dir(archive, summary.accepted_iteration);
        const auto j = nlohmann::json::parse(util::read_file(dir / "evaluation.json"));
        std::map<std::string, eval::MatchCounts> out;
        for (const auto& [doc_id, c] : j.at("per_doc").items()) {
            out[doc_id] = {c.at("tp").get<long>(), c.at("fp").get<long>(),
                           c.at("fn").get<long>()};
        }
        return out;
    };
    const auto g = load_per_doc(archive_g);
    const auto m = load_per_doc(archive_m);
    if (g.size() != m.size()) {
        throw std::invalid_argument("paired archives cover different document sets");
    }
    stats::PairedDocCounts paired;
    for (const auto& [doc_id, counts] : g) {
        const auto it = m.find(doc_id);
        if (it == m.end()) {
            throw std::invalid_argument("document " + doc_id + " missing from second archive");
        }
        paired.push_back({doc_id, counts, it->second});
    }
    return paired;
}

}  // namespace guidemod::orchestrator
