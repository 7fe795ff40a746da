#include "guidemod/moderator.hpp"

#include <algorithm>
#include <cctype>
#include <random>

#include "guidemod/util.hpp"

namespace guidemod::moderator {

StageError::StageError(const std::string& stage, const std::string& message, std::string raw_text)
    : std::runtime_error(stage + ": " + message), stage_(stage), raw_text_(std::move(raw_text)) {}

// ---------------------------------------------------------------------------
// Fixed-format parsing

namespace {

std::string strip_emphasis(std::string s) {
    s = util::trim(s);
    while (!s.empty() && (s.front() == '*' || s.front() == '_' || s.front() == '#')) {
        s.erase(s.begin());
    }
    while (!s.empty() && (s.back() == '*' || s.back() == '_')) s.pop_back();
    return util::trim(s);
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

// Splits "Label: value" lines into fields; a field's value continues over
// following lines until the next known label.
std::map<std::string, std::string> labeled_fields(const std::string& text,
                                                  const std::vector<std::string>& labels) {
    std::map<std::string, std::string> fields;
    std::string current;
    for (const auto& raw_line : util::split_lines(text)) {
        const std::string line = strip_emphasis(raw_line);
        bool started = false;
        for (const auto& label : labels) {
            if (lower(line).starts_with(lower(label))) {
                std::string rest = util::trim(line.substr(label.size()));
                if (!rest.empty() && rest.front() == ':') {
                    current = label;
                    fields[current] = strip_emphasis(rest.substr(1));
                    started = true;
                    break;
                }
            }
        }
        if (started) continue;
        if (!current.empty() && !util::trim(raw_line).empty()) {
            std::string& value = fields[current];
            if (!value.empty()) value += ' ';
            value += util::trim(raw_line);
        }
    }
    return fields;
}

}  // namespace

PatternInsight parse_pattern_insight(const std::string& text) {
    static const std::vector<std::string> kLabels = {"Pattern Name", "Confusion Trigger",
                                                     "Contrastive Evidence", "Rule (Proposed)"};
    const auto fields = labeled_fields(text, kLabels);
    PatternInsight insight;
    const auto get = [&](const std::string& label) {
        const auto it = fields.find(label);
        if (it == fields.end() || it->second.empty()) {
            throw ParseError("missing or empty field \"" + label + "\"");
        }
        return it->second;
    };
    insight.pattern_name = get("Pattern Name");
    insight.confusion_trigger = get("Confusion Trigger");
    insight.contrastive_evidence = get("Contrastive Evidence");
    insight.proposed_rule = get("Rule (Proposed)");
    return insight;
}

namespace {

bool is_token_boundary(const std::string& text, std::size_t pos) {
    if (pos == 0 || pos >= text.size()) return true;
    const auto c = static_cast<unsigned char>(text[pos]);
    return !std::isalnum(c);
}

std::size_t find_token(const std::string& text, const std::string& token, std::size_t from) {
    std::size_t pos = text.find(token, from);
    while (pos != std::string::npos) {
        if (is_token_boundary(text, pos == 0 ? 0 : pos - 1) &&
            is_token_boundary(text, pos + token.size()) &&
            (pos == 0 || !std::isalnum(static_cast<unsigned char>(text[pos - 1])))) {
            return pos;
        }
        pos = text.find(token, pos + 1);
    }
    return std::string::npos;
}

std::string clean_clause(std::string s) {
    s = strip_emphasis(s);
    while (!s.empty() && (s.back() == ',' || s.back() == ';' || s.back() == ':')) {
        s.pop_back();
        s = util::trim(s);
    }
    while (!s.empty() && (s.front() == ',' || s.front() == ';' || s.front() == ':')) {
        s.erase(s.begin());
        s = util::trim(s);
    }
    return s;
}

}  // namespace

Principle parse_principle(const std::string& text) {
    const std::size_t if_pos = find_token(text, "IF", 0);
    if (if_pos == std::string::npos) throw ParseError("missing IF clause");
    const std::size_t then_pos = find_token(text, "THEN", if_pos + 2);
    if (then_pos == std::string::npos) throw ParseError("missing THEN clause");
    const std::size_t except_pos = find_token(text, "EXCEPT", then_pos + 4);
    if (except_pos == std::string::npos) {
        throw ParseError("missing EXCEPT clause (the negative constraint is mandatory)");
    }
    Principle p;
    p.if_clause = clean_clause(text.substr(if_pos + 2, then_pos - if_pos - 2));
    p.then_clause = clean_clause(text.substr(then_pos + 4, except_pos - then_pos - 4));
    p.except_clause = clean_clause(text.substr(except_pos + 6));
    if (p.if_clause.empty() || p.then_clause.empty() || p.except_clause.empty()) {
        throw ParseError("empty IF/THEN/EXCEPT clause");
    }
    return p;
}

// ---------------------------------------------------------------------------
// Integrity

nlohmann::json IntegrityReport::to_json() const {
    nlohmann::json renames = nlohmann::json::array();
    for (const auto& [from, to] : renamed) renames.push_back({{"from", from}, {"to", to}});
    return {{"pass", pass},
            {"length_ok", length_ok},
            {"length_ratio", length_ratio},
            {"missing_headings", missing_headings},
            {"added_headings", added_headings},
            {"renamed", std::move(renames)}};
}

IntegrityReport check_integrity(const Guideline& before, const Guideline& after,
                                const std::map<std::string, std::string>& rename_whitelist) {
    IntegrityReport report;

    std::map<std::string, long> remaining;
    for (const auto& h : after.section_index) ++remaining[h];
    for (const auto& h : before.section_index) {
        const auto it = rename_whitelist.find(h);
        const std::string target = it == rename_whitelist.end() ? h : it->second;
        auto rit = remaining.find(target);
        if (rit == remaining.end() || rit->second == 0) {
            report.missing_headings.push_back(h);
        } else {
            --rit->second;
            if (it != rename_whitelist.end()) report.renamed.emplace_back(h, target);
        }
    }
    for (const auto& h : after.section_index) {
        auto rit = remaining.find(h);
        if (rit != remaining.end() && rit->second > 0) {
            --rit->second;
            report.added_headings.push_back(h);
        }
    }

    const double before_len = static_cast<double>(util::code_point_count(before.text));
    const double after_len = static_cast<double>(util::code_point_count(after.text));
    report.length_ratio = before_len > 0 ? after_len / before_len : 1.0;
    report.length_ok = report.length_ratio >= 0.9;
    report.pass = report.length_ok && report.missing_headings.empty();
    return report;
}

// ---------------------------------------------------------------------------
// Prompt assembly

std::string render_cases_block(const std::vector<discrepancy::DiscrepancyCase>& cases) {
    std::string out;
    for (const auto& c : cases) {
        out += "- document: " + c.doc_id + "\n";
        out += "  category: " + std::string(discrepancy::category_name(c.category)) + "\n";
        const auto describe = [](const std::optional<Entity>& e, const std::string& mention) {
            if (!e) return std::string("NONE");
            return e->label + " \"" + mention + "\" [" + std::to_string(e->begin) + ", " +
                   std::to_string(e->end) + ")";
        };
        const std::string gold_mention = c.gold_entity && !c.mention_strings.empty()
                                             ? c.mention_strings.front()
                                             : std::string{};
        const std::string pred_mention = c.pred_entity && !c.mention_strings.empty()
                                             ? c.mention_strings.back()
                                             : std::string{};
        out += "  gold: " + describe(c.gold_entity, gold_mention) + "\n";
        out += "  predicted: " + describe(c.pred_entity, pred_mention) + "\n";
        out += "  context: " + c.context + "\n";
    }
    if (out.empty()) out = "(none)\n";
    return out;
}

std::string render_tp_block(const std::vector<TpExample>& tps) {
    std::string out;
    for (const auto& tp : tps) {
        out += "- document: " + tp.doc_id + "\n";
        out += "  " + tp.label + ": \"" + tp.mention + "\"\n";
        out += "  context: " + tp.context + "\n";
    }
    if (out.empty()) out = "(none)\n";
    return out;
}

std::vector<TpExample> collect_tp_examples(const std::map<std::string, std::vector<Entity>>& matched,
                                           const Corpus& corpus, std::size_t cap,
                                           std::uint64_t seed,
                                           const discrepancy::ContextOptions& context) {
    std::vector<TpExample> all;
    for (const auto& [doc_id, entities] : matched) {
        const Document* doc = corpus.find(doc_id);
        if (doc == nullptr) continue;
        const util::Utf8Index index(doc->text);
        for (const auto& e : entities) {
            TpExample tp;
            tp.doc_id = doc_id;
            tp.label = e.label;
            tp.mention = index.slice(static_cast<std::size_t>(e.begin),
                                     static_cast<std::size_t>(e.end));
            discrepancy::DiscrepancyCase probe;
            probe.doc_id = doc_id;
            probe.gold_entity = e;
            tp.context = discrepancy::extract_context(*doc, probe, context);
            all.push_back(std::move(tp));
        }
    }
    if (all.size() <= cap) return all;

    // seeded down-sampling via an index shuffle, stable across platforms
    std::vector<std::string> keys;
    keys.reserve(all.size());
    for (std::size_t i = 0; i < all.size(); ++i) keys.push_back(std::to_string(i));
    std::mt19937_64 rng(seed);
    util::fisher_yates(keys, rng);
    std::vector<TpExample> sampled;
    sampled.reserve(cap);
    for (std::size_t i = 0; i < cap; ++i) {
        sampled.push_back(all[static_cast<std::size_t>(std::stoul(keys[i]))]);
    }
    return sampled;
}

namespace {

std::string render_template(const std::string& template_text,
                            const std::map<std::string, std::string>& values,
                            const std::string& stage) {
    std::string rendered;
    std::size_t pos = 0;
    while (pos < template_text.size()) {
        const std::size_t open = template_text.find("{{", pos);
        if (open == std::string::npos) {
            rendered.append(template_text, pos, template_text.size() - pos);
            break;
        }
        const std::size_t close = template_text.find("}}", open + 2);
        if (close == std::string::npos) {
            throw StageError(stage, "unterminated placeholder in template", template_text);
        }
        rendered.append(template_text, pos, open - pos);
        const std::string name = template_text.substr(open + 2, close - open - 2);
        const auto it = values.find(name);
        if (it == values.end()) {
            throw StageError(stage, "unresolved placeholder {{" + name + "}}", template_text);
        }
        rendered += it->second;
        pos = close + 2;
    }
    return rendered;
}

gateway::CompletionRequest stage_request(const gateway::ModelSpec& model, std::string prompt) {
    gateway::CompletionRequest request;
    request.model = model;
    request.system_text = "You are an AI moderator maintaining annotation guidelines.";
    request.user_text = std::move(prompt);
    return request;
}

std::string strip_outer_fence(const std::string& text) {
    const std::string trimmed = util::trim(text);
    if (!trimmed.starts_with("```")) return text;
    const std::size_t first_newline = trimmed.find('\n');
    if (first_newline == std::string::npos) return text;
    if (!trimmed.ends_with("```")) return text;
    const std::size_t body_end = trimmed.rfind("\n```");
    if (body_end == std::string::npos || body_end < first_newline) return text;
    return trimmed.substr(first_newline + 1, body_end - first_newline - 1);
}

void log_exchange(StageTranscript* transcript, const std::string& prompt,
                  const std::string& response) {
    if (transcript == nullptr) return;
    transcript->prompts.push_back(prompt);
    transcript->responses.push_back(response);
}

}  // namespace

PatternInsight explain_pattern(gateway::CompletionGateway& gw, const gateway::ModelSpec& model,
                               const std::string& template_text,
                               const std::vector<discrepancy::DiscrepancyCase>& group_cases,
                               const std::vector<TpExample>& verified_tps,
                               const Guideline& guideline, int iteration,
                               StageTranscript* transcript) {
    if (group_cases.empty()) {
        throw std::invalid_argument("explain_pattern: the dominant group has no cases");
    }
    if (transcript != nullptr) transcript->stage = "pattern_explanation";
    const auto key = discrepancy::group_key(group_cases.front());
    const std::string prompt = render_template(
        template_text,
        {{"guidelines", guideline.text},
         {"dominantGroup", discrepancy::group_key_name(key)},
         {"discrepancyCases", render_cases_block(group_cases)},
         {"verifiedTruePositives", render_tp_block(verified_tps)}},
        "pattern_explanation");

    auto request = stage_request(model, prompt);
    const auto first = gw.complete(request, iteration);
    log_exchange(transcript, request.user_text, first.text);
    try {
        return parse_pattern_insight(first.text);
    } catch (const ParseError& e) {
        auto reask = request;
        reask.user_text +=
            "\n\nFORMAT REMINDER: your previous answer could not be parsed (" +
            std::string(e.what()) +
            "). Reply again with exactly four labeled lines: \"Pattern Name:\", "
            "\"Confusion Trigger:\", \"Contrastive Evidence:\", \"Rule (Proposed):\".";
        const auto second = gw.complete(reask, iteration);
        log_exchange(transcript, reask.user_text, second.text);
        try {
            return parse_pattern_insight(second.text);
        } catch (const ParseError& e2) {
            throw StageError("pattern_explanation", e2.what(), second.text);
        }
    }
}

Principle generate_principle(gateway::CompletionGateway& gw, const gateway::ModelSpec& model,
                             const std::string& template_text, const PatternInsight& insight,
                             const EntitySchema& schema, const Guideline& guideline, int iteration,
                             StageTranscript* transcript) {
    if (transcript != nullptr) transcript->stage = "principle_generation";
    std::string schema_block;
    for (const auto& label : schema.labels) {
        schema_block += "- " + label.name + ": " + label.definition + "\n";
    }
    const std::string insight_block = "Pattern Name: " + insight.pattern_name +
                                      "\nConfusion Trigger: " + insight.confusion_trigger +
                                      "\nContrastive Evidence: " + insight.contrastive_evidence +
                                      "\nRule (Proposed): " + insight.proposed_rule + "\n";
    const std::string prompt =
        render_template(template_text,
                        {{"entitySchema", schema_block},
                         {"patternInsight", insight_block},
                         {"guidelines", guideline.text}},
                        "principle_generation");

    auto request = stage_request(model, prompt);
    const auto first = gw.complete(request, iteration);
    log_exchange(transcript, request.user_text, first.text);
    try {
        return parse_principle(first.text);
    } catch (const ParseError& e) {
        auto reask = request;
        reask.user_text += "\n\nFORMAT REMINDER: your previous answer could not be parsed (" +
                           std::string(e.what()) +
                           "). Reply with one principle in the strict form: IF <condition>, "
                           "THEN <action>, EXCEPT <negative constraint>. The EXCEPT clause is "
                           "mandatory.";
        const auto second = gw.complete(reask, iteration);
        log_exchange(transcript, reask.user_text, second.text);
        try {
            return parse_principle(second.text);
        } catch (const ParseError& e2) {
            throw StageError("principle_generation", e2.what(), second.text);
        }
    }
}

Guideline refine_guideline(gateway::CompletionGateway& gw, const gateway::ModelSpec& model,
                           const std::string& template_text, const Guideline& guideline,
                           const Principle& principle,
                           const std::vector<discrepancy::DiscrepancyCase>& group_cases,
                           const std::vector<TpExample>& verified_tps, int iteration,
                           const std::map<std::string, std::string>& rename_whitelist,
                           IntegrityReport* integrity_out, StageTranscript* transcript) {
    if (transcript != nullptr) transcript->stage = "guideline_refinement";
    const std::string principle_block = "IF " + principle.if_clause + ",\nTHEN " +
                                        principle.then_clause + ",\nEXCEPT " +
                                        principle.except_clause + ".";
    const std::string prompt = render_template(
        template_text,
        {{"guidelines", guideline.text},
         {"principle", principle_block},
         {"discrepancyCases", render_cases_block(group_cases)},
         {"verifiedTruePositives", render_tp_block(verified_tps)}},
        "guideline_refinement");

    auto request = stage_request(model, prompt);
    const auto first = gw.complete(request, iteration);
    log_exchange(transcript, request.user_text, first.text);
    Guideline candidate = Guideline::from_text(guideline.version + 1,
                                               strip_outer_fence(first.text));
    IntegrityReport report = check_integrity(guideline, candidate, rename_whitelist);
    if (report.pass) {
        if (integrity_out != nullptr) *integrity_out = report;
        return candidate;
    }

    std::string violation;
    if (!report.missing_headings.empty()) {
        violation = "these sections disappeared from your revision: ";
        for (std::size_t i = 0; i < report.missing_headings.size(); ++i) {
            if (i > 0) violation += ", ";
            violation += "\"" + report.missing_headings[i] + "\"";
        }
    } else {
        violation = "your revision shrank to " +
                    std::to_string(static_cast<int>(report.length_ratio * 100)) +
                    "% of the original length, which indicates summarization";
    }
    auto reask = request;
    reask.user_text += "\n\nINTEGRITY REMINDER: " + violation +
                       ". Output the complete updated guideline text without omission or "
                       "summarization, keeping every existing section.";
    const auto second = gw.complete(reask, iteration);
    log_exchange(transcript, reask.user_text, second.text);
    candidate = Guideline::from_text(guideline.version + 1, strip_outer_fence(second.text));
    report = check_integrity(guideline, candidate, rename_whitelist);
    if (integrity_out != nullptr) *integrity_out = report;
    if (!report.pass) {
        throw StageError("guideline_refinement",
                         "integrity check failed twice; keeping the current guideline",
                         second.text);
    }
    return candidate;
}

nlohmann::json ModerationRecord::to_json() const {
    nlohmann::json transcripts = nlohmann::json::array();
    for (const auto& t : transcript) {
        transcripts.push_back(
            {{"stage", t.stage}, {"prompts", t.prompts}, {"responses", t.responses}});
    }
    return {{"iteration", iteration},
            {"dominant", discrepancy::group_key_name(dominant)},
            {"insight",
             {{"pattern_name", insight.pattern_name},
              {"confusion_trigger", insight.confusion_trigger},
              {"contrastive_evidence", insight.contrastive_evidence},
              {"proposed_rule", insight.proposed_rule}}},
            {"principle",
             {{"if", principle.if_clause},
              {"then", principle.then_clause},
              {"except", principle.except_clause}}},
            {"guideline_before_version", guideline_before.version},
            {"guideline_after_version", guideline_after.version},
            {"integrity", integrity.to_json()},
            {"transcript", std::move(transcripts)}};
}

ModerationRecord run_moderation_round(gateway::CompletionGateway& gw,
                                      const gateway::ModelSpec& model,
                                      const StageTemplates& templates, const EntitySchema& schema,
                                      const Guideline& guideline,
                                      const discrepancy::DiscrepancyReport& report,
                                      const std::map<std::string, std::vector<Entity>>& matched,
                                      const Corpus& corpus, int iteration,
                                      const ModerationOptions& options) {
    if (!report.dominant) {
        throw std::invalid_argument("run_moderation_round: nothing to moderate");
    }
    ModerationRecord record;
    record.iteration = iteration;
    record.dominant = *report.dominant;
    record.guideline_before = guideline;

    std::vector<discrepancy::DiscrepancyCase> group_cases;
    for (const auto& c : report.cases) {
        if (discrepancy::group_key(c) == *report.dominant) group_cases.push_back(c);
    }
    const auto tps = collect_tp_examples(matched, corpus, options.tp_cap, options.tp_seed);

    record.transcript.resize(3);
    record.insight = explain_pattern(gw, model, templates.pattern_explanation, group_cases, tps,
                                     guideline, iteration, &record.transcript[0]);
    record.principle = generate_principle(gw, model, templates.principle_generation,
                                          record.insight, schema, guideline, iteration,
                                          &record.transcript[1]);
    record.guideline_after = refine_guideline(
        gw, model, templates.guideline_refinement, guideline, record.principle, group_cases, tps,
        iteration, options.rename_whitelist, &record.integrity, &record.transcript[2]);
    return record;
}

}  // namespace guidemod::moderator
