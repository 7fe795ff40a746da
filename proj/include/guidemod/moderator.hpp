#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "guidemod/discrepancy.hpp"
#include "guidemod/gateway.hpp"
#include "guidemod/guideline.hpp"
#include "guidemod/types.hpp"

namespace guidemod::moderator {

/// A moderation stage that could not produce a usable artifact after the
/// one allowed re-ask; carries the offending raw response.
class StageError : public std::runtime_error {
public:
    StageError(const std::string& stage, const std::string& message, std::string raw_text);
    const std::string& stage() const { return stage_; }
    const std::string& raw_text() const { return raw_text_; }

private:
    std::string stage_;
    std::string raw_text_;
};

class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct PatternInsight {
    std::string pattern_name;
    std::string confusion_trigger;
    std::string contrastive_evidence;
    std::string proposed_rule;
};

struct Principle {
    std::string if_clause;
    std::string then_clause;
    std::string except_clause;  // the mandatory negative constraint
};

/// Labeled-field extraction: "Pattern Name: ...", tolerant to markdown
/// emphasis around the labels. Throws ParseError when a field is missing
/// or empty.
PatternInsight parse_pattern_insight(const std::string& text);

/// Clause extraction for the strict IF / THEN / EXCEPT form. The keywords
/// must appear in that order as standalone uppercase tokens.
Principle parse_principle(const std::string& text);

struct IntegrityReport {
    bool pass = false;
    bool length_ok = false;
    double length_ratio = 0.0;           // |after| / |before| in code points
    std::vector<std::string> missing_headings;
    std::vector<std::string> added_headings;  // in after order
    std::vector<std::pair<std::string, std::string>> renamed;  // via whitelist

    nlohmann::json to_json() const;
};

/// Every heading of `before` must survive into `after` (renames only via
/// the whitelist) and the text may not shrink below 90% of its length.
IntegrityReport check_integrity(const Guideline& before, const Guideline& after,
                                const std::map<std::string, std::string>& rename_whitelist = {});

struct TpExample {
    std::string doc_id;
    std::string label;
    std::string mention;
    std::string context;
};

/// Builds contrastive true-positive examples from strict-match results,
/// sampling down to `cap` with the given seed when there are more.
std::vector<TpExample> collect_tp_examples(const std::map<std::string, std::vector<Entity>>& matched,
                                           const Corpus& corpus, std::size_t cap,
                                           std::uint64_t seed,
                                           const discrepancy::ContextOptions& context = {});

struct StageTemplates {
    std::string pattern_explanation;
    std::string principle_generation;
    std::string guideline_refinement;
};

struct StageTranscript {
    std::string stage;
    std::vector<std::string> prompts;
    std::vector<std::string> responses;
};

struct ModerationRecord {
    int iteration = 0;
    discrepancy::GroupKey dominant;
    PatternInsight insight;
    Principle principle;
    Guideline guideline_before;
    Guideline guideline_after;
    IntegrityReport integrity;
    std::vector<StageTranscript> transcript;

    nlohmann::json to_json() const;
};

struct ModerationOptions {
    std::size_t tp_cap = 10;
    std::uint64_t tp_seed = 0;
    std::map<std::string, std::string> rename_whitelist;
};

/// Contrastive explanation of the dominant discrepancy group. One re-ask
/// with a format reminder on parse failure, then StageError.
PatternInsight explain_pattern(gateway::CompletionGateway& gw, const gateway::ModelSpec& model,
                               const std::string& template_text,
                               const std::vector<discrepancy::DiscrepancyCase>& group_cases,
                               const std::vector<TpExample>& verified_tps,
                               const Guideline& guideline, int iteration,
                               StageTranscript* transcript = nullptr);

Principle generate_principle(gateway::CompletionGateway& gw, const gateway::ModelSpec& model,
                             const std::string& template_text, const PatternInsight& insight,
                             const EntitySchema& schema, const Guideline& guideline, int iteration,
                             StageTranscript* transcript = nullptr);

/// Full rewrite of the guideline text. The response must pass
/// check_integrity against `guideline`; one re-ask names the violation,
/// a second failure raises StageError and leaves the input guideline
/// untouched.
Guideline refine_guideline(gateway::CompletionGateway& gw, const gateway::ModelSpec& model,
                           const std::string& template_text, const Guideline& guideline,
                           const Principle& principle,
                           const std::vector<discrepancy::DiscrepancyCase>& group_cases,
                           const std::vector<TpExample>& verified_tps, int iteration,
                           const std::map<std::string, std::string>& rename_whitelist = {},
                           IntegrityReport* integrity_out = nullptr,
                           StageTranscript* transcript = nullptr);

/// The three stages in sequence over a discrepancy report's dominant
/// group. Throws std::invalid_argument when there is nothing to moderate.
ModerationRecord run_moderation_round(gateway::CompletionGateway& gw,
                                      const gateway::ModelSpec& model,
                                      const StageTemplates& templates, const EntitySchema& schema,
                                      const Guideline& guideline,
                                      const discrepancy::DiscrepancyReport& report,
                                      const std::map<std::string, std::vector<Entity>>& matched,
                                      const Corpus& corpus, int iteration,
                                      const ModerationOptions& options = {});

std::string render_cases_block(const std::vector<discrepancy::DiscrepancyCase>& cases);
std::string render_tp_block(const std::vector<TpExample>& tps);

}  // namespace guidemod::moderator
