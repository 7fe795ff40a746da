#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "guidemod/gateway.hpp"
#include "guidemod/guideline.hpp"
#include "guidemod/types.hpp"

namespace guidemod::annotator {

class TemplateError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct DroppedItem {
    nlohmann::json raw;
    std::string reason;
};

struct ValidatedAnnotations {
    std::vector<Entity> entities;  // ids assigned T1, T2, ... in payload order
    long repaired = 0;
    std::vector<DroppedItem> dropped;
};

/// Substitutes {{entitySchema}}, {{guidelines}}, {{jsonSchema}} and
/// {{inputText}} in one pass (substituted values are never rescanned). The
/// `---` delimiter lines around {{inputText}} are widened until no line of
/// the document consists of exactly that many dashes. A leading
/// "SYSTEM INSTRUCTION:" block becomes the request's system text.
/// Missing or unknown placeholders raise TemplateError.
gateway::CompletionRequest render_annotation_prompt(const EntitySchema& schema,
                                                    const moderator::Guideline& guideline,
                                                    const Document& doc,
                                                    const std::string& template_text);

/// Accepts an item when doc.text[begin, end) equals its span_text; realigns
/// the offsets when the span_text occurs exactly once elsewhere; drops it
/// otherwise with a reason. Items without span_text pass on bounds alone.
/// Labels outside the schema are dropped. Never throws: every payload item
/// lands in exactly one of accepted / dropped.
ValidatedAnnotations validate_and_repair(const nlohmann::json& payload, const Document& doc,
                                         const EntitySchema& schema);

struct DocOutcome {
    long accepted = 0;
    long repaired = 0;
    long dropped = 0;
    std::optional<std::string> error_note;  // set when the payload never parsed
};

struct AnnotationRun {
    std::map<std::string, AnnotationSet> sets;  // doc_id -> predicted set
    std::map<std::string, DocOutcome> outcomes;
};

struct AnnotateOptions {
    int parallelism = 1;
    std::optional<std::filesystem::path> out_dir;  // persists one file per doc when set
};

/// Renders, completes, extracts and validates one prompt per document. A
/// document whose payload cannot be extracted yields an empty prediction
/// with an error note; transport and fixture errors abort the run.
AnnotationRun annotate_corpus(gateway::CompletionGateway& gw, const gateway::ModelSpec& model,
                              const EntitySchema& schema, const moderator::Guideline& guideline,
                              const Corpus& corpus, int iteration,
                              const std::string& template_text, const AnnotateOptions& options = {});

}  // namespace guidemod::annotator
