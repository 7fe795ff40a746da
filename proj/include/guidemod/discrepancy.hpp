#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "guidemod/types.hpp"

namespace guidemod::discrepancy {

enum class Category {
    label_mismatch,     // overlapping pair, different types
    boundary_mismatch,  // overlapping pair, same type, different offsets
    false_negative,     // gold with zero overlap against every prediction
    false_positive,     // prediction with zero overlap against every gold
};

const char* category_name(Category c);

struct DiscrepancyCase {
    std::string doc_id;
    Category category = Category::false_negative;
    std::optional<Entity> gold_entity;
    std::optional<Entity> pred_entity;
    std::vector<std::string> mention_strings;  // gold mention first when present
    std::string context;                       // filled by extract_context
};

/// Directional gold -> predicted label pair; an empty label means "no
/// entity" on that side and is rendered as NONE.
struct GroupKey {
    std::string gold_label;
    std::string pred_label;

    friend bool operator==(const GroupKey&, const GroupKey&) = default;
};

/// Orders keys lexicographically with NONE (empty) sorting after any label.
bool group_key_less(const GroupKey& a, const GroupKey& b);

struct GroupKeyLess {
    bool operator()(const GroupKey& a, const GroupKey& b) const { return group_key_less(a, b); }
};

GroupKey group_key(const DiscrepancyCase& c);
std::string group_key_name(const GroupKey& key);

/// (labels + NONE) x (labels + NONE) counts; rows are gold labels, columns
/// predicted labels. Diagonal cells hold boundary mismatches, the NONE
/// column false negatives, the NONE row false positives.
struct DiscrepancyMatrix {
    std::vector<std::string> labels;        // schema order, NONE appended at index labels.size()
    std::vector<std::vector<long>> cells;   // (labels+1)^2
    std::map<std::string, long> tp_per_label;

    long at(const std::string& gold_label, const std::string& pred_label) const;  // "" = NONE
};

struct DiscrepancyReport {
    std::vector<DiscrepancyCase> cases;
    std::map<GroupKey, long, GroupKeyLess> group_counts;
    std::optional<GroupKey> dominant;  // empty when there is nothing to moderate
    DiscrepancyMatrix matrix;
    std::map<std::string, long> tp_per_label;
};

/// Shared characters between two half-open spans; adjacency is not overlap.
std::int64_t overlap_length(const Entity& a, const Entity& b);

/// Assigns every non-true-positive entity of the document to exactly one
/// case, in priority order: (1) label mismatches paired greedily by
/// descending overlap, (2) boundary mismatches the same way over the
/// survivors, (3) false negatives (gold overlapping no prediction at all),
/// (4) false positives (prediction overlapping no gold at all), (5) any
/// remaining entity overlaps only consumed counterparts and is filed as a
/// mismatch against its maximum-overlap counterpart. Exact triplet matches
/// are dropped from both sides first, so callers may pass full sets.
std::vector<DiscrepancyCase> categorize(const AnnotationSet& pred, const AnnotationSet& gold,
                                        const Document& doc);

struct GroupSelection {
    std::map<GroupKey, long, GroupKeyLess> counts;
    std::optional<GroupKey> dominant;  // nullopt when cases is empty: nothing to moderate
};

/// Dominant = most frequent group; ties resolved lexicographically on
/// (gold_label, pred_label) with NONE last.
GroupSelection group_and_select(const std::vector<DiscrepancyCase>& cases);

struct ContextOptions {
    std::int64_t window = 60;  // characters kept on each side of the span union
    std::string open_marker = "\xE2\x9F\xA6";   // U+27E6
    std::string close_marker = "\xE2\x9F\xA7";  // U+27E7
};

/// Snippet around the union of the case's spans, clipped at document
/// bounds, with the union delimited. Markers are repeated until the pair
/// cannot occur in the document text.
std::string extract_context(const Document& doc, const DiscrepancyCase& c,
                            const ContextOptions& options = {});

DiscrepancyMatrix build_matrix(const std::vector<DiscrepancyCase>& cases,
                               const std::map<std::string, long>& tp_per_label,
                               const std::vector<std::string>& label_order);

struct AnalysisOptions {
    ContextOptions context;
    std::vector<std::string> label_order;  // defaults to labels seen, sorted
};

/// Full per-corpus pipeline: strict filter, categorize per document (sorted
/// by doc_id), contexts, grouping, matrix. tp_per_label comes from the
/// exact matches dropped in step one.
DiscrepancyReport analyze_corpus(const std::map<std::string, AnnotationSet>& preds,
                                 const std::map<std::string, AnnotationSet>& golds,
                                 const Corpus& corpus, const AnalysisOptions& options = {});

nlohmann::json report_to_json(const DiscrepancyReport& report);

}  // namespace guidemod::discrepancy
