#pragma once

#include <map>
#include <string>
#include <vector>

#include "guidemod/types.hpp"

namespace guidemod::eval {

struct MatchCounts {
    long tp = 0;
    long fp = 0;
    long fn = 0;

    MatchCounts& operator+=(const MatchCounts& other) {
        tp += other.tp;
        fp += other.fp;
        fn += other.fn;
        return *this;
    }
};

struct Score {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Strict matching result for one document. `matched` holds the verified
/// true positives (gold-side copies), reused later as contrastive evidence.
struct DocMatch {
    MatchCounts counts;
    std::vector<Entity> matched;
};

struct CorpusEvaluation {
    MatchCounts pooled;
    Score pooled_score;
    std::map<std::string, MatchCounts> per_label;
    std::map<std::string, Score> per_label_scores;
    std::map<std::string, MatchCounts> per_doc;          // doc_id -> counts
    std::map<std::string, long> tp_per_label;
    std::map<std::string, std::vector<Entity>> matched;  // doc_id -> verified TPs
};

/// Exact span-and-type matching: a prediction counts only when begin, end
/// and label all equal a gold entity's. Throws std::invalid_argument when
/// the sets belong to different documents.
DocMatch strict_match(const AnnotationSet& pred, const AnnotationSet& gold);

/// precision = tp/(tp+fp), recall = tp/(tp+fn), f1 = 2pr/(p+r); each term
/// is 0 when its denominator is 0. Throws on negative counts.
Score score_from_counts(const MatchCounts& counts);

/// Micro-averaged corpus scoring. The doc_id sets of preds and golds must
/// be equal; a gold document without a prediction set is a hard error.
CorpusEvaluation evaluate_corpus(const std::map<std::string, AnnotationSet>& preds,
                                 const std::map<std::string, AnnotationSet>& golds);

nlohmann::json evaluation_to_json(const CorpusEvaluation& eval);

}  // namespace guidemod::eval
