#include "guidemod/eval.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace guidemod::eval {

DocMatch strict_match(const AnnotationSet& pred, const AnnotationSet& gold) {
    if (pred.doc_id != gold.doc_id) {
        throw std::invalid_argument("strict_match across documents: " + pred.doc_id +
                                    " vs " + gold.doc_id);
    }
    std::set<std::tuple<std::int64_t, std::int64_t, std::string>> pred_triplets;
    for (const auto& e : pred.entities) pred_triplets.insert({e.begin, e.end, e.label});

    DocMatch out;
    for (const auto& g : gold.entities) {
        if (pred_triplets.count({g.begin, g.end, g.label}) != 0) {
            out.matched.push_back(g);
        }
    }
    std::sort(out.matched.begin(), out.matched.end(), triplet_less);
    out.counts.tp = static_cast<long>(out.matched.size());
    out.counts.fp = static_cast<long>(pred.entities.size()) - out.counts.tp;
    out.counts.fn = static_cast<long>(gold.entities.size()) - out.counts.tp;
    return out;
}

Score score_from_counts(const MatchCounts& counts) {
    if (counts.tp < 0 || counts.fp < 0 || counts.fn < 0) {
        throw std::invalid_argument("negative match counts");
    }
    Score s;
    const double tp = static_cast<double>(counts.tp);
    if (counts.tp + counts.fp > 0) s.precision = tp / static_cast<double>(counts.tp + counts.fp);
    if (counts.tp + counts.fn > 0) s.recall = tp / static_cast<double>(counts.tp + counts.fn);
    if (s.precision + s.recall > 0) {
        s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
    }
    return s;
}

CorpusEvaluation evaluate_corpus(const std::map<std::string, AnnotationSet>& preds,
                                 const std::map<std::string, AnnotationSet>& golds) {
    for (const auto& [doc_id, unused] : preds) {
        if (golds.count(doc_id) == 0) {
            throw std::invalid_argument("prediction for unknown document: " + doc_id);
        }
    }
    CorpusEvaluation out;
    for (const auto& [doc_id, gold] : golds) {
        auto it = preds.find(doc_id);
        if (it == preds.end()) {
            throw std::invalid_argument("missing prediction set for document: " + doc_id);
        }
        const AnnotationSet& pred = it->second;
        DocMatch match = strict_match(pred, gold);
        out.pooled += match.counts;
        out.per_doc.emplace(doc_id, match.counts);

        std::map<std::string, long> tp_by_label;
        std::map<std::string, long> pred_by_label;
        std::map<std::string, long> gold_by_label;
        for (const auto& e : match.matched) ++tp_by_label[e.label];
        for (const auto& e : pred.entities) ++pred_by_label[e.label];
        for (const auto& e : gold.entities) ++gold_by_label[e.label];
        std::set<std::string> labels;
        for (const auto& [label, n] : pred_by_label) labels.insert(label);
        for (const auto& [label, n] : gold_by_label) labels.insert(label);
        for (const auto& label : labels) {
            const long tp = tp_by_label.count(label) ? tp_by_label[label] : 0;
            MatchCounts& lc = out.per_label[label];
            lc.tp += tp;
            lc.fp += (pred_by_label.count(label) ? pred_by_label[label] : 0) - tp;
            lc.fn += (gold_by_label.count(label) ? gold_by_label[label] : 0) - tp;
            out.tp_per_label[label] += tp;
        }
        out.matched.emplace(doc_id, std::move(match.matched));
    }
    out.pooled_score = score_from_counts(out.pooled);
    for (const auto& [label, counts] : out.per_label) {
        out.per_label_scores[label] = score_from_counts(counts);
    }
    return out;
}

nlohmann::json evaluation_to_json(const CorpusEvaluation& eval) {
    auto counts_json = [](const MatchCounts& c) {
        return nlohmann::json{{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}};
    };
    auto score_json = [](const Score& s) {
        return nlohmann::json{{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}};
    };
    nlohmann::json j;
    j["pooled"] = counts_json(eval.pooled);
    j["pooled_score"] = score_json(eval.pooled_score);
    nlohmann::json per_label = nlohmann::json::object();
    for (const auto& [label, c] : eval.per_label) {
        per_label[label] = counts_json(c);
        per_label[label]["score"] = score_json(eval.per_label_scores.at(label));
    }
    j["per_label"] = std::move(per_label);
    nlohmann::json per_doc = nlohmann::json::object();
    for (const auto& [doc_id, c] : eval.per_doc) per_doc[doc_id] = counts_json(c);
    j["per_doc"] = std::move(per_doc);
    return j;
}

}  // namespace guidemod::eval
