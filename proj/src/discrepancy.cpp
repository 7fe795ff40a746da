#include "guidemod/discrepancy.hpp"

#include <algorithm>
#include <limits>
#include <set>
#include <stdexcept>

#include "guidemod/util.hpp"

namespace guidemod::discrepancy {

const char* category_name(Category c) {
    switch (c) {
        case Category::label_mismatch: return "label_mismatch";
        case Category::boundary_mismatch: return "boundary_mismatch";
        case Category::false_negative: return "false_negative";
        case Category::false_positive: return "false_positive";
    }
    return "?";
}

bool group_key_less(const GroupKey& a, const GroupKey& b) {
    const auto rank = [](const std::string& s) { return std::make_pair(s.empty(), s); };
    return std::make_pair(rank(a.gold_label), rank(a.pred_label)) <
           std::make_pair(rank(b.gold_label), rank(b.pred_label));
}

GroupKey group_key(const DiscrepancyCase& c) {
    GroupKey key;
    if (c.gold_entity) key.gold_label = c.gold_entity->label;
    if (c.pred_entity) key.pred_label = c.pred_entity->label;
    return key;
}

std::string group_key_name(const GroupKey& key) {
    const auto name = [](const std::string& s) { return s.empty() ? std::string("NONE") : s; };
    return name(key.gold_label) + "->" + name(key.pred_label);
}

std::int64_t overlap_length(const Entity& a, const Entity& b) {
    return std::max<std::int64_t>(0, std::min(a.end, b.end) - std::max(a.begin, b.begin));
}

namespace {

struct PairCandidate {
    std::size_t gold_idx;
    std::size_t pred_idx;
    std::int64_t overlap;
};

// Greedy one-to-one pairing by descending overlap; ties broken on the gold
// triplet then the predicted triplet so the result does not depend on input
// order.
std::vector<PairCandidate> greedy_pairs(const std::vector<Entity>& golds,
                                        const std::vector<Entity>& preds,
                                        const std::vector<bool>& gold_used,
                                        const std::vector<bool>& pred_used, bool want_same_label) {
    std::vector<PairCandidate> candidates;
    for (std::size_t g = 0; g < golds.size(); ++g) {
        if (gold_used[g]) continue;
        for (std::size_t p = 0; p < preds.size(); ++p) {
            if (pred_used[p]) continue;
            const bool same = golds[g].label == preds[p].label;
            if (same != want_same_label) continue;
            const std::int64_t ov = overlap_length(golds[g], preds[p]);
            if (ov >= 1) candidates.push_back({g, p, ov});
        }
    }
    std::sort(candidates.begin(), candidates.end(),
              [&](const PairCandidate& a, const PairCandidate& b) {
                  if (a.overlap != b.overlap) return a.overlap > b.overlap;
                  if (!same_triplet(golds[a.gold_idx], golds[b.gold_idx])) {
                      return triplet_less(golds[a.gold_idx], golds[b.gold_idx]);
                  }
                  return triplet_less(preds[a.pred_idx], preds[b.pred_idx]);
              });
    std::vector<PairCandidate> chosen;
    std::vector<bool> g_taken = gold_used;
    std::vector<bool> p_taken = pred_used;
    for (const auto& c : candidates) {
        if (g_taken[c.gold_idx] || p_taken[c.pred_idx]) continue;
        g_taken[c.gold_idx] = true;
        p_taken[c.pred_idx] = true;
        chosen.push_back(c);
    }
    return chosen;
}

// Counterpart with maximum overlap; ties broken by the counterpart triplet.
const Entity* max_overlap_counterpart(const Entity& subject, const std::vector<Entity>& others) {
    const Entity* best = nullptr;
    std::int64_t best_ov = 0;
    for (const auto& o : others) {
        const std::int64_t ov = overlap_length(subject, o);
        if (ov < 1) continue;
        if (ov > best_ov || (ov == best_ov && best != nullptr && triplet_less(o, *best))) {
            best = &o;
            best_ov = ov;
        }
    }
    return best;
}

std::string mention_of(const util::Utf8Index& index, const Entity& e) {
    return index.slice(static_cast<std::size_t>(e.begin), static_cast<std::size_t>(e.end));
}

bool case_order(const DiscrepancyCase& a, const DiscrepancyCase& b) {
    const auto key = [](const DiscrepancyCase& c) {
        const Entity& anchor = c.gold_entity ? *c.gold_entity : *c.pred_entity;
        const std::int64_t other_begin = c.pred_entity ? c.pred_entity->begin : -1;
        return std::make_tuple(anchor.begin, anchor.end, anchor.label,
                               static_cast<int>(c.category), other_begin,
                               c.pred_entity ? c.pred_entity->label : std::string{});
    };
    return key(a) < key(b);
}

}  // namespace

std::vector<DiscrepancyCase> categorize(const AnnotationSet& pred, const AnnotationSet& gold,
                                        const Document& doc) {
    if (pred.doc_id != gold.doc_id || pred.doc_id != doc.doc_id()) {
        throw std::invalid_argument("categorize: mismatched doc ids");
    }
    const util::Utf8Index index(doc.text);

    // Drop strict true positives from both sides; the full sets stay around
    // as overlap universes for the FN/FP tests.
    std::set<std::tuple<std::int64_t, std::int64_t, std::string>> gold_triplets;
    for (const auto& e : gold.entities) gold_triplets.insert({e.begin, e.end, e.label});
    std::set<std::tuple<std::int64_t, std::int64_t, std::string>> pred_triplets;
    for (const auto& e : pred.entities) pred_triplets.insert({e.begin, e.end, e.label});

    std::vector<Entity> rem_gold;
    for (const auto& e : gold.entities) {
        if (pred_triplets.count({e.begin, e.end, e.label}) == 0) rem_gold.push_back(e);
    }
    std::vector<Entity> rem_pred;
    for (const auto& e : pred.entities) {
        if (gold_triplets.count({e.begin, e.end, e.label}) == 0) rem_pred.push_back(e);
    }
    std::sort(rem_gold.begin(), rem_gold.end(), triplet_less);
    std::sort(rem_pred.begin(), rem_pred.end(), triplet_less);

    std::vector<bool> gold_used(rem_gold.size(), false);
    std::vector<bool> pred_used(rem_pred.size(), false);
    std::vector<DiscrepancyCase> cases;

    auto add_pair_case = [&](Category cat, const Entity& g, const Entity& p) {
        DiscrepancyCase c;
        c.doc_id = doc.doc_id();
        c.category = cat;
        c.gold_entity = g;
        c.pred_entity = p;
        c.mention_strings = {mention_of(index, g), mention_of(index, p)};
        cases.push_back(std::move(c));
    };

    // (1) label mismatches, then (2) boundary mismatches among survivors.
    for (const auto& pc : greedy_pairs(rem_gold, rem_pred, gold_used, pred_used, false)) {
        gold_used[pc.gold_idx] = true;
        pred_used[pc.pred_idx] = true;
        add_pair_case(Category::label_mismatch, rem_gold[pc.gold_idx], rem_pred[pc.pred_idx]);
    }
    for (const auto& pc : greedy_pairs(rem_gold, rem_pred, gold_used, pred_used, true)) {
        gold_used[pc.gold_idx] = true;
        pred_used[pc.pred_idx] = true;
        add_pair_case(Category::boundary_mismatch, rem_gold[pc.gold_idx], rem_pred[pc.pred_idx]);
    }

    // (3) false negatives and (4) false positives require zero overlap with
    // the entire opposite set, matched entities included.
    for (std::size_t g = 0; g < rem_gold.size(); ++g) {
        if (gold_used[g]) continue;
        const bool any = std::any_of(pred.entities.begin(), pred.entities.end(),
                                     [&](const Entity& p) { return overlap_length(rem_gold[g], p) > 0; });
        if (any) continue;
        gold_used[g] = true;
        DiscrepancyCase c;
        c.doc_id = doc.doc_id();
        c.category = Category::false_negative;
        c.gold_entity = rem_gold[g];
        c.mention_strings = {mention_of(index, rem_gold[g])};
        cases.push_back(std::move(c));
    }
    for (std::size_t p = 0; p < rem_pred.size(); ++p) {
        if (pred_used[p]) continue;
        const bool any = std::any_of(gold.entities.begin(), gold.entities.end(),
                                     [&](const Entity& g) { return overlap_length(rem_pred[p], g) > 0; });
        if (any) continue;
        pred_used[p] = true;
        DiscrepancyCase c;
        c.doc_id = doc.doc_id();
        c.category = Category::false_positive;
        c.pred_entity = rem_pred[p];
        c.mention_strings = {mention_of(index, rem_pred[p])};
        cases.push_back(std::move(c));
    }

    // (5) leftovers overlap only consumed counterparts; file one diagnostic
    // mismatch per leftover against its maximum-overlap counterpart, which
    // may therefore appear in several cases.
    for (std::size_t g = 0; g < rem_gold.size(); ++g) {
        if (gold_used[g]) continue;
        const Entity* counterpart = max_overlap_counterpart(rem_gold[g], pred.entities);
        if (counterpart == nullptr) {
            throw std::logic_error("leftover gold entity without overlap counterpart");
        }
        add_pair_case(rem_gold[g].label == counterpart->label ? Category::boundary_mismatch
                                                              : Category::label_mismatch,
                      rem_gold[g], *counterpart);
    }
    for (std::size_t p = 0; p < rem_pred.size(); ++p) {
        if (pred_used[p]) continue;
        const Entity* counterpart = max_overlap_counterpart(rem_pred[p], gold.entities);
        if (counterpart == nullptr) {
            throw std::logic_error("leftover predicted entity without overlap counterpart");
        }
        add_pair_case(rem_pred[p].label == counterpart->label ? Category::boundary_mismatch
                                                              : Category::label_mismatch,
                      *counterpart, rem_pred[p]);
    }

    std::sort(cases.begin(), cases.end(), case_order);
    return cases;
}

GroupSelection group_and_select(const std::vector<DiscrepancyCase>& cases) {
    GroupSelection out;
    for (const auto& c : cases) ++out.counts[group_key(c)];
    if (out.counts.empty()) return out;  // nothing to moderate
    const GroupKey* best = nullptr;
    long best_count = -1;
    for (const auto& [key, count] : out.counts) {
        // map iterates in group_key_less order, so the first maximum is the
        // lexicographically smallest with NONE last
        if (count > best_count) {
            best = &key;
            best_count = count;
        }
    }
    out.dominant = *best;
    return out;
}

namespace {

// Shortest marker repetition that does not occur in the document text.
std::string unique_marker(const std::string& marker, const std::string& text) {
    std::string m = marker;
    while (text.find(m) != std::string::npos) m += marker;
    return m;
}

}  // namespace

std::string extract_context(const Document& doc, const DiscrepancyCase& c,
                            const ContextOptions& options) {
    if (!c.gold_entity && !c.pred_entity) {
        throw std::invalid_argument("extract_context: case has no entities");
    }
    if (c.doc_id != doc.doc_id()) {
        throw std::invalid_argument("extract_context: case belongs to " + c.doc_id + ", not " +
                                    doc.doc_id());
    }
    std::int64_t begin = std::numeric_limits<std::int64_t>::max();
    std::int64_t end = 0;
    for (const auto* e : {c.gold_entity ? &*c.gold_entity : nullptr,
                          c.pred_entity ? &*c.pred_entity : nullptr}) {
        if (e == nullptr) continue;
        begin = std::min(begin, e->begin);
        end = std::max(end, e->end);
    }
    const util::Utf8Index index(doc.text);
    const auto len = static_cast<std::int64_t>(index.code_points());
    const std::int64_t left = std::max<std::int64_t>(0, begin - options.window);
    const std::int64_t right = std::min<std::int64_t>(len, end + options.window);

    const std::string open = unique_marker(options.open_marker, doc.text);
    const std::string close = unique_marker(options.close_marker, doc.text);
    return index.slice(static_cast<std::size_t>(left), static_cast<std::size_t>(begin)) + open +
           index.slice(static_cast<std::size_t>(begin), static_cast<std::size_t>(end)) + close +
           index.slice(static_cast<std::size_t>(end), static_cast<std::size_t>(right));
}

long DiscrepancyMatrix::at(const std::string& gold_label, const std::string& pred_label) const {
    const auto idx = [&](const std::string& label) -> std::size_t {
        if (label.empty()) return labels.size();
        const auto it = std::find(labels.begin(), labels.end(), label);
        if (it == labels.end()) throw std::out_of_range("label not in matrix: " + label);
        return static_cast<std::size_t>(it - labels.begin());
    };
    return cells[idx(gold_label)][idx(pred_label)];
}

DiscrepancyMatrix build_matrix(const std::vector<DiscrepancyCase>& cases,
                               const std::map<std::string, long>& tp_per_label,
                               const std::vector<std::string>& label_order) {
    DiscrepancyMatrix m;
    m.labels = label_order;
    m.tp_per_label = tp_per_label;
    const std::size_t n = m.labels.size() + 1;  // + NONE
    m.cells.assign(n, std::vector<long>(n, 0));
    const auto idx = [&](const std::string& label) -> std::size_t {
        if (label.empty()) return m.labels.size();
        const auto it = std::find(m.labels.begin(), m.labels.end(), label);
        if (it == m.labels.end()) {
            throw std::invalid_argument("case label outside the declared order: " + label);
        }
        return static_cast<std::size_t>(it - m.labels.begin());
    };
    for (const auto& c : cases) {
        const GroupKey key = group_key(c);
        ++m.cells[idx(key.gold_label)][idx(key.pred_label)];
    }
    return m;
}

DiscrepancyReport analyze_corpus(const std::map<std::string, AnnotationSet>& preds,
                                 const std::map<std::string, AnnotationSet>& golds,
                                 const Corpus& corpus, const AnalysisOptions& options) {
    DiscrepancyReport report;
    std::set<std::string> seen_labels;
    for (const auto& [doc_id, gold] : golds) {
        const auto pit = preds.find(doc_id);
        if (pit == preds.end()) {
            throw std::invalid_argument("missing prediction set for document: " + doc_id);
        }
        const Document* doc = corpus.find(doc_id);
        if (doc == nullptr) {
            throw std::invalid_argument("document not in corpus: " + doc_id);
        }
        for (const auto& e : gold.entities) seen_labels.insert(e.label);
        for (const auto& e : pit->second.entities) seen_labels.insert(e.label);

        // verified true positives feed the matrix sidebar
        std::set<std::tuple<std::int64_t, std::int64_t, std::string>> pred_triplets;
        for (const auto& e : pit->second.entities) pred_triplets.insert({e.begin, e.end, e.label});
        for (const auto& e : gold.entities) {
            if (pred_triplets.count({e.begin, e.end, e.label}) != 0) ++report.tp_per_label[e.label];
        }

        auto cases = categorize(pit->second, gold, *doc);
        for (auto& c : cases) {
            c.context = extract_context(*doc, c, options.context);
            report.cases.push_back(std::move(c));
        }
    }
    auto selection = group_and_select(report.cases);
    report.group_counts = std::move(selection.counts);
    report.dominant = selection.dominant;

    std::vector<std::string> order = options.label_order;
    if (order.empty()) order.assign(seen_labels.begin(), seen_labels.end());
    for (const auto& label : order) {
        if (report.tp_per_label.count(label) == 0) report.tp_per_label[label] = 0;
    }
    report.matrix = build_matrix(report.cases, report.tp_per_label, order);
    return report;
}

nlohmann::json report_to_json(const DiscrepancyReport& report) {
    nlohmann::json j;
    nlohmann::json cases = nlohmann::json::array();
    for (const auto& c : report.cases) {
        nlohmann::json cj;
        cj["doc_id"] = c.doc_id;
        cj["category"] = category_name(c.category);
        const auto entity_json = [](const Entity& e) {
            return nlohmann::json{
                {"begin", e.begin}, {"end", e.end}, {"label", e.label}, {"id", e.id}};
        };
        if (c.gold_entity) cj["gold"] = entity_json(*c.gold_entity);
        if (c.pred_entity) cj["pred"] = entity_json(*c.pred_entity);
        cj["mentions"] = c.mention_strings;
        cj["context"] = c.context;
        cj["group"] = group_key_name(group_key(c));
        cases.push_back(std::move(cj));
    }
    j["cases"] = std::move(cases);
    nlohmann::json groups = nlohmann::json::object();
    for (const auto& [key, count] : report.group_counts) groups[group_key_name(key)] = count;
    j["group_counts"] = std::move(groups);
    j["dominant"] = report.dominant ? nlohmann::json(group_key_name(*report.dominant))
                                    : nlohmann::json(nullptr);
    nlohmann::json matrix;
    matrix["labels"] = report.matrix.labels;
    matrix["cells"] = report.matrix.cells;
    matrix["tp_per_label"] = report.matrix.tp_per_label;
    j["matrix"] = std::move(matrix);
    return j;
}

}  // namespace guidemod::discrepancy
