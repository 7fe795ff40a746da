#include <doctest.h>

#include <random>
#include <set>

#include "guidemod/corpus.hpp"
#include "guidemod/discrepancy.hpp"
#include "support/helpers.hpp"

using namespace guidemod;
using discrepancy::Category;
using testsupport::annotation_set;
using testsupport::document;
using testsupport::entity;

TEST_CASE("overlap_length: adjacency, partial overlap, index-set oracle") {
    CHECK(discrepancy::overlap_length(entity(0, 5, "A"), entity(5, 9, "A")) == 0);
    CHECK(discrepancy::overlap_length(entity(0, 5, "A"), entity(3, 8, "A")) == 2);

    std::mt19937_64 rng(21);
    for (int i = 0; i < 500; ++i) {
        const auto a = entity(static_cast<long>(rng() % 50), 0, "A");
        const auto b = entity(static_cast<long>(rng() % 50), 0, "B");
        Entity ea = a, eb = b;
        ea.end = ea.begin + 1 + static_cast<long>(rng() % 10);
        eb.end = eb.begin + 1 + static_cast<long>(rng() % 10);

        std::set<long> ia, ib;  // character index sets
        for (long k = ea.begin; k < ea.end; ++k) ia.insert(k);
        for (long k = eb.begin; k < eb.end; ++k) ib.insert(k);
        long inter = 0;
        for (long k : ia) inter += ib.count(k);
        CHECK(discrepancy::overlap_length(ea, eb) == inter);
    }
}

namespace {

const std::string kText40 = "0123456789012345678901234567890123456789";

std::vector<discrepancy::DiscrepancyCase> run_categorize(std::vector<Entity> gold,
                                                         std::vector<Entity> pred) {
    const auto doc = document("c1", kText40);
    return discrepancy::categorize(annotation_set(doc, std::move(pred)),
                                   annotation_set(doc, std::move(gold)), doc);
}

}  // namespace

TEST_CASE("categorize: the four forced single-case outcomes") {
    auto lm = run_categorize({entity(0, 5, "Disease")}, {entity(0, 5, "Chemical")});
    REQUIRE(lm.size() == 1);
    CHECK(lm[0].category == Category::label_mismatch);
    CHECK(lm[0].gold_entity->label == "Disease");
    CHECK(lm[0].pred_entity->label == "Chemical");

    auto bm = run_categorize({entity(0, 5, "D")}, {entity(2, 9, "D")});
    REQUIRE(bm.size() == 1);
    CHECK(bm[0].category == Category::boundary_mismatch);

    auto fnfp = run_categorize({entity(0, 5, "D")}, {entity(10, 15, "D")});
    REQUIRE(fnfp.size() == 2);
    CHECK(fnfp[0].category == Category::false_negative);
    CHECK(fnfp[1].category == Category::false_positive);

    CHECK(run_categorize({entity(0, 5, "D")}, {entity(0, 5, "D")}).empty());  // pure TP
}

TEST_CASE("label mismatch outranks boundary mismatch per the priority order") {
    // gold D overlaps both a cross-type prediction and a same-type one; the
    // cross-type pairing wins, the same-type prediction becomes a leftover
    auto cases = run_categorize({entity(0, 6, "D")}, {entity(0, 6, "C"), entity(1, 7, "D")});
    REQUIRE(cases.size() == 2);
    CHECK(cases[0].category == Category::label_mismatch);
    CHECK(cases[0].pred_entity->label == "C");
    // the leftover same-type prediction overlaps only the consumed gold
    CHECK(cases[1].category == Category::boundary_mismatch);
    CHECK(cases[1].pred_entity->begin == 1);
    CHECK(cases[1].gold_entity->begin == 0);
}

TEST_CASE("a gold overlapping only a true positive is not a false negative") {
    // pred (0,5,D) matches gold exactly; the second gold overlaps only that
    // prediction, so by definition it cannot be an FN
    auto cases = run_categorize({entity(0, 5, "D"), entity(3, 8, "D")}, {entity(0, 5, "D")});
    REQUIRE(cases.size() == 1);
    CHECK(cases[0].category == Category::boundary_mismatch);
    CHECK(cases[0].gold_entity->begin == 3);
    CHECK(cases[0].pred_entity->begin == 0);  // counterpart is the TP prediction
}

// ---------------------------------------------------------------------------
// exhaustive-assignment oracle: the same priority rules, written as repeated
// full scans instead of a sorted greedy pass

namespace {

struct OracleCase {
    Category category;
    std::optional<Entity> gold;
    std::optional<Entity> pred;
};

std::vector<OracleCase> oracle_categorize(const std::vector<Entity>& gold_in,
                                          const std::vector<Entity>& pred_in) {
    std::vector<Entity> gold;
    std::vector<Entity> pred;
    const auto is_match = [](const Entity& a, const std::vector<Entity>& others) {
        return std::any_of(others.begin(), others.end(),
                           [&](const Entity& o) { return same_triplet(a, o); });
    };
    for (const auto& g : gold_in) {
        if (!is_match(g, pred_in)) gold.push_back(g);
    }
    for (const auto& p : pred_in) {
        if (!is_match(p, gold_in)) pred.push_back(p);
    }

    std::vector<bool> gu(gold.size(), false), pu(pred.size(), false);
    std::vector<OracleCase> cases;

    const auto pair_pass = [&](bool same_label, Category cat) {
        for (;;) {
            long best_ov = 0;
            std::size_t bg = 0, bp = 0;
            bool found = false;
            for (std::size_t g = 0; g < gold.size(); ++g) {
                if (gu[g]) continue;
                for (std::size_t p = 0; p < pred.size(); ++p) {
                    if (pu[p]) continue;
                    if ((gold[g].label == pred[p].label) != same_label) continue;
                    const long ov = discrepancy::overlap_length(gold[g], pred[p]);
                    if (ov < 1) continue;
                    const bool better =
                        !found || ov > best_ov ||
                        (ov == best_ov &&
                         (triplet_less(gold[g], gold[bg]) ||
                          (!triplet_less(gold[bg], gold[g]) && triplet_less(pred[p], pred[bp]))));
                    if (better) {
                        best_ov = ov;
                        bg = g;
                        bp = p;
                        found = true;
                    }
                }
            }
            if (!found) break;
            gu[bg] = true;
            pu[bp] = true;
            cases.push_back({cat, gold[bg], pred[bp]});
        }
    };
    pair_pass(false, Category::label_mismatch);
    pair_pass(true, Category::boundary_mismatch);

    for (std::size_t g = 0; g < gold.size(); ++g) {
        if (gu[g]) continue;
        const bool any = std::any_of(pred_in.begin(), pred_in.end(), [&](const Entity& p) {
            return discrepancy::overlap_length(gold[g], p) > 0;
        });
        if (!any) {
            gu[g] = true;
            cases.push_back({Category::false_negative, gold[g], std::nullopt});
        }
    }
    for (std::size_t p = 0; p < pred.size(); ++p) {
        if (pu[p]) continue;
        const bool any = std::any_of(gold_in.begin(), gold_in.end(), [&](const Entity& g) {
            return discrepancy::overlap_length(pred[p], g) > 0;
        });
        if (!any) {
            pu[p] = true;
            cases.push_back({Category::false_positive, std::nullopt, pred[p]});
        }
    }

    const auto best_counterpart = [&](const Entity& subject, const std::vector<Entity>& others) {
        const Entity* best = nullptr;
        long best_ov = 0;
        for (const auto& o : others) {
            const long ov = discrepancy::overlap_length(subject, o);
            if (ov < 1) continue;
            if (best == nullptr || ov > best_ov || (ov == best_ov && triplet_less(o, *best))) {
                best = &o;
                best_ov = ov;
            }
        }
        return best;
    };
    for (std::size_t g = 0; g < gold.size(); ++g) {
        if (gu[g]) continue;
        const Entity* c = best_counterpart(gold[g], pred_in);
        REQUIRE(c != nullptr);
        cases.push_back({gold[g].label == c->label ? Category::boundary_mismatch
                                                   : Category::label_mismatch,
                         gold[g], *c});
    }
    for (std::size_t p = 0; p < pred.size(); ++p) {
        if (pu[p]) continue;
        const Entity* c = best_counterpart(pred[p], gold_in);
        REQUIRE(c != nullptr);
        cases.push_back({pred[p].label == c->label ? Category::boundary_mismatch
                                                   : Category::label_mismatch,
                         *c, pred[p]});
    }
    return cases;
}

using CaseKey = std::tuple<int, std::int64_t, std::int64_t, std::string, std::int64_t,
                           std::int64_t, std::string>;

CaseKey key_of(Category cat, const std::optional<Entity>& g, const std::optional<Entity>& p) {
    return {static_cast<int>(cat),
            g ? g->begin : -1,
            g ? g->end : -1,
            g ? g->label : "",
            p ? p->begin : -1,
            p ? p->end : -1,
            p ? p->label : ""};
}

}  // namespace

TEST_CASE("categorize matches the exhaustive-assignment oracle on 500 random docs") {
    std::mt19937_64 rng(31);
    const std::vector<std::string> labels = {"A", "B", "C"};
    for (int d = 0; d < 500; ++d) {
        const auto rd = testsupport::random_doc(rng, d, labels);
        const auto cases = discrepancy::categorize(rd.pred, rd.gold, rd.doc);
        const auto oracle = oracle_categorize(rd.gold.entities, rd.pred.entities);

        std::multiset<CaseKey> got, want;
        for (const auto& c : cases) got.insert(key_of(c.category, c.gold_entity, c.pred_entity));
        for (const auto& c : oracle) want.insert(key_of(c.category, c.gold, c.pred));
        REQUIRE(got == want);
    }
}

TEST_CASE("partition and zero-overlap invariants hold on random docs") {
    std::mt19937_64 rng(32);
    const std::vector<std::string> labels = {"A", "B"};
    for (int d = 0; d < 300; ++d) {
        const auto rd = testsupport::random_doc(rng, d, labels);
        const auto cases = discrepancy::categorize(rd.pred, rd.gold, rd.doc);

        // every non-TP entity appears in exactly one case as a subject
        std::multiset<std::tuple<std::int64_t, std::int64_t, std::string>> gold_subjects,
            pred_subjects;
        for (const auto& c : cases) {
            switch (c.category) {
                case Category::false_negative:
                    gold_subjects.insert(c.gold_entity->triplet());
                    break;
                case Category::false_positive:
                    pred_subjects.insert(c.pred_entity->triplet());
                    break;
                default:
                    gold_subjects.insert(c.gold_entity->triplet());
                    pred_subjects.insert(c.pred_entity->triplet());
                    break;
            }
        }
        const auto non_tp = [](const std::vector<Entity>& own, const std::vector<Entity>& other) {
            std::vector<Entity> out;
            for (const auto& e : own) {
                const bool matched = std::any_of(other.begin(), other.end(), [&](const Entity& o) {
                    return same_triplet(e, o);
                });
                if (!matched) out.push_back(e);
            }
            return out;
        };
        for (const auto& g : non_tp(rd.gold.entities, rd.pred.entities)) {
            CHECK(gold_subjects.count(g.triplet()) >= 1);
        }
        for (const auto& p : non_tp(rd.pred.entities, rd.gold.entities)) {
            CHECK(pred_subjects.count(p.triplet()) >= 1);
        }

        for (const auto& c : cases) {
            if (c.category == Category::false_negative) {
                for (const auto& p : rd.pred.entities) {
                    CHECK(discrepancy::overlap_length(*c.gold_entity, p) == 0);
                }
            }
            if (c.category == Category::false_positive) {
                for (const auto& g : rd.gold.entities) {
                    CHECK(discrepancy::overlap_length(*c.pred_entity, g) == 0);
                }
            }
            if (c.category == Category::boundary_mismatch) {
                CHECK(c.gold_entity->label == c.pred_entity->label);
                CHECK_FALSE(same_triplet(*c.gold_entity, *c.pred_entity));
            }
            if (c.category == Category::label_mismatch) {
                CHECK(c.gold_entity->label != c.pred_entity->label);
                CHECK(discrepancy::overlap_length(*c.gold_entity, *c.pred_entity) >= 1);
            }
        }
    }
}

TEST_CASE("categorize output is invariant under input permutation") {
    std::mt19937_64 rng(33);
    for (int d = 0; d < 50; ++d) {
        auto rd = testsupport::random_doc(rng, d, {"A", "B", "C"});
        const auto before = discrepancy::categorize(rd.pred, rd.gold, rd.doc);
        std::shuffle(rd.pred.entities.begin(), rd.pred.entities.end(), rng);
        std::shuffle(rd.gold.entities.begin(), rd.gold.entities.end(), rng);
        const auto after = discrepancy::categorize(rd.pred, rd.gold, rd.doc);
        REQUIRE(before.size() == after.size());
        for (std::size_t i = 0; i < before.size(); ++i) {
            CHECK(key_of(before[i].category, before[i].gold_entity, before[i].pred_entity) ==
                  key_of(after[i].category, after[i].gold_entity, after[i].pred_entity));
        }
    }
}

TEST_CASE("group_and_select: single case, tally oracle, tie break, empty input") {
    const auto doc = document("g1", kText40);
    auto single = discrepancy::categorize(annotation_set(doc, {}),
                                          annotation_set(doc, {entity(0, 4, "D")}), doc);
    const auto selection = discrepancy::group_and_select(single);
    REQUIRE(selection.dominant.has_value());
    CHECK(selection.dominant->gold_label == "D");
    CHECK(selection.dominant->pred_label == "");

    CHECK_FALSE(discrepancy::group_and_select({}).dominant.has_value());

    std::mt19937_64 rng(41);
    const std::vector<std::string> labels = {"A", "B"};
    for (int i = 0; i < 100; ++i) {
        std::vector<discrepancy::DiscrepancyCase> cases;
        const int n = 1 + static_cast<int>(rng() % 30);
        for (int c = 0; c < n; ++c) {
            discrepancy::DiscrepancyCase dc;
            dc.doc_id = "g1";
            const bool has_gold = rng() % 2 == 0;
            const bool has_pred = !has_gold || rng() % 2 == 0;
            if (has_gold) dc.gold_entity = entity(0, 4, labels[rng() % 2]);
            if (has_pred) dc.pred_entity = entity(0, 4, labels[rng() % 2]);
            dc.category = has_gold && has_pred ? Category::label_mismatch
                          : has_gold           ? Category::false_negative
                                               : Category::false_positive;
            cases.push_back(dc);
        }
        const auto got = discrepancy::group_and_select(cases);

        // oracle: tally and argmax with the same lexicographic NONE-last rule
        std::map<std::pair<std::string, std::string>, long> tally;
        for (const auto& c : cases) {
            tally[{c.gold_entity ? c.gold_entity->label : "",
                   c.pred_entity ? c.pred_entity->label : ""}]++;
        }
        std::pair<std::string, std::string> best;
        long best_count = -1;
        for (const auto& [key, count] : tally) {
            const auto rank = [](const std::string& s) { return std::make_pair(s.empty(), s); };
            const auto better =
                count > best_count ||
                (count == best_count &&
                 std::make_pair(rank(key.first), rank(key.second)) <
                     std::make_pair(rank(best.first), rank(best.second)));
            if (better) {
                best = key;
                best_count = count;
            }
        }
        REQUIRE(got.dominant.has_value());
        CHECK(got.dominant->gold_label == best.first);
        CHECK(got.dominant->pred_label == best.second);
        CHECK(got.counts.at(*got.dominant) == best_count);

        long total = 0;
        for (const auto& [key, count] : got.counts) total += count;
        CHECK(total == n);
    }
}

TEST_CASE("extract_context clips at bounds and marks the span") {
    Document doc = document("x1", "01234567890123456789");  // 20 chars
    discrepancy::DiscrepancyCase c;
    c.doc_id = doc.doc_id();
    c.gold_entity = entity(5, 9, "D");
    c.category = Category::false_negative;

    const auto whole = discrepancy::extract_context(doc, c);
    CHECK(whole == "01234\xE2\x9F\xA6"
                   "5678\xE2\x9F\xA7"
                   "90123456789");

    discrepancy::DiscrepancyCase at_zero = c;
    at_zero.gold_entity = entity(0, 3, "D");
    const auto left_empty = discrepancy::extract_context(doc, at_zero);
    CHECK(left_empty.starts_with("\xE2\x9F\xA6"));

    // slicing oracle on a long document
    std::string long_text;
    for (int i = 0; i < 500; ++i) long_text.push_back(static_cast<char>('a' + i % 26));
    Document long_doc = document("x2", long_text);
    discrepancy::DiscrepancyCase mid;
    mid.doc_id = long_doc.doc_id();
    mid.gold_entity = entity(200, 210, "D");
    const auto snippet = discrepancy::extract_context(long_doc, mid);
    CHECK(snippet == long_text.substr(140, 60) + "\xE2\x9F\xA6" + long_text.substr(200, 10) +
                         "\xE2\x9F\xA7" + long_text.substr(210, 60));

    // window parameter honored
    discrepancy::ContextOptions narrow;
    narrow.window = 5;
    CHECK(discrepancy::extract_context(long_doc, mid, narrow) ==
          long_text.substr(195, 5) + "\xE2\x9F\xA6" + long_text.substr(200, 10) + "\xE2\x9F\xA7" +
              long_text.substr(210, 5));
}

TEST_CASE("context markers are widened when they occur in the text") {
    Document doc = document("x3", "see \xE2\x9F\xA6marked\xE2\x9F\xA7 here and more text");
    discrepancy::DiscrepancyCase c;
    c.doc_id = doc.doc_id();
    c.gold_entity = entity(4, 5, "D");
    const auto snippet = discrepancy::extract_context(doc, c);
    // doubled markers delimit, single ones stay document text
    CHECK(snippet.find("\xE2\x9F\xA6\xE2\x9F\xA6") != std::string::npos);
    CHECK(snippet.find("\xE2\x9F\xA7\xE2\x9F\xA7") != std::string::npos);
}

TEST_CASE("build_matrix: empty input gives a zero matrix") {
    const auto m = discrepancy::build_matrix({}, {{"A", 0}, {"B", 0}}, {"A", "B"});
    for (const auto& row : m.cells) {
        for (long cell : row) CHECK(cell == 0);
    }
    CHECK(m.at("A", "B") == 0);
}

TEST_CASE("matrix row and column sums equal the group tallies on random cases") {
    std::mt19937_64 rng(51);
    const std::vector<std::string> labels = {"A", "B", "C"};
    for (int i = 0; i < 60; ++i) {
        std::vector<discrepancy::DiscrepancyCase> cases;
        const int n = static_cast<int>(rng() % 40);
        for (int c = 0; c < n; ++c) {
            discrepancy::DiscrepancyCase dc;
            const int kind = static_cast<int>(rng() % 3);
            if (kind == 0) {
                dc.category = Category::false_negative;
                dc.gold_entity = entity(0, 4, labels[rng() % 3]);
            } else if (kind == 1) {
                dc.category = Category::false_positive;
                dc.pred_entity = entity(0, 4, labels[rng() % 3]);
            } else {
                dc.gold_entity = entity(0, 4, labels[rng() % 3]);
                dc.pred_entity = entity(1, 5, labels[rng() % 3]);
                dc.category = dc.gold_entity->label == dc.pred_entity->label
                                  ? Category::boundary_mismatch
                                  : Category::label_mismatch;
            }
            cases.push_back(dc);
        }
        const auto selection = discrepancy::group_and_select(cases);
        const auto matrix = discrepancy::build_matrix(cases, {}, labels);
        long matrix_total = 0;
        for (const auto& row : matrix.cells) {
            for (long cell : row) matrix_total += cell;
        }
        CHECK(matrix_total == n);
        for (const auto& [key, count] : selection.counts) {
            CHECK(matrix.at(key.gold_label, key.pred_label) == count);
        }
        CHECK(matrix.at("", "") == 0);  // NONE->NONE never occurs
    }
}

TEST_CASE("the bundled iteration-0 fixture reproduces the published matrix") {
    const auto loaded = corpus::load_corpus(testsupport::fixture_dir() / "ncbi_dev_iter0");
    const auto preds =
        corpus::load_annotation_dir(testsupport::fixture_dir() / "ncbi_dev_iter0" / "pred-iter-0",
                                    loaded.corpus, Provenance::make_predicted(0, "m"));
    discrepancy::AnalysisOptions options;
    options.label_order = {"CompositeMention", "DiseaseClass", "Modifier", "SpecificDisease"};
    const auto report =
        discrepancy::analyze_corpus(preds, loaded.corpus.gold, loaded.corpus, options);

    const char* C = "CompositeMention";
    const char* D = "DiseaseClass";
    const char* M = "Modifier";
    const char* S = "SpecificDisease";

    CHECK(report.matrix.at(D, "") == 7);
    CHECK(report.matrix.at(S, D) == 5);
    CHECK(report.matrix.at(S, M) == 5);
    CHECK(report.matrix.at(D, C) == 3);
    CHECK(report.matrix.at(D, M) == 1);
    CHECK(report.matrix.at(M, C) == 1);
    CHECK(report.matrix.at(M, "") == 1);
    CHECK(report.matrix.at(S, "") == 3);
    CHECK(report.matrix.at("", D) == 1);
    CHECK(report.matrix.at("", S) == 1);
    // diagonal and every other cell are zero at iteration 0
    long total = 0;
    for (const auto& row : report.matrix.cells) {
        for (long cell : row) total += cell;
    }
    CHECK(total == 28);
    for (const auto label : {C, D, M, S}) CHECK(report.matrix.at(label, label) == 0);

    CHECK(report.tp_per_label.at(C) == 0);
    CHECK(report.tp_per_label.at(D) == 12);
    CHECK(report.tp_per_label.at(M) == 14);
    CHECK(report.tp_per_label.at(S) == 34);

    REQUIRE(report.dominant.has_value());
    CHECK(report.dominant->gold_label == D);
    CHECK(report.dominant->pred_label == "");
    CHECK(report.group_counts.at(*report.dominant) == 7);
}
