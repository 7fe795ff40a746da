#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

namespace guidemod {

/// One span-level annotation: a (begin, end, label) triplet over a document.
/// Offsets count Unicode scalar values; [begin, end) is half-open.
struct Entity {
    std::string id;
    std::int64_t begin = 0;
    std::int64_t end = 0;
    std::string label;
    nlohmann::json extra = nlohmann::json::object();  // unknown fields, kept for round-trip

    std::tuple<std::int64_t, std::int64_t, const std::string&> triplet() const {
        return {begin, end, label};
    }
};

inline bool same_triplet(const Entity& a, const Entity& b) {
    return a.begin == b.begin && a.end == b.end && a.label == b.label;
}

inline bool triplet_less(const Entity& a, const Entity& b) {
    return a.triplet() < b.triplet();
}

struct Document {
    std::string source_db;
    std::string source_id;
    std::string text;
    nlohmann::json extra = nlohmann::json::object();

    std::string doc_id() const { return source_db + ":" + source_id; }
};

struct Provenance {
    enum class Kind { gold, predicted };
    Kind kind = Kind::gold;
    int iteration = -1;       // valid for predicted sets
    std::string model_id;     // valid for predicted sets

    static Provenance make_gold() { return {}; }
    static Provenance make_predicted(int iteration, std::string model_id) {
        return {Kind::predicted, iteration, std::move(model_id)};
    }
};

/// Annotations of one document. Exact-duplicate triplets are collapsed at
/// ingestion, so entities form a set under (begin, end, label).
struct AnnotationSet {
    std::string doc_id;
    std::vector<Entity> entities;
    Provenance provenance;
};

struct Corpus {
    std::vector<Document> documents;            // sorted by doc_id
    std::map<std::string, AnnotationSet> gold;  // doc_id -> gold set

    const Document* find(const std::string& doc_id) const;
    std::vector<std::string> doc_ids() const;
};

/// Ordered label inventory with one-line definitions, as rendered into
/// annotation prompts.
struct EntitySchema {
    struct LabelDef {
        std::string name;
        std::string definition;
    };
    std::vector<LabelDef> labels;

    bool has_label(const std::string& name) const;
    std::vector<std::string> label_names() const;

    static EntitySchema from_json(const nlohmann::json& j);
    static EntitySchema load(const std::string& path);
    nlohmann::json to_json() const;
};

}  // namespace guidemod
