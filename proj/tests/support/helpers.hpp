#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "guidemod/types.hpp"

namespace testsupport {

/// Unique scratch directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<unsigned> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("guidemod-" + tag + "-" + std::to_string(::getpid()) + "-" +
                 std::to_string(counter.fetch_add(1)));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline guidemod::Entity entity(std::int64_t begin, std::int64_t end, std::string label,
                               std::string id = {}) {
    guidemod::Entity e;
    e.id = std::move(id);
    e.begin = begin;
    e.end = end;
    e.label = std::move(label);
    return e;
}

inline guidemod::Document document(const std::string& source_id, std::string text,
                                   const std::string& source_db = "testdb") {
    guidemod::Document d;
    d.source_db = source_db;
    d.source_id = source_id;
    d.text = std::move(text);
    return d;
}

inline guidemod::AnnotationSet annotation_set(const guidemod::Document& doc,
                                              std::vector<guidemod::Entity> entities,
                                              guidemod::Provenance provenance = {}) {
    guidemod::AnnotationSet set;
    set.doc_id = doc.doc_id();
    set.entities = std::move(entities);
    set.provenance = provenance;
    return set;
}

/// Random document with <= max_entities random-span entities per side drawn
/// from `labels`. Spans are arbitrary and may collide or nest.
struct RandomDoc {
    guidemod::Document doc;
    guidemod::AnnotationSet gold;
    guidemod::AnnotationSet pred;
};

inline RandomDoc random_doc(std::mt19937_64& rng, int index,
                            const std::vector<std::string>& labels, int max_entities = 10,
                            int text_len = 80) {
    RandomDoc out;
    std::string text;
    for (int i = 0; i < text_len; ++i) {
        text.push_back(static_cast<char>('a' + static_cast<int>(rng() % 26)));
    }
    out.doc = document("rand-" + std::to_string(index), text);

    const auto draw_entities = [&](guidemod::AnnotationSet& set) {
        set.doc_id = out.doc.doc_id();
        const int n = static_cast<int>(rng() % static_cast<unsigned>(max_entities + 1));
        std::set<std::tuple<std::int64_t, std::int64_t, std::string>> seen;
        for (int i = 0; i < n; ++i) {
            const auto begin = static_cast<std::int64_t>(rng() % static_cast<unsigned>(text_len - 1));
            const auto span = 1 + static_cast<std::int64_t>(rng() % 8);
            const auto end = std::min<std::int64_t>(begin + span, text_len);
            const auto& label = labels[rng() % labels.size()];
            if (!seen.insert({begin, end, label}).second) continue;  // ingestion dedup
            set.entities.push_back(entity(begin, end, label, "T" + std::to_string(i + 1)));
        }
    };
    draw_entities(out.gold);
    draw_entities(out.pred);
    out.pred.provenance = guidemod::Provenance::make_predicted(0, "rand-model");
    return out;
}

inline std::filesystem::path fixture_dir() { return std::filesystem::path(FIXTURE_DIR); }
inline std::filesystem::path template_dir() { return std::filesystem::path(TEMPLATE_DIR); }

}  // namespace testsupport
