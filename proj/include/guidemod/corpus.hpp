#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "guidemod/types.hpp"

namespace guidemod::corpus {

/// A file that does not parse under the PubAnnotation document schema.
class LoadError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An entity that violates span invariants against its document text.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SizeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct LoadStats {
    std::size_t documents = 0;
    std::size_t entities = 0;
    std::size_t duplicates_collapsed = 0;
    std::vector<std::string> warnings;
};

struct LoadedCorpus {
    Corpus corpus;
    LoadStats stats;
};

struct SplitSpec {
    std::uint64_t seed = 0;
    std::size_t dev_size = 10;
    std::size_t eval_size = 100;
};

struct Splits {
    Corpus dev;
    Corpus eval;
};

/// Parses one PubAnnotation document file: {text, sourcedb, sourceid,
/// denotations: [{id, span: {begin, end}, obj}]}. Unknown fields are
/// preserved on Document/Entity for round-trip. Exact (begin, end, label)
/// duplicates are collapsed with a warning appended to stats.
struct ParsedDocument {
    Document document;
    AnnotationSet gold;
    std::size_t duplicates_collapsed = 0;
};
ParsedDocument parse_document(const nlohmann::json& j, const std::string& origin);
nlohmann::json document_to_json(const Document& doc, const AnnotationSet& set);

/// Loads a corpus directory. If `path` contains a `gold/` subdirectory the
/// documents and gold sets are read from there, otherwise from `path`
/// itself. Files merge in sorted doc_id order.
LoadedCorpus load_corpus(const std::filesystem::path& path);

/// Reads a sibling prediction directory (one PubAnnotation file per doc) as
/// predicted sets for iteration k. Document texts must match the corpus.
std::map<std::string, AnnotationSet> load_annotation_dir(const std::filesystem::path& dir,
                                                         const Corpus& corpus,
                                                         const Provenance& provenance);

void save_annotation_set(const std::filesystem::path& file, const Document& doc,
                         const AnnotationSet& set);

/// Deterministic split: document ids are sorted lexicographically, shuffled
/// by one mt19937_64 stream seeded with spec.seed, and the dev prefix is
/// taken; eval ids are drawn the same way from the eval pool minus the dev
/// ids, continuing the same stream. dev and eval are always disjoint.
Splits sample_splits(const Corpus& dev_pool, const Corpus& eval_pool, const SplitSpec& spec);

std::map<std::string, long> entity_type_counts(const std::vector<AnnotationSet>& sets);

}  // namespace guidemod::corpus
