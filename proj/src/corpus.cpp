#include "guidemod/corpus.hpp"

#include <algorithm>
#include <random>
#include <set>

#include "guidemod/util.hpp"

namespace guidemod {

const Document* Corpus::find(const std::string& doc_id) const {
    auto it = std::lower_bound(documents.begin(), documents.end(), doc_id,
                               [](const Document& d, const std::string& id) { return d.doc_id() < id; });
    if (it == documents.end() || it->doc_id() != doc_id) return nullptr;
    return &*it;
}

std::vector<std::string> Corpus::doc_ids() const {
    std::vector<std::string> ids;
    ids.reserve(documents.size());
    for (const auto& d : documents) ids.push_back(d.doc_id());
    return ids;
}

bool EntitySchema::has_label(const std::string& name) const {
    return std::any_of(labels.begin(), labels.end(),
                       [&](const LabelDef& l) { return l.name == name; });
}

std::vector<std::string> EntitySchema::label_names() const {
    std::vector<std::string> names;
    names.reserve(labels.size());
    for (const auto& l : labels) names.push_back(l.name);
    return names;
}

EntitySchema EntitySchema::from_json(const nlohmann::json& j) {
    EntitySchema schema;
    if (!j.is_object() || !j.contains("labels") || !j["labels"].is_array()) {
        throw corpus::LoadError("entity schema must be an object with a \"labels\" array");
    }
    for (const auto& item : j["labels"]) {
        LabelDef def;
        def.name = item.at("name").get<std::string>();
        def.definition = item.value("definition", std::string{});
        if (def.name.empty()) throw corpus::LoadError("entity schema label name must be non-empty");
        if (schema.has_label(def.name)) {
            throw corpus::LoadError("duplicate label in entity schema: " + def.name);
        }
        schema.labels.push_back(std::move(def));
    }
    return schema;
}

EntitySchema EntitySchema::load(const std::string& path) {
    return from_json(nlohmann::json::parse(util::read_file(path)));
}

nlohmann::json EntitySchema::to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& l : labels) arr.push_back({{"name", l.name}, {"definition", l.definition}});
    return {{"labels", arr}};
}

namespace corpus {

namespace {

const char* kKnownDocFields[] = {"text", "sourcedb", "sourceid", "denotations"};
const char* kKnownDenotationFields[] = {"id", "span", "obj"};

bool is_known(const std::string& key, const char* const* names, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        if (key == names[i]) return true;
    }
    return false;
}

std::string require_string(const nlohmann::json& j, const char* field, const std::string& origin) {
    if (!j.contains(field) || !j[field].is_string()) {
        throw LoadError(origin + ": missing or non-string field \"" + field + "\"");
    }
    return j[field].get<std::string>();
}

std::int64_t require_int(const nlohmann::json& j, const char* field, const std::string& origin) {
    if (!j.contains(field) || !j[field].is_number_integer()) {
        throw LoadError(origin + ": missing or non-integer field \"" + field + "\"");
    }
    return j[field].get<std::int64_t>();
}

}  // namespace

ParsedDocument parse_document(const nlohmann::json& j, const std::string& origin) {
    if (!j.is_object()) throw LoadError(origin + ": document must be a JSON object");

    ParsedDocument out;
    out.document.text = require_string(j, "text", origin);
    out.document.source_db = require_string(j, "sourcedb", origin);
    out.document.source_id = require_string(j, "sourceid", origin);
    if (out.document.text.empty()) throw LoadError(origin + ": field \"text\" must be non-empty");
    if (!util::is_valid_utf8(out.document.text)) {
        throw LoadError(origin + ": field \"text\" is not valid UTF-8");
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!is_known(it.key(), kKnownDocFields, std::size(kKnownDocFields))) {
            out.document.extra[it.key()] = it.value();
        }
    }

    const util::Utf8Index index(out.document.text);
    const auto doc_id = out.document.doc_id();
    out.gold.doc_id = doc_id;
    out.gold.provenance = Provenance::make_gold();

    if (j.contains("denotations")) {
        if (!j["denotations"].is_array()) {
            throw LoadError(origin + ": field \"denotations\" must be an array");
        }
        std::set<std::tuple<std::int64_t, std::int64_t, std::string>> seen;
        for (const auto& d : j["denotations"]) {
            if (!d.is_object()) throw LoadError(origin + ": denotation must be an object");
            Entity e;
            e.id = d.contains("id") ? d.value("id", std::string{}) : std::string{};
            if (!d.contains("span") || !d["span"].is_object()) {
                throw LoadError(origin + ": denotation missing \"span\" object");
            }
            e.begin = require_int(d["span"], "begin", origin);
            e.end = require_int(d["span"], "end", origin);
            e.label = require_string(d, "obj", origin);
            for (auto it = d.begin(); it != d.end(); ++it) {
                if (!is_known(it.key(), kKnownDenotationFields, std::size(kKnownDenotationFields))) {
                    e.extra[it.key()] = it.value();
                }
            }
            if (e.begin < 0 || e.begin >= e.end ||
                e.end > static_cast<std::int64_t>(index.code_points())) {
                throw ValidationError("doc " + doc_id + ", entity \"" + e.id + "\": span [" +
                                      std::to_string(e.begin) + ", " + std::to_string(e.end) +
                                      ") violates 0 <= begin < end <= " +
                                      std::to_string(index.code_points()));
            }
            if (!seen.insert({e.begin, e.end, e.label}).second) {
                ++out.duplicates_collapsed;
                continue;
            }
            out.gold.entities.push_back(std::move(e));
        }
    }
    return out;
}

nlohmann::json document_to_json(const Document& doc, const AnnotationSet& set) {
    nlohmann::json j;
    j["text"] = doc.text;
    j["sourcedb"] = doc.source_db;
    j["sourceid"] = doc.source_id;
    nlohmann::json dens = nlohmann::json::array();
    for (const auto& e : set.entities) {
        nlohmann::json d;
        d["id"] = e.id;
        d["span"] = {{"begin", e.begin}, {"end", e.end}};
        d["obj"] = e.label;
        for (auto it = e.extra.begin(); it != e.extra.end(); ++it) d[it.key()] = it.value();
        dens.push_back(std::move(d));
    }
    j["denotations"] = std::move(dens);
    for (auto it = doc.extra.begin(); it != doc.extra.end(); ++it) j[it.key()] = it.value();
    return j;
}

namespace {

std::vector<std::filesystem::path> json_files_sorted(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".json") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    return files;
}

}  // namespace

LoadedCorpus load_corpus(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw LoadError("corpus path does not exist: " + path.string());
    }
    std::filesystem::path dir = path;
    if (std::filesystem::is_directory(path / "gold")) dir = path / "gold";

    LoadedCorpus out;
    for (const auto& file : json_files_sorted(dir)) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(util::read_file(file));
        } catch (const nlohmann::json::parse_error& e) {
            throw LoadError(file.string() + ": " + e.what());
        }
        ParsedDocument parsed = parse_document(j, file.string());
        const auto doc_id = parsed.document.doc_id();
        if (out.corpus.gold.count(doc_id) != 0) {
            throw LoadError(file.string() + ": duplicate doc_id " + doc_id);
        }
        if (parsed.duplicates_collapsed > 0) {
            out.stats.duplicates_collapsed += parsed.duplicates_collapsed;
            out.stats.warnings.push_back("doc " + doc_id + ": collapsed " +
                                         std::to_string(parsed.duplicates_collapsed) +
                                         " duplicate denotation(s)");
        }
        out.stats.entities += parsed.gold.entities.size();
        out.corpus.gold.emplace(doc_id, std::move(parsed.gold));
        out.corpus.documents.push_back(std::move(parsed.document));
    }
    std::sort(out.corpus.documents.begin(), out.corpus.documents.end(),
              [](const Document& a, const Document& b) { return a.doc_id() < b.doc_id(); });
    out.stats.documents = out.corpus.documents.size();
    return out;
}

std::map<std::string, AnnotationSet> load_annotation_dir(const std::filesystem::path& dir,
                                                         const Corpus& corpus,
                                                         const Provenance& provenance) {
    if (!std::filesystem::is_directory(dir)) {
        throw LoadError("annotation directory does not exist: " + dir.string());
    }
    std::map<std::string, AnnotationSet> sets;
    for (const auto& file : json_files_sorted(dir)) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(util::read_file(file));
        } catch (const nlohmann::json::parse_error& e) {
            throw LoadError(file.string() + ": " + e.what());
        }
        ParsedDocument parsed = parse_document(j, file.string());
        const auto doc_id = parsed.document.doc_id();
        const Document* doc = corpus.find(doc_id);
        if (doc == nullptr) {
            throw LoadError(file.string() + ": doc " + doc_id + " not present in corpus");
        }
        if (doc->text != parsed.document.text) {
            throw LoadError(file.string() + ": document text differs from corpus copy of " + doc_id);
        }
        parsed.gold.provenance = provenance;
        sets.emplace(doc_id, std::move(parsed.gold));
    }
    return sets;
}

void save_annotation_set(const std::filesystem::path& file, const Document& doc,
                         const AnnotationSet& set) {
    util::write_file(file, document_to_json(doc, set).dump(2) + "\n");
}

namespace {

Corpus subset(const Corpus& pool, const std::vector<std::string>& ids) {
    Corpus out;
    for (const auto& id : ids) {
        const Document* doc = pool.find(id);
        out.documents.push_back(*doc);
        out.gold.emplace(id, pool.gold.at(id));
    }
    std::sort(out.documents.begin(), out.documents.end(),
              [](const Document& a, const Document& b) { return a.doc_id() < b.doc_id(); });
    return out;
}

}  // namespace

Splits sample_splits(const Corpus& dev_pool, const Corpus& eval_pool, const SplitSpec& spec) {
    std::vector<std::string> dev_ids = dev_pool.doc_ids();
    std::sort(dev_ids.begin(), dev_ids.end());
    if (dev_ids.size() < spec.dev_size) {
        throw SizeError("dev pool has " + std::to_string(dev_ids.size()) +
                        " documents, need " + std::to_string(spec.dev_size));
    }
    std::mt19937_64 rng(spec.seed);
    util::fisher_yates(dev_ids, rng);
    dev_ids.resize(spec.dev_size);

    std::set<std::string> taken(dev_ids.begin(), dev_ids.end());
    std::vector<std::string> eval_ids;
    for (const auto& id : eval_pool.doc_ids()) {
        if (taken.count(id) == 0) eval_ids.push_back(id);
    }
    std::sort(eval_ids.begin(), eval_ids.end());
    if (eval_ids.size() < spec.eval_size) {
        throw SizeError("eval pool has " + std::to_string(eval_ids.size()) +
                        " documents after removing dev ids, need " +
                        std::to_string(spec.eval_size));
    }
    util::fisher_yates(eval_ids, rng);
    eval_ids.resize(spec.eval_size);

    return {subset(dev_pool, dev_ids), subset(eval_pool, eval_ids)};
}

std::map<std::string, long> entity_type_counts(const std::vector<AnnotationSet>& sets) {
    std::map<std::string, long> counts;
    for (const auto& set : sets) {
        for (const auto& e : set.entities) ++counts[e.label];
    }
    return counts;
}

}  // namespace corpus
}  // namespace guidemod
