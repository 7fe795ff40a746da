#include "guidemod/annotator.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <set>
#include <thread>

#include "guidemod/corpus.hpp"
#include "guidemod/util.hpp"

namespace guidemod::annotator {

namespace {

const char* kItemSchema =
    R"({"begin": <integer>, "end": <integer>, "label": "<schema label>", "span_text": "<exact text of the span>"})";

std::string schema_block(const EntitySchema& schema) {
    std::string out;
    for (const auto& label : schema.labels) {
        out += "- " + label.name;
        if (!label.definition.empty()) out += ": " + label.definition;
        out += "\n";
    }
    if (!out.empty()) out.pop_back();
    return out;
}

// Smallest run of dashes (at least 3) that no document line consists of.
std::string safe_delimiter(const std::string& text) {
    std::set<std::size_t> dash_lines;
    for (const auto& line : util::split_lines(text)) {
        if (!line.empty() && line.find_first_not_of('-') == std::string::npos) {
            dash_lines.insert(line.size());
        }
    }
    std::size_t n = 3;
    while (dash_lines.count(n) != 0) ++n;
    return std::string(n, '-');
}

}  // namespace

gateway::CompletionRequest render_annotation_prompt(const EntitySchema& schema,
                                                    const moderator::Guideline& guideline,
                                                    const Document& doc,
                                                    const std::string& template_text) {
    const std::string delimiter = safe_delimiter(doc.text);
    const std::map<std::string, std::string> values = {
        {"entitySchema", schema_block(schema)},
        {"guidelines", guideline.text},
        {"jsonSchema", kItemSchema},
        {"inputText", delimiter + "\n" + doc.text + "\n" + delimiter},
    };

    // The template owns the delimiter lines; fold them into the managed
    // input block so they can be widened on collision.
    std::string tpl = util::replace_all(template_text, "---\n{{inputText}}\n---", "{{inputText}}");

    std::string rendered;
    std::set<std::string> used;
    std::size_t pos = 0;
    while (pos < tpl.size()) {
        const std::size_t open = tpl.find("{{", pos);
        if (open == std::string::npos) {
            rendered.append(tpl, pos, tpl.size() - pos);
            break;
        }
        const std::size_t close = tpl.find("}}", open + 2);
        if (close == std::string::npos) {
            throw TemplateError("unterminated placeholder in annotation template");
        }
        rendered.append(tpl, pos, open - pos);
        const std::string name = tpl.substr(open + 2, close - open - 2);
        const auto it = values.find(name);
        if (it == values.end()) {
            throw TemplateError("unresolved placeholder {{" + name + "}} in annotation template");
        }
        rendered += it->second;
        used.insert(name);
        pos = close + 2;
    }
    for (const auto& [name, unused] : values) {
        if (used.count(name) == 0) {
            throw TemplateError("annotation template lacks placeholder {{" + name + "}}");
        }
    }

    gateway::CompletionRequest request;
    static const std::string kSystemHeader = "SYSTEM INSTRUCTION:";
    if (rendered.starts_with(kSystemHeader)) {
        const std::size_t block_end = rendered.find("\n\n");
        const std::size_t header_end = kSystemHeader.size();
        if (block_end != std::string::npos) {
            request.system_text = util::trim(rendered.substr(header_end, block_end - header_end));
            request.user_text = rendered.substr(block_end + 2);
        } else {
            request.system_text = util::trim(rendered.substr(header_end));
        }
    } else {
        request.user_text = rendered;
    }
    return request;
}

ValidatedAnnotations validate_and_repair(const nlohmann::json& payload, const Document& doc,
                                         const EntitySchema& schema) {
    ValidatedAnnotations out;
    const util::Utf8Index index(doc.text);
    const auto len = static_cast<std::int64_t>(index.code_points());
    std::set<std::tuple<std::int64_t, std::int64_t, std::string>> seen;

    auto drop = [&](const nlohmann::json& item, std::string reason) {
        out.dropped.push_back({item, std::move(reason)});
    };

    for (const auto& item : payload) {
        if (!item.is_object()) {
            drop(item, "item is not an object");
            continue;
        }
        if (!item.contains("label") || !item["label"].is_string()) {
            drop(item, "missing label");
            continue;
        }
        const std::string label = item["label"].get<std::string>();
        if (!schema.has_label(label)) {
            drop(item, "label outside schema: " + label);
            continue;
        }
        if (!item.contains("begin") || !item["begin"].is_number_integer() ||
            !item.contains("end") || !item["end"].is_number_integer()) {
            drop(item, "missing integer offsets");
            continue;
        }
        std::int64_t begin = item["begin"].get<std::int64_t>();
        std::int64_t end = item["end"].get<std::int64_t>();
        const bool in_bounds = begin >= 0 && begin < end && end <= len;
        bool repaired = false;

        if (item.contains("span_text") && item["span_text"].is_string()) {
            const std::string span_text = item["span_text"].get<std::string>();
            const bool exact =
                in_bounds && index.slice(static_cast<std::size_t>(begin),
                                         static_cast<std::size_t>(end)) == span_text;
            if (!exact) {
                if (span_text.empty()) {
                    drop(item, "empty span text");
                    continue;
                }
                // realign only on a unique occurrence; anything else would
                // fabricate offsets
                std::vector<std::size_t> hits;
                for (std::size_t at = doc.text.find(span_text); at != std::string::npos;
                     at = doc.text.find(span_text, at + 1)) {
                    hits.push_back(at);
                    if (hits.size() > 1) break;
                }
                if (hits.empty()) {
                    drop(item, "span text not found in document");
                    continue;
                }
                if (hits.size() > 1) {
                    drop(item, "span text is ambiguous in document");
                    continue;
                }
                begin = static_cast<std::int64_t>(index.scalar_at_byte(hits[0]));
                end = begin + static_cast<std::int64_t>(util::code_point_count(span_text));
                repaired = true;
            }
        } else if (!in_bounds) {
            drop(item, "span out of bounds");
            continue;
        }

        if (!seen.insert({begin, end, label}).second) {
            drop(item, "duplicate triplet");
            continue;
        }
        Entity e;
        e.id = "T" + std::to_string(out.entities.size() + 1);
        e.begin = begin;
        e.end = end;
        e.label = label;
        out.entities.push_back(std::move(e));
        if (repaired) ++out.repaired;
    }
    return out;
}

AnnotationRun annotate_corpus(gateway::CompletionGateway& gw, const gateway::ModelSpec& model,
                              const EntitySchema& schema, const moderator::Guideline& guideline,
                              const Corpus& corpus, int iteration,
                              const std::string& template_text, const AnnotateOptions& options) {
    AnnotationRun run;
    std::mutex mutex;
    std::exception_ptr failure;
    std::atomic<std::size_t> next{0};

    const auto& docs = corpus.documents;
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= docs.size()) return;
            {
                std::lock_guard<std::mutex> lock(mutex);
                if (failure) return;
            }
            const Document& doc = docs[i];
            try {
                auto request = render_annotation_prompt(schema, guideline, doc, template_text);
                request.model = model;
                const auto response = gw.complete(request, iteration);

                AnnotationSet set;
                set.doc_id = doc.doc_id();
                set.provenance = Provenance::make_predicted(iteration, model.model_id);
                DocOutcome outcome;
                try {
                    const auto payload = gateway::extract_payload(response.text);
                    auto validated = validate_and_repair(payload, doc, schema);
                    set.entities = std::move(validated.entities);
                    outcome.accepted = static_cast<long>(set.entities.size());
                    outcome.repaired = validated.repaired;
                    outcome.dropped = static_cast<long>(validated.dropped.size());
                } catch (const gateway::PayloadError& e) {
                    outcome.error_note = e.what();  // empty prediction, run continues
                }
                std::lock_guard<std::mutex> lock(mutex);
                run.outcomes.emplace(set.doc_id, std::move(outcome));
                run.sets.emplace(doc.doc_id(), std::move(set));
            } catch (...) {
                std::lock_guard<std::mutex> lock(mutex);
                if (!failure) failure = std::current_exception();
                return;
            }
        }
    };

    const int threads = std::max(1, std::min<int>(options.parallelism,
                                                  static_cast<int>(docs.size())));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(threads));
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);

    if (options.out_dir) {
        for (const auto& doc : docs) {  // persistence ordered by doc_id
            const auto& set = run.sets.at(doc.doc_id());
            corpus::save_annotation_set(*options.out_dir / (doc.source_id + ".json"), doc, set);
        }
    }
    return run;
}

}  // namespace guidemod::annotator
