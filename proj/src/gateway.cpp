#include "guidemod/gateway.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "guidemod/util.hpp"

namespace guidemod::gateway {

ModelFamily model_family_from_string(const std::string& s) {
    if (s == "gpt") return ModelFamily::gpt;
    if (s == "gemini") return ModelFamily::gemini;
    if (s == "deepseek") return ModelFamily::deepseek;
    if (s == "other") return ModelFamily::other;
    throw std::invalid_argument("unknown model family: " + s);
}

const char* model_family_name(ModelFamily f) {
    switch (f) {
        case ModelFamily::gpt: return "gpt";
        case ModelFamily::gemini: return "gemini";
        case ModelFamily::deepseek: return "deepseek";
        case ModelFamily::other: return "other";
    }
    return "?";
}

std::string CompletionRequest::hash() const {
    nlohmann::json j;
    j["family"] = model_family_name(model.family);
    j["model_id"] = model.model_id;
    j["reasoning_options"] = model.reasoning_options;
    j["system_text"] = system_text;
    j["user_text"] = user_text;
    j["decoding"] = decoding;
    return util::sha256_hex(j.dump());
}

TransportError::TransportError(const std::string& message, std::vector<std::string> attempts)
    : std::runtime_error(message), attempts_(std::move(attempts)) {}

FixtureMissingError::FixtureMissingError(const std::string& hash)
    : std::runtime_error("fixture missing for request hash " + hash), hash_(hash) {}

PayloadError::PayloadError(const std::string& message, std::string raw_text)
    : std::runtime_error(message), raw_text_(std::move(raw_text)) {}

// ---------------------------------------------------------------------------
// HTTP provider

namespace {

// Thrown internally for failures worth retrying (connection errors, 429,
// 5xx); anything else surfaces immediately.
class TransientFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string getenv_or_throw(const std::string& var) {
    const char* value = std::getenv(var.c_str());
    if (value == nullptr || *value == '\0') {
        throw std::runtime_error("credential env var not set: " + var);
    }
    return value;
}

// Options are carried as strings; numbers and booleans pass through as
// their JSON forms so request bodies stay well-typed.
nlohmann::json option_value(const std::string& value) {
    nlohmann::json j = nlohmann::json::parse(value, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded() || j.is_string()) return value;
    return j;
}

nlohmann::json openai_body(const CompletionRequest& request) {
    nlohmann::json messages = nlohmann::json::array();
    if (!request.system_text.empty()) {
        messages.push_back({{"role", "system"}, {"content", request.system_text}});
    }
    messages.push_back({{"role", "user"}, {"content", request.user_text}});
    nlohmann::json body{{"model", request.model.model_id}, {"messages", std::move(messages)}};
    for (const auto& [key, value] : request.model.reasoning_options) body[key] = option_value(value);
    for (const auto& [key, value] : request.decoding) body[key] = option_value(value);
    return body;
}

nlohmann::json gemini_body(const CompletionRequest& request) {
    nlohmann::json body;
    if (!request.system_text.empty()) {
        body["system_instruction"] = {{"parts", {{{"text", request.system_text}}}}};
    }
    body["contents"] = {{{"role", "user"}, {"parts", {{{"text", request.user_text}}}}}};
    nlohmann::json config = nlohmann::json::object();
    for (const auto& [key, value] : request.decoding) config[key] = option_value(value);
    if (request.model.reasoning_options.count("thinking_budget")) {
        config["thinkingConfig"] = {
            {"thinkingBudget", option_value(request.model.reasoning_options.at("thinking_budget"))}};
    }
    if (!config.empty()) body["generationConfig"] = std::move(config);
    return body;
}

CompletionResponse parse_openai_response(const nlohmann::json& j) {
    CompletionResponse resp;
    resp.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
    if (j.contains("usage")) {
        resp.input_tokens = j["usage"].value("prompt_tokens", 0L);
        resp.output_tokens = j["usage"].value("completion_tokens", 0L);
    }
    return resp;
}

CompletionResponse parse_gemini_response(const nlohmann::json& j) {
    CompletionResponse resp;
    std::string text;
    for (const auto& part : j.at("candidates").at(0).at("content").at("parts")) {
        if (part.contains("text")) text += part["text"].get<std::string>();
    }
    resp.text = std::move(text);
    if (j.contains("usageMetadata")) {
        resp.input_tokens = j["usageMetadata"].value("promptTokenCount", 0L);
        resp.output_tokens = j["usageMetadata"].value("candidatesTokenCount", 0L);
    }
    return resp;
}

}  // namespace

HttpProvider::HttpProvider(HttpProviderConfig config) : config_(std::move(config)) {
    if (config_.endpoint.empty()) throw std::invalid_argument("provider endpoint must be set");
}

CompletionResponse HttpProvider::complete(const CompletionRequest& request) {
    httplib::Client client(config_.endpoint);
    client.set_connection_timeout(config_.timeout_seconds);
    client.set_read_timeout(config_.timeout_seconds);

    std::string path;
    nlohmann::json body;
    httplib::Headers headers;
    if (request.model.family == ModelFamily::gemini) {
        path = "/v1beta/models/" + request.model.model_id + ":generateContent";
        body = gemini_body(request);
        headers.emplace("x-goog-api-key", getenv_or_throw(config_.api_key_env));
    } else {
        path = "/v1/chat/completions";
        body = openai_body(request);
        headers.emplace("Authorization", "Bearer " + getenv_or_throw(config_.api_key_env));
    }

    const auto start = std::chrono::steady_clock::now();
    auto result = client.Post(path, headers, body.dump(), "application/json");
    const auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start);

    if (!result) {
        throw TransientFailure("connection failure: " + httplib::to_string(result.error()));
    }
    if (result->status == 429 || result->status >= 500) {
        throw TransientFailure("HTTP " + std::to_string(result->status) + ": " + result->body);
    }
    if (result->status != 200) {
        throw std::runtime_error("HTTP " + std::to_string(result->status) + ": " + result->body);
    }
    try {
        auto j = nlohmann::json::parse(result->body);
        CompletionResponse resp = request.model.family == ModelFamily::gemini
                                      ? parse_gemini_response(j)
                                      : parse_openai_response(j);
        resp.latency_seconds = elapsed.count();
        return resp;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("unparseable provider response: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Scripted provider

ScriptedProvider::ScriptedProvider(std::vector<Rule> rules) : rules_(std::move(rules)) {}

ScriptedProvider ScriptedProvider::from_json(const nlohmann::json& j) {
    std::vector<Rule> rules;
    for (const auto& rj : j.at("rules")) {
        Rule rule;
        for (const auto& m : rj.at("match")) rule.match.push_back(m.get<std::string>());
        rule.response.text = rj.at("response").get<std::string>();
        rule.response.input_tokens = rj.value("input_tokens", 0L);
        rule.response.output_tokens = rj.value("output_tokens", 0L);
        rule.response.latency_seconds = rj.value("latency_seconds", 0.0);
        rules.push_back(std::move(rule));
    }
    return ScriptedProvider(std::move(rules));
}

ScriptedProvider ScriptedProvider::load(const std::filesystem::path& path) {
    return from_json(nlohmann::json::parse(util::read_file(path)));
}

CompletionResponse ScriptedProvider::complete(const CompletionRequest& request) {
    const std::string haystack = request.system_text + "\n" + request.user_text;
    for (const auto& rule : rules_) {
        const bool hit = std::all_of(rule.match.begin(), rule.match.end(),
                                     [&](const std::string& needle) {
                                         return haystack.find(needle) != std::string::npos;
                                     });
        if (hit) return rule.response;
    }
    throw std::runtime_error("scripted provider: no rule matches request " + request.hash());
}

// ---------------------------------------------------------------------------
// Replay store

ReplayStore::ReplayStore(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
}

namespace {

std::filesystem::path fixture_path(const std::filesystem::path& dir, const std::string& hash) {
    return dir / (hash + ".json");
}

}  // namespace

bool ReplayStore::contains(const std::string& hash) const {
    return std::filesystem::exists(fixture_path(dir_, hash));
}

CompletionResponse ReplayStore::load(const std::string& hash) const {
    const auto path = fixture_path(dir_, hash);
    if (!std::filesystem::exists(path)) throw FixtureMissingError(hash);
    const auto j = nlohmann::json::parse(util::read_file(path));
    CompletionResponse resp;
    const auto& r = j.at("response");
    resp.text = r.at("text").get<std::string>();
    resp.input_tokens = r.value("input_tokens", 0L);
    resp.output_tokens = r.value("output_tokens", 0L);
    resp.latency_seconds = r.value("latency_seconds", 0.0);
    return resp;
}

void ReplayStore::save(const CompletionRequest& request, const CompletionResponse& response) {
    std::lock_guard<std::mutex> lock(write_mutex_);
    nlohmann::json j;
    j["request"] = {{"hash", request.hash()},
                    {"model_id", request.model.model_id},
                    {"family", model_family_name(request.model.family)},
                    {"system_sha256", util::sha256_hex(request.system_text)},
                    {"user_sha256", util::sha256_hex(request.user_text)}};
    j["response"] = {{"text", response.text},
                     {"input_tokens", response.input_tokens},
                     {"output_tokens", response.output_tokens},
                     {"latency_seconds", response.latency_seconds}};
    util::write_file(fixture_path(dir_, request.hash()), j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Cost ledger

void CostLedger::record_cost(const CompletionResponse& response, const ModelSpec& model,
                             int iteration, const std::string& request_hash) {
    LedgerCall call;
    call.iteration = iteration;
    call.request_hash = request_hash;
    call.model_id = model.model_id;
    call.input_tokens = response.input_tokens;
    call.output_tokens = response.output_tokens;
    call.cost = static_cast<double>(response.input_tokens) * model.price_in / 1e6 +
                static_cast<double>(response.output_tokens) * model.price_out / 1e6;
    call.latency_seconds = response.latency_seconds;
    std::lock_guard<std::mutex> lock(mutex_);
    calls_.push_back(std::move(call));
}

// Aggregates sum in request-hash order, not insertion order, so totals come
// out bit-identical no matter how concurrent callers interleaved.
double CostLedger::cost_of(int iteration) const {
    double total = 0.0;
    for (const auto& c : calls_of(iteration)) total += c.cost;
    return total;
}

double CostLedger::minutes_of(int iteration) const {
    double seconds = 0.0;
    for (const auto& c : calls_of(iteration)) seconds += c.latency_seconds;
    return seconds / 60.0;
}

double CostLedger::total_cost() const {
    double total = 0.0;
    for (const int iteration : iterations()) total += cost_of(iteration);
    return total;
}

std::vector<LedgerCall> CostLedger::calls_of(int iteration) const {
    std::lock_guard<std::mutex> lock(mutex_);
    std::vector<LedgerCall> out;
    for (const auto& c : calls_) {
        if (c.iteration == iteration) out.push_back(c);
    }
    std::sort(out.begin(), out.end(), [](const LedgerCall& a, const LedgerCall& b) {
        return a.request_hash < b.request_hash;
    });
    return out;
}

std::vector<int> CostLedger::iterations() const {
    std::lock_guard<std::mutex> lock(mutex_);
    std::vector<int> out;
    for (const auto& c : calls_) {
        if (std::find(out.begin(), out.end(), c.iteration) == out.end()) out.push_back(c.iteration);
    }
    std::sort(out.begin(), out.end());
    return out;
}

nlohmann::json CostLedger::iteration_to_json(int iteration) const {
    nlohmann::json calls = nlohmann::json::array();
    for (const auto& c : calls_of(iteration)) {
        calls.push_back({{"request_hash", c.request_hash},
                         {"model_id", c.model_id},
                         {"input_tokens", c.input_tokens},
                         {"output_tokens", c.output_tokens},
                         {"cost", c.cost},
                         {"latency_seconds", c.latency_seconds}});
    }
    return {{"iteration", iteration},
            {"cost", cost_of(iteration)},
            {"minutes", minutes_of(iteration)},
            {"calls", std::move(calls)}};
}

// ---------------------------------------------------------------------------
// Gateway

GatewayMode gateway_mode_from_string(const std::string& s) {
    if (s == "live") return GatewayMode::live;
    if (s == "record") return GatewayMode::record;
    if (s == "replay") return GatewayMode::replay;
    throw std::invalid_argument("unknown gateway mode: " + s);
}

CompletionGateway::CompletionGateway(GatewayMode mode, std::shared_ptr<Provider> provider,
                                     std::shared_ptr<ReplayStore> store, RetryPolicy retry)
    : mode_(mode), provider_(std::move(provider)), store_(std::move(store)), retry_(retry) {
    if (mode_ != GatewayMode::replay && provider_ == nullptr) {
        throw std::invalid_argument("live/record gateway requires a provider");
    }
    if (mode_ != GatewayMode::live && store_ == nullptr) {
        throw std::invalid_argument("record/replay gateway requires a fixture store");
    }
}

CompletionResponse CompletionGateway::call_with_retries(const CompletionRequest& request) {
    std::vector<std::string> attempts;
    for (int attempt = 1; attempt <= retry_.max_attempts; ++attempt) {
        try {
            return provider_->complete(request);
        } catch (const TransientFailure& e) {
            attempts.push_back("attempt " + std::to_string(attempt) + ": " + e.what());
            if (attempt == retry_.max_attempts) break;
            const auto backoff =
                std::chrono::milliseconds(retry_.base_backoff_ms) * (1L << (attempt - 1));
            std::this_thread::sleep_for(backoff);
        }
    }
    throw TransportError("provider failed after " + std::to_string(retry_.max_attempts) +
                             " attempts: " + (attempts.empty() ? "" : attempts.back()),
                         attempts);
}

CompletionResponse CompletionGateway::complete(const CompletionRequest& request, int iteration) {
    const std::string hash = request.hash();
    CompletionResponse response;
    switch (mode_) {
        case GatewayMode::replay:
            response = store_->load(hash);  // throws FixtureMissingError; never falls back live
            break;
        case GatewayMode::record:
            if (store_->contains(hash)) {
                response = store_->load(hash);
            } else {
                response = call_with_retries(request);
                store_->save(request, response);
            }
            break;
        case GatewayMode::live:
            response = call_with_retries(request);
            break;
    }
    ledger_.record_cost(response, request.model, iteration, hash);
    return response;
}

// ---------------------------------------------------------------------------
// Payload extraction

namespace {

// Scans for a balanced {...} starting at `start`, honoring strings and
// escapes. Returns one past the closing brace, or npos.
std::size_t find_balanced_end(const std::string& text, std::size_t start) {
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = start; i < text.size(); ++i) {
        const char ch = text[i];
        if (in_string) {
            if (ch == '\\') {
                ++i;
            } else if (ch == '"') {
                in_string = false;
            }
            continue;
        }
        if (ch == '"') {
            in_string = true;
        } else if (ch == '{') {
            ++depth;
        } else if (ch == '}') {
            --depth;
            if (depth == 0) return i + 1;
        }
    }
    return std::string::npos;
}

}  // namespace

nlohmann::json extract_payload(const std::string& text) {
    bool parsed_any = false;
    std::size_t pos = text.find('{');
    while (pos != std::string::npos) {
        const std::size_t end = find_balanced_end(text, pos);
        if (end != std::string::npos) {
            const std::string candidate = text.substr(pos, end - pos);
            nlohmann::json j =
                nlohmann::json::parse(candidate, nullptr, /*allow_exceptions=*/false);
            if (!j.is_discarded() && j.is_object()) {
                parsed_any = true;
                if (j.contains("annotations") && j["annotations"].is_array()) {
                    return j["annotations"];
                }
            }
        }
        pos = text.find('{', pos + 1);
    }
    if (parsed_any) {
        throw PayloadError("no located JSON object carries an \"annotations\" array", text);
    }
    throw PayloadError("no parseable JSON object in response text", text);
}

}  // namespace guidemod::gateway
