#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "guidemod/types.hpp"

namespace guidemod::gateway {

enum class ModelFamily { gpt, gemini, deepseek, other };

ModelFamily model_family_from_string(const std::string& s);
const char* model_family_name(ModelFamily f);

struct ModelSpec {
    ModelFamily family = ModelFamily::other;
    std::string model_id;
    std::map<std::string, std::string> reasoning_options;  // e.g. reasoning_effort=high
    double price_in = 0.0;   // currency per 1M input tokens
    double price_out = 0.0;  // currency per 1M output tokens
};

struct CompletionRequest {
    ModelSpec model;
    std::string system_text;
    std::string user_text;
    std::map<std::string, std::string> decoding;

    /// Stable digest over the request semantics (model id, family,
    /// reasoning options, texts, decoding). Prices are accounting config
    /// and deliberately excluded so re-pricing does not orphan fixtures.
    std::string hash() const;
};

struct CompletionResponse {
    std::string text;
    long input_tokens = 0;
    long output_tokens = 0;
    double latency_seconds = 0.0;
};

/// Transient failure after the retry budget is exhausted; carries the
/// per-attempt log.
class TransportError : public std::runtime_error {
public:
    TransportError(const std::string& message, std::vector<std::string> attempts);
    const std::vector<std::string>& attempts() const { return attempts_; }

private:
    std::vector<std::string> attempts_;
};

/// Replay-mode lookup of a request that was never recorded.
class FixtureMissingError : public std::runtime_error {
public:
    explicit FixtureMissingError(const std::string& hash);
    const std::string& request_hash() const { return hash_; }

private:
    std::string hash_;
};

/// Response text without a parseable annotation payload; carries the raw
/// text for the caller's repair path.
class PayloadError : public std::runtime_error {
public:
    PayloadError(const std::string& message, std::string raw_text);
    const std::string& raw_text() const { return raw_text_; }

private:
    std::string raw_text_;
};

class Provider {
public:
    virtual ~Provider() = default;
    virtual CompletionResponse complete(const CompletionRequest& request) = 0;
    virtual std::string name() const = 0;
};

struct HttpProviderConfig {
    std::string endpoint;     // scheme://host[:port]
    std::string api_key_env;  // name of the env var holding the credential
    int timeout_seconds = 120;
};

/// Speaks the OpenAI-compatible chat completion API (GPT, DeepSeek and
/// friends) or the Gemini generateContent API, chosen by the model family.
class HttpProvider : public Provider {
public:
    explicit HttpProvider(HttpProviderConfig config);
    CompletionResponse complete(const CompletionRequest& request) override;
    std::string name() const override { return "http:" + config_.endpoint; }

private:
    HttpProviderConfig config_;
};

/// Offline provider driven by an ordered rule list: the first rule whose
/// `match` substrings all occur in the request text fires. This is how
/// fixture stores are produced without network access.
class ScriptedProvider : public Provider {
public:
    struct Rule {
        std::vector<std::string> match;
        CompletionResponse response;
    };

    explicit ScriptedProvider(std::vector<Rule> rules);
    static ScriptedProvider from_json(const nlohmann::json& j);
    static ScriptedProvider load(const std::filesystem::path& path);

    CompletionResponse complete(const CompletionRequest& request) override;
    std::string name() const override { return "scripted"; }

private:
    std::vector<Rule> rules_;
};

/// Hash-keyed response store: one JSON file per request hash holding the
/// request digest metadata and the raw response. Reads are concurrent,
/// writes exclusive.
class ReplayStore {
public:
    explicit ReplayStore(std::filesystem::path dir);

    bool contains(const std::string& hash) const;
    CompletionResponse load(const std::string& hash) const;  // throws FixtureMissingError
    void save(const CompletionRequest& request, const CompletionResponse& response);

    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path dir_;
    mutable std::mutex write_mutex_;
};

struct RetryPolicy {
    int max_attempts = 3;
    int base_backoff_ms = 500;  // doubled per attempt
};

struct LedgerCall {
    int iteration = 0;
    std::string request_hash;
    std::string model_id;
    long input_tokens = 0;
    long output_tokens = 0;
    double cost = 0.0;
    double latency_seconds = 0.0;
};

/// Per-iteration cost and time accounting. c_i is the sum of call costs in
/// iteration i; minutes sum per-call latencies. Appends are serialized.
class CostLedger {
public:
    void record_cost(const CompletionResponse& response, const ModelSpec& model, int iteration,
                     const std::string& request_hash = {});

    double cost_of(int iteration) const;
    double minutes_of(int iteration) const;
    double total_cost() const;
    std::vector<LedgerCall> calls_of(int iteration) const;  // sorted by request hash
    std::vector<int> iterations() const;

    nlohmann::json iteration_to_json(int iteration) const;

private:
    mutable std::mutex mutex_;
    std::vector<LedgerCall> calls_;
};

enum class GatewayMode { live, record, replay };

GatewayMode gateway_mode_from_string(const std::string& s);

/// Front door for completions: replay answers from the store, record
/// writes through it, live skips it. Live/record calls retry transient
/// transport failures with exponential backoff.
class CompletionGateway {
public:
    CompletionGateway(GatewayMode mode, std::shared_ptr<Provider> provider,
                      std::shared_ptr<ReplayStore> store, RetryPolicy retry = {});

    /// iteration tags the ledger entry.
    CompletionResponse complete(const CompletionRequest& request, int iteration);

    CostLedger& ledger() { return ledger_; }
    const CostLedger& ledger() const { return ledger_; }
    GatewayMode mode() const { return mode_; }

private:
    CompletionResponse call_with_retries(const CompletionRequest& request);

    GatewayMode mode_;
    std::shared_ptr<Provider> provider_;
    std::shared_ptr<ReplayStore> store_;
    RetryPolicy retry_;
    CostLedger ledger_;
};

/// Locates the outermost JSON object in free-form response text (tolerating
/// prose and fenced code blocks), parses it strictly, and returns the
/// "annotations" array. Throws PayloadError otherwise.
nlohmann::json extract_payload(const std::string& text);

}  // namespace guidemod::gateway
