// SPDX-License-Identifier: Apache-2.0
#pragma once
// Uniform interface to chat, vision, and embedding backends.
//
// Every backend runs in one of three modes:
//   live    call the underlying implementation
//   record  call it and persist the response under the canonical request hash
//   replay  answer purely from recorded fixtures (fully deterministic)
//
// A stub family (scripted chat, hash-projection embedder, synthetic captioner)
// provides zero-fixture deterministic backends for tests and offline runs.

#include "vidagent/errors.hpp"

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace vidagent {

struct Message {
    std::string role; // "system" | "user" | "assistant"
    std::string text;
    bool operator==(const Message&) const = default;
};

enum class FinishReason { stop, length, tool_call, content_filter };

std::string_view to_string(FinishReason reason);
FinishReason finish_reason_from_string(std::string_view name);

struct ToolCallData {
    std::string name;
    nlohmann::json parameters;
    bool operator==(const ToolCallData&) const = default;
};

struct Usage {
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
    bool operator==(const Usage&) const = default;
};

struct ModelRequest {
    std::string backend_id;
    std::vector<Message> messages;
    std::vector<std::filesystem::path> image_attachments;
    std::optional<nlohmann::json> tool_schema;
    int max_output_tokens = 4096;
};

struct ModelResponse {
    std::string text;
    std::optional<ToolCallData> tool_call; // present iff finish_reason == tool_call
    Usage usage;
    FinishReason finish_reason = FinishReason::stop;
};

nlohmann::json response_to_json(const ModelResponse& r);
ModelResponse response_from_json(const nlohmann::json& j);

struct RetryPolicy {
    int max_attempts = 3;
    double backoff_s = 0.5; // doubled per retry
};

struct BackendConfig {
    std::string backend_id;
    std::string kind = "http"; // http | scripted | hash_embed | stub_captioner
    std::string endpoint;      // http kind: origin plus optional base path
    std::string model_name;
    std::string api_key_env;
    std::string mode = "live"; // live | record | replay
    std::filesystem::path fixture_dir;
    RetryPolicy retry;
    int embedding_dim = 32;          // embedding backends
    std::filesystem::path script_path; // scripted kind
    bool supports_vision = true;
    double min_interval_s = 0.0; // per-backend request rate floor
};

BackendConfig backend_config_from_json(const nlohmann::json& j);

// Stable across processes and field ordering; image attachments are hashed by
// content bytes, so the same image at two paths hashes identically.
std::string canonical_request_hash(const ModelRequest& req);
std::string canonical_embed_hash(const std::string& text);

class ModelBackend {
public:
    virtual ~ModelBackend() = default;
    virtual ModelResponse complete(const ModelRequest& req) = 0;
    virtual std::vector<Eigen::VectorXf> embed(const std::vector<std::string>& texts) = 0;
    virtual int embedding_dim() const = 0;
    virtual bool supports_vision() const = 0;
};

// --- Stub family --------------------------------------------------------------

// Replies with the first entry whose `match` substrings all occur in the
// request's concatenated message text. An empty match list is a catch-all.
class ScriptedChatBackend : public ModelBackend {
public:
    struct Entry {
        std::vector<std::string> match;
        ModelResponse response;

        Entry() = default;
        Entry(std::string single, ModelResponse resp)
            : response(std::move(resp)) {
            if (!single.empty()) {
                match.push_back(std::move(single));
            }
        }
        Entry(std::vector<std::string> all, ModelResponse resp)
            : match(std::move(all)), response(std::move(resp)) {}
    };

    explicit ScriptedChatBackend(std::vector<Entry> entries);
    static std::shared_ptr<ScriptedChatBackend> from_file(const std::filesystem::path& path);

    ModelResponse complete(const ModelRequest& req) override;
    std::vector<Eigen::VectorXf> embed(const std::vector<std::string>&) override;
    int embedding_dim() const override { return 0; }
    bool supports_vision() const override { return true; }

private:
    std::vector<Entry> entries_;
    std::mutex mutex_;
};

// Returns queued responses in order; throws backend-error when exhausted.
class SequenceChatBackend : public ModelBackend {
public:
    explicit SequenceChatBackend(std::vector<ModelResponse> responses);

    ModelResponse complete(const ModelRequest& req) override;
    std::vector<Eigen::VectorXf> embed(const std::vector<std::string>&) override;
    int embedding_dim() const override { return 0; }
    bool supports_vision() const override { return true; }

    int calls() const { return calls_; }

private:
    std::vector<ModelResponse> responses_;
    int calls_ = 0;
    std::mutex mutex_;
};

// Adapts a function to the backend interface; handy for adversarial tests.
class CallbackChatBackend : public ModelBackend {
public:
    using Fn = std::function<ModelResponse(const ModelRequest&)>;
    explicit CallbackChatBackend(Fn fn) : fn_(std::move(fn)) {}

    ModelResponse complete(const ModelRequest& req) override { return fn_(req); }
    std::vector<Eigen::VectorXf> embed(const std::vector<std::string>&) override {
        throw Error(ErrorCode::backend_error, "callback backend has no embedder");
    }
    int embedding_dim() const override { return 0; }
    bool supports_vision() const override { return true; }

private:
    Fn fn_;
};

// Deterministic embedder. Documented rule: tokenize on whitespace; for each
// token add 1.0 at index fnv1a64(token) % dim; L2-normalize the result.
class HashEmbedBackend : public ModelBackend {
public:
    explicit HashEmbedBackend(int dim);

    ModelResponse complete(const ModelRequest&) override;
    std::vector<Eigen::VectorXf> embed(const std::vector<std::string>& texts) override;
    int embedding_dim() const override { return dim_; }
    bool supports_vision() const override { return false; }

    static Eigen::VectorXf embed_one(const std::string& text, int dim);

private:
    int dim_;
};

// Deterministic captioner for offline builds and tests. Reads the clip index
// and time range the caption prompt embeds, and answers with the structured
// caption JSON the ingest stage expects. A new subject appears every third
// clip; other clips update the current subject.
class StubCaptionerBackend : public ModelBackend {
public:
    ModelResponse complete(const ModelRequest& req) override;
    std::vector<Eigen::VectorXf> embed(const std::vector<std::string>&) override;
    int embedding_dim() const override { return 0; }
    bool supports_vision() const override { return true; }
};

// --- HTTP backend --------------------------------------------------------------

// OpenAI-shaped chat-completion and embedding endpoints. Provider request and
// response bodies are isolated here.
class HttpBackend : public ModelBackend {
public:
    explicit HttpBackend(BackendConfig cfg);

    ModelResponse complete(const ModelRequest& req) override;
    std::vector<Eigen::VectorXf> embed(const std::vector<std::string>& texts) override;
    int embedding_dim() const override { return cfg_.embedding_dim; }
    bool supports_vision() const override { return cfg_.supports_vision; }

private:
    BackendConfig cfg_;
};

// Provider body construction/parsing, exposed for tests.
nlohmann::json build_chat_body(const ModelRequest& req, const std::string& model_name);
ModelResponse parse_chat_response(const nlohmann::json& body);
std::vector<Eigen::VectorXf> parse_embedding_response(const nlohmann::json& body);
[[noreturn]] void throw_http_failure(int status, const std::string& body);

// --- Gateway --------------------------------------------------------------------

class ModelGateway {
public:
    ModelGateway() = default;
    explicit ModelGateway(const std::vector<BackendConfig>& configs);

    // Constructs the backend named by cfg.kind.
    void add_backend(const BackendConfig& cfg);
    // Registers an externally built backend (tests inject counters/stubs here).
    void add_backend(const BackendConfig& cfg, std::shared_ptr<ModelBackend> impl);

    ModelResponse complete(const ModelRequest& req);
    std::vector<Eigen::VectorXf> embed(const std::string& backend_id,
                                       const std::vector<std::string>& texts);

    bool has_backend(const std::string& id) const;
    int embedding_dim(const std::string& id) const;
    const BackendConfig& config(const std::string& id) const;

private:
    struct Entry {
        BackendConfig cfg;
        std::shared_ptr<ModelBackend> impl;
        std::mutex rate_mutex;
        std::chrono::steady_clock::time_point last_call{};
        std::mutex record_mutex;
    };

    Entry& entry(const std::string& id);
    const Entry& entry(const std::string& id) const;
    void rate_limit(Entry& e);

    std::map<std::string, std::unique_ptr<Entry>> entries_;
};

// Loads {"backends": [...]} into gateway configs.
std::vector<BackendConfig> load_backend_configs(const std::filesystem::path& path);

} // namespace vidagent
