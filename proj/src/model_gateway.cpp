// SPDX-License-Identifier: Apache-2.0
#include "vidagent/model_gateway.hpp"

#include "vidagent/fsutil.hpp"
#include "vidagent/hashing.hpp"
#include "vidagent/strings.hpp"

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <regex>
#include <thread>

namespace fs = std::filesystem;
using nlohmann::json;

namespace vidagent {

std::string_view to_string(FinishReason reason) {
    switch (reason) {
        case FinishReason::stop: return "stop";
        case FinishReason::length: return "length";
        case FinishReason::tool_call: return "tool_call";
        case FinishReason::content_filter: return "content_filter";
    }
    return "stop";
}

FinishReason finish_reason_from_string(std::string_view name) {
    if (name == "length") return FinishReason::length;
    if (name == "tool_call" || name == "tool_calls") return FinishReason::tool_call;
    if (name == "content_filter") return FinishReason::content_filter;
    return FinishReason::stop;
}

json response_to_json(const ModelResponse& r) {
    json j{{"text", r.text},
           {"finish_reason", std::string(to_string(r.finish_reason))},
           {"usage", {{"prompt_tokens", r.usage.prompt_tokens},
                      {"completion_tokens", r.usage.completion_tokens}}}};
    if (r.tool_call) {
        j["tool_call"] = {{"name", r.tool_call->name}, {"parameters", r.tool_call->parameters}};
    } else {
        j["tool_call"] = nullptr;
    }
    return j;
}

ModelResponse response_from_json(const json& j) {
    ModelResponse r;
    r.text = j.value("text", "");
    r.finish_reason = finish_reason_from_string(j.value("finish_reason", "stop"));
    if (j.contains("usage")) {
        r.usage.prompt_tokens = j["usage"].value("prompt_tokens", std::int64_t{0});
        r.usage.completion_tokens = j["usage"].value("completion_tokens", std::int64_t{0});
    }
    if (j.contains("tool_call") && !j["tool_call"].is_null()) {
        r.tool_call = ToolCallData{j["tool_call"].at("name").get<std::string>(),
                                   j["tool_call"].value("parameters", json::object())};
        r.finish_reason = FinishReason::tool_call;
    }
    return r;
}

BackendConfig backend_config_from_json(const json& j) {
    BackendConfig cfg;
    cfg.backend_id = j.at("backend_id").get<std::string>();
    cfg.kind = j.value("kind", "http");
    cfg.endpoint = j.value("endpoint", "");
    cfg.model_name = j.value("model_name", "");
    cfg.api_key_env = j.value("api_key_env", "");
    cfg.mode = j.value("mode", "live");
    cfg.fixture_dir = j.value("fixture_dir", "");
    if (j.contains("retry")) {
        cfg.retry.max_attempts = j["retry"].value("max_attempts", 3);
        cfg.retry.backoff_s = j["retry"].value("backoff_s", 0.5);
    }
    cfg.embedding_dim = j.value("embedding_dim", 32);
    cfg.script_path = j.value("script_path", "");
    cfg.supports_vision = j.value("supports_vision", true);
    cfg.min_interval_s = j.value("min_interval_s", 0.0);
    if (cfg.mode == "replay" && cfg.fixture_dir.empty()) {
        throw Error(ErrorCode::invalid_argument,
                    "backend " + cfg.backend_id + ": replay mode requires fixture_dir");
    }
    return cfg;
}

std::vector<BackendConfig> load_backend_configs(const fs::path& path) {
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::invalid_argument, path.string() + ": " + e.what());
    }
    std::vector<BackendConfig> out;
    for (const auto& item : doc.at("backends")) {
        out.push_back(backend_config_from_json(item));
    }
    return out;
}

// --- Canonical hashing -----------------------------------------------------------

std::string canonical_request_hash(const ModelRequest& req) {
    json canonical;
    json messages = json::array();
    for (const auto& m : req.messages) {
        messages.push_back(json::array({m.role, m.text}));
    }
    canonical["messages"] = messages;
    json images = json::array();
    for (const auto& path : req.image_attachments) {
        images.push_back(sha256_hex(read_file(path)));
    }
    canonical["images"] = images;
    canonical["max_output_tokens"] = req.max_output_tokens;
    canonical["tool_schema"] = req.tool_schema ? *req.tool_schema : json(nullptr);
    return sha256_hex(canonical.dump());
}

std::string canonical_embed_hash(const std::string& text) {
    return sha256_hex("embed:" + text);
}

// --- Stub backends -----------------------------------------------------------------

namespace {

std::string joined_text(const ModelRequest& req) {
    std::string out;
    for (const auto& m : req.messages) {
        out += m.text;
        out += "\n";
    }
    return out;
}

} // namespace

ScriptedChatBackend::ScriptedChatBackend(std::vector<Entry> entries)
    : entries_(std::move(entries)) {}

std::shared_ptr<ScriptedChatBackend> ScriptedChatBackend::from_file(const fs::path& path) {
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::invalid_argument, path.string() + ": " + e.what());
    }
    std::vector<Entry> entries;
    for (const auto& item : doc.at("responses")) {
        Entry e;
        if (item.contains("match")) {
            if (item["match"].is_array()) {
                for (const auto& m : item["match"]) {
                    e.match.push_back(m.get<std::string>());
                }
            } else if (item["match"].is_string() &&
                       !item["match"].get<std::string>().empty()) {
                e.match.push_back(item["match"].get<std::string>());
            }
        }
        e.response.text = item.value("text", "");
        e.response.finish_reason = finish_reason_from_string(item.value("finish_reason", "stop"));
        if (item.contains("tool_call") && !item["tool_call"].is_null()) {
            e.response.tool_call = ToolCallData{item["tool_call"].at("name").get<std::string>(),
                                                item["tool_call"].value("parameters", json::object())};
            e.response.finish_reason = FinishReason::tool_call;
        }
        entries.push_back(std::move(e));
    }
    return std::make_shared<ScriptedChatBackend>(std::move(entries));
}

ModelResponse ScriptedChatBackend::complete(const ModelRequest& req) {
    std::lock_guard lock(mutex_);
    const std::string haystack = joined_text(req);
    for (const auto& entry : entries_) {
        const bool hit = std::all_of(entry.match.begin(), entry.match.end(),
                                     [&](const std::string& needle) {
                                         return haystack.find(needle) != std::string::npos;
                                     });
        if (hit) {
            return entry.response;
        }
    }
    throw Error(ErrorCode::backend_error, "no scripted response matches the request");
}

std::vector<Eigen::VectorXf> ScriptedChatBackend::embed(const std::vector<std::string>&) {
    throw Error(ErrorCode::backend_error, "scripted backend has no embedder");
}

SequenceChatBackend::SequenceChatBackend(std::vector<ModelResponse> responses)
    : responses_(std::move(responses)) {}

ModelResponse SequenceChatBackend::complete(const ModelRequest&) {
    std::lock_guard lock(mutex_);
    if (calls_ >= static_cast<int>(responses_.size())) {
        throw Error(ErrorCode::backend_error, "scripted response sequence exhausted");
    }
    return responses_[static_cast<std::size_t>(calls_++)];
}

std::vector<Eigen::VectorXf> SequenceChatBackend::embed(const std::vector<std::string>&) {
    throw Error(ErrorCode::backend_error, "sequence backend has no embedder");
}

HashEmbedBackend::HashEmbedBackend(int dim) : dim_(dim) {
    if (dim <= 0) {
        throw Error(ErrorCode::invalid_argument, "embedding dimension must be positive");
    }
}

ModelResponse HashEmbedBackend::complete(const ModelRequest&) {
    throw Error(ErrorCode::backend_error, "hash_embed is an embedding backend");
}

Eigen::VectorXf HashEmbedBackend::embed_one(const std::string& text, int dim) {
    const auto tokens = split_whitespace(text);
    if (tokens.empty()) {
        throw Error(ErrorCode::invalid_argument, "cannot embed empty text");
    }
    Eigen::VectorXf v = Eigen::VectorXf::Zero(dim);
    for (const auto& token : tokens) {
        v[static_cast<Eigen::Index>(fnv1a64(token) % static_cast<std::uint64_t>(dim))] += 1.0f;
    }
    v.normalize();
    return v;
}

std::vector<Eigen::VectorXf> HashEmbedBackend::embed(const std::vector<std::string>& texts) {
    std::vector<Eigen::VectorXf> out;
    out.reserve(texts.size());
    for (const auto& text : texts) {
        out.push_back(embed_one(text, dim_));
    }
    return out;
}

ModelResponse StubCaptionerBackend::complete(const ModelRequest& req) {
    const std::string prompt = joined_text(req);
    static const std::regex index_re(R"(Clip index: (\d+))");
    static const std::regex range_re(R"(Time range: \[([0-9.]+), ([0-9.]+)\))");
    static const std::regex transcript_re(R"(Transcript: ([^\n]*))");

    std::smatch m;
    if (!std::regex_search(prompt, m, index_re)) {
        throw Error(ErrorCode::backend_error, "caption prompt is missing the clip context");
    }
    const int index = std::stoi(m[1]);
    double start = 0.0, end = 0.0;
    if (std::regex_search(prompt, m, range_re)) {
        start = std::stod(m[1]);
        end = std::stod(m[2]);
    }
    std::string transcript;
    if (std::regex_search(prompt, m, transcript_re)) {
        transcript = trim(m[1].str());
    }

    static const char* verbs[] = {"walks through the scene", "examines an object on a table",
                                  "talks with another figure", "stands near the background"};
    const int person = index / 3 + 1;
    const std::string name = "person_" + std::to_string(person);
    const std::string verb = verbs[index % 4];

    std::string caption = "Clip " + std::to_string(index) + " covers " + format_seconds(start) +
                          "-" + format_seconds(end) + " s: " + name + " " + verb + ".";
    if (!transcript.empty()) {
        caption += " Speech: \"" + truncate_with_marker(transcript, 60, "...") + "\"";
    }

    json subject{{"name", name},
                 {"appearance", "figure " + std::to_string(person) + " in plain clothing"},
                 {"identity", "unidentified figure " + std::to_string(person)},
                 {"actions", json::array({verb})},
                 {"time_spans", json::array({json::array({start, end})})}};
    json delta{{"caption", caption},
               {"new_subjects", json::array()},
               {"updated_subjects", json::array()}};
    if (index % 3 == 0) {
        delta["new_subjects"].push_back(subject);
    } else {
        delta["updated_subjects"].push_back(subject);
    }

    ModelResponse resp;
    resp.text = delta.dump();
    resp.finish_reason = FinishReason::stop;
    return resp;
}

std::vector<Eigen::VectorXf> StubCaptionerBackend::embed(const std::vector<std::string>&) {
    throw Error(ErrorCode::backend_error, "stub_captioner has no embedder");
}

// --- HTTP backend --------------------------------------------------------------------

json build_chat_body(const ModelRequest& req, const std::string& model_name) {
    json messages = json::array();
    for (std::size_t i = 0; i < req.messages.size(); ++i) {
        const auto& m = req.messages[i];
        const bool attach_here = (i + 1 == req.messages.size()) && !req.image_attachments.empty();
        if (!attach_here) {
            messages.push_back({{"role", m.role}, {"content", m.text}});
            continue;
        }
        json parts = json::array();
        parts.push_back({{"type", "text"}, {"text", m.text}});
        for (const auto& path : req.image_attachments) {
            const std::string data = read_file(path);
            parts.push_back({{"type", "image_url"},
                             {"image_url", {{"url", "data:image/jpeg;base64," + base64_encode(data)}}}});
        }
        messages.push_back({{"role", m.role}, {"content", parts}});
    }
    json body{{"model", model_name},
              {"messages", messages},
              {"max_tokens", req.max_output_tokens},
              {"temperature", 0}};
    if (req.tool_schema) {
        json tools = json::array();
        for (const auto& action : *req.tool_schema) {
            json properties = json::object();
            json required = json::array();
            const json params = action.value("parameters", json::object());
            for (const auto& [pname, pspec] : params.items()) {
                properties[pname] = {{"type", pspec.value("type", "string")}};
                if (pspec.contains("description")) {
                    properties[pname]["description"] = pspec["description"];
                }
                if (pspec.value("required", false)) {
                    required.push_back(pname);
                }
            }
            tools.push_back({{"type", "function"},
                             {"function",
                              {{"name", action.at("name").get<std::string>()},
                               {"description", action.value("description", "")},
                               {"parameters",
                                {{"type", "object"},
                                 {"properties", properties},
                                 {"required", required}}}}}});
        }
        body["tools"] = tools;
    }
    return body;
}

ModelResponse parse_chat_response(const json& body) {
    ModelResponse resp;
    const auto& choice = body.at("choices").at(0);
    const std::string finish = choice.value("finish_reason", "stop");
    if (finish == "content_filter") {
        throw Error(ErrorCode::content_filtered, "provider flagged the completion");
    }
    resp.finish_reason = finish_reason_from_string(finish);
    const auto& message = choice.at("message");
    if (message.contains("content") && message["content"].is_string()) {
        resp.text = message["content"].get<std::string>();
    }
    if (message.contains("tool_calls") && message["tool_calls"].is_array() &&
        !message["tool_calls"].empty()) {
        const auto& call = message["tool_calls"][0];
        json args = json::object();
        const auto& fn = call.at("function");
        if (fn.contains("arguments")) {
            if (fn["arguments"].is_string()) {
                args = json::parse(fn["arguments"].get<std::string>(), nullptr, false);
                if (args.is_discarded()) {
                    args = json::object();
                }
            } else {
                args = fn["arguments"];
            }
        }
        resp.tool_call = ToolCallData{fn.at("name").get<std::string>(), args};
        resp.finish_reason = FinishReason::tool_call;
    }
    if (body.contains("usage")) {
        resp.usage.prompt_tokens = body["usage"].value("prompt_tokens", std::int64_t{0});
        resp.usage.completion_tokens = body["usage"].value("completion_tokens", std::int64_t{0});
    }
    return resp;
}

std::vector<Eigen::VectorXf> parse_embedding_response(const json& body) {
    std::vector<Eigen::VectorXf> out;
    for (const auto& item : body.at("data")) {
        const auto& values = item.at("embedding");
        Eigen::VectorXf v(static_cast<Eigen::Index>(values.size()));
        Eigen::Index i = 0;
        for (const auto& x : values) {
            v[i++] = x.get<float>();
        }
        out.push_back(std::move(v));
    }
    return out;
}

void throw_http_failure(int status, const std::string& body) {
    // Provider safety blocks arrive as 400s with a content_filter error code.
    if (status == 400 && (body.find("content_filter") != std::string::npos ||
                          body.find("ResponsibleAIPolicyViolation") != std::string::npos)) {
        throw Error(ErrorCode::content_filtered, "provider blocked the request");
    }
    if (status == 429) {
        throw Error(ErrorCode::rate_limited, "provider returned 429");
    }
    if (status >= 500) {
        throw Error(ErrorCode::transport_error, "provider returned " + std::to_string(status));
    }
    throw Error(ErrorCode::backend_error,
                "provider returned " + std::to_string(status) + ": " +
                    truncate_with_marker(body, 400));
}

namespace {

struct EndpointParts {
    std::string origin;    // scheme://host[:port]
    std::string base_path; // leading path, possibly empty
};

EndpointParts split_endpoint(const std::string& endpoint) {
    const auto scheme_end = endpoint.find("://");
    if (scheme_end == std::string::npos) {
        throw Error(ErrorCode::invalid_argument, "endpoint must include a scheme: " + endpoint);
    }
    const auto path_start = endpoint.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
        return {endpoint, ""};
    }
    std::string base = endpoint.substr(path_start);
    while (!base.empty() && base.back() == '/') {
        base.pop_back();
    }
    return {endpoint.substr(0, path_start), base};
}

} // namespace

HttpBackend::HttpBackend(BackendConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.endpoint.empty()) {
        throw Error(ErrorCode::invalid_argument,
                    "backend " + cfg_.backend_id + " (http) needs an endpoint");
    }
}

ModelResponse HttpBackend::complete(const ModelRequest& req) {
    const auto parts = split_endpoint(cfg_.endpoint);
    httplib::Client client(parts.origin);
    client.set_read_timeout(120, 0);
    httplib::Headers headers;
    if (!cfg_.api_key_env.empty()) {
        if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key) {
            headers.emplace("Authorization", std::string("Bearer ") + key);
        }
    }
    const json body = build_chat_body(req, cfg_.model_name);
    auto res = client.Post(parts.base_path + "/chat/completions", headers, body.dump(),
                           "application/json");
    if (!res) {
        throw Error(ErrorCode::transport_error, "no response from " + parts.origin);
    }
    if (res->status != 200) {
        throw_http_failure(res->status, res->body);
    }
    try {
        return parse_chat_response(json::parse(res->body));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::backend_error, std::string("unparseable provider response: ") + e.what());
    }
}

std::vector<Eigen::VectorXf> HttpBackend::embed(const std::vector<std::string>& texts) {
    const auto parts = split_endpoint(cfg_.endpoint);
    httplib::Client client(parts.origin);
    client.set_read_timeout(120, 0);
    httplib::Headers headers;
    if (!cfg_.api_key_env.empty()) {
        if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key) {
            headers.emplace("Authorization", std::string("Bearer ") + key);
        }
    }
    const json body{{"model", cfg_.model_name}, {"input", texts}};
    auto res = client.Post(parts.base_path + "/embeddings", headers, body.dump(),
                           "application/json");
    if (!res) {
        throw Error(ErrorCode::transport_error, "no response from " + parts.origin);
    }
    if (res->status != 200) {
        throw_http_failure(res->status, res->body);
    }
    try {
        return parse_embedding_response(json::parse(res->body));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::backend_error, std::string("unparseable provider response: ") + e.what());
    }
}

// --- Gateway ----------------------------------------------------------------------------

ModelGateway::ModelGateway(const std::vector<BackendConfig>& configs) {
    for (const auto& cfg : configs) {
        add_backend(cfg);
    }
}

void ModelGateway::add_backend(const BackendConfig& cfg) {
    std::shared_ptr<ModelBackend> impl;
    if (cfg.kind == "http") {
        impl = std::make_shared<HttpBackend>(cfg);
    } else if (cfg.kind == "scripted") {
        impl = ScriptedChatBackend::from_file(cfg.script_path);
    } else if (cfg.kind == "hash_embed") {
        impl = std::make_shared<HashEmbedBackend>(cfg.embedding_dim);
    } else if (cfg.kind == "stub_captioner") {
        impl = std::make_shared<StubCaptionerBackend>();
    } else {
        throw Error(ErrorCode::invalid_argument, "unknown backend kind: " + cfg.kind);
    }
    add_backend(cfg, std::move(impl));
}

void ModelGateway::add_backend(const BackendConfig& cfg, std::shared_ptr<ModelBackend> impl) {
    if (cfg.mode == "replay" && cfg.fixture_dir.empty()) {
        throw Error(ErrorCode::invalid_argument,
                    "backend " + cfg.backend_id + ": replay mode requires fixture_dir");
    }
    auto e = std::make_unique<Entry>();
    e->cfg = cfg;
    e->impl = std::move(impl);
    entries_[cfg.backend_id] = std::move(e);
}

bool ModelGateway::has_backend(const std::string& id) const {
    return entries_.count(id) > 0;
}

ModelGateway::Entry& ModelGateway::entry(const std::string& id) {
    auto it = entries_.find(id);
    if (it == entries_.end()) {
        throw Error(ErrorCode::invalid_argument, "backend not configured: " + id);
    }
    return *it->second;
}

const ModelGateway::Entry& ModelGateway::entry(const std::string& id) const {
    return const_cast<ModelGateway*>(this)->entry(id);
}

int ModelGateway::embedding_dim(const std::string& id) const {
    const Entry& e = entry(id);
    if (e.impl && e.impl->embedding_dim() > 0) {
        return e.impl->embedding_dim();
    }
    return e.cfg.embedding_dim;
}

const BackendConfig& ModelGateway::config(const std::string& id) const {
    return entry(id).cfg;
}

void ModelGateway::rate_limit(Entry& e) {
    if (e.cfg.min_interval_s <= 0.0) {
        return;
    }
    std::lock_guard lock(e.rate_mutex);
    const auto now = std::chrono::steady_clock::now();
    const auto interval = std::chrono::duration<double>(e.cfg.min_interval_s);
    if (e.last_call.time_since_epoch().count() != 0) {
        const auto ready = e.last_call + std::chrono::duration_cast<std::chrono::steady_clock::duration>(interval);
        if (now < ready) {
            std::this_thread::sleep_for(ready - now);
        }
    }
    e.last_call = std::chrono::steady_clock::now();
}

namespace {

// Retries rate-limit and transport failures with exponential backoff; never
// retries content-filter blocks.
template <typename Fn>
auto with_retry(const RetryPolicy& policy, Fn&& fn) {
    int attempt = 1;
    for (;;) {
        try {
            return fn();
        } catch (const Error& e) {
            const bool retryable =
                e.code() == ErrorCode::rate_limited || e.code() == ErrorCode::transport_error;
            if (!retryable || attempt >= policy.max_attempts) {
                throw;
            }
            const double delay = policy.backoff_s * std::pow(2.0, attempt - 1);
            if (delay > 0) {
                std::this_thread::sleep_for(std::chrono::duration<double>(delay));
            }
            ++attempt;
        }
    }
}

} // namespace

ModelResponse ModelGateway::complete(const ModelRequest& req) {
    Entry& e = entry(req.backend_id);
    if (req.messages.empty()) {
        throw Error(ErrorCode::invalid_argument, "request has no messages");
    }
    // Replay backends have no live implementation; the vision constraint was
    // enforced when the fixture was recorded.
    if (!req.image_attachments.empty() && e.impl && !e.impl->supports_vision()) {
        throw Error(ErrorCode::invalid_argument,
                    "backend " + req.backend_id + " does not accept images");
    }

    if (e.cfg.mode == "replay") {
        const std::string hash = canonical_request_hash(req);
        const fs::path path = e.cfg.fixture_dir / (hash + ".json");
        if (!fs::exists(path)) {
            throw Error(ErrorCode::fixture_missing,
                        "no recorded response " + hash + " under " + e.cfg.fixture_dir.string());
        }
        return response_from_json(json::parse(read_file(path)).at("response"));
    }

    if (!e.impl) {
        throw Error(ErrorCode::backend_error,
                    "backend " + req.backend_id + " was registered replay-only");
    }
    rate_limit(e);
    ModelResponse resp = with_retry(e.cfg.retry, [&] { return e.impl->complete(req); });

    if (e.cfg.mode == "record") {
        const std::string hash = canonical_request_hash(req);
        json messages = json::array();
        for (const auto& m : req.messages) {
            messages.push_back(json::array({m.role, m.text}));
        }
        json images = json::array();
        for (const auto& p : req.image_attachments) {
            images.push_back(sha256_hex(read_file(p)));
        }
        json fixture{{"request",
                      {{"messages", messages},
                       {"images", images},
                       {"max_output_tokens", req.max_output_tokens}}},
                     {"response", response_to_json(resp)}};
        std::lock_guard lock(e.record_mutex);
        atomic_write_file(e.cfg.fixture_dir / (hash + ".json"), fixture.dump(2) + "\n");
    }
    return resp;
}

std::vector<Eigen::VectorXf> ModelGateway::embed(const std::string& backend_id,
                                                 const std::vector<std::string>& texts) {
    Entry& e = entry(backend_id);
    if (texts.empty()) {
        throw Error(ErrorCode::invalid_argument, "no texts to embed");
    }

    if (e.cfg.mode == "replay") {
        std::vector<Eigen::VectorXf> out;
        out.reserve(texts.size());
        for (const auto& text : texts) {
            const std::string hash = canonical_embed_hash(text);
            const fs::path path = e.cfg.fixture_dir / ("embed-" + hash + ".json");
            if (!fs::exists(path)) {
                throw Error(ErrorCode::fixture_missing,
                            "no recorded embedding " + hash + " under " + e.cfg.fixture_dir.string());
            }
            const json doc = json::parse(read_file(path));
            const auto& values = doc.at("vector");
            Eigen::VectorXf v(static_cast<Eigen::Index>(values.size()));
            Eigen::Index i = 0;
            for (const auto& x : values) {
                v[i++] = x.get<float>();
            }
            out.push_back(std::move(v));
        }
        return out;
    }

    if (!e.impl) {
        throw Error(ErrorCode::backend_error,
                    "backend " + backend_id + " was registered replay-only");
    }
    rate_limit(e);
    auto vectors = with_retry(e.cfg.retry, [&] { return e.impl->embed(texts); });
    if (vectors.size() != texts.size()) {
        throw Error(ErrorCode::backend_error,
                    "backend returned " + std::to_string(vectors.size()) + " vectors for " +
                        std::to_string(texts.size()) + " inputs");
    }
    for (const auto& v : vectors) {
        if (!v.allFinite()) {
            throw Error(ErrorCode::backend_error, "backend returned non-finite embedding values");
        }
    }

    if (e.cfg.mode == "record") {
        std::lock_guard lock(e.record_mutex);
        for (std::size_t i = 0; i < texts.size(); ++i) {
            const std::string hash = canonical_embed_hash(texts[i]);
            json values = json::array();
            for (Eigen::Index j = 0; j < vectors[i].size(); ++j) {
                values.push_back(vectors[i][j]);
            }
            json fixture{{"text", texts[i]}, {"vector", values}};
            atomic_write_file(e.cfg.fixture_dir / ("embed-" + hash + ".json"),
                              fixture.dump(2) + "\n");
        }
    }
    return vectors;
}

} // namespace vidagent
