// SPDX-License-Identifier: Apache-2.0
#include "vidagent/service.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>
#include <future>
#include <istream>
#include <mutex>
#include <ostream>
#include <thread>
#include <vector>

using nlohmann::json;

namespace vidagent {

namespace {

json make_error(const json& id, int code, const std::string& message) {
    return json{{"jsonrpc", "2.0"}, {"id", id}, {"error", {{"code", code}, {"message", message}}}};
}

json make_result(const json& id, json result) {
    return json{{"jsonrpc", "2.0"}, {"id", id}, {"result", std::move(result)}};
}

int rpc_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::tool_disabled:
            return rpc::kToolDisabled;
        case ErrorCode::content_filtered:
            return rpc::kContentFiltered;
        case ErrorCode::backend_error:
        case ErrorCode::rate_limited:
        case ErrorCode::transport_error:
        case ErrorCode::fixture_missing:
        case ErrorCode::episode_aborted:
        case ErrorCode::malformed_model_output:
            return rpc::kBackendError;
        case ErrorCode::invalid_argument:
        case ErrorCode::invalid_k:
        case ErrorCode::invalid_range:
        case ErrorCode::empty_range:
        case ErrorCode::invalid_params:
        case ErrorCode::dimension_mismatch:
        case ErrorCode::zero_norm_query:
        case ErrorCode::out_of_range:
            return rpc::kInvalidParams;
        case ErrorCode::invalid_method:
            return rpc::kMethodNotFound;
        default:
            return rpc::kDataError;
    }
}

} // namespace

ToolService::ToolService(std::map<std::string, HostedDatabase> databases, ServiceConfig cfg,
                         ModelGateway& gateway)
    : databases_(std::move(databases)), cfg_(std::move(cfg)), gateway_(gateway),
      prompts_(cfg_.prompts_dir) {}

const HostedDatabase& ToolService::hosted(const json& params) const {
    if (!params.contains("video_id") || !params["video_id"].is_string()) {
        throw Error(ErrorCode::invalid_params, "missing video_id");
    }
    const auto id = params["video_id"].get<std::string>();
    const auto it = databases_.find(id);
    if (it == databases_.end()) {
        throw Error(ErrorCode::invalid_params, "unknown video_id: " + id);
    }
    return it->second;
}

json ToolService::dispatch(const std::string& method, const json& params) const {
    if (method == "list_tools") {
        json tools = json::array();
        for (const auto& action : action_schema(cfg_.toolset)) {
            if (action.at("name") == "Answer") {
                continue;
            }
            json descriptor = action;
            descriptor["parameters"]["video_id"] = {{"type", "string"},
                                                    {"required", true},
                                                    {"description", "hosted database id"}};
            tools.push_back(std::move(descriptor));
        }
        tools.push_back(
            {{"name", "ask"},
             {"description", "Run the full question-answering loop over one video."},
             {"parameters",
              {{"video_id", {{"type", "string"}, {"required", true},
                             {"description", "hosted database id"}}},
               {"question", {{"type", "string"}, {"required", true},
                             {"description", "the question to answer"}}},
               {"max_steps", {{"type", "integer"}, {"required", false},
                              {"default", cfg_.agent.max_steps}}}}}});
        json videos = json::array();
        for (const auto& [id, _] : databases_) {
            videos.push_back(id);
        }
        return json{{"tools", tools}, {"videos", videos}};
    }

    if (method == "global_browse") {
        const auto& host = hosted(params);
        if (!params.contains("query") || !params["query"].is_string()) {
            throw Error(ErrorCode::invalid_params, "missing query");
        }
        Toolset tools(*host.db, cfg_.toolset, gateway_, prompts_, host.root);
        const auto summary = tools.global_browse(params["query"].get<std::string>());
        return json{{"subject_summary", summary.subject_summary},
                    {"event_summary", summary.event_summary},
                    {"event_blocked", summary.event_blocked}};
    }

    if (method == "clip_search") {
        const auto& host = hosted(params);
        if (!params.contains("query") || !params["query"].is_string()) {
            throw Error(ErrorCode::invalid_params, "missing query");
        }
        int k = cfg_.toolset.default_k;
        if (params.contains("k")) {
            if (!params["k"].is_number_integer()) {
                throw Error(ErrorCode::invalid_params, "k must be an integer");
            }
            k = params["k"].get<int>();
        }
        Toolset tools(*host.db, cfg_.toolset, gateway_, prompts_, host.root);
        json hits = json::array();
        for (const auto& hit : tools.clip_search(params["query"].get<std::string>(), k)) {
            hits.push_back({{"clip_index", hit.clip_index},
                            {"start_s", hit.start_s},
                            {"end_s", hit.end_s},
                            {"caption", hit.caption},
                            {"score", hit.score}});
        }
        return json{{"hits", hits}};
    }

    if (method == "frame_inspect") {
        const auto& host = hosted(params);
        if (!params.contains("query") || !params["query"].is_string()) {
            throw Error(ErrorCode::invalid_params, "missing query");
        }
        if (!params.contains("t_s") || !params["t_s"].is_number() || !params.contains("t_e") ||
            !params["t_e"].is_number()) {
            throw Error(ErrorCode::invalid_params, "t_s and t_e must be numbers");
        }
        Toolset tools(*host.db, cfg_.toolset, gateway_, prompts_, host.root);
        const auto result = tools.frame_inspect(params["query"].get<std::string>(),
                                                params["t_s"].get<double>(),
                                                params["t_e"].get<double>());
        return json{{"answer", result.answer},
                    {"frames_used", result.frames_used},
                    {"range", json::array({result.range_start_s, result.range_end_s})}};
    }

    if (method == "ask") {
        const auto& host = hosted(params);
        if (!params.contains("question") || !params["question"].is_string()) {
            throw Error(ErrorCode::invalid_params, "missing question");
        }
        AgentConfig agent_cfg = cfg_.agent;
        if (params.contains("max_steps")) {
            if (!params["max_steps"].is_number_integer() || params["max_steps"].get<int>() < 1) {
                throw Error(ErrorCode::invalid_params, "max_steps must be a positive integer");
            }
            agent_cfg.max_steps = params["max_steps"].get<int>();
        }
        Toolset tools(*host.db, cfg_.toolset, gateway_, prompts_, host.root);
        const Episode episode = run_episode(params["question"].get<std::string>(), tools,
                                            gateway_, agent_cfg, prompts_);
        return json{{"answer", episode.final_answer}, {"episode", episode_to_json(episode)}};
    }

    throw Error(ErrorCode::invalid_method, "unknown method: " + method);
}

json ToolService::handle(const json& request) const {
    if (!request.is_object()) {
        return make_error(json(nullptr), rpc::kInvalidRequest, "invalid-request: not an object");
    }
    const json id = request.value("id", json(nullptr));
    if (!request.contains("method") || !request["method"].is_string()) {
        return make_error(id, rpc::kInvalidRequest, "invalid-request: missing method");
    }
    const std::string method = request["method"].get<std::string>();
    const json params = request.value("params", json::object());
    try {
        return make_result(id, dispatch(method, params));
    } catch (const Error& e) {
        return make_error(id, rpc_code_for(e.code()), e.what());
    } catch (const std::exception& e) {
        return make_error(id, rpc::kInternalError, e.what());
    }
}

void ToolService::serve_stream(std::istream& in, std::ostream& out) const {
    std::mutex write_mutex;
    std::vector<std::future<void>> workers;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        json request = json::parse(line, nullptr, false);
        if (request.is_discarded()) {
            std::lock_guard lock(write_mutex);
            out << make_error(json(nullptr), rpc::kParseError, "parse error").dump() << "\n";
            out.flush();
            continue;
        }
        workers.push_back(std::async(std::launch::async, [this, request = std::move(request),
                                                          &write_mutex, &out] {
            const json response = handle(request);
            std::lock_guard lock(write_mutex);
            out << response.dump() << "\n";
            out.flush();
        }));
    }
    for (auto& w : workers) {
        w.get();
    }
}

void ToolService::serve_tcp(std::uint16_t port, const std::atomic<bool>& stop) const {
    const int listener = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listener < 0) {
        throw Error(ErrorCode::io_error, "cannot create socket");
    }
    int yes = 1;
    ::setsockopt(listener, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    if (::bind(listener, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ||
        ::listen(listener, 16) != 0) {
        ::close(listener);
        throw Error(ErrorCode::io_error, "cannot bind 127.0.0.1:" + std::to_string(port));
    }

    std::vector<std::thread> connections;
    while (!stop.load()) {
        // Poll with a timeout so the stop flag is honored promptly.
        timeval tv{0, 200000};
        fd_set fds;
        FD_ZERO(&fds);
        FD_SET(listener, &fds);
        const int ready = ::select(listener + 1, &fds, nullptr, nullptr, &tv);
        if (ready <= 0) {
            continue;
        }
        const int client = ::accept(listener, nullptr, nullptr);
        if (client < 0) {
            continue;
        }
        connections.emplace_back([this, client] {
            std::string buffer;
            char chunk[4096];
            std::mutex write_mutex;
            std::vector<std::future<void>> workers;
            auto send_line = [&](const json& doc) {
                const std::string line = doc.dump() + "\n";
                std::lock_guard lock(write_mutex);
                ::send(client, line.data(), line.size(), 0);
            };
            for (;;) {
                const ssize_t n = ::recv(client, chunk, sizeof(chunk), 0);
                if (n <= 0) {
                    break;
                }
                buffer.append(chunk, static_cast<std::size_t>(n));
                std::size_t pos;
                while ((pos = buffer.find('\n')) != std::string::npos) {
                    const std::string line = buffer.substr(0, pos);
                    buffer.erase(0, pos + 1);
                    if (line.empty()) {
                        continue;
                    }
                    json request = json::parse(line, nullptr, false);
                    if (request.is_discarded()) {
                        send_line(make_error(json(nullptr), rpc::kParseError, "parse error"));
                        continue;
                    }
                    workers.push_back(std::async(std::launch::async,
                                                 [this, request = std::move(request), &send_line] {
                                                     send_line(handle(request));
                                                 }));
                }
            }
            for (auto& w : workers) {
                w.get();
            }
            ::close(client);
        });
    }
    ::close(listener);
    for (auto& t : connections) {
        t.join();
    }
}

} // namespace vidagent
