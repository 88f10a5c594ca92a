// SPDX-License-Identifier: Apache-2.0
#pragma once
// Long-running tool service: newline-delimited JSON-RPC-2.0-shaped requests
// over stdio or a local TCP socket. Methods: list_tools, global_browse,
// clip_search, frame_inspect, ask. Handlers are read-only over the hosted
// databases; concurrent requests are answered as they complete, correlated
// by id.

#include "vidagent/agent.hpp"
#include "vidagent/toolset.hpp"

#include <atomic>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>

namespace vidagent {

struct HostedDatabase {
    std::shared_ptr<const VideoDatabase> db;
    std::filesystem::path root;
};

struct ServiceConfig {
    ToolsetConfig toolset;
    AgentConfig agent;
    std::filesystem::path prompts_dir = "prompts";
};

// JSON-RPC error codes used on the wire.
namespace rpc {
constexpr int kParseError = -32700;
constexpr int kInvalidRequest = -32600;
constexpr int kMethodNotFound = -32601;
constexpr int kInvalidParams = -32602;
constexpr int kInternalError = -32603;
constexpr int kToolDisabled = -32001;
constexpr int kBackendError = -32002;
constexpr int kContentFiltered = -32003;
constexpr int kDataError = -32004;
} // namespace rpc

class ToolService {
public:
    ToolService(std::map<std::string, HostedDatabase> databases, ServiceConfig cfg,
                ModelGateway& gateway);

    // One request in, one response out. Never throws; failures become error
    // objects that echo the request id.
    nlohmann::json handle(const nlohmann::json& request) const;

    // Newline-delimited loop; one worker per request so slow requests do not
    // block the read loop. Returns at EOF after draining in-flight work.
    void serve_stream(std::istream& in, std::ostream& out) const;

    // TCP accept loop on 127.0.0.1:port, one connection handler per client.
    // Returns when `stop` becomes true (set it from a signal handler).
    void serve_tcp(std::uint16_t port, const std::atomic<bool>& stop) const;

    const ServiceConfig& config() const { return cfg_; }

private:
    nlohmann::json dispatch(const std::string& method, const nlohmann::json& params) const;
    const HostedDatabase& hosted(const nlohmann::json& params) const;

    std::map<std::string, HostedDatabase> databases_;
    ServiceConfig cfg_;
    ModelGateway& gateway_;
    PromptLibrary prompts_;
};

} // namespace vidagent
