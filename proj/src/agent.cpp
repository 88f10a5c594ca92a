// SPDX-License-Identifier: Apache-2.0
#include "vidagent/agent.hpp"

#include "vidagent/strings.hpp"

#include <chrono>
#include <sstream>

using nlohmann::json;

namespace vidagent {

std::string_view to_string(ActionKind kind) {
    switch (kind) {
        case ActionKind::GlobalBrowse: return "GlobalBrowse";
        case ActionKind::ClipSearch: return "ClipSearch";
        case ActionKind::FrameInspect: return "FrameInspect";
        case ActionKind::Answer: return "Answer";
        case ActionKind::Invalid: return "Invalid";
    }
    return "Invalid";
}

ActionKind action_kind_from_string(std::string_view name) {
    const std::string lower = to_lower(trim(name));
    if (lower == "globalbrowse" || lower == "global_browse") return ActionKind::GlobalBrowse;
    if (lower == "clipsearch" || lower == "clip_search") return ActionKind::ClipSearch;
    if (lower == "frameinspect" || lower == "frame_inspect") return ActionKind::FrameInspect;
    if (lower == "answer") return ActionKind::Answer;
    if (lower == "invalid") return ActionKind::Invalid;
    throw Error(ErrorCode::malformed_action, "unknown action: " + std::string(name));
}

std::string_view to_string(Termination t) {
    return t == Termination::answer_action ? "answer_action" : "step_cap_forced";
}

// --- History rendering ----------------------------------------------------------

namespace {

std::string escape_line(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (char c : text) {
        switch (c) {
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

std::string unescape_line(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] != '\\' || i + 1 == text.size()) {
            out.push_back(text[i]);
            continue;
        }
        ++i;
        switch (text[i]) {
            case 'n': out.push_back('\n'); break;
            case 'r': out.push_back('\r'); break;
            case '\\': out.push_back('\\'); break;
            default: out.push_back(text[i]);
        }
    }
    return out;
}

std::string action_to_line(const ActionCall& call) {
    json j{{"name", std::string(to_string(call.kind))}, {"parameters", call.parameters}};
    return j.dump();
}

// Textual action list for the preamble, derived from the machine schema.
std::string render_actions_text(const json& schema) {
    std::ostringstream out;
    for (const auto& action : schema) {
        out << "- " << action.at("name").get<std::string>() << ": "
            << action.value("description", "") << "\n";
        const auto params = action.value("parameters", json::object());
        if (params.empty()) {
            continue;
        }
        out << "  parameters: ";
        bool first = true;
        for (const auto& [pname, pspec] : params.items()) {
            if (!first) {
                out << ", ";
            }
            first = false;
            out << pname << " (" << pspec.value("type", "string");
            if (pspec.value("required", false)) {
                out << ", required";
            } else {
                out << ", optional";
                if (pspec.contains("default")) {
                    out << ", default " << pspec["default"].dump();
                }
            }
            if (pspec.contains("maximum")) {
                out << ", max " << pspec["maximum"].dump();
            }
            out << ")";
        }
        out << "\n";
    }
    return out.str();
}

std::string history_body(const std::string& query, const std::vector<AgentStep>& steps) {
    std::ostringstream out;
    out << "Question: " << escape_line(query) << "\n";
    for (const auto& step : steps) {
        out << "[step " << step.index << "]\n";
        out << "reasoning: " << escape_line(step.reasoning) << "\n";
        out << "action: " << escape_line(action_to_line(step.call)) << "\n";
        out << "observation: " << escape_line(step.observation) << "\n";
    }
    return out.str();
}

} // namespace

std::string render_history(const std::string& query, const std::vector<AgentStep>& steps,
                           const json& schema, const PromptLibrary& prompts) {
    const std::string preamble =
        prompts.render("agent_preamble_v1", {{"actions", render_actions_text(schema)}});
    return preamble + "\n\n" + history_body(query, steps);
}

std::string render_history_body(const std::string& query, const std::vector<AgentStep>& steps) {
    return history_body(query, steps);
}

std::vector<RenderedStep> parse_rendered_history(const std::string& rendered) {
    std::vector<RenderedStep> steps;
    std::istringstream in(rendered);
    std::string line;
    RenderedStep* current = nullptr;
    while (std::getline(in, line)) {
        if (line.rfind("[step ", 0) == 0) {
            steps.emplace_back();
            current = &steps.back();
        } else if (current && line.rfind("reasoning: ", 0) == 0) {
            current->reasoning = unescape_line(std::string_view(line).substr(11));
        } else if (current && line.rfind("action: ", 0) == 0) {
            current->action = unescape_line(std::string_view(line).substr(8));
        } else if (current && line.rfind("observation: ", 0) == 0) {
            current->observation = unescape_line(std::string_view(line).substr(13));
        }
    }
    return steps;
}

// --- Action parsing --------------------------------------------------------------

namespace {

std::optional<std::string> extract_action_block(const std::string& text) {
    const std::string open = "```action";
    const auto start = text.find(open);
    if (start == std::string::npos) {
        return std::nullopt;
    }
    const auto body_start = text.find('\n', start);
    if (body_start == std::string::npos) {
        return std::nullopt;
    }
    const auto end = text.find("```", body_start);
    if (end == std::string::npos) {
        return std::nullopt;
    }
    return text.substr(body_start + 1, end - body_start - 1);
}

double coerce_number(const json& value, const std::string& name) {
    if (value.is_number()) {
        return value.get<double>();
    }
    if (value.is_string()) {
        try {
            std::size_t used = 0;
            const std::string s = trim(value.get<std::string>());
            const double parsed = std::stod(s, &used);
            if (used == s.size()) {
                return parsed;
            }
        } catch (const std::exception&) {
        }
    }
    throw Error(ErrorCode::malformed_action, name + " is not a number");
}

std::string require_string(const json& params, const std::string& name) {
    if (!params.contains(name) || !params[name].is_string() ||
        trim(params[name].get<std::string>()).empty()) {
        throw Error(ErrorCode::malformed_action, "missing required parameter: " + name);
    }
    return params[name].get<std::string>();
}

ActionCall validate_action(ActionKind kind, const json& raw_params, int default_k, int max_k) {
    ActionCall call;
    call.kind = kind;
    const json params = raw_params.is_object() ? raw_params : json::object();
    switch (kind) {
        case ActionKind::GlobalBrowse:
            call.parameters = json::object();
            break;
        case ActionKind::ClipSearch: {
            call.parameters["query"] = require_string(params, "query");
            int k = default_k;
            if (params.contains("k")) {
                k = static_cast<int>(std::llround(coerce_number(params["k"], "k")));
            }
            call.parameters["k"] = std::clamp(k, 1, max_k);
            break;
        }
        case ActionKind::FrameInspect: {
            call.parameters["query"] = require_string(params, "query");
            call.parameters["t_s"] = coerce_number(
                params.contains("t_s") ? params["t_s"]
                                       : throw Error(ErrorCode::malformed_action, "missing t_s"),
                "t_s");
            call.parameters["t_e"] = coerce_number(
                params.contains("t_e") ? params["t_e"]
                                       : throw Error(ErrorCode::malformed_action, "missing t_e"),
                "t_e");
            break;
        }
        case ActionKind::Answer:
            call.parameters["answer"] = require_string(params, "answer");
            break;
        case ActionKind::Invalid:
            throw Error(ErrorCode::malformed_action, "invalid action");
    }
    return call;
}

} // namespace

ActionCall parse_action(const ModelResponse& response, int default_k, int max_k) {
    if (response.tool_call) {
        const ActionKind kind = action_kind_from_string(response.tool_call->name);
        return validate_action(kind, response.tool_call->parameters, default_k, max_k);
    }
    const auto block = extract_action_block(response.text);
    if (!block) {
        throw Error(ErrorCode::malformed_action, "no structured tool call and no action block");
    }
    json doc;
    try {
        doc = json::parse(*block);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::malformed_action, std::string("action block is not JSON: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("action") || !doc["action"].is_string()) {
        throw Error(ErrorCode::malformed_action, "action block has no action name");
    }
    const ActionKind kind = action_kind_from_string(doc["action"].get<std::string>());
    doc.erase("action");
    return validate_action(kind, doc, default_k, max_k);
}

std::string reasoning_text(const ModelResponse& response) {
    const std::string& text = response.text;
    const auto start = text.find("```action");
    if (start == std::string::npos) {
        return trim(text);
    }
    const auto end = text.find("```", start + 9);
    std::string out = text.substr(0, start);
    if (end != std::string::npos) {
        out += text.substr(end + 3);
    }
    return trim(out);
}

// --- Episode loop ------------------------------------------------------------------

namespace {

std::string render_hits(const std::string& query, const std::vector<ClipHit>& hits) {
    std::ostringstream out;
    out << "Top " << hits.size() << " clips for \"" << query << "\":";
    for (const auto& hit : hits) {
        out << "\n[clip " << hit.clip_index << "] " << format_seconds(hit.start_s) << "-"
            << format_seconds(hit.end_s) << " s (score " << format_score(hit.score)
            << "): " << hit.caption;
    }
    return out.str();
}

struct ExecResult {
    std::string observation;
    std::optional<std::string> error;
};

ExecResult execute_action(Toolset& tools, const std::string& user_query, const ActionCall& call) {
    try {
        switch (call.kind) {
            case ActionKind::GlobalBrowse: {
                const GlobalSummary summary = tools.global_browse(user_query);
                std::string obs = "Subject summary:\n" + summary.subject_summary +
                                  "\nEvent summary:\n" +
                                  (summary.event_blocked ? "[blocked]" : summary.event_summary);
                return {obs, summary.event_blocked
                                 ? std::optional<std::string>("content-filtered")
                                 : std::nullopt};
            }
            case ActionKind::ClipSearch: {
                const auto query = call.parameters.at("query").get<std::string>();
                const int k = call.parameters.at("k").get<int>();
                return {render_hits(query, tools.clip_search(query, k)), std::nullopt};
            }
            case ActionKind::FrameInspect: {
                const auto query = call.parameters.at("query").get<std::string>();
                const auto result = tools.frame_inspect(query,
                                                        call.parameters.at("t_s").get<double>(),
                                                        call.parameters.at("t_e").get<double>());
                std::ostringstream out;
                out << "Inspected " << result.frames_used << " frames in ["
                    << format_seconds(result.range_start_s) << ", "
                    << format_seconds(result.range_end_s) << "] s: " << result.answer;
                return {out.str(), result.answer == "[blocked]"
                                       ? std::optional<std::string>("content-filtered")
                                       : std::nullopt};
            }
            default:
                return {"[error] not an executable action", std::string("malformed-action")};
        }
    } catch (const Error& e) {
        if (e.code() == ErrorCode::content_filtered) {
            return {"[blocked]", std::string(to_string(e.code()))};
        }
        return {std::string("[error] ") + e.what(), std::string(to_string(e.code()))};
    }
}

json toolset_snapshot(const ToolsetConfig& cfg) {
    std::vector<std::string> enabled;
    for (const auto kind : cfg.enabled) {
        enabled.push_back(std::string(to_string(kind)));
    }
    std::sort(enabled.begin(), enabled.end());
    return json{{"enabled", enabled},
                {"default_k", cfg.default_k},
                {"max_k", cfg.max_k},
                {"frame_cap", cfg.frame_cap},
                {"event_summary_frames", cfg.event_summary_frames}};
}

} // namespace

std::string force_answer(const std::string& query, const std::vector<AgentStep>& steps,
                         ModelGateway& gateway, const AgentConfig& cfg,
                         const PromptLibrary& prompts) {
    ModelRequest req;
    req.backend_id = cfg.llm_backend_id;
    req.messages = {{"user", prompts.get("forced_answer_v1") + "\n\n" +
                                 render_history_body(query, steps)}};
    try {
        const std::string text = trim(gateway.complete(req).text);
        return text.empty() ? "[no-answer]" : text;
    } catch (const Error&) {
        return "[no-answer]";
    }
}

Episode run_episode(const std::string& query, Toolset& tools, ModelGateway& gateway,
                    const AgentConfig& cfg, const PromptLibrary& prompts) {
    if (cfg.max_steps < 1) {
        throw Error(ErrorCode::invalid_argument, "max_steps must be >= 1");
    }
    const json schema = action_schema(tools.config());

    Episode episode;
    episode.user_query = query;
    episode.config_snapshot = json{{"max_steps", cfg.max_steps},
                                   {"llm_backend_id", cfg.llm_backend_id},
                                   {"malformed_action_retries", cfg.malformed_action_retries},
                                   {"observation_cap_chars", cfg.observation_cap_chars},
                                   {"toolset", toolset_snapshot(tools.config())}};

    bool answered = false;
    for (int i = 1; i <= cfg.max_steps && !answered; ++i) {
        const auto step_start = std::chrono::steady_clock::now();
        std::string prompt = render_history(query, episode.steps, schema, prompts);

        AgentStep step;
        step.index = i;

        std::optional<ActionCall> call;
        int parse_failures = 0;
        std::string last_parse_error;
        while (!call) {
            ModelResponse resp;
            try {
                ModelRequest req;
                req.backend_id = cfg.llm_backend_id;
                req.messages = {{"user", prompt}};
                req.tool_schema = schema;
                resp = gateway.complete(req);
            } catch (const Error& e) {
                if (e.code() == ErrorCode::content_filtered) {
                    // The reasoning call itself was blocked; record it and move on.
                    step.reasoning = "";
                    step.call = ActionCall{ActionKind::Invalid, json{{"reason", "content_filter"}}};
                    step.observation = "[blocked]";
                    step.error = "content-filtered";
                    break;
                }
                throw Error(ErrorCode::episode_aborted,
                            "step " + std::to_string(i) + ": " + e.what());
            }
            try {
                call = parse_action(resp, tools.config().default_k, tools.config().max_k);
                step.reasoning = reasoning_text(resp);
            } catch (const Error& e) {
                if (e.code() != ErrorCode::malformed_action) {
                    throw;
                }
                ++parse_failures;
                last_parse_error = e.what();
                if (parse_failures <= cfg.malformed_action_retries) {
                    // One re-prompt with a corrective note, then the step is spent.
                    prompt += "\n[format reminder]\nThe previous reply could not be used (";
                    prompt += e.what();
                    prompt += "). Reply with reasoning and exactly one ```action``` block.\n";
                    continue;
                }
                step.reasoning = trim(resp.text);
                step.call = ActionCall{ActionKind::Invalid,
                                       json{{"raw", truncate_with_marker(resp.text, 500)}}};
                step.observation = "The reply did not contain a valid action (" +
                                   last_parse_error + "). One action per step is required.";
                step.error = "malformed-action";
                break;
            }
        }

        if (call) {
            step.call = *call;
            if (call->kind == ActionKind::Answer) {
                episode.final_answer = call->parameters.at("answer").get<std::string>();
                episode.terminated_by = Termination::answer_action;
                step.observation = "";
                answered = true;
            } else {
                auto result = execute_action(tools, query, *call);
                step.observation =
                    truncate_with_marker(result.observation, cfg.observation_cap_chars);
                step.error = result.error;
            }
        }

        step.duration_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                               std::chrono::steady_clock::now() - step_start)
                               .count();
        episode.steps.push_back(std::move(step));
    }

    if (!answered) {
        episode.final_answer = force_answer(query, episode.steps, gateway, cfg, prompts);
        episode.terminated_by = Termination::step_cap_forced;
    }
    return episode;
}

// --- Episode serialization -----------------------------------------------------------

json episode_to_json(const Episode& episode, bool include_timing) {
    json steps = json::array();
    for (const auto& step : episode.steps) {
        json s{{"index", step.index},
               {"reasoning", step.reasoning},
               {"action", {{"name", std::string(to_string(step.call.kind))},
                           {"parameters", step.call.parameters}}},
               {"observation", step.observation},
               {"error", step.error ? json(*step.error) : json(nullptr)}};
        if (include_timing) {
            s["duration_ms"] = step.duration_ms;
        }
        steps.push_back(std::move(s));
    }
    return json{{"user_query", episode.user_query},
                {"steps", steps},
                {"final_answer", episode.final_answer},
                {"terminated_by", std::string(to_string(episode.terminated_by))},
                {"config_snapshot", episode.config_snapshot}};
}

Episode episode_from_json(const json& j) {
    Episode episode;
    episode.user_query = j.at("user_query").get<std::string>();
    episode.final_answer = j.at("final_answer").get<std::string>();
    episode.terminated_by = j.at("terminated_by").get<std::string>() == "step_cap_forced"
                                ? Termination::step_cap_forced
                                : Termination::answer_action;
    episode.config_snapshot = j.value("config_snapshot", json::object());
    for (const auto& s : j.at("steps")) {
        AgentStep step;
        step.index = s.at("index").get<int>();
        step.reasoning = s.value("reasoning", "");
        step.observation = s.value("observation", "");
        step.duration_ms = s.value("duration_ms", std::int64_t{0});
        if (s.contains("error") && !s["error"].is_null()) {
            step.error = s["error"].get<std::string>();
        }
        const auto& action = s.at("action");
        try {
            step.call.kind = action_kind_from_string(action.at("name").get<std::string>());
        } catch (const Error&) {
            step.call.kind = ActionKind::Invalid;
        }
        step.call.parameters = action.value("parameters", json::object());
        episode.steps.push_back(std::move(step));
    }
    return episode;
}

} // namespace vidagent
