// SPDX-License-Identifier: Apache-2.0
#pragma once
// The agent loop: the model reads the rendered history, produces reasoning
// plus one action, tool results come back as observations, and the episode
// ends with an Answer action or a forced answer at the step cap.

#include "vidagent/model_gateway.hpp"
#include "vidagent/prompts.hpp"
#include "vidagent/toolset.hpp"

#include <optional>
#include <string>
#include <vector>

namespace vidagent {

enum class ActionKind { GlobalBrowse, ClipSearch, FrameInspect, Answer, Invalid };

std::string_view to_string(ActionKind kind);
ActionKind action_kind_from_string(std::string_view name); // throws malformed-action

struct ActionCall {
    ActionKind kind = ActionKind::Invalid;
    nlohmann::json parameters = nlohmann::json::object();
    bool operator==(const ActionCall&) const = default;
};

struct AgentStep {
    int index = 0; // 1-based
    std::string reasoning;
    ActionCall call;
    std::string observation; // empty iff call.kind == Answer
    std::int64_t duration_ms = 0;
    std::optional<std::string> error; // typed error name when the step failed
};

enum class Termination { answer_action, step_cap_forced };

std::string_view to_string(Termination t);

struct AgentConfig {
    int max_steps = 15;
    std::string llm_backend_id;
    int malformed_action_retries = 1;
    std::size_t observation_cap_chars = 8000;
    std::filesystem::path prompts_dir = "prompts";
};

struct Episode {
    std::string user_query;
    std::vector<AgentStep> steps;
    std::string final_answer;
    Termination terminated_by = Termination::answer_action;
    nlohmann::json config_snapshot = nlohmann::json::object();
};

// Deterministic prompt rendering: preamble (role plus the action schema), the
// question, then one block per step. Field values are escaped onto single
// lines so the rendering is injective and parse_rendered_history inverts it.
std::string render_history(const std::string& query, const std::vector<AgentStep>& steps,
                           const nlohmann::json& schema, const PromptLibrary& prompts);

// The question-and-steps part alone, without the action preamble (the forced
// answer call pairs it with an answer-only instruction instead).
std::string render_history_body(const std::string& query, const std::vector<AgentStep>& steps);

struct RenderedStep {
    std::string reasoning;
    std::string action;
    std::string observation;
};

// Inverse of the step blocks in render_history (used to verify the escaping
// round-trips and for debugging rendered prompts).
std::vector<RenderedStep> parse_rendered_history(const std::string& rendered);

// Extracts the action from a model response: a structured tool call when
// present, otherwise a fenced ```action block containing JSON. Validates and
// normalizes parameters (k clamped to [1, max_k], times coerced to numbers).
// Throws malformed-action when neither form parses.
ActionCall parse_action(const ModelResponse& response, int default_k, int max_k);

// Reasoning text of a response: the text minus its fenced action block.
std::string reasoning_text(const ModelResponse& response);

// The answer-only call issued at the step cap. Backend failures (including
// content filtering) fall back to "[no-answer]".
std::string force_answer(const std::string& query, const std::vector<AgentStep>& steps,
                         ModelGateway& gateway, const AgentConfig& cfg,
                         const PromptLibrary& prompts);

// Runs one full episode against the given tools. Tool failures (disabled
// tools, invalid parameters, content filters) become observations; only a
// failing reasoning backend aborts, with episode-aborted.
Episode run_episode(const std::string& query, Toolset& tools, ModelGateway& gateway,
                    const AgentConfig& cfg, const PromptLibrary& prompts);

nlohmann::json episode_to_json(const Episode& episode, bool include_timing = true);
Episode episode_from_json(const nlohmann::json& j);

} // namespace vidagent
