// SPDX-License-Identifier: Apache-2.0
#pragma once
// The three search tools over a VideoDatabase — global browse, clip search,
// frame inspect — plus the exact top-k cosine retrieval primitive.

#include "vidagent/model_gateway.hpp"
#include "vidagent/prompts.hpp"
#include "vidagent/video_store.hpp"

#include <map>
#include <set>
#include <string>
#include <vector>

namespace vidagent {

enum class ToolKind { GlobalBrowse, ClipSearch, FrameInspect };

std::string_view to_string(ToolKind kind);
ToolKind tool_kind_from_string(std::string_view name); // throws invalid-argument

struct ToolsetConfig {
    std::set<ToolKind> enabled{ToolKind::GlobalBrowse, ToolKind::ClipSearch,
                               ToolKind::FrameInspect};
    int default_k = 16;
    int max_k = 64;
    int frame_cap = 50;
    int event_summary_frames = 50;
    std::string vision_backend_id;
    std::string embed_backend_id;
};

struct GlobalSummary {
    std::string subject_summary;
    std::string event_summary;
    bool event_blocked = false; // content filter degraded the event side
};

struct ClipHit {
    int clip_index = 0;
    double start_s = 0.0;
    double end_s = 0.0;
    std::string caption;
    float score = 0.0f;
};

struct InspectResult {
    std::string answer;
    int frames_used = 0;
    double range_start_s = 0.0;
    double range_end_s = 0.0;
};

// Exact top-k by cosine similarity, ties broken by ascending row index.
// Zero-norm corpus rows sort after every scored row and report score -1.
// Throws dimension-mismatch, zero-norm-query, invalid-argument (k < 1).
std::vector<std::pair<Eigen::Index, float>> cosine_top_k(
    const Eigen::Ref<const Eigen::VectorXf>& query,
    const Eigen::Ref<const RowMatrixXf>& corpus, int k);

// n <= cap: 0..n-1. Otherwise cap indices round(j*(n-1)/(cap-1)), strictly
// increasing, first 0 and last n-1. cap == 1 selects just index 0.
std::vector<std::int64_t> sample_uniform(std::int64_t n, std::int64_t cap);

// Deterministic text rendering of the registry; "(no subjects)" when empty.
std::string render_subject_summary(const SubjectRegistry& registry);

// Machine-readable action schema: enabled tools plus the Answer action.
// Consumed by the agent's prompt and by the service's list_tools.
nlohmann::json action_schema(const ToolsetConfig& cfg);

// Tools bound to one database for one episode. The event-summary cache is
// confined to this instance; concurrent episodes use separate instances over
// the same immutable database.
class Toolset {
public:
    Toolset(const VideoDatabase& db, ToolsetConfig cfg, ModelGateway& gateway,
            const PromptLibrary& prompts, std::filesystem::path db_root = {});

    // Subject side is a pure render of the registry; the event side is one
    // vision call over frames sampled across the whole video, cached per
    // user query. A content-filter block degrades to the subject side only.
    GlobalSummary global_browse(const std::string& user_query);

    // Embeds the query once and returns min(k, clip count) exact top hits.
    std::vector<ClipHit> clip_search(const std::string& query, int k);

    // Answers a free-form question over the stored frames in [t_s, t_e],
    // subsampled to the frame cap. A content-filter block yields "[blocked]".
    InspectResult frame_inspect(const std::string& query, double t_s, double t_e);

    const ToolsetConfig& config() const { return cfg_; }
    const VideoDatabase& db() const { return db_; }

private:
    void require_enabled(ToolKind kind) const;

    const VideoDatabase& db_;
    ToolsetConfig cfg_;
    ModelGateway& gateway_;
    const PromptLibrary& prompts_;
    std::filesystem::path db_root_;
    std::map<std::string, GlobalSummary> event_cache_;
};

} // namespace vidagent
