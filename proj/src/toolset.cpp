// SPDX-License-Identifier: Apache-2.0
#include "vidagent/toolset.hpp"

#include "vidagent/strings.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

using nlohmann::json;

namespace vidagent {

std::string_view to_string(ToolKind kind) {
    switch (kind) {
        case ToolKind::GlobalBrowse: return "GlobalBrowse";
        case ToolKind::ClipSearch: return "ClipSearch";
        case ToolKind::FrameInspect: return "FrameInspect";
    }
    return "GlobalBrowse";
}

ToolKind tool_kind_from_string(std::string_view name) {
    const std::string lower = to_lower(name);
    if (lower == "globalbrowse" || lower == "global_browse") return ToolKind::GlobalBrowse;
    if (lower == "clipsearch" || lower == "clip_search") return ToolKind::ClipSearch;
    if (lower == "frameinspect" || lower == "frame_inspect") return ToolKind::FrameInspect;
    throw Error(ErrorCode::invalid_argument, "unknown tool: " + std::string(name));
}

std::vector<std::pair<Eigen::Index, float>> cosine_top_k(
    const Eigen::Ref<const Eigen::VectorXf>& query, const Eigen::Ref<const RowMatrixXf>& corpus,
    int k) {
    if (k < 1) {
        throw Error(ErrorCode::invalid_argument, "k must be >= 1");
    }
    if (corpus.cols() != query.size()) {
        throw Error(ErrorCode::dimension_mismatch,
                    "query has " + std::to_string(query.size()) + " dims, corpus has " +
                        std::to_string(corpus.cols()));
    }
    const Eigen::VectorXd q = query.cast<double>();
    const double q_norm = q.norm();
    if (q_norm == 0.0) {
        throw Error(ErrorCode::zero_norm_query, "query vector has zero norm");
    }

    const Eigen::Index n = corpus.rows();
    // Scores accumulate in double so ranking is stable against float noise.
    Eigen::VectorXd dots = corpus.cast<double>() * q;
    Eigen::VectorXd norms = corpus.cast<double>().rowwise().norm();

    struct Scored {
        Eigen::Index index;
        double score;
        bool zero_norm;
    };
    std::vector<Scored> scored(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        const bool zero = norms[i] == 0.0;
        scored[static_cast<std::size_t>(i)] = {
            i, zero ? -1.0 : dots[i] / (norms[i] * q_norm), zero};
    }
    auto better = [](const Scored& a, const Scored& b) {
        if (a.zero_norm != b.zero_norm) {
            return !a.zero_norm; // zero-norm rows rank last
        }
        if (a.score != b.score) {
            return a.score > b.score;
        }
        return a.index < b.index;
    };

    const auto take = static_cast<std::size_t>(std::min<Eigen::Index>(k, n));
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take),
                      scored.end(), better);

    std::vector<std::pair<Eigen::Index, float>> out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        out.emplace_back(scored[i].index, static_cast<float>(scored[i].score));
    }
    return out;
}

std::vector<std::int64_t> sample_uniform(std::int64_t n, std::int64_t cap) {
    if (n < 1 || cap < 1) {
        throw Error(ErrorCode::invalid_argument, "n and cap must be >= 1");
    }
    std::vector<std::int64_t> indices;
    if (n <= cap) {
        indices.resize(static_cast<std::size_t>(n));
        std::iota(indices.begin(), indices.end(), 0);
        return indices;
    }
    if (cap == 1) {
        return {0};
    }
    indices.reserve(static_cast<std::size_t>(cap));
    for (std::int64_t j = 0; j < cap; ++j) {
        indices.push_back(std::llround(static_cast<double>(j) * static_cast<double>(n - 1) /
                                       static_cast<double>(cap - 1)));
    }
    return indices;
}

std::string render_subject_summary(const SubjectRegistry& registry) {
    if (registry.subjects.empty()) {
        return "(no subjects)";
    }
    std::ostringstream out;
    out << "Subjects (" << registry.subjects.size() << "):\n";
    for (const auto& s : registry.subjects) {
        out << "- " << s.name;
        if (!s.appearance.empty()) {
            out << ": " << s.appearance;
        }
        if (!s.identity.empty()) {
            out << "; " << s.identity;
        }
        if (!s.actions.empty()) {
            out << "; actions: ";
            for (std::size_t i = 0; i < s.actions.size(); ++i) {
                if (i > 0) {
                    out << ", ";
                }
                out << s.actions[i];
            }
        }
        if (!s.time_spans.empty()) {
            out << "; seen: ";
            for (std::size_t i = 0; i < s.time_spans.size(); ++i) {
                if (i > 0) {
                    out << ", ";
                }
                out << format_seconds(s.time_spans[i].start_s) << "-"
                    << format_seconds(s.time_spans[i].end_s) << " s";
            }
        }
        out << "\n";
    }
    return out.str();
}

json action_schema(const ToolsetConfig& cfg) {
    json actions = json::array();
    if (cfg.enabled.count(ToolKind::GlobalBrowse)) {
        actions.push_back(
            {{"name", "GlobalBrowse"},
             {"description",
              "Global overview of the video: the subject catalog plus an event summary "
              "focused on the user's question. Takes no parameters."},
             {"parameters", json::object()}});
    }
    if (cfg.enabled.count(ToolKind::ClipSearch)) {
        actions.push_back(
            {{"name", "ClipSearch"},
             {"description",
              "Semantic search over clip captions; returns the top-k clips with captions "
              "and time ranges."},
             {"parameters",
              {{"query", {{"type", "string"}, {"required", true},
                          {"description", "search query"}}},
               {"k", {{"type", "integer"}, {"required", false}, {"default", cfg.default_k},
                      {"minimum", 1}, {"maximum", cfg.max_k},
                      {"description", "number of clips to return"}}}}}});
    }
    if (cfg.enabled.count(ToolKind::FrameInspect)) {
        actions.push_back(
            {{"name", "FrameInspect"},
             {"description",
              "Answer a visual question from the stored frames in a time range "
              "[t_s, t_e] (seconds)."},
             {"parameters",
              {{"query", {{"type", "string"}, {"required", true},
                          {"description", "visual question"}}},
               {"t_s", {{"type", "number"}, {"required", true},
                        {"description", "range start in seconds"}}},
               {"t_e", {{"type", "number"}, {"required", true},
                        {"description", "range end in seconds"}}}}}});
    }
    actions.push_back({{"name", "Answer"},
                       {"description", "Finish with the final answer to the user's question."},
                       {"parameters",
                        {{"answer", {{"type", "string"}, {"required", true},
                                     {"description", "the final answer"}}}}}});
    return actions;
}

Toolset::Toolset(const VideoDatabase& db, ToolsetConfig cfg, ModelGateway& gateway,
                 const PromptLibrary& prompts, std::filesystem::path db_root)
    : db_(db), cfg_(std::move(cfg)), gateway_(gateway), prompts_(prompts),
      db_root_(std::move(db_root)) {
    if (cfg_.default_k < 1 || cfg_.default_k > cfg_.max_k) {
        throw Error(ErrorCode::invalid_argument,
                    "default_k must lie in [1, max_k], got " + std::to_string(cfg_.default_k));
    }
    if (cfg_.frame_cap < 1 || cfg_.event_summary_frames < 1) {
        throw Error(ErrorCode::invalid_argument, "frame caps must be positive");
    }
}

void Toolset::require_enabled(ToolKind kind) const {
    if (!cfg_.enabled.count(kind)) {
        throw Error(ErrorCode::tool_disabled, std::string(to_string(kind)) + " is disabled");
    }
}

GlobalSummary Toolset::global_browse(const std::string& user_query) {
    require_enabled(ToolKind::GlobalBrowse);

    if (auto it = event_cache_.find(user_query); it != event_cache_.end()) {
        return it->second;
    }

    GlobalSummary summary;
    summary.subject_summary = render_subject_summary(db_.registry);

    std::vector<const FrameRef*> all_frames;
    for (const auto& clip : db_.clips) {
        for (const auto& ref : clip.frame_refs) {
            all_frames.push_back(&ref);
        }
    }
    if (all_frames.empty()) {
        summary.event_summary = "(no stored frames)";
        event_cache_[user_query] = summary;
        return summary;
    }

    const auto picks = sample_uniform(static_cast<std::int64_t>(all_frames.size()),
                                      cfg_.event_summary_frames);
    ModelRequest req;
    req.backend_id = cfg_.vision_backend_id;
    req.messages = {{"user", prompts_.render("event_summary_v1", {{"query", user_query}})}};
    for (auto idx : picks) {
        req.image_attachments.push_back(db_root_ /
                                        all_frames[static_cast<std::size_t>(idx)]->image_path);
    }
    try {
        summary.event_summary = gateway_.complete(req).text;
    } catch (const Error& e) {
        if (e.code() != ErrorCode::content_filtered) {
            throw;
        }
        summary.event_summary = "";
        summary.event_blocked = true;
    }
    event_cache_[user_query] = summary;
    return summary;
}

std::vector<ClipHit> Toolset::clip_search(const std::string& query, int k) {
    require_enabled(ToolKind::ClipSearch);
    if (k < 1 || k > cfg_.max_k) {
        throw Error(ErrorCode::invalid_k,
                    "k=" + std::to_string(k) + " outside [1, " + std::to_string(cfg_.max_k) + "]");
    }

    const Eigen::VectorXf q = gateway_.embed(cfg_.embed_backend_id, {query}).at(0);
    if (q.size() != db_.manifest.embedding_dim) {
        throw Error(ErrorCode::dimension_mismatch,
                    "query embedding has " + std::to_string(q.size()) + " dims, database has " +
                        std::to_string(db_.manifest.embedding_dim));
    }

    const auto ranked = cosine_top_k(q, db_.embedding_matrix(),
                                     std::min<int>(k, static_cast<int>(db_.clips.size())));
    std::vector<ClipHit> hits;
    hits.reserve(ranked.size());
    for (const auto& [index, score] : ranked) {
        const auto& clip = db_.clips[static_cast<std::size_t>(index)];
        ClipHit hit;
        hit.clip_index = clip.interval.index;
        hit.start_s = clip.interval.start_s;
        hit.end_s = clip.interval.end_s;
        hit.caption = retrieval_text(clip);
        hit.score = score;
        hits.push_back(std::move(hit));
    }
    return hits;
}

InspectResult Toolset::frame_inspect(const std::string& query, double t_s, double t_e) {
    require_enabled(ToolKind::FrameInspect);
    const double a = std::clamp(t_s, 0.0, db_.manifest.duration_s);
    const double b = std::clamp(t_e, 0.0, db_.manifest.duration_s);
    if (a > b) {
        throw Error(ErrorCode::invalid_range,
                    "t_s " + format_seconds(t_s) + " > t_e " + format_seconds(t_e));
    }

    std::vector<const FrameRef*> in_range;
    for (const auto& clip : db_.clips) {
        for (const auto& ref : clip.frame_refs) {
            if (ref.timestamp_s >= a && ref.timestamp_s <= b) {
                in_range.push_back(&ref);
            }
        }
    }
    if (in_range.empty()) {
        throw Error(ErrorCode::empty_range,
                    "no stored frames in [" + format_seconds(a) + ", " + format_seconds(b) + "]");
    }

    std::vector<const FrameRef*> selected;
    if (static_cast<std::int64_t>(in_range.size()) > cfg_.frame_cap) {
        for (auto idx : sample_uniform(static_cast<std::int64_t>(in_range.size()), cfg_.frame_cap)) {
            selected.push_back(in_range[static_cast<std::size_t>(idx)]);
        }
    } else {
        selected = in_range;
    }

    ModelRequest req;
    req.backend_id = cfg_.vision_backend_id;
    req.messages = {{"user", prompts_.render("frame_inspect_v1",
                                             {{"query", query},
                                              {"start_s", format_seconds(a)},
                                              {"end_s", format_seconds(b)},
                                              {"frame_count", std::to_string(selected.size())}})}};
    for (const auto* ref : selected) {
        req.image_attachments.push_back(db_root_ / ref->image_path);
    }

    InspectResult result;
    result.frames_used = static_cast<int>(selected.size());
    result.range_start_s = a;
    result.range_end_s = b;
    try {
        result.answer = gateway_.complete(req).text;
    } catch (const Error& e) {
        if (e.code() != ErrorCode::content_filtered) {
            throw;
        }
        result.answer = "[blocked]";
    }
    return result;
}

} // namespace vidagent
