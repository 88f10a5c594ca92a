// SPDX-License-Identifier: Apache-2.0
#pragma once
// Domain types and on-disk persistence for the multi-granular video database:
// per-clip captions and embeddings, the subject registry, and decoded frames.
//
// On-disk layout under <root>/:
//   manifest.json    database metadata, embedding row count and checksum
//   registry.json    subject registry
//   captions.jsonl   one record per clip: index, start_s, end_s, caption, transcript_text
//   embeddings.f32   N x d little-endian 32-bit floats, row-major
//   frames/<clip_index>/<timestamp_ms>.jpg

#include "vidagent/errors.hpp"

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <mutex>
#include <string>
#include <vector>

namespace vidagent {

using RowMatrixXf = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ClipInterval {
    int index = 0;
    double start_s = 0.0; // inclusive
    double end_s = 0.0;   // exclusive

    double length_s() const { return end_s - start_s; }
    bool contains(double t) const { return t >= start_s && t < end_s; }
    bool operator==(const ClipInterval&) const = default;
};

struct FrameRef {
    double timestamp_s = 0.0;  // millisecond grid, so paths round-trip exactly
    std::string image_path;    // relative to the database root
    int width_px = 0;
    int height_px = 0;

    bool operator==(const FrameRef&) const = default;
};

struct ClipRecord {
    ClipInterval interval;
    std::string caption;
    Eigen::RowVectorXf embedding;
    std::vector<FrameRef> frame_refs;
    std::string transcript_text;

    bool operator==(const ClipRecord& other) const;
};

// Caption text joined with the clip transcript when present; this is both the
// embedding input at build time and the caption surface returned by search.
std::string retrieval_text(const ClipRecord& clip);

struct TimeSpan {
    double start_s = 0.0;
    double end_s = 0.0;
    bool operator==(const TimeSpan&) const = default;
};

struct SubjectEntry {
    std::string name;
    std::string appearance;
    std::string identity;
    std::vector<std::string> actions;
    std::vector<TimeSpan> time_spans;

    bool operator==(const SubjectEntry&) const = default;
};

struct SubjectRegistry {
    std::vector<SubjectEntry> subjects;
    std::int64_t revision = 0; // number of clip steps applied

    SubjectEntry* find(std::string_view name);
    const SubjectEntry* find(std::string_view name) const;
    bool operator==(const SubjectRegistry&) const = default;
};

struct DatabaseManifest {
    std::string video_id;
    std::string source_path;
    double duration_s = 0.0;
    double clip_len_s = 5.0;
    double decode_fps = 2.0;
    int embedding_dim = 0;
    std::string embedding_model_id;
    std::string caption_model_id;
    int schema_version = 1;
    std::int64_t embedding_rows = 0;
    std::string embedding_checksum; // fnv1a64 hex of the raw f32 bytes

    bool operator==(const DatabaseManifest&) const = default;
};

constexpr int kSchemaVersion = 1;

struct VideoDatabase {
    DatabaseManifest manifest;
    SubjectRegistry registry;
    std::vector<ClipRecord> clips;

    VideoDatabase() = default;
    VideoDatabase(const VideoDatabase& other)
        : manifest(other.manifest), registry(other.registry), clips(other.clips) {}
    VideoDatabase& operator=(const VideoDatabase& other);

    // N x d matrix over all clip embeddings, assembled on first use. Safe to
    // call from concurrent readers of an otherwise immutable database.
    const RowMatrixXf& embedding_matrix() const;

    bool operator==(const VideoDatabase& other) const;

private:
    mutable std::mutex matrix_mutex_;
    mutable bool matrix_built_ = false;
    mutable RowMatrixXf matrix_cache_;
};

// Expected clip count for a duration: ceil(duration / clip_len), never leaving
// an empty trailing interval when the division lands on a whole number.
std::int64_t expected_clip_count(double duration_s, double clip_len_s);

struct ValidationOptions {
    std::filesystem::path root; // empty: skip frame-file existence checks
    int max_longer_side_px = 1280;
    int max_shorter_side_px = 720;
};

struct ValidationReport {
    struct Violation {
        std::string where;   // e.g. "clip 3", "frame clip 3 @2.5s", "registry"
        std::string message;
    };
    std::vector<Violation> violations;

    bool ok() const { return violations.empty(); }
    std::string to_string() const;
};

ValidationReport validate(const VideoDatabase& db, const ValidationOptions& opts = {});

// Persists the database layout under root. Frame images are written by the
// decode stage and are not rewritten here. Throws validation-error when the
// database violates its invariants, io-error on filesystem failure. Atomic
// per file (write-to-temp-then-rename); safe to call repeatedly.
void save(const VideoDatabase& db, const std::filesystem::path& root);

// Loads a saved layout. Throws not-found, schema-version-mismatch, or
// corrupt-layout (count or checksum mismatch). Embeddings are loaded with
// bit equality to what was saved.
VideoDatabase open(const std::filesystem::path& root);

// Recomputes manifest.embedding_rows and embedding_checksum from the clips.
// Builders call this before save so a reopened database compares equal.
void refresh_embedding_integrity(VideoDatabase& db);

// Rebuilds FrameRefs for one clip from <root>/frames/<clip_index>/,
// sorted by timestamp, with dimensions read from the JPEG headers.
std::vector<FrameRef> scan_clip_frames(const std::filesystem::path& root, int clip_index);

// Clip whose interval contains time_s. Throws out-of-range outside [0, duration).
const ClipRecord& clip_at(const VideoDatabase& db, double time_s);

// All clips whose interval intersects [start_s, end_s], clamped to
// [0, duration], ordered by index. Throws invalid-range when start_s > end_s.
std::vector<ClipRecord> clips_in_range(const VideoDatabase& db, double start_s, double end_s);

// JSON converters for the persisted pieces.
nlohmann::json manifest_to_json(const DatabaseManifest& m);
DatabaseManifest manifest_from_json(const nlohmann::json& j);
nlohmann::json registry_to_json(const SubjectRegistry& r);
SubjectRegistry registry_from_json(const nlohmann::json& j);
nlohmann::json subject_to_json(const SubjectEntry& s);
SubjectEntry subject_from_json(const nlohmann::json& j);
nlohmann::json caption_line_to_json(const ClipRecord& clip);

} // namespace vidagent
