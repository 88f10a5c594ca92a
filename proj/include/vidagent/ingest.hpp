// SPDX-License-Identifier: Apache-2.0
#pragma once
// Builds a VideoDatabase from a source video: uniform temporal segmentation,
// frame decoding into the frame store, progressive captioning that evolves the
// subject registry one clip at a time, caption embedding, and optional
// transcript enrichment. Builds checkpoint per clip and resume after
// interruption.

#include "vidagent/fsutil.hpp"
#include "vidagent/model_gateway.hpp"
#include "vidagent/prompts.hpp"
#include "vidagent/video_store.hpp"

#include <filesystem>
#include <functional>
#include <optional>

namespace vidagent {

struct IngestConfig {
    double clip_len_s = 5.0;
    double decode_fps = 2.0;
    int resize_shorter_side_px = 720;
    int resize_longer_side_px = 1280;
    std::optional<std::filesystem::path> transcript_path;
    std::string caption_backend_id;
    std::string embed_backend_id;
    std::filesystem::path prompts_dir = "prompts";
    std::string video_id; // defaults to the source filename stem
    // Malformed caption output is retried; after this many total attempts the
    // clip falls back to "[caption unavailable]" with an empty registry delta.
    int caption_attempts = 2;
    // External decoder command templates; see ExternalProcessDecoder. When
    // empty only the built-in synthetic format (*.video.json) is decodable.
    std::string decode_command;
    std::string probe_command;
};

struct TranscriptSegment {
    double start_s = 0.0;
    double end_s = 0.0;
    std::string text;
};

struct CaptionStepResult {
    std::string caption;
    std::vector<SubjectEntry> new_subjects;
    std::vector<SubjectEntry> updated_subjects;
};

// ceil(duration/clip_len) intervals tiling [0, duration); the final interval
// may be shorter. Throws invalid-argument on non-positive inputs.
std::vector<ClipInterval> segment(double duration_s, double clip_len_s);

// Output dimensions after the downscale rule: shorter side capped, longer side
// capped, aspect preserved, never upscaled.
ImageDims resize_target_dims(int width, int height, int shorter_cap, int longer_cap);

struct VideoInfo {
    double duration_s = 0.0;
    int width = 0;
    int height = 0;
};

class FrameDecoder {
public:
    virtual ~FrameDecoder() = default;
    virtual VideoInfo probe(const std::filesystem::path& source) = 0;
    // Decodes one clip's frames at `fps`, resized per config, into
    // <db_root>/frames/<clip_index>/<timestamp_ms>.jpg. Timestamps are
    // absolute, on the millisecond grid.
    virtual std::vector<FrameRef> decode_clip(const std::filesystem::path& source,
                                              const ClipInterval& interval, double fps,
                                              ImageDims source_dims, const IngestConfig& cfg,
                                              const std::filesystem::path& db_root) = 0;
};

// Deterministic decoder for the built-in synthetic source format: a JSON file
// {"duration_s": .., "width": .., "height": ..} standing in for a real video.
// Frames are placeholder JPEGs whose header carries the target dimensions and
// whose bytes are unique per (source, clip, timestamp).
class SyntheticDecoder : public FrameDecoder {
public:
    VideoInfo probe(const std::filesystem::path& source) override;
    std::vector<FrameRef> decode_clip(const std::filesystem::path& source,
                                      const ClipInterval& interval, double fps,
                                      ImageDims source_dims, const IngestConfig& cfg,
                                      const std::filesystem::path& db_root) override;
};

// Drives an external decoder binary (e.g. ffmpeg/ffprobe) per clip with an
// explicit seek. Command templates may use these placeholders:
//   {source} {start_s} {length_s} {fps} {width} {height} {out_pattern}
// probe_command must print the duration in seconds on stdout; decode_command
// must write sequentially numbered frames to {out_pattern}.
class ExternalProcessDecoder : public FrameDecoder {
public:
    ExternalProcessDecoder(std::string probe_command, std::string decode_command);

    VideoInfo probe(const std::filesystem::path& source) override;
    std::vector<FrameRef> decode_clip(const std::filesystem::path& source,
                                      const ClipInterval& interval, double fps,
                                      ImageDims source_dims, const IngestConfig& cfg,
                                      const std::filesystem::path& db_root) override;

private:
    std::string probe_command_;
    std::string decode_command_;
};

// Synthetic decoder for *.video.json sources, external decoder otherwise.
std::unique_ptr<FrameDecoder> make_decoder(const IngestConfig& cfg,
                                           const std::filesystem::path& source);

// One captioning step: prompts the caption backend with the clip's frames,
// the registry so far, and optional transcript context; parses the caption
// plus registry delta. Throws malformed-model-output when the delta still does
// not parse after cfg.caption_attempts tries.
CaptionStepResult caption_clip(const std::vector<FrameRef>& frames,
                               const SubjectRegistry& registry, const ClipInterval& interval,
                               const std::string& transcript_text, ModelGateway& gateway,
                               const IngestConfig& cfg, const PromptLibrary& prompts,
                               const std::filesystem::path& db_root);

// Parses the caption backend's structured output (JSON, possibly fenced).
CaptionStepResult parse_caption_output(const std::string& text);

// Applies a delta: new subjects are appended (an already-known name merges as
// an update instead), updated subjects merge actions and time spans into the
// existing entry. Subjects are never removed. Increments revision.
void apply_caption_delta(SubjectRegistry& registry, const CaptionStepResult& delta);

// Embeds one caption. Throws invalid-argument for empty text.
Eigen::VectorXf embed_caption(const std::string& caption, ModelGateway& gateway,
                              const std::string& backend_id);

// Fills transcript_text on every clip overlapped by a segment; all other clip
// fields are preserved. Segments must be sorted by start_s.
std::vector<ClipRecord> merge_transcript(std::vector<ClipRecord> clips,
                                         const std::vector<TranscriptSegment>& segments);

// JSON array of {start_s, end_s, text}, sorted by start_s after load.
std::vector<TranscriptSegment> load_transcript(const std::filesystem::path& path);

using ProgressFn = std::function<void(int clip_index, int clip_count, const std::string& stage)>;

// Full pipeline: probe, segment, decode (parallel), caption (sequential),
// embed (async, order-preserving), checkpointing each finished clip into
// out_root so an interrupted build resumes at the first unfinished clip.
// Returns the completed, validated database; its layout is saved at out_root.
VideoDatabase build_database(const std::filesystem::path& source, const IngestConfig& cfg,
                             ModelGateway& gateway, const std::filesystem::path& out_root,
                             const ProgressFn& progress = {});

} // namespace vidagent
