// SPDX-License-Identifier: Apache-2.0
#include "vidagent/video_store.hpp"

#include "vidagent/fsutil.hpp"
#include "vidagent/hashing.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace vidagent {

bool ClipRecord::operator==(const ClipRecord& other) const {
    if (!(interval == other.interval) || caption != other.caption ||
        frame_refs != other.frame_refs || transcript_text != other.transcript_text) {
        return false;
    }
    if (embedding.size() != other.embedding.size()) {
        return false;
    }
    // Bit-exact embedding comparison.
    return std::memcmp(embedding.data(), other.embedding.data(),
                       sizeof(float) * static_cast<std::size_t>(embedding.size())) == 0;
}

std::string retrieval_text(const ClipRecord& clip) {
    if (clip.transcript_text.empty()) {
        return clip.caption;
    }
    return clip.caption + "\n" + clip.transcript_text;
}

SubjectEntry* SubjectRegistry::find(std::string_view name) {
    for (auto& s : subjects) {
        if (s.name == name) {
            return &s;
        }
    }
    return nullptr;
}

const SubjectEntry* SubjectRegistry::find(std::string_view name) const {
    return const_cast<SubjectRegistry*>(this)->find(name);
}

VideoDatabase& VideoDatabase::operator=(const VideoDatabase& other) {
    if (this != &other) {
        manifest = other.manifest;
        registry = other.registry;
        clips = other.clips;
        std::lock_guard lock(matrix_mutex_);
        matrix_built_ = false;
        matrix_cache_.resize(0, 0);
    }
    return *this;
}

const RowMatrixXf& VideoDatabase::embedding_matrix() const {
    std::lock_guard lock(matrix_mutex_);
    if (!matrix_built_) {
        const auto rows = static_cast<Eigen::Index>(clips.size());
        const Eigen::Index cols = manifest.embedding_dim;
        matrix_cache_.resize(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i) {
            const auto& e = clips[static_cast<std::size_t>(i)].embedding;
            if (e.size() != cols) {
                throw Error(ErrorCode::dimension_mismatch,
                            "clip " + std::to_string(i) + " embedding has " +
                                std::to_string(e.size()) + " dims, manifest says " +
                                std::to_string(cols));
            }
            matrix_cache_.row(i) = e;
        }
        matrix_built_ = true;
    }
    return matrix_cache_;
}

bool VideoDatabase::operator==(const VideoDatabase& other) const {
    return manifest == other.manifest && registry == other.registry && clips == other.clips;
}

std::int64_t expected_clip_count(double duration_s, double clip_len_s) {
    if (!(duration_s > 0.0) || !(clip_len_s > 0.0)) {
        throw Error(ErrorCode::invalid_argument, "duration and clip length must be positive");
    }
    auto n = static_cast<std::int64_t>(std::ceil(duration_s / clip_len_s));
    if (n < 1) {
        n = 1;
    }
    // ceil can land one past the end when duration/clip_len rounds up from a
    // whole number; the final interval must stay non-empty.
    while (n > 1 && static_cast<double>(n - 1) * clip_len_s >= duration_s) {
        --n;
    }
    return n;
}

std::string ValidationReport::to_string() const {
    std::ostringstream out;
    for (const auto& v : violations) {
        out << v.where << ": " << v.message << "\n";
    }
    return out.str();
}

namespace {

std::string frame_where(int clip_index, const FrameRef& ref) {
    std::ostringstream out;
    out << "frame clip " << clip_index << " @" << ref.timestamp_s << "s " << ref.image_path;
    return out.str();
}

constexpr double kTimingEps = 1e-9;

} // namespace

ValidationReport validate(const VideoDatabase& db, const ValidationOptions& opts) {
    ValidationReport report;
    auto add = [&report](std::string where, std::string message) {
        report.violations.push_back({std::move(where), std::move(message)});
    };

    const auto& m = db.manifest;
    if (!(m.clip_len_s > 0.0)) {
        add("manifest", "clip_len_s must be positive");
    }
    if (!(m.decode_fps > 0.0)) {
        add("manifest", "decode_fps must be positive");
    }
    if (m.embedding_dim <= 0) {
        add("manifest", "embedding_dim must be positive");
    }
    if (!(m.duration_s > 0.0)) {
        add("manifest", "duration_s must be positive");
        return report; // the interval checks below are meaningless without it
    }

    const std::int64_t expected = (m.clip_len_s > 0.0)
        ? expected_clip_count(m.duration_s, m.clip_len_s)
        : 0;
    if (expected > 0 && static_cast<std::int64_t>(db.clips.size()) != expected) {
        add("database", "clip count " + std::to_string(db.clips.size()) + " != expected " +
                            std::to_string(expected));
    }

    // Interval tiling: start at i*t, contiguous, last ends at duration.
    for (std::size_t i = 0; i < db.clips.size(); ++i) {
        const auto& clip = db.clips[i];
        const std::string where = "clip " + std::to_string(i);
        if (clip.interval.index != static_cast<int>(i)) {
            add(where, "interval index " + std::to_string(clip.interval.index) +
                           " out of order");
        }
        if (!(clip.interval.end_s > clip.interval.start_s)) {
            add(where, "empty interval");
        }
        const double expected_start = static_cast<double>(i) * m.clip_len_s;
        if (std::abs(clip.interval.start_s - expected_start) > kTimingEps) {
            add(where, "start_s " + std::to_string(clip.interval.start_s) + " != index*t");
        }
        if (i + 1 < db.clips.size()) {
            const auto& next = db.clips[i + 1];
            if (std::abs(clip.interval.end_s - next.interval.start_s) > kTimingEps) {
                add("clip " + std::to_string(i) + "/clip " + std::to_string(i + 1),
                    "intervals do not tile (gap or overlap)");
            }
            if (std::abs(clip.interval.length_s() - m.clip_len_s) > kTimingEps) {
                add(where, "non-final clip length != clip_len_s");
            }
        } else if (std::abs(clip.interval.end_s - m.duration_s) > kTimingEps) {
            add(where, "last interval does not end at duration");
        }

        if (clip.embedding.size() != m.embedding_dim) {
            add(where, "embedding has " + std::to_string(clip.embedding.size()) +
                           " dims, expected " + std::to_string(m.embedding_dim));
        }

        double prev_ts = -1.0;
        bool first = true;
        for (const auto& ref : clip.frame_refs) {
            const std::string fwhere = frame_where(static_cast<int>(i), ref);
            if (ref.timestamp_s < clip.interval.start_s - kTimingEps ||
                ref.timestamp_s >= clip.interval.end_s) {
                add(fwhere, "timestamp outside clip interval");
            }
            if (!first && ref.timestamp_s <= prev_ts) {
                add(fwhere, "timestamps not strictly increasing");
            }
            prev_ts = ref.timestamp_s;
            first = false;
            const int longer = std::max(ref.width_px, ref.height_px);
            const int shorter = std::min(ref.width_px, ref.height_px);
            if (longer > opts.max_longer_side_px || shorter > opts.max_shorter_side_px) {
                add(fwhere, "frame dimensions " + std::to_string(ref.width_px) + "x" +
                                std::to_string(ref.height_px) + " exceed resize target");
            }
            if (!opts.root.empty() && !fs::exists(opts.root / ref.image_path)) {
                add(fwhere, "image file missing: " + ref.image_path);
            }
        }
    }

    // Registry invariants.
    std::set<std::string> names;
    for (const auto& subject : db.registry.subjects) {
        const std::string where = "registry subject '" + subject.name + "'";
        if (!names.insert(subject.name).second) {
            add(where, "duplicate subject name");
        }
        for (const auto& span : subject.time_spans) {
            if (!(span.start_s < span.end_s)) {
                add(where, "time span start >= end");
            }
            if (span.start_s < -kTimingEps || span.end_s > m.duration_s + kTimingEps) {
                add(where, "time span outside video duration");
            }
        }
    }
    if (db.registry.revision > static_cast<std::int64_t>(db.clips.size())) {
        add("registry", "revision " + std::to_string(db.registry.revision) +
                            " exceeds clip count");
    }

    return report;
}

// --- JSON converters ---------------------------------------------------------

json manifest_to_json(const DatabaseManifest& m) {
    return json{{"video_id", m.video_id},
                {"source_path", m.source_path},
                {"duration_s", m.duration_s},
                {"clip_len_s", m.clip_len_s},
                {"decode_fps", m.decode_fps},
                {"embedding_dim", m.embedding_dim},
                {"embedding_model_id", m.embedding_model_id},
                {"caption_model_id", m.caption_model_id},
                {"schema_version", m.schema_version},
                {"embedding_rows", m.embedding_rows},
                {"embedding_checksum", m.embedding_checksum}};
}

DatabaseManifest manifest_from_json(const json& j) {
    DatabaseManifest m;
    m.video_id = j.at("video_id").get<std::string>();
    m.source_path = j.at("source_path").get<std::string>();
    m.duration_s = j.at("duration_s").get<double>();
    m.clip_len_s = j.at("clip_len_s").get<double>();
    m.decode_fps = j.at("decode_fps").get<double>();
    m.embedding_dim = j.at("embedding_dim").get<int>();
    m.embedding_model_id = j.at("embedding_model_id").get<std::string>();
    m.caption_model_id = j.at("caption_model_id").get<std::string>();
    m.schema_version = j.at("schema_version").get<int>();
    m.embedding_rows = j.at("embedding_rows").get<std::int64_t>();
    m.embedding_checksum = j.at("embedding_checksum").get<std::string>();
    return m;
}

json subject_to_json(const SubjectEntry& s) {
    json spans = json::array();
    for (const auto& span : s.time_spans) {
        spans.push_back(json::array({span.start_s, span.end_s}));
    }
    return json{{"name", s.name},
                {"appearance", s.appearance},
                {"identity", s.identity},
                {"actions", s.actions},
                {"time_spans", spans}};
}

SubjectEntry subject_from_json(const json& j) {
    SubjectEntry s;
    s.name = j.at("name").get<std::string>();
    s.appearance = j.value("appearance", "");
    s.identity = j.value("identity", "");
    s.actions = j.value("actions", std::vector<std::string>{});
    for (const auto& span : j.value("time_spans", json::array())) {
        s.time_spans.push_back({span.at(0).get<double>(), span.at(1).get<double>()});
    }
    return s;
}

json registry_to_json(const SubjectRegistry& r) {
    json subjects = json::array();
    for (const auto& s : r.subjects) {
        subjects.push_back(subject_to_json(s));
    }
    return json{{"revision", r.revision}, {"subjects", subjects}};
}

SubjectRegistry registry_from_json(const json& j) {
    SubjectRegistry r;
    r.revision = j.at("revision").get<std::int64_t>();
    for (const auto& s : j.at("subjects")) {
        r.subjects.push_back(subject_from_json(s));
    }
    return r;
}

json caption_line_to_json(const ClipRecord& clip) {
    return json{{"index", clip.interval.index},
                {"start_s", clip.interval.start_s},
                {"end_s", clip.interval.end_s},
                {"caption", clip.caption},
                {"transcript_text", clip.transcript_text}};
}

// --- Persistence --------------------------------------------------------------

namespace {

std::string embeddings_to_bytes(const VideoDatabase& db) {
    const std::size_t dim = static_cast<std::size_t>(db.manifest.embedding_dim);
    std::string bytes;
    bytes.reserve(db.clips.size() * dim * sizeof(float));
    for (const auto& clip : db.clips) {
        bytes.append(reinterpret_cast<const char*>(clip.embedding.data()),
                     static_cast<std::size_t>(clip.embedding.size()) * sizeof(float));
    }
    return bytes;
}

} // namespace

void save(const VideoDatabase& db, const fs::path& root) {
    auto report = validate(db, {.root = root});
    // Frame files may be pending when a caller saves metadata first; missing
    // image files stay a validation concern for `validate`, but everything
    // else blocks the save.
    for (const auto& v : report.violations) {
        if (v.message.rfind("image file missing", 0) != 0) {
            throw Error(ErrorCode::validation_error, v.where + ": " + v.message);
        }
    }

    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec) {
        throw Error(ErrorCode::io_error, "cannot create " + root.string());
    }

    const std::string bytes = embeddings_to_bytes(db);
    DatabaseManifest manifest = db.manifest;
    manifest.embedding_rows = static_cast<std::int64_t>(db.clips.size());
    manifest.embedding_checksum = to_hex64(fnv1a64(bytes.data(), bytes.size()));

    std::string captions;
    for (const auto& clip : db.clips) {
        captions += caption_line_to_json(clip).dump();
        captions += "\n";
    }

    atomic_write_file(root / "embeddings.f32", bytes);
    atomic_write_file(root / "captions.jsonl", captions);
    atomic_write_file(root / "registry.json", registry_to_json(db.registry).dump(2) + "\n");
    atomic_write_file(root / "manifest.json", manifest_to_json(manifest).dump(2) + "\n");
}

void refresh_embedding_integrity(VideoDatabase& db) {
    const std::string bytes = embeddings_to_bytes(db);
    db.manifest.embedding_rows = static_cast<std::int64_t>(db.clips.size());
    db.manifest.embedding_checksum = to_hex64(fnv1a64(bytes.data(), bytes.size()));
}

std::vector<FrameRef> scan_clip_frames(const fs::path& root, int clip_index) {
    std::vector<FrameRef> refs;
    const fs::path dir = root / "frames" / std::to_string(clip_index);
    if (!fs::exists(dir)) {
        return refs;
    }
    std::vector<std::int64_t> stamps;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".jpg") {
            continue;
        }
        const std::string stem = entry.path().stem().string();
        if (stem.empty() || stem.find_first_not_of("0123456789") != std::string::npos) {
            continue;
        }
        stamps.push_back(std::stoll(stem));
    }
    std::sort(stamps.begin(), stamps.end());
    refs.reserve(stamps.size());
    for (std::int64_t ms : stamps) {
        FrameRef ref;
        ref.timestamp_s = static_cast<double>(ms) / 1000.0;
        ref.image_path = "frames/" + std::to_string(clip_index) + "/" + std::to_string(ms) + ".jpg";
        auto dims = read_jpeg_dimensions(root / ref.image_path);
        ref.width_px = dims.width;
        ref.height_px = dims.height;
        refs.push_back(std::move(ref));
    }
    return refs;
}

VideoDatabase open(const fs::path& root) {
    const fs::path manifest_path = root / "manifest.json";
    if (!fs::exists(manifest_path)) {
        throw Error(ErrorCode::not_found, "no database manifest at " + manifest_path.string());
    }

    VideoDatabase db;
    try {
        db.manifest = manifest_from_json(json::parse(read_file(manifest_path)));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::corrupt_layout, "manifest.json: " + std::string(e.what()));
    }
    if (db.manifest.schema_version != kSchemaVersion) {
        throw Error(ErrorCode::schema_version_mismatch,
                    "schema version " + std::to_string(db.manifest.schema_version) +
                        ", this build reads version " + std::to_string(kSchemaVersion));
    }

    std::int64_t expected = 0;
    try {
        expected = expected_clip_count(db.manifest.duration_s, db.manifest.clip_len_s);
    } catch (const Error&) {
        throw Error(ErrorCode::corrupt_layout, "manifest has non-positive duration or clip length");
    }

    try {
        db.registry = registry_from_json(json::parse(read_file(root / "registry.json")));
    } catch (const Error&) {
        throw Error(ErrorCode::corrupt_layout, "registry.json missing");
    } catch (const json::exception& e) {
        throw Error(ErrorCode::corrupt_layout, "registry.json: " + std::string(e.what()));
    }

    std::vector<std::string> lines;
    try {
        lines = read_lines(root / "captions.jsonl");
    } catch (const Error&) {
        throw Error(ErrorCode::corrupt_layout, "captions.jsonl missing");
    }
    if (static_cast<std::int64_t>(lines.size()) != expected) {
        throw Error(ErrorCode::corrupt_layout,
                    "captions.jsonl has " + std::to_string(lines.size()) + " records, manifest implies " +
                        std::to_string(expected));
    }
    if (db.manifest.embedding_rows != expected) {
        throw Error(ErrorCode::corrupt_layout,
                    "manifest embedding_rows " + std::to_string(db.manifest.embedding_rows) +
                        " != expected clip count " + std::to_string(expected));
    }

    std::string bytes;
    try {
        bytes = read_file(root / "embeddings.f32");
    } catch (const Error&) {
        throw Error(ErrorCode::corrupt_layout, "embeddings.f32 missing");
    }
    const std::size_t dim = static_cast<std::size_t>(db.manifest.embedding_dim);
    if (bytes.size() != static_cast<std::size_t>(expected) * dim * sizeof(float)) {
        throw Error(ErrorCode::corrupt_layout,
                    "embeddings.f32 has " + std::to_string(bytes.size()) + " bytes, expected " +
                        std::to_string(static_cast<std::size_t>(expected) * dim * sizeof(float)));
    }
    const std::string checksum = to_hex64(fnv1a64(bytes.data(), bytes.size()));
    if (checksum != db.manifest.embedding_checksum) {
        throw Error(ErrorCode::corrupt_layout, "embedding checksum mismatch: file " + checksum +
                                                   " vs manifest " + db.manifest.embedding_checksum);
    }

    db.clips.reserve(static_cast<std::size_t>(expected));
    for (std::int64_t i = 0; i < expected; ++i) {
        json line;
        try {
            line = json::parse(lines[static_cast<std::size_t>(i)]);
        } catch (const json::exception& e) {
            throw Error(ErrorCode::corrupt_layout,
                        "captions.jsonl line " + std::to_string(i + 1) + ": " + e.what());
        }
        ClipRecord clip;
        clip.interval.index = line.at("index").get<int>();
        if (clip.interval.index != static_cast<int>(i)) {
            throw Error(ErrorCode::corrupt_layout,
                        "captions.jsonl line " + std::to_string(i + 1) + " has index " +
                            std::to_string(clip.interval.index));
        }
        clip.interval.start_s = line.at("start_s").get<double>();
        clip.interval.end_s = line.at("end_s").get<double>();
        clip.caption = line.at("caption").get<std::string>();
        clip.transcript_text = line.value("transcript_text", "");

        clip.embedding.resize(static_cast<Eigen::Index>(dim));
        std::memcpy(clip.embedding.data(), bytes.data() + static_cast<std::size_t>(i) * dim * sizeof(float),
                    dim * sizeof(float));
        clip.frame_refs = scan_clip_frames(root, static_cast<int>(i));
        db.clips.push_back(std::move(clip));
    }

    auto report = validate(db, {.root = root});
    if (!report.ok()) {
        const auto& v = report.violations.front();
        throw Error(ErrorCode::corrupt_layout, v.where + ": " + v.message);
    }
    return db;
}

const ClipRecord& clip_at(const VideoDatabase& db, double time_s) {
    if (time_s < 0.0 || time_s >= db.manifest.duration_s || db.clips.empty()) {
        throw Error(ErrorCode::out_of_range,
                    "time " + std::to_string(time_s) + "s outside [0, " +
                        std::to_string(db.manifest.duration_s) + ")");
    }
    auto index = static_cast<std::int64_t>(std::floor(time_s / db.manifest.clip_len_s));
    index = std::clamp<std::int64_t>(index, 0, static_cast<std::int64_t>(db.clips.size()) - 1);
    return db.clips[static_cast<std::size_t>(index)];
}

std::vector<ClipRecord> clips_in_range(const VideoDatabase& db, double start_s, double end_s) {
    if (start_s > end_s) {
        throw Error(ErrorCode::invalid_range,
                    "start " + std::to_string(start_s) + " > end " + std::to_string(end_s));
    }
    const double a = std::clamp(start_s, 0.0, db.manifest.duration_s);
    const double b = std::clamp(end_s, 0.0, db.manifest.duration_s);
    std::vector<ClipRecord> out;
    for (const auto& clip : db.clips) {
        if (a < clip.interval.end_s && b >= clip.interval.start_s) {
            out.push_back(clip);
        }
    }
    return out;
}

} // namespace vidagent
