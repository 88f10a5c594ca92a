// SPDX-License-Identifier: Apache-2.0
#include "vidagent/ingest.hpp"

#include "vidagent/fsutil.hpp"
#include "vidagent/strings.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <future>
#include <iostream>
#include <thread>

namespace fs = std::filesystem;
using nlohmann::json;

namespace vidagent {

std::vector<ClipInterval> segment(double duration_s, double clip_len_s) {
    const std::int64_t count = expected_clip_count(duration_s, clip_len_s);
    std::vector<ClipInterval> intervals;
    intervals.reserve(static_cast<std::size_t>(count));
    for (std::int64_t i = 0; i < count; ++i) {
        ClipInterval iv;
        iv.index = static_cast<int>(i);
        iv.start_s = static_cast<double>(i) * clip_len_s;
        iv.end_s = std::min(static_cast<double>(i + 1) * clip_len_s, duration_s);
        intervals.push_back(iv);
    }
    return intervals;
}

ImageDims resize_target_dims(int width, int height, int shorter_cap, int longer_cap) {
    if (width <= 0 || height <= 0) {
        throw Error(ErrorCode::invalid_argument, "source dimensions must be positive");
    }
    const int shorter = std::min(width, height);
    const int longer = std::max(width, height);
    double scale = 1.0;
    if (shorter_cap > 0) {
        scale = std::min(scale, static_cast<double>(shorter_cap) / shorter);
    }
    if (longer_cap > 0) {
        scale = std::min(scale, static_cast<double>(longer_cap) / longer);
    }
    ImageDims out;
    out.width = std::max(1, static_cast<int>(std::lround(width * scale)));
    out.height = std::max(1, static_cast<int>(std::lround(height * scale)));
    return out;
}

// --- Synthetic decoder -------------------------------------------------------

namespace {

// Baseline JPEG template (64x36). The synthetic decoder patches the SOF
// dimensions to the target size and inserts a COM segment so every frame's
// bytes are unique; pixel data is a fixed placeholder.
constexpr unsigned char kJpegTemplate[] = {
    0xff, 0xd8, 0xff, 0xe0, 0x00, 0x10, 0x4a, 0x46, 0x49, 0x46, 0x00, 0x01,
    0x01, 0x00, 0x00, 0x01, 0x00, 0x01, 0x00, 0x00, 0xff, 0xdb, 0x00, 0x43,
    0x00, 0x0a, 0x07, 0x07, 0x08, 0x07, 0x06, 0x0a, 0x08, 0x08, 0x08, 0x0b,
    0x0a, 0x0a, 0x0b, 0x0e, 0x18, 0x10, 0x0e, 0x0d, 0x0d, 0x0e, 0x1d, 0x15,
    0x16, 0x11, 0x18, 0x23, 0x1f, 0x25, 0x24, 0x22, 0x1f, 0x22, 0x21, 0x26,
    0x2b, 0x37, 0x2f, 0x26, 0x29, 0x34, 0x29, 0x21, 0x22, 0x30, 0x41, 0x31,
    0x34, 0x39, 0x3b, 0x3e, 0x3e, 0x3e, 0x25, 0x2e, 0x44, 0x49, 0x43, 0x3c,
    0x48, 0x37, 0x3d, 0x3e, 0x3b, 0xff, 0xdb, 0x00, 0x43, 0x01, 0x0a, 0x0b,
    0x0b, 0x0e, 0x0d, 0x0e, 0x1c, 0x10, 0x10, 0x1c, 0x3b, 0x28, 0x22, 0x28,
    0x3b, 0x3b, 0x3b, 0x3b, 0x3b, 0x3b, 0x3b, 0x3b, 0x3b, 0x3b, 0x3b, 0x3b,
    0x3b, 0x3b, 0x3b, 0x3b, 0x3b, 0x3b, 0x3b, 0x3b, 0x3b, 0x3b, 0x3b, 0x3b,
    0x3b, 0x3b, 0x3b, 0x3b, 0x3b, 0x3b, 0x3b, 0x3b, 0x3b, 0x3b, 0x3b, 0x3b,
    0x3b, 0x3b, 0x3b, 0x3b, 0x3b, 0x3b, 0x3b, 0x3b, 0x3b, 0x3b, 0x3b, 0x3b,
    0x3b, 0x3b, 0xff, 0xc0, 0x00, 0x11, 0x08, 0x00, 0x24, 0x00, 0x40, 0x03,
    0x01, 0x22, 0x00, 0x02, 0x11, 0x01, 0x03, 0x11, 0x01, 0xff, 0xc4, 0x00,
    0x1f, 0x00, 0x00, 0x01, 0x05, 0x01, 0x01, 0x01, 0x01, 0x01, 0x01, 0x00,
    0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x01, 0x02, 0x03, 0x04, 0x05,
    0x06, 0x07, 0x08, 0x09, 0x0a, 0x0b, 0xff, 0xc4, 0x00, 0xb5, 0x10, 0x00,
    0x02, 0x01, 0x03, 0x03, 0x02, 0x04, 0x03, 0x05, 0x05, 0x04, 0x04, 0x00,
    0x00, 0x01, 0x7d, 0x01, 0x02, 0x03, 0x00, 0x04, 0x11, 0x05, 0x12, 0x21,
    0x31, 0x41, 0x06, 0x13, 0x51, 0x61, 0x07, 0x22, 0x71, 0x14, 0x32, 0x81,
    0x91, 0xa1, 0x08, 0x23, 0x42, 0xb1, 0xc1, 0x15, 0x52, 0xd1, 0xf0, 0x24,
    0x33, 0x62, 0x72, 0x82, 0x09, 0x0a, 0x16, 0x17, 0x18, 0x19, 0x1a, 0x25,
    0x26, 0x27, 0x28, 0x29, 0x2a, 0x34, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3a,
    0x43, 0x44, 0x45, 0x46, 0x47, 0x48, 0x49, 0x4a, 0x53, 0x54, 0x55, 0x56,
    0x57, 0x58, 0x59, 0x5a, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68, 0x69, 0x6a,
    0x73, 0x74, 0x75, 0x76, 0x77, 0x78, 0x79, 0x7a, 0x83, 0x84, 0x85, 0x86,
    0x87, 0x88, 0x89, 0x8a, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99,
    0x9a, 0xa2, 0xa3, 0xa4, 0xa5, 0xa6, 0xa7, 0xa8, 0xa9, 0xaa, 0xb2, 0xb3,
    0xb4, 0xb5, 0xb6, 0xb7, 0xb8, 0xb9, 0xba, 0xc2, 0xc3, 0xc4, 0xc5, 0xc6,
    0xc7, 0xc8, 0xc9, 0xca, 0xd2, 0xd3, 0xd4, 0xd5, 0xd6, 0xd7, 0xd8, 0xd9,
    0xda, 0xe1, 0xe2, 0xe3, 0xe4, 0xe5, 0xe6, 0xe7, 0xe8, 0xe9, 0xea, 0xf1,
    0xf2, 0xf3, 0xf4, 0xf5, 0xf6, 0xf7, 0xf8, 0xf9, 0xfa, 0xff, 0xc4, 0x00,
    0x1f, 0x01, 0x00, 0x03, 0x01, 0x01, 0x01, 0x01, 0x01, 0x01, 0x01, 0x01,
    0x01, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x01, 0x02, 0x03, 0x04, 0x05,
    0x06, 0x07, 0x08, 0x09, 0x0a, 0x0b, 0xff, 0xc4, 0x00, 0xb5, 0x11, 0x00,
    0x02, 0x01, 0x02, 0x04, 0x04, 0x03, 0x04, 0x07, 0x05, 0x04, 0x04, 0x00,
    0x01, 0x02, 0x77, 0x00, 0x01, 0x02, 0x03, 0x11, 0x04, 0x05, 0x21, 0x31,
    0x06, 0x12, 0x41, 0x51, 0x07, 0x61, 0x71, 0x13, 0x22, 0x32, 0x81, 0x08,
    0x14, 0x42, 0x91, 0xa1, 0xb1, 0xc1, 0x09, 0x23, 0x33, 0x52, 0xf0, 0x15,
    0x62, 0x72, 0xd1, 0x0a, 0x16, 0x24, 0x34, 0xe1, 0x25, 0xf1, 0x17, 0x18,
    0x19, 0x1a, 0x26, 0x27, 0x28, 0x29, 0x2a, 0x35, 0x36, 0x37, 0x38, 0x39,
    0x3a, 0x43, 0x44, 0x45, 0x46, 0x47, 0x48, 0x49, 0x4a, 0x53, 0x54, 0x55,
    0x56, 0x57, 0x58, 0x59, 0x5a, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68, 0x69,
    0x6a, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78, 0x79, 0x7a, 0x82, 0x83, 0x84,
    0x85, 0x86, 0x87, 0x88, 0x89, 0x8a, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97,
    0x98, 0x99, 0x9a, 0xa2, 0xa3, 0xa4, 0xa5, 0xa6, 0xa7, 0xa8, 0xa9, 0xaa,
    0xb2, 0xb3, 0xb4, 0xb5, 0xb6, 0xb7, 0xb8, 0xb9, 0xba, 0xc2, 0xc3, 0xc4,
    0xc5, 0xc6, 0xc7, 0xc8, 0xc9, 0xca, 0xd2, 0xd3, 0xd4, 0xd5, 0xd6, 0xd7,
    0xd8, 0xd9, 0xda, 0xe2, 0xe3, 0xe4, 0xe5, 0xe6, 0xe7, 0xe8, 0xe9, 0xea,
    0xf2, 0xf3, 0xf4, 0xf5, 0xf6, 0xf7, 0xf8, 0xf9, 0xfa, 0xff, 0xda, 0x00,
    0x0c, 0x03, 0x01, 0x00, 0x02, 0x11, 0x03, 0x11, 0x00, 0x3f, 0x00, 0xe4,
    0xe8, 0xa2, 0x8a, 0xf5, 0x8f, 0x34, 0x28, 0xa2, 0x8a, 0x00, 0x28, 0xa2,
    0x8a, 0x00, 0x28, 0xa2, 0x8a, 0x00, 0x28, 0xa2, 0x8a, 0x00, 0x28, 0xa2,
    0x8a, 0x00, 0x28, 0xa2, 0x8a, 0x00, 0x28, 0xa2, 0x8a, 0x00, 0x28, 0xa2,
    0x8a, 0x00, 0x28, 0xa2, 0x8a, 0x00, 0x28, 0xa2, 0x8a, 0x00, 0x28, 0xa2,
    0x8a, 0x00, 0xff, 0xd9};

std::string make_synthetic_jpeg(const std::string& tag, int width, int height) {
    std::string bytes(reinterpret_cast<const char*>(kJpegTemplate), sizeof(kJpegTemplate));
    // COM segment right after SOI: FF FE <len> <tag>.
    const std::size_t payload = tag.size() + 2;
    std::string com;
    com.push_back(static_cast<char>(0xFF));
    com.push_back(static_cast<char>(0xFE));
    com.push_back(static_cast<char>((payload >> 8) & 0xFF));
    com.push_back(static_cast<char>(payload & 0xFF));
    com += tag;
    bytes.insert(2, com);
    // Patch SOF0 height/width (big-endian at marker offset +5 / +7).
    for (std::size_t i = 0; i + 8 < bytes.size(); ++i) {
        if (static_cast<unsigned char>(bytes[i]) == 0xFF &&
            static_cast<unsigned char>(bytes[i + 1]) == 0xC0) {
            bytes[i + 5] = static_cast<char>((height >> 8) & 0xFF);
            bytes[i + 6] = static_cast<char>(height & 0xFF);
            bytes[i + 7] = static_cast<char>((width >> 8) & 0xFF);
            bytes[i + 8] = static_cast<char>(width & 0xFF);
            break;
        }
    }
    return bytes;
}

// Frames per clip at `fps`, never emitting a timestamp at or past the end.
int frames_in_interval(const ClipInterval& interval, double fps) {
    const double len = interval.length_s();
    int count = static_cast<int>(std::ceil(len * fps));
    if (count < 1) {
        count = 1;
    }
    while (count > 1 && static_cast<double>(count - 1) / fps >= len) {
        --count;
    }
    return count;
}

std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') {
            out += "'\\''";
        } else {
            out.push_back(c);
        }
    }
    out += "'";
    return out;
}

std::string substitute(std::string tmpl, const std::map<std::string, std::string>& vars) {
    for (const auto& [key, value] : vars) {
        const std::string placeholder = "{" + key + "}";
        std::size_t pos = 0;
        while ((pos = tmpl.find(placeholder, pos)) != std::string::npos) {
            tmpl.replace(pos, placeholder.size(), value);
            pos += value.size();
        }
    }
    return tmpl;
}

} // namespace

VideoInfo SyntheticDecoder::probe(const fs::path& source) {
    std::string text = read_file(source); // not-found for a missing source
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::decode_error, source.string() + ": " + e.what());
    }
    VideoInfo info;
    try {
        info.duration_s = doc.at("duration_s").get<double>();
        info.width = doc.value("width", 64);
        info.height = doc.value("height", 36);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::decode_error, source.string() + ": " + e.what());
    }
    if (!(info.duration_s > 0.0) || info.width <= 0 || info.height <= 0) {
        throw Error(ErrorCode::decode_error, source.string() + ": non-positive duration or size");
    }
    return info;
}

std::vector<FrameRef> SyntheticDecoder::decode_clip(const fs::path& source,
                                                    const ClipInterval& interval, double fps,
                                                    ImageDims source_dims, const IngestConfig& cfg,
                                                    const fs::path& db_root) {
    const ImageDims target = resize_target_dims(source_dims.width, source_dims.height,
                                                cfg.resize_shorter_side_px,
                                                cfg.resize_longer_side_px);
    const int count = frames_in_interval(interval, fps);
    const std::string stem = source.stem().string();
    std::vector<FrameRef> refs;
    refs.reserve(static_cast<std::size_t>(count));
    for (int j = 0; j < count; ++j) {
        const double ts = interval.start_s + static_cast<double>(j) / fps;
        const std::int64_t ms = std::llround(ts * 1000.0);
        FrameRef ref;
        ref.timestamp_s = static_cast<double>(ms) / 1000.0;
        ref.image_path = "frames/" + std::to_string(interval.index) + "/" + std::to_string(ms) +
                         ".jpg";
        ref.width_px = target.width;
        ref.height_px = target.height;
        const std::string tag = "synthetic:" + stem + ":clip=" + std::to_string(interval.index) +
                                ":ts=" + std::to_string(ms);
        atomic_write_file(db_root / ref.image_path,
                          make_synthetic_jpeg(tag, target.width, target.height));
        refs.push_back(std::move(ref));
    }
    return refs;
}

ExternalProcessDecoder::ExternalProcessDecoder(std::string probe_command,
                                               std::string decode_command)
    : probe_command_(std::move(probe_command)), decode_command_(std::move(decode_command)) {}

VideoInfo ExternalProcessDecoder::probe(const fs::path& source) {
    if (!fs::exists(source)) {
        throw Error(ErrorCode::not_found, "no such video: " + source.string());
    }
    if (probe_command_.empty()) {
        throw Error(ErrorCode::decode_error, "no probe command configured for " + source.string());
    }
    const std::string cmd = substitute(probe_command_, {{"source", shell_quote(source.string())}});
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) {
        throw Error(ErrorCode::decode_error, "cannot run probe: " + cmd);
    }
    char buf[256];
    std::string out;
    while (fgets(buf, sizeof(buf), pipe)) {
        out += buf;
    }
    const int status = pclose(pipe);
    if (status != 0) {
        throw Error(ErrorCode::decode_error, "probe failed for " + source.string());
    }
    VideoInfo info;
    try {
        info.duration_s = std::stod(trim(out));
    } catch (const std::exception&) {
        throw Error(ErrorCode::decode_error, "probe output not a duration: " + trim(out));
    }
    info.width = 0; // unknown until decode; the decoder command handles resizing
    info.height = 0;
    return info;
}

std::vector<FrameRef> ExternalProcessDecoder::decode_clip(const fs::path& source,
                                                          const ClipInterval& interval, double fps,
                                                          ImageDims, const IngestConfig& cfg,
                                                          const fs::path& db_root) {
    if (decode_command_.empty()) {
        throw Error(ErrorCode::decode_error, "no decode command configured");
    }
    const fs::path dir = db_root / "frames" / std::to_string(interval.index);
    fs::create_directories(dir);
    const std::string cmd = substitute(
        decode_command_,
        {{"source", shell_quote(source.string())},
         {"start_s", format_seconds(interval.start_s)},
         {"length_s", format_seconds(interval.length_s())},
         {"fps", format_seconds(fps)},
         {"width", std::to_string(cfg.resize_longer_side_px)},
         {"height", std::to_string(cfg.resize_shorter_side_px)},
         {"out_pattern", shell_quote((dir / "raw_%06d.jpg").string())}});
    if (std::system(cmd.c_str()) != 0) {
        throw Error(ErrorCode::decode_error,
                    "decoder failed on clip " + std::to_string(interval.index));
    }
    // Rename the decoder's sequential output onto the millisecond grid.
    std::vector<fs::path> produced;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().filename().string().rfind("raw_", 0) == 0) {
            produced.push_back(entry.path());
        }
    }
    std::sort(produced.begin(), produced.end());
    std::vector<FrameRef> refs;
    for (std::size_t j = 0; j < produced.size(); ++j) {
        const double ts = interval.start_s + static_cast<double>(j) / fps;
        if (ts >= interval.end_s) {
            fs::remove(produced[j]); // decoder overshoot past the clip end
            continue;
        }
        const std::int64_t ms = std::llround(ts * 1000.0);
        FrameRef ref;
        ref.timestamp_s = static_cast<double>(ms) / 1000.0;
        ref.image_path =
            "frames/" + std::to_string(interval.index) + "/" + std::to_string(ms) + ".jpg";
        fs::rename(produced[j], db_root / ref.image_path);
        const auto dims = read_jpeg_dimensions(db_root / ref.image_path);
        ref.width_px = dims.width;
        ref.height_px = dims.height;
        refs.push_back(std::move(ref));
    }
    return refs;
}

namespace {

bool is_synthetic_source(const fs::path& source) {
    const std::string name = source.filename().string();
    return name.size() > 11 && name.substr(name.size() - 11) == ".video.json";
}

} // namespace

std::unique_ptr<FrameDecoder> make_decoder(const IngestConfig& cfg, const fs::path& source) {
    if (is_synthetic_source(source)) {
        return std::make_unique<SyntheticDecoder>();
    }
    return std::make_unique<ExternalProcessDecoder>(cfg.probe_command, cfg.decode_command);
}

// --- Captioning ----------------------------------------------------------------

CaptionStepResult parse_caption_output(const std::string& text) {
    std::string body = trim(text);
    if (body.rfind("```", 0) == 0) {
        const auto first_newline = body.find('\n');
        const auto closing = body.rfind("```");
        if (first_newline == std::string::npos || closing <= first_newline) {
            throw Error(ErrorCode::malformed_model_output, "unclosed code fence");
        }
        body = trim(body.substr(first_newline + 1, closing - first_newline - 1));
    }
    json doc;
    try {
        doc = json::parse(body);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::malformed_model_output, e.what());
    }
    if (!doc.is_object() || !doc.contains("caption") || !doc["caption"].is_string()) {
        throw Error(ErrorCode::malformed_model_output, "missing caption field");
    }
    CaptionStepResult result;
    result.caption = doc["caption"].get<std::string>();
    try {
        for (const auto& s : doc.value("new_subjects", json::array())) {
            result.new_subjects.push_back(subject_from_json(s));
        }
        for (const auto& s : doc.value("updated_subjects", json::array())) {
            result.updated_subjects.push_back(subject_from_json(s));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::malformed_model_output, std::string("bad subject entry: ") + e.what());
    }
    return result;
}

namespace {

void merge_subject(SubjectEntry& into, const SubjectEntry& update) {
    if (!update.appearance.empty()) {
        into.appearance = update.appearance;
    }
    if (!update.identity.empty()) {
        into.identity = update.identity;
    }
    for (const auto& action : update.actions) {
        if (std::find(into.actions.begin(), into.actions.end(), action) == into.actions.end()) {
            into.actions.push_back(action);
        }
    }
    for (const auto& span : update.time_spans) {
        if (std::find(into.time_spans.begin(), into.time_spans.end(), span) ==
            into.time_spans.end()) {
            into.time_spans.push_back(span);
        }
    }
}

} // namespace

void apply_caption_delta(SubjectRegistry& registry, const CaptionStepResult& delta) {
    for (const auto& subject : delta.new_subjects) {
        if (SubjectEntry* existing = registry.find(subject.name)) {
            merge_subject(*existing, subject); // model re-announced a known subject
        } else {
            registry.subjects.push_back(subject);
        }
    }
    for (const auto& subject : delta.updated_subjects) {
        if (SubjectEntry* existing = registry.find(subject.name)) {
            merge_subject(*existing, subject);
        } else {
            registry.subjects.push_back(subject); // update to a name never registered
        }
    }
    ++registry.revision;
}

CaptionStepResult caption_clip(const std::vector<FrameRef>& frames,
                               const SubjectRegistry& registry, const ClipInterval& interval,
                               const std::string& transcript_text, ModelGateway& gateway,
                               const IngestConfig& cfg, const PromptLibrary& prompts,
                               const fs::path& db_root) {
    if (frames.empty()) {
        throw Error(ErrorCode::invalid_argument, "no frames to caption");
    }
    json registry_json = json::array();
    for (const auto& s : registry.subjects) {
        registry_json.push_back(subject_to_json(s));
    }
    std::string transcript_block;
    if (!transcript_text.empty()) {
        transcript_block = "Transcript: " + transcript_text + "\n";
    }
    const std::string prompt =
        prompts.render("caption_v1", {{"clip_index", std::to_string(interval.index)},
                                      {"start_s", format_seconds(interval.start_s)},
                                      {"end_s", format_seconds(interval.end_s)},
                                      {"registry_json", registry_json.dump()},
                                      {"transcript_block", transcript_block}});
    ModelRequest req;
    req.backend_id = cfg.caption_backend_id;
    req.messages = {{"user", prompt}};
    for (const auto& frame : frames) {
        req.image_attachments.push_back(db_root / frame.image_path);
    }

    const int attempts = std::max(1, cfg.caption_attempts);
    for (int attempt = 1;; ++attempt) {
        const ModelResponse resp = gateway.complete(req);
        try {
            return parse_caption_output(resp.text);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::malformed_model_output || attempt >= attempts) {
                throw;
            }
        }
    }
}

Eigen::VectorXf embed_caption(const std::string& caption, ModelGateway& gateway,
                              const std::string& backend_id) {
    if (trim(caption).empty()) {
        throw Error(ErrorCode::invalid_argument, "cannot embed an empty caption");
    }
    auto vectors = gateway.embed(backend_id, {caption});
    return vectors.at(0);
}

// --- Transcript ------------------------------------------------------------------

std::vector<TranscriptSegment> load_transcript(const fs::path& path) {
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::invalid_argument, path.string() + ": " + e.what());
    }
    if (!doc.is_array()) {
        throw Error(ErrorCode::invalid_argument, path.string() + ": expected a JSON array");
    }
    std::vector<TranscriptSegment> segments;
    for (const auto& item : doc) {
        TranscriptSegment seg;
        try {
            seg.start_s = item.at("start_s").get<double>();
            seg.end_s = item.at("end_s").get<double>();
            seg.text = item.at("text").get<std::string>();
        } catch (const json::exception& e) {
            throw Error(ErrorCode::invalid_argument, path.string() + ": " + e.what());
        }
        if (!(seg.start_s < seg.end_s)) {
            throw Error(ErrorCode::invalid_argument,
                        path.string() + ": segment start must be before end");
        }
        segments.push_back(std::move(seg));
    }
    std::stable_sort(segments.begin(), segments.end(),
                     [](const auto& a, const auto& b) { return a.start_s < b.start_s; });
    return segments;
}

std::vector<ClipRecord> merge_transcript(std::vector<ClipRecord> clips,
                                         const std::vector<TranscriptSegment>& segments) {
    for (auto& clip : clips) {
        std::string text;
        for (const auto& seg : segments) {
            if (seg.start_s < clip.interval.end_s && seg.end_s > clip.interval.start_s) {
                if (!text.empty()) {
                    text += " ";
                }
                text += seg.text;
            }
        }
        clip.transcript_text = std::move(text);
    }
    return clips;
}

// --- Full pipeline ----------------------------------------------------------------

namespace {

struct ResumeState {
    std::int64_t clips_done = 0;
    SubjectRegistry registry;
    std::vector<ClipRecord> records; // the clips_done completed records
};

std::string transcript_text_for(const ClipInterval& interval,
                                const std::vector<TranscriptSegment>& segments) {
    std::string text;
    for (const auto& seg : segments) {
        if (seg.start_s < interval.end_s && seg.end_s > interval.start_s) {
            if (!text.empty()) {
                text += " ";
            }
            text += seg.text;
        }
    }
    return text;
}

ResumeState load_resume_state(const fs::path& root, std::int64_t clip_count, int dim) {
    ResumeState state;
    const fs::path registry_path = root / "registry.json";
    const fs::path captions_path = root / "captions.jsonl";
    const fs::path embeddings_path = root / "embeddings.f32";
    if (!fs::exists(registry_path)) {
        return state;
    }
    SubjectRegistry registry;
    try {
        registry = registry_from_json(json::parse(read_file(registry_path)));
    } catch (...) {
        return state; // unreadable checkpoint: rebuild from scratch
    }
    std::vector<std::string> lines;
    if (fs::exists(captions_path)) {
        lines = read_lines(captions_path);
    }
    std::int64_t rows = 0;
    if (fs::exists(embeddings_path)) {
        rows = static_cast<std::int64_t>(fs::file_size(embeddings_path)) /
               static_cast<std::int64_t>(sizeof(float) * static_cast<std::size_t>(dim));
    }
    const std::int64_t done = registry.revision;
    if (done <= 0 || done > clip_count || static_cast<std::int64_t>(lines.size()) < done ||
        rows < done) {
        // The checkpoint outran its data files (or config changed); restart.
        return state;
    }

    std::string caption_bytes;
    std::string raw = fs::exists(embeddings_path) ? read_file(embeddings_path) : "";
    for (std::int64_t i = 0; i < done; ++i) {
        json line;
        try {
            line = json::parse(lines[static_cast<std::size_t>(i)]);
        } catch (...) {
            return ResumeState{};
        }
        ClipRecord clip;
        clip.interval.index = line.value("index", -1);
        if (clip.interval.index != static_cast<int>(i)) {
            return ResumeState{};
        }
        clip.interval.start_s = line.at("start_s").get<double>();
        clip.interval.end_s = line.at("end_s").get<double>();
        clip.caption = line.at("caption").get<std::string>();
        clip.transcript_text = line.value("transcript_text", "");
        clip.embedding.resize(dim);
        std::memcpy(clip.embedding.data(),
                    raw.data() + static_cast<std::size_t>(i) * sizeof(float) * static_cast<std::size_t>(dim),
                    sizeof(float) * static_cast<std::size_t>(dim));
        clip.frame_refs = scan_clip_frames(root, static_cast<int>(i));
        state.records.push_back(std::move(clip));
        caption_bytes += lines[static_cast<std::size_t>(i)];
        caption_bytes += "\n";
    }
    // Truncate any appends past the checkpointed revision.
    atomic_write_file(captions_path, caption_bytes);
    std::error_code ec;
    fs::resize_file(embeddings_path,
                    static_cast<std::uintmax_t>(done) * sizeof(float) * static_cast<std::size_t>(dim), ec);
    state.clips_done = done;
    state.registry = std::move(registry);
    return state;
}

std::string default_video_id(const fs::path& source) {
    std::string stem = source.stem().string(); // "clip.video.json" -> "clip.video"
    const std::string suffix = ".video";
    if (stem.size() > suffix.size() &&
        stem.compare(stem.size() - suffix.size(), suffix.size(), suffix) == 0) {
        stem.resize(stem.size() - suffix.size());
    }
    return stem;
}

} // namespace

VideoDatabase build_database(const fs::path& source, const IngestConfig& cfg,
                             ModelGateway& gateway, const fs::path& out_root,
                             const ProgressFn& progress) {
    if (!(cfg.clip_len_s > 0.0) || !(cfg.decode_fps > 0.0)) {
        throw Error(ErrorCode::invalid_argument, "clip length and fps must be positive");
    }

    // A completed database is left untouched.
    if (fs::exists(out_root / "manifest.json")) {
        return open(out_root);
    }

    auto decoder = make_decoder(cfg, source);
    const VideoInfo info = decoder->probe(source);
    const auto intervals = segment(info.duration_s, cfg.clip_len_s);
    const auto clip_count = static_cast<std::int64_t>(intervals.size());
    const int dim = gateway.embedding_dim(cfg.embed_backend_id);

    std::vector<TranscriptSegment> transcript;
    if (cfg.transcript_path) {
        transcript = load_transcript(*cfg.transcript_path);
    }

    const PromptLibrary prompts(cfg.prompts_dir);
    fs::create_directories(out_root);

    ResumeState state = load_resume_state(out_root, clip_count, dim);
    if (state.clips_done == 0) {
        // Fresh build: clear any partial files from an unusable checkpoint.
        fs::remove(out_root / "captions.jsonl");
        fs::remove(out_root / "embeddings.f32");
        fs::remove(out_root / "registry.json");
    }
    SubjectRegistry registry = state.registry;
    std::vector<ClipRecord> records = std::move(state.records);
    const std::int64_t done = state.clips_done;

    // Stage 1: decode remaining clips, parallel across clips.
    std::vector<std::vector<FrameRef>> frames_by_clip(static_cast<std::size_t>(clip_count));
    {
        const unsigned workers = std::max(1u, std::thread::hardware_concurrency());
        std::int64_t next = done;
        while (next < clip_count) {
            std::vector<std::pair<std::int64_t, std::future<std::vector<FrameRef>>>> batch;
            for (unsigned w = 0; w < workers && next < clip_count; ++w, ++next) {
                const std::int64_t i = next;
                const fs::path dir = out_root / "frames" / std::to_string(i);
                std::error_code ec;
                fs::remove_all(dir, ec); // stale partial decode
                batch.emplace_back(i, std::async(std::launch::async, [&, i] {
                                       return decoder->decode_clip(
                                           source, intervals[static_cast<std::size_t>(i)],
                                           cfg.decode_fps, {info.width, info.height}, cfg,
                                           out_root);
                                   }));
            }
            for (auto& [i, fut] : batch) {
                try {
                    frames_by_clip[static_cast<std::size_t>(i)] = fut.get();
                } catch (const Error& e) {
                    throw Error(e.code(), "clip " + std::to_string(i) + ": " + e.what());
                }
                if (progress) {
                    progress(static_cast<int>(i), static_cast<int>(clip_count), "decode");
                }
            }
        }
    }

    // Stage 2+3: sequential captioning with registry evolution; embeddings run
    // asynchronously and are flushed in clip order so checkpoints stay
    // consistent with the registry revision on disk.
    struct Pending {
        ClipRecord record;
        SubjectRegistry registry_after;
        std::future<Eigen::VectorXf> embedding;
    };
    std::deque<Pending> pending;

    auto flush_one = [&](Pending& p) {
        const int idx = p.record.interval.index;
        try {
            p.record.embedding = p.embedding.get().transpose();
        } catch (const Error& e) {
            throw Error(e.code(), "clip " + std::to_string(idx) + ": " + e.what());
        }
        append_file(out_root / "captions.jsonl", caption_line_to_json(p.record).dump() + "\n");
        append_file(out_root / "embeddings.f32",
                    std::string_view(reinterpret_cast<const char*>(p.record.embedding.data()),
                                     sizeof(float) * static_cast<std::size_t>(p.record.embedding.size())));
        atomic_write_file(out_root / "registry.json",
                          registry_to_json(p.registry_after).dump(2) + "\n");
        records.push_back(std::move(p.record));
    };

    for (std::int64_t i = done; i < clip_count; ++i) {
        ClipRecord record;
        record.interval = intervals[static_cast<std::size_t>(i)];
        record.frame_refs = frames_by_clip[static_cast<std::size_t>(i)];
        record.transcript_text = transcript_text_for(record.interval, transcript);

        CaptionStepResult step;
        try {
            step = caption_clip(record.frame_refs, registry, record.interval,
                                record.transcript_text, gateway, cfg, prompts, out_root);
        } catch (const Error& e) {
            if (e.code() == ErrorCode::malformed_model_output) {
                std::cerr << "[ingest] clip " << i
                          << ": caption output unusable after retries, using fallback\n";
                step = CaptionStepResult{.caption = "[caption unavailable]",
                                         .new_subjects = {},
                                         .updated_subjects = {}};
            } else {
                throw Error(e.code(), "clip " + std::to_string(i) + ": " + e.what());
            }
        }
        record.caption = step.caption;
        apply_caption_delta(registry, step);

        Pending p;
        p.record = std::move(record);
        p.registry_after = registry;
        const std::string embed_input = retrieval_text(p.record);
        p.embedding = std::async(std::launch::async, [&gateway, &cfg, embed_input] {
            return embed_caption(embed_input, gateway, cfg.embed_backend_id);
        });
        pending.push_back(std::move(p));

        while (!pending.empty() &&
               pending.front().embedding.wait_for(std::chrono::seconds(0)) ==
                   std::future_status::ready) {
            flush_one(pending.front());
            pending.pop_front();
        }
        if (progress) {
            progress(static_cast<int>(i), static_cast<int>(clip_count), "caption");
        }
    }
    while (!pending.empty()) {
        flush_one(pending.front());
        pending.pop_front();
    }

    VideoDatabase db;
    db.manifest.video_id = cfg.video_id.empty() ? default_video_id(source) : cfg.video_id;
    db.manifest.source_path = source.string();
    db.manifest.duration_s = info.duration_s;
    db.manifest.clip_len_s = cfg.clip_len_s;
    db.manifest.decode_fps = cfg.decode_fps;
    db.manifest.embedding_dim = dim;
    const auto& embed_cfg = gateway.config(cfg.embed_backend_id);
    const auto& caption_cfg = gateway.config(cfg.caption_backend_id);
    db.manifest.embedding_model_id =
        embed_cfg.model_name.empty() ? embed_cfg.backend_id : embed_cfg.model_name;
    db.manifest.caption_model_id =
        caption_cfg.model_name.empty() ? caption_cfg.backend_id : caption_cfg.model_name;
    db.manifest.schema_version = kSchemaVersion;
    db.registry = std::move(registry);
    db.clips = std::move(records);
    refresh_embedding_integrity(db);

    save(db, out_root);
    return db;
}

} // namespace vidagent
