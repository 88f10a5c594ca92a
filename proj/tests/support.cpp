// SPDX-License-Identifier: Apache-2.0
#include "support.hpp"

#include "vidagent/fsutil.hpp"
#include "vidagent/strings.hpp"

namespace vidagent::test {

void write_test_jpeg(const fs::path& path, const std::string& tag) {
    // SOI, a COM segment carrying the tag, a minimal SOF0 (8x8), EOI. Enough
    // for the dimension probe; tests never decode pixels.
    std::string bytes;
    auto push = [&bytes](std::initializer_list<int> values) {
        for (int v : values) {
            bytes.push_back(static_cast<char>(v));
        }
    };
    push({0xFF, 0xD8});
    const std::size_t payload = tag.size() + 2;
    push({0xFF, 0xFE, static_cast<int>((payload >> 8) & 0xFF), static_cast<int>(payload & 0xFF)});
    bytes += tag;
    // SOF0: len 11, precision 8, height 8, width 8, 1 component.
    push({0xFF, 0xC0, 0x00, 0x0B, 0x08, 0x00, 0x08, 0x00, 0x08, 0x01, 0x01, 0x11, 0x00});
    push({0xFF, 0xD9});
    atomic_write_file(path, bytes);
}

VideoDatabase make_test_db(const fs::path& root, int clip_count, int dim, double clip_len,
                           double fps) {
    VideoDatabase db;
    db.manifest.video_id = "testvid";
    db.manifest.source_path = "testvid.video.json";
    db.manifest.duration_s = clip_count * clip_len;
    db.manifest.clip_len_s = clip_len;
    db.manifest.decode_fps = fps;
    db.manifest.embedding_dim = dim;
    db.manifest.embedding_model_id = "hash";
    db.manifest.caption_model_id = "stub";
    for (int i = 0; i < clip_count; ++i) {
        ClipRecord clip;
        clip.interval = {i, i * clip_len, (i + 1) * clip_len};
        clip.caption = "clip " + std::to_string(i) + " scene with subject_" + std::to_string(i % 3);
        clip.embedding = HashEmbedBackend::embed_one(clip.caption, dim).transpose();
        const auto ms = static_cast<std::int64_t>(std::llround(clip.interval.start_s * 1000.0));
        FrameRef ref;
        ref.timestamp_s = static_cast<double>(ms) / 1000.0;
        ref.image_path = "frames/" + std::to_string(i) + "/" + std::to_string(ms) + ".jpg";
        ref.width_px = 8;
        ref.height_px = 8;
        write_test_jpeg(root / ref.image_path, "test clip " + std::to_string(i));
        clip.frame_refs.push_back(std::move(ref));
        db.clips.push_back(std::move(clip));
    }
    SubjectEntry subject;
    subject.name = "subject_0";
    subject.appearance = "a test subject";
    subject.identity = "fixture";
    subject.actions = {"exists"};
    subject.time_spans = {{0.0, std::min(db.manifest.duration_s, clip_len)}};
    db.registry.subjects.push_back(std::move(subject));
    db.registry.revision = clip_count;
    refresh_embedding_integrity(db);
    return db;
}

ModelGateway make_stub_gateway(int embed_dim) {
    ModelGateway gateway;
    gateway.add_backend({.backend_id = "captioner", .kind = "stub_captioner"});
    gateway.add_backend(
        {.backend_id = "embedder", .kind = "hash_embed", .embedding_dim = embed_dim});
    return gateway;
}

VideoDatabase build_fixture_db(const fs::path& root, int embed_dim) {
    ModelGateway gateway = make_stub_gateway(embed_dim);
    IngestConfig cfg;
    cfg.caption_backend_id = "captioner";
    cfg.embed_backend_id = "embedder";
    cfg.prompts_dir = prompts_dir();
    return build_database(fixtures_dir() / "fixture_60s.video.json", cfg, gateway, root);
}

ModelResponse text_response(const std::string& text) {
    ModelResponse resp;
    resp.text = text;
    resp.finish_reason = FinishReason::stop;
    return resp;
}

ModelResponse action_response(const std::string& reasoning, const json& action) {
    ModelResponse resp;
    resp.text = reasoning + "\n```action\n" + action.dump() + "\n```\n";
    resp.finish_reason = FinishReason::stop;
    return resp;
}

std::string golden_scenario_query() {
    return "What does person_1 examine in the first minute?";
}

std::vector<ScriptedChatBackend::Entry> golden_scenario_script() {
    // Matched most-specific first: the rendered history grows a "[step N]"
    // block per completed step.
    std::vector<ScriptedChatBackend::Entry> entries;
    entries.push_back({"[step 3]",
                       action_response("The inspected frames settle it.",
                                       json{{"action", "Answer"},
                                            {"answer", "(B) an object on a table"}})});
    entries.push_back(
        {"[step 2]",
         action_response("Clip 1 looks relevant; inspect its frames closely.",
                         json{{"action", "FrameInspect"},
                              {"query", "what is person_1 examining?"},
                              {"t_s", 5},
                              {"t_e", 15}})});
    entries.push_back({"[step 1]",
                       action_response("Search the captions for the examining scene.",
                                       json{{"action", "ClipSearch"},
                                            {"query", "person examines an object"},
                                            {"k", 4}})});
    entries.push_back({"", action_response("Start with a global overview.",
                                           json{{"action", "GlobalBrowse"}})});
    return entries;
}

} // namespace vidagent::test
