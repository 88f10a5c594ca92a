// SPDX-License-Identifier: Apache-2.0
#pragma once
// Shared test fixtures: temp directories, synthetic databases, scripted
// backends, and the golden four-step episode scenario.

#include "vidagent/agent.hpp"
#include "vidagent/ingest.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <random>
#include <string>

#ifndef TEST_SOURCE_DIR
#error "TEST_SOURCE_DIR must be defined by the build"
#endif

namespace vidagent::test {

namespace fs = std::filesystem;
using nlohmann::json;

inline fs::path source_dir() {
    return fs::path(TEST_SOURCE_DIR);
}

inline fs::path prompts_dir() {
    return source_dir() / "prompts";
}

inline fs::path fixtures_dir() {
    return source_dir() / "tests" / "fixtures";
}

// Unique temp directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        std::random_device rd;
        path_ = fs::temp_directory_path() /
                ("vidagent_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter++) + "_" + std::to_string(rd() % 100000));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

// Minimal valid JPEG bytes for hand-built frame files (reuses the synthetic
// decoder's placeholder via a one-frame decode would be circular; this is an
// independent fixed image).
void write_test_jpeg(const fs::path& path, const std::string& tag);

// Hand-built in-memory database with `clip_count` clips of `clip_len` seconds,
// embeddings from the hash rule over the caption, and one frame per clip
// written under root. Integrity fields refreshed; passes validate.
VideoDatabase make_test_db(const fs::path& root, int clip_count, int dim,
                           double clip_len = 5.0, double fps = 2.0);

// Gateway preloaded with the offline stubs used across tests:
//   "captioner" (stub_captioner), "embedder" (hash_embed dim), plus any extras
//   the test registers afterwards.
ModelGateway make_stub_gateway(int embed_dim = 16);

// Builds the bundled 60-second synthetic fixture video into root via the full
// ingest pipeline with stub backends (12 clips, dim-16 embeddings).
VideoDatabase build_fixture_db(const fs::path& root, int embed_dim = 16);

// Fenced-action model response helpers.
ModelResponse text_response(const std::string& text);
ModelResponse action_response(const std::string& reasoning, const json& action);

// Counts calls through to an inner backend; used to assert call budgets.
class CountingBackend : public ModelBackend {
public:
    explicit CountingBackend(std::shared_ptr<ModelBackend> inner) : inner_(std::move(inner)) {}

    ModelResponse complete(const ModelRequest& req) override {
        ++completes;
        return inner_->complete(req);
    }
    std::vector<Eigen::VectorXf> embed(const std::vector<std::string>& texts) override {
        ++embeds;
        return inner_->embed(texts);
    }
    int embedding_dim() const override { return inner_->embedding_dim(); }
    bool supports_vision() const override { return inner_->supports_vision(); }

    int completes = 0;
    int embeds = 0;

private:
    std::shared_ptr<ModelBackend> inner_;
};

// The reviewed golden scenario: GlobalBrowse -> ClipSearch -> FrameInspect ->
// Answer over the fixture database. Used both to record the goldens and to
// replay them in the acceptance suite.
std::vector<ScriptedChatBackend::Entry> golden_scenario_script();
std::string golden_scenario_query();

} // namespace vidagent::test
