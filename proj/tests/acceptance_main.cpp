// SPDX-License-Identifier: Apache-2.0
// Acceptance suite: runs each shipped-behavior criterion at its stated
// tolerance and prints one pass/fail line per criterion. Exits nonzero when
// any criterion fails.

#include "vidagent/eval.hpp"
#include "vidagent/ingest.hpp"
#include "vidagent/service.hpp"

#include "support.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

namespace fs = std::filesystem;
using namespace vidagent;
using nlohmann::json;
using vidagent::test::TempDir;

namespace {

struct Criterion {
    int number;
    std::string name;
    std::function<void()> run; // throws std::runtime_error on failure
};

void expect(bool condition, const std::string& message) {
    if (!condition) {
        throw std::runtime_error(message);
    }
}

// Independent full-sort oracle (plain loops, double accumulation).
std::vector<std::pair<Eigen::Index, double>> oracle_top_k(const Eigen::VectorXf& q,
                                                          const RowMatrixXf& corpus, int k) {
    struct Row {
        Eigen::Index index;
        double score;
        bool zero;
    };
    double qn = 0.0;
    for (Eigen::Index j = 0; j < q.size(); ++j) {
        qn += double(q[j]) * double(q[j]);
    }
    qn = std::sqrt(qn);
    std::vector<Row> rows;
    for (Eigen::Index i = 0; i < corpus.rows(); ++i) {
        double dot = 0.0, cn = 0.0;
        for (Eigen::Index j = 0; j < corpus.cols(); ++j) {
            dot += double(corpus(i, j)) * double(q[j]);
            cn += double(corpus(i, j)) * double(corpus(i, j));
        }
        cn = std::sqrt(cn);
        rows.push_back({i, cn == 0.0 ? -1.0 : dot / (cn * qn), cn == 0.0});
    }
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        if (a.zero != b.zero) return !a.zero;
        if (a.score != b.score) return a.score > b.score;
        return a.index < b.index;
    });
    std::vector<std::pair<Eigen::Index, double>> out;
    for (int i = 0; i < k && i < static_cast<int>(rows.size()); ++i) {
        out.emplace_back(rows[static_cast<std::size_t>(i)].index,
                         rows[static_cast<std::size_t>(i)].score);
    }
    return out;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// ---- criterion bodies ------------------------------------------------------

void criterion_segmentation_law() {
    std::mt19937_64 rng(1001);
    std::uniform_real_distribution<double> duration_dist(0.05, 7200.0);
    std::uniform_real_distribution<double> len_dist(0.25, 60.0);
    const auto start = std::chrono::steady_clock::now();
    for (int trial = 0; trial < 1000; ++trial) {
        const double duration = duration_dist(rng);
        const double t = len_dist(rng);
        const auto intervals = segment(duration, t);
        const auto expected =
            static_cast<std::int64_t>(std::ceil(static_cast<long double>(duration) /
                                                static_cast<long double>(t)));
        expect(static_cast<std::int64_t>(intervals.size()) == expected,
               "count != ceil(duration/t) at trial " + std::to_string(trial));
        expect(intervals.front().start_s == 0.0, "first interval must start at 0");
        expect(intervals.back().end_s == duration, "last interval must end at duration");
        for (std::size_t i = 0; i < intervals.size(); ++i) {
            expect(intervals[i].start_s == static_cast<double>(i) * t, "start != i*t");
            expect(intervals[i].end_s > intervals[i].start_s, "empty interval");
            if (i + 1 < intervals.size()) {
                expect(intervals[i].end_s == intervals[i + 1].start_s, "tiling gap/overlap");
            }
        }
    }
    const double elapsed = seconds_since(start);
    expect(elapsed < 1.0, "took " + std::to_string(elapsed) + " s (limit 1 s)");
}

void criterion_retrieval_oracle() {
    std::mt19937_64 rng(2002);
    std::normal_distribution<float> gauss(0.0f, 1.0f);
    const auto start = std::chrono::steady_clock::now();
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = std::uniform_int_distribution<int>(1, 500)(rng);
        const int d = std::uniform_int_distribution<int>(1, 64)(rng);
        RowMatrixXf corpus(n, d);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < d; ++j) {
                corpus(i, j) = gauss(rng);
            }
        }
        if (n >= 4) {
            corpus.row(1) = corpus.row(0); // duplicate row
            corpus.row(3).setZero();       // zero-norm row
        }
        Eigen::VectorXf q(d);
        for (int j = 0; j < d; ++j) {
            q[j] = gauss(rng);
        }
        if (q.norm() == 0.0f) {
            q[0] = 1.0f;
        }
        const int k = std::uniform_int_distribution<int>(1, n)(rng);

        const auto got = cosine_top_k(q, corpus, k);
        const auto expected = oracle_top_k(q, corpus, k);
        expect(got.size() == expected.size(), "result size mismatch");
        for (std::size_t i = 0; i < got.size(); ++i) {
            expect(got[i].first == expected[i].first,
                   "index mismatch at trial " + std::to_string(trial) + " rank " +
                       std::to_string(i));
            expect(std::abs(double(got[i].second) - expected[i].second) < 1e-6,
                   "score off by more than 1e-6");
        }
    }
    const double elapsed = seconds_since(start);
    expect(elapsed < 10.0, "took " + std::to_string(elapsed) + " s (limit 10 s)");
}

void criterion_scale_invariance() {
    std::mt19937_64 rng(3003);
    std::normal_distribution<float> gauss(0.0f, 1.0f);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = std::uniform_int_distribution<int>(2, 200)(rng);
        const int d = std::uniform_int_distribution<int>(2, 48)(rng);
        RowMatrixXf corpus(n, d);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < d; ++j) {
                corpus(i, j) = gauss(rng);
            }
        }
        Eigen::VectorXf q(d);
        for (int j = 0; j < d; ++j) {
            q[j] = gauss(rng);
        }
        if (q.norm() == 0.0f) {
            q[0] = 1.0f;
        }
        RowMatrixXf scaled = corpus;
        std::uniform_real_distribution<float> scale_dist(1e-3f, 1e3f);
        for (int i = 0; i < n; ++i) {
            scaled.row(i) *= scale_dist(rng);
        }
        const auto a = cosine_top_k(q, corpus, n);
        const auto b = cosine_top_k(q, scaled, n);
        for (std::size_t i = 0; i < a.size(); ++i) {
            expect(a[i].first == b[i].first,
                   "order changed under row scaling at trial " + std::to_string(trial));
        }
    }
}

void criterion_agent_termination() {
    TempDir tmp("acc_agent");
    const VideoDatabase db = vidagent::test::build_fixture_db(tmp.path());
    const PromptLibrary prompts(vidagent::test::prompts_dir());

    for (int scenario = 0; scenario < 100; ++scenario) {
        ModelGateway gateway = vidagent::test::make_stub_gateway(16);
        gateway.add_backend({.backend_id = "vision"},
                            std::make_shared<CallbackChatBackend>([](const ModelRequest&) {
                                return vidagent::test::text_response("seen");
                            }));

        int reasoning_calls = 0;
        int forced_calls = 0;
        const int flavor = scenario % 5;
        gateway.add_backend(
            {.backend_id = "llm"},
            std::make_shared<CallbackChatBackend>([&](const ModelRequest& req) -> ModelResponse {
                if (req.messages[0].text.find("step limit") != std::string::npos) {
                    ++forced_calls;
                    return vidagent::test::text_response("forced");
                }
                ++reasoning_calls;
                switch (flavor) {
                    case 0: // never answers, valid searches forever
                        return vidagent::test::action_response(
                            "more", json{{"action", "ClipSearch"}, {"query", "again"}});
                    case 1: // always malformed
                        return vidagent::test::text_response("free prose, no action at all");
                    case 2: // spams a disabled tool
                        return vidagent::test::action_response(
                            "try", json{{"action", "ClipSearch"}, {"query", "blocked"}});
                    case 3: // invalid ranges forever
                        return vidagent::test::action_response(
                            "inspect", json{{"action", "FrameInspect"},
                                            {"query", "q"},
                                            {"t_s", 50},
                                            {"t_e", 1}});
                    default: // alternates malformed and browse
                        return (reasoning_calls % 2 == 0)
                                   ? vidagent::test::text_response("nothing actionable")
                                   : vidagent::test::action_response(
                                         "browse", json{{"action", "GlobalBrowse"}});
                }
            }));

        ToolsetConfig tool_cfg;
        tool_cfg.vision_backend_id = "vision";
        tool_cfg.embed_backend_id = "embedder";
        if (flavor == 2) {
            tool_cfg.enabled.erase(ToolKind::ClipSearch);
        }
        Toolset tools(db, tool_cfg, gateway, prompts, tmp.path());

        AgentConfig agent_cfg;
        agent_cfg.llm_backend_id = "llm";
        agent_cfg.prompts_dir = vidagent::test::prompts_dir();

        const Episode episode = run_episode("q", tools, gateway, agent_cfg, prompts);
        expect(episode.steps.size() <= 15,
               "scenario " + std::to_string(scenario) + " took more than 15 steps");
        expect(episode.terminated_by == Termination::step_cap_forced,
               "non-answering scenario must be cap-forced");
        expect(forced_calls == 1,
               "scenario " + std::to_string(scenario) + " made " +
                   std::to_string(forced_calls) + " forced calls");
        // The per-step reasoning budget is 1 plus one malformed retry.
        expect(reasoning_calls <= 15 * 2, "reasoning call budget exceeded");
    }
}

void criterion_golden_episode() {
    TempDir tmp("acc_golden");
    const VideoDatabase db = vidagent::test::build_fixture_db(tmp.path());
    expect(db.clips.size() == 12, "fixture video must segment into 12 clips");

    const fs::path golden_dir = vidagent::test::fixtures_dir() / "golden";
    ModelGateway gateway;
    gateway.add_backend(
        {.backend_id = "llm", .mode = "replay", .fixture_dir = golden_dir / "replay_llm"},
        nullptr);
    gateway.add_backend(
        {.backend_id = "vision", .mode = "replay", .fixture_dir = golden_dir / "replay_vision"},
        nullptr);
    gateway.add_backend({.backend_id = "embedder",
                         .mode = "replay",
                         .fixture_dir = golden_dir / "replay_embed",
                         .embedding_dim = 16},
                        nullptr);

    const PromptLibrary prompts(vidagent::test::prompts_dir());
    ToolsetConfig tool_cfg;
    tool_cfg.vision_backend_id = "vision";
    tool_cfg.embed_backend_id = "embedder";
    Toolset tools(db, tool_cfg, gateway, prompts, tmp.path());
    AgentConfig agent_cfg;
    agent_cfg.llm_backend_id = "llm";
    agent_cfg.prompts_dir = vidagent::test::prompts_dir();

    const Episode episode = run_episode(vidagent::test::golden_scenario_query(), tools, gateway,
                                        agent_cfg, prompts);
    const std::string got = episode_to_json(episode, false).dump(2) + "\n";
    const std::string want = read_file(golden_dir / "golden_episode.json");
    expect(got == want, "episode differs from the reviewed golden transcript");

    const auto names = tool_actions(episode);
    expect(names == std::vector<ActionKind>{ActionKind::GlobalBrowse, ActionKind::ClipSearch,
                                            ActionKind::FrameInspect},
           "golden scenario should be browse -> search -> inspect -> answer");
}

int run_cli(const std::string& args, std::string* stdout_text = nullptr) {
    const std::string cmd = std::string(TEST_CLI_PATH) + " " + args + " 2>/dev/null";
    FILE* pipe = popen(cmd.c_str(), "r");
    expect(pipe != nullptr, "popen failed");
    std::string out;
    char buf[4096];
    while (fgets(buf, sizeof(buf), pipe)) {
        out += buf;
    }
    const int status = pclose(pipe);
    if (stdout_text) {
        *stdout_text = out;
    }
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void criterion_end_to_end_eval() {
    TempDir tmp("acc_eval");
    const fs::path db_root = tmp.path() / "db";
    vidagent::test::build_fixture_db(db_root);

    atomic_write_file(tmp.path() / "manifest.json",
                      json{{"fixture", db_root.string()}}.dump() + "\n");

    auto run_with_script = [&](const std::string& script_name) {
        const json backends{
            {"backends",
             json::array({{{"backend_id", "eval-llm"},
                           {"kind", "scripted"},
                           {"script_path",
                            (vidagent::test::fixtures_dir() / script_name).string()}}})}};
        atomic_write_file(tmp.path() / "backends.json", backends.dump());
        const fs::path out = tmp.path() / ("out_" + script_name);
        const int code =
            run_cli("eval --manifest '" + (tmp.path() / "manifest.json").string() +
                    "' --questions '" +
                    (vidagent::test::fixtures_dir() / "questions_10.jsonl").string() +
                    "' --out '" + out.string() + "' --llm-backend eval-llm --backends '" +
                    (tmp.path() / "backends.json").string() + "' --prompts '" +
                    vidagent::test::prompts_dir().string() + "' --stub-embed-dim 16");
        expect(code == 0, "cli eval exited " + std::to_string(code));
        return json::parse(read_file(out / "accuracy.json"));
    };

    const json correct = run_with_script("eval_script_correct.json");
    expect(correct.at("correct") == 10 && correct.at("total") == 10,
           "correct scripts must score 10/10, got " + correct.at("correct").dump());
    expect(correct.at("overall") == 1.0, "overall must be exactly 1.0");

    const json flipped = run_with_script("eval_script_flipped.json");
    expect(flipped.at("correct") == 8 && flipped.at("total") == 10,
           "flipped scripts must score 8/10, got " + flipped.at("correct").dump());
    expect(std::abs(flipped.at("overall").get<double>() - 0.8) < 1e-12,
           "overall must be exactly 0.8");
}

void criterion_behavior_classifier() {
    using A = ActionKind;
    constexpr A G = A::GlobalBrowse;
    constexpr A C = A::ClipSearch;
    constexpr A F = A::FrameInspect;
    const std::vector<std::pair<std::vector<A>, BehaviorClass>> table = {
        {{}, BehaviorClass::SimpleAction},
        {{G}, BehaviorClass::GlobalBrowseOnly},
        {{G, G}, BehaviorClass::SimpleAction},
        {{C}, BehaviorClass::SimpleAction},
        {{F}, BehaviorClass::SimpleAction},
        {{C, C}, BehaviorClass::SimpleAction},
        {{C, C, C}, BehaviorClass::IterativeSearch},
        {{C, C, C, C}, BehaviorClass::ClipSearchTrap},
        {{F, F, F}, BehaviorClass::IterativeSearch},
        {{F, F, F, F}, BehaviorClass::FrameInspectTrap},
        {{C, F}, BehaviorClass::SimpleAction},
        {{F, C}, BehaviorClass::SimpleAction},
        {{C, F, C}, BehaviorClass::IterativeSearch},
        {{C, C, F, F}, BehaviorClass::SimpleAction},
        {{G, C, C, F}, BehaviorClass::SimpleAction},
        {{C, F, C, F}, BehaviorClass::IterativeSearch},
        {{F, F, F, F, C, C, C, C}, BehaviorClass::FrameInspectTrap},
        {{C, C, C, C, F, F, F, F}, BehaviorClass::FrameInspectTrap},
        {{G, F}, BehaviorClass::SimpleAction},
        {{G, C}, BehaviorClass::SimpleAction},
        {{G, C, F, G}, BehaviorClass::SimpleAction},
        {{C, G, F}, BehaviorClass::SimpleAction},
        {{G, G, G, G}, BehaviorClass::SimpleAction},
        {{C, F, F, C, C, F}, BehaviorClass::IterativeSearch},
        {{C, C, C, F}, BehaviorClass::IterativeSearch},
    };
    expect(table.size() == 25, "golden table must have 25 sequences");
    int index = 0;
    for (const auto& [actions, expected] : table) {
        expect(classify(actions) == expected,
               "golden sequence " + std::to_string(index) + " misclassified");
        ++index;
    }

    // Exhaustiveness: every sequence of length <= 6 maps to exactly one class.
    const std::vector<A> alphabet{G, C, F};
    std::vector<std::vector<A>> all;
    all.push_back({});
    for (int len = 1; len <= 6; ++len) {
        std::vector<int> digits(static_cast<std::size_t>(len), 0);
        for (;;) {
            std::vector<A> seq;
            for (int dgt : digits) {
                seq.push_back(alphabet[static_cast<std::size_t>(dgt)]);
            }
            all.push_back(seq);
            int pos = len - 1;
            while (pos >= 0 && ++digits[static_cast<std::size_t>(pos)] == 3) {
                digits[static_cast<std::size_t>(pos)] = 0;
                --pos;
            }
            if (pos < 0) {
                break;
            }
        }
    }
    expect(all.size() == 1093, "enumeration must cover 1093 sequences");
    for (const auto& seq : all) {
        (void)classify(seq); // total function: must not throw
    }
}

void criterion_answer_extraction() {
    const std::vector<std::pair<char, std::string>> options = {
        {'A', "a red car"}, {'B', "a blue truck"}, {'C', "a green bike"}, {'D', "an empty street"}};
    const std::vector<std::pair<std::string, std::optional<char>>> table = {
        {"A", 'A'},
        {"(A)", 'A'},
        {"A.", 'A'},
        {"B)", 'B'},
        {"Answer: B", 'B'},
        {"Answer: (C)", 'C'},
        {"answer: d.", 'D'},
        {"The video clearly shows a blue truck in motion", 'B'},
        {"the clip shows no relevant detail", std::nullopt},
        {"E", std::nullopt},
        {"I cannot determine it from the evidence", std::nullopt},
    };
    for (const auto& [text, expected] : table) {
        const auto got = extract_choice(text, options);
        expect(got == expected, "extraction mismatch for: " + text);
    }
}

void criterion_frame_cap() {
    for (const std::int64_t n : {std::int64_t{1}, std::int64_t{49}, std::int64_t{50},
                                 std::int64_t{51}, std::int64_t{100}, std::int64_t{1000}}) {
        const auto indices = sample_uniform(n, 50);
        expect(static_cast<std::int64_t>(indices.size()) == std::min<std::int64_t>(n, 50),
               "wrong count for n=" + std::to_string(n));
        for (std::size_t j = 1; j < indices.size(); ++j) {
            expect(indices[j] > indices[j - 1], "indices must strictly increase");
        }
        expect(indices.front() == 0, "first index must be 0");
        if (n > 50) {
            expect(indices.back() == n - 1, "last index must be n-1 when capped");
        }
        for (const auto idx : indices) {
            expect(idx >= 0 && idx < n, "index out of range");
        }
    }
}

void criterion_database_round_trip() {
    TempDir full("acc_db_full");
    TempDir resumed("acc_db_resumed");
    const auto source = vidagent::test::fixtures_dir() / "fixture_60s.video.json";

    IngestConfig cfg;
    cfg.caption_backend_id = "captioner";
    cfg.embed_backend_id = "embedder";
    cfg.prompts_dir = vidagent::test::prompts_dir();

    ModelGateway gateway = vidagent::test::make_stub_gateway(16);
    const VideoDatabase db = build_database(source, cfg, gateway, full.path());
    expect(validate(db, {.root = full.path()}).ok(), "built database must validate");

    const VideoDatabase reopened = open(full.path());
    expect(reopened == db, "open(save(db)) must equal the built database");

    // Re-save and compare bytes.
    auto snapshot = [&](const fs::path& root) {
        std::string all;
        for (const auto* name :
             {"manifest.json", "registry.json", "captions.jsonl", "embeddings.f32"}) {
            all += read_file(root / name);
        }
        return all;
    };
    const std::string before = snapshot(full.path());
    save(reopened, full.path());
    expect(snapshot(full.path()) == before, "re-save must be byte-identical");

    // Interrupted-then-resumed equals uninterrupted.
    std::atomic<bool> dead{false};
    std::atomic<bool> healed{false};
    ModelGateway failing;
    auto real_captioner = std::make_shared<StubCaptionerBackend>();
    failing.add_backend(
        {.backend_id = "captioner", .retry = {.max_attempts = 1, .backoff_s = 0.0}},
        std::make_shared<CallbackChatBackend>([&](const ModelRequest& req) -> ModelResponse {
            for (const auto& m : req.messages) {
                if (m.text.find("Clip index: 7\n") != std::string::npos) {
                    dead = true;
                }
            }
            if (dead && !healed) {
                throw Error(ErrorCode::transport_error, "injected interruption");
            }
            return real_captioner->complete(req);
        }));
    failing.add_backend({.backend_id = "embedder", .kind = "hash_embed", .embedding_dim = 16});
    bool interrupted = false;
    try {
        build_database(source, cfg, failing, resumed.path());
    } catch (const Error&) {
        interrupted = true;
    }
    expect(interrupted, "the injected interruption must abort the first build");
    healed = true;
    const VideoDatabase after_resume = build_database(source, cfg, failing, resumed.path());
    expect(after_resume == db, "resumed database must equal the uninterrupted one");
    expect(snapshot(resumed.path()) == before, "resumed layout must be byte-identical");
}

void criterion_service_protocol() {
    TempDir tmp("acc_service");
    const VideoDatabase db = vidagent::test::build_fixture_db(tmp.path());

    ModelGateway gateway = vidagent::test::make_stub_gateway(16);
    gateway.add_backend({.backend_id = "vision"},
                        std::make_shared<CallbackChatBackend>([](const ModelRequest& req) {
                            const std::string& text = req.messages.front().text;
                            if (text.find("sampled evenly") != std::string::npos) {
                                return vidagent::test::text_response(
                                    "Across the video, four figures appear one after another; "
                                    "early on a figure examines something on a table, later "
                                    "figures talk and stand nearby.");
                            }
                            return vidagent::test::text_response(
                                "The frames show person_1 examining an object on a table.");
                        }));
    ServiceConfig cfg;
    cfg.toolset.vision_backend_id = "vision";
    cfg.toolset.embed_backend_id = "embedder";
    cfg.agent.llm_backend_id = "llm";
    cfg.prompts_dir = vidagent::test::prompts_dir();
    ToolService service(
        std::map<std::string, HostedDatabase>{
            {"fixture", {std::make_shared<const VideoDatabase>(db), tmp.path()}}},
        cfg, gateway);

    const json session =
        json::parse(read_file(vidagent::test::fixtures_dir() / "golden" / "service_session.json"));

    // File bytes before, to verify the handlers are read-only.
    auto tree = [&] {
        std::string all;
        for (const auto* name :
             {"manifest.json", "registry.json", "captions.jsonl", "embeddings.f32"}) {
            all += read_file(tmp.path() / name);
        }
        return all;
    };
    const std::string before = tree();

    // Drive the whole scripted session through the stream loop at once; the
    // responses may interleave, so match them back by id.
    std::string wire;
    for (const auto& request : session.at("requests")) {
        wire += request.dump() + "\n";
    }
    std::istringstream in(wire);
    std::ostringstream out;
    service.serve_stream(in, out);

    std::vector<json> got;
    std::istringstream lines(out.str());
    std::string line;
    while (std::getline(lines, line)) {
        got.push_back(json::parse(line));
    }
    std::sort(got.begin(), got.end(),
              [](const json& a, const json& b) { return a.at("id").dump() < b.at("id").dump(); });

    const auto& want = session.at("responses");
    expect(got.size() == want.size(), "response count mismatch");
    for (std::size_t i = 0; i < got.size(); ++i) {
        expect(got[i] == want[i],
               "response " + got[i].at("id").dump() + " differs from the golden session");
    }
    expect(tree() == before, "service handlers must not modify the database");
}

void criterion_ablation_switches() {
    TempDir tmp("acc_ablation");
    const VideoDatabase db = vidagent::test::build_fixture_db(tmp.path());
    const PromptLibrary prompts(vidagent::test::prompts_dir());

    ModelGateway gateway = vidagent::test::make_stub_gateway(16);
    gateway.add_backend({.backend_id = "vision"},
                        std::make_shared<CallbackChatBackend>([](const ModelRequest&) {
                            return vidagent::test::text_response("global view");
                        }));
    gateway.add_backend(
        {.backend_id = "llm"},
        std::make_shared<ScriptedChatBackend>(std::vector<ScriptedChatBackend::Entry>{
            {"[step 2]", vidagent::test::action_response(
                             "enough evidence", json{{"action", "Answer"}, {"answer", "A"}})},
            {"[step 1]",
             vidagent::test::action_response("fall back to the overview",
                                             json{{"action", "GlobalBrowse"}})},
            {"", vidagent::test::action_response(
                     "search first", json{{"action", "ClipSearch"}, {"query", "anything"}})}}));

    ToolsetConfig tool_cfg;
    tool_cfg.vision_backend_id = "vision";
    tool_cfg.embed_backend_id = "embedder";
    tool_cfg.enabled.erase(ToolKind::ClipSearch); // the ablation switch under test
    Toolset tools(db, tool_cfg, gateway, prompts, tmp.path());

    AgentConfig agent_cfg;
    agent_cfg.llm_backend_id = "llm";
    agent_cfg.prompts_dir = vidagent::test::prompts_dir();

    const Episode episode = run_episode("q", tools, gateway, agent_cfg, prompts);
    expect(episode.steps.size() == 3, "expected exactly three steps");
    expect(episode.steps[0].error == "tool-disabled",
           "the disabled tool call must yield a tool-disabled observation");
    expect(episode.steps[0].observation.find("tool-disabled") != std::string::npos,
           "observation must name the tool-disabled error");
    expect(episode.steps[1].call.kind == ActionKind::GlobalBrowse, "agent should re-plan");
    expect(episode.final_answer == "A", "episode must still answer");
    expect(episode.terminated_by == Termination::answer_action, "episode must terminate");
}

} // namespace

int main() {
    const std::vector<Criterion> criteria = {
        {1, "segmentation-law", criterion_segmentation_law},
        {2, "retrieval-oracle-equivalence", criterion_retrieval_oracle},
        {3, "scale-invariance", criterion_scale_invariance},
        {4, "agent-termination", criterion_agent_termination},
        {5, "golden-episode-replay", criterion_golden_episode},
        {6, "end-to-end-fixture-benchmark", criterion_end_to_end_eval},
        {7, "behavior-classifier", criterion_behavior_classifier},
        {8, "answer-extraction", criterion_answer_extraction},
        {9, "frame-cap", criterion_frame_cap},
        {10, "database-round-trip", criterion_database_round_trip},
        {11, "service-protocol", criterion_service_protocol},
        {12, "ablation-switches", criterion_ablation_switches},
    };

    int failures = 0;
    for (const auto& criterion : criteria) {
        const auto start = std::chrono::steady_clock::now();
        std::string failure;
        try {
            criterion.run();
        } catch (const std::exception& e) {
            failure = e.what();
        }
        const double elapsed = seconds_since(start);
        char timing[32];
        std::snprintf(timing, sizeof(timing), "%.2fs", elapsed);
        if (failure.empty()) {
            std::printf("PASS %2d %-32s %s\n", criterion.number, criterion.name.c_str(), timing);
        } else {
            ++failures;
            std::printf("FAIL %2d %-32s %s  %s\n", criterion.number, criterion.name.c_str(),
                        timing, failure.c_str());
        }
    }
    if (failures > 0) {
        std::printf("%d of %zu criteria failed\n", failures, criteria.size());
        return 1;
    }
    std::printf("all %zu criteria passed\n", criteria.size());
    return 0;
}
