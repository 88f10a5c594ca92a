// SPDX-License-Identifier: Apache-2.0
// Operator CLI: build a video database, ask one question, run a benchmark,
// analyze tool-use behavior, or serve the toolset over the wire protocol.

#include "vidagent/eval.hpp"
#include "vidagent/ingest.hpp"
#include "vidagent/service.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace vidagent;

namespace {

std::atomic<bool> g_stop{false};

void handle_signal(int) {
    g_stop = true;
}

struct BackendOptions {
    std::string backends_file;
    std::string prompts_dir = "prompts";
    std::string caption_backend = "stub-captioner";
    std::string embed_backend = "stub-embedder";
    std::string llm_backend;
    std::string vision_backend;
    int stub_embed_dim = 32;
};

void add_backend_options(CLI::App* cmd, BackendOptions& opts) {
    cmd->add_option("--backends", opts.backends_file,
                    "JSON file with backend configs ({\"backends\": [...]})");
    cmd->add_option("--prompts", opts.prompts_dir, "prompt templates directory")
        ->capture_default_str();
    cmd->add_option("--stub-embed-dim", opts.stub_embed_dim,
                    "dimension of the built-in stub embedder")
        ->capture_default_str();
}

ModelGateway make_gateway(const BackendOptions& opts) {
    ModelGateway gateway;
    // Built-in offline stubs; a backends file can override these ids.
    gateway.add_backend({.backend_id = "stub-captioner", .kind = "stub_captioner"});
    gateway.add_backend({.backend_id = "stub-embedder",
                         .kind = "hash_embed",
                         .embedding_dim = opts.stub_embed_dim});
    if (!opts.backends_file.empty()) {
        for (const auto& cfg : load_backend_configs(opts.backends_file)) {
            gateway.add_backend(cfg);
        }
    }
    return gateway;
}

ToolsetConfig make_toolset_config(const BackendOptions& opts,
                                  const std::vector<std::string>& disabled, int default_k) {
    ToolsetConfig cfg;
    cfg.default_k = default_k;
    cfg.embed_backend_id = opts.embed_backend;
    cfg.vision_backend_id = opts.vision_backend.empty() ? opts.llm_backend : opts.vision_backend;
    for (const auto& name : disabled) {
        cfg.enabled.erase(tool_kind_from_string(name));
    }
    return cfg;
}

std::map<std::string, HostedDatabase> load_manifest(const fs::path& path) {
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::invalid_argument, path.string() + ": " + e.what());
    }
    std::map<std::string, HostedDatabase> out;
    for (const auto& [video_id, root] : doc.items()) {
        HostedDatabase host;
        host.root = root.get<std::string>();
        host.db = std::make_shared<const VideoDatabase>(open(host.root));
        out[video_id] = std::move(host);
    }
    return out;
}

int run_build(const std::string& source, const std::string& out_root, IngestConfig cfg,
              const BackendOptions& opts) {
    cfg.caption_backend_id = opts.caption_backend;
    cfg.embed_backend_id = opts.embed_backend;
    cfg.prompts_dir = opts.prompts_dir;
    ModelGateway gateway = make_gateway(opts);
    const auto db = build_database(source, cfg, gateway, out_root,
                                   [](int clip, int total, const std::string& stage) {
                                       std::cerr << "[build] clip " << clip + 1 << "/" << total
                                                 << " " << stage << "\n";
                                   });
    std::cout << "built " << db.clips.size() << " clips at " << out_root << "\n";
    return 0;
}

int run_ask(const std::string& db_root, const std::string& question, int k, int max_steps,
            const std::vector<std::string>& disabled, const std::string& episode_out,
            const BackendOptions& opts) {
    if (opts.llm_backend.empty()) {
        throw Error(ErrorCode::invalid_argument, "--llm-backend is required for ask");
    }
    ModelGateway gateway = make_gateway(opts);
    const VideoDatabase db = open(db_root);
    const PromptLibrary prompts(opts.prompts_dir);
    Toolset tools(db, make_toolset_config(opts, disabled, k), gateway, prompts, db_root);

    AgentConfig agent_cfg;
    agent_cfg.max_steps = max_steps;
    agent_cfg.llm_backend_id = opts.llm_backend;
    agent_cfg.prompts_dir = opts.prompts_dir;

    const Episode episode = run_episode(question, tools, gateway, agent_cfg, prompts);

    fs::path out = episode_out;
    if (out.empty()) {
        const auto now = std::chrono::duration_cast<std::chrono::milliseconds>(
                             std::chrono::system_clock::now().time_since_epoch())
                             .count();
        out = fs::path("runs") / ("episode_" + std::to_string(now) + ".json");
    }
    atomic_write_file(out, episode_to_json(episode).dump(2) + "\n");
    std::cerr << "[ask] episode written to " << out << "\n";
    std::cout << episode.final_answer << "\n";
    return 0;
}

int run_eval(const std::string& manifest_path, const std::string& questions_path,
             const std::string& out_dir, int max_steps,
             const std::vector<std::string>& disabled, const std::string& abstain,
             std::uint64_t seed, const BackendOptions& opts) {
    if (opts.llm_backend.empty()) {
        throw Error(ErrorCode::invalid_argument, "--llm-backend is required for eval");
    }
    ModelGateway gateway = make_gateway(opts);
    const auto databases = load_manifest(manifest_path);
    const auto questions = load_questions_jsonl(questions_path);
    const PromptLibrary prompts(opts.prompts_dir);

    AgentConfig agent_cfg;
    agent_cfg.max_steps = max_steps;
    agent_cfg.llm_backend_id = opts.llm_backend;
    agent_cfg.prompts_dir = opts.prompts_dir;

    fs::create_directories(fs::path(out_dir) / "episodes");
    std::map<std::string, Episode> episodes;
    for (const auto& q : questions) {
        const auto it = databases.find(q.video_id);
        if (it == databases.end()) {
            throw Error(ErrorCode::not_found,
                        "question " + q.question_id + ": no database for video " + q.video_id);
        }
        Toolset tools(*it->second.db, make_toolset_config(opts, disabled, 16), gateway, prompts,
                      it->second.root);
        Episode episode = run_episode(q.render(), tools, gateway, agent_cfg, prompts);
        atomic_write_file(fs::path(out_dir) / "episodes" / (q.question_id + ".json"),
                          episode_to_json(episode).dump(2) + "\n");
        std::cerr << "[eval] " << q.question_id << " answered\n";
        episodes[q.question_id] = std::move(episode);
    }

    const auto policy = abstain == "random" ? AbstainPolicy::random_seeded_choice
                                            : AbstainPolicy::count_incorrect;
    const AccuracyTable table = evaluate(questions, episodes, policy, seed);
    atomic_write_file(fs::path(out_dir) / "accuracy.json", accuracy_to_json(table).dump(2) + "\n");
    atomic_write_file(fs::path(out_dir) / "accuracy.txt", accuracy_to_text(table));
    std::cout << accuracy_to_text(table);
    return 0;
}

int run_analyze(const std::vector<std::string>& episode_paths, const std::string& questions_path,
                const std::string& out_dir) {
    std::vector<fs::path> files;
    for (const auto& p : episode_paths) {
        if (fs::is_directory(p)) {
            for (const auto& entry : fs::directory_iterator(p)) {
                if (entry.path().extension() == ".json") {
                    files.push_back(entry.path());
                }
            }
        } else {
            files.push_back(p);
        }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
        throw Error(ErrorCode::not_found, "no episode files found");
    }

    std::vector<Episode> episodes;
    std::vector<std::string> stems;
    for (const auto& file : files) {
        try {
            episodes.push_back(episode_from_json(json::parse(read_file(file))));
        } catch (const json::exception& e) {
            throw Error(ErrorCode::invalid_argument, file.string() + ": " + e.what());
        }
        stems.push_back(file.stem().string());
    }

    std::optional<std::vector<bool>> correctness;
    if (!questions_path.empty()) {
        std::map<std::string, BenchmarkQuestion> by_id;
        for (auto& q : load_questions_jsonl(questions_path)) {
            by_id[q.question_id] = std::move(q);
        }
        std::vector<bool> flags;
        for (std::size_t i = 0; i < episodes.size(); ++i) {
            const auto it = by_id.find(stems[i]);
            if (it == by_id.end()) {
                throw Error(ErrorCode::missing_episode,
                            "episode file " + stems[i] + ".json has no matching question");
            }
            const auto choice = extract_choice(episodes[i].final_answer, it->second.options);
            flags.push_back(choice && *choice == it->second.ground_truth);
        }
        correctness = std::move(flags);
    }

    const BehaviorReport report = aggregate(episodes, correctness);
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        atomic_write_file(fs::path(out_dir) / "behavior.json",
                          behavior_to_json(report).dump(2) + "\n");
        atomic_write_file(fs::path(out_dir) / "behavior.txt", behavior_to_text(report));
    }
    std::cout << behavior_to_text(report);
    return 0;
}

int run_serve(const std::string& manifest_path, const std::vector<std::string>& db_specs,
              int listen_port, int max_steps, const std::vector<std::string>& disabled,
              const BackendOptions& opts) {
    ModelGateway gateway = make_gateway(opts);
    std::map<std::string, HostedDatabase> databases;
    if (!manifest_path.empty()) {
        databases = load_manifest(manifest_path);
    }
    for (const auto& spec : db_specs) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos) {
            throw Error(ErrorCode::invalid_argument, "--db expects id=path, got: " + spec);
        }
        HostedDatabase host;
        host.root = spec.substr(eq + 1);
        host.db = std::make_shared<const VideoDatabase>(open(host.root));
        databases[spec.substr(0, eq)] = std::move(host);
    }
    if (databases.empty()) {
        throw Error(ErrorCode::invalid_argument, "serve needs --manifest or --db id=path");
    }

    ServiceConfig cfg;
    cfg.toolset = make_toolset_config(opts, disabled, 16);
    cfg.agent.max_steps = max_steps;
    cfg.agent.llm_backend_id = opts.llm_backend;
    cfg.agent.prompts_dir = opts.prompts_dir;
    cfg.prompts_dir = opts.prompts_dir;

    ToolService service(std::move(databases), cfg, gateway);
    std::signal(SIGINT, handle_signal);
    std::signal(SIGTERM, handle_signal);
    if (listen_port > 0) {
        std::cerr << "[serve] listening on 127.0.0.1:" << listen_port << "\n";
        service.serve_tcp(static_cast<std::uint16_t>(listen_port), g_stop);
    } else {
        service.serve_stream(std::cin, std::cout);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"video search agent: database builder, question answering, evaluation, service"};
    app.require_subcommand(1);

    BackendOptions opts;
    // Precedence: flags > environment > built-in defaults. Secrets only ever
    // come from the environment variables named in the backends file.
    if (const char* env = std::getenv("VIDAGENT_BACKENDS"); env && *env) {
        opts.backends_file = env;
    }
    if (const char* env = std::getenv("VIDAGENT_PROMPTS"); env && *env) {
        opts.prompts_dir = env;
    }

    // build
    auto* build = app.add_subcommand("build", "build a video database from a source video");
    std::string source, out_root, transcript, video_id, decode_command, probe_command;
    IngestConfig ingest_cfg;
    build->add_option("--source", source, "source video (*.video.json for the synthetic format)")
        ->required();
    build->add_option("--out", out_root, "output database directory")->required();
    build->add_option("--clip-len", ingest_cfg.clip_len_s, "clip length in seconds")
        ->capture_default_str();
    build->add_option("--fps", ingest_cfg.decode_fps, "decode frame rate")->capture_default_str();
    build->add_option("--resize-shorter", ingest_cfg.resize_shorter_side_px,
                      "max shorter side in pixels")
        ->capture_default_str();
    build->add_option("--resize-longer", ingest_cfg.resize_longer_side_px,
                      "max longer side in pixels")
        ->capture_default_str();
    build->add_option("--transcript", transcript, "transcript JSON file");
    build->add_option("--video-id", video_id, "database video id (default: source stem)");
    build->add_option("--decode-command", decode_command, "external decoder command template");
    build->add_option("--probe-command", probe_command, "external probe command template");
    build->add_option("--caption-backend", opts.caption_backend, "caption backend id")
        ->capture_default_str();
    build->add_option("--embed-backend", opts.embed_backend, "embedding backend id")
        ->capture_default_str();
    add_backend_options(build, opts);

    // ask
    auto* ask = app.add_subcommand("ask", "answer one question about a built database");
    std::string db_root, question, episode_out;
    int k = 16, max_steps = 15;
    std::vector<std::string> disabled;
    ask->add_option("--db", db_root, "database root")->required();
    ask->add_option("--question", question, "the question")->required();
    ask->add_option("--k", k, "default top-k for clip search")->capture_default_str();
    ask->add_option("--max-steps", max_steps, "reasoning step cap")->capture_default_str();
    ask->add_option("--disable-tool", disabled, "disable a tool (repeatable)");
    ask->add_option("--episode-out", episode_out, "where to write the episode JSON");
    ask->add_option("--llm-backend", opts.llm_backend, "reasoning backend id");
    ask->add_option("--vision-backend", opts.vision_backend,
                    "vision backend id (default: the reasoning backend)");
    ask->add_option("--embed-backend", opts.embed_backend, "embedding backend id")
        ->capture_default_str();
    add_backend_options(ask, opts);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "run a multiple-choice benchmark");
    std::string manifest_path, questions_path, eval_out = "eval_out", abstain = "incorrect";
    std::uint64_t seed = 0;
    eval_cmd->add_option("--manifest", manifest_path, "JSON map of video_id -> database root")
        ->required();
    eval_cmd->add_option("--questions", questions_path, "questions JSONL")->required();
    eval_cmd->add_option("--out", eval_out, "output directory")->capture_default_str();
    eval_cmd->add_option("--max-steps", max_steps, "reasoning step cap")->capture_default_str();
    eval_cmd->add_option("--disable-tool", disabled, "disable a tool (repeatable)");
    eval_cmd->add_option("--abstain", abstain, "abstain policy: incorrect|random")
        ->capture_default_str();
    eval_cmd->add_option("--seed", seed, "seed for the random abstain policy");
    eval_cmd->add_option("--llm-backend", opts.llm_backend, "reasoning backend id");
    eval_cmd->add_option("--vision-backend", opts.vision_backend, "vision backend id");
    eval_cmd->add_option("--embed-backend", opts.embed_backend, "embedding backend id")
        ->capture_default_str();
    add_backend_options(eval_cmd, opts);

    // analyze
    auto* analyze = app.add_subcommand("analyze", "classify tool-use behavior of episodes");
    std::vector<std::string> episode_paths;
    std::string analyze_questions, analyze_out;
    analyze->add_option("--episodes", episode_paths, "episode JSON files or directories")
        ->required();
    analyze->add_option("--questions", analyze_questions,
                        "questions JSONL for per-class accuracy");
    analyze->add_option("--out", analyze_out, "output directory");

    // serve
    auto* serve = app.add_subcommand("serve", "serve the toolset over newline-delimited JSON-RPC");
    std::vector<std::string> db_specs;
    int listen_port = 0;
    serve->add_option("--manifest", manifest_path, "JSON map of video_id -> database root");
    serve->add_option("--db", db_specs, "hosted database as id=path (repeatable)");
    serve->add_option("--listen", listen_port, "TCP port on 127.0.0.1 (default: stdio)");
    serve->add_option("--max-steps", max_steps, "reasoning step cap for ask")
        ->capture_default_str();
    serve->add_option("--disable-tool", disabled, "disable a tool (repeatable)");
    serve->add_option("--llm-backend", opts.llm_backend, "reasoning backend id");
    serve->add_option("--vision-backend", opts.vision_backend, "vision backend id");
    serve->add_option("--embed-backend", opts.embed_backend, "embedding backend id")
        ->capture_default_str();
    add_backend_options(serve, opts);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            return app.exit(e); // --help / --version
        }
        std::cerr << e.what() << "\n";
        return 2;
    }

    try {
        if (build->parsed()) {
            ingest_cfg.video_id = video_id;
            ingest_cfg.decode_command = decode_command;
            ingest_cfg.probe_command = probe_command;
            if (!transcript.empty()) {
                ingest_cfg.transcript_path = transcript;
            }
            return run_build(source, out_root, ingest_cfg, opts);
        }
        if (ask->parsed()) {
            return run_ask(db_root, question, k, max_steps, disabled, episode_out, opts);
        }
        if (eval_cmd->parsed()) {
            return run_eval(manifest_path, questions_path, eval_out, max_steps, disabled, abstain,
                            seed, opts);
        }
        if (analyze->parsed()) {
            return run_analyze(episode_paths, analyze_questions, analyze_out);
        }
        if (serve->parsed()) {
            return run_serve(manifest_path, db_specs, listen_port, max_steps, disabled, opts);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 2;
}
