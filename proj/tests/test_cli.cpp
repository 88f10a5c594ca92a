// SPDX-License-Identifier: Apache-2.0
#include "vidagent/eval.hpp"
#include "vidagent/fsutil.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cstdio>
#include <cstdlib>

using namespace vidagent;
using vidagent::test::TempDir;
using nlohmann::json;

namespace {

struct CommandResult {
    int exit_code = -1;
    std::string output; // stdout only
};

CommandResult run_cli(const std::string& args) {
    const std::string cmd = std::string(TEST_CLI_PATH) + " " + args + " 2>/dev/null";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    CommandResult result;
    char buf[4096];
    while (fgets(buf, sizeof(buf), pipe)) {
        result.output += buf;
    }
    const int status = pclose(pipe);
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

std::string q(const std::filesystem::path& p) {
    return "'" + p.string() + "'";
}

} // namespace

TEST_CASE("cli build constructs a database and reruns as a no-op") {
    TempDir tmp("cli_build");
    const auto source = vidagent::test::fixtures_dir() / "fixture_60s.video.json";
    const auto out = tmp.path() / "db";
    const std::string args = "build --source " + q(source) + " --out " + q(out) +
                             " --prompts " + q(vidagent::test::prompts_dir()) +
                             " --stub-embed-dim 16";

    const auto first = run_cli(args);
    CHECK(first.exit_code == 0);
    CHECK(first.output.find("12 clips") != std::string::npos);
    CHECK(open(out).clips.size() == 12);

    const auto rerun = run_cli(args);
    CHECK(rerun.exit_code == 0);

    SUBCASE("missing source exits nonzero with a data error") {
        const auto missing = run_cli("build --source /nonexistent.video.json --out " +
                                     q(tmp.path() / "db2") + " --prompts " +
                                     q(vidagent::test::prompts_dir()));
        CHECK(missing.exit_code == 3);
    }

    SUBCASE("usage errors exit 2") {
        CHECK(run_cli("build --source only-no-out").exit_code == 2);
        CHECK(run_cli("definitely-not-a-subcommand").exit_code == 2);
    }
}

TEST_CASE("cli ask prints the scripted answer and honors --disable-tool") {
    TempDir tmp("cli_ask");
    const auto source = vidagent::test::fixtures_dir() / "fixture_60s.video.json";
    const auto db = tmp.path() / "db";
    REQUIRE(run_cli("build --source " + q(source) + " --out " + q(db) + " --prompts " +
                    q(vidagent::test::prompts_dir()) + " --stub-embed-dim 16")
                .exit_code == 0);

    // Scripted reasoning model: ClipSearch first, then Answer.
    const json script{
        {"responses",
         json::array(
             {{{"match", "[step 1]"},
               {"text", "done\n```action\n{\"action\": \"Answer\", \"answer\": \"B\"}\n```"}},
              {{"match", ""},
               {"text",
                "search\n```action\n{\"action\": \"ClipSearch\", \"query\": \"x\"}\n```"}}})}};
    atomic_write_file(tmp.path() / "script.json", script.dump());
    const json backends{{"backends", json::array({{{"backend_id", "scripted-llm"},
                                                   {"kind", "scripted"},
                                                   {"script_path",
                                                    (tmp.path() / "script.json").string()}}})}};
    atomic_write_file(tmp.path() / "backends.json", backends.dump());

    const std::string common = " --db " + q(db) + " --backends " + q(tmp.path() / "backends.json") +
                               " --llm-backend scripted-llm --prompts " +
                               q(vidagent::test::prompts_dir()) + " --stub-embed-dim 16";

    const auto episode_path = tmp.path() / "episode.json";
    const auto ask = run_cli("ask --question 'which?'" + common + " --episode-out " +
                             q(episode_path));
    CHECK(ask.exit_code == 0);
    CHECK(ask.output == "B\n");
    const auto episode = episode_from_json(json::parse(read_file(episode_path)));
    CHECK(episode.steps.size() == 2);
    CHECK(episode.final_answer == "B");

    SUBCASE("--disable-tool clip_search records tool-disabled observations") {
        const auto episode2_path = tmp.path() / "episode2.json";
        const auto ask2 = run_cli("ask --question 'which?'" + common +
                                  " --disable-tool clip_search --episode-out " + q(episode2_path));
        CHECK(ask2.exit_code == 0);
        const auto ep2 = episode_from_json(json::parse(read_file(episode2_path)));
        REQUIRE(ep2.steps.size() == 2);
        CHECK(ep2.steps[0].error == "tool-disabled");
        CHECK(ep2.steps[0].observation.find("tool-disabled") != std::string::npos);
    }

    SUBCASE("invalid database root fails with a data error") {
        const auto bad = run_cli("ask --question x --db /no/such/dir --llm-backend scripted-llm"
                                 " --backends " +
                                 q(tmp.path() / "backends.json") + " --prompts " +
                                 q(vidagent::test::prompts_dir()));
        CHECK(bad.exit_code == 3);
    }

    SUBCASE("a backend with no matching script exits with the backend error code") {
        atomic_write_file(tmp.path() / "empty_script.json",
                          json{{"responses", json::array()}}.dump());
        const json empty_backends{
            {"backends", json::array({{{"backend_id", "scripted-llm"},
                                       {"kind", "scripted"},
                                       {"script_path",
                                        (tmp.path() / "empty_script.json").string()}}})}};
        atomic_write_file(tmp.path() / "empty_backends.json", empty_backends.dump());
        const auto dead = run_cli("ask --question x --db " + q(db) + " --backends " +
                                  q(tmp.path() / "empty_backends.json") +
                                  " --llm-backend scripted-llm --prompts " +
                                  q(vidagent::test::prompts_dir()) + " --stub-embed-dim 16");
        CHECK(dead.exit_code == 4);
    }
}

TEST_CASE("cli analyze classifies episode files") {
    TempDir tmp("cli_analyze");
    // Two hand-written episodes: one GlobalBrowseOnly, one SimpleAction.
    Episode a;
    a.user_query = "q";
    a.final_answer = "A";
    AgentStep s1;
    s1.index = 1;
    s1.call.kind = ActionKind::GlobalBrowse;
    s1.observation = "o";
    a.steps.push_back(s1);
    AgentStep s2;
    s2.index = 2;
    s2.call = {ActionKind::Answer, json{{"answer", "A"}}};
    a.steps.push_back(s2);

    Episode b = a;
    b.steps[0].call.kind = ActionKind::ClipSearch;

    std::filesystem::create_directories(tmp.path() / "episodes");
    atomic_write_file(tmp.path() / "episodes" / "q1.json", episode_to_json(a).dump());
    atomic_write_file(tmp.path() / "episodes" / "q2.json", episode_to_json(b).dump());

    const auto result = run_cli("analyze --episodes " + q(tmp.path() / "episodes") + " --out " +
                                q(tmp.path() / "report"));
    CHECK(result.exit_code == 0);
    const auto report = json::parse(read_file(tmp.path() / "report" / "behavior.json"));
    CHECK(report.at("total") == 2);

    SUBCASE("malformed questions file names the offending line") {
        atomic_write_file(tmp.path() / "bad.jsonl", "{}\n");
        const auto bad = run_cli("analyze --episodes " + q(tmp.path() / "episodes") +
                                 " --questions " + q(tmp.path() / "bad.jsonl"));
        CHECK(bad.exit_code == 2);
    }
}
