// SPDX-License-Identifier: Apache-2.0
#include "vidagent/model_gateway.hpp"

#include "vidagent/fsutil.hpp"
#include "vidagent/hashing.hpp"
#include "support.hpp"

#include <doctest.h>
#include <httplib.h>

#include <atomic>
#include <sstream>
#include <thread>

using namespace vidagent;
using vidagent::test::TempDir;
using nlohmann::json;

namespace {

ModelRequest simple_request(const std::string& backend, const std::string& text) {
    ModelRequest req;
    req.backend_id = backend;
    req.messages = {{"user", text}};
    return req;
}

} // namespace

TEST_CASE("canonical hash is stable across json field ordering") {
    // Same request assembled from two differently-ordered JSON sources.
    const json a = json::parse(R"({"role": "user", "text": "hello"})");
    const json b = json::parse(R"({"text": "hello", "role": "user"})");
    ModelRequest ra, rb;
    ra.backend_id = rb.backend_id = "m";
    ra.messages = {{a["role"], a["text"]}};
    rb.messages = {{b["role"], b["text"]}};
    CHECK(canonical_request_hash(ra) == canonical_request_hash(rb));

    SUBCASE("one changed character changes the hash") {
        rb.messages[0].text = "hellp";
        CHECK(canonical_request_hash(ra) != canonical_request_hash(rb));
    }
}

TEST_CASE("canonical hash addresses images by content") {
    TempDir tmp("hash_img");
    atomic_write_file(tmp.path() / "one.jpg", "same-bytes");
    atomic_write_file(tmp.path() / "two.jpg", "same-bytes");
    atomic_write_file(tmp.path() / "other.jpg", "different");

    ModelRequest a = simple_request("m", "look");
    a.image_attachments = {tmp.path() / "one.jpg"};
    ModelRequest b = simple_request("m", "look");
    b.image_attachments = {tmp.path() / "two.jpg"};
    ModelRequest c = simple_request("m", "look");
    c.image_attachments = {tmp.path() / "other.jpg"};

    CHECK(canonical_request_hash(a) == canonical_request_hash(b));
    CHECK(canonical_request_hash(a) != canonical_request_hash(c));
}

TEST_CASE("record then replay round-trips a response") {
    TempDir tmp("fixtures");
    ModelGateway gateway;
    auto scripted = std::make_shared<SequenceChatBackend>(
        std::vector<ModelResponse>{test::text_response("Answer: B")});
    gateway.add_backend({.backend_id = "rec", .mode = "record", .fixture_dir = tmp.path()},
                        scripted);

    const auto req = simple_request("rec", "what is it?");
    const auto live = gateway.complete(req);
    CHECK(live.text == "Answer: B");

    ModelGateway replay_gw;
    replay_gw.add_backend({.backend_id = "rep", .mode = "replay", .fixture_dir = tmp.path()},
                          nullptr);
    auto replay_req = req;
    replay_req.backend_id = "rep";
    CHECK(replay_gw.complete(replay_req).text == "Answer: B");
    CHECK(replay_gw.complete(replay_req).text == "Answer: B"); // deterministic

    SUBCASE("unknown request in replay mode is fixture-missing") {
        auto other = simple_request("rep", "different question");
        try {
            replay_gw.complete(other);
            FAIL("expected fixture-missing");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::fixture_missing);
        }
    }
}

TEST_CASE("retry policy retries transport failures but never content filters") {
    std::atomic<int> calls{0};

    SUBCASE("transport errors retry up to max_attempts") {
        ModelGateway gateway;
        gateway.add_backend(
            {.backend_id = "flaky", .retry = {.max_attempts = 3, .backoff_s = 0.0}},
            std::make_shared<CallbackChatBackend>([&](const ModelRequest&) -> ModelResponse {
                if (++calls < 3) {
                    throw Error(ErrorCode::transport_error, "boom");
                }
                return test::text_response("ok");
            }));
        CHECK(gateway.complete(simple_request("flaky", "q")).text == "ok");
        CHECK(calls == 3);
    }

    SUBCASE("exhausted retries surface the error") {
        ModelGateway gateway;
        gateway.add_backend(
            {.backend_id = "dead", .retry = {.max_attempts = 2, .backoff_s = 0.0}},
            std::make_shared<CallbackChatBackend>([&](const ModelRequest&) -> ModelResponse {
                ++calls;
                throw Error(ErrorCode::rate_limited, "slow down");
            }));
        try {
            gateway.complete(simple_request("dead", "q"));
            FAIL("expected rate-limited");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::rate_limited);
        }
        CHECK(calls == 2);
    }

    SUBCASE("content filter is surfaced immediately, no retry") {
        ModelGateway gateway;
        gateway.add_backend(
            {.backend_id = "filtered", .retry = {.max_attempts = 5, .backoff_s = 0.0}},
            std::make_shared<CallbackChatBackend>([&](const ModelRequest&) -> ModelResponse {
                ++calls;
                throw Error(ErrorCode::content_filtered, "blocked");
            }));
        try {
            gateway.complete(simple_request("filtered", "q"));
            FAIL("expected content-filtered");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::content_filtered);
        }
        CHECK(calls == 1);
    }
}

TEST_CASE("hash embedder follows its documented projection rule") {
    // Rule: v[fnv1a64(token) % dim] += 1 per whitespace token, then normalize.
    const int dim = 8;
    HashEmbedBackend backend(dim);

    SUBCASE("'abc' lands on a single known index") {
        const auto v = HashEmbedBackend::embed_one("abc", dim);
        const auto expected_index =
            static_cast<Eigen::Index>(fnv1a64("abc") % static_cast<std::uint64_t>(dim));
        for (Eigen::Index i = 0; i < dim; ++i) {
            CHECK(v[i] == doctest::Approx(i == expected_index ? 1.0f : 0.0f));
        }
    }

    SUBCASE("identical texts embed identically; output is unit norm") {
        const auto a = backend.embed({"the red car turns left"})[0];
        const auto b = backend.embed({"the red car turns left"})[0];
        CHECK(a == b);
        CHECK(a.norm() == doctest::Approx(1.0f));
    }

    SUBCASE("independent recomputation matches the backend") {
        const std::string text = "a few distinct tokens here";
        Eigen::VectorXf expected = Eigen::VectorXf::Zero(dim);
        std::istringstream in(text);
        std::string token;
        while (in >> token) {
            expected[static_cast<Eigen::Index>(fnv1a64(token) %
                                               static_cast<std::uint64_t>(dim))] += 1.0f;
        }
        expected.normalize();
        CHECK(backend.embed({text})[0] == expected);
    }

    SUBCASE("empty text is invalid") {
        CHECK_THROWS_AS(backend.embed({""}), Error);
        CHECK_THROWS_AS(backend.embed({"   "}), Error);
    }
}

TEST_CASE("gateway embed preserves order and batches like singles") {
    TempDir tmp("embed_fix");
    ModelGateway gateway = test::make_stub_gateway(16);

    const std::vector<std::string> texts = {"first text", "second text", "third text"};
    const auto batch = gateway.embed("embedder", texts);
    REQUIRE(batch.size() == 3);
    for (std::size_t i = 0; i < texts.size(); ++i) {
        CHECK(batch[i].size() == 16);
        CHECK(batch[i] == gateway.embed("embedder", {texts[i]})[0]);
    }
    CHECK_THROWS_AS(gateway.embed("embedder", {}), Error);

    SUBCASE("record/replay per text keeps batch equivalence") {
        ModelGateway rec;
        rec.add_backend({.backend_id = "e",
                         .kind = "hash_embed",
                         .mode = "record",
                         .fixture_dir = tmp.path(),
                         .embedding_dim = 16});
        const auto recorded = rec.embed("e", texts);

        ModelGateway rep;
        rep.add_backend({.backend_id = "e",
                         .mode = "replay",
                         .fixture_dir = tmp.path(),
                         .embedding_dim = 16},
                        nullptr);
        const auto replayed = rep.embed("e", texts);
        REQUIRE(replayed.size() == recorded.size());
        for (std::size_t i = 0; i < texts.size(); ++i) {
            CHECK(replayed[i] == recorded[i]);
            // Singleton replays concatenate to the same batch.
            CHECK(rep.embed("e", {texts[i]})[0] == recorded[i]);
        }
    }
}

TEST_CASE("stub captioner evolves subjects deterministically from the prompt") {
    StubCaptionerBackend captioner;
    ModelRequest req;
    req.backend_id = "captioner";
    req.messages = {{"user", "Clip index: 3\nTime range: [15, 20) seconds\n"}};
    const auto resp = captioner.complete(req);
    const auto doc = json::parse(resp.text);
    CHECK(doc.at("caption").get<std::string>().find("person_2") != std::string::npos);
    CHECK(doc.at("new_subjects").size() == 1); // index 3 starts a new subject
    CHECK(captioner.complete(req).text == resp.text);

    SUBCASE("non-multiple-of-three updates instead") {
        req.messages = {{"user", "Clip index: 4\nTime range: [20, 25) seconds\n"}};
        const auto doc4 = json::parse(captioner.complete(req).text);
        CHECK(doc4.at("new_subjects").empty());
        CHECK(doc4.at("updated_subjects").size() == 1);
    }
}

TEST_CASE("per-backend rate floor spaces out consecutive calls") {
    ModelGateway gateway;
    gateway.add_backend({.backend_id = "slowpoke", .min_interval_s = 0.05},
                        std::make_shared<CallbackChatBackend>([](const ModelRequest&) {
                            return test::text_response("ok");
                        }));
    const auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < 3; ++i) {
        gateway.complete(simple_request("slowpoke", "ping"));
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    CHECK(elapsed >= 0.1); // two enforced gaps of at least 50 ms
}

TEST_CASE("image attachments are rejected by non-vision backends") {
    TempDir tmp("novision");
    atomic_write_file(tmp.path() / "frame.jpg", "bytes");
    ModelGateway gateway;
    gateway.add_backend({.backend_id = "e", .kind = "hash_embed", .embedding_dim = 8});
    ModelRequest req = simple_request("e", "describe");
    req.image_attachments = {tmp.path() / "frame.jpg"};
    try {
        gateway.complete(req);
        FAIL("expected invalid-argument");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::invalid_argument);
    }
}

TEST_CASE("no secret material leaks into fixtures") {
    TempDir tmp("secrets");
    ::setenv("VIDAGENT_TEST_KEY", "super-secret-token-12345", 1);
    ModelGateway gateway;
    gateway.add_backend({.backend_id = "rec",
                         .api_key_env = "VIDAGENT_TEST_KEY",
                         .mode = "record",
                         .fixture_dir = tmp.path()},
                        std::make_shared<SequenceChatBackend>(
                            std::vector<ModelResponse>{test::text_response("fine")}));
    gateway.complete(simple_request("rec", "hello"));

    int files = 0;
    for (const auto& entry : std::filesystem::directory_iterator(tmp.path())) {
        ++files;
        const std::string content = read_file(entry.path());
        CHECK(content.find("super-secret-token-12345") == std::string::npos);
    }
    CHECK(files == 1);
}

TEST_CASE("provider response parsing maps bodies and failures") {
    SUBCASE("plain text completion") {
        const json body = {{"choices", json::array({{{"finish_reason", "stop"},
                                                     {"message", {{"content", "hi"}}}}})},
                           {"usage", {{"prompt_tokens", 5}, {"completion_tokens", 2}}}};
        const auto resp = parse_chat_response(body);
        CHECK(resp.text == "hi");
        CHECK(resp.finish_reason == FinishReason::stop);
        CHECK(resp.usage.prompt_tokens == 5);
    }

    SUBCASE("tool call with string arguments") {
        const json body = {
            {"choices",
             json::array(
                 {{{"finish_reason", "tool_calls"},
                   {"message",
                    {{"content", nullptr},
                     {"tool_calls",
                      json::array({{{"function",
                                     {{"name", "ClipSearch"},
                                      {"arguments", "{\"query\":\"red car\"}"}}}}})}}}}})}};
        const auto resp = parse_chat_response(body);
        REQUIRE(resp.tool_call.has_value());
        CHECK(resp.tool_call->name == "ClipSearch");
        CHECK(resp.tool_call->parameters.at("query") == "red car");
        CHECK(resp.finish_reason == FinishReason::tool_call);
    }

    SUBCASE("content_filter finish reason raises the typed error") {
        const json body = {{"choices", json::array({{{"finish_reason", "content_filter"},
                                                     {"message", {{"content", nullptr}}}}})}};
        CHECK_THROWS_AS(parse_chat_response(body), Error);
    }

    SUBCASE("http failures classify by status and body") {
        try {
            throw_http_failure(429, "{}");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::rate_limited);
        }
        try {
            throw_http_failure(503, "upstream");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::transport_error);
        }
        try {
            throw_http_failure(400, R"({"error":{"code":"content_filter"}})");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::content_filtered);
        }
        try {
            throw_http_failure(401, "unauthorized");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::backend_error);
        }
    }
}

TEST_CASE("http backend round-trips against a local server") {
    httplib::Server server;
    std::atomic<int> hits{0};
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        ++hits;
        const auto body = json::parse(req.body);
        CHECK(body.at("model") == "test-model");
        if (hits == 1) {
            res.status = 429; // first call rate-limited; client must retry
            res.set_content("{}", "application/json");
            return;
        }
        const json reply = {{"choices", json::array({{{"finish_reason", "stop"},
                                                      {"message", {{"content", "pong"}}}}})}};
        res.set_content(reply.dump(), "application/json");
    });
    server.Post("/v1/embeddings", [&](const httplib::Request& req, httplib::Response& res) {
        const auto body = json::parse(req.body);
        json data = json::array();
        for (std::size_t i = 0; i < body.at("input").size(); ++i) {
            data.push_back({{"embedding", json::array({0.1, 0.2, 0.3})}});
        }
        res.set_content(json{{"data", data}}.dump(), "application/json");
    });

    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread server_thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    ModelGateway gateway;
    gateway.add_backend({.backend_id = "http",
                         .kind = "http",
                         .endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1",
                         .model_name = "test-model",
                         .retry = {.max_attempts = 3, .backoff_s = 0.0}});

    CHECK(gateway.complete(simple_request("http", "ping")).text == "pong");
    CHECK(hits == 2);

    const auto vectors = gateway.embed("http", {"a", "b"});
    REQUIRE(vectors.size() == 2);
    CHECK(vectors[0].size() == 3);
    CHECK(vectors[0][1] == doctest::Approx(0.2f));

    server.stop();
    server_thread.join();
}
