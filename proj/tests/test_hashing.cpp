// SPDX-License-Identifier: Apache-2.0
#include "vidagent/hashing.hpp"
#include "vidagent/strings.hpp"

#include <doctest.h>

using namespace vidagent;

TEST_CASE("fnv1a64 known vectors") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
    CHECK(fnv1a64("hello") == 0xa430d84680aabd0bull);
    CHECK(to_hex64(fnv1a64("")) == "cbf29ce484222325");
}

TEST_CASE("sha256 known vectors") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("sha256 incremental equals one-shot") {
    Sha256 h;
    h.update("ab");
    h.update("c");
    CHECK(h.hex_digest() == sha256_hex("abc"));
}

TEST_CASE("format_seconds trims trailing zeros") {
    CHECK(format_seconds(35.0) == "35");
    CHECK(format_seconds(12.5) == "12.5");
    CHECK(format_seconds(0.333) == "0.333");
    CHECK(format_seconds(1.0 / 3.0) == "0.333");
}

TEST_CASE("truncate_with_marker bounds the output") {
    CHECK(truncate_with_marker("short", 100) == "short");
    const std::string out = truncate_with_marker(std::string(50, 'x'), 20);
    CHECK(out.size() == 20);
    CHECK(out.substr(out.size() - 14) == "...[truncated]");
}

TEST_CASE("base64 basics") {
    CHECK(base64_encode("") == "");
    CHECK(base64_encode("f") == "Zg==");
    CHECK(base64_encode("fo") == "Zm8=");
    CHECK(base64_encode("foo") == "Zm9v");
}
