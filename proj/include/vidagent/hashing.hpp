// SPDX-License-Identifier: Apache-2.0
#pragma once
// Content hashing used for file checksums (FNV-1a 64) and fixture keys (SHA-256).

#include <cstdint>
#include <string>
#include <string_view>

namespace vidagent {

constexpr std::uint64_t kFnv1a64OffsetBasis = 0xcbf29ce484222325ull;

std::uint64_t fnv1a64(const void* data, std::size_t size,
                      std::uint64_t seed = kFnv1a64OffsetBasis);
std::uint64_t fnv1a64(std::string_view text);
std::string to_hex64(std::uint64_t value);

// Incremental SHA-256. Produces the standard lowercase hex digest.
class Sha256 {
public:
    Sha256();
    void update(const void* data, std::size_t size);
    void update(std::string_view text) { update(text.data(), text.size()); }
    std::string hex_digest();

private:
    void process_block(const std::uint8_t* block);

    std::uint32_t state_[8];
    std::uint64_t total_bytes_ = 0;
    std::uint8_t buffer_[64];
    std::size_t buffer_len_ = 0;
};

std::string sha256_hex(std::string_view data);

} // namespace vidagent
