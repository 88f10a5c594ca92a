// SPDX-License-Identifier: Apache-2.0
#pragma once
// Shared text helpers with deterministic formatting.

#include <string>
#include <string_view>
#include <vector>

namespace vidagent {

// Seconds rendered as "12", "12.5", "0.333": up to three decimals, trailing
// zeros trimmed. Deterministic so rendered prompts and observations are stable.
std::string format_seconds(double seconds);

// Fixed-precision score rendering ("0.8123").
std::string format_score(double score, int decimals = 4);

std::string trim(std::string_view text);
std::string to_lower(std::string_view text);
std::vector<std::string> split_whitespace(std::string_view text);

// Head of `text` up to max_chars, with `marker` appended when elided.
std::string truncate_with_marker(std::string_view text, std::size_t max_chars,
                                 std::string_view marker = "...[truncated]");

std::string base64_encode(std::string_view bytes);

} // namespace vidagent
