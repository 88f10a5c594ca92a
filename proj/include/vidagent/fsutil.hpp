// SPDX-License-Identifier: Apache-2.0
#pragma once
// Small filesystem helpers: atomic writes, whole-file IO, JPEG header probing.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace vidagent {

// Writes to <path>.tmp then renames over <path>. Creates parent directories.
void atomic_write_file(const std::filesystem::path& path, std::string_view bytes);

void append_file(const std::filesystem::path& path, std::string_view bytes);

std::string read_file(const std::filesystem::path& path);

std::vector<std::string> read_lines(const std::filesystem::path& path);

struct ImageDims {
    int width = 0;
    int height = 0;
};

// Reads width/height from a JPEG's SOF segment without decoding pixel data.
ImageDims read_jpeg_dimensions(const std::filesystem::path& path);

} // namespace vidagent
