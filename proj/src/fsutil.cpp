// SPDX-License-Identifier: Apache-2.0
#include "vidagent/fsutil.hpp"

#include "vidagent/errors.hpp"

#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace vidagent {

void atomic_write_file(const fs::path& path, std::string_view bytes) {
    std::error_code ec;
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path(), ec);
    }
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error(ErrorCode::io_error, "cannot write " + tmp.string());
        }
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) {
            throw Error(ErrorCode::io_error, "short write to " + tmp.string());
        }
    }
    fs::rename(tmp, path, ec);
    if (ec) {
        throw Error(ErrorCode::io_error,
                    "rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
    }
}

void append_file(const fs::path& path, std::string_view bytes) {
    std::error_code ec;
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) {
        throw Error(ErrorCode::io_error, "cannot append to " + path.string());
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
        throw Error(ErrorCode::io_error, "short append to " + path.string());
    }
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::not_found, "cannot read " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::vector<std::string> read_lines(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::not_found, "cannot read " + path.string());
    }
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (!line.empty()) {
            lines.push_back(line);
        }
    }
    return lines;
}

ImageDims read_jpeg_dimensions(const fs::path& path) {
    std::string data = read_file(path);
    const auto* bytes = reinterpret_cast<const unsigned char*>(data.data());
    std::size_t n = data.size();
    if (n < 4 || bytes[0] != 0xFF || bytes[1] != 0xD8) {
        throw Error(ErrorCode::decode_error, "not a JPEG: " + path.string());
    }
    std::size_t pos = 2;
    while (pos + 3 < n) {
        if (bytes[pos] != 0xFF) {
            ++pos;
            continue;
        }
        unsigned char marker = bytes[pos + 1];
        if (marker == 0xFF) {
            ++pos;
            continue;
        }
        // Standalone markers without a length field.
        if (marker == 0x01 || (marker >= 0xD0 && marker <= 0xD9)) {
            pos += 2;
            continue;
        }
        if (pos + 3 >= n) {
            break;
        }
        std::size_t seg_len = (std::size_t(bytes[pos + 2]) << 8) | bytes[pos + 3];
        // SOF0..SOF15 excluding DHT/JPG/DAC carry frame dimensions.
        bool is_sof = (marker >= 0xC0 && marker <= 0xCF) && marker != 0xC4 && marker != 0xC8 &&
                      marker != 0xCC;
        if (is_sof) {
            if (pos + 8 >= n) {
                break;
            }
            int height = int(bytes[pos + 5]) << 8 | bytes[pos + 6];
            int width = int(bytes[pos + 7]) << 8 | bytes[pos + 8];
            return {width, height};
        }
        pos += 2 + seg_len;
    }
    throw Error(ErrorCode::decode_error, "no SOF segment in " + path.string());
}

} // namespace vidagent
