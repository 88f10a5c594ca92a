// SPDX-License-Identifier: Apache-2.0
#pragma once
// Prompt templates live in versioned text files under a prompts directory,
// not in code. Templates use {name} placeholders.

#include <filesystem>
#include <map>
#include <mutex>
#include <string>

namespace vidagent {

class PromptLibrary {
public:
    explicit PromptLibrary(std::filesystem::path dir);

    // Raw template text for <dir>/<name>.txt. Throws not-found when missing.
    std::string get(const std::string& name) const;

    // Template with {key} placeholders substituted. Unknown placeholders are
    // left as-is so a stale template is visible rather than silently empty.
    std::string render(const std::string& name,
                       const std::map<std::string, std::string>& vars) const;

    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path dir_;
    mutable std::mutex mutex_;
    mutable std::map<std::string, std::string> cache_;
};

} // namespace vidagent
