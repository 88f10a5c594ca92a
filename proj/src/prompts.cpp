// SPDX-License-Identifier: Apache-2.0
#include "vidagent/prompts.hpp"

#include "vidagent/errors.hpp"
#include "vidagent/fsutil.hpp"

namespace vidagent {

PromptLibrary::PromptLibrary(std::filesystem::path dir) : dir_(std::move(dir)) {}

std::string PromptLibrary::get(const std::string& name) const {
    std::lock_guard lock(mutex_);
    auto it = cache_.find(name);
    if (it != cache_.end()) {
        return it->second;
    }
    const auto path = dir_ / (name + ".txt");
    std::string text = read_file(path); // throws not-found with the path
    cache_[name] = text;
    return text;
}

std::string PromptLibrary::render(const std::string& name,
                                  const std::map<std::string, std::string>& vars) const {
    std::string out = get(name);
    for (const auto& [key, value] : vars) {
        const std::string placeholder = "{" + key + "}";
        std::size_t pos = 0;
        while ((pos = out.find(placeholder, pos)) != std::string::npos) {
            out.replace(pos, placeholder.size(), value);
            pos += value.size();
        }
    }
    return out;
}

} // namespace vidagent
