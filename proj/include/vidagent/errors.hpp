// SPDX-License-Identifier: Apache-2.0
#pragma once
// Typed error codes shared across the library. Every recoverable failure is
// carried by an Error carrying one of these codes; callers branch on code().

#include <stdexcept>
#include <string>
#include <string_view>

namespace vidagent {

enum class ErrorCode {
    io_error,
    validation_error,
    not_found,
    corrupt_layout,
    schema_version_mismatch,
    out_of_range,
    invalid_range,
    empty_range,
    invalid_argument,
    decode_error,
    backend_error,
    malformed_model_output,
    content_filtered,
    rate_limited,
    transport_error,
    fixture_missing,
    invalid_k,
    dimension_mismatch,
    zero_norm_query,
    tool_disabled,
    malformed_action,
    episode_aborted,
    missing_episode,
    invalid_method,
    invalid_params,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

// Stable process exit codes for the CLI: 0 success, 2 usage, 3 data, 4 backend.
int exit_code_for(ErrorCode code);

} // namespace vidagent
