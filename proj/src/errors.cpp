// SPDX-License-Identifier: Apache-2.0
#include "vidagent/errors.hpp"

namespace vidagent {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::io_error: return "io-error";
        case ErrorCode::validation_error: return "validation-error";
        case ErrorCode::not_found: return "not-found";
        case ErrorCode::corrupt_layout: return "corrupt-layout";
        case ErrorCode::schema_version_mismatch: return "schema-version-mismatch";
        case ErrorCode::out_of_range: return "out-of-range";
        case ErrorCode::invalid_range: return "invalid-range";
        case ErrorCode::empty_range: return "empty-range";
        case ErrorCode::invalid_argument: return "invalid-argument";
        case ErrorCode::decode_error: return "decode-error";
        case ErrorCode::backend_error: return "backend-error";
        case ErrorCode::malformed_model_output: return "malformed-model-output";
        case ErrorCode::content_filtered: return "content-filtered";
        case ErrorCode::rate_limited: return "rate-limited";
        case ErrorCode::transport_error: return "transport-error";
        case ErrorCode::fixture_missing: return "fixture-missing";
        case ErrorCode::invalid_k: return "invalid-k";
        case ErrorCode::dimension_mismatch: return "dimension-mismatch";
        case ErrorCode::zero_norm_query: return "zero-norm-query";
        case ErrorCode::tool_disabled: return "tool-disabled";
        case ErrorCode::malformed_action: return "malformed-action";
        case ErrorCode::episode_aborted: return "episode-aborted";
        case ErrorCode::missing_episode: return "missing-episode";
        case ErrorCode::invalid_method: return "invalid-method";
        case ErrorCode::invalid_params: return "invalid-params";
    }
    return "unknown-error";
}

int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::invalid_argument:
        case ErrorCode::invalid_k:
        case ErrorCode::invalid_range:
        case ErrorCode::invalid_method:
        case ErrorCode::invalid_params:
            return 2;
        case ErrorCode::backend_error:
        case ErrorCode::content_filtered:
        case ErrorCode::rate_limited:
        case ErrorCode::transport_error:
        case ErrorCode::fixture_missing:
        case ErrorCode::episode_aborted:
        case ErrorCode::malformed_model_output:
            return 4;
        default:
            return 3;
    }
}

} // namespace vidagent
