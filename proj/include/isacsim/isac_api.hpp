#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "isacsim/scene.hpp"

namespace isacsim::api {

enum class ApiCause {
    PolicyDenied,
    NoConsent,
    NoCoverage,
    RanFailure,
    UnknownSession,
    InvalidRequest,
};
const char* to_string(ApiCause c);
std::optional<ApiCause> api_cause_from_string(const std::string& s);

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

struct QualityRequirement {
    bool one_shot = true;
    double update_period_s = 0.0; // periodic only
    double duration_s = 0.0;      // periodic only
};

struct SensingServiceRequest {
    std::string consumer_id;
    std::vector<Point2> area; // polygon vertices, x/y meters
    std::string purpose;
    std::vector<std::string> requested_object_classes;
    QualityRequirement quality;
    double max_result_age_s = 0.0; // accept cached results up to this age
};

struct SensingServiceResponse {
    std::uint64_t session_id = 0;
};

/// One delivered object after data minimization: only the fields the
/// consumer's profile allows are present.
struct MinimizedObject {
    std::optional<scene::Vec3> position;
    std::optional<scene::Vec3> velocity;
    std::optional<std::string> object_class;
    std::optional<double> confidence;
    std::optional<std::string> annotation; // known_static | new_detection
};

struct SensingResultNotification {
    std::uint64_t session_id = 0;
    double timestamp_s = 0.0;
    std::size_t object_count = 0;
    std::vector<MinimizedObject> results;
};

struct SensingServiceAbort {
    std::uint64_t session_id = 0;
    std::string origin; // "consumer" | "network"
};

struct SensingServiceFailure {
    std::optional<std::uint64_t> session_id;
    ApiCause cause = ApiCause::InvalidRequest;
    std::string diagnostics;
};

using ApiMessage = std::variant<SensingServiceRequest, SensingServiceResponse,
                                SensingResultNotification, SensingServiceAbort,
                                SensingServiceFailure>;

const char* message_type(const ApiMessage& msg);

/// One canonical-JSON line per message, newline terminated.
std::string api_encode(const ApiMessage& msg);

struct ApiDecodeResult {
    std::optional<ApiMessage> message;
    std::string error; // non-empty on a per-line protocol error
};

/// Strict decode of a single line (with or without the trailing newline).
/// A malformed line reports an error; the connection-level caller survives.
ApiDecodeResult api_decode(const std::string& line);

} // namespace isacsim::api
