#include "isacsim/isac_api.hpp"

#include "isacsim/json_util.hpp"

namespace isacsim::api {

using jsonio::json;
using jsonio::require;

const char* to_string(ApiCause c) {
    switch (c) {
        case ApiCause::PolicyDenied: return "PolicyDenied";
        case ApiCause::NoConsent: return "NoConsent";
        case ApiCause::NoCoverage: return "NoCoverage";
        case ApiCause::RanFailure: return "RanFailure";
        case ApiCause::UnknownSession: return "UnknownSession";
        case ApiCause::InvalidRequest: return "InvalidRequest";
    }
    return "?";
}

std::optional<ApiCause> api_cause_from_string(const std::string& s) {
    static const std::pair<const char*, ApiCause> table[] = {
        {"PolicyDenied", ApiCause::PolicyDenied},   {"NoConsent", ApiCause::NoConsent},
        {"NoCoverage", ApiCause::NoCoverage},       {"RanFailure", ApiCause::RanFailure},
        {"UnknownSession", ApiCause::UnknownSession}, {"InvalidRequest", ApiCause::InvalidRequest},
    };
    for (const auto& [name, value] : table)
        if (s == name) return value;
    return std::nullopt;
}

const char* message_type(const ApiMessage& msg) {
    return std::visit(
        [](const auto& m) -> const char* {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, SensingServiceRequest>) return "SensingServiceRequest";
            else if constexpr (std::is_same_v<T, SensingServiceResponse>) return "SensingServiceResponse";
            else if constexpr (std::is_same_v<T, SensingResultNotification>)
                return "SensingResultNotification";
            else if constexpr (std::is_same_v<T, SensingServiceAbort>) return "SensingServiceAbort";
            else return "SensingServiceFailure";
        },
        msg);
}

namespace {

json area_to_json(const std::vector<Point2>& area) {
    json arr = json::array();
    for (const auto& p : area) arr.push_back(json::array({p.x, p.y}));
    return arr;
}

std::vector<Point2> area_from_json(const json& j) {
    if (!j.is_array()) throw Error("api", "area must be an array of [x, y] vertices");
    std::vector<Point2> out;
    for (const auto& v : j) {
        if (!v.is_array() || v.size() != 2) throw Error("api", "area vertex must be [x, y]");
        out.push_back({v[0].get<double>(), v[1].get<double>()});
    }
    return out;
}

json object_to_json(const MinimizedObject& o) {
    json j = json::object();
    if (o.position) j["position"] = jsonio::to_json(*o.position);
    if (o.velocity) j["velocity"] = jsonio::to_json(*o.velocity);
    if (o.object_class) j["class"] = *o.object_class;
    if (o.confidence) j["confidence"] = *o.confidence;
    if (o.annotation) j["annotation"] = *o.annotation;
    return j;
}

MinimizedObject object_from_json(const json& j) {
    MinimizedObject o;
    if (auto it = j.find("position"); it != j.end()) o.position = jsonio::vec3_from_json(*it);
    if (auto it = j.find("velocity"); it != j.end()) o.velocity = jsonio::vec3_from_json(*it);
    if (auto it = j.find("class"); it != j.end()) o.object_class = it->get<std::string>();
    if (auto it = j.find("confidence"); it != j.end()) o.confidence = it->get<double>();
    if (auto it = j.find("annotation"); it != j.end()) o.annotation = it->get<std::string>();
    return o;
}

std::uint64_t positive_id(const json& j, const char* key) {
    const json& v = require(j, key, "api message");
    if (!v.is_number_unsigned() || v.get<std::uint64_t>() == 0)
        throw Error("api", std::string(key) + " must be a strictly positive integer");
    return v.get<std::uint64_t>();
}

} // namespace

std::string api_encode(const ApiMessage& msg) {
    json j;
    std::visit(
        [&](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, SensingServiceRequest>) {
                j["msg_type"] = "SensingServiceRequest";
                j["consumer_id"] = m.consumer_id;
                j["area"] = area_to_json(m.area);
                j["purpose"] = m.purpose;
                j["requested_object_classes"] = m.requested_object_classes;
                json q{{"one_shot", m.quality.one_shot}};
                if (!m.quality.one_shot) {
                    q["update_period_s"] = m.quality.update_period_s;
                    q["duration_s"] = m.quality.duration_s;
                }
                j["quality"] = std::move(q);
                j["max_result_age_s"] = m.max_result_age_s;
            } else if constexpr (std::is_same_v<T, SensingServiceResponse>) {
                if (m.session_id == 0) throw Error("api", "encode-refused: zero session id");
                j["msg_type"] = "SensingServiceResponse";
                j["session_id"] = m.session_id;
            } else if constexpr (std::is_same_v<T, SensingResultNotification>) {
                if (m.session_id == 0) throw Error("api", "encode-refused: zero session id");
                j["msg_type"] = "SensingResultNotification";
                j["session_id"] = m.session_id;
                j["timestamp_s"] = m.timestamp_s;
                j["object_count"] = m.object_count;
                json arr = json::array();
                for (const auto& o : m.results) arr.push_back(object_to_json(o));
                j["results"] = std::move(arr);
            } else if constexpr (std::is_same_v<T, SensingServiceAbort>) {
                if (m.session_id == 0) throw Error("api", "encode-refused: zero session id");
                j["msg_type"] = "SensingServiceAbort";
                j["session_id"] = m.session_id;
                j["origin"] = m.origin;
            } else if constexpr (std::is_same_v<T, SensingServiceFailure>) {
                j["msg_type"] = "SensingServiceFailure";
                if (m.session_id) j["session_id"] = *m.session_id;
                j["cause"] = to_string(m.cause);
                j["diagnostics"] = m.diagnostics;
            }
        },
        msg);
    if (!jsonio::all_finite(j)) throw Error("api", "encode-refused: non-finite number in message");
    return j.dump() + "\n";
}

ApiDecodeResult api_decode(const std::string& line) {
    ApiDecodeResult out;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        out.error = "malformed JSON line";
        return out;
    }
    try {
        std::string type = require(j, "msg_type", "api message").get<std::string>();
        if (type == "SensingServiceRequest") {
            SensingServiceRequest m;
            m.consumer_id = require(j, "consumer_id", "api").get<std::string>();
            m.area = area_from_json(require(j, "area", "api"));
            m.purpose = require(j, "purpose", "api").get<std::string>();
            m.requested_object_classes =
                require(j, "requested_object_classes", "api").get<std::vector<std::string>>();
            const json& q = require(j, "quality", "api");
            m.quality.one_shot = require(q, "one_shot", "api.quality").get<bool>();
            if (!m.quality.one_shot) {
                m.quality.update_period_s = require(q, "update_period_s", "api.quality").get<double>();
                m.quality.duration_s = require(q, "duration_s", "api.quality").get<double>();
            }
            m.max_result_age_s = require(j, "max_result_age_s", "api").get<double>();
            out.message = std::move(m);
        } else if (type == "SensingServiceResponse") {
            SensingServiceResponse m;
            m.session_id = positive_id(j, "session_id");
            out.message = m;
        } else if (type == "SensingResultNotification") {
            SensingResultNotification m;
            m.session_id = positive_id(j, "session_id");
            m.timestamp_s = require(j, "timestamp_s", "api").get<double>();
            m.object_count = require(j, "object_count", "api").get<std::size_t>();
            for (const auto& o : require(j, "results", "api")) m.results.push_back(object_from_json(o));
            out.message = std::move(m);
        } else if (type == "SensingServiceAbort") {
            SensingServiceAbort m;
            m.session_id = positive_id(j, "session_id");
            m.origin = require(j, "origin", "api").get<std::string>();
            out.message = std::move(m);
        } else if (type == "SensingServiceFailure") {
            SensingServiceFailure m;
            if (auto it = j.find("session_id"); it != j.end()) m.session_id = positive_id(j, "session_id");
            auto cause = api_cause_from_string(require(j, "cause", "api").get<std::string>());
            if (!cause) throw Error("api", "unknown cause value");
            m.cause = *cause;
            m.diagnostics = require(j, "diagnostics", "api").get<std::string>();
            out.message = std::move(m);
        } else {
            out.error = "unknown msg_type " + type;
        }
    } catch (const std::exception& e) {
        out.error = e.what();
    }
    return out;
}

} // namespace isacsim::api
