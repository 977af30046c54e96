#include "isacsim/sep.hpp"

#include <algorithm>

#include "isacsim/json_util.hpp"

namespace isacsim::sep {

using jsonio::json;
using jsonio::require;

namespace {

constexpr std::size_t kMaxFrameBytes = 64u * 1024u * 1024u;

json cause_to_json(const CauseDiagnostics& c) {
    return {{"cause", to_string(c.cause)}, {"diagnostics", c.diagnostics}};
}

CauseDiagnostics cause_from_json_obj(const json& j) {
    CauseDiagnostics c;
    auto cause = cause_from_string(require(j, "cause", "cause").get<std::string>());
    if (!cause) throw Error("sep", "unknown cause value");
    c.cause = *cause;
    c.diagnostics = require(j, "diagnostics", "cause").get<std::string>();
    return c;
}

json timing_to_json(const MeasurementTiming& t) {
    json j;
    if (t.one_shot) {
        j = {{"mode", "OneShot"}};
    } else {
        j = {{"mode", "Periodic"},
             {"report_period_ms", t.report_period_ms},
             {"duration_ms", t.duration_ms}};
    }
    if (t.start_delay_ms > 0.0) j["start_delay_ms"] = t.start_delay_ms;
    return j;
}

MeasurementTiming timing_from_json(const json& j) {
    MeasurementTiming t;
    std::string mode = require(j, "mode", "measurement_timing").get<std::string>();
    if (mode == "OneShot") {
        t.one_shot = true;
    } else if (mode == "Periodic") {
        t.one_shot = false;
        t.report_period_ms = require(j, "report_period_ms", "measurement_timing").get<double>();
        t.duration_ms = require(j, "duration_ms", "measurement_timing").get<double>();
    } else {
        throw Error("sep", "unknown measurement timing mode");
    }
    if (auto it = j.find("start_delay_ms"); it != j.end()) t.start_delay_ms = it->get<double>();
    t.validate();
    return t;
}

template <typename Enum>
Enum enum_from(const json& j, const char* what,
               std::optional<Enum> (*parse)(const std::string&)) {
    auto v = parse(j.get<std::string>());
    if (!v) throw Error("sep", std::string("unknown ") + what + " value");
    return *v;
}

std::optional<TrpRole> role_from_string(const std::string& s) {
    if (s == "Tx") return TrpRole::Tx;
    if (s == "Rx") return TrpRole::Rx;
    if (s == "TxRx") return TrpRole::TxRx;
    return std::nullopt;
}

std::optional<SensingMode> mode_from_string(const std::string& s) {
    if (s == "Monostatic") return SensingMode::Monostatic;
    if (s == "Bistatic") return SensingMode::Bistatic;
    return std::nullopt;
}

std::optional<SignalSource> signal_from_string(const std::string& s) {
    if (s == "PreconfiguredReference") return SignalSource::PreconfiguredReference;
    if (s == "ReuseCommunication") return SignalSource::ReuseCommunication;
    if (s == "Opportunistic") return SignalSource::Opportunistic;
    return std::nullopt;
}

std::optional<RuKind> rukind_from_string(const std::string& s) {
    if (s == "Tdd") return RuKind::Tdd;
    if (s == "Fdd") return RuKind::Fdd;
    if (s == "Sniffer") return RuKind::Sniffer;
    return std::nullopt;
}

json config_entry_to_json(const TrpConfigListEntry& e) {
    json j{{"trp_id", e.trp_id},
           {"role", to_string(e.role)},
           {"mode", to_string(e.mode)},
           {"resource",
            {{"period_slots", e.resource.period_slots},
             {"burst_symbols", e.resource.burst_symbols},
             {"subcarriers", e.resource.subcarriers},
             {"signal", to_string(e.resource.signal)}}},
           {"processing", jsonio::to_json(e.processing)}};
    json beams = json::array();
    for (const auto& b : e.beams) beams.push_back(jsonio::to_json(b));
    j["beams"] = std::move(beams);
    if (e.peer) {
        j["peer"] = {{"gnb_id", e.peer->gnb_id},
                     {"trp_id", e.peer->trp_id},
                     {"position", jsonio::to_json(e.peer->position)}};
    }
    if (!e.peer_gnb_ids.empty()) j["peer_gnb_ids"] = e.peer_gnb_ids;
    return j;
}

TrpConfigListEntry config_entry_from_json(const json& j) {
    TrpConfigListEntry e;
    e.trp_id = require(j, "trp_id", "trp_config").get<std::string>();
    e.role = enum_from<TrpRole>(require(j, "role", "trp_config"), "role", role_from_string);
    e.mode = enum_from<SensingMode>(require(j, "mode", "trp_config"), "mode", mode_from_string);
    const json& r = require(j, "resource", "trp_config");
    e.resource.period_slots = require(r, "period_slots", "resource").get<std::uint32_t>();
    e.resource.burst_symbols = require(r, "burst_symbols", "resource").get<std::uint32_t>();
    e.resource.subcarriers = require(r, "subcarriers", "resource").get<std::uint32_t>();
    e.resource.signal =
        enum_from<SignalSource>(require(r, "signal", "resource"), "signal", signal_from_string);
    e.processing = jsonio::processing_from_json(require(j, "processing", "trp_config"));
    for (const auto& b : require(j, "beams", "trp_config")) e.beams.push_back(jsonio::beam_from_json(b));
    if (auto it = j.find("peer"); it != j.end()) {
        PeerTrp p;
        p.gnb_id = require(*it, "gnb_id", "peer").get<std::string>();
        p.trp_id = require(*it, "trp_id", "peer").get<std::string>();
        p.position = jsonio::vec3_from_json(require(*it, "position", "peer"));
        e.peer = std::move(p);
    }
    if (auto it = j.find("peer_gnb_ids"); it != j.end())
        e.peer_gnb_ids = it->get<std::vector<std::string>>();
    return e;
}

json result_entry_to_json(const TrpResultListEntry& e) {
    return {{"trp_id", e.trp_id},
            {"timestamp_s", e.timestamp_s},
            {"payload", jsonio::to_json(e.payload)}};
}

TrpResultListEntry result_entry_from_json(const json& j) {
    TrpResultListEntry e;
    e.trp_id = require(j, "trp_id", "trp_result").get<std::string>();
    e.timestamp_s = require(j, "timestamp_s", "trp_result").get<double>();
    e.payload = jsonio::measurement_from_json(require(j, "payload", "trp_result"));
    return e;
}

json trp_info_to_json(const TrpInfo& t) {
    json roles = json::array();
    for (auto r : t.roles) roles.push_back(to_string(r));
    return {{"trp_id", t.trp_id},
            {"gnb_id", t.gnb_id},
            {"position", jsonio::to_json(t.position)},
            {"duplex", to_string(t.duplex)},
            {"roles", std::move(roles)},
            {"beam_count", t.beam_count},
            {"beamwidth_rad", t.beamwidth_rad},
            {"max_bandwidth_hz", t.max_bandwidth_hz},
            {"sic_total_db", t.sic_total_db},
            {"coverage_radius_m", t.coverage_radius_m}};
}

TrpInfo trp_info_from_json(const json& j) {
    TrpInfo t;
    t.trp_id = require(j, "trp_id", "trp_info").get<std::string>();
    t.gnb_id = require(j, "gnb_id", "trp_info").get<std::string>();
    t.position = jsonio::vec3_from_json(require(j, "position", "trp_info"));
    t.duplex = enum_from<RuKind>(require(j, "duplex", "trp_info"), "duplex", rukind_from_string);
    for (const auto& r : require(j, "roles", "trp_info"))
        t.roles.push_back(enum_from<TrpRole>(r, "role", role_from_string));
    t.beam_count = require(j, "beam_count", "trp_info").get<std::uint32_t>();
    t.beamwidth_rad = require(j, "beamwidth_rad", "trp_info").get<double>();
    t.max_bandwidth_hz = require(j, "max_bandwidth_hz", "trp_info").get<double>();
    t.sic_total_db = require(j, "sic_total_db", "trp_info").get<double>();
    t.coverage_radius_m = require(j, "coverage_radius_m", "trp_info").get<double>();
    return t;
}

void check_id(std::uint64_t id, const char* what) {
    if (id == 0) throw Error("sep", std::string("encode-refused: ") + what + " must be strictly positive");
}

json message_to_json(const SepMessage& msg) {
    json j;
    std::visit(
        [&](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, TrpInformationRequest>) {
                j["msg_type"] = "TrpInformationRequest";
                j["trp_filter"] = m.trp_filter;
            } else if constexpr (std::is_same_v<T, TrpInformationResponse>) {
                j["msg_type"] = "TrpInformationResponse";
                json arr = json::array();
                for (const auto& t : m.trp_info_list) arr.push_back(trp_info_to_json(t));
                j["trp_info_list"] = std::move(arr);
            } else if constexpr (std::is_same_v<T, TrpInformationFailure>) {
                j["msg_type"] = "TrpInformationFailure";
                j["cause"] = cause_to_json(m.cause);
            } else if constexpr (std::is_same_v<T, SensingRequest>) {
                check_id(m.semf_measurement_id, "semf_measurement_id");
                m.measurement_timing.validate();
                j["msg_type"] = "SensingRequest";
                j["semf_measurement_id"] = m.semf_measurement_id;
                json arr = json::array();
                for (const auto& e : m.trp_config_list) arr.push_back(config_entry_to_json(e));
                j["trp_config_list"] = std::move(arr);
                j["measurement_timing"] = timing_to_json(m.measurement_timing);
            } else if constexpr (std::is_same_v<T, SensingResponse>) {
                check_id(m.semf_measurement_id, "semf_measurement_id");
                check_id(m.ran_measurement_id, "ran_measurement_id");
                j["msg_type"] = "SensingResponse";
                j["semf_measurement_id"] = m.semf_measurement_id;
                j["ran_measurement_id"] = m.ran_measurement_id;
                if (m.trp_result_list) {
                    json arr = json::array();
                    for (const auto& e : *m.trp_result_list) arr.push_back(result_entry_to_json(e));
                    j["trp_result_list"] = std::move(arr);
                }
            } else if constexpr (std::is_same_v<T, SensingFailure>) {
                check_id(m.semf_measurement_id, "semf_measurement_id");
                j["msg_type"] = "SensingFailure";
                j["semf_measurement_id"] = m.semf_measurement_id;
                j["cause"] = cause_to_json(m.cause);
            } else if constexpr (std::is_same_v<T, SensingUpdate>) {
                check_id(m.semf_measurement_id, "semf_measurement_id");
                check_id(m.ran_measurement_id, "ran_measurement_id");
                j["msg_type"] = "SensingUpdate";
                j["semf_measurement_id"] = m.semf_measurement_id;
                j["ran_measurement_id"] = m.ran_measurement_id;
                json arr = json::array();
                for (const auto& e : m.trp_config_list) arr.push_back(config_entry_to_json(e));
                j["trp_config_list"] = std::move(arr);
            } else if constexpr (std::is_same_v<T, SensingReport>) {
                check_id(m.semf_measurement_id, "semf_measurement_id");
                check_id(m.ran_measurement_id, "ran_measurement_id");
                j["msg_type"] = "SensingReport";
                j["semf_measurement_id"] = m.semf_measurement_id;
                j["ran_measurement_id"] = m.ran_measurement_id;
                json arr = json::array();
                for (const auto& e : m.trp_result_list) arr.push_back(result_entry_to_json(e));
                j["trp_result_list"] = std::move(arr);
            } else if constexpr (std::is_same_v<T, SensingAbort>) {
                check_id(m.semf_measurement_id, "semf_measurement_id");
                check_id(m.ran_measurement_id, "ran_measurement_id");
                j["msg_type"] = "SensingAbort";
                j["semf_measurement_id"] = m.semf_measurement_id;
                j["ran_measurement_id"] = m.ran_measurement_id;
                if (m.cause) j["cause"] = cause_to_json(*m.cause);
            } else if constexpr (std::is_same_v<T, SensingFailureIndication>) {
                check_id(m.semf_measurement_id, "semf_measurement_id");
                check_id(m.ran_measurement_id, "ran_measurement_id");
                j["msg_type"] = "SensingFailureIndication";
                j["semf_measurement_id"] = m.semf_measurement_id;
                j["ran_measurement_id"] = m.ran_measurement_id;
                j["cause"] = cause_to_json(m.cause);
            }
        },
        msg);
    return j;
}

std::uint64_t positive_id(const json& j, const char* key) {
    const json& v = require(j, key, "message");
    if (!v.is_number_unsigned() || v.get<std::uint64_t>() == 0)
        throw Error("sep", std::string(key) + " must be a strictly positive integer");
    return v.get<std::uint64_t>();
}

SepMessage message_from_json(const json& j) {
    std::string type = require(j, "msg_type", "message").get<std::string>();
    if (type == "TrpInformationRequest") {
        TrpInformationRequest m;
        m.trp_filter = require(j, "trp_filter", "message").get<std::string>();
        return m;
    }
    if (type == "TrpInformationResponse") {
        TrpInformationResponse m;
        for (const auto& t : require(j, "trp_info_list", "message"))
            m.trp_info_list.push_back(trp_info_from_json(t));
        return m;
    }
    if (type == "TrpInformationFailure") {
        TrpInformationFailure m;
        m.cause = cause_from_json_obj(require(j, "cause", "message"));
        return m;
    }
    if (type == "SensingRequest") {
        SensingRequest m;
        m.semf_measurement_id = positive_id(j, "semf_measurement_id");
        for (const auto& e : require(j, "trp_config_list", "message"))
            m.trp_config_list.push_back(config_entry_from_json(e));
        m.measurement_timing = timing_from_json(require(j, "measurement_timing", "message"));
        return m;
    }
    if (type == "SensingResponse") {
        SensingResponse m;
        m.semf_measurement_id = positive_id(j, "semf_measurement_id");
        m.ran_measurement_id = positive_id(j, "ran_measurement_id");
        if (auto it = j.find("trp_result_list"); it != j.end()) {
            std::vector<TrpResultListEntry> entries;
            for (const auto& e : *it) entries.push_back(result_entry_from_json(e));
            m.trp_result_list = std::move(entries);
        }
        return m;
    }
    if (type == "SensingFailure") {
        SensingFailure m;
        m.semf_measurement_id = positive_id(j, "semf_measurement_id");
        m.cause = cause_from_json_obj(require(j, "cause", "message"));
        return m;
    }
    if (type == "SensingUpdate") {
        SensingUpdate m;
        m.semf_measurement_id = positive_id(j, "semf_measurement_id");
        m.ran_measurement_id = positive_id(j, "ran_measurement_id");
        for (const auto& e : require(j, "trp_config_list", "message"))
            m.trp_config_list.push_back(config_entry_from_json(e));
        return m;
    }
    if (type == "SensingReport") {
        SensingReport m;
        m.semf_measurement_id = positive_id(j, "semf_measurement_id");
        m.ran_measurement_id = positive_id(j, "ran_measurement_id");
        for (const auto& e : require(j, "trp_result_list", "message"))
            m.trp_result_list.push_back(result_entry_from_json(e));
        return m;
    }
    if (type == "SensingAbort") {
        SensingAbort m;
        m.semf_measurement_id = positive_id(j, "semf_measurement_id");
        m.ran_measurement_id = positive_id(j, "ran_measurement_id");
        if (auto it = j.find("cause"); it != j.end()) m.cause = cause_from_json_obj(*it);
        return m;
    }
    if (type == "SensingFailureIndication") {
        SensingFailureIndication m;
        m.semf_measurement_id = positive_id(j, "semf_measurement_id");
        m.ran_measurement_id = positive_id(j, "ran_measurement_id");
        m.cause = cause_from_json_obj(require(j, "cause", "message"));
        return m;
    }
    throw Error("sep.unsupported", "unknown msg_type " + type);
}

} // namespace

const char* to_string(Cause c) {
    switch (c) {
        case Cause::UnknownTrp: return "UnknownTrp";
        case Cause::UnsupportedMode: return "UnsupportedMode";
        case Cause::ResourceUnavailable: return "ResourceUnavailable";
        case Cause::BackhaulTooSlow: return "BackhaulTooSlow";
        case Cause::BufferOverflow: return "BufferOverflow";
        case Cause::HandshakeTimeout: return "HandshakeTimeout";
        case Cause::RuFailure: return "RuFailure";
        case Cause::UnknownMeasurementId: return "UnknownMeasurementId";
        case Cause::DuplicateMeasurementId: return "DuplicateMeasurementId";
        case Cause::InvalidConfig: return "InvalidConfig";
        case Cause::SemfSideFailure: return "SemfSideFailure";
    }
    return "?";
}

std::optional<Cause> cause_from_string(const std::string& s) {
    static const std::pair<const char*, Cause> table[] = {
        {"UnknownTrp", Cause::UnknownTrp},
        {"UnsupportedMode", Cause::UnsupportedMode},
        {"ResourceUnavailable", Cause::ResourceUnavailable},
        {"BackhaulTooSlow", Cause::BackhaulTooSlow},
        {"BufferOverflow", Cause::BufferOverflow},
        {"HandshakeTimeout", Cause::HandshakeTimeout},
        {"RuFailure", Cause::RuFailure},
        {"UnknownMeasurementId", Cause::UnknownMeasurementId},
        {"DuplicateMeasurementId", Cause::DuplicateMeasurementId},
        {"InvalidConfig", Cause::InvalidConfig},
        {"SemfSideFailure", Cause::SemfSideFailure},
    };
    for (const auto& [name, value] : table)
        if (s == name) return value;
    return std::nullopt;
}

const char* to_string(TrpRole r) {
    switch (r) {
        case TrpRole::Tx: return "Tx";
        case TrpRole::Rx: return "Rx";
        case TrpRole::TxRx: return "TxRx";
    }
    return "?";
}

const char* to_string(SensingMode m) {
    return m == SensingMode::Monostatic ? "Monostatic" : "Bistatic";
}

const char* to_string(SignalSource s) {
    switch (s) {
        case SignalSource::PreconfiguredReference: return "PreconfiguredReference";
        case SignalSource::ReuseCommunication: return "ReuseCommunication";
        case SignalSource::Opportunistic: return "Opportunistic";
    }
    return "?";
}

const char* to_string(RuKind k) {
    switch (k) {
        case RuKind::Tdd: return "Tdd";
        case RuKind::Fdd: return "Fdd";
        case RuKind::Sniffer: return "Sniffer";
    }
    return "?";
}

const char* to_string(Phase p) {
    switch (p) {
        case Phase::Idle: return "Idle";
        case Phase::AwaitingResponse: return "AwaitingResponse";
        case Phase::Active: return "Active";
        case Phase::Terminating: return "Terminating";
        case Phase::Done: return "Done";
        case Phase::Failed: return "Failed";
    }
    return "?";
}

const char* message_type(const SepMessage& msg) {
    return std::visit(
        [](const auto& m) -> const char* {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, TrpInformationRequest>) return "TrpInformationRequest";
            else if constexpr (std::is_same_v<T, TrpInformationResponse>) return "TrpInformationResponse";
            else if constexpr (std::is_same_v<T, TrpInformationFailure>) return "TrpInformationFailure";
            else if constexpr (std::is_same_v<T, SensingRequest>) return "SensingRequest";
            else if constexpr (std::is_same_v<T, SensingResponse>) return "SensingResponse";
            else if constexpr (std::is_same_v<T, SensingFailure>) return "SensingFailure";
            else if constexpr (std::is_same_v<T, SensingUpdate>) return "SensingUpdate";
            else if constexpr (std::is_same_v<T, SensingReport>) return "SensingReport";
            else if constexpr (std::is_same_v<T, SensingAbort>) return "SensingAbort";
            else return "SensingFailureIndication";
        },
        msg);
}

std::vector<std::uint8_t> encode(const SepMessage& msg) {
    json j = message_to_json(msg);
    if (!jsonio::all_finite(j)) throw Error("sep", "encode-refused: non-finite number in message");
    std::string body = j.dump();
    if (body.size() > kMaxFrameBytes) throw Error("sep", "encode-refused: frame too large");
    std::vector<std::uint8_t> frame;
    frame.reserve(4 + body.size());
    std::uint32_t len = static_cast<std::uint32_t>(body.size());
    frame.push_back(static_cast<std::uint8_t>(len >> 24));
    frame.push_back(static_cast<std::uint8_t>(len >> 16));
    frame.push_back(static_cast<std::uint8_t>(len >> 8));
    frame.push_back(static_cast<std::uint8_t>(len));
    frame.insert(frame.end(), body.begin(), body.end());
    return frame;
}

DecodeOutcome decode(std::span<const std::uint8_t> buffer) {
    DecodeOutcome out;
    if (buffer.size() < 4) {
        out.status = DecodeStatus::NeedMoreBytes;
        return out;
    }
    std::uint32_t len = (std::uint32_t(buffer[0]) << 24) | (std::uint32_t(buffer[1]) << 16) |
                        (std::uint32_t(buffer[2]) << 8) | std::uint32_t(buffer[3]);
    if (len > kMaxFrameBytes) {
        out.status = DecodeStatus::ProtocolError;
        out.error = "frame length exceeds limit";
        out.error_offset = 0;
        return out;
    }
    if (buffer.size() < 4u + len) {
        out.status = DecodeStatus::NeedMoreBytes;
        return out;
    }
    json j = json::parse(buffer.begin() + 4, buffer.begin() + 4 + len, nullptr, false);
    if (j.is_discarded()) {
        out.status = DecodeStatus::ProtocolError;
        out.error = "malformed JSON body";
        out.error_offset = 4;
        return out;
    }
    if (!j.is_object()) {
        out.status = DecodeStatus::ProtocolError;
        out.error = "body is not an object";
        out.error_offset = 4;
        return out;
    }
    try {
        out.message = message_from_json(j);
        out.status = DecodeStatus::Ok;
        out.bytes_consumed = 4u + len;
    } catch (const Error& e) {
        bool unsupported = std::string_view(e.origin()) == "sep.unsupported";
        out.status = unsupported ? DecodeStatus::UnsupportedMessage : DecodeStatus::ProtocolError;
        out.error = e.what();
        out.error_offset = 4;
    } catch (const std::exception& e) {
        out.status = DecodeStatus::ProtocolError;
        out.error = e.what();
        out.error_offset = 4;
    }
    return out;
}

// ---------------------------------------------------------------------------
// SeMF-side FSM
// ---------------------------------------------------------------------------

FsmOutput SemfMeasurementFsm::violation(const std::string& why) {
    FsmOutput out;
    out.actions.push_back({"protocol_violation", why});
    return out;
}

FsmOutput SemfMeasurementFsm::step(const Event& event) {
    FsmOutput out;
    switch (event.kind) {
        case Event::Kind::Start: {
            if (phase_ != Phase::Idle) return violation("start outside Idle");
            event.timing.validate();
            timing_ = event.timing;
            SensingRequest req;
            req.semf_measurement_id = semf_id_;
            req.trp_config_list = event.config;
            req.measurement_timing = event.timing;
            out.send.emplace_back(std::move(req));
            out.actions.push_back({"start_response_timer", ""});
            phase_ = Phase::AwaitingResponse;
            return out;
        }
        case Event::Kind::ApiAbort: {
            if (phase_ == Phase::AwaitingResponse) {
                abort_pending_ = true;
                out.actions.push_back({"abort_deferred", "awaiting response"});
                return out;
            }
            if (phase_ != Phase::Active) return violation("abort outside Active/AwaitingResponse");
            SensingAbort abort;
            abort.semf_measurement_id = semf_id_;
            abort.ran_measurement_id = ran_id_;
            out.send.emplace_back(std::move(abort));
            phase_ = Phase::Terminating;
            return out;
        }
        case Event::Kind::ResponseTimeout: {
            if (phase_ != Phase::AwaitingResponse) return violation("response timeout outside AwaitingResponse");
            phase_ = Phase::Failed;
            out.actions.push_back({"notify_failure", "timeout"});
            return out;
        }
        case Event::Kind::DurationElapsed: {
            if (phase_ != Phase::Active) return violation("duration elapsed outside Active");
            phase_ = Phase::Done;
            out.actions.push_back({"measurement_complete", "duration reached"});
            return out;
        }
        case Event::Kind::TerminationComplete: {
            if (phase_ != Phase::Terminating) return violation("termination complete outside Terminating");
            phase_ = Phase::Done;
            out.actions.push_back({"measurement_complete", "aborted"});
            return out;
        }
        case Event::Kind::Message: break;
    }

    const SepMessage& msg = *event.message;
    if (const auto* resp = std::get_if<SensingResponse>(&msg)) {
        if (phase_ == Phase::Failed || phase_ == Phase::Done) {
            // Response lost the race against a timeout or local teardown.
            out.actions.push_back({"late_response_dropped", ""});
            return out;
        }
        if (phase_ != Phase::AwaitingResponse) return violation("SensingResponse outside AwaitingResponse");
        if (resp->semf_measurement_id != semf_id_) return violation("SensingResponse id mismatch");
        ran_id_ = resp->ran_measurement_id;
        out.actions.push_back({"stop_response_timer", ""});
        if (timing_.one_shot) {
            if (!resp->trp_result_list)
                return violation("one-shot SensingResponse without results");
            out.results = *resp->trp_result_list;
            out.actions.push_back({"deliver_results", "one-shot"});
            out.actions.push_back({"measurement_complete", "one-shot"});
            phase_ = Phase::Done;
        } else {
            phase_ = Phase::Active;
            out.actions.push_back({"start_duration_timer", ""});
            if (abort_pending_) {
                abort_pending_ = false;
                SensingAbort abort;
                abort.semf_measurement_id = semf_id_;
                abort.ran_measurement_id = ran_id_;
                out.send.emplace_back(std::move(abort));
                phase_ = Phase::Terminating;
            }
        }
        return out;
    }
    if (const auto* fail = std::get_if<SensingFailure>(&msg)) {
        if (phase_ == Phase::Failed || phase_ == Phase::Done) {
            out.actions.push_back({"late_response_dropped", ""});
            return out;
        }
        if (phase_ != Phase::AwaitingResponse) return violation("SensingFailure outside AwaitingResponse");
        if (fail->semf_measurement_id != semf_id_) return violation("SensingFailure id mismatch");
        phase_ = Phase::Failed;
        out.actions.push_back({"stop_response_timer", ""});
        out.actions.push_back({"notify_failure", std::string(to_string(fail->cause.cause))});
        return out;
    }
    if (const auto* report = std::get_if<SensingReport>(&msg)) {
        if (phase_ == Phase::Terminating || phase_ == Phase::Done || phase_ == Phase::Failed) {
            out.actions.push_back({"late_report_dropped", ""});
            return out;
        }
        if (phase_ != Phase::Active) return violation("SensingReport outside Active");
        if (report->semf_measurement_id != semf_id_ || report->ran_measurement_id != ran_id_)
            return violation("SensingReport id tuple mismatch");
        out.results = report->trp_result_list;
        out.actions.push_back({"deliver_results", "report"});
        return out;
    }
    if (const auto* ind = std::get_if<SensingFailureIndication>(&msg)) {
        if (phase_ == Phase::Terminating || phase_ == Phase::Done || phase_ == Phase::Failed) {
            out.actions.push_back({"late_failure_dropped", ""});
            return out;
        }
        if (phase_ != Phase::Active) return violation("SensingFailureIndication outside Active");
        if (ind->semf_measurement_id != semf_id_ || ind->ran_measurement_id != ran_id_)
            return violation("SensingFailureIndication id tuple mismatch");
        phase_ = Phase::Failed;
        out.actions.push_back({"notify_failure", std::string(to_string(ind->cause.cause))});
        return out;
    }
    return violation(std::string("unexpected message ") + message_type(msg));
}

// ---------------------------------------------------------------------------
// RAN-side FSM
// ---------------------------------------------------------------------------

FsmOutput RanMeasurementFsm::violation(const std::string& why) {
    FsmOutput out;
    out.actions.push_back({"protocol_violation", why});
    return out;
}

FsmOutput RanMeasurementFsm::step(const Event& event) {
    FsmOutput out;
    switch (event.kind) {
        case Event::Kind::Request: {
            if (phase_ != Phase::Idle) return violation("request outside Idle");
            semf_id_ = event.semf_id;
            timing_ = event.timing;
            reports_enabled_ = event.reports_enabled;
            if (event.validation_failure) {
                SensingFailure fail;
                fail.semf_measurement_id = semf_id_;
                fail.cause = *event.validation_failure;
                out.send.emplace_back(std::move(fail));
                phase_ = Phase::Failed;
                return out;
            }
            ran_id_ = event.assigned_ran_id;
            if (timing_.one_shot) {
                // Response waits for the burst so it can carry the results.
                one_shot_pending_ = true;
                phase_ = Phase::Active;
                out.actions.push_back({"schedule_oneshot_burst", ""});
            } else {
                SensingResponse resp;
                resp.semf_measurement_id = semf_id_;
                resp.ran_measurement_id = ran_id_;
                out.send.emplace_back(std::move(resp));
                phase_ = Phase::Active;
                out.actions.push_back({"start_periodic_bursts", ""});
            }
            return out;
        }
        case Event::Kind::BurstComplete: {
            if (phase_ == Phase::Done || phase_ == Phase::Failed) {
                // The burst raced against teardown; its output is discarded.
                out.actions.push_back({"late_burst_dropped", ""});
                return out;
            }
            if (phase_ != Phase::Active || !one_shot_pending_)
                return violation("burst completion without pending one-shot");
            one_shot_pending_ = false;
            SensingResponse resp;
            resp.semf_measurement_id = semf_id_;
            resp.ran_measurement_id = ran_id_;
            resp.trp_result_list = event.results;
            out.send.emplace_back(std::move(resp));
            phase_ = Phase::Done;
            out.actions.push_back({"measurement_complete", "one-shot"});
            return out;
        }
        case Event::Kind::PeriodTick: {
            if (phase_ != Phase::Active) return violation("period tick outside Active");
            if (timing_.one_shot) return violation("period tick on one-shot measurement");
            if (!reports_enabled_) return out; // Tx-only leg: nothing to report
            SensingReport report;
            report.semf_measurement_id = semf_id_;
            report.ran_measurement_id = ran_id_;
            report.trp_result_list = event.results;
            out.send.emplace_back(std::move(report));
            return out;
        }
        case Event::Kind::DurationElapsed: {
            if (phase_ != Phase::Active) return violation("duration elapsed outside Active");
            phase_ = Phase::Done;
            out.actions.push_back({"measurement_complete", "duration reached"});
            return out;
        }
        case Event::Kind::LocalFailure: {
            if (phase_ == Phase::Failed || phase_ == Phase::Done) return out; // absorbed, emitted once
            if (phase_ != Phase::Active) return violation("local failure outside Active");
            if (one_shot_pending_) {
                // No response has been sent yet: the failure answers the
                // pending request instead of indicating mid-measurement.
                one_shot_pending_ = false;
                SensingFailure fail;
                fail.semf_measurement_id = semf_id_;
                fail.cause = event.failure;
                out.send.emplace_back(std::move(fail));
            } else {
                SensingFailureIndication ind;
                ind.semf_measurement_id = semf_id_;
                ind.ran_measurement_id = ran_id_;
                ind.cause = event.failure;
                out.send.emplace_back(std::move(ind));
            }
            phase_ = Phase::Failed;
            out.actions.push_back({"stop_bursts", "local failure"});
            return out;
        }
        case Event::Kind::AbortReceived: {
            if (phase_ == Phase::Done || phase_ == Phase::Failed) return out; // abort is idempotent
            if (phase_ != Phase::Active) return violation("abort outside Active");
            one_shot_pending_ = false;
            phase_ = Phase::Done;
            out.actions.push_back({"stop_bursts", "aborted"});
            out.actions.push_back({"measurement_complete", "aborted"});
            return out;
        }
        case Event::Kind::UpdateReceived: {
            if (phase_ != Phase::Active) return violation("update outside Active");
            if (!event.update_valid) {
                out.actions.push_back({"protocol_violation", "invalid update ignored"});
                return out;
            }
            timing_ = event.new_timing;
            out.actions.push_back({"update_applied", ""});
            return out;
        }
    }
    return violation("unhandled event");
}

SepMessage trp_information_procedure(const std::vector<TrpInfo>& gnb_trps,
                                     const TrpInformationRequest& request) {
    TrpInformationResponse resp;
    for (const auto& trp : gnb_trps) {
        if (request.trp_filter.empty() || trp.trp_id == request.trp_filter)
            resp.trp_info_list.push_back(trp);
    }
    return resp;
}

} // namespace isacsim::sep
