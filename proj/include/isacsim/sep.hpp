#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "isacsim/l1sens.hpp"
#include "isacsim/scene.hpp"

namespace isacsim::sep {

// ---------------------------------------------------------------------------
// Information elements
// ---------------------------------------------------------------------------

enum class Cause {
    UnknownTrp,
    UnsupportedMode,
    ResourceUnavailable,
    BackhaulTooSlow,
    BufferOverflow,
    HandshakeTimeout,
    RuFailure,
    UnknownMeasurementId,
    DuplicateMeasurementId,
    InvalidConfig,
    SemfSideFailure,
};

const char* to_string(Cause c);
std::optional<Cause> cause_from_string(const std::string& s);

struct CauseDiagnostics {
    Cause cause = Cause::InvalidConfig;
    std::string diagnostics;
};

struct MeasurementTiming {
    bool one_shot = true;
    double report_period_ms = 0.0; // periodic only
    double duration_ms = 0.0;      // periodic only
    // Joint procedures start this long after acceptance, leaving room for a
    // coordinated abort to land before the first burst.
    double start_delay_ms = 0.0;

    void validate() const {
        if (one_shot) return;
        if (!(report_period_ms > 0.0)) throw Error("sep", "periodic timing needs period > 0");
        if (duration_ms < report_period_ms) throw Error("sep", "duration must cover one period");
    }
};

enum class TrpRole { Tx, Rx, TxRx };
enum class SensingMode { Monostatic, Bistatic };
enum class SignalSource { PreconfiguredReference, ReuseCommunication, Opportunistic };
enum class RuKind { Tdd, Fdd, Sniffer };

const char* to_string(TrpRole r);
const char* to_string(SensingMode m);
const char* to_string(SignalSource s);
const char* to_string(RuKind k);

struct ResourceConfig {
    std::uint32_t period_slots = 10;
    std::uint32_t burst_symbols = 64;
    std::uint32_t subcarriers = 256;
    SignalSource signal = SignalSource::PreconfiguredReference;
};

/// Transmit-end geometry reference carried on bistatic RX entries.
struct PeerTrp {
    std::string gnb_id;
    std::string trp_id;
    scene::Vec3 position;
};

struct TrpConfigListEntry {
    std::string trp_id;
    TrpRole role = TrpRole::TxRx;
    SensingMode mode = SensingMode::Monostatic;
    ResourceConfig resource;
    l1::ProcessingConfig processing;
    std::vector<scene::BeamPattern> beams;
    std::optional<PeerTrp> peer;          // RX side: the transmit end
    std::vector<std::string> peer_gnb_ids; // TX side: receivers to warn in dynamic scheduling
};

struct TrpResultListEntry {
    std::string trp_id;
    double timestamp_s = 0.0;
    l1::SensingMeasurement payload;
};

/// Per-TRP capability record exchanged in the TRP Information procedure.
struct TrpInfo {
    std::string trp_id;
    std::string gnb_id;
    scene::Vec3 position;
    RuKind duplex = RuKind::Tdd;
    std::vector<TrpRole> roles;
    std::uint32_t beam_count = 8;
    double beamwidth_rad = 0.4;
    double max_bandwidth_hz = 0.0;
    double sic_total_db = 0.0;
    double coverage_radius_m = 500.0;
};

// ---------------------------------------------------------------------------
// Messages
// ---------------------------------------------------------------------------

struct TrpInformationRequest {
    std::string trp_filter; // empty matches all TRPs of the addressed gNB
};
struct TrpInformationResponse {
    std::vector<TrpInfo> trp_info_list;
};
struct TrpInformationFailure {
    CauseDiagnostics cause;
};
struct SensingRequest {
    std::uint64_t semf_measurement_id = 0;
    std::vector<TrpConfigListEntry> trp_config_list;
    MeasurementTiming measurement_timing;
};
struct SensingResponse {
    std::uint64_t semf_measurement_id = 0;
    std::uint64_t ran_measurement_id = 0;
    std::optional<std::vector<TrpResultListEntry>> trp_result_list; // one-shot results
};
struct SensingFailure {
    std::uint64_t semf_measurement_id = 0;
    CauseDiagnostics cause;
};
struct SensingUpdate {
    std::uint64_t semf_measurement_id = 0;
    std::uint64_t ran_measurement_id = 0;
    std::vector<TrpConfigListEntry> trp_config_list;
};
struct SensingReport {
    std::uint64_t semf_measurement_id = 0;
    std::uint64_t ran_measurement_id = 0;
    std::vector<TrpResultListEntry> trp_result_list;
};
struct SensingAbort {
    std::uint64_t semf_measurement_id = 0;
    std::uint64_t ran_measurement_id = 0;
    std::optional<CauseDiagnostics> cause;
};
struct SensingFailureIndication {
    std::uint64_t semf_measurement_id = 0;
    std::uint64_t ran_measurement_id = 0;
    CauseDiagnostics cause;
};

using SepMessage =
    std::variant<TrpInformationRequest, TrpInformationResponse, TrpInformationFailure, SensingRequest,
                 SensingResponse, SensingFailure, SensingUpdate, SensingReport, SensingAbort,
                 SensingFailureIndication>;

const char* message_type(const SepMessage& msg);

// ---------------------------------------------------------------------------
// Codec: 4-byte big-endian length prefix + canonical JSON body
// ---------------------------------------------------------------------------

/// Frames a message. Canonical body: keys sorted, no insignificant
/// whitespace, shortest round-trip numbers, "msg_type" discriminator.
/// Throws Error when message invariants do not hold.
std::vector<std::uint8_t> encode(const SepMessage& msg);

enum class DecodeStatus { Ok, NeedMoreBytes, ProtocolError, UnsupportedMessage };

struct DecodeOutcome {
    DecodeStatus status = DecodeStatus::ProtocolError;
    std::optional<SepMessage> message;
    std::size_t bytes_consumed = 0; // valid when status == Ok
    std::string error;
    std::size_t error_offset = 0; // byte offset into the frame for ProtocolError
};

/// Strict inverse of encode on a byte buffer starting at a frame boundary.
/// Total: never throws on arbitrary input.
DecodeOutcome decode(std::span<const std::uint8_t> buffer);

// ---------------------------------------------------------------------------
// Procedure state machines (one instance per measurement, per side)
// ---------------------------------------------------------------------------

enum class Phase { Idle, AwaitingResponse, Active, Terminating, Done, Failed };
const char* to_string(Phase p);

struct FsmAction {
    std::string kind; // e.g. "deliver_results", "protocol_violation", "start_response_timer"
    std::string detail;
};

struct FsmOutput {
    std::vector<SepMessage> send;
    std::vector<FsmAction> actions;
    std::vector<TrpResultListEntry> results; // payloads for deliver_results actions
};

/// SeMF-side per-measurement procedure. Events arrive from the API layer
/// (start/abort), the SeP link (messages) and timers.
class SemfMeasurementFsm {
public:
    struct Event {
        enum class Kind {
            Start,
            ApiAbort,
            Message,
            ResponseTimeout,
            DurationElapsed,
            TerminationComplete,
        };
        Kind kind = Kind::Start;
        std::vector<TrpConfigListEntry> config; // Start
        MeasurementTiming timing;               // Start
        std::optional<SepMessage> message;      // Message
    };

    SemfMeasurementFsm() = default;
    explicit SemfMeasurementFsm(std::uint64_t semf_id) : semf_id_(semf_id) {}

    Phase phase() const { return phase_; }
    std::uint64_t semf_id() const { return semf_id_; }
    std::uint64_t ran_id() const { return ran_id_; }
    const MeasurementTiming& timing() const { return timing_; }
    bool abort_pending() const { return abort_pending_; }

    FsmOutput step(const Event& event);

private:
    FsmOutput violation(const std::string& why);

    Phase phase_ = Phase::Idle;
    std::uint64_t semf_id_ = 0;
    std::uint64_t ran_id_ = 0;
    MeasurementTiming timing_;
    bool abort_pending_ = false;
};

/// RAN-side per-measurement procedure. Request validation happens in the
/// gNB before the event is fed in; the event carries the verdict.
class RanMeasurementFsm {
public:
    struct Event {
        enum class Kind {
            Request,        // validated SensingRequest
            BurstComplete,  // one-shot results became available
            PeriodTick,     // periodic report due
            DurationElapsed,
            LocalFailure,
            AbortReceived,
            UpdateReceived, // validated SensingUpdate
        };
        Kind kind = Kind::Request;
        // Request:
        std::uint64_t semf_id = 0;
        std::uint64_t assigned_ran_id = 0;
        MeasurementTiming timing;
        std::optional<CauseDiagnostics> validation_failure;
        bool reports_enabled = true; // Tx-only legs carry no results
        // BurstComplete / PeriodTick:
        std::vector<TrpResultListEntry> results;
        // LocalFailure:
        CauseDiagnostics failure;
        // UpdateReceived:
        bool update_valid = false;
        MeasurementTiming new_timing;
    };

    Phase phase() const { return phase_; }
    std::uint64_t semf_id() const { return semf_id_; }
    std::uint64_t ran_id() const { return ran_id_; }
    const MeasurementTiming& timing() const { return timing_; }
    bool reports_enabled() const { return reports_enabled_; }
    bool one_shot_pending() const { return one_shot_pending_; }

    FsmOutput step(const Event& event);

private:
    FsmOutput violation(const std::string& why);

    Phase phase_ = Phase::Idle;
    std::uint64_t semf_id_ = 0;
    std::uint64_t ran_id_ = 0;
    MeasurementTiming timing_;
    bool reports_enabled_ = true;
    bool one_shot_pending_ = false;
};

/// TRP Information procedure, server side: answers a request from the gNB's
/// TRP registry. An empty registry yields an empty (successful) response.
SepMessage trp_information_procedure(const std::vector<TrpInfo>& gnb_trps,
                                     const TrpInformationRequest& request);

} // namespace isacsim::sep
