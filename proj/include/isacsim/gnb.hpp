#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "isacsim/l1sens.hpp"
#include "isacsim/runtime.hpp"
#include "isacsim/scene.hpp"
#include "isacsim/sep.hpp"

namespace isacsim::gnb {

inline constexpr std::uint32_t kSymbolsPerSlot = 14;

/// Per-slot downlink map; the vector is one pattern period and repeats.
struct TddPattern {
    std::vector<bool> slots_dl = {true, true, true, true, false};

    std::size_t period() const { return slots_dl.size(); }
    bool is_dl(std::int64_t slot) const {
        return slots_dl[static_cast<std::size_t>(slot % static_cast<std::int64_t>(slots_dl.size()))];
    }
    /// Longest run of consecutive DL slots, not wrapping the period.
    std::uint32_t longest_dl_run() const;
    /// First slot index starting a DL run of at least span slots, or -1.
    std::int32_t first_dl_run(std::uint32_t span) const;
};

struct SicBudget {
    double isolation_db = 0.0;
    double analog_db = 0.0;
    double digital_db = 0.0;
    double total_db() const { return isolation_db + analog_db + digital_db; }
};

/// Behavioral radio-unit model: duplexing kind, self-interference budget,
/// and whether communication can be paused for sensing reception.
struct RuModel {
    std::string ru_id;
    sep::RuKind kind = sep::RuKind::Tdd;
    SicBudget sic;
    bool can_pause_comm = true;
    bool legacy = false; // no sensing-specific hardware, zero SIC
    std::uint32_t beams_supported = 16;
    TddPattern tdd_pattern;

    void validate() const {
        if (legacy && sic.total_db() != 0.0)
            throw Error("gnb", "legacy RU must have a zero SIC budget");
    }
};

struct TrpUnit {
    sep::TrpInfo info;
    RuModel ru;
};

/// Fills the capability fields of a TrpInfo from the RU model.
sep::TrpInfo make_trp_info(const std::string& gnb_id, const std::string& trp_id,
                           const scene::Vec3& position, const RuModel& ru,
                           double coverage_radius_m, double beamwidth_rad);

struct ScheduleRequest {
    std::uint64_t semf_id = 0;
    std::uint32_t period_slots = 10;
    std::uint32_t symbols = 64;
    std::uint32_t subcarriers = 256;
};

/// One periodic sensing allocation produced by gcd aggregation.
struct SensingAllocation {
    std::uint32_t period_slots = 0;
    std::uint32_t offset_slot = 0; // within the TDD pattern period
    std::uint32_t span_slots = 0;
    std::uint32_t symbols = 0;
    std::uint32_t subcarriers = 0;
    // Footprint bookkeeping: one aggregated allocation vs the sum of the
    // individual ones it replaces (symbols x subcarriers per allocated slot).
    double aggregated_cost = 0.0;
    double individual_cost_sum = 0.0;
    std::vector<std::pair<std::uint64_t, double>> over_delivery; // semf_id -> ratio
};

struct SchedulerState {
    TddPattern pattern;
    double comm_dl_load = 0.5;
};

/// Aggregates the active sensing requests into a single periodic allocation:
/// period = gcd of requested periods, symbols/subcarriers = max requested,
/// placed at the earliest contiguous DL region long enough.
std::variant<SensingAllocation, sep::CauseDiagnostics>
schedule_sensing(const SchedulerState& sched, const std::vector<ScheduleRequest>& requests);

struct CapabilityGrant {
    std::optional<double> si_residual_db; // absent when the own TX is silent
    bool pause_comm = false;              // legacy bistatic RX pauses communication
};

/// Checks whether an RU can serve (role, mode, signal) and derives the
/// self-interference residual and pause behavior.
std::variant<CapabilityGrant, sep::CauseDiagnostics>
ru_capability_check(const RuModel& ru, sep::TrpRole role, sep::SensingMode mode,
                    sep::SignalSource signal);

struct PreconfiguredSource {
    std::uint64_t seed = 0;
};
struct BackhaulSource {
    std::uint64_t seed = 0;
    double latency_ms = 5.0;
    double buffer_ms = 8.0;
};
struct OverTheAirSource {
    std::uint64_t seed = 0;
    double sinr_db = 15.0;
    double mcs_threshold_db = 12.0;
    bool wideband_precoding = true;
};
using ReferenceSource = std::variant<PreconfiguredSource, BackhaulSource, OverTheAirSource>;

/// Produces the TX reference grid the receiver will divide by, or the cause
/// of the acquisition failure.
std::variant<ComplexGrid, sep::CauseDiagnostics>
acquire_tx_reference(const ReferenceSource& source, std::size_t subcarriers, std::size_t symbols,
                     const GridMeta& meta);

/// Dynamic bistatic scheduling needs the TX-gNB to warn receivers before the
/// burst; two one-way trips must fit in the lead time.
inline bool bistatic_handshake_ok(double lead_time_ms, double xn_latency_ms) {
    return 2.0 * xn_latency_ms <= lead_time_ms;
}

struct GnbParams {
    scene::RadioParams radio;
    double xn_latency_ms = 3.0;
    double handshake_lead_ms = 10.0;
    double backhaul_latency_ms = 5.0;
    double rx_buffer_ms = 8.0;
    double ota_sinr_db = 15.0;
    double ota_mcs_threshold_db = 12.0;
    bool wideband_precoding = true;
    bool comm_reuse_over_the_air = false; // acquire the TX signal over the air instead of backhaul
    bool dump_periodograms = false;       // trace per-burst periodograms (debug)
    // Fault injection for failure-path scenarios.
    bool reject_requests = false;
    std::map<std::string, double> ru_failure_at_s; // trp_id -> simulation time
};

/// The ISaC-enhanced gNB node: RAN endpoint of SeP, scheduler, RU models and
/// burst execution feeding the sensing chain.
class GnbNode {
public:
    GnbNode(std::string gnb_id, std::vector<TrpUnit> trps, SchedulerState scheduler,
            GnbParams params, NodeRuntime& runtime);

    const std::string& id() const { return gnb_id_; }
    const std::vector<TrpUnit>& trps() const { return trps_; }

    void handle_sep(const sep::SepMessage& msg);
    void handle_xn(const nlohmann::json& payload);
    /// Slot tick: executes due bursts, reports, duration expiry, failures.
    void on_slot();

    /// Counter of communication slots suppressed on legacy bistatic RX RUs.
    std::uint64_t pause_overhead_slots() const { return pause_overhead_slots_; }

    bool has_active_tasks() const {
        for (const auto& [id, task] : tasks_)
            if (task.fsm.phase() == sep::Phase::Active) return true;
        return false;
    }

private:
    struct Task {
        std::uint64_t semf_id = 0;
        std::uint64_t ran_id = 0;
        sep::RanMeasurementFsm fsm;
        std::vector<sep::TrpConfigListEntry> entries;
        sep::MeasurementTiming timing;
        std::int64_t start_slot = 0;
        std::int64_t duration_end_slot = 0;
        std::int64_t next_report_slot = 0;
        std::int64_t report_period_slots = 0;
        bool dynamic_signal = false;
        std::map<std::string, CapabilityGrant> grants;      // per trp
        std::map<std::string, l1::Tracker> trackers;        // per trp
        std::map<std::string, bool> insert_reference_next;  // opportunistic fallback
        std::vector<sep::TrpResultListEntry> pending_results;
        std::set<std::int64_t> armed_rx_slots; // dynamic bistatic RX windows
        std::uint64_t burst_counter = 0;
    };

    const TrpUnit* find_trp(const std::string& trp_id) const;
    std::optional<sep::CauseDiagnostics> validate_request(const sep::SensingRequest& req,
                                                          std::map<std::string, CapabilityGrant>& grants);
    bool recompute_allocation(); // over all active tasks; false when impossible
    void emit(const sep::FsmOutput& out);
    void execute_burst(Task& task, std::int64_t slot);
    std::optional<sep::TrpResultListEntry> execute_entry(Task& task,
                                                         const sep::TrpConfigListEntry& entry,
                                                         std::int64_t slot);

    std::string gnb_id_;
    std::vector<TrpUnit> trps_;
    SchedulerState scheduler_;
    GnbParams params_;
    NodeRuntime& rt_;

    std::map<std::uint64_t, Task> tasks_; // by semf measurement id
    std::optional<SensingAllocation> allocation_;
    std::uint64_t next_ran_id_ = 1;
    std::uint64_t pause_overhead_slots_ = 0;
    std::set<std::string> fired_faults_;
};

} // namespace isacsim::gnb
