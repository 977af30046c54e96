#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "isacsim/geometry2d.hpp"
#include "isacsim/isac_api.hpp"
#include "isacsim/l1sens.hpp"
#include "isacsim/runtime.hpp"
#include "isacsim/sep.hpp"

namespace isacsim::semf {

using scene::Vec3;

// ---------------------------------------------------------------------------
// Policy, consent, transparency, minimization
// ---------------------------------------------------------------------------

struct PolicyRecord {
    std::string consumer_id;
    geo::Polygon allowed_area;
    double max_update_frequency_hz = 1.0;
    std::set<std::string> allowed_purposes;
    std::set<std::string> allowed_result_fields;
};

struct ConsentZone {
    geo::Polygon area;
    bool sensing_allowed = true;
    std::string owner;
};

struct MinimizationProfile {
    std::set<std::string> fields; // subset of the field universe below
};

/// Field universe for minimized results.
inline const std::set<std::string>& result_field_universe() {
    static const std::set<std::string> u = {"position",   "position_coarse", "velocity",
                                            "class",      "confidence",      "annotation"};
    return u;
}

/// Purpose table: the maximum field set each declared purpose may receive.
const std::map<std::string, std::set<std::string>>& purpose_field_table();

struct SensingTrigger {
    std::string consumer_id;
    std::vector<api::Point2> area;
    std::string purpose;
    bool one_shot = true;
    double update_period_s = 0.0;
};

struct SpctmDecision {
    bool allowed = false;
    api::ApiCause cause = api::ApiCause::PolicyDenied;
    std::string reason;
    MinimizationProfile profile;
};

SpctmDecision spctm_check(const SensingTrigger& trigger, const std::vector<PolicyRecord>& policies,
                          const std::vector<ConsentZone>& consents);

// ---------------------------------------------------------------------------
// TRP registry, discovery and selection
// ---------------------------------------------------------------------------

struct TrpRegistry {
    std::map<std::string, std::vector<sep::TrpInfo>> by_gnb;
    std::set<std::string> unavailable;

    bool known(const std::string& gnb_id) const {
        return by_gnb.count(gnb_id) || unavailable.count(gnb_id);
    }
    std::vector<sep::TrpInfo> all() const {
        std::vector<sep::TrpInfo> out;
        for (const auto& [g, list] : by_gnb) out.insert(out.end(), list.begin(), list.end());
        return out;
    }
};

enum class SessionMode { MultiMonostatic, Multistatic };
const char* to_string(SessionMode m);

struct TrpAssignment {
    sep::TrpInfo trp;
    sep::TrpRole role;
};

struct Selection {
    SessionMode mode = SessionMode::MultiMonostatic;
    std::vector<TrpAssignment> assignments; // Multistatic: exactly one Tx entry
};

/// Candidate TRPs cover the area when their coverage disc touches it.
/// Monostatic-capable candidates win; otherwise one Tx plus at least two Rx
/// form a multistatic cluster. Deterministic tie-breaks by trp id.
std::optional<Selection> trp_select(const TrpRegistry& registry, const geo::Polygon& area,
                                    double usable_sic_db);

// ---------------------------------------------------------------------------
// Fusion, classification, tracking, geomap, result store
// ---------------------------------------------------------------------------

struct FusedObject {
    std::uint64_t object_id = 0;
    Vec3 position;
    Vec3 velocity;
    std::string class_label = "unclassified";
    double confidence = 0.0;
    std::vector<std::string> contributing_trp_ids;
    std::string annotation; // known_static | new_detection (geomap fusion)
};

struct MonoObservation {
    std::string trp_id;
    Vec3 position;
    Vec3 velocity;
    double weight = 1.0; // linear power
};

/// Clusters per-TRP localized observations across TRPs (single linkage) and
/// fuses each cluster by power-weighted means. Confidence grows with the
/// number of distinct contributing TRPs as 1 - 0.5^count.
std::vector<FusedObject> fuse_multimonostatic(const std::vector<MonoObservation>& observations,
                                              double gate_m);

/// Residuals r_i = |p-tx| + |p-rx_i| - L_i and the analytic Jacobian rows
/// u_tx(p) + u_rx_i(p).
void multistatic_residuals(const Vec3& tx, const std::vector<Vec3>& rx,
                           const std::vector<double>& path_lengths, const Vec3& p,
                           Eigen::VectorXd& residuals, Eigen::MatrixXd& jacobian);

struct GnSolveResult {
    Vec3 position;
    bool converged = false;
    int iterations = 0;
    double max_residual_m = std::numeric_limits<double>::infinity();
    std::vector<double> objective_history; // non-increasing over accepted steps
};

/// Damped Gauss-Newton minimization of the sum of squared bistatic path
/// residuals, initialized at the RX centroid.
GnSolveResult solve_multistatic_point(const Vec3& tx, const std::vector<Vec3>& rx,
                                      const std::vector<double>& path_lengths);

/// Velocity from per-leg path-length rates dL_i/dt = v . (u_tx + u_rx_i),
/// linear least squares at the solved position. Rank-deficient geometries
/// get the minimum-norm solution.
Vec3 velocity_from_path_rates(const Vec3& tx, const std::vector<Vec3>& rx, const Vec3& position,
                              const std::vector<double>& path_rates);

struct MultistaticLeg {
    std::string trp_id;
    Vec3 rx_pos;
    std::vector<l1::TargetPoint2D> points;
};

/// Associates detections across >= 3 RX legs by solving candidate tuples and
/// keeping consistent solutions (residual within 3x the range resolution).
std::vector<FusedObject> fuse_multistatic(const Vec3& tx_pos, const std::vector<MultistaticLeg>& legs,
                                          double range_resolution_m, double cluster_gate_m);

struct GeoMapStatic {
    std::string id;
    Vec3 center;
    Vec3 extent; // half widths per axis

    bool contains(const Vec3& p) const {
        return std::abs(p.x - center.x) <= extent.x && std::abs(p.y - center.y) <= extent.y &&
               std::abs(p.z - center.z) <= extent.z;
    }
};

/// Rule-table classification from speed and geomap membership.
std::string classify(const Vec3& position, const Vec3& velocity,
                     const std::vector<GeoMapStatic>& geomap);

struct GeoMapFusionResult {
    std::vector<FusedObject> annotated;
    std::vector<std::string> unconfirmed_statics; // geomap ids with no detection
};

GeoMapFusionResult geomap_fuse(const std::vector<GeoMapStatic>& statics,
                               std::vector<FusedObject> fused);

/// SeMF-level track memory reusing the constant-velocity Kalman machinery.
/// Tracks unmatched for more than three scans retire.
class SemfTracker {
public:
    explicit SemfTracker(l1::TrackConfig cfg = {}) : cfg_(cfg) {}

    /// Associates fused objects to tracks, updates, creates and retires.
    void update(const std::vector<FusedObject>& fused, double t_s);
    std::vector<l1::TrackState>& tracks() { return tracks_; }
    const std::vector<l1::TrackState>& tracks() const { return tracks_; }

    struct Prediction {
        std::uint64_t track_id;
        Vec3 position;
    };
    std::vector<Prediction> predict(double horizon_s, double now_s) const;

private:
    l1::TrackConfig cfg_;
    std::vector<l1::TrackState> tracks_;
    std::uint64_t next_id_ = 1;
};

struct ResultStoreEntry {
    geo::Polygon area;
    double produced_at_s = 0.0;
    double freshness_ttl_s = 10.0;
    std::vector<FusedObject> objects;
    std::uint64_t session_id = 0;
};

class ResultStore {
public:
    void insert(ResultStoreEntry entry) { entries_.push_back(std::move(entry)); }

    /// Hit when a stored entry's area covers the request area and its age is
    /// within both the entry TTL and the caller's freshness bound.
    std::optional<ResultStoreEntry> serve(const geo::Polygon& request_area, double max_age_s,
                                          double now_s) const;

    const std::vector<ResultStoreEntry>& entries() const { return entries_; }

private:
    std::vector<ResultStoreEntry> entries_;
};

// ---------------------------------------------------------------------------
// The SeMF node
// ---------------------------------------------------------------------------

struct SemfParams {
    scene::RadioParams radio;
    double response_timeout_ms = 500.0;
    double discovery_backoff_ms = 100.0;
    double fusion_gate_m = 5.0;
    double usable_sic_db = 0.0; // strictly above this is monostatic-capable
    double result_ttl_s = 10.0;
    double track_horizon_s = 1.0;
    l1::TrackConfig track;
    sep::ResourceConfig default_resource;
    l1::ProcessingConfig mono_processing;     // Targets4D by default
    l1::ProcessingConfig bistatic_processing; // Targets2D by default
    std::uint32_t sweep_beam_count = 8;
    double sweep_beamwidth_rad = 0.9;
    double bistatic_beamwidth_rad = M_PI;

    double range_resolution_m() const {
        return kSpeedOfLight /
               (static_cast<double>(default_resource.subcarriers) * radio.subcarrier_spacing_hz);
    }
};

class SemfNode {
public:
    SemfNode(std::vector<std::string> gnb_ids, std::vector<PolicyRecord> policies,
             std::vector<ConsentZone> consents, std::vector<GeoMapStatic> geomap, SemfParams params,
             NodeRuntime& runtime);

    void handle_api(const std::string& consumer, const api::ApiMessage& msg);
    void handle_sep(const std::string& from_gnb, const sep::SepMessage& msg);

    const TrpRegistry& registry() const { return registry_; }
    const ResultStore& result_store() const { return store_; }
    std::size_t active_session_count() const;

private:
    enum class SessionPhase { Requested, Active, Done, Aborted, Failed };

    struct Leg {
        std::string gnb_id;
        std::uint64_t semf_id = 0;
        sep::SemfMeasurementFsm fsm;
        std::vector<sep::TrpConfigListEntry> entries;
        bool reporting = false; // carries results (has a non-Tx entry)
        bool has_unfused = false;
        int reports_delivered = 0;
        std::vector<sep::TrpResultListEntry> unfused;
    };

    struct Session {
        std::uint64_t session_id = 0;
        std::string consumer;
        std::string purpose;
        std::vector<api::Point2> area;
        geo::Polygon area_poly;
        MinimizationProfile profile;
        sep::MeasurementTiming timing;     // API-level quality
        sep::MeasurementTiming sep_timing; // what the legs actually run
        double max_result_age_s = 0.0;
        SessionMode mode = SessionMode::MultiMonostatic;
        SessionPhase phase = SessionPhase::Requested;
        std::vector<Leg> legs;
        int expected_reports = 0; // periodic, per reporting leg
        Vec3 tx_pos;              // multistatic
        SemfTracker tracker;
        bool discovery_pending = false;
    };

    void start_orchestration(Session& session);
    void proceed_after_discovery();
    void select_and_request(Session& session);
    void process_leg_output(Session& session, Leg& leg, const sep::FsmOutput& out);
    void complete_nonreporting_legs(Session& session);
    void maybe_fuse(Session& session);
    void fuse_and_notify(Session& session);
    void fail_session(Session& session, api::ApiCause cause, const std::string& why);
    void abort_all_legs(Session& session);
    void check_session_complete(Session& session);
    void notify(Session& session, const std::vector<FusedObject>& fused);
    api::MinimizedObject minimize(const FusedObject& obj, const MinimizationProfile& profile) const;
    Session* session_by_id(std::uint64_t id);
    void send_api_failure(const std::string& consumer, std::optional<std::uint64_t> session_id,
                          api::ApiCause cause, const std::string& diagnostics);

    std::vector<std::string> gnb_ids_;
    std::vector<PolicyRecord> policies_;
    std::vector<ConsentZone> consents_;
    std::vector<GeoMapStatic> geomap_;
    SemfParams params_;
    NodeRuntime& rt_;

    TrpRegistry registry_;
    std::map<std::string, int> discovery_attempts_;
    std::set<std::string> discovery_outstanding_;
    ResultStore store_;
    std::map<std::uint64_t, Session> sessions_;
    std::map<std::uint64_t, std::pair<std::uint64_t, std::size_t>> leg_by_semf_id_;
    std::uint64_t next_session_id_ = 1;
    std::uint64_t next_semf_measurement_id_ = 1;
};

} // namespace isacsim::semf
