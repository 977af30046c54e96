#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "isacsim/gnb.hpp"
#include "isacsim/isac_api.hpp"
#include "isacsim/scene.hpp"
#include "isacsim/semf.hpp"

namespace isacsim::sim {

struct TrpSite {
    std::string trp_id;
    std::string gnb_id;
    scene::Vec3 position;
    gnb::RuModel ru;
    double coverage_radius_m = 500.0;
    double beamwidth_rad = 0.5;
};

struct GnbConfig {
    std::string gnb_id;
    gnb::TddPattern tdd_pattern;
    double comm_dl_load = 0.5;
};

struct AfScriptEntry {
    double at_s = 0.0;
    std::string consumer;
    // Exactly one of the two: a full service request, or an abort referring
    // to the session opened by an earlier script entry (by index).
    std::optional<api::SensingServiceRequest> request;
    std::optional<std::size_t> abort_of;
};

struct FaultConfig {
    std::string kind; // "reject_requests" | "ru_failure"
    std::string gnb_id;
    std::string trp_id;
    double at_s = 0.0;
};

struct LatencyConfig {
    double ngc_ms = 10.0;
    double xn_ms = 3.0;
    double backhaul_ms = 5.0;
};

struct SensingDefaults {
    sep::ResourceConfig resource;
    l1::Depth mono_depth = l1::Depth::Targets4D;
    l1::Depth bistatic_depth = l1::Depth::Targets2D;
    bool clutter_removal = true;
    double threshold_db = 15.0;
    std::size_t max_targets = 5;
    std::size_t zero_pad_n_factor = 1;
    std::size_t zero_pad_m_factor = 1;
    std::uint32_t sweep_beam_count = 8;
    double sweep_beamwidth_rad = 0.9;
    l1::TrackConfig track;
    double fusion_gate_m = 5.0;
    double result_ttl_s = 10.0;
    double response_timeout_ms = 500.0;
};

struct ScenarioConfig {
    scene::RadioParams radio;
    std::vector<GnbConfig> gnbs;
    std::vector<TrpSite> trps;
    std::vector<scene::GroundObject> objects;
    std::vector<semf::GeoMapStatic> geomap;
    std::vector<semf::PolicyRecord> policies;
    std::vector<semf::ConsentZone> consent_zones;
    std::vector<AfScriptEntry> af_script;
    std::vector<FaultConfig> faults;
    LatencyConfig latencies;
    double buffer_ms = 8.0;
    double handshake_lead_ms = 10.0;
    bool comm_reuse_over_the_air = false;
    double ota_sinr_db = 15.0;
    double ota_mcs_threshold_db = 12.0;
    bool wideband_precoding = true;
    SensingDefaults sensing;
    std::uint64_t seed = 0;
    double duration_s = 5.0;
};

/// Parses and fully validates a scenario file. The first violation is
/// thrown as an Error whose message carries the JSON path.
ScenarioConfig load_scenario(const std::string& path);

/// Lists every violation instead of stopping at the first.
std::vector<std::string> validate_scenario_file(const std::string& path);

/// Validation over an already-parsed document (empty result = valid).
std::vector<std::string> validate_scenario_json(const nlohmann::json& doc);

/// Builds the config from a document that passed validation.
ScenarioConfig scenario_from_json(const nlohmann::json& doc);

} // namespace isacsim::sim
