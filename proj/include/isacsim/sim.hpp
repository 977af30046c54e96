#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "isacsim/scenario.hpp"

namespace isacsim::sim {

struct RunMetrics {
    double detection_precision = 0.0;
    double detection_recall = 0.0;
    double localization_rmse_m = 0.0;
    double velocity_rmse_m_per_s = 0.0;
    std::size_t localization_matches = 0;
    std::map<std::string, std::uint64_t> message_counts;  // per link
    std::map<std::string, std::uint64_t> byte_volumes;    // per link
    std::uint64_t pause_overhead_slots = 0;
    std::map<std::string, int> session_outcomes;
    int sessions = 0;
    double runtime_s = 0.0;
};

struct RunResult {
    std::vector<std::string> trace_lines; // JSON-lines, byte-deterministic
    RunMetrics metrics;
};

/// Runs the scenario to completion. All randomness derives from the seed;
/// identical (config, seed) produce byte-identical traces.
RunResult run(const ScenarioConfig& config, bool dump_periodograms = false);

/// Recomputes the metrics from a trace alone (the header line carries the
/// ground truth needed). The runtime field is left at zero.
RunMetrics metrics_from_trace(const std::vector<std::string>& trace_lines);

/// Writes trace.jsonl, metrics.json and summary.csv (one row per session);
/// periodogram dump events, when present, additionally land in
/// periodograms.jsonl.
void write_report(const RunResult& result, const std::string& out_dir);

nlohmann::json metrics_to_json(const RunMetrics& m);

/// Interactive binding for the --api-listen mode: each submitted request
/// line is simulated until the engine is quiescent; produced API lines go to
/// the sink as they appear.
class InteractiveRun {
public:
    InteractiveRun(const ScenarioConfig& config,
                   std::function<void(const std::string&, const std::string&)> sink);
    ~InteractiveRun();

    void submit_line(const std::string& consumer, const std::string& line);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace isacsim::sim
