#include "isacsim/sim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <memory>
#include <queue>

#include "isacsim/json_util.hpp"

namespace isacsim::sim {

using jsonio::json;

namespace {

constexpr const char* kSemfNodeId = "semf";

struct Event {
    std::int64_t slot;
    std::uint64_t seq;
    std::function<void()> fn;
};

struct EventOrder {
    bool operator()(const Event& a, const Event& b) const {
        if (a.slot != b.slot) return a.slot > b.slot;
        return a.seq > b.seq;
    }
};

class Engine;

/// Per-node view of the engine with the sender identity bound.
class AdapterRuntime : public NodeRuntime {
public:
    AdapterRuntime(Engine& engine, std::string node_id) : engine_(engine), node_id_(std::move(node_id)) {}

    std::int64_t now_slot() const override;
    double now_s() const override;
    std::int64_t slots_for_ms(double ms) const override;
    void send_sep(const std::string& to_node, const sep::SepMessage& msg) override;
    void send_xn(const std::string& to_gnb, const nlohmann::json& payload) override;
    void send_api(const std::string& consumer, const std::string& line) override;
    void schedule_in(std::int64_t delay_slots, std::function<void()> fn) override;
    void trace(nlohmann::json event) override;
    std::uint64_t child_seed(std::string_view label, std::uint64_t a, std::uint64_t b) override;
    scene::SceneState scene_at(double t_s) override;

private:
    Engine& engine_;
    std::string node_id_;
};

class Engine {
public:
    Engine(const ScenarioConfig& cfg, bool dump_periodograms) : cfg_(cfg) {
        slot_duration_s_ = 14.0 / cfg.radio.subcarrier_spacing_hz;
        initial_scene_.objects = cfg.objects;
        initial_scene_.validate();

        semf_runtime_ = std::make_unique<AdapterRuntime>(*this, kSemfNodeId);
        semf::SemfParams sp;
        sp.radio = cfg.radio;
        sp.response_timeout_ms = cfg.sensing.response_timeout_ms;
        sp.fusion_gate_m = cfg.sensing.fusion_gate_m;
        sp.result_ttl_s = cfg.sensing.result_ttl_s;
        sp.track = cfg.sensing.track;
        sp.default_resource = cfg.sensing.resource;
        sp.sweep_beam_count = cfg.sensing.sweep_beam_count;
        sp.sweep_beamwidth_rad = cfg.sensing.sweep_beamwidth_rad;
        auto processing_for = [&](l1::Depth depth) {
            l1::ProcessingConfig pc;
            pc.depth = depth;
            pc.clutter_removal = cfg.sensing.clutter_removal;
            pc.detect.threshold_db_above_noise = cfg.sensing.threshold_db;
            pc.detect.max_targets = cfg.sensing.max_targets;
            pc.zero_pad.n_size = cfg.sensing.zero_pad_n_factor > 1
                                     ? cfg.sensing.zero_pad_n_factor * cfg.sensing.resource.subcarriers
                                     : 0;
            pc.zero_pad.m_size = cfg.sensing.zero_pad_m_factor > 1
                                     ? cfg.sensing.zero_pad_m_factor * cfg.sensing.resource.burst_symbols
                                     : 0;
            pc.track = cfg.sensing.track;
            pc.group_epsilon_m = cfg.sensing.fusion_gate_m;
            return pc;
        };
        sp.mono_processing = processing_for(cfg.sensing.mono_depth);
        sp.bistatic_processing = processing_for(cfg.sensing.bistatic_depth);

        std::vector<std::string> gnb_ids;
        for (const auto& g : cfg.gnbs) gnb_ids.push_back(g.gnb_id);
        semf_ = std::make_unique<semf::SemfNode>(gnb_ids, cfg.policies, cfg.consent_zones, cfg.geomap,
                                                 sp, *semf_runtime_);

        for (const auto& g : cfg.gnbs) {
            std::vector<gnb::TrpUnit> units;
            for (const auto& site : cfg.trps) {
                if (site.gnb_id != g.gnb_id) continue;
                gnb::TrpUnit unit;
                unit.ru = site.ru;
                unit.info = gnb::make_trp_info(g.gnb_id, site.trp_id, site.position, site.ru,
                                               site.coverage_radius_m, site.beamwidth_rad);
                units.push_back(std::move(unit));
            }
            gnb::SchedulerState sched;
            sched.pattern = g.tdd_pattern;
            sched.comm_dl_load = g.comm_dl_load;
            gnb::GnbParams gp;
            gp.radio = cfg.radio;
            gp.xn_latency_ms = cfg.latencies.xn_ms;
            gp.handshake_lead_ms = cfg.handshake_lead_ms;
            gp.backhaul_latency_ms = cfg.latencies.backhaul_ms;
            gp.rx_buffer_ms = cfg.buffer_ms;
            gp.ota_sinr_db = cfg.ota_sinr_db;
            gp.ota_mcs_threshold_db = cfg.ota_mcs_threshold_db;
            gp.wideband_precoding = cfg.wideband_precoding;
            gp.comm_reuse_over_the_air = cfg.comm_reuse_over_the_air;
            gp.dump_periodograms = dump_periodograms;
            for (const auto& fault : cfg.faults) {
                if (fault.kind == "reject_requests" && fault.gnb_id == g.gnb_id)
                    gp.reject_requests = true;
                if (fault.kind == "ru_failure") {
                    for (const auto& site : cfg.trps)
                        if (site.trp_id == fault.trp_id && site.gnb_id == g.gnb_id)
                            gp.ru_failure_at_s[fault.trp_id] = fault.at_s;
                }
            }
            gnb_runtimes_.push_back(std::make_unique<AdapterRuntime>(*this, g.gnb_id));
            gnbs_.emplace(g.gnb_id, std::make_unique<gnb::GnbNode>(g.gnb_id, std::move(units), sched,
                                                                   gp, *gnb_runtimes_.back()));
        }
    }

    // --- services used by the adapters -----------------------------------

    std::int64_t now_slot() const { return now_slot_; }
    double now_s() const { return static_cast<double>(now_slot_) * slot_duration_s_; }
    double slot_duration_s() const { return slot_duration_s_; }

    std::int64_t slots_for_ms(double ms) const {
        if (ms <= 0.0) return 0;
        return static_cast<std::int64_t>(std::ceil(ms / 1000.0 / slot_duration_s_ - 1e-9));
    }

    void schedule_at(std::int64_t slot, std::function<void()> fn) {
        events_.push({std::max(slot, now_slot_), next_seq_++, std::move(fn)});
    }

    void trace_event(json event) {
        event["t_slot"] = now_slot_;
        event["t_s"] = now_s();
        trace_lines_.push_back(event.dump());
    }

    void send_sep(const std::string& from, const std::string& to, const sep::SepMessage& msg) {
        auto frame = sep::encode(msg);
        trace_event({{"ev", "sep_tx"},
                     {"link", "ngc"},
                     {"from", from},
                     {"to", to},
                     {"msg_type", sep::message_type(msg)},
                     {"bytes", frame.size()}});
        std::int64_t delivery = now_slot_ + std::max<std::int64_t>(1, slots_for_ms(cfg_.latencies.ngc_ms));
        schedule_at(delivery, [this, from, to, frame = std::move(frame)] {
            auto outcome = sep::decode(frame);
            if (outcome.status != sep::DecodeStatus::Ok) {
                trace_event({{"ev", "sep_decode_error"}, {"to", to}, {"error", outcome.error}});
                return;
            }
            trace_event({{"ev", "sep_rx"},
                         {"from", from},
                         {"to", to},
                         {"msg_type", sep::message_type(*outcome.message)}});
            if (to == kSemfNodeId) {
                semf_->handle_sep(from, *outcome.message);
                return;
            }
            auto it = gnbs_.find(to);
            if (it == gnbs_.end()) {
                // The control plane cannot reach an unknown node; the
                // requester learns via a failure on the same procedure.
                if (std::holds_alternative<sep::TrpInformationRequest>(*outcome.message)) {
                    sep::TrpInformationFailure fail;
                    fail.cause = {sep::Cause::UnknownTrp, "unknown gNB " + to};
                    send_sep(to, from, fail);
                } else {
                    trace_event({{"ev", "sep_unroutable"}, {"to", to}});
                }
                return;
            }
            it->second->handle_sep(*outcome.message);
        });
    }

    void send_xn(const std::string& from, const std::string& to, const json& payload) {
        std::string body = payload.dump();
        trace_event({{"ev", "xn_tx"},
                     {"link", "xn"},
                     {"from", from},
                     {"to", to},
                     {"bytes", body.size()},
                     {"type", payload.value("type", "")}});
        std::int64_t delivery = now_slot_ + std::max<std::int64_t>(1, slots_for_ms(cfg_.latencies.xn_ms));
        schedule_at(delivery, [this, to, body = std::move(body)] {
            auto it = gnbs_.find(to);
            if (it == gnbs_.end()) return;
            it->second->handle_xn(json::parse(body));
        });
    }

    void send_api(const std::string& consumer, const std::string& line) {
        json parsed = json::parse(line, nullptr, false);
        std::string msg_type = parsed.is_object() ? parsed.value("msg_type", "") : "";
        trace_event({{"ev", "api_tx"},
                     {"link", "api"},
                     {"consumer", consumer},
                     {"msg_type", msg_type},
                     {"bytes", line.size()},
                     {"line", line}});
        // Session bookkeeping for scripted aborts.
        if (msg_type == "SensingServiceResponse") {
            auto& fifo = outstanding_requests_[consumer];
            if (!fifo.empty()) {
                script_sessions_[fifo.front()] = parsed["session_id"].get<std::uint64_t>();
                fifo.pop_front();
            }
        } else if (msg_type == "SensingServiceFailure" && !parsed.contains("session_id")) {
            auto& fifo = outstanding_requests_[consumer];
            if (!fifo.empty()) fifo.pop_front();
        }
        if (api_sink_) api_sink_(consumer, line);
    }

    std::uint64_t child_seed(const std::string& node, std::string_view label, std::uint64_t a,
                             std::uint64_t b) {
        return derive_seed(cfg_.seed ^ hash_label(node), label, a, b);
    }

    scene::SceneState scene_at(double t_s) { return scene::advance(initial_scene_, t_s); }

    // --- execution --------------------------------------------------------

    void write_header() {
        json objects = json::array();
        for (const auto& o : cfg_.objects) {
            objects.push_back({{"id", o.id},
                               {"class", o.true_class},
                               {"static", o.is_static},
                               {"position", jsonio::to_json(o.position)},
                               {"velocity", jsonio::to_json(o.velocity)},
                               {"reflection_amplitude", o.reflection_amplitude}});
        }
        double path_bin = kSpeedOfLight / (static_cast<double>(cfg_.radio.num_subcarriers) *
                                           cfg_.radio.subcarrier_spacing_hz);
        trace_event({{"ev", "run_header"},
                     {"seed", cfg_.seed},
                     {"duration_s", cfg_.duration_s},
                     {"slot_duration_s", slot_duration_s_},
                     {"path_bin_m", path_bin},
                     {"radio",
                      {{"carrier_freq_hz", cfg_.radio.carrier_freq_hz},
                       {"subcarrier_spacing_hz", cfg_.radio.subcarrier_spacing_hz},
                       {"num_subcarriers", cfg_.radio.num_subcarriers},
                       {"num_symbols", cfg_.radio.num_symbols}}},
                     {"objects", std::move(objects)}});
    }

    void schedule_script() {
        for (std::size_t i = 0; i < cfg_.af_script.size(); ++i) {
            const auto& entry = cfg_.af_script[i];
            std::int64_t slot = static_cast<std::int64_t>(
                std::ceil(entry.at_s / slot_duration_s_ - 1e-9));
            schedule_at(slot, [this, i] { inject_script_entry(i); });
        }
    }

    void inject_script_entry(std::size_t index) {
        const auto& entry = cfg_.af_script[index];
        if (entry.request) {
            api::ApiMessage msg = *entry.request;
            trace_event({{"ev", "api_rx"},
                         {"consumer", entry.consumer},
                         {"msg_type", "SensingServiceRequest"},
                         {"bytes", api::api_encode(msg).size()}});
            outstanding_requests_[entry.consumer].push_back(index);
            semf_->handle_api(entry.consumer, msg);
            return;
        }
        auto it = script_sessions_.find(*entry.abort_of);
        if (it == script_sessions_.end()) {
            trace_event({{"ev", "script_abort_skipped"},
                         {"entry", index},
                         {"why", "referenced request never opened a session"}});
            return;
        }
        api::SensingServiceAbort abort;
        abort.session_id = it->second;
        abort.origin = "consumer";
        trace_event({{"ev", "api_rx"},
                     {"consumer", entry.consumer},
                     {"msg_type", "SensingServiceAbort"},
                     {"bytes", api::api_encode(abort).size()}});
        semf_->handle_api(entry.consumer, abort);
    }

    void step_slot() {
        while (!events_.empty() && events_.top().slot <= now_slot_) {
            auto fn = events_.top().fn;
            events_.pop();
            fn();
        }
        for (auto& [id, node] : gnbs_) node->on_slot();
    }

    bool quiescent() const {
        if (!events_.empty()) return false;
        if (semf_->active_session_count() > 0) return false;
        for (const auto& [id, node] : gnbs_)
            if (node->has_active_tasks()) return false;
        return true;
    }

    void begin() {
        write_header();
        schedule_script();
    }

    void advance_one_slot() {
        ++now_slot_;
        step_slot();
    }

    semf::SemfNode& semf() { return *semf_; }

    RunResult execute() {
        auto start = std::chrono::steady_clock::now();
        write_header();
        schedule_script();
        const auto duration_slots =
            static_cast<std::int64_t>(std::ceil(cfg_.duration_s / slot_duration_s_));
        for (now_slot_ = 0; now_slot_ <= duration_slots; ++now_slot_) step_slot();
        now_slot_ = duration_slots;

        RunResult result;
        result.trace_lines = trace_lines_;
        result.metrics = metrics_from_trace(result.trace_lines);
        std::uint64_t pause = 0;
        for (const auto& [id, node] : gnbs_) pause += node->pause_overhead_slots();
        result.metrics.pause_overhead_slots = pause;
        result.metrics.runtime_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        return result;
    }

    void set_api_sink(std::function<void(const std::string&, const std::string&)> sink) {
        api_sink_ = std::move(sink);
    }

private:
    const ScenarioConfig& cfg_;
    double slot_duration_s_;
    scene::SceneState initial_scene_;
    std::int64_t now_slot_ = 0;
    std::uint64_t next_seq_ = 0;
    std::priority_queue<Event, std::vector<Event>, EventOrder> events_;
    std::vector<std::string> trace_lines_;

    std::unique_ptr<AdapterRuntime> semf_runtime_;
    std::vector<std::unique_ptr<AdapterRuntime>> gnb_runtimes_;
    std::unique_ptr<semf::SemfNode> semf_;
    std::map<std::string, std::unique_ptr<gnb::GnbNode>> gnbs_;

    std::map<std::string, std::deque<std::size_t>> outstanding_requests_;
    std::map<std::size_t, std::uint64_t> script_sessions_;
    std::function<void(const std::string&, const std::string&)> api_sink_;
};

std::int64_t AdapterRuntime::now_slot() const { return engine_.now_slot(); }
double AdapterRuntime::now_s() const { return engine_.now_s(); }
std::int64_t AdapterRuntime::slots_for_ms(double ms) const { return engine_.slots_for_ms(ms); }
void AdapterRuntime::send_sep(const std::string& to_node, const sep::SepMessage& msg) {
    engine_.send_sep(node_id_, to_node, msg);
}
void AdapterRuntime::send_xn(const std::string& to_gnb, const nlohmann::json& payload) {
    engine_.send_xn(node_id_, to_gnb, payload);
}
void AdapterRuntime::send_api(const std::string& consumer, const std::string& line) {
    engine_.send_api(consumer, line);
}
void AdapterRuntime::schedule_in(std::int64_t delay_slots, std::function<void()> fn) {
    engine_.schedule_at(engine_.now_slot() + std::max<std::int64_t>(delay_slots, 1), std::move(fn));
}
void AdapterRuntime::trace(nlohmann::json event) { engine_.trace_event(std::move(event)); }
std::uint64_t AdapterRuntime::child_seed(std::string_view label, std::uint64_t a, std::uint64_t b) {
    return engine_.child_seed(node_id_, label, a, b);
}
scene::SceneState AdapterRuntime::scene_at(double t_s) { return engine_.scene_at(t_s); }

} // namespace

RunResult run(const ScenarioConfig& config, bool dump_periodograms) {
    Engine engine(config, dump_periodograms);
    return engine.execute();
}

// ---------------------------------------------------------------------------
// Metrics from a trace
// ---------------------------------------------------------------------------

namespace {

struct TruthObject {
    std::string id;
    scene::Vec3 position;
    scene::Vec3 velocity;

    scene::Vec3 at(double t) const { return position + velocity * t; }
};

} // namespace

RunMetrics metrics_from_trace(const std::vector<std::string>& trace_lines) {
    RunMetrics m;
    std::vector<TruthObject> truth;
    double header_path_bin = 1.0;

    std::uint64_t tp = 0, fp = 0, fn = 0;
    double loc_sq_sum = 0.0, vel_sq_sum = 0.0;
    std::size_t loc_count = 0;

    for (const auto& line : trace_lines) {
        json ev = json::parse(line, nullptr, false);
        if (ev.is_discarded() || !ev.is_object()) continue;
        std::string kind = ev.value("ev", "");

        if (kind == "run_header") {
            header_path_bin = ev.value("path_bin_m", 1.0);
            for (const auto& o : ev["objects"]) {
                truth.push_back({o["id"].get<std::string>(), jsonio::vec3_from_json(o["position"]),
                                 jsonio::vec3_from_json(o["velocity"])});
            }
        } else if (kind == "sep_tx" || kind == "xn_tx" || kind == "api_tx") {
            std::string link = ev.value("link", "?");
            m.message_counts[link] += 1;
            m.byte_volumes[link] += ev.value("bytes", std::uint64_t(0));
        } else if (kind == "burst_rx") {
            m.pause_overhead_slots += ev.value("paused_comm_slots", std::uint64_t(0));
            std::string depth = ev.value("depth", "");
            if (depth != "Targets2D" && depth != "Targets4D") continue;
            double gate = 2.0 * ev.value("path_bin_m", header_path_bin);
            std::vector<double> det_paths, truth_paths;
            for (const auto& d : ev["detections"]) det_paths.push_back(d["path_length_m"].get<double>());
            for (const auto& t : ev["truth"]) truth_paths.push_back(t["path_length_m"].get<double>());
            // Greedy nearest pairing within the gate.
            struct Pair {
                double delta;
                std::size_t det, tru;
            };
            std::vector<Pair> pairs;
            for (std::size_t i = 0; i < det_paths.size(); ++i)
                for (std::size_t j = 0; j < truth_paths.size(); ++j) {
                    double delta = std::abs(det_paths[i] - truth_paths[j]);
                    if (delta <= gate) pairs.push_back({delta, i, j});
                }
            std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
                if (a.delta != b.delta) return a.delta < b.delta;
                if (a.det != b.det) return a.det < b.det;
                return a.tru < b.tru;
            });
            std::vector<bool> det_used(det_paths.size(), false), tru_used(truth_paths.size(), false);
            for (const auto& p : pairs) {
                if (det_used[p.det] || tru_used[p.tru]) continue;
                det_used[p.det] = tru_used[p.tru] = true;
                ++tp;
            }
            for (bool used : det_used)
                if (!used) ++fp;
            for (bool used : tru_used)
                if (!used) ++fn;
        } else if (kind == "fusion") {
            double t_s = ev.value("t_s", 0.0);
            double gate = 2.0 * header_path_bin;
            for (const auto& obj : ev["objects"]) {
                scene::Vec3 pos = jsonio::vec3_from_json(obj["position"]);
                scene::Vec3 vel = jsonio::vec3_from_json(obj["velocity"]);
                const TruthObject* best = nullptr;
                double best_d = gate;
                for (const auto& t : truth) {
                    double d = (t.at(t_s) - pos).norm();
                    if (d <= best_d) {
                        best_d = d;
                        best = &t;
                    }
                }
                if (best) {
                    loc_sq_sum += best_d * best_d;
                    vel_sq_sum += (best->velocity - vel).dot(best->velocity - vel);
                    ++loc_count;
                }
            }
        } else if (kind == "session_done") {
            m.session_outcomes[ev.value("outcome", "?")] += 1;
            m.sessions += 1;
        }
    }

    m.detection_precision = (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 1.0;
    m.detection_recall = (tp + fn) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 1.0;
    if (loc_count > 0) {
        m.localization_rmse_m = std::sqrt(loc_sq_sum / static_cast<double>(loc_count));
        m.velocity_rmse_m_per_s = std::sqrt(vel_sq_sum / static_cast<double>(loc_count));
        m.localization_matches = loc_count;
    }
    return m;
}

json metrics_to_json(const RunMetrics& m) {
    json links = json::object();
    for (const auto& [link, count] : m.message_counts)
        links[link] = {{"messages", count}, {"bytes", m.byte_volumes.count(link) ? m.byte_volumes.at(link) : 0}};
    json outcomes = json::object();
    for (const auto& [outcome, count] : m.session_outcomes) outcomes[outcome] = count;
    return {{"detection_precision", m.detection_precision},
            {"detection_recall", m.detection_recall},
            {"localization_rmse_m", m.localization_rmse_m},
            {"velocity_rmse_m_per_s", m.velocity_rmse_m_per_s},
            {"localization_matches", m.localization_matches},
            {"links", std::move(links)},
            {"pause_overhead_slots", m.pause_overhead_slots},
            {"session_outcomes", std::move(outcomes)},
            {"sessions", m.sessions},
            {"runtime_s", m.runtime_s}};
}

void write_report(const RunResult& result, const std::string& out_dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw Error("report", "cannot create output directory " + out_dir);

    {
        std::ofstream trace(out_dir + "/trace.jsonl", std::ios::binary);
        if (!trace.good()) throw Error("report", "cannot write trace.jsonl");
        for (const auto& line : result.trace_lines) trace << line << "\n";
    }
    {
        std::ofstream metrics(out_dir + "/metrics.json", std::ios::binary);
        metrics << metrics_to_json(result.metrics).dump(2) << "\n";
    }

    // Session summary assembled from the trace.
    struct Row {
        std::string consumer = "?";
        std::string purpose = "?";
        std::string mode = "-";
        std::string outcome = "?";
        int notifications = 0;
    };
    std::map<std::uint64_t, Row> rows;
    std::vector<std::string> pgram_lines;
    for (const auto& line : result.trace_lines) {
        json ev = json::parse(line, nullptr, false);
        if (ev.is_discarded() || !ev.is_object()) continue;
        std::string kind = ev.value("ev", "");
        if (kind == "transparency_broadcast") {
            auto& row = rows[ev["session_id"].get<std::uint64_t>()];
            row.consumer = ev.value("consumer", "?");
            row.purpose = ev.value("purpose", "?");
        } else if (kind == "trp_selection") {
            rows[ev["session_id"].get<std::uint64_t>()].mode = ev.value("mode", "-");
        } else if (kind == "api_notification") {
            rows[ev["session_id"].get<std::uint64_t>()].notifications += 1;
        } else if (kind == "session_done") {
            rows[ev["session_id"].get<std::uint64_t>()].outcome = ev.value("outcome", "?");
        } else if (kind == "periodogram_dump") {
            pgram_lines.push_back(line);
        }
    }
    {
        std::ofstream summary(out_dir + "/summary.csv", std::ios::binary);
        summary << "session_id,consumer,purpose,mode,outcome,notifications\n";
        for (const auto& [id, row] : rows) {
            summary << id << ',' << row.consumer << ',' << row.purpose << ',' << row.mode << ','
                    << row.outcome << ',' << row.notifications << "\n";
        }
    }
    if (!pgram_lines.empty()) {
        std::ofstream pg(out_dir + "/periodograms.jsonl", std::ios::binary);
        for (const auto& line : pgram_lines) pg << line << "\n";
    }
}

struct InteractiveRun::Impl {
    ScenarioConfig config;
    Engine engine;
    bool begun = false;

    Impl(const ScenarioConfig& cfg, std::function<void(const std::string&, const std::string&)> sink)
        : config(cfg), engine(config, false) {
        engine.set_api_sink(std::move(sink));
    }
};

InteractiveRun::InteractiveRun(const ScenarioConfig& config,
                               std::function<void(const std::string&, const std::string&)> sink)
    : impl_(std::make_unique<Impl>(config, std::move(sink))) {}

InteractiveRun::~InteractiveRun() = default;

void InteractiveRun::submit_line(const std::string& consumer, const std::string& line) {
    if (!impl_->begun) {
        impl_->engine.begin();
        impl_->begun = true;
    }
    auto decoded = api::api_decode(line);
    if (!decoded.message) {
        api::SensingServiceFailure fail;
        fail.cause = api::ApiCause::InvalidRequest;
        fail.diagnostics = decoded.error;
        impl_->engine.send_api(consumer, api::api_encode(fail));
        return;
    }
    impl_->engine.semf().handle_api(consumer, *decoded.message);
    // Simulate until the request has fully played out.
    const auto cap = static_cast<std::int64_t>(
        std::ceil(impl_->config.duration_s * 4.0 / impl_->engine.slot_duration_s()));
    for (std::int64_t guard = 0; guard < cap && !impl_->engine.quiescent(); ++guard)
        impl_->engine.advance_one_slot();
}

} // namespace isacsim::sim
