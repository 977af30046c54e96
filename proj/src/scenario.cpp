#include "isacsim/scenario.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "isacsim/json_util.hpp"

namespace isacsim::sim {

using jsonio::json;

namespace {

bool is_finite_number(const json& j) { return j.is_number() && std::isfinite(j.get<double>()); }

bool is_vec3(const json& j) {
    return j.is_array() && j.size() == 3 && is_finite_number(j[0]) && is_finite_number(j[1]) &&
           is_finite_number(j[2]);
}

bool is_polygon(const json& j, std::string* why = nullptr) {
    if (!j.is_array() || j.size() < 3) {
        if (why) *why = "polygon needs at least 3 [x, y] vertices";
        return false;
    }
    std::vector<geo::Point2> pts;
    for (const auto& v : j) {
        if (!v.is_array() || v.size() != 2 || !is_finite_number(v[0]) || !is_finite_number(v[1])) {
            if (why) *why = "polygon vertex must be [x, y]";
            return false;
        }
        pts.push_back({v[0].get<double>(), v[1].get<double>()});
    }
    if (!geo::Polygon(pts).valid()) {
        if (why) *why = "polygon is self-intersecting";
        return false;
    }
    return true;
}

gnb::TddPattern pattern_from_json(const json& j) {
    gnb::TddPattern pattern;
    pattern.slots_dl.clear();
    if (j.is_string()) {
        for (char c : j.get<std::string>()) pattern.slots_dl.push_back(c == 'D' || c == 'd');
    } else {
        for (const auto& b : j) pattern.slots_dl.push_back(b.get<bool>());
    }
    return pattern;
}

std::vector<geo::Point2> points_from_json(const json& j) {
    std::vector<geo::Point2> pts;
    for (const auto& v : j) pts.push_back({v[0].get<double>(), v[1].get<double>()});
    return pts;
}

} // namespace

std::vector<std::string> validate_scenario_json(const json& doc) {
    std::vector<std::string> errors;
    auto err = [&](const std::string& path, const std::string& what) {
        errors.push_back(path + ": " + what);
    };

    if (!doc.is_object()) {
        err("/", "scenario must be a JSON object");
        return errors;
    }

    if (!doc.contains("seed"))
        err("/seed", "missing mandatory field");
    else if (!doc["seed"].is_number_unsigned())
        err("/seed", "must be an unsigned integer");

    if (!doc.contains("radio")) {
        err("/radio", "missing mandatory field");
    } else {
        const json& r = doc["radio"];
        auto positive = [&](const char* key) {
            if (!r.contains(key) || !is_finite_number(r[key]) || r[key].get<double>() <= 0.0)
                err(std::string("/radio/") + key, "must be a positive number");
        };
        positive("carrier_freq_hz");
        positive("subcarrier_spacing_hz");
        for (const char* key : {"num_subcarriers", "num_symbols"}) {
            if (!r.contains(key) || !r[key].is_number_unsigned() || r[key].get<std::size_t>() < 2)
                err(std::string("/radio/") + key, "must be an integer >= 2");
        }
        if (r.contains("noise_power_dbm") && !r["noise_power_dbm"].is_null() &&
            !is_finite_number(r["noise_power_dbm"]))
            err("/radio/noise_power_dbm", "must be a finite number or null");
    }

    if (!doc.contains("duration_s") || !is_finite_number(doc["duration_s"]) ||
        doc["duration_s"].get<double>() <= 0.0)
        err("/duration_s", "must be a positive number");

    std::set<std::string> gnb_ids;
    if (!doc.contains("gnbs") || !doc["gnbs"].is_array() || doc["gnbs"].empty()) {
        err("/gnbs", "must be a non-empty array");
    } else {
        for (std::size_t i = 0; i < doc["gnbs"].size(); ++i) {
            const json& g = doc["gnbs"][i];
            std::string path = "/gnbs/" + std::to_string(i);
            if (!g.contains("gnb_id") || !g["gnb_id"].is_string()) {
                err(path + "/gnb_id", "missing or not a string");
                continue;
            }
            if (!gnb_ids.insert(g["gnb_id"].get<std::string>()).second)
                err(path + "/gnb_id", "duplicate gnb id");
            if (g.contains("tdd_pattern")) {
                auto pattern = pattern_from_json(g["tdd_pattern"]);
                if (pattern.slots_dl.empty()) err(path + "/tdd_pattern", "pattern must be non-empty");
            }
            if (g.contains("comm_dl_load")) {
                double load = g["comm_dl_load"].get<double>();
                if (load < 0.0 || load > 1.0) err(path + "/comm_dl_load", "must lie in [0, 1]");
            }
        }
    }

    std::set<std::string> trp_ids;
    if (!doc.contains("trps") || !doc["trps"].is_array() || doc["trps"].empty()) {
        err("/trps", "must be a non-empty array");
    } else {
        for (std::size_t i = 0; i < doc["trps"].size(); ++i) {
            const json& t = doc["trps"][i];
            std::string path = "/trps/" + std::to_string(i);
            if (!t.contains("trp_id") || !t["trp_id"].is_string())
                err(path + "/trp_id", "missing or not a string");
            else if (!trp_ids.insert(t["trp_id"].get<std::string>()).second)
                err(path + "/trp_id", "duplicate trp id");
            if (!t.contains("gnb_id") || !t["gnb_id"].is_string())
                err(path + "/gnb_id", "missing or not a string");
            else if (!gnb_ids.count(t["gnb_id"].get<std::string>()))
                err(path + "/gnb_id",
                    "dangling reference: unknown gnb '" + t["gnb_id"].get<std::string>() + "'");
            if (!t.contains("position") || !is_vec3(t["position"]))
                err(path + "/position", "must be [x, y, z] with finite components");
            if (!t.contains("ru") || !t["ru"].is_object()) {
                err(path + "/ru", "missing radio unit model");
            } else {
                const json& ru = t["ru"];
                std::string kind = ru.value("kind", "");
                if (kind != "Tdd" && kind != "Fdd" && kind != "Sniffer")
                    err(path + "/ru/kind", "must be Tdd, Fdd or Sniffer");
                bool legacy = ru.value("legacy", false);
                double sic = 0.0;
                if (ru.contains("sic")) {
                    for (const char* key : {"isolation_db", "analog_db", "digital_db"})
                        sic += ru["sic"].value(key, 0.0);
                }
                if (legacy && sic != 0.0) err(path + "/ru", "legacy RU must have a zero SIC budget");
            }
        }
    }

    if (doc.contains("objects")) {
        std::set<std::string> ids;
        for (std::size_t i = 0; i < doc["objects"].size(); ++i) {
            const json& o = doc["objects"][i];
            std::string path = "/objects/" + std::to_string(i);
            if (!o.contains("id") || !o["id"].is_string())
                err(path + "/id", "missing or not a string");
            else if (!ids.insert(o["id"].get<std::string>()).second)
                err(path + "/id", "duplicate object id");
            if (!o.contains("position") || !is_vec3(o["position"]))
                err(path + "/position", "must be [x, y, z]");
            if (o.contains("velocity") && !is_vec3(o["velocity"]))
                err(path + "/velocity", "must be [x, y, z]");
            if (o.value("static", false) && o.contains("velocity")) {
                const json& v = o["velocity"];
                if (is_vec3(v) &&
                    (v[0].get<double>() != 0.0 || v[1].get<double>() != 0.0 || v[2].get<double>() != 0.0))
                    err(path, "static object with nonzero velocity");
            }
            if (o.contains("reflection_amplitude") && o["reflection_amplitude"].get<double>() <= 0.0)
                err(path + "/reflection_amplitude", "must be > 0");
        }
    }

    if (doc.contains("policies")) {
        for (std::size_t i = 0; i < doc["policies"].size(); ++i) {
            const json& p = doc["policies"][i];
            std::string path = "/policies/" + std::to_string(i);
            if (!p.contains("consumer_id")) err(path + "/consumer_id", "missing");
            std::string why;
            if (!p.contains("allowed_area") || !is_polygon(p["allowed_area"], &why))
                err(path + "/allowed_area", why.empty() ? "missing polygon" : why);
        }
    }
    if (doc.contains("consent_zones")) {
        for (std::size_t i = 0; i < doc["consent_zones"].size(); ++i) {
            const json& z = doc["consent_zones"][i];
            std::string path = "/consent_zones/" + std::to_string(i);
            std::string why;
            if (!z.contains("area") || !is_polygon(z["area"], &why))
                err(path + "/area", why.empty() ? "missing polygon" : why);
        }
    }
    if (doc.contains("geomap")) {
        for (std::size_t i = 0; i < doc["geomap"].size(); ++i) {
            const json& s = doc["geomap"][i];
            std::string path = "/geomap/" + std::to_string(i);
            if (!s.contains("id")) err(path + "/id", "missing");
            if (!s.contains("center") || !is_vec3(s["center"])) err(path + "/center", "must be [x, y, z]");
            if (!s.contains("extent") || !is_vec3(s["extent"])) err(path + "/extent", "must be [x, y, z]");
        }
    }

    std::size_t request_entries = 0;
    if (doc.contains("af_script")) {
        for (std::size_t i = 0; i < doc["af_script"].size(); ++i) {
            const json& e = doc["af_script"][i];
            std::string path = "/af_script/" + std::to_string(i);
            if (!e.contains("at_s") || !is_finite_number(e["at_s"]) || e["at_s"].get<double>() < 0.0)
                err(path + "/at_s", "must be a non-negative number");
            if (!e.contains("consumer") || !e["consumer"].is_string())
                err(path + "/consumer", "missing or not a string");
            bool has_request = e.contains("request");
            bool has_abort = e.contains("abort_of");
            if (has_request == has_abort) {
                err(path, "entry needs exactly one of 'request' or 'abort_of'");
                continue;
            }
            if (has_request) {
                json req = e["request"];
                req["msg_type"] = "SensingServiceRequest";
                auto decoded = api::api_decode(req.dump());
                if (!decoded.message) err(path + "/request", decoded.error);
                ++request_entries;
            } else {
                if (!e["abort_of"].is_number_unsigned() ||
                    e["abort_of"].get<std::size_t>() >= i)
                    err(path + "/abort_of",
                        "must reference an earlier script entry by index");
            }
        }
    }
    (void)request_entries;

    if (doc.contains("faults")) {
        for (std::size_t i = 0; i < doc["faults"].size(); ++i) {
            const json& f = doc["faults"][i];
            std::string path = "/faults/" + std::to_string(i);
            std::string kind = f.value("kind", "");
            if (kind == "reject_requests") {
                if (!f.contains("gnb_id") || !gnb_ids.count(f["gnb_id"].get<std::string>()))
                    err(path + "/gnb_id", "must reference a configured gnb");
            } else if (kind == "ru_failure") {
                if (!f.contains("trp_id") || !trp_ids.count(f["trp_id"].get<std::string>()))
                    err(path + "/trp_id", "must reference a configured trp");
                if (!f.contains("at_s") || !is_finite_number(f["at_s"]))
                    err(path + "/at_s", "must be a number");
            } else {
                err(path + "/kind", "must be reject_requests or ru_failure");
            }
        }
    }

    return errors;
}

ScenarioConfig scenario_from_json(const json& doc) {
    ScenarioConfig cfg;
    cfg.seed = doc["seed"].get<std::uint64_t>();
    cfg.duration_s = doc["duration_s"].get<double>();

    const json& r = doc["radio"];
    cfg.radio.carrier_freq_hz = r["carrier_freq_hz"].get<double>();
    cfg.radio.subcarrier_spacing_hz = r["subcarrier_spacing_hz"].get<double>();
    cfg.radio.num_subcarriers = r["num_subcarriers"].get<std::size_t>();
    cfg.radio.num_symbols = r["num_symbols"].get<std::size_t>();
    cfg.radio.tx_power_dbm = r.value("tx_power_dbm", 30.0);
    if (r.contains("noise_power_dbm") && !r["noise_power_dbm"].is_null())
        cfg.radio.noise_power_dbm = r["noise_power_dbm"].get<double>();

    for (const auto& g : doc["gnbs"]) {
        GnbConfig gc;
        gc.gnb_id = g["gnb_id"].get<std::string>();
        if (g.contains("tdd_pattern")) gc.tdd_pattern = pattern_from_json(g["tdd_pattern"]);
        gc.comm_dl_load = g.value("comm_dl_load", 0.5);
        cfg.gnbs.push_back(std::move(gc));
    }
    for (const auto& t : doc["trps"]) {
        TrpSite site;
        site.trp_id = t["trp_id"].get<std::string>();
        site.gnb_id = t["gnb_id"].get<std::string>();
        site.position = jsonio::vec3_from_json(t["position"]);
        const json& ru = t["ru"];
        std::string kind = ru["kind"].get<std::string>();
        site.ru.ru_id = site.trp_id + "-ru";
        site.ru.kind = kind == "Tdd"   ? sep::RuKind::Tdd
                       : kind == "Fdd" ? sep::RuKind::Fdd
                                       : sep::RuKind::Sniffer;
        if (ru.contains("sic")) {
            site.ru.sic.isolation_db = ru["sic"].value("isolation_db", 0.0);
            site.ru.sic.analog_db = ru["sic"].value("analog_db", 0.0);
            site.ru.sic.digital_db = ru["sic"].value("digital_db", 0.0);
        }
        site.ru.can_pause_comm = ru.value("can_pause_comm", true);
        site.ru.legacy = ru.value("legacy", false);
        site.ru.beams_supported = ru.value("beams_supported", 16u);
        for (const auto& g : cfg.gnbs)
            if (g.gnb_id == site.gnb_id) site.ru.tdd_pattern = g.tdd_pattern;
        site.coverage_radius_m = t.value("coverage_radius_m", 500.0);
        site.beamwidth_rad = t.value("beamwidth_rad", 0.5);
        cfg.trps.push_back(std::move(site));
    }
    if (doc.contains("objects")) {
        for (const auto& o : doc["objects"]) {
            scene::GroundObject obj;
            obj.id = o["id"].get<std::string>();
            obj.position = jsonio::vec3_from_json(o["position"]);
            if (o.contains("velocity")) obj.velocity = jsonio::vec3_from_json(o["velocity"]);
            obj.reflection_amplitude = o.value("reflection_amplitude", 1.0);
            obj.true_class = o.value("class", "other");
            obj.is_static = o.value("static", obj.velocity.norm() == 0.0);
            cfg.objects.push_back(std::move(obj));
        }
    }
    if (doc.contains("geomap")) {
        for (const auto& s : doc["geomap"]) {
            semf::GeoMapStatic g;
            g.id = s["id"].get<std::string>();
            g.center = jsonio::vec3_from_json(s["center"]);
            g.extent = jsonio::vec3_from_json(s["extent"]);
            cfg.geomap.push_back(std::move(g));
        }
    }
    if (doc.contains("policies")) {
        for (const auto& p : doc["policies"]) {
            semf::PolicyRecord rec;
            rec.consumer_id = p["consumer_id"].get<std::string>();
            rec.allowed_area = geo::Polygon(points_from_json(p["allowed_area"]));
            rec.max_update_frequency_hz = p.value("max_update_frequency_hz", 1.0);
            for (const auto& s : p.value("allowed_purposes", json::array()))
                rec.allowed_purposes.insert(s.get<std::string>());
            for (const auto& s : p.value("allowed_result_fields", json::array()))
                rec.allowed_result_fields.insert(s.get<std::string>());
            cfg.policies.push_back(std::move(rec));
        }
    }
    if (doc.contains("consent_zones")) {
        for (const auto& z : doc["consent_zones"]) {
            semf::ConsentZone zone;
            zone.area = geo::Polygon(points_from_json(z["area"]));
            zone.sensing_allowed = z.value("sensing_allowed", true);
            zone.owner = z.value("owner", "");
            cfg.consent_zones.push_back(std::move(zone));
        }
    }
    if (doc.contains("af_script")) {
        for (const auto& e : doc["af_script"]) {
            AfScriptEntry entry;
            entry.at_s = e["at_s"].get<double>();
            entry.consumer = e["consumer"].get<std::string>();
            if (e.contains("request")) {
                json req = e["request"];
                req["msg_type"] = "SensingServiceRequest";
                auto decoded = api::api_decode(req.dump());
                entry.request = std::get<api::SensingServiceRequest>(*decoded.message);
            } else {
                entry.abort_of = e["abort_of"].get<std::size_t>();
            }
            cfg.af_script.push_back(std::move(entry));
        }
    }
    if (doc.contains("faults")) {
        for (const auto& f : doc["faults"]) {
            FaultConfig fault;
            fault.kind = f["kind"].get<std::string>();
            fault.gnb_id = f.value("gnb_id", "");
            fault.trp_id = f.value("trp_id", "");
            fault.at_s = f.value("at_s", 0.0);
            cfg.faults.push_back(std::move(fault));
        }
    }
    if (doc.contains("latencies")) {
        const json& l = doc["latencies"];
        cfg.latencies.ngc_ms = l.value("ngc_ms", 10.0);
        cfg.latencies.xn_ms = l.value("xn_ms", 3.0);
        cfg.latencies.backhaul_ms = l.value("backhaul_ms", 5.0);
    }
    cfg.buffer_ms = doc.value("buffer_ms", 8.0);
    cfg.handshake_lead_ms = doc.value("handshake_lead_ms", 10.0);
    cfg.comm_reuse_over_the_air = doc.value("comm_reuse_over_the_air", false);
    cfg.ota_sinr_db = doc.value("ota_sinr_db", 15.0);
    cfg.ota_mcs_threshold_db = doc.value("ota_mcs_threshold_db", 12.0);
    cfg.wideband_precoding = doc.value("wideband_precoding", true);

    cfg.sensing.resource.subcarriers = static_cast<std::uint32_t>(cfg.radio.num_subcarriers);
    cfg.sensing.resource.burst_symbols = static_cast<std::uint32_t>(cfg.radio.num_symbols);
    if (doc.contains("sensing")) {
        const json& s = doc["sensing"];
        if (s.contains("resource")) {
            const json& res = s["resource"];
            cfg.sensing.resource.period_slots = res.value("period_slots", 10u);
            cfg.sensing.resource.burst_symbols =
                res.value("burst_symbols", cfg.sensing.resource.burst_symbols);
            cfg.sensing.resource.subcarriers =
                res.value("subcarriers", cfg.sensing.resource.subcarriers);
            std::string signal = res.value("signal", "PreconfiguredReference");
            cfg.sensing.resource.signal = signal == "ReuseCommunication"
                                              ? sep::SignalSource::ReuseCommunication
                                          : signal == "Opportunistic" ? sep::SignalSource::Opportunistic
                                              : sep::SignalSource::PreconfiguredReference;
        }
        if (s.contains("mono_depth"))
            cfg.sensing.mono_depth = *l1::depth_from_string(s["mono_depth"].get<std::string>());
        if (s.contains("bistatic_depth"))
            cfg.sensing.bistatic_depth = *l1::depth_from_string(s["bistatic_depth"].get<std::string>());
        cfg.sensing.clutter_removal = s.value("clutter_removal", true);
        cfg.sensing.threshold_db = s.value("threshold_db", 15.0);
        cfg.sensing.max_targets = s.value("max_targets", std::size_t(5));
        cfg.sensing.zero_pad_n_factor = s.value("zero_pad_n_factor", std::size_t(1));
        cfg.sensing.zero_pad_m_factor = s.value("zero_pad_m_factor", std::size_t(1));
        cfg.sensing.sweep_beam_count = s.value("sweep_beam_count", 8u);
        cfg.sensing.sweep_beamwidth_rad = s.value("sweep_beamwidth_rad", 0.9);
        if (s.contains("track")) {
            cfg.sensing.track.gate_m = s["track"].value("gate_m", 10.0);
            cfg.sensing.track.process_noise = s["track"].value("process_noise", 1.0);
            cfg.sensing.track.measurement_noise = s["track"].value("measurement_noise", 1.0);
        }
        cfg.sensing.fusion_gate_m = s.value("fusion_gate_m", 5.0);
        cfg.sensing.result_ttl_s = s.value("result_ttl_s", 10.0);
        cfg.sensing.response_timeout_ms = s.value("response_timeout_ms", 500.0);
    }
    return cfg;
}

std::vector<std::string> validate_scenario_file(const std::string& path) {
    std::ifstream in(path);
    if (!in.good()) return {"/: cannot open file " + path};
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) return {"/: file is not valid JSON"};
    return validate_scenario_json(doc);
}

ScenarioConfig load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in.good()) throw Error("scenario", "cannot open file " + path);
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw Error("scenario", "file is not valid JSON");
    auto errors = validate_scenario_json(doc);
    if (!errors.empty()) throw Error("scenario", errors.front());
    return scenario_from_json(doc);
}

} // namespace isacsim::sim
