#include "isacsim/json_util.hpp"

namespace isacsim::jsonio {

namespace {

double number(const json& j, const char* context) {
    if (!j.is_number()) throw Error("json", std::string(context) + ": expected a number");
    return j.get<double>();
}

std::size_t count(const json& j, const char* context) {
    if (!j.is_number_unsigned()) throw Error("json", std::string(context) + ": expected a count");
    return j.get<std::size_t>();
}

} // namespace

const json& require(const json& j, const char* key, const char* context) {
    auto it = j.find(key);
    if (it == j.end())
        throw Error("json", std::string(context) + ": missing mandatory field '" + key + "'");
    return *it;
}

json to_json(const Complex& c) { return json::array({c.real(), c.imag()}); }

Complex complex_from_json(const json& j) {
    if (!j.is_array() || j.size() != 2) throw Error("json", "complex value must be [re, im]");
    return {number(j[0], "complex"), number(j[1], "complex")};
}

json to_json(const scene::Vec3& v) { return json::array({v.x, v.y, v.z}); }

scene::Vec3 vec3_from_json(const json& j) {
    if (!j.is_array() || j.size() != 3) throw Error("json", "vector must be [x, y, z]");
    return {number(j[0], "vec3"), number(j[1], "vec3"), number(j[2], "vec3")};
}

json to_json(const scene::BeamPattern& b) {
    return {{"azimuth_rad", b.pointing_azimuth_rad},
            {"zenith_rad", b.pointing_zenith_rad},
            {"beamwidth_rad", b.beamwidth_rad}};
}

scene::BeamPattern beam_from_json(const json& j) {
    scene::BeamPattern b;
    b.pointing_azimuth_rad = number(require(j, "azimuth_rad", "beam"), "beam");
    b.pointing_zenith_rad = number(require(j, "zenith_rad", "beam"), "beam");
    b.beamwidth_rad = number(require(j, "beamwidth_rad", "beam"), "beam");
    b.validate();
    return b;
}

json to_json(const ComplexGrid& g) {
    json rows = json::array();
    for (std::size_t k = 0; k < g.num_subcarriers(); ++k) {
        json row = json::array();
        for (std::size_t l = 0; l < g.num_symbols(); ++l) row.push_back(to_json(g.at(k, l)));
        rows.push_back(std::move(row));
    }
    json out{{"num_subcarriers", g.num_subcarriers()},
             {"num_symbols", g.num_symbols()},
             {"meta",
              {{"carrier_freq_hz", g.meta().carrier_freq_hz},
               {"subcarrier_spacing_hz", g.meta().subcarrier_spacing_hz},
               {"symbol_duration_s", g.meta().symbol_duration_s}}},
             {"data", std::move(rows)}};
    if (!g.mask().empty()) out["mask"] = g.mask();
    return out;
}

ComplexGrid grid_from_json(const json& j) {
    std::size_t n = count(require(j, "num_subcarriers", "grid"), "grid");
    std::size_t m = count(require(j, "num_symbols", "grid"), "grid");
    const json& meta_j = require(j, "meta", "grid");
    GridMeta meta{number(require(meta_j, "carrier_freq_hz", "grid.meta"), "grid"),
                  number(require(meta_j, "subcarrier_spacing_hz", "grid.meta"), "grid"),
                  number(require(meta_j, "symbol_duration_s", "grid.meta"), "grid")};
    const json& data = require(j, "data", "grid");
    if (!data.is_array() || data.size() != n) throw Error("json", "grid data has wrong row count");
    ComplexGrid g(n, m, meta);
    for (std::size_t k = 0; k < n; ++k) {
        const json& row = data[k];
        if (!row.is_array() || row.size() != m) throw Error("json", "grid data has ragged rows");
        for (std::size_t l = 0; l < m; ++l) g.at(k, l) = complex_from_json(row[l]);
    }
    if (auto it = j.find("mask"); it != j.end()) {
        auto mask = it->get<std::vector<std::uint8_t>>();
        if (mask.size() != n * m) throw Error("json", "grid mask size mismatch");
        g.set_mask(std::move(mask));
    }
    return g;
}

json to_json(const l1::Periodogram& p) {
    json rows = json::array();
    for (std::size_t n = 0; n < p.n_size(); ++n) {
        json row = json::array();
        for (std::size_t mi = 0; mi < p.m_size(); ++mi) row.push_back(to_json(p.at(n, mi)));
        rows.push_back(std::move(row));
    }
    return {{"n_size", p.n_size()},
            {"m_size", p.m_size()},
            {"axes",
             {{"path_length_per_bin_m", p.axes().path_length_per_bin_m},
              {"speed_per_bin_m_per_s", p.axes().speed_per_bin_m_per_s}}},
            {"data", std::move(rows)}};
}

l1::Periodogram periodogram_from_json(const json& j) {
    std::size_t n = count(require(j, "n_size", "periodogram"), "periodogram");
    std::size_t m = count(require(j, "m_size", "periodogram"), "periodogram");
    const json& axes_j = require(j, "axes", "periodogram");
    l1::PeriodogramAxes axes{
        number(require(axes_j, "path_length_per_bin_m", "periodogram.axes"), "periodogram"),
        number(require(axes_j, "speed_per_bin_m_per_s", "periodogram.axes"), "periodogram")};
    l1::Periodogram p(n, m, axes);
    const json& data = require(j, "data", "periodogram");
    if (!data.is_array() || data.size() != n) throw Error("json", "periodogram row count mismatch");
    for (std::size_t ni = 0; ni < n; ++ni) {
        const json& row = data[ni];
        if (!row.is_array() || row.size() != m) throw Error("json", "periodogram ragged rows");
        for (std::size_t mi = 0; mi < m; ++mi) p.at(ni, mi) = complex_from_json(row[mi]);
    }
    return p;
}

json to_json(const l1::TargetPoint2D& t) {
    return {{"path_length_m", t.path_length_m},
            {"closing_speed_m_per_s", t.closing_speed_m_per_s},
            {"power_db", t.power_db},
            {"amplitude", to_json(t.complex_amplitude)}};
}

l1::TargetPoint2D target2d_from_json(const json& j) {
    l1::TargetPoint2D t;
    t.path_length_m = number(require(j, "path_length_m", "target2d"), "target2d");
    t.closing_speed_m_per_s = number(require(j, "closing_speed_m_per_s", "target2d"), "target2d");
    t.power_db = number(require(j, "power_db", "target2d"), "target2d");
    t.complex_amplitude = complex_from_json(require(j, "amplitude", "target2d"));
    return t;
}

json to_json(const l1::TargetPoint4D& t) {
    json j = to_json(static_cast<const l1::TargetPoint2D&>(t));
    j["azimuth_rad"] = t.azimuth_rad;
    j["zenith_rad"] = t.zenith_rad;
    return j;
}

l1::TargetPoint4D target4d_from_json(const json& j) {
    l1::TargetPoint4D t;
    static_cast<l1::TargetPoint2D&>(t) = target2d_from_json(j);
    t.azimuth_rad = number(require(j, "azimuth_rad", "target4d"), "target4d");
    t.zenith_rad = number(require(j, "zenith_rad", "target4d"), "target4d");
    return t;
}

json to_json(const l1::TrackState& t) {
    json cov = json::array();
    for (int r = 0; r < 6; ++r)
        for (int c = 0; c < 6; ++c) cov.push_back(t.covariance(r, c));
    return {{"object_id", t.object_id},
            {"position", to_json(t.position)},
            {"velocity", to_json(t.velocity)},
            {"covariance", std::move(cov)},
            {"last_update_time_s", t.last_update_time_s},
            {"hit_count", t.hit_count},
            {"missed_scans", t.missed_scans},
            {"class_hint", t.class_hint}};
}

l1::TrackState track_from_json(const json& j) {
    l1::TrackState t;
    t.object_id = require(j, "object_id", "track").get<std::uint64_t>();
    t.position = vec3_from_json(require(j, "position", "track"));
    t.velocity = vec3_from_json(require(j, "velocity", "track"));
    const json& cov = require(j, "covariance", "track");
    if (!cov.is_array() || cov.size() != 36) throw Error("json", "track covariance must be 36 numbers");
    for (int r = 0; r < 6; ++r)
        for (int c = 0; c < 6; ++c) t.covariance(r, c) = number(cov[r * 6 + c], "track");
    t.last_update_time_s = number(require(j, "last_update_time_s", "track"), "track");
    t.hit_count = require(j, "hit_count", "track").get<int>();
    t.missed_scans = require(j, "missed_scans", "track").get<int>();
    t.class_hint = require(j, "class_hint", "track").get<std::string>();
    return t;
}

json to_json(const l1::ProcessingConfig& c) {
    return {{"depth", l1::to_string(c.depth)},
            {"clutter_removal", c.clutter_removal},
            {"crop", {{"freq_keep", c.crop.freq_keep}, {"time_keep", c.crop.time_keep}}},
            {"decimate", {{"freq_step", c.decimate.freq_step}, {"time_step", c.decimate.time_step}}},
            {"zero_pad", {{"n_size", c.zero_pad.n_size}, {"m_size", c.zero_pad.m_size}}},
            {"detect",
             {{"threshold_db", c.detect.threshold_db_above_noise},
              {"max_targets", c.detect.max_targets}}},
            {"group_epsilon_m", c.group_epsilon_m},
            {"track",
             {{"gate_m", c.track.gate_m},
              {"process_noise", c.track.process_noise},
              {"measurement_noise", c.track.measurement_noise}}}};
}

l1::ProcessingConfig processing_from_json(const json& j) {
    l1::ProcessingConfig c;
    auto depth = l1::depth_from_string(require(j, "depth", "processing").get<std::string>());
    if (!depth) throw Error("json", "processing: unknown depth");
    c.depth = *depth;
    c.clutter_removal = require(j, "clutter_removal", "processing").get<bool>();
    const json& crop = require(j, "crop", "processing");
    c.crop.freq_keep = count(require(crop, "freq_keep", "processing.crop"), "crop");
    c.crop.time_keep = count(require(crop, "time_keep", "processing.crop"), "crop");
    const json& dec = require(j, "decimate", "processing");
    c.decimate.freq_step = count(require(dec, "freq_step", "processing.decimate"), "decimate");
    c.decimate.time_step = count(require(dec, "time_step", "processing.decimate"), "decimate");
    const json& pad = require(j, "zero_pad", "processing");
    c.zero_pad.n_size = count(require(pad, "n_size", "processing.zero_pad"), "zero_pad");
    c.zero_pad.m_size = count(require(pad, "m_size", "processing.zero_pad"), "zero_pad");
    const json& det = require(j, "detect", "processing");
    c.detect.threshold_db_above_noise = number(require(det, "threshold_db", "processing.detect"), "detect");
    c.detect.max_targets = count(require(det, "max_targets", "processing.detect"), "detect");
    c.group_epsilon_m = number(require(j, "group_epsilon_m", "processing"), "processing");
    const json& trk = require(j, "track", "processing");
    c.track.gate_m = number(require(trk, "gate_m", "processing.track"), "track");
    c.track.process_noise = number(require(trk, "process_noise", "processing.track"), "track");
    c.track.measurement_noise = number(require(trk, "measurement_noise", "processing.track"), "track");
    return c;
}

json to_json(const l1::SensingMeasurement& m) {
    json j{{"depth", l1::to_string(m.depth)}};
    switch (m.depth) {
        case l1::Depth::ChannelIQ: {
            json arr = json::array();
            for (const auto& g : m.channel_grids) arr.push_back(to_json(g));
            j["grids"] = std::move(arr);
            break;
        }
        case l1::Depth::PeriodogramOut: {
            json arr = json::array();
            for (const auto& p : m.periodograms) arr.push_back(to_json(p));
            j["periodograms"] = std::move(arr);
            break;
        }
        case l1::Depth::Targets2D: {
            json arr = json::array();
            for (const auto& t : m.targets2d) arr.push_back(to_json(t));
            j["targets"] = std::move(arr);
            break;
        }
        case l1::Depth::Targets4D: {
            json arr = json::array();
            for (const auto& t : m.targets4d) arr.push_back(to_json(t));
            j["targets"] = std::move(arr);
            break;
        }
        case l1::Depth::Objects: {
            json arr = json::array();
            for (const auto& t : m.objects) arr.push_back(to_json(t));
            j["objects"] = std::move(arr);
            break;
        }
    }
    return j;
}

l1::SensingMeasurement measurement_from_json(const json& j) {
    l1::SensingMeasurement m;
    auto depth = l1::depth_from_string(require(j, "depth", "measurement").get<std::string>());
    if (!depth) throw Error("json", "measurement: unknown depth");
    m.depth = *depth;
    switch (m.depth) {
        case l1::Depth::ChannelIQ:
            for (const auto& g : require(j, "grids", "measurement")) m.channel_grids.push_back(grid_from_json(g));
            break;
        case l1::Depth::PeriodogramOut:
            for (const auto& p : require(j, "periodograms", "measurement"))
                m.periodograms.push_back(periodogram_from_json(p));
            break;
        case l1::Depth::Targets2D:
            for (const auto& t : require(j, "targets", "measurement")) m.targets2d.push_back(target2d_from_json(t));
            break;
        case l1::Depth::Targets4D:
            for (const auto& t : require(j, "targets", "measurement")) m.targets4d.push_back(target4d_from_json(t));
            break;
        case l1::Depth::Objects:
            for (const auto& t : require(j, "objects", "measurement")) m.objects.push_back(track_from_json(t));
            break;
    }
    return m;
}

bool all_finite(const json& j) {
    if (j.is_number_float()) return std::isfinite(j.get<double>());
    if (j.is_object() || j.is_array()) {
        for (const auto& item : j)
            if (!all_finite(item)) return false;
    }
    return true;
}

} // namespace isacsim::jsonio
