#include "isacsim/scene.hpp"

#include <algorithm>
#include <unordered_set>

namespace isacsim::scene {

void SceneState::validate() const {
    std::unordered_set<std::string> seen;
    for (const auto& obj : objects) {
        obj.validate();
        if (!seen.insert(obj.id).second) throw Error("scene", "duplicate object id " + obj.id);
    }
}

BistaticPath bistatic_geometry(const Vec3& tx_pos, const Vec3& rx_pos, const GroundObject& obj) {
    Vec3 from_tx = obj.position - tx_pos;
    Vec3 from_rx = obj.position - rx_pos;
    double d_tx = from_tx.norm();
    double d_rx = from_rx.norm();
    if (d_tx <= 0.0 || d_rx <= 0.0)
        throw Error("scene", "object " + obj.id + " coincident with a site");

    Vec3 u_tx = from_tx * (1.0 / d_tx);
    Vec3 u_rx = from_rx * (1.0 / d_rx);
    return {d_tx + d_rx, obj.velocity.dot(u_tx) + obj.velocity.dot(u_rx)};
}

double beam_gain(const BeamPattern& beam, double direction_az, double direction_zen) {
    Vec3 p = unit_from_angles(beam.pointing_azimuth_rad, beam.pointing_zenith_rad);
    Vec3 d = unit_from_angles(direction_az, direction_zen);
    // Great-circle offset via atan2 for stability near 0 and pi.
    Vec3 cross{p.y * d.z - p.z * d.y, p.z * d.x - p.x * d.z, p.x * d.y - p.y * d.x};
    double offset = std::atan2(cross.norm(), p.dot(d));
    double sigma = beam.beamwidth_rad / 2.355;
    double gain = std::exp(-offset * offset / (2.0 * sigma * sigma));
    return gain < 1e-120 ? 0.0 : gain;
}

ComplexGrid synthesize_channel(const SceneState& scene, const Vec3& tx_pos, const Vec3& rx_pos,
                               const BeamPattern& beam, const RadioParams& params,
                               std::optional<double> si_residual_db, std::uint64_t seed) {
    params.validate();
    beam.validate();

    const std::size_t n = params.num_subcarriers;
    const std::size_t m = params.num_symbols;
    const double t_sym = params.symbol_duration_s();
    ComplexGrid grid(n, m, params.grid_meta());

    struct Path {
        double gain_amp;  // beam gain x spreading x reflection amplitude
        double tau_s;
        double doppler_hz;
    };
    std::vector<Path> paths;
    paths.reserve(scene.objects.size());
    for (const auto& obj : scene.objects) {
        auto geo = bistatic_geometry(tx_pos, rx_pos, obj);
        double d_tx = (obj.position - tx_pos).norm();
        double d_rx = (obj.position - rx_pos).norm();
        Vec3 dir = (obj.position - rx_pos) * (1.0 / d_rx);
        double az = std::atan2(dir.y, dir.x);
        double zen = std::acos(std::clamp(dir.z, -1.0, 1.0));
        double g = beam_gain(beam, az, zen);
        double amp = g * obj.reflection_amplitude / (d_tx * d_rx);
        if (amp == 0.0) continue;
        paths.push_back({amp, geo.path_length_m / kSpeedOfLight,
                         -geo.path_rate_m_per_s * params.carrier_freq_hz / kSpeedOfLight});
    }

    for (const auto& p : paths) {
        // H[k,l] += a * exp(-j 2pi k df tau) * exp(+j 2pi l T f_D)
        Complex freq_step = std::polar(1.0, -kTwoPi * params.subcarrier_spacing_hz * p.tau_s);
        Complex time_step = std::polar(1.0, kTwoPi * t_sym * p.doppler_hz);
        Complex fk = p.gain_amp;
        for (std::size_t k = 0; k < n; ++k) {
            Complex v = fk;
            for (std::size_t l = 0; l < m; ++l) {
                grid.at(k, l) += v;
                v *= time_step;
            }
            fk *= freq_step;
        }
    }

    if (si_residual_db) {
        // Zero-delay zero-Doppler leak: constant over the whole grid.
        double amp = db_to_amplitude(params.tx_power_dbm - *si_residual_db);
        for (auto& v : grid.data()) v += amp;
    }

    if (std::isfinite(params.noise_power_dbm)) {
        Rng rng(seed);
        double power = db_to_power(params.noise_power_dbm);
        for (auto& v : grid.data()) v += rng.complex_gaussian(power);
    }
    return grid;
}

SceneState advance(const SceneState& scene, double dt_s) {
    if (dt_s < 0.0) throw Error("scene", "advance requires dt >= 0");
    SceneState out = scene;
    out.time_s += dt_s;
    for (auto& obj : out.objects) {
        if (!obj.is_static) obj.position = obj.position + obj.velocity * dt_s;
    }
    return out;
}

} // namespace isacsim::scene
