#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "isacsim/common.hpp"
#include "isacsim/grid.hpp"

namespace isacsim::scene {

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec3 normalized() const {
        double n = norm();
        return {x / n, y / n, z / n};
    }
    bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

/// Unit direction for azimuth (from +x toward +y) and zenith (from +z).
inline Vec3 unit_from_angles(double azimuth_rad, double zenith_rad) {
    double sz = std::sin(zenith_rad);
    return {sz * std::cos(azimuth_rad), sz * std::sin(azimuth_rad), std::cos(zenith_rad)};
}

/// OFDM numerology and power budget for one burst. Symbol duration is tied
/// to the subcarrier spacing (T = 1/delta_f); the cyclic prefix is not
/// modeled.
struct RadioParams {
    double carrier_freq_hz = 3.5e9;
    double subcarrier_spacing_hz = 30e3;
    std::size_t num_subcarriers = 256; // per burst
    std::size_t num_symbols = 64;      // per burst
    double tx_power_dbm = 30.0;
    // Per grid sample. -inf disables the noise term.
    double noise_power_dbm = -std::numeric_limits<double>::infinity();

    double symbol_duration_s() const { return 1.0 / subcarrier_spacing_hz; }

    void validate() const {
        if (!(carrier_freq_hz > 0.0)) throw Error("scene", "carrier_freq_hz must be > 0");
        if (!(subcarrier_spacing_hz > 0.0)) throw Error("scene", "subcarrier_spacing_hz must be > 0");
        if (num_subcarriers < 2) throw Error("scene", "num_subcarriers must be >= 2");
        if (num_symbols < 2) throw Error("scene", "num_symbols must be >= 2");
    }

    GridMeta grid_meta() const {
        return {carrier_freq_hz, subcarrier_spacing_hz, symbol_duration_s()};
    }
};

struct GroundObject {
    std::string id;
    Vec3 position;
    Vec3 velocity;
    double reflection_amplitude = 1.0; // linear, stands in for radar cross-section
    std::string true_class = "other";  // building|car|human|other
    bool is_static = false;

    void validate() const {
        if (!position.finite() || !velocity.finite())
            throw Error("scene", "object " + id + ": non-finite position/velocity");
        if (!(reflection_amplitude > 0.0))
            throw Error("scene", "object " + id + ": reflection_amplitude must be > 0");
        if (is_static && velocity.norm() != 0.0)
            throw Error("scene", "object " + id + ": static object with nonzero velocity");
    }
};

/// Gaussian mainlobe receive beam. The 3 dB beamwidth applies to both axes.
struct BeamPattern {
    double pointing_azimuth_rad = 0.0;
    double pointing_zenith_rad = M_PI / 2.0;
    double beamwidth_rad = 0.3;

    void validate() const {
        if (!(beamwidth_rad > 0.0) || beamwidth_rad > M_PI)
            throw Error("scene", "beamwidth must be in (0, pi]");
        if (pointing_zenith_rad < 0.0 || pointing_zenith_rad > M_PI)
            throw Error("scene", "zenith must be in [0, pi]");
    }
};

struct SceneState {
    std::vector<GroundObject> objects;
    double time_s = 0.0;

    void validate() const;
};

struct BistaticPath {
    double path_length_m = 0.0;
    double path_rate_m_per_s = 0.0; // d(path_length)/dt; negative when closing
};

/// Sum-of-legs path length and its time derivative for one scatterer seen by
/// a TX/RX pair. Monostatic geometry is the coincident-foci special case.
BistaticPath bistatic_geometry(const Vec3& tx_pos, const Vec3& rx_pos, const GroundObject& obj);

/// Gaussian mainlobe gain toward (azimuth, zenith), 1 at boresight. Gains
/// below 1e-120 are floored to 0.
double beam_gain(const BeamPattern& beam, double direction_az, double direction_zen);

/// Synthesizes the effective channel grid a receiving TRP observes:
/// superposed point-scatterer paths, an optional residual self-interference
/// term at zero delay/Doppler, and seeded circular complex Gaussian noise.
/// Doppler sign convention: closing targets produce positive Doppler,
/// f_D = -path_rate * f_c / c.
ComplexGrid synthesize_channel(const SceneState& scene, const Vec3& tx_pos, const Vec3& rx_pos,
                               const BeamPattern& beam, const RadioParams& params,
                               std::optional<double> si_residual_db, std::uint64_t seed);

/// Constant-velocity motion by dt seconds.
SceneState advance(const SceneState& scene, double dt_s);

} // namespace isacsim::scene
