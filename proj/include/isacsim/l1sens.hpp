#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "isacsim/grid.hpp"
#include "isacsim/scene.hpp"

namespace isacsim::l1 {

using scene::BeamPattern;
using scene::Vec3;

/// How far down the Fig-7-style chain a burst is processed before results
/// leave the gNB.
enum class Depth { ChannelIQ, PeriodogramOut, Targets2D, Targets4D, Objects };

const char* to_string(Depth d);
std::optional<Depth> depth_from_string(const std::string& s);

struct PeriodogramAxes {
    double path_length_per_bin_m = 0.0;
    double speed_per_bin_m_per_s = 0.0; // closing-speed positive

    bool operator==(const PeriodogramAxes&) const = default;
};

/// Complex 2D delay x Doppler transform of an effective channel grid.
/// Delay bins n run 0..n_size-1; Doppler bins are stored fftshifted, index
/// mi maps to the signed bin mi - m_size/2.
class Periodogram {
public:
    Periodogram() = default;
    Periodogram(std::size_t n_size, std::size_t m_size, PeriodogramAxes axes)
        : n_(n_size), m_(m_size), axes_(axes), data_(n_size * m_size) {}

    std::size_t n_size() const { return n_; }
    std::size_t m_size() const { return m_; }
    const PeriodogramAxes& axes() const { return axes_; }

    long signed_doppler_bin(std::size_t mi) const {
        return static_cast<long>(mi) - static_cast<long>(m_ / 2);
    }

    Complex& at(std::size_t n, std::size_t mi) { return data_[n * m_ + mi]; }
    const Complex& at(std::size_t n, std::size_t mi) const { return data_[n * m_ + mi]; }
    std::vector<Complex>& data() { return data_; }
    const std::vector<Complex>& data() const { return data_; }

private:
    std::size_t n_ = 0;
    std::size_t m_ = 0;
    PeriodogramAxes axes_;
    std::vector<Complex> data_;
};

struct TargetPoint2D {
    double path_length_m = 0.0;
    double closing_speed_m_per_s = 0.0;
    double power_db = 0.0; // relative to the estimated noise floor
    Complex complex_amplitude;
};

struct TargetPoint4D : TargetPoint2D {
    double azimuth_rad = 0.0;
    double zenith_rad = 0.0;
};

struct TrackState {
    std::uint64_t object_id = 0;
    Vec3 position;
    Vec3 velocity;
    Eigen::Matrix<double, 6, 6> covariance = Eigen::Matrix<double, 6, 6>::Identity();
    double last_update_time_s = 0.0;
    int hit_count = 0;
    int missed_scans = 0;
    std::string class_hint;

    /// Unit direction of travel, available once speed exceeds 0.1 m/s.
    std::optional<Vec3> direction_of_travel() const {
        double speed = velocity.norm();
        if (speed <= 0.1) return std::nullopt;
        return velocity * (1.0 / speed);
    }
};

struct CropConfig {
    std::size_t freq_keep = 0; // 0 = keep all
    std::size_t time_keep = 0;
};

struct DecimateConfig {
    std::size_t freq_step = 1;
    std::size_t time_step = 1;
};

struct ZeroPadConfig {
    std::size_t n_size = 0; // 0 = kept count (no padding)
    std::size_t m_size = 0;
};

struct DetectConfig {
    double threshold_db_above_noise = 12.0;
    std::size_t max_targets = 10;
    // Peak test neighborhood is fixed 3x3.
};

struct TrackConfig {
    double gate_m = 10.0;
    double process_noise = 1.0;     // white-acceleration spectral density
    double measurement_noise = 1.0; // position variance per axis, m^2
};

struct ProcessingConfig {
    Depth depth = Depth::Targets2D;
    bool clutter_removal = true;
    CropConfig crop;
    DecimateConfig decimate;
    ZeroPadConfig zero_pad;
    DetectConfig detect;
    double group_epsilon_m = 5.0;
    TrackConfig track;

    void validate(std::size_t grid_n, std::size_t grid_m) const;
};

/// Per-task track memory, mutated burst by burst at Depth::Objects.
struct Tracker {
    std::vector<TrackState> tracks;
    std::uint64_t next_id = 1;
};

/// Detections of one receive beam together with the axis scaling they were
/// measured on.
struct BeamDetections {
    BeamPattern beam;
    PeriodogramAxes axes;
    std::vector<TargetPoint2D> points;
};

/// A target point resolved to a 3D position, input to object grouping.
struct LocalizedTarget {
    Vec3 position;
    double power_db = 0.0;
    Complex complex_amplitude;
};

struct ObjectDetectResult {
    // (point index, track index) pairs, gated greedy nearest-neighbor.
    std::vector<std::pair<std::size_t, std::size_t>> associations;
    // One candidate object per cluster of unassociated points.
    std::vector<LocalizedTarget> groups;
};

/// Container for one burst's results; exactly the member matching `depth`
/// is populated.
struct SensingMeasurement {
    Depth depth = Depth::ChannelIQ;
    std::vector<ComplexGrid> channel_grids;    // per beam
    std::vector<Periodogram> periodograms;     // per beam
    std::vector<TargetPoint2D> targets2d;
    std::vector<TargetPoint4D> targets4d;
    std::vector<TrackState> objects;
};

/// Effective channel from received and transmitted grids, H = Y/X per
/// allocated element. Elements whose reference magnitude is below 1e-12 are
/// masked out instead of failing, so sparse communication-signal reuse
/// degrades gracefully.
ComplexGrid channel_calculation(const ComplexGrid& rx_grid, const ComplexGrid& tx_grid);

/// Removes the per-subcarrier temporal mean: exact removal of zero-Doppler
/// components (static clutter and the modeled self-interference residual).
ComplexGrid clutter_removal(const ComplexGrid& grid);

ComplexGrid crop_decimate(const ComplexGrid& grid, const CropConfig& crop, const DecimateConfig& dec);

/// 2D transform: inverse-direction DFT over subcarriers (delay axis),
/// forward DFT over symbols (Doppler axis), 1/sqrt(Nkept*Mkept) scaling,
/// Doppler axis centered.
Periodogram periodogram(const ComplexGrid& grid, std::size_t n_size, std::size_t m_size);

/// Median of |C|^2 in dB; -inf for an all-zero periodogram.
double estimate_noise_floor(const Periodogram& pgram);

/// Local 3x3 power maxima above floor + threshold, refined by per-axis
/// 3-point parabolic interpolation, sorted by descending power.
std::vector<TargetPoint2D> detect_targets(const Periodogram& pgram, const DetectConfig& cfg);

/// Associates detections across receive beams (within one bin in both axes)
/// and estimates AoA/ZoA as the power-weighted mean of contributing beam
/// pointing directions.
std::vector<TargetPoint4D> multi_beam_filter(const std::vector<BeamDetections>& per_beam);

/// Monostatic back-projection: rx_pos + (path/2) * unit(azimuth, zenith).
Vec3 localize_monostatic(const TargetPoint4D& target, const Vec3& rx_pos);

/// Predicted track position at time t under the constant-velocity model.
Vec3 predict_position(const TrackState& track, double t_s);

/// Greedy gated nearest-neighbor association of localized points to track
/// predictions, then single-linkage clustering of the leftovers into
/// candidate objects.
ObjectDetectResult object_detect(const std::vector<LocalizedTarget>& points,
                                 const std::vector<TrackState>& tracks, double gate_m,
                                 double group_epsilon_m, double t_s);

/// Constant-velocity Kalman update of one track with a position measurement.
TrackState multi_burst_filter(const TrackState& track, const Vec3& measured_pos, double t_s,
                              const TrackConfig& cfg);

/// Creates a fresh track from a candidate object.
TrackState make_track(std::uint64_t id, const LocalizedTarget& seed, double t_s,
                      const TrackConfig& cfg);

struct PipelineGeometry {
    Vec3 tx_pos;
    Vec3 rx_pos;
};

/// Runs the processing chain over one burst (one rx grid per beam) down to
/// cfg.depth. Depth::Objects requires monostatic geometry and a tracker.
SensingMeasurement run_pipeline(const std::vector<ComplexGrid>& rx_per_beam,
                                const std::vector<BeamPattern>& beams, const ComplexGrid& tx_reference,
                                const ProcessingConfig& cfg, const PipelineGeometry& geometry,
                                double t_s, Tracker* tracker);

} // namespace isacsim::l1
