#include "isacsim/l1sens.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

namespace isacsim::l1 {

namespace {

constexpr double kReferenceMagnitudeFloor = 1e-12;
constexpr double kPowerDbClamp = 300.0; // keeps relative powers finite on zero-noise grids
constexpr double kInitialVelocityVar = 100.0;

template <typename F>
auto stage(const char* name, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw Error(std::string("l1sens.") + name, e.what());
    }
}

} // namespace

const char* to_string(Depth d) {
    switch (d) {
        case Depth::ChannelIQ: return "ChannelIQ";
        case Depth::PeriodogramOut: return "PeriodogramOut";
        case Depth::Targets2D: return "Targets2D";
        case Depth::Targets4D: return "Targets4D";
        case Depth::Objects: return "Objects";
    }
    return "?";
}

std::optional<Depth> depth_from_string(const std::string& s) {
    if (s == "ChannelIQ") return Depth::ChannelIQ;
    if (s == "PeriodogramOut") return Depth::PeriodogramOut;
    if (s == "Targets2D") return Depth::Targets2D;
    if (s == "Targets4D") return Depth::Targets4D;
    if (s == "Objects") return Depth::Objects;
    return std::nullopt;
}

void ProcessingConfig::validate(std::size_t grid_n, std::size_t grid_m) const {
    if (crop.freq_keep > grid_n || crop.time_keep > grid_m)
        throw Error("l1sens.config", "crop keeps more than the grid holds");
    if (decimate.freq_step < 1 || decimate.time_step < 1)
        throw Error("l1sens.config", "decimation steps must be >= 1");
    std::size_t kept_n = crop.freq_keep ? crop.freq_keep : grid_n;
    std::size_t kept_m = crop.time_keep ? crop.time_keep : grid_m;
    std::size_t out_n = (kept_n + decimate.freq_step - 1) / decimate.freq_step;
    std::size_t out_m = (kept_m + decimate.time_step - 1) / decimate.time_step;
    if (zero_pad.n_size && zero_pad.n_size < out_n)
        throw Error("l1sens.config", "zero_pad.n_size smaller than kept subcarriers");
    if (zero_pad.m_size && zero_pad.m_size < out_m)
        throw Error("l1sens.config", "zero_pad.m_size smaller than kept symbols");
    if (!(detect.threshold_db_above_noise > 0.0))
        throw Error("l1sens.config", "detection threshold must be > 0 dB");
    if (detect.max_targets < 1) throw Error("l1sens.config", "max_targets must be >= 1");
    if (!(track.gate_m > 0.0)) throw Error("l1sens.config", "track gate must be > 0");
    if (group_epsilon_m < 0.0) throw Error("l1sens.config", "group_epsilon must be >= 0");
}

ComplexGrid channel_calculation(const ComplexGrid& rx_grid, const ComplexGrid& tx_grid) {
    if (!rx_grid.same_shape(tx_grid))
        throw Error("l1sens.channel_calculation", "rx/tx grid shapes differ");
    const std::size_t n = rx_grid.num_subcarriers();
    const std::size_t m = rx_grid.num_symbols();
    ComplexGrid out(n, m, rx_grid.meta());
    bool any_masked = false;
    std::vector<std::uint8_t> mask(n * m, 1);
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t l = 0; l < m; ++l) {
            bool alloc = rx_grid.allocated(k, l) && tx_grid.allocated(k, l);
            const Complex& x = tx_grid.at(k, l);
            if (!alloc || std::abs(x) < kReferenceMagnitudeFloor) {
                mask[k * m + l] = 0;
                any_masked = true;
                continue;
            }
            out.at(k, l) = rx_grid.at(k, l) / x;
        }
    }
    if (any_masked) out.set_mask(std::move(mask));
    return out;
}

ComplexGrid clutter_removal(const ComplexGrid& grid) {
    const std::size_t n = grid.num_subcarriers();
    const std::size_t m = grid.num_symbols();
    if (m < 2) throw Error("l1sens.clutter_removal", "need at least 2 symbols");
    ComplexGrid out = grid;
    for (std::size_t k = 0; k < n; ++k) {
        Complex sum = 0.0;
        std::size_t count = 0;
        for (std::size_t l = 0; l < m; ++l) {
            if (!grid.allocated(k, l)) continue;
            sum += grid.at(k, l);
            ++count;
        }
        if (count == 0) continue;
        Complex mean = sum / static_cast<double>(count);
        for (std::size_t l = 0; l < m; ++l) {
            if (grid.allocated(k, l)) out.at(k, l) -= mean;
        }
    }
    return out;
}

ComplexGrid crop_decimate(const ComplexGrid& grid, const CropConfig& crop, const DecimateConfig& dec) {
    const std::size_t n = grid.num_subcarriers();
    const std::size_t m = grid.num_symbols();
    std::size_t keep_n = crop.freq_keep ? crop.freq_keep : n;
    std::size_t keep_m = crop.time_keep ? crop.time_keep : m;
    if (keep_n > n || keep_m > m)
        throw Error("l1sens.crop_decimate", "crop exceeds grid size");
    if (dec.freq_step < 1 || dec.time_step < 1)
        throw Error("l1sens.crop_decimate", "steps must be >= 1");
    std::size_t out_n = (keep_n + dec.freq_step - 1) / dec.freq_step;
    std::size_t out_m = (keep_m + dec.time_step - 1) / dec.time_step;
    if (out_n < 2 || out_m < 2)
        throw Error("l1sens.crop_decimate", "invalid-config: resulting dimension < 2");

    GridMeta meta = grid.meta();
    meta.subcarrier_spacing_hz *= static_cast<double>(dec.freq_step);
    meta.symbol_duration_s *= static_cast<double>(dec.time_step);
    ComplexGrid out(out_n, out_m, meta);
    bool any_masked = false;
    std::vector<std::uint8_t> mask(out_n * out_m, 1);
    for (std::size_t k = 0; k < out_n; ++k) {
        for (std::size_t l = 0; l < out_m; ++l) {
            std::size_t src_k = k * dec.freq_step;
            std::size_t src_l = l * dec.time_step;
            out.at(k, l) = grid.at(src_k, src_l);
            if (!grid.allocated(src_k, src_l)) {
                mask[k * out_m + l] = 0;
                any_masked = true;
                out.at(k, l) = 0.0;
            }
        }
    }
    if (any_masked) out.set_mask(std::move(mask));
    return out;
}

Periodogram periodogram(const ComplexGrid& grid, std::size_t n_size, std::size_t m_size) {
    const std::size_t nk = grid.num_subcarriers();
    const std::size_t ml = grid.num_symbols();
    if (n_size == 0) n_size = nk;
    if (m_size == 0) m_size = ml;
    if (n_size < nk || m_size < ml)
        throw Error("l1sens.periodogram", "transform smaller than kept grid (zero-padding only enlarges)");

    const GridMeta& meta = grid.meta();
    PeriodogramAxes axes;
    axes.path_length_per_bin_m = kSpeedOfLight / (static_cast<double>(n_size) * meta.subcarrier_spacing_hz);
    axes.speed_per_bin_m_per_s =
        kSpeedOfLight / (static_cast<double>(m_size) * meta.symbol_duration_s * meta.carrier_freq_hz);

    // Twiddle tables; exponent signs follow the delay/Doppler axis definitions.
    std::vector<Complex> twiddle_n(n_size), twiddle_m(m_size);
    for (std::size_t t = 0; t < n_size; ++t)
        twiddle_n[t] = std::polar(1.0, kTwoPi * static_cast<double>(t) / static_cast<double>(n_size));
    for (std::size_t t = 0; t < m_size; ++t)
        twiddle_m[t] = std::polar(1.0, -kTwoPi * static_cast<double>(t) / static_cast<double>(m_size));

    // Stage 1: delay-axis transform for each symbol column.
    std::vector<Complex> inter(n_size * ml);
    for (std::size_t n = 0; n < n_size; ++n) {
        for (std::size_t l = 0; l < ml; ++l) {
            Complex acc = 0.0;
            for (std::size_t k = 0; k < nk; ++k) {
                acc += grid.at(k, l) * twiddle_n[(k * n) % n_size];
            }
            inter[n * ml + l] = acc;
        }
    }

    // Stage 2: Doppler-axis transform, output fftshifted (signed bins).
    Periodogram out(n_size, m_size, axes);
    const double norm = 1.0 / std::sqrt(static_cast<double>(nk) * static_cast<double>(ml));
    const long half = static_cast<long>(m_size / 2);
    for (std::size_t n = 0; n < n_size; ++n) {
        for (std::size_t mi = 0; mi < m_size; ++mi) {
            const long m_signed = static_cast<long>(mi) - half;
            Complex acc = 0.0;
            for (std::size_t l = 0; l < ml; ++l) {
                long idx = (static_cast<long>(l) * m_signed) % static_cast<long>(m_size);
                if (idx < 0) idx += static_cast<long>(m_size);
                acc += inter[n * ml + l] * twiddle_m[static_cast<std::size_t>(idx)];
            }
            out.at(n, mi) = acc * norm;
        }
    }
    return out;
}

double estimate_noise_floor(const Periodogram& pgram) {
    if (pgram.data().empty()) return -std::numeric_limits<double>::infinity();
    std::vector<double> powers(pgram.data().size());
    std::transform(pgram.data().begin(), pgram.data().end(), powers.begin(),
                   [](const Complex& c) { return std::norm(c); });
    auto mid = powers.begin() + static_cast<std::ptrdiff_t>(powers.size() / 2);
    std::nth_element(powers.begin(), mid, powers.end());
    return power_to_db(*mid);
}

std::vector<TargetPoint2D> detect_targets(const Periodogram& pgram, const DetectConfig& cfg) {
    if (!(cfg.threshold_db_above_noise > 0.0))
        throw Error("l1sens.detect_targets", "threshold must be > 0 dB");
    const std::size_t nn = pgram.n_size();
    const std::size_t mm = pgram.m_size();

    // Bins more than ~260 dB below the strongest bin are double-precision
    // rounding residue of exact zeros; treat them as zero so noiseless grids
    // keep a meaningful median floor.
    double max_power = 0.0;
    for (const auto& c : pgram.data()) max_power = std::max(max_power, std::norm(c));
    const double machine_floor = max_power * 1e-26;

    auto power_at = [&](std::size_t n, std::size_t mi) {
        double p = std::norm(pgram.at(n, mi));
        return p > machine_floor ? p : 0.0;
    };

    std::vector<double> powers(nn * mm);
    for (std::size_t n = 0; n < nn; ++n)
        for (std::size_t mi = 0; mi < mm; ++mi) powers[n * mm + mi] = power_at(n, mi);
    auto mid = powers.begin() + static_cast<std::ptrdiff_t>(powers.size() / 2);
    std::nth_element(powers.begin(), mid, powers.end());
    const double floor_power = *mid;
    const double floor_db = power_to_db(floor_power);
    const double threshold_power = floor_power * db_to_power(cfg.threshold_db_above_noise);

    struct Peak {
        std::size_t n, mi;
        double power;
    };
    std::vector<Peak> peaks;
    for (std::size_t n = 0; n < nn; ++n) {
        for (std::size_t mi = 0; mi < mm; ++mi) {
            double p = power_at(n, mi);
            if (!(p > threshold_power)) continue;
            bool is_peak = true;
            for (int dn = -1; dn <= 1 && is_peak; ++dn) {
                for (int dm = -1; dm <= 1; ++dm) {
                    if (dn == 0 && dm == 0) continue;
                    long nb_n = static_cast<long>(n) + dn;
                    long nb_m = static_cast<long>(mi) + dm;
                    if (nb_n < 0 || nb_m < 0 || nb_n >= static_cast<long>(nn) ||
                        nb_m >= static_cast<long>(mm))
                        continue;
                    if (!(p > power_at(static_cast<std::size_t>(nb_n), static_cast<std::size_t>(nb_m)))) {
                        is_peak = false;
                        break;
                    }
                }
            }
            if (is_peak) peaks.push_back({n, mi, p});
        }
    }

    std::sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) {
        if (a.power != b.power) return a.power > b.power;
        if (a.n != b.n) return a.n < b.n;
        return a.mi < b.mi;
    });
    if (peaks.size() > cfg.max_targets) peaks.resize(cfg.max_targets);

    auto parabolic = [](double ym1, double y0, double yp1) {
        double denom = ym1 - 2.0 * y0 + yp1;
        if (denom >= 0.0) return 0.0;
        double d = 0.5 * (ym1 - yp1) / denom;
        return std::clamp(d, -0.5, 0.5);
    };

    std::vector<TargetPoint2D> out;
    out.reserve(peaks.size());
    for (const auto& pk : peaks) {
        double mag0 = std::sqrt(pk.power);
        double dn = 0.0, dm = 0.0;
        if (pk.n > 0 && pk.n + 1 < nn)
            dn = parabolic(std::abs(pgram.at(pk.n - 1, pk.mi)), mag0, std::abs(pgram.at(pk.n + 1, pk.mi)));
        if (pk.mi > 0 && pk.mi + 1 < mm)
            dm = parabolic(std::abs(pgram.at(pk.n, pk.mi - 1)), mag0, std::abs(pgram.at(pk.n, pk.mi + 1)));

        TargetPoint2D t;
        t.path_length_m = (static_cast<double>(pk.n) + dn) * pgram.axes().path_length_per_bin_m;
        t.closing_speed_m_per_s =
            (static_cast<double>(pgram.signed_doppler_bin(pk.mi)) + dm) * pgram.axes().speed_per_bin_m_per_s;
        t.power_db = std::min(power_to_db(pk.power) - floor_db, kPowerDbClamp);
        t.complex_amplitude = pgram.at(pk.n, pk.mi);
        out.push_back(t);
    }
    return out;
}

std::vector<TargetPoint4D> multi_beam_filter(const std::vector<BeamDetections>& per_beam) {
    if (per_beam.empty()) throw Error("l1sens.multi_beam_filter", "need at least one beam");
    const PeriodogramAxes axes = per_beam.front().axes;
    for (const auto& b : per_beam) {
        if (!(b.axes == axes))
            throw Error("l1sens.multi_beam_filter", "invalid-input: inconsistent axis metadata");
    }

    struct Cluster {
        double sum_w = 0.0;
        double sum_w_path_bins = 0.0;
        double sum_w_speed_bins = 0.0;
        double sum_w_az = 0.0;
        double sum_w_zen = 0.0;
        double best_weight = -1.0;
        double max_power_db = -std::numeric_limits<double>::infinity();
        TargetPoint2D best_point;
        double path_bins() const { return sum_w_path_bins / sum_w; }
        double speed_bins() const { return sum_w_speed_bins / sum_w; }
    };
    std::vector<Cluster> clusters;
    for (const auto& bd : per_beam) {
        for (const auto& pt : bd.points) {
            double pb = pt.path_length_m / axes.path_length_per_bin_m;
            double sb = pt.closing_speed_m_per_s / axes.speed_per_bin_m_per_s;
            double w = std::norm(pt.complex_amplitude);
            if (w <= 0.0) w = std::numeric_limits<double>::min();
            Cluster* home = nullptr;
            for (auto& c : clusters) {
                if (std::abs(pb - c.path_bins()) <= 1.0 && std::abs(sb - c.speed_bins()) <= 1.0) {
                    home = &c;
                    break;
                }
            }
            if (!home) {
                clusters.emplace_back();
                home = &clusters.back();
            }
            home->sum_w += w;
            home->sum_w_path_bins += w * pb;
            home->sum_w_speed_bins += w * sb;
            home->sum_w_az += w * bd.beam.pointing_azimuth_rad;
            home->sum_w_zen += w * bd.beam.pointing_zenith_rad;
            home->max_power_db = std::max(home->max_power_db, pt.power_db);
            if (w > home->best_weight) {
                home->best_weight = w;
                home->best_point = pt;
            }
        }
    }

    std::vector<TargetPoint4D> out;
    out.reserve(clusters.size());
    for (const auto& c : clusters) {
        TargetPoint4D t;
        static_cast<TargetPoint2D&>(t) = c.best_point;
        t.power_db = c.max_power_db;
        t.azimuth_rad = c.sum_w_az / c.sum_w;
        t.zenith_rad = std::clamp(c.sum_w_zen / c.sum_w, 0.0, M_PI);
        out.push_back(t);
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const TargetPoint4D& a, const TargetPoint4D& b) { return a.power_db > b.power_db; });
    return out;
}

Vec3 localize_monostatic(const TargetPoint4D& target, const Vec3& rx_pos) {
    return rx_pos + scene::unit_from_angles(target.azimuth_rad, target.zenith_rad) *
                        (target.path_length_m / 2.0);
}

Vec3 predict_position(const TrackState& track, double t_s) {
    double dt = t_s - track.last_update_time_s;
    return track.position + track.velocity * dt;
}

ObjectDetectResult object_detect(const std::vector<LocalizedTarget>& points,
                                 const std::vector<TrackState>& tracks, double gate_m,
                                 double group_epsilon_m, double t_s) {
    ObjectDetectResult result;

    struct Pair {
        double dist;
        std::size_t point;
        std::size_t track;
        std::uint64_t track_id;
    };
    std::vector<Pair> pairs;
    for (std::size_t ti = 0; ti < tracks.size(); ++ti) {
        Vec3 pred = predict_position(tracks[ti], t_s);
        for (std::size_t pi = 0; pi < points.size(); ++pi) {
            double d = (points[pi].position - pred).norm();
            if (d <= gate_m) pairs.push_back({d, pi, ti, tracks[ti].object_id});
        }
    }
    std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
        if (a.dist != b.dist) return a.dist < b.dist;
        if (a.point != b.point) return a.point < b.point;
        return a.track_id < b.track_id;
    });

    std::vector<bool> point_used(points.size(), false), track_used(tracks.size(), false);
    for (const auto& p : pairs) {
        if (point_used[p.point] || track_used[p.track]) continue;
        point_used[p.point] = true;
        track_used[p.track] = true;
        result.associations.emplace_back(p.point, p.track);
    }

    // Single-linkage clustering of unassociated points.
    std::vector<std::size_t> free_points;
    for (std::size_t pi = 0; pi < points.size(); ++pi)
        if (!point_used[pi]) free_points.push_back(pi);

    std::vector<std::size_t> parent(free_points.size());
    std::iota(parent.begin(), parent.end(), 0);
    std::function<std::size_t(std::size_t)> find = [&](std::size_t i) {
        while (parent[i] != i) i = parent[i] = parent[parent[i]];
        return i;
    };
    for (std::size_t i = 0; i < free_points.size(); ++i) {
        for (std::size_t j = i + 1; j < free_points.size(); ++j) {
            double d = (points[free_points[i]].position - points[free_points[j]].position).norm();
            if (d <= group_epsilon_m) parent[find(j)] = find(i);
        }
    }

    std::vector<std::vector<std::size_t>> groups_by_root(free_points.size());
    for (std::size_t i = 0; i < free_points.size(); ++i) groups_by_root[find(i)].push_back(free_points[i]);

    for (const auto& members : groups_by_root) {
        if (members.empty()) continue;
        double sum_w = 0.0;
        Vec3 centroid{0, 0, 0};
        double max_power = -std::numeric_limits<double>::infinity();
        Complex best_amp;
        for (std::size_t pi : members) {
            double w = db_to_power(points[pi].power_db);
            sum_w += w;
            centroid = centroid + points[pi].position * w;
            if (points[pi].power_db > max_power) {
                max_power = points[pi].power_db;
                best_amp = points[pi].complex_amplitude;
            }
        }
        result.groups.push_back({centroid * (1.0 / sum_w), max_power, best_amp});
    }
    return result;
}

TrackState multi_burst_filter(const TrackState& track, const Vec3& measured_pos, double t_s,
                              const TrackConfig& cfg) {
    if (t_s < track.last_update_time_s)
        throw Error("l1sens.multi_burst_filter", "non-monotone update time");
    using Mat6 = Eigen::Matrix<double, 6, 6>;
    using Mat3 = Eigen::Matrix3d;
    using Vec6 = Eigen::Matrix<double, 6, 1>;

    const double dt = t_s - track.last_update_time_s;
    Mat6 f = Mat6::Identity();
    f(0, 3) = f(1, 4) = f(2, 5) = dt;

    // Continuous white-acceleration process noise.
    const double q = cfg.process_noise;
    Mat6 qm = Mat6::Zero();
    const double q11 = q * dt * dt * dt / 3.0;
    const double q12 = q * dt * dt / 2.0;
    const double q22 = q * dt;
    for (int i = 0; i < 3; ++i) {
        qm(i, i) = q11;
        qm(i, i + 3) = qm(i + 3, i) = q12;
        qm(i + 3, i + 3) = q22;
    }

    Vec6 x;
    x << track.position.x, track.position.y, track.position.z, track.velocity.x, track.velocity.y,
        track.velocity.z;
    x = f * x;
    Mat6 p = f * track.covariance * f.transpose() + qm;

    Mat3 r = Mat3::Identity() * cfg.measurement_noise;
    Mat3 s = p.topLeftCorner<3, 3>() + r;
    Eigen::Matrix<double, 6, 3> pht = p.leftCols<3>();
    Eigen::Matrix<double, 6, 3> k = s.ldlt().solve(pht.transpose()).transpose();

    Eigen::Vector3d innovation(measured_pos.x - x(0), measured_pos.y - x(1), measured_pos.z - x(2));
    x += k * innovation;

    // Joseph form keeps the covariance symmetric PSD under roundoff.
    Mat6 ikh = Mat6::Identity();
    ikh.leftCols<3>() -= k;
    p = ikh * p * ikh.transpose() + k * r * k.transpose();
    p = 0.5 * (p + p.transpose()).eval();

    TrackState out = track;
    out.position = {x(0), x(1), x(2)};
    out.velocity = {x(3), x(4), x(5)};
    out.covariance = p;
    out.last_update_time_s = t_s;
    out.hit_count = track.hit_count + 1;
    out.missed_scans = 0;
    return out;
}

TrackState make_track(std::uint64_t id, const LocalizedTarget& seed, double t_s,
                      const TrackConfig& cfg) {
    TrackState t;
    t.object_id = id;
    t.position = seed.position;
    t.velocity = {0, 0, 0};
    t.covariance = Eigen::Matrix<double, 6, 6>::Zero();
    for (int i = 0; i < 3; ++i) {
        t.covariance(i, i) = std::max(cfg.measurement_noise, 1e-12);
        t.covariance(i + 3, i + 3) = kInitialVelocityVar;
    }
    t.last_update_time_s = t_s;
    t.hit_count = 1;
    return t;
}

SensingMeasurement run_pipeline(const std::vector<ComplexGrid>& rx_per_beam,
                                const std::vector<BeamPattern>& beams, const ComplexGrid& tx_reference,
                                const ProcessingConfig& cfg, const PipelineGeometry& geometry,
                                double t_s, Tracker* tracker) {
    if (rx_per_beam.empty() || rx_per_beam.size() != beams.size())
        throw Error("l1sens.run_pipeline", "beam count does not match rx grids");
    cfg.validate(rx_per_beam.front().num_subcarriers(), rx_per_beam.front().num_symbols());

    SensingMeasurement meas;
    meas.depth = cfg.depth;

    std::vector<ComplexGrid> channels;
    channels.reserve(rx_per_beam.size());
    for (const auto& rx : rx_per_beam) {
        channels.push_back(
            stage("channel_calculation", [&] { return channel_calculation(rx, tx_reference); }));
    }
    if (cfg.depth == Depth::ChannelIQ) {
        meas.channel_grids = std::move(channels);
        return meas;
    }

    std::vector<Periodogram> pgrams;
    pgrams.reserve(channels.size());
    for (auto& ch : channels) {
        ComplexGrid work = ch;
        if (cfg.clutter_removal) work = stage("clutter_removal", [&] { return clutter_removal(work); });
        work = stage("crop_decimate", [&] { return crop_decimate(work, cfg.crop, cfg.decimate); });
        pgrams.push_back(
            stage("periodogram", [&] { return periodogram(work, cfg.zero_pad.n_size, cfg.zero_pad.m_size); }));
    }
    if (cfg.depth == Depth::PeriodogramOut) {
        meas.periodograms = std::move(pgrams);
        return meas;
    }

    std::vector<BeamDetections> per_beam;
    per_beam.reserve(pgrams.size());
    for (std::size_t b = 0; b < pgrams.size(); ++b) {
        BeamDetections bd;
        bd.beam = beams[b];
        bd.axes = pgrams[b].axes();
        bd.points = stage("detect_targets", [&] { return detect_targets(pgrams[b], cfg.detect); });
        per_beam.push_back(std::move(bd));
    }
    // Burst-level consolidation: points more than the double-precision
    // dynamic range below the strongest return are cancellation residue, and
    // the configured target cap applies across the whole burst.
    auto consolidate = [&](auto& points) {
        double max_power = 0.0;
        for (const auto& p : points) max_power = std::max(max_power, std::norm(p.complex_amplitude));
        std::erase_if(points, [&](const auto& p) {
            return std::norm(p.complex_amplitude) < max_power * 1e-26;
        });
        std::stable_sort(points.begin(), points.end(), [](const auto& a, const auto& b) {
            return std::norm(a.complex_amplitude) > std::norm(b.complex_amplitude);
        });
        if (points.size() > cfg.detect.max_targets) points.resize(cfg.detect.max_targets);
    };

    if (cfg.depth == Depth::Targets2D) {
        // Spatial filtering skipped: report 2D points as is.
        for (const auto& bd : per_beam)
            meas.targets2d.insert(meas.targets2d.end(), bd.points.begin(), bd.points.end());
        consolidate(meas.targets2d);
        return meas;
    }

    std::vector<TargetPoint4D> cloud =
        stage("multi_beam_filter", [&] { return multi_beam_filter(per_beam); });
    consolidate(cloud);
    if (cfg.depth == Depth::Targets4D) {
        meas.targets4d = std::move(cloud);
        return meas;
    }

    // Depth::Objects: monostatic localization feeding grouping and tracking.
    if (tracker == nullptr) throw Error("l1sens.run_pipeline", "Objects depth requires a tracker");
    if ((geometry.tx_pos - geometry.rx_pos).norm() > 1e-6)
        throw Error("l1sens.localize",
                    "Objects depth requires monostatic geometry; bistatic localization is central");

    std::vector<LocalizedTarget> localized;
    localized.reserve(cloud.size());
    for (const auto& t : cloud) {
        localized.push_back(
            {stage("localize", [&] { return localize_monostatic(t, geometry.rx_pos); }), t.power_db,
             t.complex_amplitude});
    }

    ObjectDetectResult od = stage("object_detect", [&] {
        return object_detect(localized, tracker->tracks, cfg.track.gate_m, cfg.group_epsilon_m, t_s);
    });

    std::vector<bool> updated(tracker->tracks.size(), false);
    for (const auto& [pi, ti] : od.associations) {
        tracker->tracks[ti] = stage("multi_burst_filter", [&] {
            return multi_burst_filter(tracker->tracks[ti], localized[pi].position, t_s, cfg.track);
        });
        updated[ti] = true;
    }
    for (std::size_t ti = 0; ti < updated.size(); ++ti)
        if (!updated[ti]) tracker->tracks[ti].missed_scans += 1;
    for (const auto& g : od.groups)
        tracker->tracks.push_back(make_track(tracker->next_id++, g, t_s, cfg.track));

    meas.objects = tracker->tracks;
    return meas;
}

} // namespace isacsim::l1
