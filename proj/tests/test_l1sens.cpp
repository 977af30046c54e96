#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <complex>
#include <limits>

#include "isacsim/l1sens.hpp"
#include "isacsim/scene.hpp"

using namespace isacsim;
using namespace isacsim::l1;
using scene::BeamPattern;
using scene::RadioParams;
using scene::Vec3;

namespace {

// Independent oracle: literal double-sum DFT with per-term std::polar.
// Written against the axis definitions, not against the implementation.
Periodogram brute_force_periodogram(const ComplexGrid& grid, std::size_t n_size, std::size_t m_size) {
    const std::size_t nk = grid.num_subcarriers();
    const std::size_t ml = grid.num_symbols();
    PeriodogramAxes axes;
    axes.path_length_per_bin_m =
        kSpeedOfLight / (static_cast<double>(n_size) * grid.meta().subcarrier_spacing_hz);
    axes.speed_per_bin_m_per_s = kSpeedOfLight / (static_cast<double>(m_size) *
                                                  grid.meta().symbol_duration_s *
                                                  grid.meta().carrier_freq_hz);
    Periodogram out(n_size, m_size, axes);
    double norm = 1.0 / std::sqrt(double(nk) * double(ml));
    for (std::size_t n = 0; n < n_size; ++n) {
        for (std::size_t mi = 0; mi < m_size; ++mi) {
            long m = static_cast<long>(mi) - static_cast<long>(m_size / 2);
            Complex acc = 0.0;
            for (std::size_t k = 0; k < nk; ++k) {
                for (std::size_t l = 0; l < ml; ++l) {
                    double phase = kTwoPi * (double(k) * double(n) / double(n_size) -
                                             double(l) * double(m) / double(m_size));
                    acc += grid.at(k, l) * std::polar(1.0, phase);
                }
            }
            out.at(n, mi) = acc * norm;
        }
    }
    return out;
}

GridMeta default_meta() {
    RadioParams p;
    return p.grid_meta();
}

ComplexGrid random_grid(std::size_t n, std::size_t m, Rng& rng, GridMeta meta = default_meta()) {
    ComplexGrid g(n, m, meta);
    for (auto& v : g.data()) v = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    return g;
}

// Noiseless single-path channel, phases evaluated elementwise:
// H[k,l] = a * exp(-j 2 pi k * delay_bins / N) * exp(+j 2 pi l * doppler_bins / M)
ComplexGrid single_path_grid(std::size_t n, std::size_t m, double delay_bins, double doppler_bins,
                             double amp = 1.0, GridMeta meta = default_meta()) {
    ComplexGrid g(n, m, meta);
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t l = 0; l < m; ++l)
            g.at(k, l) = std::polar(amp, kTwoPi * (-double(k) * delay_bins / double(n) +
                                                   double(l) * doppler_bins / double(m)));
    return g;
}

double rel_err(const Complex& a, const Complex& b, double scale) { return std::abs(a - b) / scale; }

} // namespace

TEST_CASE("channel_calculation: identity and unit-divisor cases") {
    Rng rng(11);
    auto y = random_grid(8, 4, rng);
    SUBCASE("Y == X gives H == 1") {
        auto h = channel_calculation(y, y);
        for (const auto& v : h.data()) CHECK(std::abs(v - Complex{1.0, 0.0}) < 1e-12);
    }
    SUBCASE("X == 1 gives H == Y") {
        ComplexGrid x(8, 4, y.meta());
        for (auto& v : x.data()) v = 1.0;
        auto h = channel_calculation(y, x);
        for (std::size_t i = 0; i < y.data().size(); ++i) CHECK(h.data()[i] == y.data()[i]);
    }
}

TEST_CASE("channel_calculation: construct-and-invert recovers the channel") {
    Rng rng(12);
    auto h0 = random_grid(16, 8, rng);
    ComplexGrid x(16, 8, h0.meta());
    for (auto& v : x.data()) v = std::polar(1.0, rng.uniform(0, kTwoPi));
    ComplexGrid y(16, 8, h0.meta());
    for (std::size_t i = 0; i < y.data().size(); ++i) y.data()[i] = h0.data()[i] * x.data()[i];
    auto h = channel_calculation(y, x);
    for (std::size_t i = 0; i < h.data().size(); ++i)
        CHECK(std::abs(h.data()[i] - h0.data()[i]) < 1e-12);
}

TEST_CASE("channel_calculation: tiny reference magnitude masks the element") {
    Rng rng(13);
    auto y = random_grid(4, 4, rng);
    ComplexGrid x(4, 4, y.meta());
    for (auto& v : x.data()) v = 1.0;
    x.at(2, 3) = {1e-15, 0.0};
    auto h = channel_calculation(y, x);
    CHECK_FALSE(h.allocated(2, 3));
    CHECK(h.at(2, 3) == Complex{0.0, 0.0});
    CHECK(h.allocated(0, 0));
}

TEST_CASE("channel_calculation: shape mismatch rejected") {
    ComplexGrid a(4, 4, default_meta()), b(4, 5, default_meta());
    CHECK_THROWS_AS(channel_calculation(a, b), Error);
}

TEST_CASE("clutter_removal: static scatterer vanishes") {
    auto g = single_path_grid(16, 8, 3.0, 0.0, 2.0);
    auto out = clutter_removal(g);
    for (const auto& v : out.data()) CHECK(std::abs(v) < 1e-12 * 2.0);
}

TEST_CASE("clutter_removal: on-grid mover passes through") {
    auto g = single_path_grid(16, 8, 3.0, 2.0);
    auto out = clutter_removal(g);
    for (std::size_t i = 0; i < g.data().size(); ++i)
        CHECK(std::abs(out.data()[i] - g.data()[i]) < 1e-12);
}

TEST_CASE("clutter_removal: removes static part of a mixture (superposition oracle)") {
    auto stat = single_path_grid(16, 8, 5.0, 0.0, 3.0);
    auto mover = single_path_grid(16, 8, 2.0, 3.0, 1.0);
    ComplexGrid mix(16, 8, stat.meta());
    for (std::size_t i = 0; i < mix.data().size(); ++i)
        mix.data()[i] = stat.data()[i] + mover.data()[i];
    auto out = clutter_removal(mix);
    for (std::size_t i = 0; i < mix.data().size(); ++i)
        CHECK(std::abs(out.data()[i] - mover.data()[i]) < 1e-11);
}

TEST_CASE("clutter_removal: idempotent") {
    Rng rng(21);
    auto g = random_grid(12, 6, rng);
    auto once = clutter_removal(g);
    auto twice = clutter_removal(once);
    for (std::size_t i = 0; i < g.data().size(); ++i)
        CHECK(std::abs(twice.data()[i] - once.data()[i]) <= 1e-12);
}

TEST_CASE("clutter_removal: masked elements excluded from the mean") {
    ComplexGrid g(2, 4, default_meta());
    for (std::size_t l = 0; l < 4; ++l) g.at(0, l) = 1.0;
    g.at(0, 1) = 100.0; // would skew the mean if counted
    g.set_allocated(0, 1, false);
    g.at(0, 1) = 0.0;
    auto out = clutter_removal(g);
    CHECK(std::abs(out.at(0, 0)) < 1e-12);
    CHECK(std::abs(out.at(0, 2)) < 1e-12);
    CHECK(out.at(0, 1) == Complex{0.0, 0.0});
}

TEST_CASE("crop_decimate: keep-all step-one is identity") {
    Rng rng(31);
    auto g = random_grid(8, 8, rng);
    auto out = crop_decimate(g, {}, {});
    CHECK(out.num_subcarriers() == 8);
    CHECK(out.num_symbols() == 8);
    for (std::size_t i = 0; i < g.data().size(); ++i) CHECK(out.data()[i] == g.data()[i]);
    CHECK(out.meta().subcarrier_spacing_hz == g.meta().subcarrier_spacing_hz);
}

TEST_CASE("crop_decimate: cropping coarsens delay resolution") {
    Rng rng(32);
    auto g = random_grid(16, 8, rng);
    auto full = periodogram(g, 16, 8);
    auto cropped = crop_decimate(g, {8, 0}, {});
    auto half = periodogram(cropped, 8, 8);
    CHECK(half.axes().path_length_per_bin_m ==
          doctest::Approx(2.0 * full.axes().path_length_per_bin_m).epsilon(1e-12));
}

TEST_CASE("crop_decimate: time decimation halves the unambiguous speed range and aliases") {
    // On-grid mover at Doppler bin +10 of 32. After step-2 decimation the
    // transform is 16 bins wide; modular arithmetic places the peak at
    // ((10 + 8) mod 16) - 8 = -6.
    auto g = single_path_grid(16, 32, 4.0, 10.0);
    auto p_full = periodogram(g, 16, 32);
    auto dec = crop_decimate(g, {}, {1, 2});
    auto p_dec = periodogram(dec, 16, 16);

    double full_range = 32.0 * p_full.axes().speed_per_bin_m_per_s;
    double dec_range = 16.0 * p_dec.axes().speed_per_bin_m_per_s;
    CHECK(dec_range == doctest::Approx(full_range / 2.0).epsilon(1e-12));

    DetectConfig dc;
    auto before = detect_targets(p_full, dc);
    auto after = detect_targets(p_dec, dc);
    REQUIRE(!before.empty());
    REQUIRE(!after.empty());
    CHECK(before[0].closing_speed_m_per_s ==
          doctest::Approx(10.0 * p_full.axes().speed_per_bin_m_per_s).epsilon(1e-9));
    CHECK(after[0].closing_speed_m_per_s ==
          doctest::Approx(-6.0 * p_dec.axes().speed_per_bin_m_per_s).epsilon(1e-9));
    CHECK(after[0].closing_speed_m_per_s < 0.0);
}

TEST_CASE("crop_decimate: dimension below two rejected") {
    Rng rng(33);
    auto g = random_grid(8, 8, rng);
    CHECK_THROWS_AS(crop_decimate(g, {1, 0}, {}), Error);
    CHECK_THROWS_AS(crop_decimate(g, {}, {1, 8}), Error);
}

TEST_CASE("periodogram: zero in, zero out") {
    ComplexGrid g(8, 8, default_meta());
    auto p = periodogram(g, 8, 8);
    for (const auto& v : p.data()) CHECK(v == Complex{0.0, 0.0});
}

TEST_CASE("periodogram: on-grid static path concentrates in one bin with sqrt(NM) scaling") {
    const std::size_t n = 16, m = 8;
    const double amp = 0.7;
    auto g = single_path_grid(n, m, 5.0, 0.0, amp);
    auto p = periodogram(g, n, m);
    double expected_peak = amp * std::sqrt(double(n * m));
    for (std::size_t ni = 0; ni < n; ++ni) {
        for (std::size_t mi = 0; mi < m; ++mi) {
            double mag = std::abs(p.at(ni, mi));
            if (ni == 5 && p.signed_doppler_bin(mi) == 0) {
                CHECK(mag == doctest::Approx(expected_peak).epsilon(1e-12));
            } else {
                CHECK(mag < expected_peak * 1e-12);
            }
        }
    }
}

TEST_CASE("periodogram: matches brute-force double-sum DFT on random grids") {
    Rng rng(41);
    for (int trial = 0; trial < 20; ++trial) {
        std::size_t n = 2 + rng.uniform_int(15);
        std::size_t m = 2 + rng.uniform_int(15);
        std::size_t n_pad = n + rng.uniform_int(9);
        std::size_t m_pad = m + rng.uniform_int(9);
        auto g = random_grid(n, m, rng);
        auto fast = periodogram(g, n_pad, m_pad);
        auto oracle = brute_force_periodogram(g, n_pad, m_pad);
        double scale = 0.0;
        for (const auto& v : oracle.data()) scale = std::max(scale, std::abs(v));
        REQUIRE(scale > 0.0);
        for (std::size_t i = 0; i < fast.data().size(); ++i)
            CHECK(rel_err(fast.data()[i], oracle.data()[i], scale) < 1e-9);
        CHECK(fast.axes().path_length_per_bin_m == oracle.axes().path_length_per_bin_m);
        CHECK(fast.axes().speed_per_bin_m_per_s == oracle.axes().speed_per_bin_m_per_s);
    }
}

TEST_CASE("periodogram: Parseval energy balance without zero-padding") {
    Rng rng(42);
    auto g = random_grid(16, 8, rng);
    auto p = periodogram(g, 16, 8);
    double in = 0.0, out = 0.0;
    for (const auto& v : g.data()) in += std::norm(v);
    for (const auto& v : p.data()) out += std::norm(v);
    // With the 1/sqrt(N*M) normalization the scaling constant is exactly 1.
    CHECK(out == doctest::Approx(in).epsilon(1e-9));
}

TEST_CASE("periodogram: padding smaller than the grid is rejected") {
    Rng rng(43);
    auto g = random_grid(8, 8, rng);
    CHECK_THROWS_AS(periodogram(g, 4, 8), Error);
}

TEST_CASE("estimate_noise_floor: all-noise grids track the configured power (Monte-Carlo)") {
    RadioParams params;
    params.num_subcarriers = 64;
    params.num_symbols = 32;
    params.noise_power_dbm = -90.0;
    scene::SceneState empty;
    // Median of an exponential is ln(2) times its mean.
    double expected = -90.0 + 10.0 * std::log10(std::log(2.0));
    for (int seed = 0; seed < 100; ++seed) {
        auto grid = scene::synthesize_channel(empty, {0, 0, 0}, {0, 0, 0}, BeamPattern{}, params,
                                              std::nullopt, 1000 + seed);
        auto p = periodogram(grid, 64, 32);
        double floor = estimate_noise_floor(p);
        CHECK(std::abs(floor - expected) < 2.0);
    }
}

TEST_CASE("estimate_noise_floor: robust to a single strong target") {
    RadioParams params;
    params.num_subcarriers = 64;
    params.num_symbols = 32;
    params.noise_power_dbm = -90.0;
    scene::SceneState empty;
    for (int seed = 0; seed < 20; ++seed) {
        auto noise_only = scene::synthesize_channel(empty, {0, 0, 0}, {0, 0, 0}, BeamPattern{},
                                                    params, std::nullopt, 2000 + seed);
        auto with_target = noise_only;
        auto target = single_path_grid(64, 32, 10.0, 3.0, 1.0, params.grid_meta());
        for (std::size_t i = 0; i < with_target.data().size(); ++i)
            with_target.data()[i] += target.data()[i];
        double f0 = estimate_noise_floor(periodogram(noise_only, 64, 32));
        double f1 = estimate_noise_floor(periodogram(with_target, 64, 32));
        CHECK(std::abs(f1 - f0) < 0.5);
    }
}

TEST_CASE("estimate_noise_floor: zero periodogram gives -inf") {
    ComplexGrid g(8, 8, default_meta());
    auto p = periodogram(g, 8, 8);
    CHECK(estimate_noise_floor(p) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("detect_targets: noiseless on-grid target detected exactly once at the exact bin") {
    auto g = single_path_grid(32, 16, 7.0, -3.0);
    auto p = periodogram(g, 32, 16);
    DetectConfig cfg;
    auto dets = detect_targets(p, cfg);
    REQUIRE(dets.size() == 1);
    CHECK(dets[0].path_length_m ==
          doctest::Approx(7.0 * p.axes().path_length_per_bin_m).epsilon(1e-9));
    CHECK(dets[0].closing_speed_m_per_s ==
          doctest::Approx(-3.0 * p.axes().speed_per_bin_m_per_s).epsilon(1e-9));
}

TEST_CASE("detect_targets: off-grid sweep with 4x zero-padding stays within half a raw bin") {
    const std::size_t n = 64, m = 16;
    for (int i = 0; i < 10; ++i) {
        double frac = 0.05 + 0.09 * i; // fractional delay offsets across a bin
        double delay_bins = 10.0 + frac;
        auto g = single_path_grid(n, m, delay_bins, 0.0);
        auto p = periodogram(g, 4 * n, m);
        DetectConfig cfg;
        cfg.max_targets = 1;
        auto dets = detect_targets(p, cfg);
        REQUIRE(!dets.empty());
        double raw_bin = kSpeedOfLight / (double(n) * g.meta().subcarrier_spacing_hz);
        double truth = delay_bins * raw_bin;
        CHECK(std::abs(dets[0].path_length_m - truth) <= 0.5 * raw_bin);
    }
}

TEST_CASE("detect_targets: two on-grid targets 20 dB apart are both found") {
    auto strong = single_path_grid(64, 16, 10.0, 2.0, 1.0);
    auto weak = single_path_grid(64, 16, 20.0, -4.0, 0.1);
    ComplexGrid mix(64, 16, strong.meta());
    for (std::size_t i = 0; i < mix.data().size(); ++i)
        mix.data()[i] = strong.data()[i] + weak.data()[i];
    auto p = periodogram(mix, 64, 16);
    auto dets = detect_targets(p, DetectConfig{});
    REQUIRE(dets.size() >= 2);
    CHECK(dets[0].path_length_m == doctest::Approx(10.0 * p.axes().path_length_per_bin_m).epsilon(1e-6));
    CHECK(dets[1].path_length_m == doctest::Approx(20.0 * p.axes().path_length_per_bin_m).epsilon(1e-6));
    CHECK(std::abs(dets[0].complex_amplitude) > std::abs(dets[1].complex_amplitude));
}

TEST_CASE("detect_targets: detection is translation-covariant in delay") {
    auto g1 = single_path_grid(32, 8, 6.0, 1.0);
    auto g2 = single_path_grid(32, 8, 7.0, 1.0); // one extra delay-bin phase ramp
    auto d1 = detect_targets(periodogram(g1, 32, 8), DetectConfig{});
    auto d2 = detect_targets(periodogram(g2, 32, 8), DetectConfig{});
    REQUIRE(!d1.empty());
    REQUIRE(!d2.empty());
    double bin = kSpeedOfLight / (32.0 * g1.meta().subcarrier_spacing_hz);
    CHECK(d2[0].path_length_m - d1[0].path_length_m == doctest::Approx(bin).epsilon(1e-9));
}

TEST_CASE("detect_targets: empty result on pure noise below threshold") {
    ComplexGrid g(16, 16, default_meta());
    Rng rng(55);
    for (auto& v : g.data()) v = rng.complex_gaussian(1.0);
    auto p = periodogram(g, 16, 16);
    DetectConfig cfg;
    cfg.threshold_db_above_noise = 60.0; // nothing in pure noise clears 60 dB over median
    CHECK(detect_targets(p, cfg).empty());
}

TEST_CASE("multi_beam_filter: single beam passes through with its pointing angles") {
    BeamDetections bd;
    bd.beam = {0.7, 1.1, 0.3};
    bd.axes = {10.0, 2.0};
    TargetPoint2D t;
    t.path_length_m = 100.0;
    t.closing_speed_m_per_s = 4.0;
    t.power_db = 20.0;
    t.complex_amplitude = {3.0, 0.0};
    bd.points.push_back(t);
    auto out = multi_beam_filter({bd});
    REQUIRE(out.size() == 1);
    CHECK(out[0].azimuth_rad == doctest::Approx(0.7));
    CHECK(out[0].zenith_rad == doctest::Approx(1.1));
    CHECK(out[0].path_length_m == doctest::Approx(100.0));
}

TEST_CASE("multi_beam_filter: equal-power beams average to the midpoint azimuth") {
    PeriodogramAxes axes{10.0, 2.0};
    TargetPoint2D t;
    t.path_length_m = 100.0;
    t.closing_speed_m_per_s = 0.0;
    t.power_db = 20.0;
    t.complex_amplitude = {2.0, 0.0};
    BeamDetections a{{0.2, M_PI / 2, 0.3}, axes, {t}};
    BeamDetections b{{0.4, M_PI / 2, 0.3}, axes, {t}};
    auto out = multi_beam_filter({a, b});
    REQUIRE(out.size() == 1);
    CHECK(out[0].azimuth_rad == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("multi_beam_filter: inconsistent axes rejected") {
    BeamDetections a{{0.2, M_PI / 2, 0.3}, {10.0, 2.0}, {}};
    BeamDetections b{{0.4, M_PI / 2, 0.3}, {11.0, 2.0}, {}};
    CHECK_THROWS_AS(multi_beam_filter({a, b}), Error);
}

TEST_CASE("multi_beam_filter: 5-beam sweep recovers azimuth within a quarter beam spacing") {
    // Synthesize bursts from the scene module and run the front half of the chain.
    RadioParams params;
    params.num_subcarriers = 64;
    params.num_symbols = 16;
    scene::SceneState s;
    scene::GroundObject obj;
    obj.id = "t";
    double az_true = 0.3;
    obj.position = {120.0 * std::cos(az_true), 120.0 * std::sin(az_true), 0.0};
    obj.velocity = {0, 0, 0};
    obj.is_static = true;
    obj.reflection_amplitude = 5e4;
    s.objects.push_back(obj);

    const double spacing = 0.1;
    std::vector<BeamDetections> per_beam;
    for (int b = 0; b < 5; ++b) {
        BeamPattern beam{0.1 + spacing * b, M_PI / 2.0, 0.2};
        auto rx = scene::synthesize_channel(s, {0, 0, 0}, {0, 0, 0}, beam, params, std::nullopt, 9);
        auto p = periodogram(rx, 64, 16);
        BeamDetections bd;
        bd.beam = beam;
        bd.axes = p.axes();
        DetectConfig dc;
        dc.max_targets = 1;
        bd.points = detect_targets(p, dc);
        per_beam.push_back(std::move(bd));
    }
    auto out = multi_beam_filter(per_beam);
    REQUIRE(!out.empty());
    CHECK(std::abs(out[0].azimuth_rad - az_true) <= spacing / 4.0);
    CHECK(out[0].zenith_rad == doctest::Approx(M_PI / 2.0).epsilon(1e-9));
}

TEST_CASE("localize_monostatic: axis-aligned case") {
    TargetPoint4D t;
    t.path_length_m = 200.0;
    t.azimuth_rad = 0.0;
    t.zenith_rad = M_PI / 2.0;
    auto pos = localize_monostatic(t, {0, 0, 0});
    CHECK(pos.x == doctest::Approx(100.0).epsilon(1e-12));
    CHECK(std::abs(pos.y) < 1e-9);
    CHECK(std::abs(pos.z) < 1e-9);
}

TEST_CASE("localize_monostatic: round-trip with bistatic_geometry over random samples") {
    Rng rng(77);
    for (int i = 0; i < 1000; ++i) {
        Vec3 rx{rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(0, 20)};
        TargetPoint4D t;
        t.path_length_m = rng.uniform(10.0, 1000.0);
        t.azimuth_rad = rng.uniform(-M_PI, M_PI);
        t.zenith_rad = rng.uniform(0.01, M_PI - 0.01);
        auto pos = localize_monostatic(t, rx);
        scene::GroundObject o;
        o.id = "x";
        o.position = pos;
        auto g = scene::bistatic_geometry(rx, rx, o);
        CHECK(std::abs(g.path_length_m - t.path_length_m) < 1e-9 * std::max(1.0, t.path_length_m));
    }
}

TEST_CASE("object_detect: empty cloud leaves tracks untouched") {
    std::vector<TrackState> tracks(1);
    auto r = object_detect({}, tracks, 10.0, 5.0, 0.0);
    CHECK(r.associations.empty());
    CHECK(r.groups.empty());
}

TEST_CASE("object_detect: point within gate associates to the track") {
    TrackState tr;
    tr.object_id = 3;
    tr.position = {10, 0, 0};
    tr.last_update_time_s = 0.0;
    std::vector<LocalizedTarget> pts = {{{12, 0, 0}, 10.0, {1, 0}}};
    auto r = object_detect(pts, {tr}, 10.0, 5.0, 0.0);
    REQUIRE(r.associations.size() == 1);
    CHECK(r.associations[0].first == 0);
    CHECK(r.associations[0].second == 0);
    CHECK(r.groups.empty());
}

TEST_CASE("object_detect: two nearby points group at the power-weighted centroid") {
    // Hand-evaluated single-linkage oracle: eps = 4, separation 2 = 0.5*eps.
    // Weights 10^(10/10)=10 and 10^(13.0103/10)=20.
    std::vector<LocalizedTarget> pts = {{{0, 0, 0}, 10.0, {1, 0}},
                                        {{2, 0, 0}, 10.0 * std::log10(20.0), {1, 0}}};
    auto r = object_detect(pts, {}, 10.0, 4.0, 0.0);
    REQUIRE(r.groups.size() == 1);
    double expected_x = (0.0 * 10.0 + 2.0 * 20.0) / 30.0;
    CHECK(r.groups[0].position.x == doctest::Approx(expected_x).epsilon(1e-9));
}

TEST_CASE("multi_burst_filter: stationary measurements converge to the point") {
    TrackConfig cfg;
    cfg.process_noise = 0.1;
    cfg.measurement_noise = 0.01;
    TrackState tr = make_track(1, {{5, 5, 0}, 20.0, {1, 0}}, 0.0, cfg);
    for (int i = 1; i <= 30; ++i) tr = multi_burst_filter(tr, {5, 5, 0}, 0.1 * i, cfg);
    CHECK(tr.velocity.norm() < 1e-3);
    CHECK((tr.position - Vec3{5, 5, 0}).norm() < 1e-6);
    CHECK_FALSE(tr.direction_of_travel().has_value());
    CHECK(tr.hit_count == 31);
}

TEST_CASE("multi_burst_filter: noiseless linear motion pins the velocity") {
    TrackConfig cfg;
    cfg.process_noise = 1e-4;
    cfg.measurement_noise = 1e-10;
    Vec3 v{10, 0, 0};
    TrackState tr = make_track(1, {{0, 0, 0}, 20.0, {1, 0}}, 0.0, cfg);
    for (int i = 1; i <= 10; ++i) {
        double t = 0.1 * i;
        tr = multi_burst_filter(tr, v * t, t, cfg);
    }
    CHECK(std::abs(tr.velocity.x - 10.0) < 1e-6);
    CHECK(std::abs(tr.velocity.y) < 1e-6);
    CHECK(std::abs(tr.velocity.z) < 1e-6);
    auto dir = tr.direction_of_travel();
    REQUIRE(dir.has_value());
    CHECK(dir->x == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("multi_burst_filter: covariance stays symmetric PSD over random updates") {
    Rng rng(88);
    TrackConfig cfg;
    cfg.process_noise = rng.uniform(0.01, 2.0);
    cfg.measurement_noise = rng.uniform(0.001, 1.0);
    TrackState tr = make_track(1, {{0, 0, 0}, 10.0, {1, 0}}, 0.0, cfg);
    double t = 0.0;
    for (int i = 0; i < 1000; ++i) {
        t += rng.uniform(0.0, 0.5);
        Vec3 z{rng.uniform(-100, 100), rng.uniform(-100, 100), rng.uniform(-10, 10)};
        tr = multi_burst_filter(tr, z, t, cfg);
        Eigen::Matrix<double, 6, 6> p = tr.covariance;
        CHECK((p - p.transpose()).cwiseAbs().maxCoeff() < 1e-9);
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> es(p);
        CHECK(es.eigenvalues().minCoeff() >= -1e-9);
    }
}

TEST_CASE("multi_burst_filter: non-monotone time rejected") {
    TrackConfig cfg;
    TrackState tr = make_track(1, {{0, 0, 0}, 10.0, {1, 0}}, 5.0, cfg);
    CHECK_THROWS_AS(multi_burst_filter(tr, {0, 0, 0}, 4.0, cfg), Error);
}

TEST_CASE("run_pipeline: ChannelIQ depth returns the effective channel only") {
    auto rx = single_path_grid(32, 8, 4.0, 0.0);
    ComplexGrid tx(32, 8, rx.meta());
    for (auto& v : tx.data()) v = 1.0;
    ProcessingConfig cfg;
    cfg.depth = Depth::ChannelIQ;
    auto meas = run_pipeline({rx}, {BeamPattern{}}, tx, cfg, {{0, 0, 0}, {0, 0, 0}}, 0.0, nullptr);
    CHECK(meas.depth == Depth::ChannelIQ);
    REQUIRE(meas.channel_grids.size() == 1);
    CHECK(meas.periodograms.empty());
    CHECK(meas.targets2d.empty());
    for (std::size_t i = 0; i < rx.data().size(); ++i)
        CHECK(std::abs(meas.channel_grids[0].data()[i] - rx.data()[i]) < 1e-12);
}

TEST_CASE("run_pipeline: Targets2D depth on a single-target scene yields one 2D point") {
    RadioParams params;
    params.num_subcarriers = 64;
    params.num_symbols = 16;
    scene::SceneState s;
    scene::GroundObject obj;
    obj.id = "car";
    obj.position = {150, 40, 0};
    obj.velocity = {-12, 0, 0};
    obj.reflection_amplitude = 4e4;
    s.objects.push_back(obj);
    BeamPattern beam{std::atan2(40.0, 150.0), M_PI / 2.0, 1.0};
    auto rx = scene::synthesize_channel(s, {0, 0, 0}, {0, 0, 0}, beam, params, std::nullopt, 5);
    ComplexGrid tx(64, 16, rx.meta());
    for (auto& v : tx.data()) v = 1.0;

    ProcessingConfig cfg;
    cfg.depth = Depth::Targets2D;
    cfg.clutter_removal = false;
    cfg.detect.max_targets = 1;
    auto meas = run_pipeline({rx}, {beam}, tx, cfg, {{0, 0, 0}, {0, 0, 0}}, 0.0, nullptr);
    REQUIRE(meas.targets2d.size() == 1);
    auto truth = scene::bistatic_geometry({0, 0, 0}, {0, 0, 0}, obj);
    auto p_axes = periodogram(rx, 64, 16).axes();
    CHECK(std::abs(meas.targets2d[0].path_length_m - truth.path_length_m) <=
          p_axes.path_length_per_bin_m);
}

TEST_CASE("run_pipeline: Objects depth tracks a mover with the right direction of travel") {
    RadioParams params;
    params.num_subcarriers = 128;
    params.num_symbols = 32;
    scene::SceneState s0;
    scene::GroundObject car;
    car.id = "car";
    car.position = {200, -30, 0};
    car.velocity = {-15, 10, 0};
    car.reflection_amplitude = 1e5;
    s0.objects.push_back(car);

    ProcessingConfig cfg;
    cfg.depth = Depth::Objects;
    cfg.clutter_removal = false;
    cfg.detect.max_targets = 1;
    cfg.track.gate_m = 50.0;
    cfg.track.measurement_noise = 1.0;
    cfg.track.process_noise = 10.0;

    // 16-beam azimuth sweep around the scene.
    std::vector<BeamPattern> beams;
    for (int b = 0; b < 16; ++b)
        beams.push_back({-M_PI + (2.0 * M_PI) * (b + 0.5) / 16.0, M_PI / 2.0, 2.0 * M_PI / 16.0});

    Tracker tracker;
    for (int burst = 0; burst < 5; ++burst) {
        double t = 0.2 * burst;
        auto s = scene::advance(s0, t);
        std::vector<ComplexGrid> rx;
        for (const auto& beam : beams)
            rx.push_back(scene::synthesize_channel(s, {0, 0, 0}, {0, 0, 0}, beam, params,
                                                   std::nullopt, 100 + burst));
        ComplexGrid tx(128, 32, rx[0].meta());
        for (auto& v : tx.data()) v = 1.0;
        auto meas = run_pipeline(rx, beams, tx, cfg, {{0, 0, 0}, {0, 0, 0}}, t, &tracker);
        CHECK(meas.depth == Depth::Objects);
    }
    REQUIRE(tracker.tracks.size() >= 1);
    const auto& tr = tracker.tracks.front();
    CHECK(tr.hit_count >= 4);
    // Direction of travel correct in sign per axis.
    CHECK(tr.velocity.x < 0.0);
    CHECK(tr.velocity.y > 0.0);
}

TEST_CASE("run_pipeline: stage errors carry the stage name") {
    auto rx = single_path_grid(8, 4, 1.0, 0.0);
    ComplexGrid tx(8, 4, rx.meta());
    for (auto& v : tx.data()) v = 1.0;
    ProcessingConfig cfg;
    cfg.depth = Depth::Objects;
    cfg.crop.freq_keep = 20; // exceeds grid
    try {
        run_pipeline({rx}, {BeamPattern{}}, tx, cfg, {{0, 0, 0}, {0, 0, 0}}, 0.0, nullptr);
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(std::string(e.origin()).find("l1sens") != std::string::npos);
    }
}

TEST_CASE("run_pipeline: end-to-end on-grid recovery matches bistatic_geometry") {
    RadioParams params;
    params.num_subcarriers = 64;
    params.num_symbols = 32;
    double path_bin = kSpeedOfLight / (64.0 * params.subcarrier_spacing_hz);
    double speed_bin =
        kSpeedOfLight / (32.0 * params.symbol_duration_s() * params.carrier_freq_hz);

    Rng rng(99);
    for (int trial = 0; trial < 10; ++trial) {
        long n0 = 4 + static_cast<long>(rng.uniform_int(20));
        long m0 = static_cast<long>(rng.uniform_int(13)) - 6;
        if (m0 == 0) m0 = 7;
        double az = rng.uniform(-M_PI, M_PI);
        Vec3 dir = scene::unit_from_angles(az, M_PI / 2.0);
        double dist = n0 * path_bin / 2.0;
        double v_rad = -double(m0) * speed_bin / 2.0; // closing positive convention

        scene::SceneState s;
        scene::GroundObject obj;
        obj.id = "t";
        obj.position = dir * dist;
        obj.velocity = dir * v_rad;
        obj.reflection_amplitude = dist * dist;
        s.objects.push_back(obj);

        BeamPattern beam{az, M_PI / 2.0, 1.5};
        auto rx = scene::synthesize_channel(s, {0, 0, 0}, {0, 0, 0}, beam, params, std::nullopt, 7);
        ComplexGrid tx(64, 32, rx.meta());
        for (auto& v : tx.data()) v = 1.0;
        ProcessingConfig cfg;
        cfg.depth = Depth::Targets2D;
        cfg.clutter_removal = false;
        cfg.detect.max_targets = 1;
        auto meas = run_pipeline({rx}, {beam}, tx, cfg, {{0, 0, 0}, {0, 0, 0}}, 0.0, nullptr);
        REQUIRE(meas.targets2d.size() == 1);
        auto truth = scene::bistatic_geometry({0, 0, 0}, {0, 0, 0}, obj);
        CHECK(meas.targets2d[0].path_length_m == doctest::Approx(truth.path_length_m).epsilon(1e-9));
        double truth_speed = -truth.path_rate_m_per_s;
        CHECK(meas.targets2d[0].closing_speed_m_per_s == doctest::Approx(truth_speed).epsilon(1e-6));
    }
}
