#include <doctest.h>

#include <cmath>

#include "isacsim/gnb.hpp"
#include "mock_runtime.hpp"

using namespace isacsim;
using namespace isacsim::gnb;

namespace {

RuModel sic_tdd_ru(double sic_db = 100.0) {
    RuModel ru;
    ru.ru_id = "ru-1";
    ru.kind = sep::RuKind::Tdd;
    ru.sic = {sic_db / 2, sic_db / 4, sic_db / 4};
    ru.legacy = false;
    return ru;
}

RuModel sniffer_ru() {
    RuModel ru;
    ru.ru_id = "ru-s";
    ru.kind = sep::RuKind::Sniffer;
    ru.legacy = false;
    ru.sic = {};
    return ru;
}

RuModel legacy_tdd_ru(bool can_pause) {
    RuModel ru;
    ru.ru_id = "ru-legacy";
    ru.kind = sep::RuKind::Tdd;
    ru.legacy = true;
    ru.sic = {};
    ru.can_pause_comm = can_pause;
    return ru;
}

TrpUnit make_unit(const std::string& gnb_id, const std::string& trp_id, scene::Vec3 pos, RuModel ru) {
    TrpUnit u;
    u.ru = ru;
    u.info = make_trp_info(gnb_id, trp_id, pos, ru, 500.0, 0.5);
    return u;
}

sep::SensingRequest monostatic_request(std::uint64_t semf_id, const std::string& trp_id,
                                       bool one_shot = true) {
    sep::SensingRequest req;
    req.semf_measurement_id = semf_id;
    sep::TrpConfigListEntry e;
    e.trp_id = trp_id;
    e.role = sep::TrpRole::TxRx;
    e.mode = sep::SensingMode::Monostatic;
    e.resource.period_slots = 10;
    e.resource.burst_symbols = 32;
    e.resource.subcarriers = 64;
    e.processing.depth = l1::Depth::Targets2D;
    e.processing.clutter_removal = false;
    e.processing.detect.max_targets = 1;
    e.beams.push_back({0.0, M_PI / 2.0, 1.5});
    req.trp_config_list.push_back(e);
    req.measurement_timing.one_shot = one_shot;
    if (!one_shot) {
        req.measurement_timing.report_period_ms = 10.0;
        req.measurement_timing.duration_ms = 30.0;
    }
    return req;
}

const sep::SepMessage* find_sent(const testgen::MockRuntime& rt, const char* type) {
    for (const auto& [to, msg] : rt.sep_sent)
        if (std::string(sep::message_type(msg)) == type) return &msg;
    return nullptr;
}

} // namespace

TEST_CASE("schedule_sensing: harmonic periods share one allocation") {
    SchedulerState sched;
    auto result = schedule_sensing(sched, {{1, 10, 28, 64}, {2, 20, 28, 64}});
    auto alloc = std::get<SensingAllocation>(result);
    CHECK(alloc.period_slots == 10);
    CHECK(alloc.symbols == 28);
    CHECK(alloc.span_slots == 2);
    CHECK(alloc.aggregated_cost <= alloc.individual_cost_sum);
}

TEST_CASE("schedule_sensing: gcd aggregation with over-delivery ratios") {
    SchedulerState sched;
    auto result = schedule_sensing(sched, {{1, 10, 28, 64}, {2, 15, 28, 64}});
    auto alloc = std::get<SensingAllocation>(result);
    CHECK(alloc.period_slots == 5);
    REQUIRE(alloc.over_delivery.size() == 2);
    CHECK(alloc.over_delivery[0].second == doctest::Approx(2.0));
    CHECK(alloc.over_delivery[1].second == doctest::Approx(3.0));
}

TEST_CASE("schedule_sensing: burst larger than the DL region is refused") {
    SchedulerState sched; // default DDDDU: 4 DL slots = 56 symbols
    auto result = schedule_sensing(sched, {{1, 10, 64, 64}});
    auto cause = std::get<sep::CauseDiagnostics>(result);
    CHECK(cause.cause == sep::Cause::ResourceUnavailable);
}

TEST_CASE("schedule_sensing: period must align with the TDD pattern") {
    SchedulerState sched;
    auto result = schedule_sensing(sched, {{1, 7, 28, 64}});
    CHECK(std::get<sep::CauseDiagnostics>(result).cause == sep::Cause::InvalidConfig);
}

TEST_CASE("ru_capability_check: role and mode rules") {
    SUBCASE("sniffer as bistatic Rx: ok, no self-interference") {
        auto r = ru_capability_check(sniffer_ru(), sep::TrpRole::Rx, sep::SensingMode::Bistatic,
                                     sep::SignalSource::PreconfiguredReference);
        auto grant = std::get<CapabilityGrant>(r);
        CHECK_FALSE(grant.si_residual_db.has_value());
        CHECK_FALSE(grant.pause_comm);
    }
    SUBCASE("sniffer as Tx: unsupported") {
        auto r = ru_capability_check(sniffer_ru(), sep::TrpRole::Tx, sep::SensingMode::Bistatic,
                                     sep::SignalSource::PreconfiguredReference);
        CHECK(std::get<sep::CauseDiagnostics>(r).cause == sep::Cause::UnsupportedMode);
    }
    SUBCASE("legacy TDD monostatic: unsupported") {
        auto r = ru_capability_check(legacy_tdd_ru(true), sep::TrpRole::TxRx,
                                     sep::SensingMode::Monostatic,
                                     sep::SignalSource::PreconfiguredReference);
        CHECK(std::get<sep::CauseDiagnostics>(r).cause == sep::Cause::UnsupportedMode);
    }
    SUBCASE("SIC-capable monostatic: residual equals the budget") {
        auto r = ru_capability_check(sic_tdd_ru(100.0), sep::TrpRole::TxRx,
                                     sep::SensingMode::Monostatic,
                                     sep::SignalSource::PreconfiguredReference);
        auto grant = std::get<CapabilityGrant>(r);
        REQUIRE(grant.si_residual_db.has_value());
        CHECK(*grant.si_residual_db == doctest::Approx(100.0));
    }
    SUBCASE("legacy bistatic Rx pauses communication") {
        auto r = ru_capability_check(legacy_tdd_ru(true), sep::TrpRole::Rx, sep::SensingMode::Bistatic,
                                     sep::SignalSource::PreconfiguredReference);
        auto grant = std::get<CapabilityGrant>(r);
        CHECK(grant.pause_comm);
        CHECK_FALSE(grant.si_residual_db.has_value());
    }
    SUBCASE("legacy bistatic Rx without pause capability is unsupported") {
        auto r = ru_capability_check(legacy_tdd_ru(false), sep::TrpRole::Rx, sep::SensingMode::Bistatic,
                                     sep::SignalSource::PreconfiguredReference);
        CHECK(std::get<sep::CauseDiagnostics>(r).cause == sep::Cause::UnsupportedMode);
    }
}

TEST_CASE("acquire_tx_reference: source rules") {
    GridMeta meta{3.5e9, 30e3, 1.0 / 30e3};
    SUBCASE("preconfigured always succeeds") {
        auto r = acquire_tx_reference(PreconfiguredSource{7}, 16, 8, meta);
        CHECK(std::holds_alternative<ComplexGrid>(r));
    }
    SUBCASE("backhaul slower than the buffer window fails") {
        auto r = acquire_tx_reference(BackhaulSource{7, 12.0, 10.0}, 16, 8, meta);
        CHECK(std::get<sep::CauseDiagnostics>(r).cause == sep::Cause::BackhaulTooSlow);
    }
    SUBCASE("backhaul within the window succeeds") {
        auto r = acquire_tx_reference(BackhaulSource{7, 5.0, 10.0}, 16, 8, meta);
        CHECK(std::holds_alternative<ComplexGrid>(r));
    }
    SUBCASE("over the air above MCS threshold succeeds") {
        auto r = acquire_tx_reference(OverTheAirSource{7, 15.0, 12.0, true}, 16, 8, meta);
        CHECK(std::holds_alternative<ComplexGrid>(r));
    }
    SUBCASE("over the air below threshold fails") {
        auto r = acquire_tx_reference(OverTheAirSource{7, 10.0, 12.0, true}, 16, 8, meta);
        CHECK(std::holds_alternative<sep::CauseDiagnostics>(r));
    }
    SUBCASE("sub-band precoding defeats over-the-air acquisition") {
        auto r = acquire_tx_reference(OverTheAirSource{7, 20.0, 12.0, false}, 16, 8, meta);
        CHECK(std::holds_alternative<sep::CauseDiagnostics>(r));
    }
    SUBCASE("reference grids have unit magnitude") {
        auto r = acquire_tx_reference(PreconfiguredSource{9}, 8, 4, meta);
        for (const auto& v : std::get<ComplexGrid>(r).data())
            CHECK(std::abs(v) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("bistatic handshake timing rule") {
    CHECK(bistatic_handshake_ok(10.0, 3.0));
    CHECK_FALSE(bistatic_handshake_ok(4.0, 3.0));
}

TEST_CASE("gnb node: one-shot monostatic measurement returns results in the response") {
    testgen::MockRuntime rt;
    scene::GroundObject car;
    car.id = "car";
    double path_bin = kSpeedOfLight / (64.0 * 30e3);
    car.position = {3.0 * path_bin / 2.0, 0, 0}; // delay bin 3, on-grid
    car.velocity = {0, 0, 0};
    car.is_static = true;
    car.reflection_amplitude = 1e4;
    rt.scene0.objects.push_back(car);

    GnbParams params;
    GnbNode node("gnb-1", {make_unit("gnb-1", "trp-1", {0, 0, 0}, sic_tdd_ru(200.0))},
                 SchedulerState{}, params, rt);

    node.handle_sep(monostatic_request(11, "trp-1", true));
    CHECK(find_sent(rt, "SensingResponse") == nullptr); // response waits for the burst

    for (rt.slot = 1; rt.slot <= 12; ++rt.slot) node.on_slot();

    const auto* resp_msg = find_sent(rt, "SensingResponse");
    REQUIRE(resp_msg != nullptr);
    const auto& resp = std::get<sep::SensingResponse>(*resp_msg);
    REQUIRE(resp.trp_result_list.has_value());
    REQUIRE(resp.trp_result_list->size() == 1);
    const auto& payload = resp.trp_result_list->front().payload;
    REQUIRE(payload.depth == l1::Depth::Targets2D);
    REQUIRE(payload.targets2d.size() == 1);
    CHECK(payload.targets2d[0].path_length_m == doctest::Approx(3.0 * path_bin).epsilon(1e-9));
}

TEST_CASE("gnb node: sniffer named as Tx is rejected with UnsupportedMode") {
    testgen::MockRuntime rt;
    GnbNode node("gnb-1", {make_unit("gnb-1", "trp-s", {0, 0, 0}, sniffer_ru())}, SchedulerState{},
                 GnbParams{}, rt);
    auto req = monostatic_request(5, "trp-s", true);
    req.trp_config_list[0].role = sep::TrpRole::Tx;
    req.trp_config_list[0].processing.depth = l1::Depth::ChannelIQ;
    req.trp_config_list[0].mode = sep::SensingMode::Bistatic;
    node.handle_sep(req);
    const auto* fail = find_sent(rt, "SensingFailure");
    REQUIRE(fail != nullptr);
    CHECK(std::get<sep::SensingFailure>(*fail).cause.cause == sep::Cause::UnsupportedMode);
}

TEST_CASE("gnb node: burst that cannot fit the DL region is rejected") {
    testgen::MockRuntime rt;
    GnbNode node("gnb-1", {make_unit("gnb-1", "trp-1", {0, 0, 0}, sic_tdd_ru())}, SchedulerState{},
                 GnbParams{}, rt);
    auto req = monostatic_request(6, "trp-1", true);
    req.trp_config_list[0].resource.burst_symbols = 64; // DDDDU holds only 56
    node.handle_sep(req);
    const auto* fail = find_sent(rt, "SensingFailure");
    REQUIRE(fail != nullptr);
    CHECK(std::get<sep::SensingFailure>(*fail).cause.cause == sep::Cause::ResourceUnavailable);
}

TEST_CASE("gnb node: duplicate measurement id rejected") {
    testgen::MockRuntime rt;
    GnbNode node("gnb-1", {make_unit("gnb-1", "trp-1", {0, 0, 0}, sic_tdd_ru())}, SchedulerState{},
                 GnbParams{}, rt);
    node.handle_sep(monostatic_request(7, "trp-1", false));
    REQUIRE(find_sent(rt, "SensingResponse") != nullptr);
    rt.sep_sent.clear();
    node.handle_sep(monostatic_request(7, "trp-1", false));
    const auto* fail = find_sent(rt, "SensingFailure");
    REQUIRE(fail != nullptr);
    CHECK(std::get<sep::SensingFailure>(*fail).cause.cause == sep::Cause::DuplicateMeasurementId);
}

TEST_CASE("gnb node: sensing TX bursts land only in DL slots") {
    testgen::MockRuntime rt;
    scene::GroundObject obj;
    obj.id = "o";
    obj.position = {500, 0, 0};
    obj.is_static = true;
    rt.scene0.objects.push_back(obj);
    GnbNode node("gnb-1", {make_unit("gnb-1", "trp-1", {0, 0, 0}, sic_tdd_ru())}, SchedulerState{},
                 GnbParams{}, rt);
    node.handle_sep(monostatic_request(8, "trp-1", false));
    for (rt.slot = 1; rt.slot <= 80; ++rt.slot) node.on_slot();

    int tx_bursts = 0;
    for (const auto& ev : rt.trace_events) {
        if (ev.value("ev", "") == "burst_rx") {
            // Monostatic TxRx entries transmit in the same slots they receive.
            std::int64_t slot = ev["slot"].get<std::int64_t>();
            CHECK(SchedulerState{}.pattern.is_dl(slot));
            ++tx_bursts;
        }
    }
    CHECK(tx_bursts > 0);
}

TEST_CASE("gnb node: periodic task reports and completes at duration") {
    testgen::MockRuntime rt;
    scene::GroundObject obj;
    obj.id = "o";
    obj.position = {400, 0, 0};
    obj.is_static = true;
    obj.reflection_amplitude = 1e4;
    rt.scene0.objects.push_back(obj);
    GnbNode node("gnb-1", {make_unit("gnb-1", "trp-1", {0, 0, 0}, sic_tdd_ru())}, SchedulerState{},
                 GnbParams{}, rt);

    auto req = monostatic_request(9, "trp-1", false);
    req.measurement_timing.report_period_ms = 10.0; // ~22 slots
    req.measurement_timing.duration_ms = 30.0;
    node.handle_sep(req);
    for (rt.slot = 1; rt.slot <= 100; ++rt.slot) node.on_slot();

    int reports = 0;
    for (const auto& [to, msg] : rt.sep_sent)
        if (std::string(sep::message_type(msg)) == "SensingReport") ++reports;
    CHECK(reports == 3);
    bool done_traced = false;
    for (const auto& ev : rt.trace_events)
        if (ev.value("ev", "") == "measurement_done") done_traced = true;
    CHECK(done_traced);
}

TEST_CASE("gnb node: injected RU failure emits one SensingFailureIndication") {
    testgen::MockRuntime rt;
    GnbParams params;
    params.ru_failure_at_s[std::string("trp-1")] = 0.01;
    GnbNode node("gnb-1", {make_unit("gnb-1", "trp-1", {0, 0, 0}, sic_tdd_ru())}, SchedulerState{},
                 params, rt);
    node.handle_sep(monostatic_request(10, "trp-1", false));
    for (rt.slot = 1; rt.slot <= 120; ++rt.slot) node.on_slot();

    int indications = 0;
    for (const auto& [to, msg] : rt.sep_sent)
        if (std::string(sep::message_type(msg)) == "SensingFailureIndication") ++indications;
    CHECK(indications == 1);
}

TEST_CASE("gnb node: quasi-monostatic sniffer equals monostatic with large SIC") {
    // A sniffer co-located with the transmit TRP sees the same geometry as a
    // monostatic TxRx with effectively infinite self-interference suppression.
    double path_bin = kSpeedOfLight / (64.0 * 30e3);
    scene::GroundObject obj;
    obj.id = "o";
    obj.position = {5.0 * path_bin / 2.0, 0, 0};
    obj.is_static = true;
    obj.reflection_amplitude = 2e4;

    auto run_case = [&](bool sniffer) {
        testgen::MockRuntime rt;
        rt.scene0.objects.push_back(obj);
        std::vector<TrpUnit> units;
        sep::SensingRequest req;
        if (sniffer) {
            units.push_back(make_unit("gnb-1", "trp-tx", {0, 0, 0}, sic_tdd_ru(200.0)));
            units.push_back(make_unit("gnb-1", "trp-s", {0, 0, 0}, sniffer_ru()));
            req = monostatic_request(21, "trp-s", true);
            req.trp_config_list[0].role = sep::TrpRole::Rx;
            req.trp_config_list[0].mode = sep::SensingMode::Bistatic;
            req.trp_config_list[0].peer = sep::PeerTrp{"gnb-1", "trp-tx", {0, 0, 0}};
        } else {
            units.push_back(make_unit("gnb-1", "trp-1", {0, 0, 0}, sic_tdd_ru(300.0)));
            req = monostatic_request(21, "trp-1", true);
        }
        GnbNode node("gnb-1", units, SchedulerState{}, GnbParams{}, rt);
        node.handle_sep(req);
        for (rt.slot = 1; rt.slot <= 12; ++rt.slot) node.on_slot();
        const auto* resp = find_sent(rt, "SensingResponse");
        REQUIRE(resp != nullptr);
        const auto& r = std::get<sep::SensingResponse>(*resp);
        REQUIRE(r.trp_result_list.has_value());
        REQUIRE(!r.trp_result_list->empty());
        return r.trp_result_list->front().payload.targets2d;
    };

    auto mono = run_case(false);
    auto quasi = run_case(true);
    REQUIRE(mono.size() == 1);
    REQUIRE(quasi.size() == 1);
    CHECK(mono[0].path_length_m == doctest::Approx(quasi[0].path_length_m).epsilon(1e-9));
    CHECK(mono[0].closing_speed_m_per_s == doctest::Approx(quasi[0].closing_speed_m_per_s).epsilon(1e-9));
}

TEST_CASE("gnb node: SI residual detected without clutter removal, suppressed with it") {
    double path_bin = kSpeedOfLight / (64.0 * 30e3);
    double speed_bin = kSpeedOfLight / (32.0 * (1.0 / 30e3) * 3.5e9);
    scene::GroundObject mover;
    mover.id = "m";
    mover.position = {4.0 * path_bin / 2.0, 0, 0};
    mover.velocity = {-3.0 * speed_bin / 2.0, 0, 0};
    mover.reflection_amplitude = 1e4;

    auto run_case = [&](bool clutter_removal) {
        testgen::MockRuntime rt;
        rt.scene0.objects.push_back(mover);
        GnbNode node("gnb-1", {make_unit("gnb-1", "trp-1", {0, 0, 0}, sic_tdd_ru(60.0))},
                     SchedulerState{}, GnbParams{}, rt);
        auto req = monostatic_request(31, "trp-1", true);
        req.trp_config_list[0].resource.burst_symbols = 32;
        req.trp_config_list[0].processing.clutter_removal = clutter_removal;
        req.trp_config_list[0].processing.detect.max_targets = 4;
        node.handle_sep(req);
        for (rt.slot = 1; rt.slot <= 12; ++rt.slot) node.on_slot();
        const auto* resp = find_sent(rt, "SensingResponse");
        REQUIRE(resp != nullptr);
        return std::get<sep::SensingResponse>(*resp).trp_result_list->front().payload.targets2d;
    };

    auto with_si = run_case(false);
    bool spurious_zero_bin = false;
    for (const auto& t : with_si)
        if (t.path_length_m < 0.5 * path_bin && std::abs(t.closing_speed_m_per_s) < 0.5 * speed_bin)
            spurious_zero_bin = true;
    CHECK(spurious_zero_bin);

    auto cleaned = run_case(true);
    for (const auto& t : cleaned) {
        bool zero_bin =
            t.path_length_m < 0.5 * path_bin && std::abs(t.closing_speed_m_per_s) < 0.5 * speed_bin;
        CHECK_FALSE(zero_bin);
    }
    // The mover survives clutter removal.
    bool mover_found = false;
    for (const auto& t : cleaned)
        if (std::abs(t.path_length_m - 4.0 * path_bin) < 0.5 * path_bin) mover_found = true;
    CHECK(mover_found);
}

TEST_CASE("gnb node: legacy bistatic RX meters pause overhead") {
    testgen::MockRuntime rt;
    scene::GroundObject obj;
    obj.id = "o";
    obj.position = {300, 100, 0};
    obj.is_static = true;
    obj.reflection_amplitude = 1e5;
    rt.scene0.objects.push_back(obj);

    GnbNode node("gnb-1",
                 {make_unit("gnb-1", "trp-rx", {200, 0, 0}, legacy_tdd_ru(true))},
                 SchedulerState{}, GnbParams{}, rt);
    auto req = monostatic_request(41, "trp-rx", false);
    req.trp_config_list[0].role = sep::TrpRole::Rx;
    req.trp_config_list[0].mode = sep::SensingMode::Bistatic;
    req.trp_config_list[0].peer = sep::PeerTrp{"gnb-0", "trp-tx", {0, 0, 0}};
    node.handle_sep(req);
    for (rt.slot = 1; rt.slot <= 80; ++rt.slot) node.on_slot();
    CHECK(node.pause_overhead_slots() > 0);
}
