#include "isacsim/gnb.hpp"

#include <algorithm>
#include <numeric>

#include "isacsim/json_util.hpp"

namespace isacsim::gnb {

using jsonio::json;

std::uint32_t TddPattern::longest_dl_run() const {
    if (std::all_of(slots_dl.begin(), slots_dl.end(), [](bool b) { return b; }))
        return std::numeric_limits<std::uint32_t>::max();
    std::uint32_t best = 0, run = 0;
    for (bool dl : slots_dl) {
        run = dl ? run + 1 : 0;
        best = std::max(best, run);
    }
    return best;
}

std::int32_t TddPattern::first_dl_run(std::uint32_t span) const {
    if (std::all_of(slots_dl.begin(), slots_dl.end(), [](bool b) { return b; })) return 0;
    std::uint32_t run = 0;
    for (std::size_t i = 0; i < slots_dl.size(); ++i) {
        run = slots_dl[i] ? run + 1 : 0;
        if (run >= span) return static_cast<std::int32_t>(i + 1 - span);
    }
    return -1;
}

sep::TrpInfo make_trp_info(const std::string& gnb_id, const std::string& trp_id,
                           const scene::Vec3& position, const RuModel& ru,
                           double coverage_radius_m, double beamwidth_rad) {
    sep::TrpInfo info;
    info.trp_id = trp_id;
    info.gnb_id = gnb_id;
    info.position = position;
    info.duplex = ru.kind;
    if (ru.kind == sep::RuKind::Sniffer) {
        info.roles = {sep::TrpRole::Rx};
    } else {
        info.roles = {sep::TrpRole::Tx, sep::TrpRole::Rx};
        if (!ru.legacy && ru.sic.total_db() > 0.0) info.roles.push_back(sep::TrpRole::TxRx);
    }
    info.beam_count = ru.beams_supported;
    info.beamwidth_rad = beamwidth_rad;
    info.sic_total_db = ru.sic.total_db();
    info.coverage_radius_m = coverage_radius_m;
    return info;
}

std::variant<SensingAllocation, sep::CauseDiagnostics>
schedule_sensing(const SchedulerState& sched, const std::vector<ScheduleRequest>& requests) {
    if (requests.empty())
        return sep::CauseDiagnostics{sep::Cause::InvalidConfig, "no sensing requests to schedule"};

    const std::size_t pattern_period = sched.pattern.period();
    std::uint32_t period_gcd = 0;
    std::uint32_t symbols = 0;
    std::uint32_t subcarriers = 0;
    double individual_cost = 0.0;
    for (const auto& r : requests) {
        if (r.period_slots == 0)
            return sep::CauseDiagnostics{sep::Cause::InvalidConfig, "zero request period"};
        if (r.period_slots % pattern_period != 0)
            return sep::CauseDiagnostics{sep::Cause::InvalidConfig,
                                         "request period must align with the TDD pattern period"};
        period_gcd = period_gcd ? std::gcd(period_gcd, r.period_slots) : r.period_slots;
        symbols = std::max(symbols, r.symbols);
        subcarriers = std::max(subcarriers, r.subcarriers);
        individual_cost += static_cast<double>(r.symbols) * static_cast<double>(r.subcarriers);
    }

    const std::uint32_t span = (symbols + kSymbolsPerSlot - 1) / kSymbolsPerSlot;
    std::uint32_t run = sched.pattern.longest_dl_run();
    if (span > run)
        return sep::CauseDiagnostics{
            sep::Cause::ResourceUnavailable,
            "burst of " + std::to_string(symbols) + " symbols does not fit a contiguous DL region"};
    if (span > period_gcd)
        return sep::CauseDiagnostics{sep::Cause::ResourceUnavailable,
                                     "aggregated period shorter than the burst span"};

    SensingAllocation alloc;
    alloc.period_slots = period_gcd;
    alloc.offset_slot = static_cast<std::uint32_t>(sched.pattern.first_dl_run(span));
    alloc.span_slots = span;
    alloc.symbols = symbols;
    alloc.subcarriers = subcarriers;
    alloc.aggregated_cost = static_cast<double>(symbols) * static_cast<double>(subcarriers);
    alloc.individual_cost_sum = individual_cost;
    for (const auto& r : requests)
        alloc.over_delivery.emplace_back(r.semf_id,
                                         static_cast<double>(r.period_slots) / period_gcd);
    // One shared allocation never costs more per slot than the individual
    // allocations stacked in the same slot.
    if (alloc.aggregated_cost > alloc.individual_cost_sum + 1e-9)
        throw Error("gnb.scheduler", "aggregation produced a larger footprint than the sum");
    return alloc;
}

std::variant<CapabilityGrant, sep::CauseDiagnostics>
ru_capability_check(const RuModel& ru, sep::TrpRole role, sep::SensingMode mode,
                    sep::SignalSource signal) {
    (void)signal;
    if (ru.kind == sep::RuKind::Sniffer && role != sep::TrpRole::Rx)
        return sep::CauseDiagnostics{sep::Cause::UnsupportedMode, "sniffer RU has no TX path"};

    if (mode == sep::SensingMode::Monostatic) {
        if (role != sep::TrpRole::TxRx)
            return sep::CauseDiagnostics{sep::Cause::UnsupportedMode,
                                         "monostatic sensing uses a TxRx TRP"};
        if (ru.legacy || ru.sic.total_db() <= 0.0)
            return sep::CauseDiagnostics{sep::Cause::UnsupportedMode,
                                         "no self-interference suppression available"};
        CapabilityGrant grant;
        grant.si_residual_db = ru.sic.total_db();
        return grant;
    }

    // Bistatic.
    if (role == sep::TrpRole::Tx) {
        return CapabilityGrant{}; // transmit only, no own-RX concerns
    }
    if (role == sep::TrpRole::TxRx)
        return sep::CauseDiagnostics{sep::Cause::UnsupportedMode,
                                     "bistatic entries use dedicated Tx or Rx roles"};
    if (ru.kind == sep::RuKind::Sniffer) {
        return CapabilityGrant{}; // no TX path, interference cancellation not required
    }
    if (ru.legacy || ru.sic.total_db() <= 0.0) {
        if (!ru.can_pause_comm)
            return sep::CauseDiagnostics{sep::Cause::UnsupportedMode,
                                         "legacy RU cannot pause communication for sensing RX"};
        CapabilityGrant grant;
        grant.pause_comm = true; // own TX silent while receiving
        return grant;
    }
    // SIC-capable RU keeps communicating; the own TX leaks at the residual level.
    CapabilityGrant grant;
    grant.si_residual_db = ru.sic.total_db();
    return grant;
}

namespace {

ComplexGrid unit_magnitude_grid(std::size_t subcarriers, std::size_t symbols, const GridMeta& meta,
                                std::uint64_t seed) {
    ComplexGrid g(subcarriers, symbols, meta);
    Rng rng(seed);
    for (auto& v : g.data()) v = std::polar(1.0, rng.uniform(0.0, kTwoPi));
    return g;
}

} // namespace

std::variant<ComplexGrid, sep::CauseDiagnostics>
acquire_tx_reference(const ReferenceSource& source, std::size_t subcarriers, std::size_t symbols,
                     const GridMeta& meta) {
    if (const auto* pre = std::get_if<PreconfiguredSource>(&source)) {
        // The configuration completely defines the sensing signal.
        return unit_magnitude_grid(subcarriers, symbols, meta, pre->seed);
    }
    if (const auto* bh = std::get_if<BackhaulSource>(&source)) {
        if (bh->latency_ms > bh->buffer_ms)
            return sep::CauseDiagnostics{sep::Cause::BackhaulTooSlow,
                                         "backhaul latency exceeds the RX IQ buffer window"};
        return unit_magnitude_grid(subcarriers, symbols, meta, bh->seed);
    }
    const auto& ota = std::get<OverTheAirSource>(source);
    if (!ota.wideband_precoding)
        return sep::CauseDiagnostics{sep::Cause::ResourceUnavailable,
                                     "per-sub-band precoding cannot be inferred over the air"};
    if (ota.sinr_db < ota.mcs_threshold_db)
        return sep::CauseDiagnostics{sep::Cause::ResourceUnavailable,
                                     "over-the-air decode failed: SINR below MCS threshold"};
    return unit_magnitude_grid(subcarriers, symbols, meta, ota.seed);
}

// ---------------------------------------------------------------------------
// GnbNode
// ---------------------------------------------------------------------------

GnbNode::GnbNode(std::string gnb_id, std::vector<TrpUnit> trps, SchedulerState scheduler,
                 GnbParams params, NodeRuntime& runtime)
    : gnb_id_(std::move(gnb_id)), trps_(std::move(trps)), scheduler_(std::move(scheduler)),
      params_(std::move(params)), rt_(runtime) {
    for (const auto& t : trps_) t.ru.validate();
}

const TrpUnit* GnbNode::find_trp(const std::string& trp_id) const {
    for (const auto& t : trps_)
        if (t.info.trp_id == trp_id) return &t;
    return nullptr;
}

void GnbNode::emit(const sep::FsmOutput& out) {
    for (const auto& msg : out.send) rt_.send_sep("semf", msg);
    for (const auto& a : out.actions) {
        if (a.kind == "protocol_violation")
            rt_.trace({{"ev", "protocol_violation"}, {"node", gnb_id_}, {"why", a.detail}});
    }
}

std::optional<sep::CauseDiagnostics>
GnbNode::validate_request(const sep::SensingRequest& req,
                          std::map<std::string, CapabilityGrant>& grants) {
    if (params_.reject_requests)
        return sep::CauseDiagnostics{sep::Cause::ResourceUnavailable, "fault injection"};
    if (req.trp_config_list.empty())
        return sep::CauseDiagnostics{sep::Cause::InvalidConfig, "empty TRP config list"};

    for (const auto& entry : req.trp_config_list) {
        const TrpUnit* trp = find_trp(entry.trp_id);
        if (!trp)
            return sep::CauseDiagnostics{sep::Cause::UnknownTrp, "no TRP " + entry.trp_id};
        if (entry.role == sep::TrpRole::Tx && entry.processing.depth != l1::Depth::ChannelIQ)
            return sep::CauseDiagnostics{sep::Cause::InvalidConfig,
                                         "Tx-only entry cannot request processed results"};
        if (entry.role != sep::TrpRole::Tx && entry.beams.empty())
            return sep::CauseDiagnostics{sep::Cause::InvalidConfig, "RX entry without beams"};
        if (entry.beams.size() > trp->ru.beams_supported)
            return sep::CauseDiagnostics{sep::Cause::InvalidConfig, "beam sweep exceeds RU capability"};
        if (entry.mode == sep::SensingMode::Bistatic && entry.role == sep::TrpRole::Rx && !entry.peer)
            return sep::CauseDiagnostics{sep::Cause::InvalidConfig,
                                         "bistatic RX entry without transmit-end reference"};
        if (entry.resource.burst_symbols < 2 || entry.resource.subcarriers < 2)
            return sep::CauseDiagnostics{sep::Cause::InvalidConfig, "degenerate burst dimensions"};

        auto cap = ru_capability_check(trp->ru, entry.role, entry.mode, entry.resource.signal);
        if (const auto* cause = std::get_if<sep::CauseDiagnostics>(&cap)) return *cause;
        grants[entry.trp_id] = std::get<CapabilityGrant>(cap);

        if (entry.role != sep::TrpRole::Tx) {
            try {
                entry.processing.validate(entry.resource.subcarriers, entry.resource.burst_symbols);
            } catch (const Error& e) {
                return sep::CauseDiagnostics{sep::Cause::InvalidConfig, e.what()};
            }
        }
        if (entry.processing.depth == l1::Depth::Objects && entry.mode == sep::SensingMode::Bistatic)
            return sep::CauseDiagnostics{sep::Cause::InvalidConfig,
                                         "bistatic legs report point clouds; objects are fused centrally"};
    }

    // Trial aggregation including the new request.
    std::vector<ScheduleRequest> reqs;
    for (const auto& [id, task] : tasks_) {
        if (task.fsm.phase() != sep::Phase::Active) continue;
        for (const auto& e : task.entries)
            reqs.push_back({id, e.resource.period_slots, e.resource.burst_symbols, e.resource.subcarriers});
    }
    for (const auto& e : req.trp_config_list)
        reqs.push_back({req.semf_measurement_id, e.resource.period_slots, e.resource.burst_symbols,
                        e.resource.subcarriers});
    auto trial = schedule_sensing(scheduler_, reqs);
    if (const auto* cause = std::get_if<sep::CauseDiagnostics>(&trial)) return *cause;
    return std::nullopt;
}

bool GnbNode::recompute_allocation() {
    std::vector<ScheduleRequest> reqs;
    for (const auto& [id, task] : tasks_) {
        if (task.fsm.phase() != sep::Phase::Active) continue;
        for (const auto& e : task.entries)
            reqs.push_back({id, e.resource.period_slots, e.resource.burst_symbols, e.resource.subcarriers});
    }
    if (reqs.empty()) {
        allocation_.reset();
        return true;
    }
    auto result = schedule_sensing(scheduler_, reqs);
    if (std::holds_alternative<sep::CauseDiagnostics>(result)) return false;
    allocation_ = std::get<SensingAllocation>(result);
    json over = json::array();
    for (const auto& [id, ratio] : allocation_->over_delivery) over.push_back({{"semf_id", id}, {"ratio", ratio}});
    rt_.trace({{"ev", "allocation"},
               {"gnb", gnb_id_},
               {"period_slots", allocation_->period_slots},
               {"offset_slot", allocation_->offset_slot},
               {"span_slots", allocation_->span_slots},
               {"symbols", allocation_->symbols},
               {"subcarriers", allocation_->subcarriers},
               {"aggregated_cost", allocation_->aggregated_cost},
               {"individual_cost_sum", allocation_->individual_cost_sum},
               {"over_delivery", std::move(over)}});
    return true;
}

void GnbNode::handle_sep(const sep::SepMessage& msg) {
    if (const auto* info_req = std::get_if<sep::TrpInformationRequest>(&msg)) {
        std::vector<sep::TrpInfo> infos;
        for (const auto& t : trps_) infos.push_back(t.info);
        rt_.send_sep("semf", sep::trp_information_procedure(infos, *info_req));
        return;
    }
    if (const auto* req = std::get_if<sep::SensingRequest>(&msg)) {
        if (tasks_.count(req->semf_measurement_id)) {
            sep::SensingFailure fail;
            fail.semf_measurement_id = req->semf_measurement_id;
            fail.cause = {sep::Cause::DuplicateMeasurementId, "measurement id already active"};
            rt_.trace({{"ev", "request_verdict"},
                       {"gnb", gnb_id_},
                       {"semf_id", req->semf_measurement_id},
                       {"accepted", false},
                       {"cause", to_string(fail.cause.cause)}});
            rt_.send_sep("semf", fail);
            return;
        }

        std::map<std::string, CapabilityGrant> grants;
        auto cause = validate_request(*req, grants);

        Task task;
        task.semf_id = req->semf_measurement_id;
        task.timing = req->measurement_timing;
        task.entries = req->trp_config_list;
        task.grants = std::move(grants);

        sep::RanMeasurementFsm::Event ev;
        ev.kind = sep::RanMeasurementFsm::Event::Kind::Request;
        ev.semf_id = req->semf_measurement_id;
        ev.timing = req->measurement_timing;
        ev.validation_failure = cause;
        ev.reports_enabled = std::any_of(req->trp_config_list.begin(), req->trp_config_list.end(),
                                         [](const auto& e) { return e.role != sep::TrpRole::Tx; });
        if (!cause) ev.assigned_ran_id = next_ran_id_++;

        rt_.trace({{"ev", "request_verdict"},
                   {"gnb", gnb_id_},
                   {"semf_id", req->semf_measurement_id},
                   {"accepted", !cause.has_value()},
                   {"cause", cause ? json(to_string(cause->cause)) : json(nullptr)},
                   {"ran_id", cause ? json(nullptr) : json(ev.assigned_ran_id)}});

        auto out = task.fsm.step(ev);
        if (cause) {
            emit(out);
            return; // rejected as a whole; nothing retained
        }

        task.ran_id = task.fsm.ran_id();
        task.start_slot = rt_.now_slot() + 1 + rt_.slots_for_ms(task.timing.start_delay_ms);
        if (!task.timing.one_shot) {
            task.report_period_slots = rt_.slots_for_ms(task.timing.report_period_ms);
            task.next_report_slot = task.start_slot + task.report_period_slots;
            // The duration covers a whole number of reporting periods; the
            // final report belongs inside the measurement.
            auto periods = static_cast<std::int64_t>(task.timing.duration_ms /
                                                     task.timing.report_period_ms + 1e-9);
            task.duration_end_slot = task.start_slot + periods * task.report_period_slots;
        }
        task.dynamic_signal =
            std::any_of(task.entries.begin(), task.entries.end(), [](const auto& e) {
                return e.mode == sep::SensingMode::Bistatic &&
                       e.resource.signal != sep::SignalSource::PreconfiguredReference;
            });
        tasks_.emplace(task.semf_id, std::move(task));
        recompute_allocation();
        emit(out);
        return;
    }
    if (const auto* abort = std::get_if<sep::SensingAbort>(&msg)) {
        auto it = tasks_.find(abort->semf_measurement_id);
        if (it == tasks_.end() || it->second.ran_id != abort->ran_measurement_id) {
            rt_.trace({{"ev", "protocol_violation"},
                       {"node", gnb_id_},
                       {"why", "abort for unknown measurement ids"}});
            return;
        }
        sep::RanMeasurementFsm::Event ev;
        ev.kind = sep::RanMeasurementFsm::Event::Kind::AbortReceived;
        emit(it->second.fsm.step(ev));
        recompute_allocation();
        return;
    }
    if (const auto* update = std::get_if<sep::SensingUpdate>(&msg)) {
        auto it = tasks_.find(update->semf_measurement_id);
        if (it == tasks_.end() || it->second.ran_id != update->ran_measurement_id) {
            rt_.trace({{"ev", "protocol_violation"},
                       {"node", gnb_id_},
                       {"why", "update for unknown measurement ids"}});
            return;
        }
        Task& task = it->second;
        // Only the burst period and the beam sets may change; anything else
        // makes the update invalid and it is ignored.
        bool valid = update->trp_config_list.size() == task.entries.size();
        for (std::size_t i = 0; valid && i < task.entries.size(); ++i) {
            auto probe = update->trp_config_list[i];
            probe.beams = task.entries[i].beams;
            probe.resource.period_slots = task.entries[i].resource.period_slots;
            valid = sep::encode(sep::SensingRequest{1, {probe}, {}}) ==
                    sep::encode(sep::SensingRequest{1, {task.entries[i]}, {}});
        }
        sep::RanMeasurementFsm::Event ev;
        ev.kind = sep::RanMeasurementFsm::Event::Kind::UpdateReceived;
        ev.update_valid = valid;
        ev.new_timing = task.timing;
        auto out = task.fsm.step(ev);
        if (valid) {
            for (std::size_t i = 0; i < task.entries.size(); ++i) {
                task.entries[i].beams = update->trp_config_list[i].beams;
                task.entries[i].resource.period_slots = update->trp_config_list[i].resource.period_slots;
            }
            recompute_allocation();
            rt_.trace({{"ev", "update_applied"}, {"gnb", gnb_id_}, {"semf_id", task.semf_id}});
        }
        emit(out);
        return;
    }
    rt_.trace({{"ev", "protocol_violation"},
               {"node", gnb_id_},
               {"why", std::string("unexpected message ") + sep::message_type(msg)}});
}

void GnbNode::handle_xn(const json& payload) {
    if (payload.value("type", "") != "sensing_handshake") return;
    std::string from_gnb = payload.value("from_gnb", "");
    std::int64_t burst_slot = payload.at("burst_slot").get<std::int64_t>();
    // Arm the RX window of every active task receiving from that transmitter.
    for (auto& [id, task] : tasks_) {
        if (task.fsm.phase() != sep::Phase::Active || !task.dynamic_signal) continue;
        bool receives_from = std::any_of(task.entries.begin(), task.entries.end(), [&](const auto& e) {
            return e.mode == sep::SensingMode::Bistatic && e.role == sep::TrpRole::Rx && e.peer &&
                   e.peer->gnb_id == from_gnb;
        });
        if (!receives_from) continue;
        if (rt_.now_slot() <= burst_slot) {
            task.armed_rx_slots.insert(burst_slot);
            rt_.trace({{"ev", "handshake_rx"},
                       {"gnb", gnb_id_},
                       {"semf_id", id},
                       {"burst_slot", burst_slot}});
        } else {
            rt_.trace({{"ev", "handshake_late"},
                       {"gnb", gnb_id_},
                       {"semf_id", id},
                       {"burst_slot", burst_slot}});
        }
    }
}

void GnbNode::on_slot() {
    const std::int64_t slot = rt_.now_slot();
    const double now = rt_.now_s();

    // Injected RU failures.
    for (const auto& [trp_id, at_s] : params_.ru_failure_at_s) {
        if (now < at_s || fired_faults_.count(trp_id)) continue;
        bool fired = false;
        for (auto& [id, task] : tasks_) {
            if (task.fsm.phase() != sep::Phase::Active) continue;
            bool uses = std::any_of(task.entries.begin(), task.entries.end(),
                                    [&](const auto& e) { return e.trp_id == trp_id; });
            if (!uses) continue;
            sep::RanMeasurementFsm::Event ev;
            ev.kind = sep::RanMeasurementFsm::Event::Kind::LocalFailure;
            ev.failure = {sep::Cause::RuFailure, "injected RU failure on " + trp_id};
            emit(task.fsm.step(ev));
            rt_.trace({{"ev", "ru_failure"}, {"gnb", gnb_id_}, {"trp", trp_id}, {"semf_id", id}});
            fired = true;
        }
        if (fired) {
            fired_faults_.insert(trp_id);
            recompute_allocation();
        }
    }

    if (allocation_) {
        const auto& alloc = *allocation_;
        const bool burst_slot_now =
            (slot % static_cast<std::int64_t>(alloc.period_slots)) ==
            static_cast<std::int64_t>(alloc.offset_slot);

        // Dynamic bistatic TX legs warn the receivers one lead time ahead.
        const std::int64_t lead = rt_.slots_for_ms(params_.handshake_lead_ms);
        const std::int64_t upcoming = slot + lead;
        if ((upcoming % static_cast<std::int64_t>(alloc.period_slots)) ==
            static_cast<std::int64_t>(alloc.offset_slot)) {
            for (auto& [id, task] : tasks_) {
                if (!task.dynamic_signal || task.fsm.phase() != sep::Phase::Active) continue;
                if (upcoming < task.start_slot) continue;
                for (const auto& entry : task.entries) {
                    if (entry.role != sep::TrpRole::Tx) continue;
                    bool ok = bistatic_handshake_ok(params_.handshake_lead_ms, params_.xn_latency_ms);
                    rt_.trace({{"ev", "handshake"},
                               {"gnb", gnb_id_},
                               {"semf_id", id},
                               {"burst_slot", upcoming},
                               {"ok", ok}});
                    if (!ok) {
                        rt_.trace({{"ev", "handshake_timeout"},
                                   {"gnb", gnb_id_},
                                   {"semf_id", id},
                                   {"burst_slot", upcoming},
                                   {"cause", to_string(sep::Cause::HandshakeTimeout)}});
                        continue;
                    }
                    for (const auto& peer : entry.peer_gnb_ids) {
                        rt_.send_xn(peer, {{"type", "sensing_handshake"},
                                           {"from_gnb", gnb_id_},
                                           {"burst_slot", upcoming}});
                    }
                }
            }
        }

        if (burst_slot_now) {
            for (auto& [id, task] : tasks_) {
                if (task.fsm.phase() != sep::Phase::Active) continue;
                if (slot < task.start_slot) continue;
                execute_burst(task, slot);
            }
        }
    }

    // Periodic reporting and duration expiry.
    for (auto& [id, task] : tasks_) {
        if (task.fsm.phase() != sep::Phase::Active || task.timing.one_shot) continue;
        if (slot == task.next_report_slot) {
            sep::RanMeasurementFsm::Event ev;
            ev.kind = sep::RanMeasurementFsm::Event::Kind::PeriodTick;
            ev.results = std::move(task.pending_results);
            task.pending_results.clear();
            emit(task.fsm.step(ev));
            task.next_report_slot += task.report_period_slots;
        }
        if (slot >= task.duration_end_slot) {
            sep::RanMeasurementFsm::Event ev;
            ev.kind = sep::RanMeasurementFsm::Event::Kind::DurationElapsed;
            emit(task.fsm.step(ev));
            rt_.trace({{"ev", "measurement_done"}, {"gnb", gnb_id_}, {"semf_id", id}});
            recompute_allocation();
        }
    }
}

void GnbNode::execute_burst(Task& task, std::int64_t slot) {
    std::vector<sep::TrpResultListEntry> entries_out;
    const auto& alloc = *allocation_;

    for (const auto& entry : task.entries) {
        if (entry.role == sep::TrpRole::Tx) {
            json dl_slots = json::array();
            bool all_dl = true;
            for (std::uint32_t s = 0; s < alloc.span_slots; ++s) {
                bool dl = scheduler_.pattern.is_dl(slot + s);
                dl_slots.push_back(dl);
                all_dl = all_dl && dl;
            }
            rt_.trace({{"ev", "burst_tx"},
                       {"gnb", gnb_id_},
                       {"trp", entry.trp_id},
                       {"semf_id", task.semf_id},
                       {"slot", slot},
                       {"span_slots", alloc.span_slots},
                       {"dl_slots", std::move(dl_slots)},
                       {"all_dl", all_dl}});
            continue;
        }
        if (task.dynamic_signal && entry.mode == sep::SensingMode::Bistatic) {
            if (!task.armed_rx_slots.count(slot)) {
                rt_.trace({{"ev", "burst_skipped"},
                           {"gnb", gnb_id_},
                           {"trp", entry.trp_id},
                           {"semf_id", task.semf_id},
                           {"slot", slot},
                           {"why", "no handshake for this burst"}});
                continue;
            }
            task.armed_rx_slots.erase(slot);
        }
        auto result = execute_entry(task, entry, slot);
        if (result) entries_out.push_back(std::move(*result));
    }
    task.burst_counter++;

    if (task.timing.one_shot) {
        sep::RanMeasurementFsm::Event ev;
        ev.kind = sep::RanMeasurementFsm::Event::Kind::BurstComplete;
        ev.results = std::move(entries_out);
        emit(task.fsm.step(ev));
        recompute_allocation();
    } else {
        for (auto& e : entries_out) task.pending_results.push_back(std::move(e));
    }
}

std::optional<sep::TrpResultListEntry>
GnbNode::execute_entry(Task& task, const sep::TrpConfigListEntry& entry, std::int64_t slot) {
    const TrpUnit* trp = find_trp(entry.trp_id);
    if (!trp) return std::nullopt;
    const double t = rt_.now_s();
    const scene::Vec3 rx_pos = trp->info.position;
    const scene::Vec3 tx_pos =
        entry.mode == sep::SensingMode::Monostatic ? rx_pos : entry.peer->position;
    const CapabilityGrant& grant = task.grants.at(entry.trp_id);

    // TX reference acquisition.
    std::uint64_t ref_seed = rt_.child_seed("txref", task.semf_id, task.burst_counter);
    ReferenceSource source = PreconfiguredSource{ref_seed};
    std::string source_name = "preconfigured";
    bool opportunistic_comm = false;
    if (entry.resource.signal == sep::SignalSource::ReuseCommunication ||
        (entry.resource.signal == sep::SignalSource::Opportunistic &&
         !task.insert_reference_next[entry.trp_id])) {
        bool comm_available = true;
        if (entry.resource.signal == sep::SignalSource::Opportunistic) {
            Rng avail(rt_.child_seed("comm_avail", task.semf_id, task.burst_counter));
            comm_available = avail.uniform01() < scheduler_.comm_dl_load;
        }
        if (comm_available) {
            opportunistic_comm = true;
            if (entry.mode == sep::SensingMode::Monostatic) {
                // Own transmission: the TX signal is readily available.
                source = PreconfiguredSource{ref_seed};
                source_name = "local_comm";
            } else if (params_.comm_reuse_over_the_air) {
                source = OverTheAirSource{ref_seed, params_.ota_sinr_db, params_.ota_mcs_threshold_db,
                                          params_.wideband_precoding};
                source_name = "over_the_air";
            } else {
                source = BackhaulSource{ref_seed, params_.backhaul_latency_ms, params_.rx_buffer_ms};
                source_name = "backhaul";
            }
        } else {
            source_name = "reference_inserted";
        }
    } else if (entry.resource.signal == sep::SignalSource::Opportunistic) {
        task.insert_reference_next[entry.trp_id] = false;
        source_name = "reference_inserted";
    }

    scene::RadioParams radio = params_.radio;
    radio.num_subcarriers = entry.resource.subcarriers;
    radio.num_symbols = entry.resource.burst_symbols;
    auto acquired = acquire_tx_reference(source, radio.num_subcarriers, radio.num_symbols,
                                         radio.grid_meta());
    if (const auto* cause = std::get_if<sep::CauseDiagnostics>(&acquired)) {
        rt_.trace({{"ev", "burst_skipped"},
                   {"gnb", gnb_id_},
                   {"trp", entry.trp_id},
                   {"semf_id", task.semf_id},
                   {"slot", slot},
                   {"why", cause->diagnostics},
                   {"cause", to_string(cause->cause)}});
        if (entry.resource.signal == sep::SignalSource::Opportunistic)
            task.insert_reference_next[entry.trp_id] = true;
        return std::nullopt;
    }
    const ComplexGrid& tx_grid = std::get<ComplexGrid>(acquired);

    // Synthesize the received grids per beam and run the chain.
    scene::SceneState world = rt_.scene_at(t);
    std::vector<ComplexGrid> rx_grids;
    rx_grids.reserve(entry.beams.size());
    for (std::size_t b = 0; b < entry.beams.size(); ++b) {
        std::uint64_t noise_seed =
            rt_.child_seed("burst_noise", task.semf_id * 1000 + task.burst_counter, b);
        ComplexGrid h = scene::synthesize_channel(world, tx_pos, rx_pos, entry.beams[b], radio,
                                                  grant.si_residual_db, noise_seed);
        ComplexGrid y = h;
        for (std::size_t i = 0; i < y.data().size(); ++i) y.data()[i] *= tx_grid.data()[i];
        rx_grids.push_back(std::move(y));
    }

    l1::Tracker& tracker = task.trackers[entry.trp_id];
    l1::SensingMeasurement meas =
        l1::run_pipeline(rx_grids, entry.beams, tx_grid, entry.processing, {tx_pos, rx_pos}, t,
                         entry.processing.depth == l1::Depth::Objects ? &tracker : nullptr);

    if (params_.dump_periodograms) {
        for (std::size_t b = 0; b < rx_grids.size(); ++b) {
            ComplexGrid work = l1::channel_calculation(rx_grids[b], tx_grid);
            if (entry.processing.clutter_removal) work = l1::clutter_removal(work);
            work = l1::crop_decimate(work, entry.processing.crop, entry.processing.decimate);
            auto pg = l1::periodogram(work, entry.processing.zero_pad.n_size,
                                      entry.processing.zero_pad.m_size);
            rt_.trace({{"ev", "periodogram_dump"},
                       {"gnb", gnb_id_},
                       {"trp", entry.trp_id},
                       {"semf_id", task.semf_id},
                       {"slot", slot},
                       {"beam", b},
                       {"periodogram", jsonio::to_json(pg)}});
        }
    }

    if (grant.pause_comm) pause_overhead_slots_ += allocation_->span_slots;

    // Ground-truth annotation for trace audits and metrics.
    json truth = json::array();
    for (const auto& obj : world.objects) {
        auto geo = scene::bistatic_geometry(tx_pos, rx_pos, obj);
        truth.push_back({{"id", obj.id},
                         {"class", obj.true_class},
                         {"path_length_m", geo.path_length_m},
                         {"closing_speed_m_per_s", -geo.path_rate_m_per_s},
                         {"position", jsonio::to_json(obj.position)},
                         {"velocity", jsonio::to_json(obj.velocity)}});
    }
    json detections = json::array();
    if (meas.depth == l1::Depth::Targets2D) {
        for (const auto& d : meas.targets2d)
            detections.push_back({{"path_length_m", d.path_length_m},
                                  {"closing_speed_m_per_s", d.closing_speed_m_per_s},
                                  {"power_db", d.power_db}});
    } else if (meas.depth == l1::Depth::Targets4D) {
        for (const auto& d : meas.targets4d)
            detections.push_back({{"path_length_m", d.path_length_m},
                                  {"closing_speed_m_per_s", d.closing_speed_m_per_s},
                                  {"power_db", d.power_db},
                                  {"azimuth_rad", d.azimuth_rad},
                                  {"zenith_rad", d.zenith_rad}});
    } else if (meas.depth == l1::Depth::Objects) {
        for (const auto& tr : meas.objects)
            detections.push_back({{"object_id", tr.object_id},
                                  {"position", jsonio::to_json(tr.position)},
                                  {"velocity", jsonio::to_json(tr.velocity)},
                                  {"hit_count", tr.hit_count}});
    }

    double path_bin = kSpeedOfLight / (static_cast<double>(entry.resource.subcarriers) *
                                       params_.radio.subcarrier_spacing_hz);
    rt_.trace({{"ev", "burst_rx"},
               {"gnb", gnb_id_},
               {"trp", entry.trp_id},
               {"semf_id", task.semf_id},
               {"slot", slot},
               {"mode", to_string(entry.mode)},
               {"signal", to_string(entry.resource.signal)},
               {"reference", source_name},
               {"comm_reuse", opportunistic_comm},
               {"beams", entry.beams.size()},
               {"depth", l1::to_string(meas.depth)},
               {"si_residual_db", grant.si_residual_db ? json(*grant.si_residual_db) : json(nullptr)},
               {"paused_comm_slots", grant.pause_comm ? allocation_->span_slots : 0},
               {"path_bin_m", path_bin},
               {"detections", std::move(detections)},
               {"truth", std::move(truth)},
               {"tx_pos", jsonio::to_json(tx_pos)},
               {"rx_pos", jsonio::to_json(rx_pos)}});

    sep::TrpResultListEntry out;
    out.trp_id = entry.trp_id;
    out.timestamp_s = t;
    out.payload = std::move(meas);
    return out;
}

} // namespace isacsim::gnb
