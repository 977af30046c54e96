#pragma once

// Exhaustive interleaving exploration of the composed SeMF/RAN measurement
// FSMs over an in-order lossless channel pair. Used by the protocol unit
// tests and the acceptance suite.
//
// Enabled actions at every state: deliver the head of either channel, fire
// eligible timers (response timeout, duration expiry on either side), inject
// an API abort or a RAN-local failure, complete a pending one-shot burst.
// Request delivery branches into accept and reject verdicts.

#include <deque>
#include <map>
#include <string>
#include <vector>

#include "isacsim/sep.hpp"

namespace isacsim::testgen {

struct ModelCheckStats {
    std::size_t states_explored = 0;
    std::vector<std::string> violations;     // protocol_violation actions (must stay empty)
    std::vector<std::string> pairing_errors; // Table-1 pairing breaches (must stay empty)
    bool reached_oneshot_done = false;
    bool reached_periodic_duration_done = false;
    bool reached_api_abort_termination = false;
    bool reached_failure_indication_termination = false;
    bool reached_rejection = false;
    std::size_t max_reports_on_a_path = 0;
};

namespace detail {

struct World {
    sep::SemfMeasurementFsm semf{1};
    sep::RanMeasurementFsm ran;
    std::deque<sep::SepMessage> to_ran;
    std::deque<sep::SepMessage> to_semf;
    bool started = false;
    bool response_timer = false;
    int reports_emitted = 0;
    // Table-1 pairing monitors.
    int requests_delivered = 0;
    int responses_sent = 0;
    int failures_sent = 0;
    bool oneshot_response_sent = false;
    int depth = 0;
};

inline std::string key_of(const World& w) {
    std::string k;
    k += std::to_string(static_cast<int>(w.semf.phase()));
    k += '|';
    k += std::to_string(static_cast<int>(w.ran.phase()));
    k += '|';
    k += w.started ? '1' : '0';
    k += w.response_timer ? '1' : '0';
    k += w.semf.abort_pending() ? '1' : '0';
    k += w.ran.one_shot_pending() ? '1' : '0';
    k += std::to_string(w.reports_emitted);
    k += '|';
    for (const auto& m : w.to_ran) {
        k += sep::message_type(m);
        k += ',';
    }
    k += '|';
    for (const auto& m : w.to_semf) {
        k += sep::message_type(m);
        k += ',';
    }
    return k;
}

inline void absorb_semf_output(World& w, const sep::FsmOutput& out, ModelCheckStats& stats) {
    for (const auto& a : out.actions) {
        if (a.kind == "protocol_violation") stats.violations.push_back("semf: " + a.detail);
        if (a.kind == "start_response_timer") w.response_timer = true;
        if (a.kind == "stop_response_timer") w.response_timer = false;
    }
    for (const auto& m : out.send) {
        std::string type = sep::message_type(m);
        if (type != "SensingRequest" && type != "SensingAbort")
            stats.pairing_errors.push_back("SeMF sent unexpected " + type);
        w.to_ran.push_back(m);
    }
}

inline void absorb_ran_output(World& w, const sep::FsmOutput& out, ModelCheckStats& stats) {
    for (const auto& a : out.actions) {
        if (a.kind == "protocol_violation") stats.violations.push_back("ran: " + a.detail);
    }
    for (const auto& m : out.send) {
        std::string type = sep::message_type(m);
        if (type == "SensingResponse") {
            w.responses_sent++;
            if (w.requests_delivered == 0) stats.pairing_errors.push_back("response before request");
            if (w.responses_sent + w.failures_sent > 1)
                stats.pairing_errors.push_back("more than one response/failure per request");
            const auto& resp = std::get<sep::SensingResponse>(m);
            if (resp.trp_result_list.has_value()) w.oneshot_response_sent = true;
        } else if (type == "SensingFailure") {
            w.failures_sent++;
            if (w.requests_delivered == 0) stats.pairing_errors.push_back("failure before request");
            if (w.responses_sent + w.failures_sent > 1)
                stats.pairing_errors.push_back("more than one response/failure per request");
        } else if (type == "SensingReport") {
            w.reports_emitted++;
            if (w.responses_sent == 0) stats.pairing_errors.push_back("report before response");
            if (w.oneshot_response_sent)
                stats.pairing_errors.push_back("report after one-shot response");
        } else if (type != "SensingFailureIndication") {
            stats.pairing_errors.push_back("RAN sent unexpected " + type);
        }
        w.to_semf.push_back(m);
    }
}

} // namespace detail

inline ModelCheckStats run_fsm_model_check(bool one_shot, int max_depth) {
    using detail::World;
    ModelCheckStats stats;

    sep::MeasurementTiming timing;
    timing.one_shot = one_shot;
    if (!one_shot) {
        timing.report_period_ms = 100.0;
        timing.duration_ms = 300.0;
    }

    World initial;
    std::deque<World> frontier{initial};
    std::map<std::string, int> visited{{detail::key_of(initial), 0}};

    auto note_terminals = [&](const World& w) {
        if (w.semf.phase() == sep::Phase::Done && w.ran.phase() == sep::Phase::Done) {
            if (one_shot) stats.reached_oneshot_done = true;
        }
        stats.max_reports_on_a_path =
            std::max(stats.max_reports_on_a_path, static_cast<std::size_t>(w.reports_emitted));
    };

    auto push = [&](World w) {
        note_terminals(w);
        if (w.depth >= max_depth) return;
        auto key = detail::key_of(w);
        auto it = visited.find(key);
        if (it != visited.end() && it->second <= w.depth) return;
        visited[key] = w.depth;
        frontier.push_back(std::move(w));
    };

    while (!frontier.empty()) {
        World w = frontier.front();
        frontier.pop_front();
        ++stats.states_explored;

        // 1. Start the measurement.
        if (!w.started) {
            World next = w;
            next.started = true;
            next.depth++;
            sep::SemfMeasurementFsm::Event ev;
            ev.kind = sep::SemfMeasurementFsm::Event::Kind::Start;
            ev.timing = timing;
            detail::absorb_semf_output(next, next.semf.step(ev), stats);
            push(std::move(next));
            continue; // nothing else can happen before the start
        }

        // 2. Deliver the head of the SeMF->RAN channel.
        if (!w.to_ran.empty()) {
            const sep::SepMessage msg = w.to_ran.front();
            if (const auto* req = std::get_if<sep::SensingRequest>(&msg)) {
                for (bool accept : {true, false}) {
                    World next = w;
                    next.to_ran.pop_front();
                    next.depth++;
                    next.requests_delivered++;
                    sep::RanMeasurementFsm::Event ev;
                    ev.kind = sep::RanMeasurementFsm::Event::Kind::Request;
                    ev.semf_id = req->semf_measurement_id;
                    ev.timing = req->measurement_timing;
                    ev.assigned_ran_id = 77;
                    if (!accept)
                        ev.validation_failure =
                            sep::CauseDiagnostics{sep::Cause::ResourceUnavailable, "model"};
                    detail::absorb_ran_output(next, next.ran.step(ev), stats);
                    push(std::move(next));
                }
            } else {
                World next = w;
                next.to_ran.pop_front();
                next.depth++;
                sep::RanMeasurementFsm::Event ev;
                ev.kind = sep::RanMeasurementFsm::Event::Kind::AbortReceived;
                detail::absorb_ran_output(next, next.ran.step(ev), stats);
                push(std::move(next));
            }
        }

        // 3. Deliver the head of the RAN->SeMF channel.
        if (!w.to_semf.empty()) {
            World next = w;
            sep::SepMessage msg = next.to_semf.front();
            next.to_semf.pop_front();
            next.depth++;
            bool was_failure = std::holds_alternative<sep::SensingFailure>(msg);
            bool was_indication = std::holds_alternative<sep::SensingFailureIndication>(msg);
            bool semf_was_active = next.semf.phase() == sep::Phase::Active;
            bool semf_was_awaiting = next.semf.phase() == sep::Phase::AwaitingResponse;
            sep::SemfMeasurementFsm::Event ev;
            ev.kind = sep::SemfMeasurementFsm::Event::Kind::Message;
            ev.message = std::move(msg);
            detail::absorb_semf_output(next, next.semf.step(ev), stats);
            if (was_failure && semf_was_awaiting && next.semf.phase() == sep::Phase::Failed)
                stats.reached_rejection = true;
            if (was_indication && semf_was_active && next.semf.phase() == sep::Phase::Failed)
                stats.reached_failure_indication_termination = true;
            push(std::move(next));
        }

        // 4. SeMF response timer expiry.
        if (w.response_timer && w.semf.phase() == sep::Phase::AwaitingResponse) {
            World next = w;
            next.depth++;
            next.response_timer = false;
            sep::SemfMeasurementFsm::Event ev;
            ev.kind = sep::SemfMeasurementFsm::Event::Kind::ResponseTimeout;
            detail::absorb_semf_output(next, next.semf.step(ev), stats);
            push(std::move(next));
        }

        // 5. API abort.
        if (w.semf.phase() == sep::Phase::Active ||
            (w.semf.phase() == sep::Phase::AwaitingResponse && !w.semf.abort_pending())) {
            World next = w;
            next.depth++;
            sep::SemfMeasurementFsm::Event ev;
            ev.kind = sep::SemfMeasurementFsm::Event::Kind::ApiAbort;
            detail::absorb_semf_output(next, next.semf.step(ev), stats);
            push(std::move(next));
        }

        // 6. Abort send completion.
        if (w.semf.phase() == sep::Phase::Terminating) {
            World next = w;
            next.depth++;
            sep::SemfMeasurementFsm::Event ev;
            ev.kind = sep::SemfMeasurementFsm::Event::Kind::TerminationComplete;
            detail::absorb_semf_output(next, next.semf.step(ev), stats);
            if (next.semf.phase() == sep::Phase::Done) stats.reached_api_abort_termination = true;
            push(std::move(next));
        }

        // 7. Duration expiry (periodic).
        if (!one_shot && w.semf.phase() == sep::Phase::Active) {
            World next = w;
            next.depth++;
            sep::SemfMeasurementFsm::Event ev;
            ev.kind = sep::SemfMeasurementFsm::Event::Kind::DurationElapsed;
            detail::absorb_semf_output(next, next.semf.step(ev), stats);
            if (next.semf.phase() == sep::Phase::Done) stats.reached_periodic_duration_done = true;
            push(std::move(next));
        }
        if (!one_shot && w.ran.phase() == sep::Phase::Active) {
            World next = w;
            next.depth++;
            sep::RanMeasurementFsm::Event ev;
            ev.kind = sep::RanMeasurementFsm::Event::Kind::DurationElapsed;
            detail::absorb_ran_output(next, next.ran.step(ev), stats);
            push(std::move(next));
        }

        // 8. One-shot burst completion.
        if (w.ran.one_shot_pending()) {
            World next = w;
            next.depth++;
            sep::RanMeasurementFsm::Event ev;
            ev.kind = sep::RanMeasurementFsm::Event::Kind::BurstComplete;
            ev.results = {};
            detail::absorb_ran_output(next, next.ran.step(ev), stats);
            push(std::move(next));
        }

        // 9. Periodic report tick.
        if (!one_shot && w.ran.phase() == sep::Phase::Active) {
            World next = w;
            next.depth++;
            sep::RanMeasurementFsm::Event ev;
            ev.kind = sep::RanMeasurementFsm::Event::Kind::PeriodTick;
            ev.results = {};
            detail::absorb_ran_output(next, next.ran.step(ev), stats);
            push(std::move(next));
        }

        // 10. RAN-local failure.
        if (w.ran.phase() == sep::Phase::Active) {
            World next = w;
            next.depth++;
            sep::RanMeasurementFsm::Event ev;
            ev.kind = sep::RanMeasurementFsm::Event::Kind::LocalFailure;
            ev.failure = {sep::Cause::RuFailure, "model"};
            detail::absorb_ran_output(next, next.ran.step(ev), stats);
            push(std::move(next));
        }
    }
    return stats;
}

} // namespace isacsim::testgen
