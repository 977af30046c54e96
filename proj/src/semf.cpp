#include "isacsim/semf.hpp"

#include <algorithm>
#include <numeric>

#include "isacsim/json_util.hpp"

namespace isacsim::semf {

using jsonio::json;

const char* to_string(SessionMode m) {
    return m == SessionMode::MultiMonostatic ? "MultiMonostatic" : "Multistatic";
}

const std::map<std::string, std::set<std::string>>& purpose_field_table() {
    static const std::map<std::string, std::set<std::string>> table = {
        {"presence_detection", {"position_coarse"}},
        {"traffic_monitoring", {"position", "velocity", "class", "confidence"}},
        {"intrusion_detection", {"position", "class", "confidence"}},
        {"environment_mapping", {"position", "class", "annotation"}},
    };
    return table;
}

SpctmDecision spctm_check(const SensingTrigger& trigger, const std::vector<PolicyRecord>& policies,
                          const std::vector<ConsentZone>& consents) {
    SpctmDecision out;
    geo::Polygon area(std::vector<geo::Point2>(trigger.area.begin(), trigger.area.end()));
    if (!area.valid()) {
        out.cause = api::ApiCause::InvalidRequest;
        out.reason = "request area is not a simple polygon";
        return out;
    }

    const PolicyRecord* policy = nullptr;
    for (const auto& p : policies)
        if (p.consumer_id == trigger.consumer_id) policy = &p;
    if (!policy) {
        out.cause = api::ApiCause::PolicyDenied;
        out.reason = "unknown consumer";
        return out;
    }
    auto purpose_it = purpose_field_table().find(trigger.purpose);
    if (purpose_it == purpose_field_table().end() || !policy->allowed_purposes.count(trigger.purpose)) {
        out.cause = api::ApiCause::PolicyDenied;
        out.reason = "purpose not allowed";
        return out;
    }
    if (!policy->allowed_area.contains(area)) {
        out.cause = api::ApiCause::PolicyDenied;
        out.reason = "requested area outside the allowed area";
        return out;
    }
    if (!trigger.one_shot && trigger.update_period_s > 0.0) {
        double hz = 1.0 / trigger.update_period_s;
        if (hz > policy->max_update_frequency_hz + 1e-12) {
            out.cause = api::ApiCause::PolicyDenied;
            out.reason = "update frequency above the policy limit";
            return out;
        }
    }
    for (const auto& zone : consents) {
        if (!zone.sensing_allowed && zone.area.intersects(area)) {
            out.cause = api::ApiCause::NoConsent;
            out.reason = "area overlaps a no-consent zone owned by " + zone.owner;
            return out;
        }
    }

    out.allowed = true;
    std::set<std::string> fields;
    for (const auto& f : purpose_it->second)
        if (policy->allowed_result_fields.count(f)) fields.insert(f);
    out.profile.fields = std::move(fields);
    return out;
}

std::optional<Selection> trp_select(const TrpRegistry& registry, const geo::Polygon& area,
                                    double usable_sic_db) {
    struct Candidate {
        sep::TrpInfo trp;
        double centroid_dist;
    };
    std::vector<Candidate> candidates;
    geo::Point2 centroid = area.centroid();
    for (const auto& trp : registry.all()) {
        geo::Point2 site{trp.position.x, trp.position.y};
        if (area.distance_to(site) <= trp.coverage_radius_m) {
            double dx = trp.position.x - centroid.x;
            double dy = trp.position.y - centroid.y;
            candidates.push_back({trp, std::sqrt(dx * dx + dy * dy)});
        }
    }
    std::sort(candidates.begin(), candidates.end(),
              [](const Candidate& a, const Candidate& b) { return a.trp.trp_id < b.trp.trp_id; });
    if (candidates.empty()) return std::nullopt;

    auto has_role = [](const sep::TrpInfo& trp, sep::TrpRole role) {
        return std::find(trp.roles.begin(), trp.roles.end(), role) != trp.roles.end();
    };

    Selection sel;
    for (const auto& c : candidates) {
        if (has_role(c.trp, sep::TrpRole::TxRx) && c.trp.sic_total_db > usable_sic_db)
            sel.assignments.push_back({c.trp, sep::TrpRole::TxRx});
    }
    if (!sel.assignments.empty()) {
        sel.mode = SessionMode::MultiMonostatic;
        return sel;
    }

    // Multistatic fallback: the Tx closest to the area centroid plus every
    // other Rx-capable candidate.
    const Candidate* tx = nullptr;
    for (const auto& c : candidates) {
        if (!has_role(c.trp, sep::TrpRole::Tx)) continue;
        if (!tx || c.centroid_dist < tx->centroid_dist ||
            (c.centroid_dist == tx->centroid_dist && c.trp.trp_id < tx->trp.trp_id))
            tx = &c;
    }
    if (!tx) return std::nullopt;
    sel.mode = SessionMode::Multistatic;
    sel.assignments.push_back({tx->trp, sep::TrpRole::Tx});
    std::size_t rx_count = 0;
    for (const auto& c : candidates) {
        if (c.trp.trp_id == tx->trp.trp_id) continue;
        if (!has_role(c.trp, sep::TrpRole::Rx)) continue;
        sel.assignments.push_back({c.trp, sep::TrpRole::Rx});
        ++rx_count;
    }
    if (rx_count < 2) return std::nullopt;
    return sel;
}

std::vector<FusedObject> fuse_multimonostatic(const std::vector<MonoObservation>& observations,
                                              double gate_m) {
    std::vector<std::size_t> parent(observations.size());
    std::iota(parent.begin(), parent.end(), 0);
    std::function<std::size_t(std::size_t)> find = [&](std::size_t i) {
        while (parent[i] != i) i = parent[i] = parent[parent[i]];
        return i;
    };
    for (std::size_t i = 0; i < observations.size(); ++i)
        for (std::size_t j = i + 1; j < observations.size(); ++j)
            if ((observations[i].position - observations[j].position).norm() <= gate_m)
                parent[find(j)] = find(i);

    std::map<std::size_t, std::vector<std::size_t>> clusters;
    for (std::size_t i = 0; i < observations.size(); ++i) clusters[find(i)].push_back(i);

    std::vector<FusedObject> out;
    for (const auto& [root, members] : clusters) {
        FusedObject f;
        double sum_w = 0.0;
        std::set<std::string> trps;
        for (std::size_t i : members) {
            const auto& o = observations[i];
            double w = std::max(o.weight, 1e-30);
            sum_w += w;
            f.position = f.position + o.position * w;
            f.velocity = f.velocity + o.velocity * w;
            trps.insert(o.trp_id);
        }
        f.position = f.position * (1.0 / sum_w);
        f.velocity = f.velocity * (1.0 / sum_w);
        f.contributing_trp_ids.assign(trps.begin(), trps.end());
        f.confidence = 1.0 - std::pow(0.5, static_cast<double>(trps.size()));
        out.push_back(std::move(f));
    }
    return out;
}

void multistatic_residuals(const Vec3& tx, const std::vector<Vec3>& rx,
                           const std::vector<double>& path_lengths, const Vec3& p,
                           Eigen::VectorXd& residuals, Eigen::MatrixXd& jacobian) {
    const auto legs = static_cast<Eigen::Index>(rx.size());
    residuals.resize(legs);
    jacobian.resize(legs, 3);
    Vec3 from_tx = p - tx;
    double d_tx = from_tx.norm();
    Vec3 u_tx = from_tx * (1.0 / d_tx);
    for (Eigen::Index i = 0; i < legs; ++i) {
        Vec3 from_rx = p - rx[static_cast<std::size_t>(i)];
        double d_rx = from_rx.norm();
        Vec3 u_rx = from_rx * (1.0 / d_rx);
        residuals(i) = d_tx + d_rx - path_lengths[static_cast<std::size_t>(i)];
        jacobian(i, 0) = u_tx.x + u_rx.x;
        jacobian(i, 1) = u_tx.y + u_rx.y;
        jacobian(i, 2) = u_tx.z + u_rx.z;
    }
}

GnSolveResult solve_multistatic_point(const Vec3& tx, const std::vector<Vec3>& rx,
                                      const std::vector<double>& path_lengths) {
    GnSolveResult result;
    if (rx.size() < 3 || rx.size() != path_lengths.size()) return result;

    Vec3 p{0, 0, 0};
    for (const auto& r : rx) p = p + r;
    p = p * (1.0 / static_cast<double>(rx.size()));

    Eigen::VectorXd r;
    Eigen::MatrixXd jac;
    multistatic_residuals(tx, rx, path_lengths, p, r, jac);
    double objective = r.squaredNorm();
    result.objective_history.push_back(objective);

    const int max_iterations = 50;
    for (int it = 0; it < max_iterations; ++it) {
        result.iterations = it + 1;
        Eigen::Matrix3d jtj = jac.transpose() * jac;
        jtj.diagonal().array() += 1e-12;
        Eigen::Vector3d step = jtj.ldlt().solve(-jac.transpose() * r);

        // Step halving keeps the objective non-increasing.
        double alpha = 1.0;
        Vec3 next = p;
        double next_obj = objective;
        Eigen::VectorXd r_try;
        Eigen::MatrixXd jac_try;
        bool accepted = false;
        for (int half = 0; half < 30; ++half) {
            Vec3 candidate{p.x + alpha * step(0), p.y + alpha * step(1), p.z + alpha * step(2)};
            multistatic_residuals(tx, rx, path_lengths, candidate, r_try, jac_try);
            double obj_try = r_try.squaredNorm();
            if (obj_try <= objective + 1e-18) {
                next = candidate;
                next_obj = obj_try;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) break;
        double step_norm = alpha * step.norm();
        p = next;
        r = r_try;
        jac = jac_try;
        objective = next_obj;
        result.objective_history.push_back(objective);
        if (step_norm < 1e-6) {
            result.converged = true;
            break;
        }
    }
    result.position = p;
    result.max_residual_m = r.cwiseAbs().maxCoeff();
    return result;
}

Vec3 velocity_from_path_rates(const Vec3& tx, const std::vector<Vec3>& rx, const Vec3& position,
                              const std::vector<double>& path_rates) {
    const auto legs = static_cast<Eigen::Index>(rx.size());
    Eigen::MatrixXd a(legs, 3);
    Eigen::VectorXd b(legs);
    Vec3 from_tx = position - tx;
    Vec3 u_tx = from_tx * (1.0 / from_tx.norm());
    for (Eigen::Index i = 0; i < legs; ++i) {
        Vec3 from_rx = position - rx[static_cast<std::size_t>(i)];
        Vec3 u_rx = from_rx * (1.0 / from_rx.norm());
        a(i, 0) = u_tx.x + u_rx.x;
        a(i, 1) = u_tx.y + u_rx.y;
        a(i, 2) = u_tx.z + u_rx.z;
        b(i) = path_rates[static_cast<std::size_t>(i)];
    }
    auto cod = a.completeOrthogonalDecomposition();
    Eigen::Vector3d v = cod.solve(b);
    return {v(0), v(1), v(2)};
}

std::vector<FusedObject> fuse_multistatic(const Vec3& tx_pos, const std::vector<MultistaticLeg>& legs,
                                          double range_resolution_m, double cluster_gate_m) {
    std::vector<const MultistaticLeg*> usable;
    for (const auto& l : legs)
        if (!l.points.empty()) usable.push_back(&l);
    if (usable.size() < 3) return {};

    // Bound tuple enumeration by keeping the strongest few detections per leg.
    std::size_t per_leg_cap = 4;
    double combos = 1;
    for (const auto* l : usable) combos *= std::min(l->points.size(), per_leg_cap);
    if (combos > 4096) per_leg_cap = 2;

    std::vector<std::vector<l1::TargetPoint2D>> pts(usable.size());
    for (std::size_t i = 0; i < usable.size(); ++i) {
        pts[i] = usable[i]->points;
        std::stable_sort(pts[i].begin(), pts[i].end(),
                         [](const auto& a, const auto& b) { return a.power_db > b.power_db; });
        if (pts[i].size() > per_leg_cap) pts[i].resize(per_leg_cap);
    }

    struct Candidate {
        Vec3 position;
        Vec3 velocity;
        double residual;
        std::vector<std::size_t> picks; // detection index per usable leg
    };
    std::vector<Candidate> candidates;

    std::vector<Vec3> rx_positions(usable.size());
    for (std::size_t i = 0; i < usable.size(); ++i) rx_positions[i] = usable[i]->rx_pos;

    std::vector<std::size_t> pick(usable.size(), 0);
    while (true) {
        std::vector<double> lengths(usable.size());
        std::vector<double> rates(usable.size());
        for (std::size_t i = 0; i < usable.size(); ++i) {
            lengths[i] = pts[i][pick[i]].path_length_m;
            rates[i] = -pts[i][pick[i]].closing_speed_m_per_s;
        }
        auto solved = solve_multistatic_point(tx_pos, rx_positions, lengths);
        if (solved.converged && solved.max_residual_m <= 3.0 * range_resolution_m) {
            Candidate c;
            c.position = solved.position;
            c.velocity = velocity_from_path_rates(tx_pos, rx_positions, solved.position, rates);
            c.residual = solved.max_residual_m;
            c.picks = pick;
            candidates.push_back(std::move(c));
        }
        // Odometer over detection tuples.
        std::size_t axis = 0;
        while (axis < pick.size()) {
            if (++pick[axis] < pts[axis].size()) break;
            pick[axis] = 0;
            ++axis;
        }
        if (axis == pick.size()) break;
    }

    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& a, const Candidate& b) { return a.residual < b.residual; });

    std::vector<FusedObject> out;
    std::vector<std::set<std::size_t>> used(usable.size());
    for (const auto& c : candidates) {
        bool free = true;
        for (std::size_t i = 0; i < usable.size(); ++i)
            if (used[i].count(c.picks[i])) free = false;
        if (!free) continue;
        bool duplicate = false;
        for (const auto& f : out)
            if ((f.position - c.position).norm() <= cluster_gate_m) duplicate = true;
        if (duplicate) continue;
        for (std::size_t i = 0; i < usable.size(); ++i) used[i].insert(c.picks[i]);

        FusedObject f;
        f.position = c.position;
        f.velocity = c.velocity;
        for (const auto* l : usable) f.contributing_trp_ids.push_back(l->trp_id);
        f.confidence = 1.0 - std::pow(0.5, static_cast<double>(usable.size()));
        out.push_back(std::move(f));
    }
    return out;
}

std::string classify(const Vec3& position, const Vec3& velocity,
                     const std::vector<GeoMapStatic>& geomap) {
    double speed = velocity.norm();
    if (speed < 0.5) {
        for (const auto& s : geomap)
            if (s.contains(position)) return "building";
        return "static_unknown";
    }
    if (speed <= 3.0) return "human";
    if (speed <= 70.0) return "car";
    return "unclassified";
}

GeoMapFusionResult geomap_fuse(const std::vector<GeoMapStatic>& statics,
                               std::vector<FusedObject> fused) {
    GeoMapFusionResult result;
    std::set<std::string> confirmed;
    for (auto& f : fused) {
        f.annotation = "new_detection";
        for (const auto& s : statics) {
            if (s.contains(f.position)) {
                f.annotation = "known_static";
                confirmed.insert(s.id);
                break;
            }
        }
    }
    for (const auto& s : statics)
        if (!confirmed.count(s.id)) result.unconfirmed_statics.push_back(s.id);
    result.annotated = std::move(fused);
    return result;
}

void SemfTracker::update(const std::vector<FusedObject>& fused, double t_s) {
    struct Pair {
        double dist;
        std::size_t obj;
        std::size_t track;
        std::uint64_t track_id;
    };
    std::vector<Pair> pairs;
    for (std::size_t ti = 0; ti < tracks_.size(); ++ti) {
        Vec3 pred = l1::predict_position(tracks_[ti], t_s);
        for (std::size_t oi = 0; oi < fused.size(); ++oi) {
            double d = (fused[oi].position - pred).norm();
            if (d <= cfg_.gate_m) pairs.push_back({d, oi, ti, tracks_[ti].object_id});
        }
    }
    std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
        if (a.dist != b.dist) return a.dist < b.dist;
        if (a.obj != b.obj) return a.obj < b.obj;
        return a.track_id < b.track_id;
    });
    std::vector<bool> obj_used(fused.size(), false), track_used(tracks_.size(), false);
    for (const auto& p : pairs) {
        if (obj_used[p.obj] || track_used[p.track]) continue;
        obj_used[p.obj] = true;
        track_used[p.track] = true;
        tracks_[p.track] = l1::multi_burst_filter(tracks_[p.track], fused[p.obj].position, t_s, cfg_);
        tracks_[p.track].class_hint = fused[p.obj].class_label;
    }
    for (std::size_t ti = 0; ti < tracks_.size(); ++ti)
        if (!track_used[ti]) tracks_[ti].missed_scans += 1;
    for (std::size_t oi = 0; oi < fused.size(); ++oi) {
        if (obj_used[oi]) continue;
        l1::LocalizedTarget seed{fused[oi].position, 0.0, {1.0, 0.0}};
        auto track = l1::make_track(next_id_++, seed, t_s, cfg_);
        track.class_hint = fused[oi].class_label;
        tracks_.push_back(std::move(track));
    }
    // Retire tracks unmatched for more than three scans.
    std::erase_if(tracks_, [](const l1::TrackState& t) { return t.missed_scans > 3; });
}

std::vector<SemfTracker::Prediction> SemfTracker::predict(double horizon_s, double now_s) const {
    std::vector<Prediction> out;
    for (const auto& t : tracks_)
        out.push_back({t.object_id, l1::predict_position(t, now_s + horizon_s)});
    return out;
}

std::optional<ResultStoreEntry> ResultStore::serve(const geo::Polygon& request_area, double max_age_s,
                                                   double now_s) const {
    const ResultStoreEntry* best = nullptr;
    for (const auto& e : entries_) {
        double age = now_s - e.produced_at_s;
        if (age < 0.0 || age > e.freshness_ttl_s || age > max_age_s) continue;
        if (!e.area.contains(request_area)) continue;
        if (!best || e.produced_at_s > best->produced_at_s) best = &e;
    }
    if (!best) return std::nullopt;
    return *best;
}

// ---------------------------------------------------------------------------
// SemfNode
// ---------------------------------------------------------------------------

SemfNode::SemfNode(std::vector<std::string> gnb_ids, std::vector<PolicyRecord> policies,
                   std::vector<ConsentZone> consents, std::vector<GeoMapStatic> geomap,
                   SemfParams params, NodeRuntime& runtime)
    : gnb_ids_(std::move(gnb_ids)), policies_(std::move(policies)), consents_(std::move(consents)),
      geomap_(std::move(geomap)), params_(std::move(params)), rt_(runtime) {}

std::size_t SemfNode::active_session_count() const {
    std::size_t n = 0;
    for (const auto& [id, s] : sessions_)
        if (s.phase == SessionPhase::Requested || s.phase == SessionPhase::Active) ++n;
    return n;
}

SemfNode::Session* SemfNode::session_by_id(std::uint64_t id) {
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : &it->second;
}

void SemfNode::send_api_failure(const std::string& consumer, std::optional<std::uint64_t> session_id,
                                api::ApiCause cause, const std::string& diagnostics) {
    api::SensingServiceFailure fail;
    fail.session_id = session_id;
    fail.cause = cause;
    fail.diagnostics = diagnostics;
    rt_.send_api(consumer, api::api_encode(fail));
}

void SemfNode::handle_api(const std::string& consumer, const api::ApiMessage& msg) {
    if (const auto* req = std::get_if<api::SensingServiceRequest>(&msg)) {
        if (req->consumer_id != consumer) {
            send_api_failure(consumer, std::nullopt, api::ApiCause::InvalidRequest,
                             "consumer id does not match the connection");
            return;
        }
        if (!req->quality.one_shot &&
            (req->quality.update_period_s <= 0.0 ||
             req->quality.duration_s < req->quality.update_period_s)) {
            send_api_failure(consumer, std::nullopt, api::ApiCause::InvalidRequest,
                             "periodic quality needs period > 0 and duration >= period");
            return;
        }

        SensingTrigger trigger{req->consumer_id, req->area, req->purpose, req->quality.one_shot,
                               req->quality.update_period_s};
        auto decision = spctm_check(trigger, policies_, consents_);
        json profile_fields = json::array();
        for (const auto& f : decision.profile.fields) profile_fields.push_back(f);
        rt_.trace({{"ev", "policy_decision"},
                   {"consumer", consumer},
                   {"purpose", req->purpose},
                   {"allowed", decision.allowed},
                   {"cause", decision.allowed ? json(nullptr) : json(to_string(decision.cause))},
                   {"reason", decision.reason},
                   {"minimization_profile", profile_fields}});
        if (!decision.allowed) {
            send_api_failure(consumer, std::nullopt, decision.cause, decision.reason);
            return;
        }

        Session session;
        session.session_id = next_session_id_++;
        session.consumer = consumer;
        session.purpose = req->purpose;
        session.area = req->area;
        session.area_poly = geo::Polygon(std::vector<geo::Point2>(req->area.begin(), req->area.end()));
        session.profile = decision.profile;
        session.max_result_age_s = req->max_result_age_s;
        session.timing.one_shot = req->quality.one_shot;
        if (!req->quality.one_shot) {
            session.timing.report_period_ms = req->quality.update_period_s * 1000.0;
            session.timing.duration_ms = req->quality.duration_s * 1000.0;
            session.expected_reports = static_cast<int>(
                req->quality.duration_s / req->quality.update_period_s + 1e-9);
        }
        session.sep_timing = session.timing;
        session.tracker = SemfTracker(params_.track);
        session.phase = SessionPhase::Active;

        // One transparency broadcast per allowed session.
        json area_json = json::array();
        for (const auto& p : req->area) area_json.push_back(json::array({p.x, p.y}));
        rt_.trace({{"ev", "transparency_broadcast"},
                   {"session_id", session.session_id},
                   {"consumer", consumer},
                   {"purpose", req->purpose},
                   {"area", area_json}});

        api::SensingServiceResponse resp;
        resp.session_id = session.session_id;
        rt_.send_api(consumer, api::api_encode(resp));

        // Result store probe before any RAN traffic.
        if (req->quality.one_shot && req->max_result_age_s > 0.0) {
            auto hit = store_.serve(session.area_poly, req->max_result_age_s, rt_.now_s());
            rt_.trace({{"ev", "result_store"},
                       {"session_id", session.session_id},
                       {"hit", hit.has_value()}});
            if (hit) {
                auto id = session.session_id;
                sessions_.emplace(id, std::move(session));
                Session& s = sessions_.at(id);
                notify(s, hit->objects);
                s.phase = SessionPhase::Done;
                rt_.trace({{"ev", "session_done"}, {"session_id", id}, {"outcome", "cache_hit"}});
                return;
            }
        }

        auto id = session.session_id;
        sessions_.emplace(id, std::move(session));
        start_orchestration(sessions_.at(id));
        return;
    }
    if (const auto* abort = std::get_if<api::SensingServiceAbort>(&msg)) {
        Session* session = session_by_id(abort->session_id);
        if (!session || session->consumer != consumer) {
            send_api_failure(consumer, abort->session_id, api::ApiCause::UnknownSession,
                             "no such session");
            return;
        }
        if (session->phase == SessionPhase::Active) {
            session->phase = SessionPhase::Aborted;
            abort_all_legs(*session);
            api::SensingServiceAbort echo;
            echo.session_id = session->session_id;
            echo.origin = "consumer";
            rt_.send_api(consumer, api::api_encode(echo));
            rt_.trace({{"ev", "session_done"},
                       {"session_id", session->session_id},
                       {"outcome", "aborted_by_consumer"}});
        } else {
            send_api_failure(consumer, abort->session_id, api::ApiCause::UnknownSession,
                             "session already terminal");
        }
        return;
    }
    send_api_failure(consumer, std::nullopt, api::ApiCause::InvalidRequest,
                     std::string("unexpected message ") + api::message_type(msg));
}

void SemfNode::start_orchestration(Session& session) {
    // TRP discovery runs only toward gNBs missing from the registry.
    bool outstanding = false;
    for (const auto& gnb : gnb_ids_) {
        if (registry_.known(gnb) || discovery_outstanding_.count(gnb)) continue;
        discovery_attempts_[gnb] = 1;
        discovery_outstanding_.insert(gnb);
        rt_.send_sep(gnb, sep::TrpInformationRequest{});
        outstanding = true;
    }
    if (outstanding || !discovery_outstanding_.empty()) {
        session.discovery_pending = true;
        return;
    }
    select_and_request(session);
}

void SemfNode::proceed_after_discovery() {
    if (!discovery_outstanding_.empty()) return;
    for (auto& [id, session] : sessions_) {
        if (session.discovery_pending && session.phase == SessionPhase::Active) {
            session.discovery_pending = false;
            select_and_request(session);
        }
    }
}

void SemfNode::select_and_request(Session& session) {
    auto selection = trp_select(registry_, session.area_poly, params_.usable_sic_db);
    if (!selection) {
        fail_session(session, api::ApiCause::NoCoverage, "no TRP covers the requested area");
        return;
    }
    session.mode = selection->mode;
    rt_.trace({{"ev", "trp_selection"},
               {"session_id", session.session_id},
               {"mode", to_string(selection->mode)},
               {"trps", [&] {
                    json arr = json::array();
                    for (const auto& a : selection->assignments)
                        arr.push_back({{"trp", a.trp.trp_id},
                                       {"gnb", a.trp.gnb_id},
                                       {"role", sep::to_string(a.role)}});
                    return arr;
                }()}});

    sep::MeasurementTiming timing = session.timing;
    std::map<std::string, std::vector<sep::TrpConfigListEntry>> per_gnb;

    if (selection->mode == SessionMode::MultiMonostatic) {
        for (const auto& a : selection->assignments) {
            sep::TrpConfigListEntry e;
            e.trp_id = a.trp.trp_id;
            e.role = sep::TrpRole::TxRx;
            e.mode = sep::SensingMode::Monostatic;
            e.resource = params_.default_resource;
            e.processing = params_.mono_processing;
            std::uint32_t beams = std::min(params_.sweep_beam_count, a.trp.beam_count);
            for (std::uint32_t b = 0; b < beams; ++b) {
                scene::BeamPattern beam;
                beam.pointing_azimuth_rad = -M_PI + kTwoPi * (b + 0.5) / beams;
                beam.pointing_zenith_rad = M_PI / 2.0;
                beam.beamwidth_rad = params_.sweep_beamwidth_rad;
                e.beams.push_back(beam);
            }
            per_gnb[a.trp.gnb_id].push_back(std::move(e));
        }
    } else {
        const TrpAssignment* tx = nullptr;
        for (const auto& a : selection->assignments)
            if (a.role == sep::TrpRole::Tx) tx = &a;
        session.tx_pos = tx->trp.position;
        // The joint procedure starts late enough for an abort to overtake
        // the first burst if any leg rejects.
        timing.start_delay_ms = params_.response_timeout_ms / 4.0;
        if (timing.one_shot) {
            // One-shot responses defer until after the burst, which would
            // leave the joint procedure without an abort window. Run the
            // measurement as a single-report periodic instead; the session
            // still delivers exactly one notification.
            timing.one_shot = false;
            timing.report_period_ms = params_.response_timeout_ms / 2.0;
            timing.duration_ms = timing.report_period_ms;
        }

        std::set<std::string> rx_gnbs;
        for (const auto& a : selection->assignments)
            if (a.role == sep::TrpRole::Rx) rx_gnbs.insert(a.trp.gnb_id);

        sep::TrpConfigListEntry tx_entry;
        tx_entry.trp_id = tx->trp.trp_id;
        tx_entry.role = sep::TrpRole::Tx;
        tx_entry.mode = sep::SensingMode::Bistatic;
        tx_entry.resource = params_.default_resource;
        tx_entry.processing.depth = l1::Depth::ChannelIQ;
        tx_entry.peer_gnb_ids.assign(rx_gnbs.begin(), rx_gnbs.end());
        per_gnb[tx->trp.gnb_id].push_back(std::move(tx_entry));

        geo::Point2 centroid = session.area_poly.centroid();
        for (const auto& a : selection->assignments) {
            if (a.role != sep::TrpRole::Rx) continue;
            sep::TrpConfigListEntry e;
            e.trp_id = a.trp.trp_id;
            e.role = sep::TrpRole::Rx;
            e.mode = sep::SensingMode::Bistatic;
            e.resource = params_.default_resource;
            e.processing = params_.bistatic_processing;
            e.peer = sep::PeerTrp{tx->trp.gnb_id, tx->trp.trp_id, tx->trp.position};
            scene::BeamPattern beam;
            beam.pointing_azimuth_rad =
                std::atan2(centroid.y - a.trp.position.y, centroid.x - a.trp.position.x);
            beam.pointing_zenith_rad = M_PI / 2.0;
            beam.beamwidth_rad = params_.bistatic_beamwidth_rad;
            e.beams.push_back(beam);
            per_gnb[a.trp.gnb_id].push_back(std::move(e));
        }
    }

    for (auto& [gnb_id, entries] : per_gnb) {
        Leg leg;
        leg.gnb_id = gnb_id;
        leg.semf_id = next_semf_measurement_id_++;
        leg.fsm = sep::SemfMeasurementFsm(leg.semf_id);
        leg.entries = entries;
        leg.reporting = std::any_of(entries.begin(), entries.end(),
                                    [](const auto& e) { return e.role != sep::TrpRole::Tx; });
        session.legs.push_back(std::move(leg));
    }
    session.sep_timing = timing;
    if (!timing.one_shot)
        session.expected_reports =
            static_cast<int>(timing.duration_ms / timing.report_period_ms + 1e-9);
    for (std::size_t li = 0; li < session.legs.size(); ++li) {
        Leg& leg = session.legs[li];
        leg_by_semf_id_[leg.semf_id] = {session.session_id, li};
        sep::SemfMeasurementFsm::Event ev;
        ev.kind = sep::SemfMeasurementFsm::Event::Kind::Start;
        ev.config = leg.entries;
        ev.timing = timing;
        process_leg_output(session, leg, leg.fsm.step(ev));
    }
}

void SemfNode::complete_nonreporting_legs(Session& session) {
    bool reporting_done = true;
    for (const auto& leg : session.legs) {
        if (!leg.reporting) continue;
        auto phase = leg.fsm.phase();
        if (phase != sep::Phase::Done && phase != sep::Phase::Failed) reporting_done = false;
    }
    if (!reporting_done) return;
    for (auto& leg : session.legs) {
        if (leg.reporting || leg.fsm.phase() != sep::Phase::Active) continue;
        sep::SemfMeasurementFsm::Event ev;
        ev.kind = sep::SemfMeasurementFsm::Event::Kind::DurationElapsed;
        process_leg_output(session, leg, leg.fsm.step(ev));
    }
}

void SemfNode::process_leg_output(Session& session, Leg& leg, const sep::FsmOutput& out) {
    for (const auto& msg : out.send) rt_.send_sep(leg.gnb_id, msg);
    for (const auto& action : out.actions) {
        if (action.kind == "start_response_timer") {
            auto session_id = session.session_id;
            auto semf_id = leg.semf_id;
            rt_.schedule_in(rt_.slots_for_ms(params_.response_timeout_ms), [this, session_id, semf_id] {
                Session* s = session_by_id(session_id);
                if (!s) return;
                for (auto& l : s->legs) {
                    if (l.semf_id != semf_id) continue;
                    if (l.fsm.phase() != sep::Phase::AwaitingResponse) return;
                    sep::SemfMeasurementFsm::Event ev;
                    ev.kind = sep::SemfMeasurementFsm::Event::Kind::ResponseTimeout;
                    process_leg_output(*s, l, l.fsm.step(ev));
                }
            });
        } else if (action.kind == "deliver_results") {
            leg.unfused = out.results;
            leg.has_unfused = true;
            leg.reports_delivered += 1;
            maybe_fuse(session);
            if (!session.sep_timing.one_shot && leg.reports_delivered >= session.expected_reports &&
                leg.fsm.phase() == sep::Phase::Active) {
                sep::SemfMeasurementFsm::Event ev;
                ev.kind = sep::SemfMeasurementFsm::Event::Kind::DurationElapsed;
                process_leg_output(session, leg, leg.fsm.step(ev));
                complete_nonreporting_legs(session);
            }
        } else if (action.kind == "notify_failure") {
            rt_.trace({{"ev", "leg_failed"},
                       {"session_id", session.session_id},
                       {"gnb", leg.gnb_id},
                       {"semf_id", leg.semf_id},
                       {"why", action.detail}});
            if (session.phase != SessionPhase::Active) continue;
            if (session.mode == SessionMode::Multistatic) {
                // Joint procedure: no sensing occurs if any leg fails. The
                // session fails first so leg teardown cannot re-complete it.
                fail_session(session, api::ApiCause::RanFailure,
                             "multistatic leg failed: " + action.detail);
                abort_all_legs(session);
            } else {
                bool any_alive = std::any_of(
                    session.legs.begin(), session.legs.end(), [](const Leg& l) {
                        return l.fsm.phase() == sep::Phase::Active ||
                               l.fsm.phase() == sep::Phase::AwaitingResponse;
                    });
                if (!any_alive) {
                    bool delivered_any = std::any_of(session.legs.begin(), session.legs.end(),
                                                     [](const Leg& l) { return l.reports_delivered > 0; });
                    if (session.timing.one_shot && delivered_any)
                        check_session_complete(session);
                    else
                        fail_session(session, api::ApiCause::RanFailure, "all legs failed");
                } else {
                    rt_.trace({{"ev", "session_degraded"},
                               {"session_id", session.session_id},
                               {"remaining_legs", [&] {
                                    int n = 0;
                                    for (const auto& l : session.legs)
                                        if (l.fsm.phase() == sep::Phase::Active ||
                                            l.fsm.phase() == sep::Phase::AwaitingResponse)
                                            ++n;
                                    return n;
                                }()}});
                }
            }
        } else if (action.kind == "measurement_complete") {
            check_session_complete(session);
        } else if (action.kind == "protocol_violation") {
            rt_.trace({{"ev", "protocol_violation"}, {"node", "semf"}, {"why", action.detail}});
        }
    }
    if (leg.fsm.phase() == sep::Phase::Terminating) {
        sep::SemfMeasurementFsm::Event ev;
        ev.kind = sep::SemfMeasurementFsm::Event::Kind::TerminationComplete;
        process_leg_output(session, leg, leg.fsm.step(ev));
    }
}

void SemfNode::maybe_fuse(Session& session) {
    bool ready = true;
    bool any = false;
    for (const auto& leg : session.legs) {
        if (!leg.reporting) continue;
        if (leg.fsm.phase() == sep::Phase::Failed) continue;
        any = true;
        if (!leg.has_unfused) ready = false;
    }
    if (any && ready) fuse_and_notify(session);
}

void SemfNode::fuse_and_notify(Session& session) {
    std::vector<FusedObject> fused;
    const double now = rt_.now_s();

    auto trp_position = [&](const std::string& gnb_id, const std::string& trp_id) -> Vec3 {
        auto it = registry_.by_gnb.find(gnb_id);
        if (it != registry_.by_gnb.end()) {
            for (const auto& t : it->second)
                if (t.trp_id == trp_id) return t.position;
        }
        return {};
    };

    if (session.mode == SessionMode::MultiMonostatic) {
        std::vector<MonoObservation> observations;
        for (auto& leg : session.legs) {
            if (!leg.has_unfused) continue;
            for (const auto& entry : leg.unfused) {
                Vec3 site = trp_position(leg.gnb_id, entry.trp_id);
                if (entry.payload.depth == l1::Depth::Targets4D) {
                    for (const auto& t : entry.payload.targets4d) {
                        MonoObservation o;
                        o.trp_id = entry.trp_id;
                        o.position = l1::localize_monostatic(t, site);
                        // Radial velocity component from the closing speed.
                        Vec3 u = scene::unit_from_angles(t.azimuth_rad, t.zenith_rad);
                        o.velocity = u * (-t.closing_speed_m_per_s / 2.0);
                        o.weight = db_to_power(std::min(t.power_db, 200.0));
                        observations.push_back(std::move(o));
                    }
                } else if (entry.payload.depth == l1::Depth::Objects) {
                    for (const auto& tr : entry.payload.objects) {
                        MonoObservation o;
                        o.trp_id = entry.trp_id;
                        o.position = tr.position;
                        o.velocity = tr.velocity;
                        o.weight = 1.0 + tr.hit_count;
                        observations.push_back(std::move(o));
                    }
                }
            }
        }
        fused = fuse_multimonostatic(observations, params_.fusion_gate_m);
    } else {
        std::map<std::string, MultistaticLeg> per_trp;
        for (auto& leg : session.legs) {
            if (!leg.has_unfused) continue;
            for (const auto& entry : leg.unfused) {
                if (entry.payload.depth != l1::Depth::Targets2D) continue;
                auto& ml = per_trp[entry.trp_id];
                ml.trp_id = entry.trp_id;
                ml.rx_pos = trp_position(leg.gnb_id, entry.trp_id);
                ml.points.insert(ml.points.end(), entry.payload.targets2d.begin(),
                                 entry.payload.targets2d.end());
            }
        }
        std::vector<MultistaticLeg> legs;
        for (auto& [id, ml] : per_trp) legs.push_back(std::move(ml));
        fused = fuse_multistatic(session.tx_pos, legs, params_.range_resolution_m(),
                                 params_.fusion_gate_m);
    }
    for (auto& leg : session.legs) {
        leg.has_unfused = false;
        leg.unfused.clear();
    }

    std::uint64_t oid = 1;
    for (auto& f : fused) {
        f.object_id = oid++;
        f.class_label = classify(f.position, f.velocity, geomap_);
    }
    session.tracker.update(fused, now);
    auto geomap_result = geomap_fuse(geomap_, std::move(fused));

    json objects = json::array();
    for (const auto& f : geomap_result.annotated) {
        objects.push_back({{"position", jsonio::to_json(f.position)},
                           {"velocity", jsonio::to_json(f.velocity)},
                           {"class", f.class_label},
                           {"confidence", f.confidence},
                           {"annotation", f.annotation},
                           {"trps", f.contributing_trp_ids}});
    }
    json predictions = json::array();
    for (const auto& p : session.tracker.predict(params_.track_horizon_s, now)) {
        predictions.push_back({{"track_id", p.track_id}, {"position", jsonio::to_json(p.position)}});
    }
    rt_.trace({{"ev", "fusion"},
               {"session_id", session.session_id},
               {"mode", to_string(session.mode)},
               {"objects", std::move(objects)},
               {"track_count", session.tracker.tracks().size()},
               {"predictions", std::move(predictions)},
               {"unconfirmed_statics", geomap_result.unconfirmed_statics}});

    ResultStoreEntry entry;
    entry.area = session.area_poly;
    entry.produced_at_s = now;
    entry.freshness_ttl_s = params_.result_ttl_s;
    entry.objects = geomap_result.annotated;
    entry.session_id = session.session_id;
    store_.insert(std::move(entry));

    notify(session, geomap_result.annotated);
}

api::MinimizedObject SemfNode::minimize(const FusedObject& obj,
                                        const MinimizationProfile& profile) const {
    api::MinimizedObject out;
    if (profile.fields.count("position")) {
        out.position = obj.position;
    } else if (profile.fields.count("position_coarse")) {
        auto coarse = [](double v) { return std::round(v / 10.0) * 10.0; };
        out.position = Vec3{coarse(obj.position.x), coarse(obj.position.y), coarse(obj.position.z)};
    }
    if (profile.fields.count("velocity")) out.velocity = obj.velocity;
    if (profile.fields.count("class")) out.object_class = obj.class_label;
    if (profile.fields.count("confidence")) out.confidence = obj.confidence;
    if (profile.fields.count("annotation") && !obj.annotation.empty()) out.annotation = obj.annotation;
    return out;
}

void SemfNode::notify(Session& session, const std::vector<FusedObject>& fused) {
    if (session.phase != SessionPhase::Active) {
        rt_.trace({{"ev", "notify_dropped"},
                   {"session_id", session.session_id},
                   {"why", "session not active"}});
        return;
    }
    api::SensingResultNotification note;
    note.session_id = session.session_id;
    note.timestamp_s = rt_.now_s();
    note.object_count = fused.size();
    std::set<std::string> fields_sent;
    for (const auto& f : fused) {
        auto min = minimize(f, session.profile);
        if (min.position) fields_sent.insert(session.profile.fields.count("position") ? "position"
                                                                                      : "position_coarse");
        if (min.velocity) fields_sent.insert("velocity");
        if (min.object_class) fields_sent.insert("class");
        if (min.confidence) fields_sent.insert("confidence");
        if (min.annotation) fields_sent.insert("annotation");
        note.results.push_back(std::move(min));
    }
    rt_.send_api(session.consumer, api::api_encode(note));
    json fields = json::array();
    for (const auto& f : fields_sent) fields.push_back(f);
    json profile = json::array();
    for (const auto& f : session.profile.fields) profile.push_back(f);
    rt_.trace({{"ev", "api_notification"},
               {"session_id", session.session_id},
               {"object_count", note.object_count},
               {"fields_sent", std::move(fields)},
               {"profile", std::move(profile)}});
}

void SemfNode::fail_session(Session& session, api::ApiCause cause, const std::string& why) {
    if (session.phase != SessionPhase::Active) return;
    session.phase = SessionPhase::Failed;
    send_api_failure(session.consumer, session.session_id, cause, why);
    rt_.trace({{"ev", "session_done"},
               {"session_id", session.session_id},
               {"outcome", "failed"},
               {"cause", to_string(cause)},
               {"why", why}});
}

void SemfNode::abort_all_legs(Session& session) {
    for (auto& leg : session.legs) {
        auto phase = leg.fsm.phase();
        if (phase != sep::Phase::Active && phase != sep::Phase::AwaitingResponse) continue;
        sep::SemfMeasurementFsm::Event ev;
        ev.kind = sep::SemfMeasurementFsm::Event::Kind::ApiAbort;
        process_leg_output(session, leg, leg.fsm.step(ev));
    }
}

void SemfNode::check_session_complete(Session& session) {
    if (session.phase != SessionPhase::Active) return;
    bool all_terminal = true;
    bool any_done = false;
    for (const auto& leg : session.legs) {
        auto phase = leg.fsm.phase();
        if (phase != sep::Phase::Done && phase != sep::Phase::Failed) all_terminal = false;
        if (phase == sep::Phase::Done) any_done = true;
    }
    if (all_terminal && any_done) {
        session.phase = SessionPhase::Done;
        rt_.trace({{"ev", "session_done"}, {"session_id", session.session_id}, {"outcome", "completed"}});
    }
}

void SemfNode::handle_sep(const std::string& from_gnb, const sep::SepMessage& msg) {
    if (const auto* resp = std::get_if<sep::TrpInformationResponse>(&msg)) {
        registry_.by_gnb[from_gnb] = resp->trp_info_list;
        discovery_outstanding_.erase(from_gnb);
        rt_.trace({{"ev", "trp_discovered"},
                   {"gnb", from_gnb},
                   {"trp_count", resp->trp_info_list.size()}});
        proceed_after_discovery();
        return;
    }
    if (std::holds_alternative<sep::TrpInformationFailure>(msg)) {
        int attempts = discovery_attempts_[from_gnb];
        if (attempts < 2) {
            discovery_attempts_[from_gnb] = attempts + 1;
            auto gnb = from_gnb;
            rt_.schedule_in(rt_.slots_for_ms(params_.discovery_backoff_ms),
                            [this, gnb] { rt_.send_sep(gnb, sep::TrpInformationRequest{}); });
            rt_.trace({{"ev", "trp_discovery_retry"}, {"gnb", from_gnb}, {"attempt", attempts + 1}});
        } else {
            registry_.unavailable.insert(from_gnb);
            discovery_outstanding_.erase(from_gnb);
            rt_.trace({{"ev", "gnb_unavailable"}, {"gnb", from_gnb}});
            proceed_after_discovery();
        }
        return;
    }

    std::uint64_t semf_id = std::visit(
        [](const auto& m) -> std::uint64_t {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, sep::SensingResponse> ||
                          std::is_same_v<T, sep::SensingFailure> ||
                          std::is_same_v<T, sep::SensingReport> ||
                          std::is_same_v<T, sep::SensingFailureIndication>)
                return m.semf_measurement_id;
            else
                return 0;
        },
        msg);
    auto it = leg_by_semf_id_.find(semf_id);
    if (semf_id == 0 || it == leg_by_semf_id_.end()) {
        rt_.trace({{"ev", "protocol_violation"},
                   {"node", "semf"},
                   {"why", std::string("unroutable ") + sep::message_type(msg)}});
        return;
    }
    Session* session = session_by_id(it->second.first);
    if (!session) return;
    Leg& leg = session->legs[it->second.second];
    sep::SemfMeasurementFsm::Event ev;
    ev.kind = sep::SemfMeasurementFsm::Event::Kind::Message;
    ev.message = msg;
    process_leg_output(*session, leg, leg.fsm.step(ev));
}

} // namespace isacsim::semf
