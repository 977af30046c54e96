#pragma once

// Single-node test harness implementing NodeRuntime with manual clock
// control and message capture.

#include <cmath>
#include <deque>
#include <vector>

#include "isacsim/runtime.hpp"

namespace isacsim::testgen {

class MockRuntime : public NodeRuntime {
public:
    explicit MockRuntime(double slot_duration_s = 14.0 / 30e3, std::uint64_t seed = 42)
        : slot_duration_s_(slot_duration_s), seed_(seed) {}

    std::int64_t slot = 0;

    std::int64_t now_slot() const override { return slot; }
    double now_s() const override { return slot * slot_duration_s_; }
    std::int64_t slots_for_ms(double ms) const override {
        return static_cast<std::int64_t>(std::ceil(ms / 1000.0 / slot_duration_s_ - 1e-9));
    }

    void send_sep(const std::string& to_node, const sep::SepMessage& msg) override {
        sep_sent.push_back({to_node, msg});
    }
    void send_xn(const std::string& to_gnb, const nlohmann::json& payload) override {
        xn_sent.push_back({to_gnb, payload});
    }
    void send_api(const std::string& consumer, const std::string& line) override {
        api_sent.push_back({consumer, line});
    }
    void schedule_in(std::int64_t delay_slots, std::function<void()> fn) override {
        scheduled.push_back({slot + delay_slots, std::move(fn)});
    }
    void trace(nlohmann::json event) override {
        event["t_slot"] = slot;
        trace_events.push_back(std::move(event));
    }
    std::uint64_t child_seed(std::string_view label, std::uint64_t a, std::uint64_t b) override {
        return derive_seed(seed_, label, a, b);
    }
    scene::SceneState scene_at(double t_s) override { return scene::advance(scene0, t_s); }

    /// Runs pending scheduled callbacks due at the current slot.
    void run_due() {
        for (auto it = scheduled.begin(); it != scheduled.end();) {
            if (it->first <= slot) {
                auto fn = std::move(it->second);
                it = scheduled.erase(it);
                fn();
            } else {
                ++it;
            }
        }
    }

    scene::SceneState scene0;
    std::vector<std::pair<std::string, sep::SepMessage>> sep_sent;
    std::vector<std::pair<std::string, nlohmann::json>> xn_sent;
    std::vector<std::pair<std::string, std::string>> api_sent;
    std::vector<std::pair<std::int64_t, std::function<void()>>> scheduled;
    std::vector<nlohmann::json> trace_events;

private:
    double slot_duration_s_;
    std::uint64_t seed_;
};

} // namespace isacsim::testgen
