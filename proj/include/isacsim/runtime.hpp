#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "isacsim/scene.hpp"
#include "isacsim/sep.hpp"

namespace isacsim {

/// Services the simulator provides to a node (SeMF or gNB). One instance per
/// node, with the sender identity bound, so nodes stay unit-testable against
/// a mock.
class NodeRuntime {
public:
    virtual ~NodeRuntime() = default;

    virtual std::int64_t now_slot() const = 0;
    virtual double now_s() const = 0;
    /// Milliseconds rounded up to whole slots (at least 1 when ms > 0).
    virtual std::int64_t slots_for_ms(double ms) const = 0;

    /// Control-plane (NG-C analogue) transfer of an encoded SeP frame.
    virtual void send_sep(const std::string& to_node, const sep::SepMessage& msg) = 0;
    /// RAN-internal low-delay link (Xn analogue) for handshake payloads.
    virtual void send_xn(const std::string& to_gnb, const nlohmann::json& payload) = 0;
    /// Northbound delivery of one encoded ISaC-API line to a consumer.
    virtual void send_api(const std::string& consumer, const std::string& line) = 0;

    virtual void schedule_in(std::int64_t delay_slots, std::function<void()> fn) = 0;

    /// Appends a structured event to the run trace; the simulator stamps the
    /// time fields.
    virtual void trace(nlohmann::json event) = 0;

    virtual std::uint64_t child_seed(std::string_view label, std::uint64_t a, std::uint64_t b) = 0;

    /// Ground-truth scene at a simulation time (constant-velocity motion).
    virtual scene::SceneState scene_at(double t_s) = 0;
};

} // namespace isacsim
