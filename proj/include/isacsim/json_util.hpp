#pragma once

#include <json.hpp>

#include "isacsim/grid.hpp"
#include "isacsim/l1sens.hpp"
#include "isacsim/scene.hpp"

namespace isacsim::jsonio {

using nlohmann::json;

// Complex values travel as [re, im] pairs; vectors as [x, y, z].

json to_json(const Complex& c);
Complex complex_from_json(const json& j);

json to_json(const scene::Vec3& v);
scene::Vec3 vec3_from_json(const json& j);

json to_json(const scene::BeamPattern& b);
scene::BeamPattern beam_from_json(const json& j);

json to_json(const ComplexGrid& g);
ComplexGrid grid_from_json(const json& j);

json to_json(const l1::Periodogram& p);
l1::Periodogram periodogram_from_json(const json& j);

json to_json(const l1::TargetPoint2D& t);
l1::TargetPoint2D target2d_from_json(const json& j);

json to_json(const l1::TargetPoint4D& t);
l1::TargetPoint4D target4d_from_json(const json& j);

json to_json(const l1::TrackState& t);
l1::TrackState track_from_json(const json& j);

json to_json(const l1::ProcessingConfig& c);
l1::ProcessingConfig processing_from_json(const json& j);

json to_json(const l1::SensingMeasurement& m);
l1::SensingMeasurement measurement_from_json(const json& j);

/// True when every number in the document is finite (canonical JSON cannot
/// carry NaN or infinities).
bool all_finite(const json& j);

/// Fetches a required key or throws Error with a JSON-path style message.
const json& require(const json& j, const char* key, const char* context);

} // namespace isacsim::jsonio
