#pragma once

#include <vector>

#include "isacsim/common.hpp"
#include "isacsim/isac_api.hpp"

namespace isacsim::geo {

using api::Point2;

/// Simple (non-self-intersecting) polygon in the ground plane. Containment
/// is boundary-inclusive.
class Polygon {
public:
    Polygon() = default;
    explicit Polygon(std::vector<Point2> vertices);

    const std::vector<Point2>& vertices() const { return vertices_; }
    bool valid() const { return vertices_.size() >= 3 && simple_; }

    bool contains(const Point2& p) const;
    /// Every vertex of `other` inside this polygon and no edge crossings.
    bool contains(const Polygon& other) const;
    bool intersects(const Polygon& other) const;
    Point2 centroid() const;
    /// Zero when the point lies inside; otherwise distance to the boundary.
    double distance_to(const Point2& p) const;

private:
    std::vector<Point2> vertices_;
    bool simple_ = false;
};

/// Strict segment intersection including collinear overlap and endpoint
/// touches.
bool segments_intersect(const Point2& a, const Point2& b, const Point2& c, const Point2& d);

} // namespace isacsim::geo
