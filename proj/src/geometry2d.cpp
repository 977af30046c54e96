#include "isacsim/geometry2d.hpp"

#include <algorithm>
#include <cmath>

namespace isacsim::geo {

namespace {

double cross(const Point2& o, const Point2& a, const Point2& b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

bool on_segment(const Point2& a, const Point2& b, const Point2& p) {
    return std::min(a.x, b.x) - 1e-12 <= p.x && p.x <= std::max(a.x, b.x) + 1e-12 &&
           std::min(a.y, b.y) - 1e-12 <= p.y && p.y <= std::max(a.y, b.y) + 1e-12 &&
           std::abs(cross(a, b, p)) < 1e-9;
}

double point_segment_distance(const Point2& p, const Point2& a, const Point2& b) {
    double dx = b.x - a.x, dy = b.y - a.y;
    double len2 = dx * dx + dy * dy;
    double t = len2 > 0.0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    double px = a.x + t * dx - p.x, py = a.y + t * dy - p.y;
    return std::sqrt(px * px + py * py);
}

} // namespace

bool segments_intersect(const Point2& a, const Point2& b, const Point2& c, const Point2& d) {
    double d1 = cross(c, d, a);
    double d2 = cross(c, d, b);
    double d3 = cross(a, b, c);
    double d4 = cross(a, b, d);
    if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0)))
        return true;
    if (on_segment(c, d, a) || on_segment(c, d, b) || on_segment(a, b, c) || on_segment(a, b, d))
        return true;
    return false;
}

Polygon::Polygon(std::vector<Point2> vertices) : vertices_(std::move(vertices)) {
    if (vertices_.size() < 3) {
        simple_ = false;
        return;
    }
    simple_ = true;
    const std::size_t n = vertices_.size();
    for (std::size_t i = 0; i < n && simple_; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            // Adjacent edges share an endpoint; skip them.
            if (j == i || (j + 1) % n == i || (i + 1) % n == j) continue;
            if (segments_intersect(vertices_[i], vertices_[(i + 1) % n], vertices_[j],
                                   vertices_[(j + 1) % n])) {
                simple_ = false;
                break;
            }
        }
    }
}

bool Polygon::contains(const Point2& p) const {
    if (!valid()) return false;
    const std::size_t n = vertices_.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (on_segment(vertices_[i], vertices_[(i + 1) % n], p)) return true;
    }
    bool inside = false;
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Point2& vi = vertices_[i];
        const Point2& vj = vertices_[j];
        if ((vi.y > p.y) != (vj.y > p.y)) {
            double x_at = vj.x + (p.y - vj.y) / (vi.y - vj.y) * (vi.x - vj.x);
            if (p.x < x_at) inside = !inside;
        }
    }
    return inside;
}

bool Polygon::contains(const Polygon& other) const {
    if (!valid() || !other.valid()) return false;
    for (const auto& v : other.vertices_)
        if (!contains(v)) return false;
    const std::size_t n = vertices_.size();
    const std::size_t m = other.vertices_.size();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            // Proper edge crossings defeat containment even with all
            // vertices inside (concave cases).
            const Point2& a = vertices_[i];
            const Point2& b = vertices_[(i + 1) % n];
            const Point2& c = other.vertices_[j];
            const Point2& d = other.vertices_[(j + 1) % m];
            double d1 = cross(c, d, a);
            double d2 = cross(c, d, b);
            double d3 = cross(a, b, c);
            double d4 = cross(a, b, d);
            if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) &&
                ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0)))
                return false;
        }
    }
    return true;
}

bool Polygon::intersects(const Polygon& other) const {
    if (!valid() || !other.valid()) return false;
    for (const auto& v : other.vertices_)
        if (contains(v)) return true;
    for (const auto& v : vertices_)
        if (other.contains(v)) return true;
    const std::size_t n = vertices_.size();
    const std::size_t m = other.vertices_.size();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j)
            if (segments_intersect(vertices_[i], vertices_[(i + 1) % n], other.vertices_[j],
                                   other.vertices_[(j + 1) % m]))
                return true;
    return false;
}

Point2 Polygon::centroid() const {
    Point2 c{0, 0};
    for (const auto& v : vertices_) {
        c.x += v.x;
        c.y += v.y;
    }
    c.x /= static_cast<double>(vertices_.size());
    c.y /= static_cast<double>(vertices_.size());
    return c;
}

double Polygon::distance_to(const Point2& p) const {
    if (contains(p)) return 0.0;
    double best = std::numeric_limits<double>::infinity();
    const std::size_t n = vertices_.size();
    for (std::size_t i = 0; i < n; ++i)
        best = std::min(best, point_segment_distance(p, vertices_[i], vertices_[(i + 1) % n]));
    return best;
}

} // namespace isacsim::geo
