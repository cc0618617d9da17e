#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace mpslam {

inline constexpr double kPi = 3.14159265358979323846;

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    double dot(const Vec2& o) const { return x * o.x + y * o.y; }
    double norm() const { return std::hypot(x, y); }
    double squared_norm() const { return x * x + y * y; }
};

using Point2 = Vec2;

/// Wrap an angle into the half-open interval [-pi, pi).
inline double wrap_angle(double a) {
    double w = a - 2.0 * kPi * std::floor((a + kPi) / (2.0 * kPi));
    // floor rounding can land exactly on +pi
    if (w >= kPi) w -= 2.0 * kPi;
    return w;
}

/// Reflecting surface, modeled as the infinite line through two distinct points.
struct WallSegment {
    Point2 a;
    Point2 b;
};

/// Static environment: physical anchor, its AOD reference orientation,
/// reflecting surfaces and point scatterers.
struct Environment {
    Point2 anchor;
    double anchor_aod_orientation = 0.0;
    std::vector<WallSegment> walls;
    std::vector<Point2> scatterers;
};

/// Array heading implied by the motion direction. Throws on zero velocity.
inline double orientation_from_velocity(const Vec2& v) {
    if (v.x == 0.0 && v.y == 0.0)
        throw std::invalid_argument("orientation_from_velocity: undefined orientation for zero velocity");
    return wrap_angle(std::atan2(v.y, v.x));
}

/// Reflect a point across the infinite line through the wall. Involution.
inline Point2 mirror_point(const Point2& p, const WallSegment& wall) {
    const Vec2 d = wall.b - wall.a;
    const double dd = d.squared_norm();
    if (dd <= 0.0)
        throw std::invalid_argument("mirror_point: degenerate wall (coincident endpoints)");
    const double t = (p - wall.a).dot(d) / dd;
    const Point2 foot = wall.a + d * t;
    return foot * 2.0 - p;
}

/// Virtual anchor for a reflection chain: the anchor mirrored across each wall
/// in order. Order matters for chains of length > 1.
inline Point2 virtual_anchor(const Point2& anchor, std::span<const WallSegment> chain) {
    Point2 p = anchor;
    for (const auto& w : chain) p = mirror_point(p, w);
    return p;
}

/// Direct path length agent <-> virtual anchor.
inline double dist_va(const Point2& p_agent, const Point2& p_va) {
    return (p_agent - p_va).norm();
}

/// Path length anchor -> scatterer -> agent.
inline double dist_ps(const Point2& p_agent, const Point2& p_ps, const Point2& p_anchor) {
    return (p_anchor - p_ps).norm() + (p_ps - p_agent).norm();
}

/// Azimuth of p_to as seen from p_from, relative to a reference orientation.
/// Result in [-pi, pi). Throws when the points coincide.
inline double bearing(const Point2& p_from, const Point2& p_to, double orientation) {
    const Vec2 d = p_to - p_from;
    if (d.x == 0.0 && d.y == 0.0)
        throw std::invalid_argument("bearing: coincident points");
    return wrap_angle(std::atan2(d.y, d.x) - orientation);
}

}  // namespace mpslam
