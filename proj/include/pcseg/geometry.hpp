#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "pcseg/error.hpp"

namespace pcseg {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::sqrt(dot(a, a)); }

/// Closed polygon in pixel coordinates. Closure is implied; the first point
/// is not repeated at the end. Image frame: y grows downward.
struct CartesianContour {
    std::vector<Vec2> points;

    /// Throws Degenerate on < 3 points or consecutive duplicates.
    void validate() const;
};

/// Closed contour as n_v radii on fixed equally-spaced rays about a center.
/// Ray k has implicit angle 2*pi*k/n_v, CCW from the +x axis; angles are
/// never stored per vertex.
struct PolarChain {
    Vec2 center;
    std::vector<double> radii;

    int n_v() const { return static_cast<int>(radii.size()); }
    double wedge_angle() const { return 2.0 * M_PI / static_cast<double>(n_v()); }
    double angle(int k) const { return wedge_angle() * static_cast<double>(k); }

    /// Throws Degenerate unless n_v >= 3 and all radii are finite and > 0.
    void validate() const;
};

struct Ray {
    Vec2 origin;
    double angle = 0.0;  // radians in [0, 2*pi)
};

/// Minimum radius after clamping; avoids degenerate wedge triangles in the
/// loss formulas, which divide by radius products.
constexpr double kRadiusFloor = 1e-3;

enum class PointLocation { Inside, Boundary, Outside };

PointLocation locate_point(const CartesianContour& contour, Vec2 p);

/// Distance from `center` along the ray at `angle` to the contour boundary.
/// Non-star-shaped contours can intersect a ray several times; the farthest
/// intersection is taken. Throws NoIntersection if the ray misses entirely.
double ray_hit_distance(const CartesianContour& contour, Vec2 center, double angle);

/// Samples the contour onto the n_v fixed rays about `center`.
/// Radii are floored at kRadiusFloor. Throws CenterOutside if the center is
/// not strictly inside the polygon.
PolarChain resample(const CartesianContour& contour, Vec2 center, int n_v);

/// Vertices of the chain: point k = center + radii[k] * (cos a_k, sin a_k).
CartesianContour to_cartesian(const PolarChain& chain);

/// Signed polygon area; positive when the vertex order is CCW in the
/// (x, y) coordinate algebra. Callers needing area magnitude take |.|.
double shoelace_area(const CartesianContour& contour);

/// Intersection point of the open segments (p1,p2) and (q1,q2), empty when
/// they do not cross. Throws Degenerate for collinear overlapping input.
std::optional<Vec2> segment_intersection(Vec2 p1, Vec2 p2, Vec2 q1, Vec2 q2);

void clamp_radii(PolarChain& chain, double r_min, double r_max);

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

/// Chain JSON: {"center":[cx,cy],"n_v":K,"radii":[...]}
PolarChain load_chain(const std::string& path);
void save_chain(const PolarChain& chain, const std::string& path);
std::string chain_to_json(const PolarChain& chain);
PolarChain chain_from_json(const std::string& text);

/// Contour text (IVUS label format): one "x y" pair per line, whitespace- or
/// comma-separated decimal floats, closure implied.
/// Throws ParseError (with line number) or TooFewPoints.
CartesianContour load_contour_text(const std::string& path);
void save_contour_text(const CartesianContour& contour, const std::string& path);

}  // namespace pcseg
