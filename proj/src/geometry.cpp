#include "pcseg/geometry.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace pcseg {

namespace {

double bbox_diagonal(const CartesianContour& c) {
    double min_x = std::numeric_limits<double>::max(), min_y = min_x;
    double max_x = std::numeric_limits<double>::lowest(), max_y = max_x;
    for (const Vec2& p : c.points) {
        min_x = std::min(min_x, p.x);
        min_y = std::min(min_y, p.y);
        max_x = std::max(max_x, p.x);
        max_y = std::max(max_y, p.y);
    }
    return std::hypot(max_x - min_x, max_y - min_y);
}

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
    const Vec2 ab = b - a;
    const double len2 = dot(ab, ab);
    if (len2 == 0.0) return norm(p - a);
    const double t = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
    return norm(p - (a + t * ab));
}

}  // namespace

void CartesianContour::validate() const {
    if (points.size() < 3) {
        throw Error("Degenerate", "contour needs at least 3 points, got " +
                                      std::to_string(points.size()));
    }
    for (std::size_t i = 0; i < points.size(); ++i) {
        const Vec2& a = points[i];
        const Vec2& b = points[(i + 1) % points.size()];
        if (a.x == b.x && a.y == b.y) {
            throw Error("Degenerate",
                        "consecutive duplicate point at index " + std::to_string(i));
        }
        if (!std::isfinite(a.x) || !std::isfinite(a.y)) {
            throw Error("Degenerate", "non-finite coordinate at index " + std::to_string(i));
        }
    }
}

void PolarChain::validate() const {
    if (n_v() < 3) {
        throw Error("Degenerate", "chain needs n_v >= 3, got " + std::to_string(n_v()));
    }
    for (int k = 0; k < n_v(); ++k) {
        if (!(radii[k] > 0.0) || !std::isfinite(radii[k])) {
            throw Error("Degenerate", "radius " + std::to_string(k) + " must be finite and > 0");
        }
    }
}

PointLocation locate_point(const CartesianContour& contour, Vec2 p) {
    const double eps = 1e-9 * std::max(1.0, bbox_diagonal(contour));
    const std::size_t n = contour.points.size();
    int crossings = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2& a = contour.points[i];
        const Vec2& b = contour.points[(i + 1) % n];
        if (point_segment_distance(p, a, b) <= eps) return PointLocation::Boundary;
        // Half-open rule in y so shared vertices count once.
        if ((a.y > p.y) != (b.y > p.y)) {
            const double x_int = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if (x_int > p.x) ++crossings;
        }
    }
    return (crossings % 2 == 1) ? PointLocation::Inside : PointLocation::Outside;
}

double ray_hit_distance(const CartesianContour& contour, Vec2 center, double angle) {
    const Vec2 dir{std::cos(angle), std::sin(angle)};
    const std::size_t n = contour.points.size();
    double best = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2& a = contour.points[i];
        const Vec2 e = contour.points[(i + 1) % n] - a;
        const double den = cross(dir, e);
        if (den == 0.0) continue;  // edge parallel to the ray; neighbors cover its endpoints
        const Vec2 w = a - center;
        const double t = cross(w, e) / den;
        const double u = cross(w, dir) / den;
        if (t > 1e-12 && u >= -1e-12 && u <= 1.0 + 1e-12) best = std::max(best, t);
    }
    if (best < 0.0) {
        throw Error("NoIntersection",
                    "ray at angle " + std::to_string(angle) + " misses the contour");
    }
    return best;
}

PolarChain resample(const CartesianContour& contour, Vec2 center, int n_v) {
    contour.validate();
    if (n_v < 3) throw Error("Degenerate", "n_v must be >= 3");
    if (locate_point(contour, center) != PointLocation::Inside) {
        throw Error("CenterOutside", "resampling center is not strictly inside the contour");
    }
    PolarChain chain;
    chain.center = center;
    chain.radii.resize(n_v);
    const double step = 2.0 * M_PI / static_cast<double>(n_v);
    for (int k = 0; k < n_v; ++k) {
        chain.radii[k] = std::max(kRadiusFloor, ray_hit_distance(contour, center, step * k));
    }
    return chain;
}

CartesianContour to_cartesian(const PolarChain& chain) {
    chain.validate();
    CartesianContour c;
    c.points.reserve(chain.radii.size());
    for (int k = 0; k < chain.n_v(); ++k) {
        const double a = chain.angle(k);
        c.points.push_back(chain.center + chain.radii[k] * Vec2{std::cos(a), std::sin(a)});
    }
    return c;
}

double shoelace_area(const CartesianContour& contour) {
    contour.validate();
    const std::size_t n = contour.points.size();
    double twice = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2& a = contour.points[i];
        const Vec2& b = contour.points[(i + 1) % n];
        twice += a.x * b.y - b.x * a.y;
    }
    return 0.5 * twice;
}

std::optional<Vec2> segment_intersection(Vec2 p1, Vec2 p2, Vec2 q1, Vec2 q2) {
    const Vec2 d1 = p2 - p1;
    const Vec2 d2 = q2 - q1;
    if ((d1.x == 0.0 && d1.y == 0.0) || (d2.x == 0.0 && d2.y == 0.0)) {
        throw Error("Degenerate", "zero-length segment");
    }
    const double den = cross(d1, d2);
    const Vec2 w = q1 - p1;
    if (den == 0.0) {
        if (cross(w, d1) != 0.0) return std::nullopt;  // parallel, distinct lines
        // Collinear: overlap of positive length is ambiguous.
        const double len2 = dot(d1, d1);
        double t0 = dot(w, d1) / len2;
        double t1 = dot(q2 - p1, d1) / len2;
        if (t0 > t1) std::swap(t0, t1);
        if (t1 > 0.0 && t0 < 1.0) {
            throw Error("Degenerate", "collinear overlapping segments");
        }
        return std::nullopt;
    }
    const double t = cross(w, d2) / den;
    const double u = cross(w, d1) / den;
    if (t <= 0.0 || t >= 1.0 || u <= 0.0 || u >= 1.0) return std::nullopt;
    return p1 + t * d1;
}

void clamp_radii(PolarChain& chain, double r_min, double r_max) {
    for (double& r : chain.radii) r = std::clamp(r, r_min, r_max);
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

std::string chain_to_json(const PolarChain& chain) {
    nlohmann::json j;
    j["center"] = {chain.center.x, chain.center.y};
    j["n_v"] = chain.n_v();
    j["radii"] = chain.radii;
    return j.dump();
}

PolarChain chain_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error("ParseError", std::string("chain JSON: ") + e.what());
    }
    PolarChain chain;
    try {
        chain.center = {j.at("center").at(0).get<double>(), j.at("center").at(1).get<double>()};
        chain.radii = j.at("radii").get<std::vector<double>>();
        if (j.at("n_v").get<int>() != chain.n_v()) {
            throw Error("ParseError", "chain JSON: n_v does not match radii length");
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error("ParseError", std::string("chain JSON: ") + e.what());
    }
    chain.validate();
    return chain;
}

PolarChain load_chain(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("IoError", "cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return chain_from_json(ss.str());
}

void save_chain(const PolarChain& chain, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("IoError", "cannot write " + path);
    out << chain_to_json(chain) << "\n";
}

CartesianContour load_contour_text(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("IoError", "cannot open " + path);
    CartesianContour c;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        for (char& ch : line) {
            if (ch == ',') ch = ' ';
        }
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;  // blank line
        std::istringstream ls(line);
        double x, y;
        if (!(ls >> x) || !(ls >> y)) {
            throw Error("ParseError", path + ":" + std::to_string(line_no) +
                                          ": expected an 'x y' coordinate pair");
        }
        std::string rest;
        if (ls >> rest) {
            throw Error("ParseError", path + ":" + std::to_string(line_no) +
                                          ": trailing content '" + rest + "'");
        }
        c.points.push_back({x, y});
    }
    if (c.points.size() < 3) {
        throw Error("TooFewPoints", path + ": got " + std::to_string(c.points.size()) +
                                        " points, need at least 3");
    }
    return c;
}

void save_contour_text(const CartesianContour& contour, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("IoError", "cannot write " + path);
    char buf[80];
    for (const Vec2& p : contour.points) {
        std::snprintf(buf, sizeof(buf), "%.6f %.6f\n", p.x, p.y);
        out << buf;
    }
}

}  // namespace pcseg
