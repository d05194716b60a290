#include "pcseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace pcseg {

namespace {

void check_resolution(int resolution) {
    if (resolution < 64 || (resolution & (resolution - 1)) != 0) {
        throw Error("InvalidSpec",
                    "raster resolution must be >= 64 and a power of two, got " +
                        std::to_string(resolution));
    }
}

struct Bounds {
    Vec2 lo, hi;
};

Bounds joint_bounds(const CartesianContour& a, const CartesianContour& b) {
    double min_x = std::numeric_limits<double>::max(), min_y = min_x;
    double max_x = std::numeric_limits<double>::lowest(), max_y = max_x;
    for (const CartesianContour* c : {&a, &b}) {
        for (const Vec2& p : c->points) {
            min_x = std::min(min_x, p.x);
            min_y = std::min(min_y, p.y);
            max_x = std::max(max_x, p.x);
            max_y = std::max(max_y, p.y);
        }
    }
    const double pad_x = std::max(1e-9, 0.005 * (max_x - min_x));
    const double pad_y = std::max(1e-9, 0.005 * (max_y - min_y));
    return {{min_x - pad_x, min_y - pad_y}, {max_x + pad_x, max_y + pad_y}};
}

// x positions where the polygon boundary crosses the horizontal line at y,
// sorted; consecutive pairs bound the inside runs (even-odd rule, half-open
// in y so shared vertices count once).
void scanline_crossings(const CartesianContour& poly, double y, std::vector<double>* xs) {
    xs->clear();
    const std::size_t n = poly.points.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2& a = poly.points[i];
        const Vec2& b = poly.points[(i + 1) % n];
        if ((a.y > y) != (b.y > y)) {
            xs->push_back(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
        }
    }
    std::sort(xs->begin(), xs->end());
}

// Number of cell centers x0 + (i + 0.5) * dx, i in [0, res), lying in [lo, hi).
long count_centers(double lo, double hi, double x0, double dx, int res) {
    if (hi <= lo) return 0;
    long first = static_cast<long>(std::ceil((lo - x0) / dx - 0.5));
    long last = static_cast<long>(std::ceil((hi - x0) / dx - 0.5)) - 1;
    first = std::max(first, 0L);
    last = std::min(last, static_cast<long>(res) - 1);
    return last >= first ? last - first + 1 : 0;
}

}  // namespace

RasterGrid RasterGrid::rasterize(const CartesianContour& poly, int resolution, Vec2 lo, Vec2 hi) {
    check_resolution(resolution);
    poly.validate();
    RasterGrid grid;
    grid.resolution = resolution;
    grid.lo = lo;
    grid.hi = hi;
    grid.occupancy.assign(static_cast<std::size_t>(resolution) * resolution, 0);
    const double dx = (hi.x - lo.x) / resolution;
    const double dy = (hi.y - lo.y) / resolution;
    std::vector<double> xs;
    for (int j = 0; j < resolution; ++j) {
        const double y = lo.y + (j + 0.5) * dy;
        scanline_crossings(poly, y, &xs);
        for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
            long first = static_cast<long>(std::ceil((xs[k] - lo.x) / dx - 0.5));
            long last = static_cast<long>(std::ceil((xs[k + 1] - lo.x) / dx - 0.5)) - 1;
            first = std::max(first, 0L);
            last = std::min(last, static_cast<long>(resolution) - 1);
            for (long i = first; i <= last; ++i) {
                grid.occupancy[static_cast<std::size_t>(j) * resolution + i] = 1;
            }
        }
    }
    return grid;
}

AreaEstimates raster_area_ops(const CartesianContour& a, const CartesianContour& b,
                              int resolution) {
    check_resolution(resolution);
    a.validate();
    b.validate();
    const Bounds bounds = joint_bounds(a, b);
    const double dx = (bounds.hi.x - bounds.lo.x) / resolution;
    const double dy = (bounds.hi.y - bounds.lo.y) / resolution;
    const double cell = dx * dy;

    long count_a = 0, count_b = 0, count_ab = 0;
    std::vector<double> xa, xb;
    for (int j = 0; j < resolution; ++j) {
        const double y = bounds.lo.y + (j + 0.5) * dy;
        scanline_crossings(a, y, &xa);
        scanline_crossings(b, y, &xb);
        for (std::size_t k = 0; k + 1 < xa.size(); k += 2) {
            count_a += count_centers(xa[k], xa[k + 1], bounds.lo.x, dx, resolution);
        }
        for (std::size_t k = 0; k + 1 < xb.size(); k += 2) {
            count_b += count_centers(xb[k], xb[k + 1], bounds.lo.x, dx, resolution);
        }
        // Pairwise interval overlaps give the intersection cells.
        for (std::size_t k = 0; k + 1 < xa.size(); k += 2) {
            for (std::size_t m = 0; m + 1 < xb.size(); m += 2) {
                count_ab += count_centers(std::max(xa[k], xb[m]), std::min(xa[k + 1], xb[m + 1]),
                                          bounds.lo.x, dx, resolution);
            }
        }
    }
    AreaEstimates est;
    est.area_a = count_a * cell;
    est.area_b = count_b * cell;
    est.area_intersection = count_ab * cell;
    est.area_union = (count_a + count_b - count_ab) * cell;
    return est;
}

double global_jm(const CartesianContour& pred, const CartesianContour& gt, int resolution) {
    const AreaEstimates est = raster_area_ops(pred, gt, resolution);
    if (est.area_union <= 0.0) {
        throw Error("ZeroUnion", "both polygons are degenerate at this resolution");
    }
    return est.area_intersection / est.area_union;
}

namespace {

double directed_hausdorff(const std::vector<Vec2>& x, const std::vector<Vec2>& y) {
    double worst = 0.0;
    for (const Vec2& p : x) {
        double best = std::numeric_limits<double>::max();
        for (const Vec2& q : y) {
            const Vec2 d = p - q;
            best = std::min(best, dot(d, d));
            if (best <= worst) break;  // cannot raise the max
        }
        worst = std::max(worst, best);
    }
    return std::sqrt(worst);
}

}  // namespace

double hausdorff(const std::vector<Vec2>& x, const std::vector<Vec2>& y) {
    if (x.empty() || y.empty()) throw Error("EmptySet", "hausdorff needs nonempty sets");
    return std::max(directed_hausdorff(x, y), directed_hausdorff(y, x));
}

double hd_paper_literal(const std::vector<Vec2>& x, const std::vector<Vec2>& y) {
    if (x.empty() || y.empty()) throw Error("EmptySet", "hd needs nonempty sets");
    double worst = 0.0;
    for (const Vec2& p : x) {
        for (const Vec2& q : y) {
            const Vec2 d = p - q;
            worst = std::max(worst, dot(d, d));
        }
    }
    return std::sqrt(worst);
}

std::vector<Vec2> densify_contour(const CartesianContour& contour, double max_spacing) {
    contour.validate();
    std::vector<Vec2> points;
    const std::size_t n = contour.points.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2& a = contour.points[i];
        const Vec2& b = contour.points[(i + 1) % n];
        const double len = norm(b - a);
        const int steps = std::max(1, static_cast<int>(std::ceil(len / max_spacing)));
        for (int s = 0; s < steps; ++s) {
            points.push_back(a + (static_cast<double>(s) / steps) * (b - a));
        }
    }
    return points;
}

std::string MetricReport::to_json() const {
    nlohmann::json j;
    j["id"] = id;
    j["jm_lumen"] = jm_lumen;
    j["jm_media"] = jm_media;
    j["hd_lumen"] = hd_lumen;
    j["hd_media"] = hd_media;
    j["hd_paper_literal_lumen"] = hd_paper_literal_lumen;
    j["hd_paper_literal_media"] = hd_paper_literal_media;
    return j.dump();
}

std::string MetricReport::csv_header() {
    return "id,jm_lumen,jm_media,hd_lumen,hd_media,hd_paper_literal_lumen,hd_paper_literal_media";
}

std::string MetricReport::to_csv_row() const {
    std::ostringstream os;
    os.precision(9);
    os << id << ',' << jm_lumen << ',' << jm_media << ',' << hd_lumen << ',' << hd_media << ','
       << hd_paper_literal_lumen << ',' << hd_paper_literal_media;
    return os.str();
}

}  // namespace pcseg
