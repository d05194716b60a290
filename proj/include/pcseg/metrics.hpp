#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pcseg/geometry.hpp"

namespace pcseg {

/// Cell-center occupancy raster of one polygon over a bounding box.
/// The grid is the brute-force oracle behind every closed-form area check;
/// no supersampling within cells, resolution is the accuracy knob.
struct RasterGrid {
    int resolution = 0;  // >= 64 and a power of two
    Vec2 lo;             // bounds, strictly containing the polygon(s)
    Vec2 hi;
    std::vector<std::uint8_t> occupancy;  // resolution * resolution cells, row-major

    bool occupied(int ix, int iy) const {
        return occupancy[static_cast<std::size_t>(iy) * resolution + ix] != 0;
    }

    static RasterGrid rasterize(const CartesianContour& poly, int resolution, Vec2 lo, Vec2 hi);
};

struct AreaEstimates {
    double area_a = 0.0;
    double area_b = 0.0;
    double area_intersection = 0.0;
    double area_union = 0.0;
};

/// Center-sampled area estimates of two polygons on a shared grid covering
/// both. Deterministic for fixed inputs.
AreaEstimates raster_area_ops(const CartesianContour& a, const CartesianContour& b,
                              int resolution);

/// Rasterized intersection-over-union. Throws ZeroUnion when both polygons
/// miss every cell center.
double global_jm(const CartesianContour& pred, const CartesianContour& gt, int resolution);

/// Standard symmetric Hausdorff distance max(sup-inf both ways).
/// Throws EmptySet on an empty input.
double hausdorff(const std::vector<Vec2>& x, const std::vector<Vec2>& y);

/// Maximum distance over all cross pairs (the set cross-diameter). This is
/// what the reference text prints as HD; always >= hausdorff.
double hd_paper_literal(const std::vector<Vec2>& x, const std::vector<Vec2>& y);

/// Boundary points of the contour with spacing <= max_spacing, vertices
/// included. HD over sparse polygon vertices underestimates the boundary
/// distance, so metric evaluation densifies first.
std::vector<Vec2> densify_contour(const CartesianContour& contour, double max_spacing = 0.5);

/// Per-image evaluation record.
struct MetricReport {
    std::string id;
    double jm_lumen = 0.0;
    double jm_media = 0.0;
    double hd_lumen = 0.0;
    double hd_media = 0.0;
    double hd_paper_literal_lumen = 0.0;
    double hd_paper_literal_media = 0.0;

    std::string to_json() const;
    static std::string csv_header();
    std::string to_csv_row() const;
};

}  // namespace pcseg
