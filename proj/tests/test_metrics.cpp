#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pcseg/metrics.hpp"
#include "pcseg/rng.hpp"
#include "pcseg/segment_loss.hpp"

using namespace pcseg;

namespace {

CartesianContour make_square(double lo, double hi) {
    return {{{lo, lo}, {hi, lo}, {hi, hi}, {lo, hi}}};
}

CartesianContour wedge_triangle(double r_i, double r_next, double theta) {
    return {{{0, 0}, {r_i, 0}, {r_next * std::cos(theta), r_next * std::sin(theta)}}};
}

CartesianContour random_star(Rng* rng, int n_v, double r_lo, double r_hi) {
    PolarChain chain;
    chain.center = {0, 0};
    for (int k = 0; k < n_v; ++k) chain.radii.push_back(rng->uniform(r_lo, r_hi));
    return to_cartesian(chain);
}

}  // namespace

TEST_CASE("raster areas of identical, disjoint and crossing shapes") {
    const CartesianContour unit = make_square(0, 1);
    const AreaEstimates same = raster_area_ops(unit, unit, 1024);
    CHECK(same.area_intersection == doctest::Approx(1.0).epsilon(2e-3));
    CHECK(same.area_union == doctest::Approx(1.0).epsilon(2e-3));
    CHECK(same.area_intersection == same.area_union);

    const AreaEstimates disjoint = raster_area_ops(unit, make_square(2, 3), 1024);
    CHECK(disjoint.area_intersection == 0.0);
    CHECK(disjoint.area_union == doctest::Approx(2.0).epsilon(2e-3));

    // The crossing-case wedge example: intersection 2/3, union 4/3.
    const AreaEstimates crossing = raster_area_ops(wedge_triangle(2, 1, M_PI / 2),
                                                   wedge_triangle(1, 2, M_PI / 2), 2048);
    CHECK(crossing.area_intersection == doctest::Approx(2.0 / 3.0).epsilon(2e-3));
    CHECK(crossing.area_union == doctest::Approx(4.0 / 3.0).epsilon(2e-3));
}

TEST_CASE("global_jm on identical, nested and disjoint polygons") {
    const CartesianContour tri{{{0, 0}, {2, 0}, {0, 2}}};
    CHECK(global_jm(tri, tri, 1024) == 1.0);
    const CartesianContour half{{{0, 0}, {1, 0}, {0, 1}}};
    CHECK(global_jm(tri, half, 1024) == doctest::Approx(0.25).epsilon(2e-3));
    CHECK(global_jm(make_square(0, 1), make_square(5, 6), 256) == 0.0);
}

TEST_CASE("degenerate polygons raise ZeroUnion") {
    const CartesianContour line{{{0, 0}, {1, 0}, {2, 0}}};
    CHECK_THROWS_WITH_AS(global_jm(line, line, 64), doctest::Contains("ZeroUnion"), Error);
}

TEST_CASE("raster resolution is validated") {
    const CartesianContour tri{{{0, 0}, {2, 0}, {0, 2}}};
    CHECK_THROWS_WITH_AS(raster_area_ops(tri, tri, 100), doctest::Contains("InvalidSpec"), Error);
    CHECK_THROWS_WITH_AS(raster_area_ops(tri, tri, 32), doctest::Contains("InvalidSpec"), Error);
}

TEST_CASE("RasterGrid occupancy agrees with the counting path") {
    Rng rng(3);
    for (int trial = 0; trial < 5; ++trial) {
        const CartesianContour a = random_star(&rng, 12, 0.4, 1.2);
        const CartesianContour b = random_star(&rng, 12, 0.4, 1.2);
        const AreaEstimates est = raster_area_ops(a, b, 128);
        // Rebuild from two explicit occupancy grids on the same bounds.
        double min_x = 1e30, min_y = 1e30, max_x = -1e30, max_y = -1e30;
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
        const Vec2 lo{min_x - pad_x, min_y - pad_y};
        const Vec2 hi{max_x + pad_x, max_y + pad_y};
        const RasterGrid ga = RasterGrid::rasterize(a, 128, lo, hi);
        const RasterGrid gb = RasterGrid::rasterize(b, 128, lo, hi);
        long na = 0, nb = 0, nab = 0;
        for (int y = 0; y < 128; ++y) {
            for (int x = 0; x < 128; ++x) {
                const bool ia = ga.occupied(x, y), ib = gb.occupied(x, y);
                na += ia;
                nb += ib;
                nab += ia && ib;
            }
        }
        const double cell = (hi.x - lo.x) / 128 * (hi.y - lo.y) / 128;
        CHECK(est.area_a == doctest::Approx(na * cell).epsilon(1e-12));
        CHECK(est.area_b == doctest::Approx(nb * cell).epsilon(1e-12));
        CHECK(est.area_intersection == doctest::Approx(nab * cell).epsilon(1e-12));
    }
}

TEST_CASE("hausdorff frozen examples") {
    const std::vector<Vec2> x{{0, 0}, {1, 0}};
    const std::vector<Vec2> y{{0, 0}, {2, 0}};
    CHECK(hausdorff(x, y) == doctest::Approx(1.0));
    CHECK(hd_paper_literal(x, y) == doctest::Approx(2.0));
    CHECK(hausdorff(x, x) == 0.0);
    CHECK(hd_paper_literal({{3, 4}}, {{3, 4}}) == 0.0);
    CHECK(hausdorff({{0, 0}}, {{3, 4}}) == doctest::Approx(5.0));
    CHECK(hd_paper_literal({{0, 0}}, {{3, 4}}) == doctest::Approx(5.0));
    CHECK_THROWS_WITH_AS(hausdorff({}, y), doctest::Contains("EmptySet"), Error);
    CHECK_THROWS_WITH_AS(hd_paper_literal(x, {}), doctest::Contains("EmptySet"), Error);
}

TEST_CASE("hausdorff axioms on random point sets") {
    Rng rng(17);
    auto random_points = [&rng](int n) {
        std::vector<Vec2> pts;
        for (int i = 0; i < n; ++i) pts.push_back({rng.uniform(-5, 5), rng.uniform(-5, 5)});
        return pts;
    };
    for (int trial = 0; trial < 200; ++trial) {
        const auto x = random_points(8 + trial % 9);
        const auto y = random_points(5 + trial % 7);
        const auto z = random_points(6 + trial % 5);
        const double xy = hausdorff(x, y);
        CHECK(xy == doctest::Approx(hausdorff(y, x)).epsilon(1e-12));
        CHECK(hausdorff(x, x) == 0.0);
        CHECK(hd_paper_literal(x, y) >= xy - 1e-12);
        CHECK(xy <= hausdorff(x, z) + hausdorff(z, y) + 1e-9);
    }
}

TEST_CASE("global_jm drifts little when the resolution doubles") {
    Rng rng(29);
    double worst = 0.0;
    for (int trial = 0; trial < 40; ++trial) {
        const CartesianContour a = random_star(&rng, 16, 0.3, 1.0);
        const CartesianContour b = random_star(&rng, 16, 0.3, 1.0);
        const double lo = global_jm(a, b, 512);
        const double hi = global_jm(a, b, 1024);
        worst = std::max(worst, std::abs(hi - lo));
    }
    CHECK(worst < std::max(2e-3, 4.0 / 512));
}

TEST_CASE("jm_exact agrees with the raster oracle on wedge triangles") {
    Rng rng(47);
    double worst = 0.0;
    for (int trial = 0; trial < 150; ++trial) {
        const double theta = 2.0 * M_PI / (16 << (trial % 3));
        const SegmentPair s{rng.uniform(0.1, 1), rng.uniform(0.1, 1), rng.uniform(0.1, 1),
                            rng.uniform(0.1, 1), theta};
        const double exact = jm_exact(s).jm;
        const double oracle = global_jm(wedge_triangle(s.r_i, s.r_next, theta),
                                        wedge_triangle(s.a_i, s.a_next, theta), 2048);
        worst = std::max(worst, std::abs(exact - oracle));
    }
    CHECK(worst < 2e-3);
}

TEST_CASE("densify keeps vertices and bounds the spacing") {
    const CartesianContour tri{{{0, 0}, {4, 0}, {0, 3}}};
    const auto pts = densify_contour(tri, 0.5);
    // Perimeter 12 at <= 0.5 spacing: at least 24 points.
    CHECK(pts.size() >= 24);
    for (const Vec2& v : tri.points) {
        double best = 1e30;
        for (const Vec2& p : pts) best = std::min(best, norm(p - v));
        CHECK(best == 0.0);
    }
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double gap = norm(pts[(i + 1) % pts.size()] - pts[i]);
        CHECK(gap <= 0.5 + 1e-9);
    }
}

TEST_CASE("metric report serialization") {
    MetricReport r;
    r.id = "img7";
    r.jm_lumen = 0.95;
    r.hd_media = 1.5;
    const std::string j = r.to_json();
    CHECK(j.find("\"jm_lumen\":0.95") != std::string::npos);
    CHECK(j.find("\"hd_paper_literal_lumen\"") != std::string::npos);
    CHECK(MetricReport::csv_header().find("hd_paper_literal_media") != std::string::npos);
    CHECK(r.to_csv_row().substr(0, 5) == "img7,");
}
