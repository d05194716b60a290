#include "pcseg/segment_loss.hpp"

#include <cmath>

#include <json.hpp>

#include "pcseg/dual.hpp"

namespace pcseg {

void SegmentPair::validate() const {
    if (!(r_i > 0.0) || !(r_next > 0.0) || !(a_i > 0.0) || !(a_next > 0.0)) {
        throw Error("Degenerate", "segment radii must be > 0");
    }
    if (!(theta > 0.0) || !(theta < M_PI)) {
        throw Error("Degenerate", "wedge angle must lie in (0, pi)");
    }
}

int case_number(SegmentCaseKind kind) {
    switch (kind) {
        case SegmentCaseKind::ContainedPredInGT: return 1;
        case SegmentCaseKind::ContainedGTInPred: return 2;
        case SegmentCaseKind::CrossLeftOverObtuse: return 3;
        case SegmentCaseKind::CrossRightOver: return 4;
        case SegmentCaseKind::CrossLeftOver: return 5;
        case SegmentCaseKind::CrossRightOverObtuse: return 6;
    }
    return 0;
}

const char* case_name(SegmentCaseKind kind) {
    switch (kind) {
        case SegmentCaseKind::ContainedPredInGT: return "ContainedPredInGT";
        case SegmentCaseKind::ContainedGTInPred: return "ContainedGTInPred";
        case SegmentCaseKind::CrossLeftOverObtuse: return "CrossLeftOverObtuse";
        case SegmentCaseKind::CrossRightOver: return "CrossRightOver";
        case SegmentCaseKind::CrossLeftOver: return "CrossLeftOver";
        case SegmentCaseKind::CrossRightOverObtuse: return "CrossRightOverObtuse";
    }
    return "?";
}

namespace {

// Crossing point of the predicted and ground-truth chords in the local wedge
// frame. Only valid when the radii deviate with opposite signs on the two
// rays, which makes the parameter denominator provably nonzero.
template <typename S>
void chord_crossing(S r_i, S r_next, double a_i, double a_next, double theta, S* x, S* y) {
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    const S t = a_next * (a_i - r_i) / (a_i * r_next - a_next * r_i);
    *x = r_i + t * (r_next * c - r_i);
    *y = t * (r_next * s);
}

// IoU of the two wedge triangles; generic over the scalar so Dual2 recovers
// the partials of the active branch.
Dual2 jm_exact_dual(double r_i_v, double r_next_v, double a_i, double a_next, double theta) {
    const Dual2 r_i = Dual2::var0(r_i_v);
    const Dual2 r_next = Dual2::var1(r_next_v);
    const Dual2 rr = r_i * r_next;
    const double aa = a_i * a_next;
    if ((r_i_v <= a_i && r_next_v <= a_next) || (r_i_v >= a_i && r_next_v >= a_next)) {
        // min*min / max*max; ties resolve to the predicted radii so that the
        // subgradient vanishes at r == a (the factors cancel exactly).
        return (min(r_i, Dual2(a_i)) * min(r_next, Dual2(a_next))) /
               (max(r_i, Dual2(a_i)) * max(r_next, Dual2(a_next)));
    }

    const double c = std::cos(theta);
    const double s = std::sin(theta);
    Dual2 xx, xy;
    chord_crossing(r_i, r_next, a_i, a_next, theta, &xx, &xy);

    // Overlap quadrilateral (apex, min vertex on ray i, crossing, min vertex
    // on ray i+1); the apex terms of the shoelace sum vanish.
    const Dual2 m_i = min(r_i, Dual2(a_i));
    const Dual2 m_next = min(r_next, Dual2(a_next));
    const Dual2 intersection =
        0.5 * (m_i * xy + xx * (m_next * s) - (m_next * c) * xy);
    const Dual2 pred_area = 0.5 * s * rr;
    const double gt_area = 0.5 * s * aa;
    const Dual2 union_area = pred_area + gt_area - intersection;
    return intersection / union_area;
}

}  // namespace

SegmentCase classify(const SegmentPair& seg) {
    seg.validate();
    SegmentCase result;
    if (seg.r_i <= seg.a_i && seg.r_next <= seg.a_next) {
        result.kind = SegmentCaseKind::ContainedPredInGT;
        return result;
    }
    if (seg.r_i >= seg.a_i && seg.r_next >= seg.a_next) {
        result.kind = SegmentCaseKind::ContainedGTInPred;
        return result;
    }
    double xx, xy;
    chord_crossing(seg.r_i, seg.r_next, seg.a_i, seg.a_next, seg.theta, &xx, &xy);
    result.crossing = Vec2{xx, xy};

    const double c = std::cos(seg.theta);
    const double s = std::sin(seg.theta);
    const double m_i = std::min(seg.r_i, seg.a_i);
    const double m_next = std::min(seg.r_next, seg.a_next);
    // Interior angle of the overlap quadrilateral at the crossing point.
    const Vec2 to_i{m_i - xx, -xy};
    const Vec2 to_next{m_next * c - xx, m_next * s - xy};
    const bool obtuse = dot(to_i, to_next) < 0.0;
    const bool right_over = seg.r_i > seg.a_i;
    if (right_over) {
        result.kind = obtuse ? SegmentCaseKind::CrossRightOverObtuse
                             : SegmentCaseKind::CrossRightOver;
    } else {
        result.kind = obtuse ? SegmentCaseKind::CrossLeftOverObtuse
                             : SegmentCaseKind::CrossLeftOver;
    }
    return result;
}

CaseIIIGeometry case_iii_geometry(const SegmentPair& seg, const SegmentCase& segment_case) {
    if (!segment_case.crossing) {
        throw Error("Degenerate", "case geometry requires a crossing case");
    }
    const double c = std::cos(seg.theta);
    const double s = std::sin(seg.theta);
    const Vec2 x = *segment_case.crossing;
    const Vec2 gt_i{seg.a_i, 0.0};
    const Vec2 gt_next{seg.a_next * c, seg.a_next * s};
    const Vec2 pred_i{seg.r_i, 0.0};
    const Vec2 pred_next{seg.r_next * c, seg.r_next * s};

    CaseIIIGeometry g;
    g.theta_i0 = seg.theta;
    g.a = norm(gt_next - x);
    g.b = norm(x - gt_i);
    g.c = norm(pred_next - x);
    g.d = norm(x - pred_i);
    g.k1 = norm(gt_i - gt_next);
    const Vec2 gt_dir = gt_i - gt_next;
    g.theta_ia = std::acos(std::clamp(gt_dir.x / g.k1, -1.0, 1.0));
    const Vec2 pred_dir = pred_next - pred_i;
    g.theta_ic = std::acos(std::clamp(pred_dir.x / norm(pred_dir), -1.0, 1.0));
    g.theta_id = g.theta_ic;
    g.theta_ib = 0.5 * M_PI - g.theta_ic;
    g.p = g.a * std::cos(g.theta_ia);
    return g;
}

ExactJm jm_exact(const SegmentPair& seg) {
    seg.validate();
    const Dual2 jm = jm_exact_dual(seg.r_i, seg.r_next, seg.a_i, seg.a_next, seg.theta);
    return {jm.v, jm.d0, jm.d1};
}

PaperJm jm_paper(const SegmentPair& seg, const SegmentCase& segment_case) {
    seg.validate();
    const Dual2 r_i = Dual2::var0(seg.r_i);
    const Dual2 r_next = Dual2::var1(seg.r_next);
    const Dual2 rr = r_i * r_next;
    const double aa = seg.a_i * seg.a_next;

    Dual2 jm;
    switch (segment_case.kind) {
        case SegmentCaseKind::ContainedPredInGT:
            if (std::abs(aa - rr.v) < 1e-9) {
                throw Error("SingularDenominator", "case 1 denominator a*a - r*r vanishes");
            }
            jm = rr / (aa - rr);
            break;
        case SegmentCaseKind::ContainedGTInPred:
        case SegmentCaseKind::CrossRightOver:
        case SegmentCaseKind::CrossLeftOver:
            if (std::abs(rr.v - aa) < 1e-9) {
                throw Error("SingularDenominator",
                            "case " + std::to_string(case_number(segment_case.kind)) +
                                " denominator r*r - a*a vanishes");
            }
            jm = -rr / (rr - aa);
            break;
        case SegmentCaseKind::CrossLeftOverObtuse:
        case SegmentCaseKind::CrossRightOverObtuse:
            // The crossing construction re-derived from the chord
            // intersection; numerically this coincides with jm_exact.
            jm = jm_exact_dual(seg.r_i, seg.r_next, seg.a_i, seg.a_next, seg.theta);
            break;
    }
    const Dual2 eps = 1.0 - jm;
    return {jm.v, eps.v, eps.d0, eps.d1};
}

double paper_literal_epsilon(const SegmentPair& seg, SegmentCaseKind kind) {
    const double rr = seg.r_i * seg.r_next;
    const double aa = seg.a_i * seg.a_next;
    switch (kind) {
        case SegmentCaseKind::ContainedPredInGT:
            return -aa / (rr - aa);
        case SegmentCaseKind::ContainedGTInPred:
        case SegmentCaseKind::CrossRightOver:
        case SegmentCaseKind::CrossLeftOver:
            return (2.0 * rr - aa) / (rr - aa);
        default: {
            const SegmentCase sc = classify(seg);
            return jm_paper(seg, sc).epsilon;
        }
    }
}

namespace {

void accumulate_boundary(const PolarChain& pred, const PolarChain& gt, LossBackend backend,
                         bool allow_fallback, std::size_t offset, LossReport* report) {
    const int n = pred.n_v();
    const double theta = pred.wedge_angle();
    for (int i = 0; i < n; ++i) {
        const int j = (i + 1) % n;
        const SegmentPair seg{pred.radii[i], pred.radii[j], gt.radii[i], gt.radii[j], theta};
        double eps, d0, d1;
        if (backend == LossBackend::Exact) {
            const ExactJm e = jm_exact(seg);
            eps = 1.0 - e.jm;
            d0 = -e.d_jm_d_r_i;
            d1 = -e.d_jm_d_r_next;
        } else {
            try {
                const PaperJm p = jm_paper(seg, classify(seg));
                eps = p.epsilon;
                d0 = p.d_eps_d_r_i;
                d1 = p.d_eps_d_r_next;
            } catch (const Error& e) {
                if (e.code() != "SingularDenominator" || !allow_fallback) throw;
                const ExactJm ex = jm_exact(seg);
                eps = 1.0 - ex.jm;
                d0 = -ex.d_jm_d_r_i;
                d1 = -ex.d_jm_d_r_next;
                ++report->fallbacks;
            }
        }
        report->per_segment[offset + i] = eps;
        report->value += eps;
        report->grad[offset + i] += d0;
        report->grad[offset + j] += d1;
    }
}

void require_compatible(const PolarChain& pred_lumen, const PolarChain& pred_media,
                        const PolarChain& gt_lumen, const PolarChain& gt_media,
                        bool check_center) {
    pred_lumen.validate();
    pred_media.validate();
    gt_lumen.validate();
    gt_media.validate();
    const int n = pred_lumen.n_v();
    if (pred_media.n_v() != n || gt_lumen.n_v() != n || gt_media.n_v() != n) {
        throw Error("ShapeMismatch", "all four chains must share n_v");
    }
    if (check_center) {
        for (const PolarChain* c : {&pred_media, &gt_lumen, &gt_media}) {
            if (c->center.x != pred_lumen.center.x || c->center.y != pred_lumen.center.y) {
                throw Error("ShapeMismatch", "all four chains must share the center");
            }
        }
    }
}

}  // namespace

LossReport jm_loss(const PolarChain& pred_lumen, const PolarChain& pred_media,
                   const PolarChain& gt_lumen, const PolarChain& gt_media,
                   LossBackend backend, bool allow_fallback) {
    require_compatible(pred_lumen, pred_media, gt_lumen, gt_media, /*check_center=*/true);
    const std::size_t n = pred_lumen.radii.size();
    LossReport report;
    report.backend = backend == LossBackend::Exact ? "exact" : "paper";
    report.grad.assign(2 * n, 0.0);
    report.per_segment.assign(2 * n, 0.0);
    accumulate_boundary(pred_lumen, gt_lumen, backend, allow_fallback, 0, &report);
    accumulate_boundary(pred_media, gt_media, backend, allow_fallback, n, &report);
    return report;
}

void mse_accumulate(std::span<const double> pred, std::span<const double> gt,
                    double* value, std::span<double> grad, std::span<double> per_segment) {
    if (pred.size() != gt.size() || grad.size() != pred.size() ||
        per_segment.size() != pred.size()) {
        throw Error("ShapeMismatch", "mse inputs must have equal lengths");
    }
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double diff = pred[i] - gt[i];
        per_segment[i] = diff * diff;
        grad[i] = 2.0 * diff;
        *value += diff * diff;
    }
}

LossReport mse_loss(const PolarChain& pred_lumen, const PolarChain& pred_media,
                    const PolarChain& gt_lumen, const PolarChain& gt_media) {
    require_compatible(pred_lumen, pred_media, gt_lumen, gt_media, /*check_center=*/false);
    const std::size_t n = pred_lumen.radii.size();
    LossReport report;
    report.backend = "mse";
    report.grad.assign(2 * n, 0.0);
    report.per_segment.assign(2 * n, 0.0);
    std::span<double> grad(report.grad);
    std::span<double> per_seg(report.per_segment);
    mse_accumulate(pred_lumen.radii, gt_lumen.radii, &report.value, grad.subspan(0, n),
                   per_seg.subspan(0, n));
    mse_accumulate(pred_media.radii, gt_media.radii, &report.value, grad.subspan(n, n),
                   per_seg.subspan(n, n));
    return report;
}

std::string LossReport::to_json() const {
    nlohmann::json j;
    j["value"] = value;
    j["grad"] = grad;
    j["per_segment"] = per_segment;
    j["backend"] = backend;
    j["fallbacks"] = fallbacks;
    return j.dump();
}

}  // namespace pcseg
