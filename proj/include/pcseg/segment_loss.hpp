#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pcseg/geometry.hpp"

namespace pcseg {

/// One angular wedge shared by the predicted and ground-truth chains:
/// predicted radii (r_i, r_next) and ground-truth radii (a_i, a_next) on the
/// two bounding rays, wedge angle theta = 2*pi/n_v. All geometry is done in
/// the local wedge frame: apex at the origin, ray i along +x, ray i+1 at
/// angle theta.
struct SegmentPair {
    double r_i = 0.0;
    double r_next = 0.0;
    double a_i = 0.0;
    double a_next = 0.0;
    double theta = 0.0;

    void validate() const;
};

/// The six overlap scenarios of two shared-apex wedge triangles.
///
/// Containment: both predicted radii on one side of the ground truth.
/// Crossing: the predicted and ground-truth chords cross exactly once;
/// "RightOver" means the prediction exceeds on ray i (drawn on the right),
/// "LeftOver" that it exceeds on ray i+1. The Obtuse variants apply when the
/// overlap quadrilateral's interior angle at the crossing point exceeds 90
/// degrees and the overlap decomposition needs the perpendicular-foot
/// construction.
enum class SegmentCaseKind {
    ContainedPredInGT,     // case 1
    ContainedGTInPred,     // case 2
    CrossLeftOverObtuse,   // case 3
    CrossRightOver,        // case 4
    CrossLeftOver,         // case 5
    CrossRightOverObtuse,  // case 6
};

struct SegmentCase {
    SegmentCaseKind kind = SegmentCaseKind::ContainedPredInGT;
    std::optional<Vec2> crossing;  // local wedge frame, present for crossing kinds
};

/// 1..6, the conventional numbering of the scenarios.
int case_number(SegmentCaseKind kind);
const char* case_name(SegmentCaseKind kind);

/// Classification is total: every valid SegmentPair maps to exactly one case.
/// Ties (r == a on a ray) classify as containment.
SegmentCase classify(const SegmentPair& seg);

/// Geometry of the crossing-case overlap decomposition, rebuilt from the
/// chord crossing point. The source construction leaves theta_ib unused and
/// the constants K2..K4 undefined; theta_ib is resolved as the complement of
/// theta_ic and K2..K4 are not modeled -- every quantity here is re-derived
/// independently from segment intersection geometry.
struct CaseIIIGeometry {
    double a = 0.0;   // gt chord piece from the crossing point to the ray i+1 vertex
    double b = 0.0;   // gt chord piece from the ray i vertex to the crossing point
    double c = 0.0;   // pred chord piece from the crossing point to the ray i+1 vertex
    double d = 0.0;   // pred chord piece from the ray i vertex to the crossing point
    double p = 0.0;   // projection of piece `a` onto ray i, p = a*cos(theta_ia)
    double theta_ia = 0.0;  // gt chord direction vs ray i
    double theta_ib = 0.0;  // complement of theta_ic (unused downstream)
    double theta_ic = 0.0;  // pred chord direction vs ray i
    double theta_id = 0.0;  // equals theta_ic; the chord pieces are collinear
    double theta_i0 = 0.0;  // full wedge angle
    double k1 = 0.0;        // gt chord length; invariant a + b == k1
};

/// Requires a crossing case. Throws Degenerate otherwise.
CaseIIIGeometry case_iii_geometry(const SegmentPair& seg, const SegmentCase& segment_case);

/// Jaccard measure of the two wedge triangles with analytic partials with
/// respect to the two predicted radii.
struct ExactJm {
    double jm = 0.0;
    double d_jm_d_r_i = 0.0;
    double d_jm_d_r_next = 0.0;
};

/// Exact intersection-over-union of the shared-apex triangles.
/// Containment: min(r,a) products over max(r,a) products. Crossing: the
/// overlap is the quadrilateral (apex, min vertex on ray i, crossing point,
/// min vertex on ray i+1). Partials differentiate the active branch.
ExactJm jm_exact(const SegmentPair& seg);

/// Closed-form backend result for one segment.
struct PaperJm {
    double jm = 0.0;
    double epsilon = 0.0;  // uniformly 1 - jm
    double d_eps_d_r_i = 0.0;
    double d_eps_d_r_next = 0.0;
};

/// The closed-form per-case JM:
///   case 1:        rr / (aa - rr)
///   cases 2, 4, 5: -rr / (rr - aa)
///   cases 3, 6:    crossing construction (numerically equal to jm_exact)
/// where rr = r_i*r_next and aa = a_i*a_next. Throws SingularDenominator when
/// |aa - rr| < 1e-9 for the simplified forms.
PaperJm jm_paper(const SegmentPair& seg, const SegmentCase& segment_case);

/// The error expressions exactly as the closed-form source prints them,
/// exposed read-only for auditing; case 1's printed error differs from
/// 1 - JM_1 (e.g. 4/3 vs 2/3 at r=(1,1), a=(2,2)).
double paper_literal_epsilon(const SegmentPair& seg, SegmentCaseKind kind);

/// Num/Den route for the simplified cases (1, 2, 4, 5), used by the
/// internal-consistency checks and the errata report. Case 2's third
/// denominator term is printed as (a_next - r_next)^2 * sin*cos in the
/// source; as printed the quotient contradicts the source's own combined
/// result, so the consistent form (a_next - r_next)*a_next*sin*cos is the
/// default and `as_printed` recovers the literal one.
double case_num_den_jm(const SegmentPair& seg, SegmentCaseKind kind, bool as_printed = false);

enum class LossBackend { Exact, Paper };

/// Scalar loss with its gradient over all 2*n_v predicted radii
/// (lumen block first, then media) and the per-segment errors for
/// diagnostics (same layout).
struct LossReport {
    double value = 0.0;
    std::vector<double> grad;
    std::vector<double> per_segment;
    std::string backend;
    int fallbacks = 0;

    std::string to_json() const;
};

/// Per-segment Jaccard loss summed over both boundaries,
/// value = sum_i (1 - JM_i^lumen) + sum_i (1 - JM_i^media).
/// Radius r_k participates in segments k-1 and k; the gradient accumulates
/// both partials. With the paper backend, singular segments fall back to
/// jm_exact (counted in `fallbacks`) unless allow_fallback is false.
LossReport jm_loss(const PolarChain& pred_lumen, const PolarChain& pred_media,
                   const PolarChain& gt_lumen, const PolarChain& gt_media,
                   LossBackend backend, bool allow_fallback = true);

/// Sum of squared radial errors over both boundaries; gradient 2*(r - a).
LossReport mse_loss(const PolarChain& pred_lumen, const PolarChain& pred_media,
                    const PolarChain& gt_lumen, const PolarChain& gt_media);

/// Radii-level MSE used by mse_loss; exposed separately so callers can
/// evaluate degenerate vertex counts that a valid chain cannot represent.
void mse_accumulate(std::span<const double> pred, std::span<const double> gt,
                    double* value, std::span<double> grad, std::span<double> per_segment);

}  // namespace pcseg
