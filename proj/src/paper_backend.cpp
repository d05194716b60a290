#include <cmath>

#include "pcseg/segment_loss.hpp"

namespace pcseg {

// Num/Den evaluation of the simplified closed forms, term by term. These are
// audit routes only: jm_paper evaluates the simplified quotients directly,
// and the consistency tests assert both routes agree for cases 1, 2, 4, 5.
double case_num_den_jm(const SegmentPair& seg, SegmentCaseKind kind, bool as_printed) {
    seg.validate();
    const double s = std::sin(seg.theta);
    const double c = std::cos(seg.theta);
    const double ri = seg.r_i, rn = seg.r_next;
    const double ai = seg.a_i, an = seg.a_next;

    switch (kind) {
        case SegmentCaseKind::ContainedPredInGT: {
            const double num = 0.5 * rn * rn * c * s - 0.5 * (rn * c - ri) * rn * s;
            const double den = 0.5 * an * an * s * c - 0.5 * (an * c - ai) * an * s -
                               0.5 * rn * rn * s * c + 0.5 * (rn * c - ri) * rn * s;
            return num / den;
        }
        case SegmentCaseKind::ContainedGTInPred: {
            const double num = 0.5 * ri * rn * s;
            // Third term as printed, (an - rn)^2 * s * c, contradicts the
            // printed combined quotient -rr/(rr-aa); the linear form
            // (an - rn) * an * s * c telescopes to it exactly.
            const double third =
                as_printed ? 0.5 * (an - rn) * (an - rn) * s * c : 0.5 * (an - rn) * an * s * c;
            const double den = 0.5 * rn * s * (rn * c - ri) + 0.5 * an * s * (ai - an * c) +
                               third + 0.5 * rn * (an - rn) * c * s;
            return num / den;
        }
        case SegmentCaseKind::CrossRightOver: {
            const double num = ri * rn * s;
            const double den = an * an * s * c - ri * rn * s - an * s * (an * c - ai);
            return num / den;
        }
        case SegmentCaseKind::CrossLeftOver: {
            const double num = 0.5 * ri * rn * s;
            const double den = 0.5 * ai * an * s - 0.5 * ri * rn * s;
            return num / den;
        }
        default:
            throw Error("Degenerate", "no Num/Den route for the crossing-obtuse cases");
    }
}

}  // namespace pcseg
