#pragma once

#include <cstdint>
#include <string>

#include "pcseg/predictor.hpp"
#include "pcseg/segment_loss.hpp"

namespace pcseg {

/// Finite-difference verification of the analytic segment-loss partials.
/// Samples are drawn with radii in [0.1, 1] * r_max (r_max = 1 by default so
/// the check is scale-free), rejecting case-boundary neighborhoods:
/// |r - a| <= margin on either ray, crossings within margin of a ray, and for
/// the paper backend the singular set |rr - aa| <= 1e-3.
struct GradCheckConfig {
    std::string backend = "jm-exact";  // jm-exact | jm-paper | mse
    int trials = 1000;
    double eps = 1e-5;    // central-difference step, units of r_max
    double tol = 1e-4;    // relative error threshold
    double margin = 1e-2; // interior rejection margin
    std::uint64_t seed = 0;
};

struct GradCheckResult {
    std::string backend;
    int trials = 0;
    int passed = 0;
    double max_rel_err = 0.0;
    double tol = 0.0;

    bool ok() const { return trials > 0 && passed >= static_cast<int>(0.99 * trials); }
    std::string to_json() const;
};

GradCheckResult gradcheck_loss(const GradCheckConfig& config);

/// Full-model check: the tiny f64 descriptor (8x8 input, channels (2,2),
/// n_v = 4) against central differences on randomly chosen parameters.
struct ModelGradCheckResult {
    int checked = 0;
    int passed = 0;
    double max_rel_err = 0.0;
    double tol = 0.0;

    bool ok() const { return checked > 0 && passed == checked; }
    std::string to_json() const;
};

ModelGradCheckResult gradcheck_model(std::uint64_t seed, int params_to_check = 100,
                                     double tol = 1e-6);

/// Closed-form backend vs exact-oracle discrepancy tables over all six
/// cases, including the canonical containment example and the literal
/// printed expressions for audit.
std::string build_errata_report(int trials, std::uint64_t seed);

}  // namespace pcseg
