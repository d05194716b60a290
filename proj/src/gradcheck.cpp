#include "pcseg/gradcheck.hpp"

#include <cmath>

#include <json.hpp>

#include "pcseg/rng.hpp"

namespace pcseg {

namespace {

bool interior_sample(const SegmentPair& s, double margin, bool paper) {
    if (std::abs(s.r_i - s.a_i) <= margin || std::abs(s.r_next - s.a_next) <= margin) {
        return false;
    }
    if (paper && std::abs(s.r_i * s.r_next - s.a_i * s.a_next) <= 1e-3) return false;
    const SegmentCase c = classify(s);
    if (c.crossing) {
        const Vec2 x = *c.crossing;
        const double d_ray_i = x.y;
        const double d_ray_next = std::abs(x.x * std::sin(s.theta) - x.y * std::cos(s.theta));
        if (d_ray_i <= margin || d_ray_next <= margin) return false;
    }
    return true;
}

double segment_eps(const SegmentPair& s, bool paper) {
    if (paper) return jm_paper(s, classify(s)).epsilon;
    return 1.0 - jm_exact(s).jm;
}

double rel_err(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

}  // namespace

GradCheckResult gradcheck_loss(const GradCheckConfig& config) {
    if (config.backend != "jm-exact" && config.backend != "jm-paper" && config.backend != "mse") {
        throw Error("InvalidSpec", "gradcheck backend must be jm-exact, jm-paper or mse");
    }
    GradCheckResult result;
    result.backend = config.backend;
    result.tol = config.tol;
    Rng rng(config.seed);
    const double h = config.eps;

    if (config.backend == "mse") {
        for (int t = 0; t < config.trials; ++t) {
            const double pred = rng.uniform(0.1, 1.0);
            const double gt = rng.uniform(0.1, 1.0);
            const double analytic = 2.0 * (pred - gt);
            const double numeric =
                ((pred + h - gt) * (pred + h - gt) - (pred - h - gt) * (pred - h - gt)) / (2 * h);
            const double e = rel_err(analytic, numeric);
            result.max_rel_err = std::max(result.max_rel_err, e);
            if (e < config.tol) ++result.passed;
            ++result.trials;
        }
        return result;
    }

    const bool paper = config.backend == "jm-paper";
    int attempts = 0;
    while (result.trials < config.trials && attempts < config.trials * 200) {
        ++attempts;
        const double theta = 2.0 * M_PI / (16 << (attempts % 3));
        const SegmentPair s{rng.uniform(0.1, 1.0), rng.uniform(0.1, 1.0), rng.uniform(0.1, 1.0),
                            rng.uniform(0.1, 1.0), theta};
        if (!interior_sample(s, config.margin, paper)) continue;
        ++result.trials;

        double d0, d1;
        if (paper) {
            const PaperJm p = jm_paper(s, classify(s));
            d0 = p.d_eps_d_r_i;
            d1 = p.d_eps_d_r_next;
        } else {
            const ExactJm e = jm_exact(s);
            d0 = -e.d_jm_d_r_i;
            d1 = -e.d_jm_d_r_next;
        }
        SegmentPair up = s, dn = s;
        up.r_i += h;
        dn.r_i -= h;
        const double f0 = (segment_eps(up, paper) - segment_eps(dn, paper)) / (2 * h);
        up = dn = s;
        up.r_next += h;
        dn.r_next -= h;
        const double f1 = (segment_eps(up, paper) - segment_eps(dn, paper)) / (2 * h);

        const double e = std::max(rel_err(d0, f0), rel_err(d1, f1));
        result.max_rel_err = std::max(result.max_rel_err, e);
        if (e < config.tol) ++result.passed;
    }
    if (result.trials < config.trials) {
        throw Error("InvalidSpec", "interior sampling starved; margin too wide");
    }
    return result;
}

std::string GradCheckResult::to_json() const {
    nlohmann::json j;
    j["backend"] = backend;
    j["trials"] = trials;
    j["passed"] = passed;
    j["pass_rate"] = trials > 0 ? static_cast<double>(passed) / trials : 0.0;
    j["max_rel_err"] = max_rel_err;
    j["tol"] = tol;
    j["ok"] = ok();
    return j.dump();
}

ModelGradCheckResult gradcheck_model(std::uint64_t seed, int params_to_check, double tol) {
    NetDescriptor desc;
    desc.input_size = 8;
    desc.in_channels = 3;
    desc.conv_channels = {2, 2};
    desc.fc_hidden = 8;
    desc.n_v = 4;
    desc.input_standardize = false;

    Regressor<double> net = init_regressor<double>(desc, seed);
    // Strengthen the weights so every gradient stands clear of the
    // finite-difference noise floor; the check verifies the backward math,
    // not the training initialization.
    for (auto& conv : net.convs) {
        for (double& w : conv.w) w *= 20.0;
    }
    for (double& w : net.fc1_w) w *= 20.0;
    for (double& w : net.fc2_w) w *= 20.0;
    Rng rng(seed + 1);
    Tensor<double> batch({2, 8, 8, 3});
    for (double& v : batch.data) v = rng.uniform();
    std::vector<double> combine(static_cast<std::size_t>(2) * desc.output_dim());
    for (double& c : combine) c = rng.uniform(-1.0, 1.0);

    // Scalar objective: fixed random combination of all outputs.
    auto objective = [&](const Regressor<double>& n) {
        ForwardCache<double> cache;
        const Tensor<double> out = forward(n, batch, &cache);
        double acc = 0.0;
        for (std::size_t i = 0; i < out.data.size(); ++i) acc += combine[i] * out.data[i];
        return acc;
    };

    ForwardCache<double> cache;
    const Tensor<double> out = forward(net, batch, &cache);
    Tensor<double> d_out({2, desc.output_dim()});
    for (std::size_t i = 0; i < d_out.data.size(); ++i) d_out.data[i] = combine[i];
    const ParamGrads<double> grads = backward(net, cache, d_out);

    auto params = net.params();
    std::size_t total = 0;
    for (auto p : params) total += p.size();

    ModelGradCheckResult result;
    result.tol = tol;
    (void)out;
    for (int c = 0; c < params_to_check; ++c) {
        const std::size_t flat = rng.uniform_index(total);
        std::size_t offset = flat;
        std::size_t slot = 0;
        while (offset >= params[slot].size()) {
            offset -= params[slot].size();
            ++slot;
        }
        double& w = params[slot][offset];
        const double saved = w;
        const double h = 1e-4 * std::max(1.0, std::abs(saved));
        w = saved + h;
        const double up = objective(net);
        w = saved - h;
        const double dn = objective(net);
        w = saved;
        const double numeric = (up - dn) / (2 * h);
        const double analytic = grads.buffers[slot][offset];
        const double e = rel_err(analytic, numeric);
        result.max_rel_err = std::max(result.max_rel_err, e);
        if (e < tol) ++result.passed;
        ++result.checked;
    }
    return result;
}

std::string ModelGradCheckResult::to_json() const {
    nlohmann::json j;
    j["checked"] = checked;
    j["passed"] = passed;
    j["max_rel_err"] = max_rel_err;
    j["tol"] = tol;
    j["ok"] = ok();
    return j.dump();
}

std::string build_errata_report(int trials, std::uint64_t seed) {
    Rng rng(seed);
    struct CaseStats {
        long count = 0;
        long singular = 0;
        double sum_abs_diff = 0.0;
        double max_abs_diff = 0.0;
        double sum_jm_paper = 0.0;
        double sum_jm_exact = 0.0;
    };
    CaseStats stats[7];
    double max_case2_printed_gap = 0.0;

    for (int t = 0; t < trials; ++t) {
        const double theta = 2.0 * M_PI / (16 << (t % 3));
        const SegmentPair s{rng.uniform(0.1, 1.0), rng.uniform(0.1, 1.0), rng.uniform(0.1, 1.0),
                            rng.uniform(0.1, 1.0), theta};
        const SegmentCase c = classify(s);
        const int num = case_number(c.kind);
        CaseStats& cs = stats[num];
        ++cs.count;
        const double exact = jm_exact(s).jm;
        double paper;
        try {
            paper = jm_paper(s, c).jm;
        } catch (const Error&) {
            ++cs.singular;
            continue;
        }
        const double diff = std::abs(paper - exact);
        cs.sum_abs_diff += diff;
        cs.max_abs_diff = std::max(cs.max_abs_diff, diff);
        cs.sum_jm_paper += paper;
        cs.sum_jm_exact += exact;

        if (c.kind == SegmentCaseKind::ContainedGTInPred &&
            std::abs(s.r_i * s.r_next - s.a_i * s.a_next) > 1e-3) {
            const double printed = case_num_den_jm(s, c.kind, /*as_printed=*/true);
            const double simplified = -s.r_i * s.r_next / (s.r_i * s.r_next - s.a_i * s.a_next);
            max_case2_printed_gap = std::max(max_case2_printed_gap, std::abs(printed - simplified));
        }
    }

    nlohmann::json j;
    j["trials"] = trials;
    j["seed"] = seed;
    j["table"] = nlohmann::json::array();
    for (int num = 1; num <= 6; ++num) {
        const CaseStats& cs = stats[num];
        nlohmann::json row;
        row["case"] = num;
        row["count"] = cs.count;
        row["singular_denominator_hits"] = cs.singular;
        const long effective = cs.count - cs.singular;
        row["mean_abs_jm_diff"] = effective > 0 ? cs.sum_abs_diff / effective : 0.0;
        row["max_abs_jm_diff"] = cs.max_abs_diff;
        row["mean_jm_paper"] = effective > 0 ? cs.sum_jm_paper / effective : 0.0;
        row["mean_jm_exact"] = effective > 0 ? cs.sum_jm_exact / effective : 0.0;
        j["table"].push_back(row);
    }

    // Canonical containment example r=(1,1), a=(2,2): the closed form gives
    // 1/3 where the exact IoU is 1/4, and the printed error expression gives
    // 4/3 instead of 1 - 1/3.
    const SegmentPair canon{1, 1, 2, 2, 2.0 * M_PI / 16};
    j["canonical_example"] = {
        {"r", {1.0, 1.0}},
        {"a", {2.0, 2.0}},
        {"jm_closed_form_case1",
         jm_paper(canon, {SegmentCaseKind::ContainedPredInGT, {}}).jm},
        {"jm_exact_iou", jm_exact(canon).jm},
        {"printed_epsilon_case1",
         paper_literal_epsilon(canon, SegmentCaseKind::ContainedPredInGT)},
        {"one_minus_jm_case1", 1.0 - jm_paper(canon, {SegmentCaseKind::ContainedPredInGT, {}}).jm},
    };
    j["case2_den_as_printed_max_gap"] = max_case2_printed_gap;
    return j.dump(2);
}

}  // namespace pcseg
