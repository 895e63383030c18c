#pragma once

// Analytic solution of the two-server, two-class exponential workload: need-1
// jobs with probability p1 and rate mu1, need-2 jobs with probability 1 - p1
// and rate mu2. States are ordered [1,1], [1|2], [2], matching build_sss_chain.

#include <cmath>

#include "marcq/errors.hpp"
#include "marcq/marc.hpp"
#include "marcq/workload.hpp"

namespace marcq {

struct K2Params {
    double p1 = 0.5;
    double mu1 = 1.0;
    double mu2 = 1.0;

    double p2() const noexcept { return 1.0 - p1; }

    void validate() const {
        if (!(p1 > 0.0 && p1 < 1.0)) {
            throw ValidationError("k=2 closed form: p1 must lie in (0, 1)");
        }
        if (!(mu1 > 0.0) || !(mu2 > 0.0) || !std::isfinite(mu1) || !std::isfinite(mu2)) {
            throw ValidationError("k=2 closed form: rates must be positive");
        }
    }

    WorkloadSpec workload() const {
        validate();
        return WorkloadSpec(2, {exponential_class(1, p1, mu1), exponential_class(2, p2(), mu2)});
    }
};

/// Recovers (p1, mu1, mu2) from a workload that has exactly this shape.
inline K2Params k2_params_from(const WorkloadSpec& spec) {
    if (spec.k() != 2 || spec.num_classes() != 2) {
        throw ValidationError("k=2 closed form: needs k = 2 and exactly two classes");
    }
    const auto& a = spec.classes()[0];
    const auto& b = spec.classes()[1];
    const JobClass& one = a.need() == 1 ? a : b;
    const JobClass& two = a.need() == 1 ? b : a;
    if (one.need() != 1 || two.need() != 2 || one.duration().phases() != 1 || two.duration().phases() != 1) {
        throw ValidationError("k=2 closed form: needs one exponential need-1 class and one exponential need-2 class");
    }
    K2Params p{one.prob(), one.duration().leave_rate(0), two.duration().leave_rate(0)};
    p.validate();
    return p;
}

/// Direct closed form of Delta(Y_d), an independent route to the aggregate below.
inline double closed_form_k2_delta_yd(const K2Params& p) {
    p.validate();
    const double p1 = p.p1, p2 = p.p2(), m1 = p.mu1, m2 = p.mu2;
    const double d = m2 * p1 * p1 + 2.0 * m2 * p1 * p2 + 2.0 * m1 * p2;
    return p1 * p2 * (4.0 * m1 * m1 - 2.0 * m1 * m2 * (1.0 + 3.0 * p2) + m2 * m2 * (1.0 + p2 + 2.0 * p2 * p2)) /
           (d * d);
}

inline MarcSolution closed_form_k2(const K2Params& p) {
    p.validate();
    const double p1 = p.p1, p2 = p.p2(), m1 = p.mu1, m2 = p.mu2;
    const double d = m2 * p1 * p1 + 2.0 * m2 * p1 * p2 + 2.0 * m1 * p2;
    const double d2 = d * d;

    MarcSolution s;
    s.stationary = {m2 * p1 * p1 / d, 2.0 * m2 * p1 * p2 / d, 2.0 * m1 * p2 / d};
    s.lambda_star = 2.0 * m1 * m2 / d;
    s.departure = {p1 * p1, p1 * p2, p2};

    const double delta11 =
        2.0 * p2 * (2.0 * m1 * m1 * (1.0 + p2) - m1 * m2 * (-2.0 * p1 + p1 * p1 + 3.0 * p2) - m2 * m2 * p1 * p2) / d2;
    const double delta12 =
        (4.0 * m1 * m1 * p2 * p2 - 2.0 * m1 * m2 * (p1 * p1 + p1 * p1 * p2 + 2.0 * p2 * p2) + m2 * m2 * p1 * p1 * p2) /
        d2;
    const double delta2 =
        m2 * p1 * (-2.0 * m1 * (1.0 + p2 * p2) + m2 * (p1 * p1 + p1 * p1 * p2 + 3.0 * p2 + p2 * p2)) / d2;
    s.delta = {delta11, delta12, delta2};
    s.delta_yd = p1 * p1 * delta11 + p1 * p2 * delta12 + p2 * delta2;
    return s;
}

} // namespace marcq
