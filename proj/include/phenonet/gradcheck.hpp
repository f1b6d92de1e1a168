#pragma once

#include <algorithm>
#include <cmath>
#include <utility>

#include "phenonet/errors.hpp"
#include "phenonet/tensor.hpp"

namespace phenonet {

// Central-difference gradient check. `f` is a scalar-valued function of `x`
// (evaluated by mutating x in place and restoring it); `analytic` holds the
// gradient under test. Returns the worst per-coordinate relative error
//   |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
// Works in f64 only; finite differences are unreliable in f32.
template <typename F>
double grad_check(F&& f, Tensor<double>& x, const Tensor<double>& analytic, double eps = 1e-5) {
    if (!x.same_shape(analytic)) {
        throw DimensionError("grad_check: gradient shape " + analytic.shape_str() +
                             " does not match input " + x.shape_str());
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double original = x[i];
        x[i] = original + eps;
        const double f_plus = f(std::as_const(x));
        x[i] = original - eps;
        const double f_minus = f(std::as_const(x));
        x[i] = original;
        if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
            throw NumericError("grad_check: non-finite function value during probing");
        }
        const double numeric = (f_plus - f_minus) / (2.0 * eps);
        const double denom = std::max(1e-8, std::abs(analytic[i]) + std::abs(numeric));
        worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
    return worst;
}

}  // namespace phenonet
