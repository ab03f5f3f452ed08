#pragma once

// Central finite-difference gradient checks shared by the unit and acceptance
// tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "csnet/rng.hpp"
#include "csnet/tensor.hpp"

namespace csnet::testing {

using ScalarFn = std::function<Tensor()>;

// Relative error ||analytic - numeric|| / max(||analytic||, ||numeric||, floor)
// over all entries of `inputs`, which must be leaves with requires_grad set
// and already wired into fn.
inline double gradcheck(const ScalarFn& fn, std::vector<Tensor> inputs, double eps = 1e-5,
                        double floor = 1e-8) {
    for (auto& t : inputs) t.zero_grad();
    const Tensor loss = fn();
    backward(loss);
    double diff2 = 0.0, an2 = 0.0, nu2 = 0.0;
    for (auto& t : inputs) {
        const std::vector<double> analytic =
            t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end()) : std::vector<double>(t.size(), 0.0);
        auto data = t.mutable_data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double orig = data[i];
            double plus, minus;
            {
                NoGradGuard ng;
                data[i] = orig + eps;
                plus = fn().item();
                data[i] = orig - eps;
                minus = fn().item();
            }
            data[i] = orig;
            const double numeric = (plus - minus) / (2.0 * eps);
            diff2 += (analytic[i] - numeric) * (analytic[i] - numeric);
            an2 += analytic[i] * analytic[i];
            nu2 += numeric * numeric;
        }
        t.zero_grad();
    }
    return std::sqrt(diff2) / std::max({std::sqrt(an2), std::sqrt(nu2), floor});
}

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0, bool requires_grad = true) {
    std::vector<double> v(numel(shape));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor(std::move(shape), std::move(v), requires_grad);
}

// Values whose magnitude is at least `gap`, keeping relu/min/max away from kinks.
inline Tensor random_away_from_zero(Shape shape, Rng& rng, double gap = 0.1, bool requires_grad = true) {
    std::vector<double> v(numel(shape));
    for (auto& x : v) {
        const double m = rng.uniform(gap, 1.0);
        x = rng.uniform() < 0.5 ? -m : m;
    }
    return Tensor(std::move(shape), std::move(v), requires_grad);
}

// Weighted sum with fixed random weights, so every output entry matters.
inline Tensor project(const Tensor& t, std::uint64_t seed) {
    Rng rng(seed, 99);
    return sum(t * random_tensor(t.shape(), rng, -1.0, 1.0, false));
}

}  // namespace csnet::testing
