#pragma once

#include <span>
#include <string>

#include "csnet/nn.hpp"
#include "csnet/tensor.hpp"

namespace csnet {

enum class Scheme { MCML, VA, KBEST, REGRESSION };

std::string to_string(Scheme scheme);
Scheme parse_scheme(const std::string& text);

struct LossConfig {
    Scheme scheme = Scheme::KBEST;
    std::size_t K = 15;
    double nu = 0.5;
    double kl_weight = 1.0;

    // Defaults per scheme: K prior draws for MCML/KBEST, one for VA and REGRESSION.
    static LossConfig defaults(Scheme scheme);
    void validate() const;
};

// -log sum_j exp(-||s_j - y||^2 / (2 nu)), the negative Monte-Carlo marginal
// log-likelihood without the constant terms.
Tensor mcml_loss(std::span<const Tensor> samples, const Tensor& y, double nu);

// min_j ||s_j - y||^2; the gradient reaches only the first minimiser.
Tensor kbest_loss(std::span<const Tensor> samples, const Tensor& y);

// ||pred - y||^2 / (2 nu) + kl_weight * KL(q || p)
Tensor va_loss(const Tensor& pred_from_q, const Tensor& y, const GaussianParams& q,
               const GaussianParams& p, double nu, double kl_weight);

Tensor regression_loss(const Tensor& pred, const Tensor& y);

// Per-sample squared distances stacked into a [K] vector.
Tensor squared_distances(std::span<const Tensor> samples, const Tensor& y);

}  // namespace csnet
