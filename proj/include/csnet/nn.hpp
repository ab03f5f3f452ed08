#pragma once

#include <string>
#include <vector>

#include "csnet/rng.hpp"
#include "csnet/tensor.hpp"

namespace csnet {

struct NamedTensor {
    std::string name;
    Tensor tensor;
};
using ParamList = std::vector<NamedTensor>;

// Glorot-uniform weights, zero bias.
struct Linear {
    Tensor weight;  // [out x in]
    Tensor bias;    // [out]

    static Linear create(std::size_t in, std::size_t out, Rng& rng);
    std::size_t in_features() const { return weight.dim(1); }
    std::size_t out_features() const { return weight.dim(0); }

    // x [in] -> [out]
    Tensor operator()(const Tensor& x) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

struct Conv2d {
    Tensor kernels;  // [C_out x C_in x k x k]
    Tensor bias;     // [C_out]
    std::size_t stride = 1;
    std::size_t pad = 0;

    static Conv2d create(std::size_t in_channels, std::size_t out_channels, std::size_t k,
                         std::size_t stride, std::size_t pad, Rng& rng);
    Tensor operator()(const Tensor& x) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

struct ConvTranspose2d {
    Tensor kernels;  // [C_in x C_out x k x k], same layout as the conv it transposes
    Tensor bias;     // [C_out]
    std::size_t stride = 1;
    std::size_t pad = 0;

    static ConvTranspose2d create(std::size_t in_channels, std::size_t out_channels, std::size_t k,
                                  std::size_t stride, std::size_t pad, Rng& rng);
    Tensor operator()(const Tensor& x) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

// Diagonal Gaussian; sigma holds standard deviations.
struct GaussianParams {
    Tensor mu;
    Tensor sigma;

    std::size_t dim() const { return mu.size(); }
};

struct GaussianHead {
    Linear mu;
    Linear sigma;

    // sigma bias starts at softplus^-1(1) so the initial spread is about 1.
    static GaussianHead create(std::size_t in, std::size_t latent_dim, Rng& rng);
    void collect(const std::string& prefix, ParamList& out) const;
};

struct LatentSample {
    Tensor z;
    Tensor epsilon;
    // log N(z; mu, sigma) under the generating parameters
    double prior_log_density = 0.0;
    // log N(epsilon; 0, I)
    double epsilon_log_density = 0.0;
};

inline constexpr double kSoftplusInverseOfOne = 0.54132485461291810;  // ln(e - 1)

// mu = W_mu f + b_mu, sigma = softplus(W_sigma f + b_sigma)
GaussianParams gaussian_head(const Tensor& features, const GaussianHead& head);

// Reparameterised draw z = mu + epsilon * sigma. epsilon is treated as a
// constant, so gradients reach mu and sigma only.
LatentSample sample(const GaussianParams& params, const Tensor& epsilon);

double log_density(const GaussianParams& params, std::span<const double> z);
double standard_normal_log_density(std::span<const double> x);

// Closed-form KL(q || p) between diagonal Gaussians.
Tensor kl_diag(const GaussianParams& q, const GaussianParams& p);

// z [d] -> [d x h x w] with every spatial cell holding z.
Tensor replicate_spatial(const Tensor& z, std::size_t h, std::size_t w);

}  // namespace csnet
