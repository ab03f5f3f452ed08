#include "csnet/nn.hpp"

#include <cmath>
#include <numbers>

namespace csnet {

namespace {

Tensor glorot(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::vector<double> v(numel(shape));
    for (auto& x : v) x = rng.uniform(-a, a);
    return Tensor(std::move(shape), std::move(v), true);
}

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

}  // namespace

Linear Linear::create(std::size_t in, std::size_t out, Rng& rng) {
    return {glorot({out, in}, in, out, rng), Tensor::zeros({out}, true)};
}

Tensor Linear::operator()(const Tensor& x) const {
    if (x.size() != in_features())
        throw ShapeError("linear: expected " + std::to_string(in_features()) + " inputs, got " +
                         to_string(x.shape()));
    const Tensor col = matmul(weight, reshape(x, {x.size(), 1}));
    return reshape(col, {out_features()}) + bias;
}

void Linear::collect(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + ".weight", weight});
    out.push_back({prefix + ".bias", bias});
}

Conv2d Conv2d::create(std::size_t in_channels, std::size_t out_channels, std::size_t k,
                      std::size_t stride, std::size_t pad, Rng& rng) {
    return {glorot({out_channels, in_channels, k, k}, in_channels * k * k, out_channels * k * k, rng),
            Tensor::zeros({out_channels}, true), stride, pad};
}

Tensor Conv2d::operator()(const Tensor& x) const {
    return conv2d(x, kernels, stride, pad) + reshape(bias, {bias.size(), 1, 1});
}

void Conv2d::collect(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + ".kernels", kernels});
    out.push_back({prefix + ".bias", bias});
}

ConvTranspose2d ConvTranspose2d::create(std::size_t in_channels, std::size_t out_channels,
                                        std::size_t k, std::size_t stride, std::size_t pad, Rng& rng) {
    return {glorot({in_channels, out_channels, k, k}, in_channels * k * k, out_channels * k * k, rng),
            Tensor::zeros({out_channels}, true), stride, pad};
}

Tensor ConvTranspose2d::operator()(const Tensor& x) const {
    return conv_transpose2d(x, kernels, stride, pad) + reshape(bias, {bias.size(), 1, 1});
}

void ConvTranspose2d::collect(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + ".kernels", kernels});
    out.push_back({prefix + ".bias", bias});
}

GaussianHead GaussianHead::create(std::size_t in, std::size_t latent_dim, Rng& rng) {
    GaussianHead head{Linear::create(in, latent_dim, rng), Linear::create(in, latent_dim, rng)};
    for (auto& b : head.sigma.bias.mutable_data()) b = kSoftplusInverseOfOne;
    return head;
}

void GaussianHead::collect(const std::string& prefix, ParamList& out) const {
    mu.collect(prefix + ".mu", out);
    sigma.collect(prefix + ".sigma", out);
}

GaussianParams gaussian_head(const Tensor& features, const GaussianHead& head) {
    if (head.mu.out_features() != head.sigma.out_features())
        throw ShapeError("gaussian_head: mu and sigma heads disagree on latent size");
    return {head.mu(features), softplus(head.sigma(features))};
}

double standard_normal_log_density(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += -kHalfLog2Pi - 0.5 * v * v;
    return s;
}

double log_density(const GaussianParams& params, std::span<const double> z) {
    const auto mu = params.mu.data();
    const auto sigma = params.sigma.data();
    if (z.size() != mu.size()) throw ShapeError("log_density: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double r = (z[i] - mu[i]) / sigma[i];
        s += -kHalfLog2Pi - std::log(sigma[i]) - 0.5 * r * r;
    }
    return s;
}

LatentSample sample(const GaussianParams& params, const Tensor& epsilon) {
    if (epsilon.shape() != params.mu.shape() || params.sigma.shape() != params.mu.shape())
        throw ShapeError("sample: epsilon " + to_string(epsilon.shape()) + " vs mu " +
                         to_string(params.mu.shape()));
    const Tensor eps = epsilon.requires_grad() ? epsilon.detach() : epsilon;
    LatentSample s;
    s.z = params.mu + eps * params.sigma;
    s.epsilon = eps;
    s.prior_log_density = log_density(params, s.z.data());
    s.epsilon_log_density = standard_normal_log_density(eps.data());
    return s;
}

Tensor kl_diag(const GaussianParams& q, const GaussianParams& p) {
    if (q.mu.shape() != p.mu.shape() || q.sigma.shape() != p.sigma.shape() ||
        q.mu.shape() != q.sigma.shape())
        throw ShapeError("kl_diag: dimension mismatch");
    const Tensor var_p = square(p.sigma);
    const Tensor ratio = (square(q.sigma) + square(q.mu - p.mu)) / scale(var_p, 2.0);
    return sum(add_scalar(log(p.sigma) - log(q.sigma) + ratio, -0.5));
}

Tensor replicate_spatial(const Tensor& z, std::size_t h, std::size_t w) {
    if (h == 0 || w == 0) throw ShapeError("replicate_spatial: empty spatial extent");
    const std::size_t d = z.size();
    const std::size_t hw = h * w;
    std::vector<double> out(d * hw);
    for (std::size_t c = 0; c < d; ++c) std::fill_n(out.begin() + static_cast<long>(c * hw), hw, z[c]);
    return make_result({d, h, w}, std::move(out), {z}, [d, hw](detail::Node& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t c = 0; c < d; ++c) {
            double s = 0.0;
            for (std::size_t i = 0; i < hw; ++i) s += self.grad[c * hw + i];
            g[c] += s;
        }
    });
}

}  // namespace csnet
