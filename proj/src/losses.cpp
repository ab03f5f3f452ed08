#include "csnet/losses.hpp"

#include <algorithm>
#include <cctype>

namespace csnet {

std::string to_string(Scheme scheme) {
    switch (scheme) {
        case Scheme::MCML: return "mcml";
        case Scheme::VA: return "va";
        case Scheme::KBEST: return "kbest";
        case Scheme::REGRESSION: return "regression";
    }
    return "?";
}

Scheme parse_scheme(const std::string& text) {
    std::string t = text;
    std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
    if (t == "mcml") return Scheme::MCML;
    if (t == "va" || t == "cvae") return Scheme::VA;
    if (t == "kbest" || t == "mcbest") return Scheme::KBEST;
    if (t == "regression") return Scheme::REGRESSION;
    throw UsageError("unknown loss scheme '" + text + "'");
}

LossConfig LossConfig::defaults(Scheme scheme) {
    LossConfig c;
    c.scheme = scheme;
    c.K = (scheme == Scheme::MCML || scheme == Scheme::KBEST) ? 15 : 1;
    return c;
}

void LossConfig::validate() const {
    if (K == 0) throw UsageError("loss: K must be at least 1");
    if (scheme == Scheme::REGRESSION && K != 1) throw UsageError("loss: regression requires K = 1");
    if (!(nu > 0.0)) throw DomainError("loss: nu must be positive");
    if (!(kl_weight > 0.0)) throw DomainError("loss: kl_weight must be positive");
}

Tensor squared_distances(std::span<const Tensor> samples, const Tensor& y) {
    if (samples.empty()) throw DomainError("loss: no samples");
    std::vector<Tensor> d;
    d.reserve(samples.size());
    for (const auto& s : samples) {
        if (s.shape() != y.shape())
            throw ShapeError("loss: sample " + to_string(s.shape()) + " vs target " + to_string(y.shape()));
        d.push_back(sum(square(s - y)));
    }
    return concat(d);
}

Tensor mcml_loss(std::span<const Tensor> samples, const Tensor& y, double nu) {
    if (!(nu > 0.0)) throw DomainError("mcml_loss: nu must be positive");
    return neg(logsumexp(scale(squared_distances(samples, y), -1.0 / (2.0 * nu))));
}

Tensor kbest_loss(std::span<const Tensor> samples, const Tensor& y) {
    return min(squared_distances(samples, y));
}

Tensor va_loss(const Tensor& pred_from_q, const Tensor& y, const GaussianParams& q,
               const GaussianParams& p, double nu, double kl_weight) {
    if (!(nu > 0.0)) throw DomainError("va_loss: nu must be positive");
    const Tensor recon = scale(regression_loss(pred_from_q, y), 1.0 / (2.0 * nu));
    return recon + scale(kl_diag(q, p), kl_weight);
}

Tensor regression_loss(const Tensor& pred, const Tensor& y) {
    if (pred.shape() != y.shape())
        throw ShapeError("regression_loss: " + to_string(pred.shape()) + " vs " + to_string(y.shape()));
    return sum(square(pred - y));
}

}  // namespace csnet
