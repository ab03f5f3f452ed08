#include <gtest/gtest.h>

#include <cmath>

#include "csnet/losses.hpp"
#include "gradcheck.hpp"

using namespace csnet;
using csnet::testing::gradcheck;
using csnet::testing::random_tensor;

TEST(Scheme, ParseAndPrint) {
    EXPECT_EQ(parse_scheme("KBEST"), Scheme::KBEST);
    EXPECT_EQ(parse_scheme("mcbest"), Scheme::KBEST);
    EXPECT_EQ(parse_scheme("cvae"), Scheme::VA);
    EXPECT_EQ(parse_scheme(to_string(Scheme::MCML)), Scheme::MCML);
    EXPECT_THROW(parse_scheme("adam"), UsageError);
}

TEST(LossConfig, DefaultsAndValidation) {
    EXPECT_EQ(LossConfig::defaults(Scheme::KBEST).K, 15u);
    EXPECT_EQ(LossConfig::defaults(Scheme::VA).K, 1u);
    LossConfig c = LossConfig::defaults(Scheme::MCML);
    c.nu = 0.0;
    EXPECT_THROW(c.validate(), DomainError);
    c = LossConfig::defaults(Scheme::REGRESSION);
    c.K = 3;
    EXPECT_THROW(c.validate(), UsageError);
}

TEST(Losses, KEqualsOneIdentities) {
    Rng rng(1);
    for (int t = 0; t < 100; ++t) {
        const Tensor s = random_tensor({5, 2}, rng, -2, 2, false);
        const Tensor y = random_tensor({5, 2}, rng, -2, 2, false);
        const double nu = rng.uniform(0.1, 2.0);
        const double reg = regression_loss(s, y).item();
        const Tensor one[] = {s};
        EXPECT_NEAR(mcml_loss(one, y, nu).item(), reg / (2 * nu), 1e-12);
        EXPECT_NEAR(kbest_loss(one, y).item(), reg, 1e-12);
    }
}

TEST(Losses, KnownValues) {
    const Tensor y = Tensor::from({0.0, 0.0});
    const std::vector<Tensor> s = {Tensor::from({1.0, 0.0}), Tensor::from({0.0, 2.0}), Tensor::from({3.0, 0.0})};
    EXPECT_DOUBLE_EQ(kbest_loss(s, y).item(), 1.0);
    const auto d = squared_distances(s, y);
    EXPECT_EQ(d.shape(), (Shape{3}));
    EXPECT_DOUBLE_EQ(d[2], 9.0);
    const double nu = 0.5;
    EXPECT_NEAR(mcml_loss(s, y, nu).item(), -std::log(std::exp(-1.0) + std::exp(-4.0) + std::exp(-9.0)), 1e-12);
    EXPECT_THROW(kbest_loss(std::vector<Tensor>{}, y), DomainError);
    EXPECT_THROW(kbest_loss(std::vector<Tensor>{Tensor::from({1.0})}, y), ShapeError);
}

TEST(Losses, LogSumExpBound) {
    // min_j d_j/(2nu) - ln K <= mcml <= min_j d_j/(2nu)
    Rng rng(2);
    for (int t = 0; t < 1000; ++t) {
        const std::size_t K = 1 + rng.below(20);
        std::vector<Tensor> s;
        for (std::size_t j = 0; j < K; ++j) s.push_back(random_tensor({3}, rng, -3, 3, false));
        const Tensor y = random_tensor({3}, rng, -3, 3, false);
        const double nu = rng.uniform(0.05, 3.0);
        const double m = mcml_loss(s, y, nu).item();
        const double kb = kbest_loss(s, y).item() / (2 * nu);
        EXPECT_GE(m, kb - std::log(static_cast<double>(K)) - 1e-12);
        EXPECT_LE(m, kb + 1e-12);
    }
}

TEST(Losses, VaDecomposition) {
    const Tensor pred = Tensor::from({1.0, 2.0});
    const Tensor y = Tensor::from({0.0, 0.0});
    const GaussianParams q{Tensor::from({1.0}), Tensor::from({1.0})};
    const GaussianParams p{Tensor::from({0.0}), Tensor::from({1.0})};
    // recon 5 / (2 * 0.5) + 2 * 0.5
    EXPECT_NEAR(va_loss(pred, y, q, p, 0.5, 2.0).item(), 6.0, 1e-12);
    EXPECT_NEAR(va_loss(pred, y, p, p, 1.0, 1.0).item(), 2.5, 1e-12);
}

TEST(Losses, KBestGradientOnlyToClosest) {
    Tensor a = Tensor::from({1.0, 0.0}, true);
    Tensor b = Tensor::from({3.0, 0.0}, true);
    const Tensor y = Tensor::from({0.0, 0.0});
    backward(kbest_loss(std::vector<Tensor>{a, b}, y));
    EXPECT_DOUBLE_EQ(a.grad()[0], 2.0);
    EXPECT_FALSE(b.has_grad() && b.grad()[0] != 0.0);
}

TEST(Losses, Gradients) {
    Rng rng(3);
    for (int t = 0; t < 20; ++t) {
        std::vector<Tensor> s;
        for (int j = 0; j < 4; ++j) s.push_back(random_tensor({3}, rng));
        const Tensor y = random_tensor({3}, rng, -1, 1, false);
        EXPECT_LT(gradcheck([&] { return mcml_loss(s, y, 0.4); }, s), 1e-6);
        EXPECT_LT(gradcheck([&] { return kbest_loss(s, y); }, s), 1e-6);
        EXPECT_LT(gradcheck([&] { return regression_loss(s[0], y); }, {s[0]}), 1e-6);
        GaussianParams q{random_tensor({2}, rng), random_tensor({2}, rng, 0.3, 1.5)};
        GaussianParams p{random_tensor({2}, rng), random_tensor({2}, rng, 0.3, 1.5)};
        EXPECT_LT(gradcheck([&] { return va_loss(s[1], y, q, p, 0.7, 1.3); }, {s[1], q.mu, q.sigma, p.mu, p.sigma}),
                  1e-6);
    }
}
