#include <gtest/gtest.h>

#include <vector>

#include "csnet/kernels.hpp"
#include "csnet/rng.hpp"
#include "csnet/tensor.hpp"

using namespace csnet;
namespace k = csnet::kernels;

namespace {

std::vector<double> rand_vec(std::size_t n, Rng& rng, double scale = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-scale, scale);
    return v;
}

void expect_close(const std::vector<double>& a, const std::vector<double>& b, double tol) {
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) ASSERT_NEAR(a[i], b[i], tol) << "index " << i;
}

// Large enough to cross the parallel threshold, for each thread count.
class KernelParity : public ::testing::TestWithParam<int> {
protected:
    void SetUp() override {
        saved_ = k::thread_count();
        k::set_thread_count(GetParam());
    }
    void TearDown() override { k::set_thread_count(saved_); }
    int saved_ = 1;
};

}  // namespace

TEST(ConvGeometry, OutputExtentAndErrors) {
    const auto g = k::conv_geometry(3, 32, 32, 8, 4, 4, 2, 1);
    EXPECT_EQ(g.out_h, 16u);
    EXPECT_EQ(g.out_w, 16u);
    EXPECT_THROW(k::conv_geometry(1, 8, 8, 1, 3, 3, 2, 1), ShapeError);
    EXPECT_THROW(k::conv_geometry(1, 8, 8, 1, 3, 3, 0, 1), ShapeError);
    EXPECT_THROW(k::conv_geometry(1, 2, 2, 1, 5, 5, 1, 0), ShapeError);
}

TEST(ThreadCount, SetAndClamp) {
    const int saved = k::thread_count();
    k::set_thread_count(3);
    EXPECT_EQ(k::thread_count(), 3);
    k::set_thread_count(saved);
}

TEST_P(KernelParity, Matmul) {
    Rng rng(1);
    const std::size_t m = 64, kk = 48, n = 40;
    const auto a = rand_vec(m * kk, rng), b = rand_vec(kk * n, rng), dc = rand_vec(m * n, rng);
    std::vector<double> c1(m * n), c2(m * n);
    k::reference::matmul(a, b, c1, m, kk, n);
    k::matmul(a, b, c2, m, kk, n);
    expect_close(c1, c2, 1e-12);
    std::vector<double> da1(a.size(), 0.5), da2(a.size(), 0.5), db1(b.size()), db2(b.size());
    k::reference::matmul_backward(a, b, dc, da1, db1, m, kk, n);
    k::matmul_backward(a, b, dc, da2, db2, m, kk, n);
    expect_close(da1, da2, 1e-12);
    expect_close(db1, db2, 1e-12);
}

TEST_P(KernelParity, Conv) {
    Rng rng(2);
    for (const auto& [ci, hw, co, ks, s, p] :
         std::vector<std::tuple<int, int, int, int, int, int>>{{3, 32, 8, 4, 2, 1}, {4, 17, 6, 3, 1, 1}, {2, 16, 5, 5, 1, 2}}) {
        const auto g = k::conv_geometry(ci, hw, hw, co, ks, ks, s, p);
        const auto in = rand_vec(ci * hw * hw, rng);
        const auto ker = rand_vec(co * ci * ks * ks, rng);
        std::vector<double> o1(co * g.out_h * g.out_w), o2(o1.size());
        k::reference::conv2d_forward(g, in, ker, o1);
        k::conv2d_forward(g, in, ker, o2);
        expect_close(o1, o2, 1e-12);

        const auto dout = rand_vec(o1.size(), rng);
        std::vector<double> di1(in.size(), 0.25), di2(in.size(), 0.25);
        k::reference::conv2d_backward_input(g, dout, ker, di1);
        k::conv2d_backward_input(g, dout, ker, di2);
        expect_close(di1, di2, 1e-12);

        std::vector<double> dk1(ker.size()), dk2(ker.size());
        k::reference::conv2d_backward_kernels(g, in, dout, dk1);
        k::conv2d_backward_kernels(g, in, dout, dk2);
        expect_close(dk1, dk2, 1e-12);
    }
}

TEST_P(KernelParity, Warp) {
    Rng rng(3);
    const std::size_t c = 2, h = 40, w = 36;
    const auto frame = rand_vec(c * h * w, rng);
    const auto flow = rand_vec(2 * h * w, rng, 6.0);  // reaches past the border
    std::vector<double> o1(frame.size()), o2(frame.size());
    k::reference::warp_forward(c, h, w, frame, flow, o1);
    k::warp_forward(c, h, w, frame, flow, o2);
    expect_close(o1, o2, 1e-12);
    const auto dout = rand_vec(o1.size(), rng);
    std::vector<double> df1(frame.size()), df2(frame.size()), dw1(flow.size()), dw2(flow.size());
    k::reference::warp_backward(c, h, w, frame, flow, dout, df1, dw1);
    k::warp_backward(c, h, w, frame, flow, dout, df2, dw2);
    expect_close(df1, df2, 1e-12);
    expect_close(dw1, dw2, 1e-12);
}

TEST_P(KernelParity, DeterministicAcrossRuns) {
    Rng rng(4);
    const auto g = k::conv_geometry(8, 32, 32, 16, 4, 4, 2, 1);
    const auto in = rand_vec(8 * 32 * 32, rng);
    const auto ker = rand_vec(16 * 8 * 16, rng);
    const auto dout = rand_vec(16 * 16 * 16, rng);
    std::vector<double> a(in.size()), b(in.size());
    k::conv2d_backward_input(g, dout, ker, a);
    k::conv2d_backward_input(g, dout, ker, b);
    EXPECT_EQ(a, b);
}

INSTANTIATE_TEST_SUITE_P(Threads, KernelParity, ::testing::Values(1, 2, 4));
