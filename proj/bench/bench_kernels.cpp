// Serial reference kernels vs the OpenMP kernels, timed on fixed shapes.
// Usage: bench_kernels [repeats]. CSNET_THREADS sets the OpenMP worker count.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>
#include <vector>

#include "csnet/kernels.hpp"
#include "csnet/rng.hpp"

namespace k = csnet::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
    csnet::Rng rng(seed);
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

double best_ms(int repeats, const std::function<void()>& fn) {
    double best = 1e300;
    for (int r = 0; r < repeats; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        best = std::min(best, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    }
    return best;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

void row(const std::string& name, double serial, double parallel, double diff) {
    std::printf("%-34s %10.3f %10.3f %8.2fx %10.2e\n", name.c_str(), serial, parallel, serial / parallel, diff);
}

}  // namespace

int main(int argc, char** argv) {
    const int repeats = argc > 1 ? std::atoi(argv[1]) : 5;
    std::printf("threads: %d, repeats: %d (best time reported)\n", k::thread_count(), repeats);
    std::printf("%-34s %10s %10s %9s %10s\n", "kernel", "serial ms", "omp ms", "speedup", "max|diff|");

    {
        const std::size_t m = 256, kk = 256, n = 256;
        const auto a = random_vec(m * kk, 1), b = random_vec(kk * n, 2);
        std::vector<double> c1(m * n), c2(m * n);
        const double ts = best_ms(repeats, [&] { k::reference::matmul(a, b, c1, m, kk, n); });
        const double tp = best_ms(repeats, [&] { k::matmul(a, b, c2, m, kk, n); });
        row("matmul 256x256x256", ts, tp, max_abs_diff(c1, c2));
    }
    {
        const auto g = k::conv_geometry(16, 64, 64, 32, 4, 4, 2, 1);
        const auto in = random_vec(16 * 64 * 64, 3);
        const auto ker = random_vec(32 * 16 * 16, 4);
        std::vector<double> o1(32 * g.out_h * g.out_w), o2(o1.size());
        const double ts = best_ms(repeats, [&] { k::reference::conv2d_forward(g, in, ker, o1); });
        const double tp = best_ms(repeats, [&] { k::conv2d_forward(g, in, ker, o2); });
        row("conv2d fwd 16->32 @64x64 k4 s2", ts, tp, max_abs_diff(o1, o2));

        const auto dout = random_vec(o1.size(), 5);
        std::vector<double> d1(in.size()), d2(in.size());
        const double tbs = best_ms(repeats, [&] {
            std::fill(d1.begin(), d1.end(), 0.0);
            k::reference::conv2d_backward_input(g, dout, ker, d1);
        });
        const double tbp = best_ms(repeats, [&] {
            std::fill(d2.begin(), d2.end(), 0.0);
            k::conv2d_backward_input(g, dout, ker, d2);
        });
        row("conv2d d_input", tbs, tbp, max_abs_diff(d1, d2));

        std::vector<double> dk1(ker.size()), dk2(ker.size());
        const double tks = best_ms(repeats, [&] {
            std::fill(dk1.begin(), dk1.end(), 0.0);
            k::reference::conv2d_backward_kernels(g, in, dout, dk1);
        });
        const double tkp = best_ms(repeats, [&] {
            std::fill(dk2.begin(), dk2.end(), 0.0);
            k::conv2d_backward_kernels(g, in, dout, dk2);
        });
        row("conv2d d_kernels", tks, tkp, max_abs_diff(dk1, dk2));
    }
    {
        const std::size_t c = 3, h = 128, w = 128;
        const auto frame = random_vec(c * h * w, 6);
        auto flow = random_vec(2 * h * w, 7);
        for (auto& f : flow) f *= 3.0;
        std::vector<double> o1(c * h * w), o2(c * h * w);
        const double ts = best_ms(repeats, [&] { k::reference::warp_forward(c, h, w, frame, flow, o1); });
        const double tp = best_ms(repeats, [&] { k::warp_forward(c, h, w, frame, flow, o2); });
        row("warp fwd 3x128x128", ts, tp, max_abs_diff(o1, o2));

        const auto dout = random_vec(o1.size(), 8);
        std::vector<double> df1(frame.size()), df2(frame.size()), dw1(flow.size()), dw2(flow.size());
        const double tbs = best_ms(repeats, [&] {
            std::fill(df1.begin(), df1.end(), 0.0);
            std::fill(dw1.begin(), dw1.end(), 0.0);
            k::reference::warp_backward(c, h, w, frame, flow, dout, df1, dw1);
        });
        const double tbp = best_ms(repeats, [&] {
            std::fill(df2.begin(), df2.end(), 0.0);
            std::fill(dw2.begin(), dw2.end(), 0.0);
            k::warp_backward(c, h, w, frame, flow, dout, df2, dw2);
        });
        row("warp bwd 3x128x128", tbs, tbp, std::max(max_abs_diff(df1, df2), max_abs_diff(dw1, dw2)));
    }
    return 0;
}
