#include "csnet/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>

#include <omp.h>

#include "csnet/tensor.hpp"

namespace csnet::kernels {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 15;

int initial_threads() {
    if (const char* env = std::getenv("CSNET_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    return omp_get_max_threads();
}

int& threads_ref() {
    static int n = initial_threads();
    return n;
}

struct Bilinear {
    std::size_t y0, y1, x0, x1;
    double wy, wx;
    bool clamped_y, clamped_x;
};

Bilinear bilinear_at(double sy, double sx, std::size_t h, std::size_t w) {
    Bilinear b{};
    const double max_y = static_cast<double>(h - 1);
    const double max_x = static_cast<double>(w - 1);
    b.clamped_y = sy < 0.0 || sy > max_y;
    b.clamped_x = sx < 0.0 || sx > max_x;
    sy = std::clamp(sy, 0.0, max_y);
    sx = std::clamp(sx, 0.0, max_x);
    const double fy = std::floor(sy);
    const double fx = std::floor(sx);
    b.y0 = static_cast<std::size_t>(fy);
    b.x0 = static_cast<std::size_t>(fx);
    b.y1 = std::min(b.y0 + 1, h - 1);
    b.x1 = std::min(b.x0 + 1, w - 1);
    b.wy = sy - fy;
    b.wx = sx - fx;
    return b;
}

double bilinear_value(const double* plane, std::size_t w, const Bilinear& b) {
    const double v00 = plane[b.y0 * w + b.x0];
    const double v01 = plane[b.y0 * w + b.x1];
    const double v10 = plane[b.y1 * w + b.x0];
    const double v11 = plane[b.y1 * w + b.x1];
    return (1.0 - b.wy) * ((1.0 - b.wx) * v00 + b.wx * v01) + b.wy * ((1.0 - b.wx) * v10 + b.wx * v11);
}

}  // namespace

ConvGeometry conv_geometry(std::size_t in_channels, std::size_t in_h, std::size_t in_w,
                           std::size_t out_channels, std::size_t kh, std::size_t kw,
                           std::size_t stride, std::size_t pad) {
    if (stride == 0) throw ShapeError("conv: stride must be positive");
    const std::size_t ph = in_h + 2 * pad;
    const std::size_t pw = in_w + 2 * pad;
    if (kh == 0 || kw == 0 || kh > ph || kw > pw)
        throw ShapeError("conv: kernel larger than padded input");
    if ((ph - kh) % stride != 0 || (pw - kw) % stride != 0)
        throw ShapeError("conv: non-integral output extent");
    ConvGeometry g;
    g.in_channels = in_channels;
    g.in_h = in_h;
    g.in_w = in_w;
    g.out_channels = out_channels;
    g.kh = kh;
    g.kw = kw;
    g.stride = stride;
    g.pad = pad;
    g.out_h = (ph - kh) / stride + 1;
    g.out_w = (pw - kw) / stride + 1;
    return g;
}

int thread_count() { return threads_ref(); }

void set_thread_count(int n) { threads_ref() = std::max(1, n); }

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n) {
    const bool par = m * k * n >= kParallelWork;
#pragma omp parallel for if (par) num_threads(thread_count())
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c.data() + i * n;
        std::fill(crow, crow + n, 0.0);
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a[i * k + p];
            const double* brow = b.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
}

void matmul_backward(std::span<const double> a, std::span<const double> b,
                     std::span<const double> dc, std::span<double> da, std::span<double> db,
                     std::size_t m, std::size_t k, std::size_t n) {
    const bool par = m * k * n >= kParallelWork;
    if (!da.empty()) {
#pragma omp parallel for if (par) num_threads(thread_count())
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
                double s = 0.0;
                for (std::size_t j = 0; j < n; ++j) s += dc[i * n + j] * b[p * n + j];
                da[i * k + p] += s;
            }
        }
    }
    if (!db.empty()) {
#pragma omp parallel for if (par) num_threads(thread_count())
        for (std::size_t p = 0; p < k; ++p) {
            for (std::size_t j = 0; j < n; ++j) {
                double s = 0.0;
                for (std::size_t i = 0; i < m; ++i) s += a[i * k + p] * dc[i * n + j];
                db[p * n + j] += s;
            }
        }
    }
}

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> kernels, std::span<double> output) {
    const std::size_t work = g.out_channels * g.out_h * g.out_w * g.in_channels * g.kh * g.kw;
    const long pad = static_cast<long>(g.pad);
#pragma omp parallel for collapse(2) if (work >= kParallelWork) num_threads(thread_count())
    for (std::size_t co = 0; co < g.out_channels; ++co) {
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
            for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                double s = 0.0;
                for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
                    const double* kern = kernels.data() + ((co * g.in_channels + ci) * g.kh) * g.kw;
                    const double* plane = input.data() + ci * g.in_h * g.in_w;
                    for (std::size_t ky = 0; ky < g.kh; ++ky) {
                        const long iy = static_cast<long>(oy * g.stride + ky) - pad;
                        if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
                        for (std::size_t kx = 0; kx < g.kw; ++kx) {
                            const long ix = static_cast<long>(ox * g.stride + kx) - pad;
                            if (ix < 0 || ix >= static_cast<long>(g.in_w)) continue;
                            s += kern[ky * g.kw + kx] * plane[iy * static_cast<long>(g.in_w) + ix];
                        }
                    }
                }
                output[(co * g.out_h + oy) * g.out_w + ox] = s;
            }
        }
    }
}

// Gather form: each input cell sums the output cells whose window covers it.
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> doutput,
                           std::span<const double> kernels, std::span<double> dinput) {
    const std::size_t work = g.out_channels * g.out_h * g.out_w * g.in_channels * g.kh * g.kw;
    const long pad = static_cast<long>(g.pad);
    const long in_h = static_cast<long>(g.in_h);
    const long in_w = static_cast<long>(g.in_w);
    // Each thread scatters into whole input-channel planes it owns.
#pragma omp parallel for if (work >= kParallelWork) num_threads(thread_count())
    for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
        double* plane = dinput.data() + ci * g.in_h * g.in_w;
        for (std::size_t co = 0; co < g.out_channels; ++co) {
            const double* kern = kernels.data() + ((co * g.in_channels + ci) * g.kh) * g.kw;
            const double* dplane = doutput.data() + co * g.out_h * g.out_w;
            for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                    const double d = dplane[oy * g.out_w + ox];
                    const long y0 = static_cast<long>(oy * g.stride) - pad;
                    const long x0 = static_cast<long>(ox * g.stride) - pad;
                    for (std::size_t ky = 0; ky < g.kh; ++ky) {
                        const long iy = y0 + static_cast<long>(ky);
                        if (iy < 0 || iy >= in_h) continue;
                        double* prow = plane + iy * in_w;
                        const double* krow = kern + ky * g.kw;
                        for (std::size_t kx = 0; kx < g.kw; ++kx) {
                            const long ix = x0 + static_cast<long>(kx);
                            if (ix < 0 || ix >= in_w) continue;
                            prow[ix] += krow[kx] * d;
                        }
                    }
                }
            }
        }
    }
}

void conv2d_backward_kernels(const ConvGeometry& g, std::span<const double> input,
                             std::span<const double> doutput, std::span<double> dkernels) {
    const std::size_t work = g.out_channels * g.out_h * g.out_w * g.in_channels * g.kh * g.kw;
    const long pad = static_cast<long>(g.pad);
#pragma omp parallel for collapse(2) if (work >= kParallelWork) num_threads(thread_count())
    for (std::size_t co = 0; co < g.out_channels; ++co) {
        for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
            const double* plane = input.data() + ci * g.in_h * g.in_w;
            const double* dplane = doutput.data() + co * g.out_h * g.out_w;
            double* dk = dkernels.data() + ((co * g.in_channels + ci) * g.kh) * g.kw;
            for (std::size_t ky = 0; ky < g.kh; ++ky) {
                for (std::size_t kx = 0; kx < g.kw; ++kx) {
                    double s = 0.0;
                    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                        const long iy = static_cast<long>(oy * g.stride + ky) - pad;
                        if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
                        for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                            const long ix = static_cast<long>(ox * g.stride + kx) - pad;
                            if (ix < 0 || ix >= static_cast<long>(g.in_w)) continue;
                            s += dplane[oy * g.out_w + ox] * plane[iy * static_cast<long>(g.in_w) + ix];
                        }
                    }
                    dk[ky * g.kw + kx] += s;
                }
            }
        }
    }
}

void warp_forward(std::size_t channels, std::size_t h, std::size_t w,
                  std::span<const double> frame, std::span<const double> flow,
                  std::span<double> output) {
    const std::size_t hw = h * w;
#pragma omp parallel for if (channels * hw >= kParallelWork / 4) num_threads(thread_count())
    for (std::size_t p = 0; p < hw; ++p) {
        const std::size_t y = p / w;
        const std::size_t x = p % w;
        const Bilinear b = bilinear_at(static_cast<double>(y) + flow[p],
                                       static_cast<double>(x) + flow[hw + p], h, w);
        for (std::size_t c = 0; c < channels; ++c)
            output[c * hw + p] = bilinear_value(frame.data() + c * hw, w, b);
    }
}

void warp_backward(std::size_t channels, std::size_t h, std::size_t w,
                   std::span<const double> frame, std::span<const double> flow,
                   std::span<const double> doutput, std::span<double> dframe,
                   std::span<double> dflow) {
    const std::size_t hw = h * w;
    const bool par = channels * hw >= kParallelWork / 4;
    if (!dframe.empty()) {
        // Scatter stays race-free because each thread owns whole channels.
#pragma omp parallel for if (par) num_threads(thread_count())
        for (std::size_t c = 0; c < channels; ++c) {
            double* dplane = dframe.data() + c * hw;
            for (std::size_t p = 0; p < hw; ++p) {
                const double g = doutput[c * hw + p];
                if (g == 0.0) continue;
                const Bilinear b = bilinear_at(static_cast<double>(p / w) + flow[p],
                                               static_cast<double>(p % w) + flow[hw + p], h, w);
                dplane[b.y0 * w + b.x0] += g * (1.0 - b.wy) * (1.0 - b.wx);
                dplane[b.y0 * w + b.x1] += g * (1.0 - b.wy) * b.wx;
                dplane[b.y1 * w + b.x0] += g * b.wy * (1.0 - b.wx);
                dplane[b.y1 * w + b.x1] += g * b.wy * b.wx;
            }
        }
    }
    if (!dflow.empty()) {
#pragma omp parallel for if (par) num_threads(thread_count())
        for (std::size_t p = 0; p < hw; ++p) {
            const Bilinear b = bilinear_at(static_cast<double>(p / w) + flow[p],
                                           static_cast<double>(p % w) + flow[hw + p], h, w);
            double gy = 0.0;
            double gx = 0.0;
            for (std::size_t c = 0; c < channels; ++c) {
                const double g = doutput[c * hw + p];
                const double* plane = frame.data() + c * hw;
                const double v00 = plane[b.y0 * w + b.x0];
                const double v01 = plane[b.y0 * w + b.x1];
                const double v10 = plane[b.y1 * w + b.x0];
                const double v11 = plane[b.y1 * w + b.x1];
                gy += g * ((1.0 - b.wx) * (v10 - v00) + b.wx * (v11 - v01));
                gx += g * ((1.0 - b.wy) * (v01 - v00) + b.wy * (v11 - v10));
            }
            if (!b.clamped_y) dflow[p] += gy;
            if (!b.clamped_x) dflow[hw + p] += gx;
        }
    }
}

namespace reference {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
            c[i * n + j] = s;
        }
}

void matmul_backward(std::span<const double> a, std::span<const double> b,
                     std::span<const double> dc, std::span<double> da, std::span<double> db,
                     std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t p = 0; p < k; ++p) {
                if (!da.empty()) da[i * k + p] += dc[i * n + j] * b[p * n + j];
                if (!db.empty()) db[p * n + j] += a[i * k + p] * dc[i * n + j];
            }
}

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> kernels, std::span<double> output) {
    std::fill(output.begin(), output.end(), 0.0);
    for (std::size_t co = 0; co < g.out_channels; ++co)
        for (std::size_t ci = 0; ci < g.in_channels; ++ci)
            for (std::size_t oy = 0; oy < g.out_h; ++oy)
                for (std::size_t ox = 0; ox < g.out_w; ++ox)
                    for (std::size_t ky = 0; ky < g.kh; ++ky)
                        for (std::size_t kx = 0; kx < g.kw; ++kx) {
                            const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
                            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
                            if (iy < 0 || ix < 0 || iy >= static_cast<long>(g.in_h) ||
                                ix >= static_cast<long>(g.in_w))
                                continue;
                            output[(co * g.out_h + oy) * g.out_w + ox] +=
                                kernels[((co * g.in_channels + ci) * g.kh + ky) * g.kw + kx] *
                                input[(ci * g.in_h + static_cast<std::size_t>(iy)) * g.in_w +
                                      static_cast<std::size_t>(ix)];
                        }
}

// Scatter form, the literal transpose of the forward loop.
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> doutput,
                           std::span<const double> kernels, std::span<double> dinput) {
    for (std::size_t co = 0; co < g.out_channels; ++co)
        for (std::size_t ci = 0; ci < g.in_channels; ++ci)
            for (std::size_t oy = 0; oy < g.out_h; ++oy)
                for (std::size_t ox = 0; ox < g.out_w; ++ox)
                    for (std::size_t ky = 0; ky < g.kh; ++ky)
                        for (std::size_t kx = 0; kx < g.kw; ++kx) {
                            const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
                            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
                            if (iy < 0 || ix < 0 || iy >= static_cast<long>(g.in_h) ||
                                ix >= static_cast<long>(g.in_w))
                                continue;
                            dinput[(ci * g.in_h + static_cast<std::size_t>(iy)) * g.in_w +
                                   static_cast<std::size_t>(ix)] +=
                                kernels[((co * g.in_channels + ci) * g.kh + ky) * g.kw + kx] *
                                doutput[(co * g.out_h + oy) * g.out_w + ox];
                        }
}

void conv2d_backward_kernels(const ConvGeometry& g, std::span<const double> input,
                             std::span<const double> doutput, std::span<double> dkernels) {
    for (std::size_t co = 0; co < g.out_channels; ++co)
        for (std::size_t ci = 0; ci < g.in_channels; ++ci)
            for (std::size_t oy = 0; oy < g.out_h; ++oy)
                for (std::size_t ox = 0; ox < g.out_w; ++ox)
                    for (std::size_t ky = 0; ky < g.kh; ++ky)
                        for (std::size_t kx = 0; kx < g.kw; ++kx) {
                            const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
                            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
                            if (iy < 0 || ix < 0 || iy >= static_cast<long>(g.in_h) ||
                                ix >= static_cast<long>(g.in_w))
                                continue;
                            dkernels[((co * g.in_channels + ci) * g.kh + ky) * g.kw + kx] +=
                                doutput[(co * g.out_h + oy) * g.out_w + ox] *
                                input[(ci * g.in_h + static_cast<std::size_t>(iy)) * g.in_w +
                                      static_cast<std::size_t>(ix)];
                        }
}

void warp_forward(std::size_t channels, std::size_t h, std::size_t w,
                  std::span<const double> frame, std::span<const double> flow,
                  std::span<double> output) {
    const std::size_t hw = h * w;
    for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                const std::size_t p = y * w + x;
                const Bilinear b = bilinear_at(static_cast<double>(y) + flow[p],
                                               static_cast<double>(x) + flow[hw + p], h, w);
                output[c * hw + p] = bilinear_value(frame.data() + c * hw, w, b);
            }
}

void warp_backward(std::size_t channels, std::size_t h, std::size_t w,
                   std::span<const double> frame, std::span<const double> flow,
                   std::span<const double> doutput, std::span<double> dframe,
                   std::span<double> dflow) {
    const std::size_t hw = h * w;
    for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t p = 0; p < hw; ++p) {
            const double g = doutput[c * hw + p];
            const Bilinear b = bilinear_at(static_cast<double>(p / w) + flow[p],
                                           static_cast<double>(p % w) + flow[hw + p], h, w);
            const double* plane = frame.data() + c * hw;
            if (!dframe.empty()) {
                double* dplane = dframe.data() + c * hw;
                dplane[b.y0 * w + b.x0] += g * (1.0 - b.wy) * (1.0 - b.wx);
                dplane[b.y0 * w + b.x1] += g * (1.0 - b.wy) * b.wx;
                dplane[b.y1 * w + b.x0] += g * b.wy * (1.0 - b.wx);
                dplane[b.y1 * w + b.x1] += g * b.wy * b.wx;
            }
            if (!dflow.empty()) {
                const double v00 = plane[b.y0 * w + b.x0];
                const double v01 = plane[b.y0 * w + b.x1];
                const double v10 = plane[b.y1 * w + b.x0];
                const double v11 = plane[b.y1 * w + b.x1];
                if (!b.clamped_y) dflow[p] += g * ((1.0 - b.wx) * (v10 - v00) + b.wx * (v11 - v01));
                if (!b.clamped_x) dflow[hw + p] += g * ((1.0 - b.wy) * (v01 - v00) + b.wy * (v11 - v10));
            }
        }
}

}  // namespace reference
}  // namespace csnet::kernels
