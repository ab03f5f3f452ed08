#pragma once

#include <cstddef>
#include <span>

// Raw numeric kernels behind the differentiable ops.
//
// csnet::kernels holds the OpenMP versions used at runtime. Every parallel
// loop splits work over independent outputs and keeps the per-output
// summation order fixed, so results do not depend on the thread count.
// csnet::kernels::reference holds plain serial loops written the textbook
// way; tests and the benchmark compare the two.

namespace csnet::kernels {

struct ConvGeometry {
    std::size_t in_channels = 0;
    std::size_t in_h = 0;
    std::size_t in_w = 0;
    std::size_t out_channels = 0;
    std::size_t kh = 0;
    std::size_t kw = 0;
    std::size_t stride = 1;
    std::size_t pad = 0;
    std::size_t out_h = 0;
    std::size_t out_w = 0;
};

// Throws ShapeError when the padded extent is smaller than the kernel or the
// stride does not divide it evenly.
ConvGeometry conv_geometry(std::size_t in_channels, std::size_t in_h, std::size_t in_w,
                           std::size_t out_channels, std::size_t kh, std::size_t kw,
                           std::size_t stride, std::size_t pad);

// Worker count for parallel kernels; initialised from CSNET_THREADS when set.
int thread_count();
void set_thread_count(int n);

// c[m x n] = a[m x k] * b[k x n]
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n);
// da += dc * b^T, db += a^T * dc
void matmul_backward(std::span<const double> a, std::span<const double> b,
                     std::span<const double> dc, std::span<double> da, std::span<double> db,
                     std::size_t m, std::size_t k, std::size_t n);

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> kernels, std::span<double> output);
// dinput += conv2d^T(doutput); also the forward pass of conv_transpose2d.
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> doutput,
                           std::span<const double> kernels, std::span<double> dinput);
// dkernels += d<conv2d(input), doutput>/dkernels
void conv2d_backward_kernels(const ConvGeometry& g, std::span<const double> input,
                             std::span<const double> doutput, std::span<double> dkernels);

// Backward bilinear warp, flow channels are (row, col) displacements in pixels.
void warp_forward(std::size_t channels, std::size_t h, std::size_t w,
                  std::span<const double> frame, std::span<const double> flow,
                  std::span<double> output);
void warp_backward(std::size_t channels, std::size_t h, std::size_t w,
                   std::span<const double> frame, std::span<const double> flow,
                   std::span<const double> doutput, std::span<double> dframe,
                   std::span<double> dflow);

namespace reference {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n);
void matmul_backward(std::span<const double> a, std::span<const double> b,
                     std::span<const double> dc, std::span<double> da, std::span<double> db,
                     std::size_t m, std::size_t k, std::size_t n);
void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> kernels, std::span<double> output);
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> doutput,
                           std::span<const double> kernels, std::span<double> dinput);
void conv2d_backward_kernels(const ConvGeometry& g, std::span<const double> input,
                             std::span<const double> doutput, std::span<double> dkernels);
void warp_forward(std::size_t channels, std::size_t h, std::size_t w,
                  std::span<const double> frame, std::span<const double> flow,
                  std::span<double> output);
void warp_backward(std::size_t channels, std::size_t h, std::size_t w,
                   std::span<const double> frame, std::span<const double> flow,
                   std::span<const double> doutput, std::span<double> dframe,
                   std::span<double> dflow);

}  // namespace reference
}  // namespace csnet::kernels
