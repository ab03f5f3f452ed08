#include "csnet/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "csnet/kernels.hpp"

namespace csnet {

namespace {

std::atomic<std::uint64_t> g_next_seq{1};
thread_local bool t_grad_enabled = true;

std::shared_ptr<detail::Node> new_node(Shape shape, std::vector<double> value, bool requires_grad) {
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    node->requires_grad = requires_grad;
    node->seq = g_next_seq.fetch_add(1, std::memory_order_relaxed);
    return node;
}

void check_shape(const Shape& shape, std::size_t data_size) {
    for (auto e : shape)
        if (e == 0) throw ShapeError("tensor: zero extent in shape " + to_string(shape));
    if (numel(shape) != data_size)
        throw ShapeError("tensor: shape " + to_string(shape) + " does not match " +
                         std::to_string(data_size) + " values");
}

double softplus_value(double x) {
    // log1p(exp(x)) without overflow for large x
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid_value(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// Operand b broadcasts into a's shape when it matches on a leading run of
// axes and is 1 on all remaining (trailing) axes. Returns the block size of
// a that maps to one element of b, or 0 if the shapes are incompatible.
std::size_t broadcast_block(const Shape& a, const Shape& b) {
    if (a.size() != b.size()) return 0;
    std::size_t split = a.size();
    while (split > 0 && b[split - 1] == 1 && a[split - 1] != 1) --split;
    for (std::size_t i = 0; i < split; ++i)
        if (a[i] != b[i]) return 0;
    std::size_t block = 1;
    for (std::size_t i = split; i < a.size(); ++i) {
        if (b[i] != 1) return 0;
        block *= a[i];
    }
    return block;
}

}  // namespace

std::size_t numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "x" : "") << shape[i];
    out << ']';
    return out.str();
}

std::vector<double>& detail::Node::ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
}

Tensor::Tensor() : node_(new_node({1}, {0.0}, false)) {}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
    check_shape(shape, data.size());
    node_ = new_node(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const std::size_t n = numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({1}, {value}, requires_grad); }

Tensor Tensor::from(std::initializer_list<double> values, bool requires_grad) {
    return Tensor({values.size()}, std::vector<double>(values), requires_grad);
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= rank()) throw ShapeError("tensor: axis out of range");
    return node_->shape[axis];
}

double Tensor::item() const {
    if (size() != 1) throw UsageError("tensor: item() on non-scalar " + to_string(shape()));
    return node_->value[0];
}

void Tensor::zero_grad() {
    node_->grad.clear();
    node_->backward_done = false;
}

Tensor Tensor::detach() const { return Tensor(shape(), node_->value, false); }

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> parents,
                   std::function<void(detail::Node&)> backward_fn) {
    bool needs = false;
    if (t_grad_enabled)
        for (const auto& p : parents) needs = needs || p.requires_grad();
    auto node = new_node(std::move(shape), std::move(value), needs);
    if (needs) {
        node->parents.reserve(parents.size());
        for (const auto& p : parents) node->parents.push_back(p.node());
        node->backward_fn = std::move(backward_fn);
    }
    return Tensor(std::move(node));
}

// ---------------------------------------------------------------------------
// elementwise

Tensor elementwise(Unary op, const Tensor& a) {
    const auto in = a.data();
    std::vector<double> out(in.size());
    switch (op) {
        case Unary::Neg: std::transform(in.begin(), in.end(), out.begin(), [](double x) { return -x; }); break;
        case Unary::Exp: std::transform(in.begin(), in.end(), out.begin(), [](double x) { return std::exp(x); }); break;
        case Unary::Log:
            for (std::size_t i = 0; i < in.size(); ++i) {
                if (!(in[i] > 0.0)) throw DomainError("log: non-positive argument");
                out[i] = std::log(in[i]);
            }
            break;
        case Unary::Relu: std::transform(in.begin(), in.end(), out.begin(), [](double x) { return x > 0.0 ? x : 0.0; }); break;
        case Unary::Softplus: std::transform(in.begin(), in.end(), out.begin(), softplus_value); break;
        case Unary::Square: std::transform(in.begin(), in.end(), out.begin(), [](double x) { return x * x; }); break;
        case Unary::Tanh: std::transform(in.begin(), in.end(), out.begin(), [](double x) { return std::tanh(x); }); break;
        case Unary::Sigmoid: std::transform(in.begin(), in.end(), out.begin(), sigmoid_value); break;
    }
    return make_result(a.shape(), std::move(out), {a}, [op](detail::Node& self) {
        auto& src = *self.parents[0];
        auto& g = src.ensure_grad();
        const auto& x = src.value;
        const auto& y = self.value;
        const auto& dy = self.grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
            double d = 0.0;
            switch (op) {
                case Unary::Neg: d = -1.0; break;
                case Unary::Exp: d = y[i]; break;
                case Unary::Log: d = 1.0 / x[i]; break;
                case Unary::Relu: d = x[i] > 0.0 ? 1.0 : 0.0; break;
                case Unary::Softplus: d = sigmoid_value(x[i]); break;
                case Unary::Square: d = 2.0 * x[i]; break;
                case Unary::Tanh: d = 1.0 - y[i] * y[i]; break;
                case Unary::Sigmoid: d = y[i] * (1.0 - y[i]); break;
            }
            g[i] += dy[i] * d;
        }
    });
}

Tensor elementwise(Binary op, const Tensor& a, const Tensor& b) {
    // After normalising, a carries the result shape unless swapped.
    bool swapped = false;
    std::size_t block = 0;
    if (a.shape() == b.shape()) {
        block = 1;
    } else if ((block = broadcast_block(a.shape(), b.shape())) == 0) {
        if ((block = broadcast_block(b.shape(), a.shape())) == 0)
            throw ShapeError("elementwise: cannot broadcast " + to_string(a.shape()) + " with " +
                             to_string(b.shape()));
        swapped = true;
    }
    const Shape out_shape = swapped ? b.shape() : a.shape();
    const auto av = a.data();
    const auto bv = b.data();
    const std::size_t n = numel(out_shape);
    // index into each operand for output element i
    auto ia = [&](std::size_t i) { return swapped ? i / block : i; };
    auto ib = [&](std::size_t i) { return swapped ? i : i / block; };
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = av[ia(i)];
        const double y = bv[ib(i)];
        switch (op) {
            case Binary::Add: out[i] = x + y; break;
            case Binary::Sub: out[i] = x - y; break;
            case Binary::Mul: out[i] = x * y; break;
            case Binary::Div: out[i] = x / y; break;
        }
    }
    return make_result(out_shape, std::move(out), {a, b}, [op, swapped, block, n](detail::Node& self) {
        auto& na = *self.parents[0];
        auto& nb = *self.parents[1];
        const auto& dy = self.grad;
        auto idx_a = [&](std::size_t i) { return swapped ? i / block : i; };
        auto idx_b = [&](std::size_t i) { return swapped ? i : i / block; };
        if (na.requires_grad) {
            auto& g = na.ensure_grad();
            for (std::size_t i = 0; i < n; ++i) {
                double d = 1.0;
                if (op == Binary::Sub) d = 1.0;
                else if (op == Binary::Mul) d = nb.value[idx_b(i)];
                else if (op == Binary::Div) d = 1.0 / nb.value[idx_b(i)];
                g[idx_a(i)] += dy[i] * d;
            }
        }
        if (nb.requires_grad) {
            auto& g = nb.ensure_grad();
            for (std::size_t i = 0; i < n; ++i) {
                double d = 1.0;
                if (op == Binary::Sub) d = -1.0;
                else if (op == Binary::Mul) d = na.value[idx_a(i)];
                else if (op == Binary::Div) {
                    const double y = nb.value[idx_b(i)];
                    d = -na.value[idx_a(i)] / (y * y);
                }
                g[idx_b(i)] += dy[i] * d;
            }
        }
    });
}

Tensor operator+(const Tensor& a, const Tensor& b) { return elementwise(Binary::Add, a, b); }
Tensor operator-(const Tensor& a, const Tensor& b) { return elementwise(Binary::Sub, a, b); }
Tensor operator*(const Tensor& a, const Tensor& b) { return elementwise(Binary::Mul, a, b); }
Tensor operator/(const Tensor& a, const Tensor& b) { return elementwise(Binary::Div, a, b); }
Tensor operator-(const Tensor& a) { return elementwise(Unary::Neg, a); }

Tensor neg(const Tensor& a) { return elementwise(Unary::Neg, a); }
Tensor exp(const Tensor& a) { return elementwise(Unary::Exp, a); }
Tensor log(const Tensor& a) { return elementwise(Unary::Log, a); }
Tensor relu(const Tensor& a) { return elementwise(Unary::Relu, a); }
Tensor softplus(const Tensor& a) { return elementwise(Unary::Softplus, a); }
Tensor square(const Tensor& a) { return elementwise(Unary::Square, a); }
Tensor tanh(const Tensor& a) { return elementwise(Unary::Tanh, a); }
Tensor sigmoid(const Tensor& a) { return elementwise(Unary::Sigmoid, a); }

Tensor scale(const Tensor& a, double factor) {
    std::vector<double> out(a.data().begin(), a.data().end());
    for (auto& v : out) v *= factor;
    return make_result(a.shape(), std::move(out), {a}, [factor](detail::Node& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
    });
}

Tensor add_scalar(const Tensor& a, double offset) {
    std::vector<double> out(a.data().begin(), a.data().end());
    for (auto& v : out) v += offset;
    return make_result(a.shape(), std::move(out), {a}, [](detail::Node& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

// ---------------------------------------------------------------------------
// linear algebra and convolution

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw ShapeError("matmul: incompatible shapes " + to_string(a.shape()) + " and " +
                         to_string(b.shape()));
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> out(m * n);
    kernels::matmul(a.data(), b.data(), out, m, k, n);
    return make_result({m, n}, std::move(out), {a, b}, [m, k, n](detail::Node& self) {
        auto& na = *self.parents[0];
        auto& nb = *self.parents[1];
        std::span<double> da, db;
        if (na.requires_grad) da = na.ensure_grad();
        if (nb.requires_grad) db = nb.ensure_grad();
        kernels::matmul_backward(na.value, nb.value, self.grad, da, db, m, k, n);
    });
}

Tensor conv2d(const Tensor& input, const Tensor& kernels, std::size_t stride, std::size_t pad) {
    if (input.rank() != 3 || kernels.rank() != 4 || kernels.dim(1) != input.dim(0))
        throw ShapeError("conv2d: incompatible shapes " + to_string(input.shape()) + " and " +
                         to_string(kernels.shape()));
    const auto g = kernels::conv_geometry(input.dim(0), input.dim(1), input.dim(2), kernels.dim(0),
                                          kernels.dim(2), kernels.dim(3), stride, pad);
    std::vector<double> out(g.out_channels * g.out_h * g.out_w);
    kernels::conv2d_forward(g, input.data(), kernels.data(), out);
    return make_result({g.out_channels, g.out_h, g.out_w}, std::move(out), {input, kernels},
                       [g](detail::Node& self) {
                           auto& ni = *self.parents[0];
                           auto& nk = *self.parents[1];
                           if (ni.requires_grad)
                               kernels::conv2d_backward_input(g, self.grad, nk.value, ni.ensure_grad());
                           if (nk.requires_grad)
                               kernels::conv2d_backward_kernels(g, ni.value, self.grad, nk.ensure_grad());
                       });
}

Tensor conv_transpose2d(const Tensor& input, const Tensor& kernels, std::size_t stride,
                        std::size_t pad) {
    if (input.rank() != 3 || kernels.rank() != 4 || kernels.dim(0) != input.dim(0))
        throw ShapeError("conv_transpose2d: incompatible shapes " + to_string(input.shape()) +
                         " and " + to_string(kernels.shape()));
    if (stride == 0) throw ShapeError("conv_transpose2d: stride must be positive");
    const long oh = static_cast<long>((input.dim(1) - 1) * stride + kernels.dim(2)) - 2 * static_cast<long>(pad);
    const long ow = static_cast<long>((input.dim(2) - 1) * stride + kernels.dim(3)) - 2 * static_cast<long>(pad);
    if (oh <= 0 || ow <= 0) throw ShapeError("conv_transpose2d: non-positive output extent");
    // Geometry of the conv2d this op is the adjoint of.
    const auto g = kernels::conv_geometry(kernels.dim(1), static_cast<std::size_t>(oh),
                                          static_cast<std::size_t>(ow), kernels.dim(0), kernels.dim(2),
                                          kernels.dim(3), stride, pad);
    if (g.out_h != input.dim(1) || g.out_w != input.dim(2))
        throw ShapeError("conv_transpose2d: inconsistent geometry");
    std::vector<double> out(g.in_channels * g.in_h * g.in_w, 0.0);
    kernels::conv2d_backward_input(g, input.data(), kernels.data(), out);
    return make_result({g.in_channels, g.in_h, g.in_w}, std::move(out), {input, kernels},
                       [g](detail::Node& self) {
                           auto& ni = *self.parents[0];
                           auto& nk = *self.parents[1];
                           if (ni.requires_grad) {
                               std::vector<double> tmp(ni.value.size());
                               kernels::conv2d_forward(g, self.grad, nk.value, tmp);
                               auto& gi = ni.ensure_grad();
                               for (std::size_t i = 0; i < tmp.size(); ++i) gi[i] += tmp[i];
                           }
                           if (nk.requires_grad)
                               kernels::conv2d_backward_kernels(g, self.grad, ni.value, nk.ensure_grad());
                       });
}

// ---------------------------------------------------------------------------
// reductions

Tensor reduce(Reduce op, const Tensor& a, std::optional<std::size_t> axis) {
    std::size_t outer = 1, len = a.size(), inner = 1;
    Shape out_shape{1};
    if (axis) {
        if (*axis >= a.rank()) throw ShapeError("reduce: axis out of range");
        outer = 1;
        for (std::size_t i = 0; i < *axis; ++i) outer *= a.dim(i);
        len = a.dim(*axis);
        inner = 1;
        for (std::size_t i = *axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
        out_shape.clear();
        for (std::size_t i = 0; i < a.rank(); ++i)
            if (i != *axis) out_shape.push_back(a.dim(i));
        if (out_shape.empty()) out_shape = {1};
    }
    if (len == 0) throw DomainError("reduce: empty reduction");
    const auto v = a.data();
    std::vector<double> out(outer * inner);
    // Selected element per output for min/max, shift for logsumexp.
    std::vector<std::size_t> pick(outer * inner, 0);
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            const std::size_t r = o * inner + in;
            auto at = [&](std::size_t j) { return v[base + j * inner]; };
            switch (op) {
                case Reduce::Sum:
                case Reduce::Mean: {
                    double s = 0.0;
                    for (std::size_t j = 0; j < len; ++j) s += at(j);
                    out[r] = op == Reduce::Mean ? s / static_cast<double>(len) : s;
                    break;
                }
                case Reduce::Min:
                case Reduce::Max:
                case Reduce::LogSumExp: {
                    std::size_t best = 0;
                    for (std::size_t j = 1; j < len; ++j) {
                        const bool better = op == Reduce::Min ? at(j) < at(best) : at(j) > at(best);
                        if (better) best = j;
                    }
                    pick[r] = best;
                    if (op != Reduce::LogSumExp) {
                        out[r] = at(best);
                    } else {
                        const double m = at(best);
                        if (std::isinf(m)) {
                            out[r] = m;
                        } else {
                            double s = 0.0;
                            for (std::size_t j = 0; j < len; ++j) s += std::exp(at(j) - m);
                            out[r] = m + std::log(s);
                        }
                    }
                    break;
                }
            }
        }
    return make_result(out_shape, std::move(out), {a},
                       [op, outer, len, inner, pick = std::move(pick)](detail::Node& self) {
                           auto& src = *self.parents[0];
                           auto& g = src.ensure_grad();
                           for (std::size_t o = 0; o < outer; ++o)
                               for (std::size_t in = 0; in < inner; ++in) {
                                   const std::size_t base = o * len * inner + in;
                                   const std::size_t r = o * inner + in;
                                   const double dy = self.grad[r];
                                   switch (op) {
                                       case Reduce::Sum:
                                           for (std::size_t j = 0; j < len; ++j) g[base + j * inner] += dy;
                                           break;
                                       case Reduce::Mean:
                                           for (std::size_t j = 0; j < len; ++j)
                                               g[base + j * inner] += dy / static_cast<double>(len);
                                           break;
                                       case Reduce::Min:
                                       case Reduce::Max: g[base + pick[r] * inner] += dy; break;
                                       case Reduce::LogSumExp:
                                           for (std::size_t j = 0; j < len; ++j) {
                                               const double x = src.value[base + j * inner];
                                               g[base + j * inner] += dy * std::exp(x - self.value[r]);
                                           }
                                           break;
                                   }
                               }
                       });
}

Tensor sum(const Tensor& a) { return reduce(Reduce::Sum, a); }
Tensor mean(const Tensor& a) { return reduce(Reduce::Mean, a); }
Tensor min(const Tensor& a) { return reduce(Reduce::Min, a); }
Tensor max(const Tensor& a) { return reduce(Reduce::Max, a); }
Tensor logsumexp(const Tensor& a) { return reduce(Reduce::LogSumExp, a); }

// ---------------------------------------------------------------------------
// shape manipulation

Tensor reshape(const Tensor& a, Shape shape) {
    check_shape(shape, a.size());
    std::vector<double> out(a.data().begin(), a.data().end());
    return make_result(std::move(shape), std::move(out), {a}, [](detail::Node& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

Tensor flatten(const Tensor& a) { return reshape(a, {a.size()}); }

Tensor concat(std::span<const Tensor> parts) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const Shape& first = parts[0].shape();
    Shape out_shape = first;
    out_shape[0] = 0;
    for (const auto& p : parts) {
        if (p.rank() != first.size() || !std::equal(first.begin() + 1, first.end(), p.shape().begin() + 1))
            throw ShapeError("concat: mismatched trailing extents " + to_string(first) + " vs " +
                             to_string(p.shape()));
        out_shape[0] += p.dim(0);
    }
    std::vector<double> out;
    out.reserve(numel(out_shape));
    for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
    std::vector<Tensor> parents(parts.begin(), parts.end());
    return make_result(std::move(out_shape), std::move(out), std::move(parents), [](detail::Node& self) {
        std::size_t offset = 0;
        for (auto& parent : self.parents) {
            const std::size_t n = parent->value.size();
            if (parent->requires_grad) {
                auto& g = parent->ensure_grad();
                for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[offset + i];
            }
            offset += n;
        }
    });
}

Tensor concat(std::initializer_list<Tensor> parts) {
    return concat(std::span<const Tensor>(parts.begin(), parts.size()));
}

Tensor slice(const Tensor& a, std::size_t begin, std::size_t end) {
    if (a.rank() == 0 || begin >= end || end > a.dim(0)) throw ShapeError("slice: bad range");
    const std::size_t row = a.size() / a.dim(0);
    Shape out_shape = a.shape();
    out_shape[0] = end - begin;
    std::vector<double> out(a.data().begin() + static_cast<long>(begin * row),
                            a.data().begin() + static_cast<long>(end * row));
    return make_result(std::move(out_shape), std::move(out), {a}, [offset = begin * row](detail::Node& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[offset + i] += self.grad[i];
    });
}

// ---------------------------------------------------------------------------
// reverse sweep

void backward(const Tensor& loss) {
    const auto& root = loss.node();
    if (root->value.size() != 1) throw UsageError("backward: root is not a scalar " + to_string(root->shape));
    if (root->backward_done) throw UsageError("backward: graph already differentiated; reset gradients first");
    root->backward_done = true;
    if (!root->requires_grad) return;

    // Collect interior nodes reachable through requires_grad edges; their seq
    // numbers give construction order, which is a topological order.
    std::vector<detail::Node*> order;
    std::unordered_set<const detail::Node*> seen{root.get()};
    std::vector<detail::Node*> pending{root.get()};
    while (!pending.empty()) {
        detail::Node* n = pending.back();
        pending.pop_back();
        if (!n->backward_fn) continue;
        order.push_back(n);
        for (auto& p : n->parents)
            if (p->requires_grad && seen.insert(p.get()).second) pending.push_back(p.get());
    }
    std::sort(order.begin(), order.end(), [](auto* x, auto* y) { return x->seq > y->seq; });

    root->ensure_grad()[0] += 1.0;
    for (auto* n : order) {
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
        // Interior gradients are scratch space once propagated.
        if (n != root.get() && n->backward_fn) std::vector<double>().swap(n->grad);
    }
}

}  // namespace csnet
