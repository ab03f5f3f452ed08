#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace csnet {

using Shape = std::vector<std::size_t>;

struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};
struct UsageError : std::logic_error {
    using std::logic_error::logic_error;
};
struct InputError : std::out_of_range {
    using std::out_of_range::out_of_range;
};
// Malformed or incompatible file contents.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {

// One recorded operation. Parents are held strongly so the graph stays alive
// as long as its root does; construction order doubles as topological order.
struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    bool backward_done = false;
    std::uint64_t seq = 0;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this->grad and accumulates into the parents' grad buffers.
    std::function<void(Node&)> backward_fn;

    std::vector<double>& ensure_grad();
};

}  // namespace detail

class Tensor {
public:
    Tensor();
    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor from(std::initializer_list<double> values, bool requires_grad = false);

    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t size() const { return node_->value.size(); }

    std::span<const double> data() const { return node_->value; }
    // Parameter updates only; never call on a tensor that feeds a live graph.
    std::span<double> mutable_data() { return node_->value; }

    double item() const;
    double operator[](std::size_t i) const { return node_->value[i]; }

    bool requires_grad() const { return node_->requires_grad; }
    bool has_grad() const { return !node_->grad.empty(); }
    std::span<const double> grad() const { return node_->grad; }
    void zero_grad();

    // A fresh leaf holding the same values, cut from any graph.
    Tensor detach() const;

    const std::shared_ptr<detail::Node>& node() const { return node_; }
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<detail::Node> node_;
};

// Graph recording is on by default and can be suspended per thread.
bool grad_enabled();

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

// Builds a result node. backward_fn is only kept when some parent needs a
// gradient and recording is enabled, so constant subexpressions cost nothing.
Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> parents,
                   std::function<void(detail::Node&)> backward_fn);

// Elementwise ops. Binary ops accept equal shapes, or operands of equal rank
// where one side has extent 1 on a contiguous run of trailing axes.
enum class Unary { Neg, Exp, Log, Relu, Softplus, Square, Tanh, Sigmoid };
enum class Binary { Add, Sub, Mul, Div };

Tensor elementwise(Unary op, const Tensor& a);
Tensor elementwise(Binary op, const Tensor& a, const Tensor& b);

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);
Tensor operator/(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a);

Tensor neg(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor square(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);

Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);

Tensor matmul(const Tensor& a, const Tensor& b);

// input [C_in x H x W], kernels [C_out x C_in x kh x kw]; cross-correlation.
Tensor conv2d(const Tensor& input, const Tensor& kernels, std::size_t stride, std::size_t pad);
// Adjoint of conv2d with the same kernel tensor: input [C_out x H x W] maps
// back to [C_in x H' x W'] with H' = (H - 1) * stride - 2 * pad + kh.
Tensor conv_transpose2d(const Tensor& input, const Tensor& kernels, std::size_t stride,
                        std::size_t pad);

enum class Reduce { Sum, Mean, Min, Max, LogSumExp };

// Reduces over one axis (removed from the result) or over everything.
Tensor reduce(Reduce op, const Tensor& a, std::optional<std::size_t> axis = std::nullopt);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor min(const Tensor& a);
Tensor max(const Tensor& a);
Tensor logsumexp(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
Tensor flatten(const Tensor& a);
// Concatenation along the leading axis; all trailing extents must agree.
Tensor concat(std::span<const Tensor> parts);
Tensor concat(std::initializer_list<Tensor> parts);
// Rows [begin, end) of the leading axis.
Tensor slice(const Tensor& a, std::size_t begin, std::size_t end);

// Seeds d(loss)/d(loss) = 1 and propagates to every requires_grad leaf.
// Leaf gradients accumulate across calls on distinct graphs; calling twice on
// the same root is a usage error.
void backward(const Tensor& loss);

}  // namespace csnet
