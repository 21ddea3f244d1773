#pragma once

// Minimal dense reverse-mode autodiff on float64 matrices.
//
// Each operation records a node holding its value, its inputs and a
// backward closure; the recorded graph is the tape. backward(loss)
// zeroes intermediate gradients, seeds d(loss)/d(loss) = 1 and replays
// the tape in reverse topological order, so every node is visited after
// all of its consumers. Leaf gradients accumulate across backward calls
// until zero_grad(), which is what per-sample batch accumulation relies
// on.

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

namespace caumax::ad {

using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

namespace detail {
struct Node;
}

class Tensor {
public:
    Tensor() = default;

    static Tensor constant(Matrix value);
    static Tensor leaf(Matrix value);  // requires_grad

    bool defined() const { return node_ != nullptr; }
    bool requires_grad() const;
    Eigen::Index rows() const;
    Eigen::Index cols() const;
    Eigen::Index size() const { return rows() * cols(); }

    const Matrix& value() const;
    Matrix& mutable_value();  // leaf updates (optimizer steps)
    const Matrix& grad() const;
    void zero_grad();

private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::Node> node_;

    friend Tensor make_op(Matrix, std::vector<Tensor>,
                          std::function<void(detail::Node&)>);
    friend void backward(const Tensor&);
    friend detail::Node& node_of(const Tensor&);
};

// Primitives. Every op validates shapes and throws std::invalid_argument
// on mismatch. Ops whose inputs carry no gradient short-circuit to a
// constant result so inference builds no graph.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor add_rowvec(const Tensor& a, const Tensor& row);
Tensor sub_bcast(const Tensor& a, const Tensor& scalar);  // a - s * ones
Tensor mean_all(const Tensor& a);
Tensor sum_all(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sqrt_guarded(const Tensor& a);  // sqrt(max(x,0)), zero grad at 0
Tensor l1_norm(const Tensor& a);
Tensor block_mean_rows(const Tensor& a, Eigen::Index block);  // per-block row mean

// Inverted dropout: keep with probability 1-rate and scale kept entries
// by 1/(1-rate); rate 0 is the identity. Mask is a pure function of the
// seed (row-major draw order).
Tensor dropout(const Tensor& a, double rate, std::uint64_t seed);

// y = S * a with a constant sparse operator; d(a) = S^T * dy.
Tensor spmm(std::shared_ptr<const SparseMatrix> s, const Tensor& a);

// Reverse pass from a scalar (1x1) tensor. Throws std::logic_error when
// loss is not scalar or carries no gradient (detached).
void backward(const Tensor& loss);

// Numerically stable scalar helpers shared with non-autodiff code.
double sigmoid_scalar(double x);
double softplus_scalar(double x);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;  // L2 term folded into the gradient
};

class Adam {
public:
    Adam(std::vector<Tensor> params, AdamConfig cfg);

    void step();
    void zero_grad();
    std::int64_t step_count() const { return step_; }

private:
    std::vector<Tensor> params_;
    std::vector<Matrix> m_, v_;
    AdamConfig cfg_;
    std::int64_t step_ = 0;
};

}  // namespace caumax::ad
