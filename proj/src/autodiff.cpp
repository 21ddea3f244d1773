#include "caumax/autodiff.hpp"

#include <malloc.h>

#include <cmath>
#include <functional>
#include <stdexcept>
#include <unordered_set>

#include "caumax/rng.hpp"

namespace caumax::ad {

namespace {

// Activation matrices exceed the default glibc mmap threshold; without
// this the hot loop spends most of its time in mmap/munmap page faults.
[[maybe_unused]] const bool malloc_tuned = [] {
    mallopt(M_MMAP_THRESHOLD, 512 * 1024 * 1024);
    mallopt(M_TRIM_THRESHOLD, 512 * 1024 * 1024);
    return true;
}();

}  // namespace

namespace detail {

struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool is_leaf = false;
    std::vector<Tensor> inputs;
    std::function<void(Node&)> backprop;  // routes this->grad into inputs
};

}  // namespace detail

using detail::Node;

Node& node_of(const Tensor& t) { return *t.node_; }

Tensor Tensor::constant(Matrix value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    return Tensor(std::move(n));
}

Tensor Tensor::leaf(Matrix value) {
    auto n = std::make_shared<Node>();
    n->grad = Matrix::Zero(value.rows(), value.cols());
    n->value = std::move(value);
    n->requires_grad = true;
    n->is_leaf = true;
    return Tensor(std::move(n));
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
Eigen::Index Tensor::rows() const { return node_->value.rows(); }
Eigen::Index Tensor::cols() const { return node_->value.cols(); }
const Matrix& Tensor::value() const { return node_->value; }
Matrix& Tensor::mutable_value() { return node_->value; }

const Matrix& Tensor::grad() const {
    if (!node_ || !node_->requires_grad)
        throw std::logic_error("grad(): tensor does not carry a gradient");
    return node_->grad;
}

void Tensor::zero_grad() {
    if (node_ && node_->requires_grad) node_->grad.setZero(rows(), cols());
}

Tensor make_op(Matrix value, std::vector<Tensor> inputs,
               std::function<void(Node&)> backprop) {
    bool needs_grad = false;
    for (const auto& in : inputs) needs_grad |= in.requires_grad();
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    if (needs_grad) {
        n->requires_grad = true;
        n->inputs = std::move(inputs);
        n->backprop = std::move(backprop);
    }
    return Tensor(std::move(n));
}

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                    " vs " + std::to_string(b.rows()) + "x" +
                                    std::to_string(b.cols()));
}

// Adds into the input's grad buffer, allocating it on first touch
// within a backward pass (non-leaf buffers are reset by backward()).
void accumulate(const Tensor& input, const Matrix& g) {
    Node& n = node_of(input);
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    n.grad += g;
}

}  // namespace

double sigmoid_scalar(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double softplus_scalar(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows())
        throw std::invalid_argument("matmul: inner dimensions " + std::to_string(a.cols()) +
                                    " vs " + std::to_string(b.rows()));
    Matrix y = a.value() * b.value();
    return make_op(std::move(y), {a, b}, [a, b](Node& n) {
        if (a.requires_grad()) accumulate(a, n.grad * b.value().transpose());
        if (b.requires_grad()) accumulate(b, a.value().transpose() * n.grad);
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    return make_op(a.value() + b.value(), {a, b}, [a, b](Node& n) {
        accumulate(a, n.grad);
        accumulate(b, n.grad);
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    return make_op(a.value() - b.value(), {a, b}, [a, b](Node& n) {
        accumulate(a, n.grad);
        accumulate(b, -n.grad);
    });
}

Tensor scale(const Tensor& a, double c) {
    return make_op(a.value() * c, {a}, [a, c](Node& n) { accumulate(a, c * n.grad); });
}

Tensor add_scalar(const Tensor& a, double c) {
    return make_op(a.value().array() + c, {a}, [a](Node& n) { accumulate(a, n.grad); });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows())
        throw std::invalid_argument("concat_cols: row mismatch " + std::to_string(a.rows()) +
                                    " vs " + std::to_string(b.rows()));
    Matrix y(a.rows(), a.cols() + b.cols());
    y << a.value(), b.value();
    const Eigen::Index ca = a.cols();
    return make_op(std::move(y), {a, b}, [a, b, ca](Node& n) {
        if (a.requires_grad()) accumulate(a, n.grad.leftCols(ca));
        if (b.requires_grad()) accumulate(b, n.grad.rightCols(n.grad.cols() - ca));
    });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: empty input");
    Eigen::Index rows = 0;
    const Eigen::Index cols = parts.front().cols();
    for (const auto& p : parts) {
        if (p.cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
        rows += p.rows();
    }
    Matrix y(rows, cols);
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        y.middleRows(at, p.rows()) = p.value();
        at += p.rows();
    }
    return make_op(std::move(y), parts, [parts](Node& n) {
        Eigen::Index at = 0;
        for (const auto& p : parts) {
            if (p.requires_grad()) accumulate(p, n.grad.middleRows(at, p.rows()));
            at += p.rows();
        }
    });
}

Tensor add_rowvec(const Tensor& a, const Tensor& row) {
    if (row.rows() != 1 || row.cols() != a.cols())
        throw std::invalid_argument("add_rowvec: expected 1x" + std::to_string(a.cols()));
    Matrix y = a.value().rowwise() + row.value().row(0);
    return make_op(std::move(y), {a, row}, [a, row](Node& n) {
        if (a.requires_grad()) accumulate(a, n.grad);
        if (row.requires_grad()) accumulate(row, n.grad.colwise().sum());
    });
}

Tensor sub_bcast(const Tensor& a, const Tensor& scalar) {
    if (scalar.rows() != 1 || scalar.cols() != 1)
        throw std::invalid_argument("sub_bcast: subtrahend must be 1x1");
    Matrix y = a.value().array() - scalar.value()(0, 0);
    return make_op(std::move(y), {a, scalar}, [a, scalar](Node& n) {
        if (a.requires_grad()) accumulate(a, n.grad);
        if (scalar.requires_grad()) {
            Matrix g(1, 1);
            g(0, 0) = -n.grad.sum();
            accumulate(scalar, g);
        }
    });
}

Tensor mean_all(const Tensor& a) {
    Matrix y(1, 1);
    y(0, 0) = a.value().mean();
    const double inv = 1.0 / static_cast<double>(a.size());
    return make_op(std::move(y), {a}, [a, inv](Node& n) {
        accumulate(a, Matrix::Constant(a.rows(), a.cols(), n.grad(0, 0) * inv));
    });
}

Tensor sum_all(const Tensor& a) {
    Matrix y(1, 1);
    y(0, 0) = a.value().sum();
    return make_op(std::move(y), {a}, [a](Node& n) {
        accumulate(a, Matrix::Constant(a.rows(), a.cols(), n.grad(0, 0)));
    });
}

Tensor sigmoid(const Tensor& a) {
    Matrix y = a.value().unaryExpr([](double x) { return sigmoid_scalar(x); });
    return make_op(std::move(y), {a}, [a](Node& n) {
        accumulate(a, (n.grad.array() * n.value.array() * (1.0 - n.value.array())).matrix());
    });
}

Tensor relu(const Tensor& a) {
    Matrix y = a.value().cwiseMax(0.0);
    return make_op(std::move(y), {a}, [a](Node& n) {
        accumulate(a, (n.grad.array() * (a.value().array() > 0.0).cast<double>()).matrix());
    });
}

Tensor softplus(const Tensor& a) {
    Matrix y = a.value().unaryExpr([](double x) { return softplus_scalar(x); });
    return make_op(std::move(y), {a}, [a](Node& n) {
        Matrix s = a.value().unaryExpr([](double x) { return sigmoid_scalar(x); });
        accumulate(a, (n.grad.array() * s.array()).matrix());
    });
}

Tensor square(const Tensor& a) {
    Matrix y = a.value().array().square();
    return make_op(std::move(y), {a}, [a](Node& n) {
        accumulate(a, (n.grad.array() * 2.0 * a.value().array()).matrix());
    });
}

Tensor sqrt_guarded(const Tensor& a) {
    Matrix y = a.value().cwiseMax(0.0).cwiseSqrt();
    return make_op(std::move(y), {a}, [a](Node& n) {
        // d sqrt = 1/(2 sqrt); clamped to 0 where the input is ~0 so the
        // population-std path stays finite when all samples coincide.
        Matrix d = n.value.unaryExpr([](double s) { return s > 1e-150 ? 0.5 / s : 0.0; });
        accumulate(a, (n.grad.array() * d.array()).matrix());
    });
}

Tensor l1_norm(const Tensor& a) {
    Matrix y(1, 1);
    y(0, 0) = a.value().array().abs().sum();
    return make_op(std::move(y), {a}, [a](Node& n) {
        Matrix s = a.value().unaryExpr(
            [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
        accumulate(a, n.grad(0, 0) * s);
    });
}

Tensor block_mean_rows(const Tensor& a, Eigen::Index block) {
    if (block <= 0 || a.rows() % block != 0)
        throw std::invalid_argument("block_mean_rows: rows not divisible by block");
    const Eigen::Index nblocks = a.rows() / block;
    Matrix y(nblocks, a.cols());
    for (Eigen::Index b = 0; b < nblocks; ++b)
        y.row(b) = a.value().middleRows(b * block, block).colwise().mean();
    const double inv = 1.0 / static_cast<double>(block);
    return make_op(std::move(y), {a}, [a, block, inv](Node& n) {
        Matrix g(a.rows(), a.cols());
        for (Eigen::Index b = 0; b < n.grad.rows(); ++b)
            g.middleRows(b * block, block) = (n.grad.row(b) * inv).replicate(block, 1);
        accumulate(a, g);
    });
}

Tensor dropout(const Tensor& a, double rate, std::uint64_t seed) {
    if (rate < 0.0 || rate >= 1.0)
        throw std::invalid_argument("dropout: rate must be in [0,1)");
    if (rate == 0.0) return a;
    const double keep_scale = 1.0 / (1.0 - rate);
    // counter-based mask: entry (i,j) keeps iff u(seed, row-major index)
    // falls below the keep probability; no sequential RNG state
    Matrix mask(a.rows(), a.cols());
    std::uint64_t counter = 0;
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            const double u =
                static_cast<double>(rng::mix(seed ^ (0x9e3779b97f4a7c15ULL + counter++)) >> 11) *
                0x1p-53;
            mask(i, j) = u < 1.0 - rate ? keep_scale : 0.0;
        }
    Matrix y = a.value().cwiseProduct(mask);
    auto shared_mask = std::make_shared<Matrix>(std::move(mask));
    return make_op(std::move(y), {a}, [a, shared_mask](Node& n) {
        accumulate(a, n.grad.cwiseProduct(*shared_mask));
    });
}

Tensor spmm(std::shared_ptr<const SparseMatrix> s, const Tensor& a) {
    if (s->cols() != a.rows())
        throw std::invalid_argument("spmm: operator cols " + std::to_string(s->cols()) +
                                    " vs input rows " + std::to_string(a.rows()));
    Matrix y = *s * a.value();
    return make_op(std::move(y), {a}, [s, a](Node& n) {
        accumulate(a, s->transpose() * n.grad);
    });
}

void backward(const Tensor& loss) {
    if (!loss.defined() || !loss.requires_grad())
        throw std::logic_error("backward: loss is detached from the tape");
    if (loss.rows() != 1 || loss.cols() != 1)
        throw std::logic_error("backward: loss must be scalar");

    // Post-order DFS gives a topological order over the recorded graph.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    struct Frame { Node* node; std::size_t next_input; };
    std::vector<Frame> stack;
    Node* root = &node_of(loss);
    stack.push_back({root, 0});
    seen.insert(root);
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_input < f.node->inputs.size()) {
            Node* in = &node_of(f.node->inputs[f.next_input++]);
            if (in->requires_grad && seen.insert(in).second) stack.push_back({in, 0});
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    for (Node* n : order)
        if (!n->is_leaf) n->grad.setZero(n->value.rows(), n->value.cols());
    root->grad.setConstant(1, 1, 1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backprop) (*it)->backprop(**it);
}

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.emplace_back(Matrix::Zero(p.rows(), p.cols()));
        v_.emplace_back(Matrix::Zero(p.rows(), p.cols()));
    }
}

void Adam::step() {
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Matrix g = params_[i].grad();
        if (cfg_.weight_decay != 0.0) g += cfg_.weight_decay * params_[i].value();
        m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
        v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
        Matrix mhat = m_[i] / bc1;
        Matrix vhat = v_[i] / bc2;
        params_[i].mutable_value().array() -=
            cfg_.lr * mhat.array() / (vhat.array().sqrt() + cfg_.eps);
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

}  // namespace caumax::ad
