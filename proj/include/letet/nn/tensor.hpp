#pragma once

// Minimal reverse-mode differentiation over dense row-major matrices.
//
// Every operation allocates a Node holding its value and a backward closure
// that accumulates into the gradients of its parents. Leaves created with
// `Tensor::parameter` keep accumulating across backward passes until
// `zero_grad`, which is what gradient accumulation relies on.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "letet/error.hpp"
#include "letet/sparse.hpp"

namespace letet::nn {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

struct Node {
    int rows = 0;
    int cols = 0;
    std::vector<double> value;
    std::vector<double> grad;  ///< empty until something flows into it
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    std::size_t size() const { return value.size(); }

    std::span<double> grad_buffer() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
        return grad;
    }

    MatrixMap value_map() { return MatrixMap(value.data(), rows, cols); }
    MatrixMap grad_map() {
        grad_buffer();
        return MatrixMap(grad.data(), rows, cols);
    }
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    static Tensor constant(int rows, int cols, std::vector<double> data) {
        if (data.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols)) {
            throw DataError("tensor data length does not match shape");
        }
        auto n = std::make_shared<Node>();
        n->rows = rows;
        n->cols = cols;
        n->value = std::move(data);
        return Tensor(std::move(n));
    }

    static Tensor zeros(int rows, int cols) {
        return constant(rows, cols, std::vector<double>(static_cast<std::size_t>(rows) * cols, 0.0));
    }

    static Tensor parameter(int rows, int cols, std::vector<double> data) {
        Tensor t = constant(rows, cols, std::move(data));
        t.node_->requires_grad = true;
        return t;
    }

    static Tensor scalar(double v) { return constant(1, 1, {v}); }

    bool defined() const { return static_cast<bool>(node_); }
    int rows() const { return node_->rows; }
    int cols() const { return node_->cols; }
    std::size_t size() const { return node_->size(); }
    bool requires_grad() const { return node_->requires_grad; }

    std::span<double> data() { return node_->value; }
    std::span<const double> data() const { return node_->value; }
    double item() const { return node_->value.at(0); }
    double at(int r, int c) const { return node_->value[static_cast<std::size_t>(r) * node_->cols + c]; }

    /// Gradient; zeros if nothing has flowed into this tensor.
    std::span<const double> grad() const {
        node_->grad_buffer();
        return node_->grad;
    }
    std::span<double> mutable_grad() { return node_->grad_buffer(); }
    bool has_grad() const { return !node_->grad.empty(); }

    void zero_grad() { node_->grad.clear(); }

    ConstMatrixMap map() const { return ConstMatrixMap(node_->value.data(), node_->rows, node_->cols); }

    Node& node() const { return *node_; }
    const std::shared_ptr<Node>& node_ptr() const { return node_; }

    /// Reverse pass from a 1x1 tensor. Returns the gradient-carrying leaves reached.
    std::vector<Tensor> backward() const {
        if (size() != 1) throw DataError("backward() requires a scalar tensor");
        std::vector<Node*> order;
        std::vector<Tensor> leaves;
        std::unordered_set<Node*> visited{node_.get()};
        // Iterative post-order DFS over gradient-carrying nodes.
        std::vector<std::pair<std::shared_ptr<Node>, std::size_t>> stack{{node_, 0}};
        while (!stack.empty()) {
            auto& [n, next] = stack.back();
            if (next < n->parents.size()) {
                std::shared_ptr<Node> p = n->parents[next++];
                if (p->requires_grad && visited.insert(p.get()).second) stack.emplace_back(std::move(p), 0);
            } else {
                if (n->parents.empty() && n->requires_grad) leaves.emplace_back(n);
                order.push_back(n.get());
                stack.pop_back();
            }
        }
        node_->grad_buffer()[0] += 1.0;
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            Node* n = *it;
            if (n->backward && !n->grad.empty()) n->backward(*n);
        }
        return leaves;
    }

private:
    std::shared_ptr<Node> node_;
};

namespace detail {

inline Tensor make_result(int rows, int cols, std::vector<std::shared_ptr<Node>> parents) {
    auto n = std::make_shared<Node>();
    n->rows = rows;
    n->cols = cols;
    n->value.assign(static_cast<std::size_t>(rows) * cols, 0.0);
    for (const auto& p : parents) n->requires_grad = n->requires_grad || p->requires_grad;
    if (n->requires_grad) n->parents = std::move(parents);
    return Tensor(std::move(n));
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw DataError(std::string(op) + ": shape mismatch");
}

} // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) throw DataError("matmul: inner dimensions differ");
    Tensor out = detail::make_result(a.rows(), b.cols(), {a.node_ptr(), b.node_ptr()});
    out.node().value_map().noalias() = a.map() * b.map();
    if (out.requires_grad()) {
        out.node().backward = [](Node& self) {
            Node& pa = *self.parents[0];
            Node& pb = *self.parents[1];
            ConstMatrixMap g(self.grad.data(), self.rows, self.cols);
            if (pa.requires_grad) pa.grad_map().noalias() += g * pb.value_map().transpose();
            if (pb.requires_grad) pb.grad_map().noalias() += pa.value_map().transpose() * g;
        };
    }
    return out;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "add");
    Tensor out = detail::make_result(a.rows(), a.cols(), {a.node_ptr(), b.node_ptr()});
    out.node().value_map() = a.map() + b.map();
    if (out.requires_grad()) {
        out.node().backward = [](Node& self) {
            ConstMatrixMap g(self.grad.data(), self.rows, self.cols);
            for (auto& p : self.parents) {
                if (p->requires_grad) p->grad_map() += g;
            }
        };
    }
    return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "sub");
    Tensor out = detail::make_result(a.rows(), a.cols(), {a.node_ptr(), b.node_ptr()});
    out.node().value_map() = a.map() - b.map();
    if (out.requires_grad()) {
        out.node().backward = [](Node& self) {
            ConstMatrixMap g(self.grad.data(), self.rows, self.cols);
            if (self.parents[0]->requires_grad) self.parents[0]->grad_map() += g;
            if (self.parents[1]->requires_grad) self.parents[1]->grad_map() -= g;
        };
    }
    return out;
}

/// Elementwise product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "mul");
    Tensor out = detail::make_result(a.rows(), a.cols(), {a.node_ptr(), b.node_ptr()});
    out.node().value_map() = a.map().cwiseProduct(b.map());
    if (out.requires_grad()) {
        out.node().backward = [](Node& self) {
            Node& pa = *self.parents[0];
            Node& pb = *self.parents[1];
            ConstMatrixMap g(self.grad.data(), self.rows, self.cols);
            if (pa.requires_grad) pa.grad_map() += g.cwiseProduct(pb.value_map());
            if (pb.requires_grad) pb.grad_map() += g.cwiseProduct(pa.value_map());
        };
    }
    return out;
}

inline Tensor scale(const Tensor& a, double s) {
    Tensor out = detail::make_result(a.rows(), a.cols(), {a.node_ptr()});
    out.node().value_map() = s * a.map();
    if (out.requires_grad()) {
        out.node().backward = [s](Node& self) {
            self.parents[0]->grad_map() += s * ConstMatrixMap(self.grad.data(), self.rows, self.cols);
        };
    }
    return out;
}

/// X + b with the 1 x c row b broadcast over rows.
inline Tensor add_bias(const Tensor& x, const Tensor& b) {
    if (b.rows() != 1 || b.cols() != x.cols()) throw DataError("add_bias: bias must be 1 x cols");
    Tensor out = detail::make_result(x.rows(), x.cols(), {x.node_ptr(), b.node_ptr()});
    out.node().value_map() = x.map().rowwise() + b.map().row(0);
    if (out.requires_grad()) {
        out.node().backward = [](Node& self) {
            ConstMatrixMap g(self.grad.data(), self.rows, self.cols);
            if (self.parents[0]->requires_grad) self.parents[0]->grad_map() += g;
            if (self.parents[1]->requires_grad) self.parents[1]->grad_map() += g.colwise().sum();
        };
    }
    return out;
}

inline Tensor relu(const Tensor& x) {
    Tensor out = detail::make_result(x.rows(), x.cols(), {x.node_ptr()});
    out.node().value_map() = x.map().cwiseMax(0.0);
    if (out.requires_grad()) {
        out.node().backward = [](Node& self) {
            Node& p = *self.parents[0];
            auto g = p.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (p.value[i] > 0.0) g[i] += self.grad[i];
            }
        };
    }
    return out;
}

/// Constant sparse operator with its transpose, shared by forward passes.
struct SparseOperator {
    CsrMatrix matrix;
    CsrMatrix transpose;

    explicit SparseOperator(CsrMatrix m) : matrix(std::move(m)), transpose(matrix.transpose()) {}
};

/// S X for a constant sparse S.
inline Tensor spmm(const std::shared_ptr<const SparseOperator>& op, const Tensor& x) {
    if (op->matrix.cols() != x.rows()) throw DataError("spmm: dimension mismatch");
    Tensor out = detail::make_result(op->matrix.rows(), x.cols(), {x.node_ptr()});
    op->matrix.multiply_block(x.data(), out.data(), x.cols());
    if (out.requires_grad()) {
        out.node().backward = [op](Node& self) {
            Node& p = *self.parents[0];
            std::vector<double> tmp(p.value.size());
            op->transpose.multiply_block(self.grad, tmp, self.cols);
            auto g = p.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += tmp[i];
        };
    }
    return out;
}

/// Row-wise mean within each segment: out[s] = mean of rows with seg[r] == s.
/// Empty segments produce zeros.
inline Tensor segment_mean(const Tensor& x, std::shared_ptr<const std::vector<int>> seg, int n_seg) {
    if (seg->size() != static_cast<std::size_t>(x.rows())) throw DataError("segment_mean: label count mismatch");
    Tensor out = detail::make_result(n_seg, x.cols(), {x.node_ptr()});
    auto counts = std::make_shared<std::vector<double>>(static_cast<std::size_t>(n_seg), 0.0);
    const auto w = static_cast<std::size_t>(x.cols());
    auto o = out.data();
    auto xv = x.data();
    for (std::size_t r = 0; r < seg->size(); ++r) {
        const int s = (*seg)[r];
        if (s < 0 || s >= n_seg) throw DataError("segment_mean: label out of range");
        (*counts)[s] += 1.0;
        for (std::size_t c = 0; c < w; ++c) o[s * w + c] += xv[r * w + c];
    }
    for (int s = 0; s < n_seg; ++s) {
        if ((*counts)[s] > 0) {
            for (std::size_t c = 0; c < w; ++c) o[s * w + c] /= (*counts)[s];
        }
    }
    if (out.requires_grad()) {
        out.node().backward = [seg, counts](Node& self) {
            Node& p = *self.parents[0];
            auto g = p.grad_buffer();
            const auto w = static_cast<std::size_t>(self.cols);
            for (std::size_t r = 0; r < seg->size(); ++r) {
                const int s = (*seg)[r];
                const double inv = 1.0 / (*counts)[s];
                for (std::size_t c = 0; c < w; ++c) g[r * w + c] += inv * self.grad[s * w + c];
            }
        };
    }
    return out;
}

/// out[s] = sum of rows with seg[r] == s.
inline Tensor segment_sum(const Tensor& x, std::shared_ptr<const std::vector<int>> seg, int n_seg) {
    if (seg->size() != static_cast<std::size_t>(x.rows())) throw DataError("segment_sum: label count mismatch");
    Tensor out = detail::make_result(n_seg, x.cols(), {x.node_ptr()});
    const auto w = static_cast<std::size_t>(x.cols());
    auto o = out.data();
    auto xv = x.data();
    for (std::size_t r = 0; r < seg->size(); ++r) {
        const auto s = static_cast<std::size_t>((*seg)[r]);
        for (std::size_t c = 0; c < w; ++c) o[s * w + c] += xv[r * w + c];
    }
    if (out.requires_grad()) {
        out.node().backward = [seg](Node& self) {
            Node& p = *self.parents[0];
            auto g = p.grad_buffer();
            const auto w = static_cast<std::size_t>(self.cols);
            for (std::size_t r = 0; r < seg->size(); ++r) {
                const auto s = static_cast<std::size_t>((*seg)[r]);
                for (std::size_t c = 0; c < w; ++c) g[r * w + c] += self.grad[s * w + c];
            }
        };
    }
    return out;
}

/// out[k] = x[idx[k]].
inline Tensor gather_rows(const Tensor& x, std::shared_ptr<const std::vector<int>> idx) {
    const auto w = static_cast<std::size_t>(x.cols());
    Tensor out = detail::make_result(static_cast<int>(idx->size()), x.cols(), {x.node_ptr()});
    auto o = out.data();
    auto xv = x.data();
    for (std::size_t k = 0; k < idx->size(); ++k) {
        const int r = (*idx)[k];
        if (r < 0 || r >= x.rows()) throw DataError("gather_rows: index out of range");
        std::copy_n(xv.data() + static_cast<std::size_t>(r) * w, w, o.data() + k * w);
    }
    if (out.requires_grad()) {
        out.node().backward = [idx](Node& self) {
            Node& p = *self.parents[0];
            auto g = p.grad_buffer();
            const auto w = static_cast<std::size_t>(self.cols);
            for (std::size_t k = 0; k < idx->size(); ++k) {
                const auto r = static_cast<std::size_t>((*idx)[k]);
                for (std::size_t c = 0; c < w; ++c) g[r * w + c] += self.grad[k * w + c];
            }
        };
    }
    return out;
}

/// Per-column softmax of the rows of each segment (rows sharing seg[r]).
inline Tensor segment_softmax(const Tensor& x, std::shared_ptr<const std::vector<int>> seg, int n_seg) {
    if (seg->size() != static_cast<std::size_t>(x.rows())) throw DataError("segment_softmax: label count mismatch");
    const auto w = static_cast<std::size_t>(x.cols());
    Tensor out = detail::make_result(x.rows(), x.cols(), {x.node_ptr()});
    std::vector<double> mx(static_cast<std::size_t>(n_seg) * w, -std::numeric_limits<double>::infinity());
    std::vector<double> den(static_cast<std::size_t>(n_seg) * w, 0.0);
    auto xv = x.data();
    auto o = out.data();
    for (std::size_t r = 0; r < seg->size(); ++r) {
        const auto s = static_cast<std::size_t>((*seg)[r]);
        for (std::size_t c = 0; c < w; ++c) mx[s * w + c] = std::max(mx[s * w + c], xv[r * w + c]);
    }
    for (std::size_t r = 0; r < seg->size(); ++r) {
        const auto s = static_cast<std::size_t>((*seg)[r]);
        for (std::size_t c = 0; c < w; ++c) {
            o[r * w + c] = std::exp(xv[r * w + c] - mx[s * w + c]);
            den[s * w + c] += o[r * w + c];
        }
    }
    for (std::size_t r = 0; r < seg->size(); ++r) {
        const auto s = static_cast<std::size_t>((*seg)[r]);
        for (std::size_t c = 0; c < w; ++c) o[r * w + c] /= den[s * w + c];
    }
    if (out.requires_grad()) {
        out.node().backward = [seg, n_seg](Node& self) {
            Node& p = *self.parents[0];
            const auto w = static_cast<std::size_t>(self.cols);
            // dx = a * (g - sum_seg(a * g))
            std::vector<double> dot(static_cast<std::size_t>(n_seg) * w, 0.0);
            for (std::size_t r = 0; r < seg->size(); ++r) {
                const auto s = static_cast<std::size_t>((*seg)[r]);
                for (std::size_t c = 0; c < w; ++c) dot[s * w + c] += self.value[r * w + c] * self.grad[r * w + c];
            }
            auto g = p.grad_buffer();
            for (std::size_t r = 0; r < seg->size(); ++r) {
                const auto s = static_cast<std::size_t>((*seg)[r]);
                for (std::size_t c = 0; c < w; ++c) {
                    g[r * w + c] += self.value[r * w + c] * (self.grad[r * w + c] - dot[s * w + c]);
                }
            }
        };
    }
    return out;
}

/// Column means as a 1 x c row.
inline Tensor mean_rows(const Tensor& x) {
    if (x.rows() < 1) throw DataError("mean_rows: empty input");
    Tensor out = detail::make_result(1, x.cols(), {x.node_ptr()});
    out.node().value_map() = x.map().colwise().mean();
    if (out.requires_grad()) {
        out.node().backward = [](Node& self) {
            Node& p = *self.parents[0];
            const double inv = 1.0 / p.rows;
            p.grad_map().rowwise() += inv * ConstMatrixMap(self.grad.data(), 1, self.cols).row(0);
        };
    }
    return out;
}

/// Row means as an r x 1 column.
inline Tensor mean_cols(const Tensor& x) {
    Tensor out = detail::make_result(x.rows(), 1, {x.node_ptr()});
    out.node().value_map() = x.map().rowwise().mean();
    if (out.requires_grad()) {
        out.node().backward = [](Node& self) {
            Node& p = *self.parents[0];
            const double inv = 1.0 / p.cols;
            p.grad_map().colwise() += inv * ConstMatrixMap(self.grad.data(), self.rows, 1).col(0);
        };
    }
    return out;
}

/// a (r x 1) broadcast across the columns of b (r x c), multiplied elementwise.
inline Tensor mul_column_broadcast(const Tensor& a, const Tensor& b) {
    if (a.cols() != 1 || a.rows() != b.rows()) throw DataError("mul_column_broadcast: shape mismatch");
    Tensor out = detail::make_result(b.rows(), b.cols(), {a.node_ptr(), b.node_ptr()});
    out.node().value_map() = b.map().array().colwise() * a.map().col(0).array();
    if (out.requires_grad()) {
        out.node().backward = [](Node& self) {
            Node& pa = *self.parents[0];
            Node& pb = *self.parents[1];
            ConstMatrixMap g(self.grad.data(), self.rows, self.cols);
            if (pa.requires_grad) pa.grad_map().col(0) += g.cwiseProduct(pb.value_map()).rowwise().sum();
            if (pb.requires_grad) pb.grad_map().array() += g.array().colwise() * pa.value_map().col(0).array();
        };
    }
    return out;
}

/// [a | b] for row vectors or matrices with equal row counts.
inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows()) throw DataError("concat_cols: row counts differ");
    Tensor out = detail::make_result(a.rows(), a.cols() + b.cols(), {a.node_ptr(), b.node_ptr()});
    out.node().value_map().leftCols(a.cols()) = a.map();
    out.node().value_map().rightCols(b.cols()) = b.map();
    if (out.requires_grad()) {
        out.node().backward = [](Node& self) {
            Node& pa = *self.parents[0];
            Node& pb = *self.parents[1];
            ConstMatrixMap g(self.grad.data(), self.rows, self.cols);
            if (pa.requires_grad) pa.grad_map() += g.leftCols(pa.cols);
            if (pb.requires_grad) pb.grad_map() += g.rightCols(pb.cols);
        };
    }
    return out;
}

inline Tensor sum_all(const Tensor& x) {
    Tensor out = detail::make_result(1, 1, {x.node_ptr()});
    out.data()[0] = x.map().sum();
    if (out.requires_grad()) {
        out.node().backward = [](Node& self) { self.parents[0]->grad_map().array() += self.grad[0]; };
    }
    return out;
}

/// Binary cross-entropy on a logit, computed as max(z,0) - z y + log(1 + exp(-|z|)).
inline Tensor bce_with_logits(const Tensor& logit, int label) {
    if (logit.size() != 1) throw DataError("bce_with_logits: logit must be a scalar");
    if (label != 0 && label != 1) throw DataError("bce_with_logits: label must be 0 or 1");
    const double z = logit.item();
    if (!std::isfinite(z)) throw NumericalError("bce_with_logits: non-finite logit");
    const double y = label;
    Tensor out = detail::make_result(1, 1, {logit.node_ptr()});
    out.data()[0] = std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    if (out.requires_grad()) {
        out.node().backward = [z, y](Node& self) {
            const double sig = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
            self.parents[0]->grad_buffer()[0] += self.grad[0] * (sig - y);
        };
    }
    return out;
}

inline double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

} // namespace letet::nn
