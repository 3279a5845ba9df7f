#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "letet/error.hpp"

namespace letet {

struct Triplet {
    int row;
    int col;
    double value;
};

/// Compressed-row sparse matrix. Column indices are sorted within each row.
class CsrMatrix {
public:
    CsrMatrix() = default;

    CsrMatrix(int n_rows, int n_cols, std::vector<std::int64_t> offsets, std::vector<int> indices,
              std::vector<double> values)
        : n_rows_(n_rows), n_cols_(n_cols), offsets_(std::move(offsets)), indices_(std::move(indices)),
          values_(std::move(values)) {
        check();
    }

    /// Duplicate (row, col) entries are summed.
    static CsrMatrix from_triplets(int n_rows, int n_cols, std::vector<Triplet> trips) {
        std::sort(trips.begin(), trips.end(), [](const Triplet& a, const Triplet& b) {
            return a.row != b.row ? a.row < b.row : a.col < b.col;
        });
        std::vector<std::int64_t> offsets(static_cast<std::size_t>(n_rows) + 1, 0);
        std::vector<int> indices;
        std::vector<double> values;
        indices.reserve(trips.size());
        values.reserve(trips.size());
        for (std::size_t k = 0; k < trips.size();) {
            const Triplet& t = trips[k];
            if (t.row < 0 || t.row >= n_rows || t.col < 0 || t.col >= n_cols) {
                throw DataError("triplet index out of range");
            }
            double sum = 0.0;
            std::size_t j = k;
            for (; j < trips.size() && trips[j].row == t.row && trips[j].col == t.col; ++j) sum += trips[j].value;
            indices.push_back(t.col);
            values.push_back(sum);
            ++offsets[static_cast<std::size_t>(t.row) + 1];
            k = j;
        }
        std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
        return CsrMatrix(n_rows, n_cols, std::move(offsets), std::move(indices), std::move(values));
    }

    static CsrMatrix identity(int n) {
        std::vector<std::int64_t> offsets(static_cast<std::size_t>(n) + 1);
        std::iota(offsets.begin(), offsets.end(), 0);
        std::vector<int> indices(static_cast<std::size_t>(n));
        std::iota(indices.begin(), indices.end(), 0);
        return CsrMatrix(n, n, std::move(offsets), std::move(indices), std::vector<double>(static_cast<std::size_t>(n), 1.0));
    }

    static CsrMatrix from_dense(const Eigen::MatrixXd& m, double drop_below = 0.0) {
        std::vector<Triplet> trips;
        for (int i = 0; i < m.rows(); ++i) {
            for (int j = 0; j < m.cols(); ++j) {
                if (std::abs(m(i, j)) > drop_below) trips.push_back({i, j, m(i, j)});
            }
        }
        return from_triplets(static_cast<int>(m.rows()), static_cast<int>(m.cols()), std::move(trips));
    }

    int rows() const { return n_rows_; }
    int cols() const { return n_cols_; }
    std::size_t nnz() const { return values_.size(); }

    std::span<const std::int64_t> row_offsets() const { return offsets_; }
    std::span<const int> col_indices() const { return indices_; }
    std::span<const double> values() const { return values_; }
    std::span<double> values() { return values_; }

    double coeff(int i, int j) const {
        const auto b = indices_.begin() + offsets_[i];
        const auto e = indices_.begin() + offsets_[i + 1];
        const auto it = std::lower_bound(b, e, j);
        return (it != e && *it == j) ? values_[static_cast<std::size_t>(it - indices_.begin())] : 0.0;
    }

    double max_abs() const {
        double m = 0.0;
        for (double v : values_) m = std::max(m, std::abs(v));
        return m;
    }

    /// y = A x
    void multiply(std::span<const double> x, std::span<double> y) const {
        for (int i = 0; i < n_rows_; ++i) {
            double s = 0.0;
            for (auto k = offsets_[i]; k < offsets_[i + 1]; ++k) s += values_[k] * x[indices_[k]];
            y[i] = s;
        }
    }

    std::vector<double> multiply(std::span<const double> x) const {
        std::vector<double> y(static_cast<std::size_t>(n_rows_));
        multiply(x, y);
        return y;
    }

    /// Y = A X for a row-major dense block X of `width` columns.
    void multiply_block(std::span<const double> x, std::span<double> y, int width) const {
        const auto w = static_cast<std::size_t>(width);
        for (int i = 0; i < n_rows_; ++i) {
            double* yi = y.data() + static_cast<std::size_t>(i) * w;
            std::fill(yi, yi + w, 0.0);
            for (auto k = offsets_[i]; k < offsets_[i + 1]; ++k) {
                const double a = values_[k];
                const double* xj = x.data() + static_cast<std::size_t>(indices_[k]) * w;
                for (std::size_t c = 0; c < w; ++c) yi[c] += a * xj[c];
            }
        }
    }

    CsrMatrix transpose() const {
        std::vector<Triplet> trips;
        trips.reserve(nnz());
        for (int i = 0; i < n_rows_; ++i) {
            for (auto k = offsets_[i]; k < offsets_[i + 1]; ++k) trips.push_back({indices_[k], i, values_[k]});
        }
        return from_triplets(n_cols_, n_rows_, std::move(trips));
    }

    /// diag(left) * A * diag(right)
    CsrMatrix scaled(std::span<const double> left, std::span<const double> right) const {
        CsrMatrix out = *this;
        for (int i = 0; i < n_rows_; ++i) {
            for (auto k = offsets_[i]; k < offsets_[i + 1]; ++k) out.values_[k] *= left[i] * right[indices_[k]];
        }
        return out;
    }

    /// alpha * A + beta * I (square only).
    CsrMatrix affine_with_identity(double alpha, double beta) const {
        if (n_rows_ != n_cols_) throw DataError("affine_with_identity requires a square matrix");
        std::vector<Triplet> trips;
        trips.reserve(nnz() + static_cast<std::size_t>(n_rows_));
        for (int i = 0; i < n_rows_; ++i) {
            for (auto k = offsets_[i]; k < offsets_[i + 1]; ++k) trips.push_back({i, indices_[k], alpha * values_[k]});
            trips.push_back({i, i, beta});
        }
        return from_triplets(n_rows_, n_cols_, std::move(trips));
    }

    bool is_symmetric(double tol) const {
        for (int i = 0; i < n_rows_; ++i) {
            for (auto k = offsets_[i]; k < offsets_[i + 1]; ++k) {
                if (std::abs(values_[k] - coeff(indices_[k], i)) > tol) return false;
            }
        }
        return true;
    }

    Eigen::MatrixXd to_dense() const {
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n_rows_, n_cols_);
        for (int i = 0; i < n_rows_; ++i) {
            for (auto k = offsets_[i]; k < offsets_[i + 1]; ++k) m(i, indices_[k]) += values_[k];
        }
        return m;
    }

    Eigen::SparseMatrix<double> to_eigen() const {
        std::vector<Eigen::Triplet<double>> trips;
        trips.reserve(nnz());
        for (int i = 0; i < n_rows_; ++i) {
            for (auto k = offsets_[i]; k < offsets_[i + 1]; ++k) trips.emplace_back(i, indices_[k], values_[k]);
        }
        Eigen::SparseMatrix<double> m(n_rows_, n_cols_);
        m.setFromTriplets(trips.begin(), trips.end());
        return m;
    }

    friend bool operator==(const CsrMatrix&, const CsrMatrix&) = default;

private:
    void check() const {
        if (n_rows_ < 0 || n_cols_ < 0) throw DataError("negative matrix dimension");
        if (offsets_.size() != static_cast<std::size_t>(n_rows_) + 1 || offsets_.front() != 0 ||
            offsets_.back() != static_cast<std::int64_t>(indices_.size()) || indices_.size() != values_.size()) {
            throw DataError("inconsistent CSR arrays");
        }
        for (int i = 0; i < n_rows_; ++i) {
            if (offsets_[i] > offsets_[i + 1]) throw DataError("CSR offsets not monotone");
            for (auto k = offsets_[i]; k < offsets_[i + 1]; ++k) {
                if (indices_[k] < 0 || indices_[k] >= n_cols_) throw DataError("CSR column index out of range");
                if (k > offsets_[i] && indices_[k] <= indices_[k - 1]) throw DataError("CSR columns not sorted");
                if (!std::isfinite(values_[k])) throw DataError("CSR value not finite");
            }
        }
    }

    int n_rows_ = 0;
    int n_cols_ = 0;
    std::vector<std::int64_t> offsets_{0};
    std::vector<int> indices_;
    std::vector<double> values_;
};

} // namespace letet
