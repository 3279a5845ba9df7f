#pragma once

// Discrete volumetric Laplace-Beltrami operator on tetrahedral meshes:
// cotangent stiffness, lumped mass, normalized Laplacian and the spectral
// helpers (largest eigenvalue bound, low eigenpairs) built on top of them.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include "letet/error.hpp"
#include "letet/geometry.hpp"
#include "letet/mesh_io.hpp"
#include "letet/random.hpp"
#include "letet/sparse.hpp"

namespace letet {

enum class MassMode { quarter, paper_literal };
enum class Normalization { symmetric, random_walk };

/// Per-tet stiffness: off-diagonal -k_ij with k_ij = l_kl * cot(theta_kl) / 6,
/// where (k, l) is the edge opposite (i, j) and theta_kl the interior dihedral
/// angle along it. Diagonal entries make every row sum to zero.
inline Eigen::Matrix4d element_stiffness(const std::array<Vec3, 4>& p) {
    const double vol = signed_volume(p[0], p[1], p[2], p[3]);
    const double diag = bounding_box_diagonal({p.begin(), p.end()});
    if (!(std::abs(vol) >= 1e-12 * diag * diag * diag) || diag == 0.0) {
        throw NumericalError("degenerate tetrahedron in element stiffness");
    }
    Eigen::Matrix4d k = Eigen::Matrix4d::Zero();
    for (int i = 0; i < 4; ++i) {
        for (int j = i + 1; j < 4; ++j) {
            int a = -1, b = -1;
            for (int q = 0; q < 4; ++q) {
                if (q == i || q == j) continue;
                (a < 0 ? a : b) = q;
            }
            // Opposite edge (a, b); the dihedral angle along it is spanned by
            // the faces through i and through j.
            const Vec3 e = p[b] - p[a];
            const double ee = dot(e, e);
            const Vec3 u = (p[i] - p[a]) - (dot(p[i] - p[a], e) / ee) * e;
            const Vec3 w = (p[j] - p[a]) - (dot(p[j] - p[a], e) / ee) * e;
            const double cot = dot(u, w) / norm(cross(u, w));
            const double kij = std::sqrt(ee) * cot / 6.0;
            k(i, j) = k(j, i) = -kij;
        }
    }
    for (int i = 0; i < 4; ++i) k(i, i) = -k.row(i).sum();
    return k;
}

struct AssemblyStats {
    std::size_t negative_weights = 0;  ///< off-diagonal entries with k_ij < 0 (poor-quality tets)
};

/// A = W - K summed over all tets. Negative cotangent weights are kept.
inline CsrMatrix assemble_stiffness(const TetMesh& mesh, AssemblyStats* stats = nullptr) {
    std::vector<Triplet> trips;
    trips.reserve(16 * mesh.n_tets());
    for (std::size_t t = 0; t < mesh.n_tets(); ++t) {
        Eigen::Matrix4d ke;
        try {
            ke = element_stiffness(mesh.corners(t));
        } catch (const NumericalError&) {
            throw NumericalError("degenerate tetrahedron " + std::to_string(t));
        }
        const Tet& tet = mesh.tets[t];
        for (int a = 0; a < 4; ++a) {
            for (int b = 0; b < 4; ++b) trips.push_back({tet[a], tet[b], ke(a, b)});
        }
    }
    const auto n = static_cast<int>(mesh.n_vertices());
    CsrMatrix a = CsrMatrix::from_triplets(n, n, std::move(trips));
    if (stats) {
        stats->negative_weights = 0;
        const auto off = a.row_offsets();
        const auto idx = a.col_indices();
        const auto val = a.values();
        for (int i = 0; i < n; ++i) {
            for (auto k = off[i]; k < off[i + 1]; ++k) {
                if (idx[k] > i && val[k] > 0.0) ++stats->negative_weights;
            }
        }
    }
    return a;
}

/// d_i = (1/4) sum of adjacent tet volumes (quarter) or the full sum (paper_literal).
inline std::vector<double> assemble_lumped_mass(const TetMesh& mesh, MassMode mode = MassMode::quarter) {
    std::vector<double> d(mesh.n_vertices(), 0.0);
    const double share = mode == MassMode::quarter ? 0.25 : 1.0;
    for (std::size_t t = 0; t < mesh.n_tets(); ++t) {
        const auto c = mesh.corners(t);
        const double vol = std::abs(signed_volume(c[0], c[1], c[2], c[3]));
        for (int v : mesh.tets[t]) d[v] += share * vol;
    }
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (!(d[i] > 0.0)) throw DataError("isolated vertex " + std::to_string(i) + " has no adjacent volume");
    }
    return d;
}

/// symmetric: D^{-1/2} A D^{-1/2}; random_walk: D^{-1} A. The two are similar.
inline CsrMatrix normalized_laplacian(const CsrMatrix& stiffness, const std::vector<double>& mass,
                                      Normalization mode = Normalization::symmetric) {
    if (mass.size() != static_cast<std::size_t>(stiffness.rows())) throw DataError("mass length mismatch");
    std::vector<double> left(mass.size()), right(mass.size());
    for (std::size_t i = 0; i < mass.size(); ++i) {
        if (!(mass[i] > 0.0)) throw DataError("non-positive mass entry at vertex " + std::to_string(i));
        if (mode == Normalization::symmetric) {
            left[i] = right[i] = 1.0 / std::sqrt(mass[i]);
        } else {
            left[i] = 1.0 / mass[i];
            right[i] = 1.0;
        }
    }
    return stiffness.scaled(left, right);
}

struct LambdaEstimate {
    double value = 0.0;  ///< includes the 1% inflation
    bool converged = false;
    int iterations = 0;
};

inline double gershgorin_bound(const CsrMatrix& m) {
    double bound = 0.0;
    const auto off = m.row_offsets();
    const auto val = m.values();
    for (int i = 0; i < m.rows(); ++i) {
        double s = 0.0;
        for (auto k = off[i]; k < off[i + 1]; ++k) s += std::abs(val[k]);
        bound = std::max(bound, s);
    }
    return bound;
}

/// Power iteration; falls back to the Gershgorin bound when it fails to settle.
/// The start vector is the operator diagonal, so relabeling vertices permutes
/// the iterates instead of changing them.
inline LambdaEstimate estimate_lambda_max(const CsrMatrix& l, int max_iterations = 1000, double rel_tol = 1e-6) {
    const auto n = static_cast<std::size_t>(l.rows());
    std::vector<double> x(n), y(n);
    const auto off = l.row_offsets();
    const auto idx = l.col_indices();
    const auto val = l.values();
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = 1.0;
        for (auto k = off[i]; k < off[i + 1]; ++k) {
            if (static_cast<std::size_t>(idx[k]) == i) x[i] += std::abs(val[k]);
        }
    }
    auto normalize = [](std::vector<double>& v) {
        double s = 0.0;
        for (double e : v) s += e * e;
        s = std::sqrt(s);
        if (s > 0.0) {
            for (double& e : v) e /= s;
        }
        return s;
    };
    normalize(x);
    double prev = 0.0;
    LambdaEstimate out;
    for (int it = 1; it <= max_iterations; ++it) {
        l.multiply(x, y);
        double rq = 0.0;
        for (std::size_t i = 0; i < n; ++i) rq += x[i] * y[i];
        const double len = normalize(y);
        std::swap(x, y);
        out.iterations = it;
        if (len == 0.0) break;
        if (it > 1 && std::abs(rq - prev) < rel_tol * std::abs(rq)) {
            out.value = 1.01 * rq;
            out.converged = true;
            return out;
        }
        prev = rq;
    }
    out.value = gershgorin_bound(l);
    out.converged = false;
    if (!(out.value > 0.0)) out.value = 1.0;
    return out;
}

/// 2 L / lambda_max - I, mapping the spectrum into [-1, 1].
inline CsrMatrix scale_laplacian(const CsrMatrix& l, double lambda_max) {
    if (!(lambda_max > 0.0)) throw DataError("lambda_max must be positive");
    return l.affine_with_identity(2.0 / lambda_max, -1.0);
}

struct Eigenpairs {
    Eigen::VectorXd values;   ///< ascending
    Eigen::MatrixXd vectors;  ///< orthonormal columns
};

struct EigenOptions {
    double residual_tol = 1e-9;
    int dense_limit = 400;  ///< problems at most this size use the dense solver
    std::uint64_t seed = 0xe16e;
};

namespace detail {

inline void fix_signs(Eigen::MatrixXd& v) {
    for (int c = 0; c < v.cols(); ++c) {
        Eigen::Index arg = 0;
        v.col(c).cwiseAbs().maxCoeff(&arg);
        if (v(arg, c) < 0) v.col(c) *= -1.0;
    }
}

/// Shift-invert Lanczos with full reorthogonalization for the `m` smallest
/// eigenpairs of a symmetric positive semi-definite matrix, restricted to the
/// orthogonal complement of `locked`.
inline Eigenpairs lanczos_smallest(const CsrMatrix& l, const Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>& solver,
                                   int m, const Eigen::MatrixXd& locked, const EigenOptions& opt) {
    const int n = l.rows();
    const int free_dim = n - static_cast<int>(locked.cols());
    m = std::min(m, free_dim);
    Eigen::MatrixXd q(n, std::min(free_dim, std::max(2 * m + 20, 40)));
    std::vector<double> alpha, beta;
    Rng rng(opt.seed + static_cast<std::uint64_t>(locked.cols()));

    auto project = [&](Eigen::VectorXd& v, int upto) {
        for (int pass = 0; pass < 2; ++pass) {
            if (locked.cols() > 0) v -= locked * (locked.transpose() * v);
            if (upto > 0) v -= q.leftCols(upto) * (q.leftCols(upto).transpose() * v);
        }
    };
    auto random_start = [&](int upto) {
        Eigen::VectorXd v(n);
        for (int i = 0; i < n; ++i) v[i] = rng.uniform(-1.0, 1.0);
        project(v, upto);
        return Eigen::VectorXd(v / v.norm());
    };

    Eigen::VectorXd r = random_start(0);
    const int max_steps = free_dim;
    int steps = 0;
    Eigenpairs result;
    for (;;) {
        if (steps == q.cols()) q.conservativeResize(Eigen::NoChange, std::min<Eigen::Index>(max_steps, 2 * q.cols()));
        q.col(steps) = r;
        Eigen::VectorXd w = solver.solve(q.col(steps));
        if (locked.cols() > 0) w -= locked * (locked.transpose() * w);
        const double a = q.col(steps).dot(w);
        alpha.push_back(a);
        ++steps;
        project(w, steps);
        double b = w.norm();
        const bool exhausted = steps >= max_steps;
        if (!exhausted && b < 1e-10 * std::abs(a)) {
            w = random_start(steps);
            b = 0.0;
        } else if (!exhausted) {
            w /= b;
        }

        const bool check = exhausted || (steps >= m && (steps - m) % 10 == 0);
        if (check) {
            Eigen::MatrixXd t = Eigen::MatrixXd::Zero(steps, steps);
            for (int i = 0; i < steps; ++i) {
                t(i, i) = alpha[i];
                if (i + 1 < steps) t(i, i + 1) = t(i + 1, i) = beta[i];
            }
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
            // Largest Ritz values of the inverse are the smallest of L.
            Eigen::MatrixXd s = es.eigenvectors().rightCols(m).rowwise().reverse();
            Eigen::MatrixXd y = q.leftCols(steps) * s;
            result.values.resize(m);
            bool ok = true;
            for (int c = 0; c < m; ++c) {
                y.col(c).normalize();
                Eigen::VectorXd ly(n);
                l.multiply(std::span<const double>(y.col(c).data(), n), std::span<double>(ly.data(), n));
                const double lam = y.col(c).dot(ly);
                result.values[c] = lam;
                if ((ly - lam * y.col(c)).norm() > opt.residual_tol) ok = false;
            }
            if (ok || exhausted) {
                if (!ok) throw NumericalError("eigensolver did not converge after " + std::to_string(steps) + " iterations");
                result.vectors = std::move(y);
                return result;
            }
        }
        beta.push_back(b);
        r = w;
    }
}

} // namespace detail

/// Smallest `m` eigenpairs of a symmetric normalized Laplacian, ascending,
/// with orthonormal eigenvectors.
inline Eigenpairs truncated_eigenpairs(const CsrMatrix& sym_laplacian, int m, const EigenOptions& opt = {}) {
    const int n = sym_laplacian.rows();
    if (m < 1 || m > n) throw DataError("eigenpair count must be in [1, N]");
    Eigenpairs out;
    if (n <= opt.dense_limit) {
        Eigen::MatrixXd dense = sym_laplacian.to_dense();
        dense = 0.5 * (dense + dense.transpose());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense);
        if (es.info() != Eigen::Success) throw NumericalError("dense eigensolver failed");
        out.values = es.eigenvalues().head(m);
        out.vectors = es.eigenvectors().leftCols(m);
        detail::fix_signs(out.vectors);
        return out;
    }

    double mean_diag = 0.0;
    for (int i = 0; i < n; ++i) mean_diag += sym_laplacian.coeff(i, i);
    mean_diag /= n;
    const double shift = 1e-3 * mean_diag;
    Eigen::SparseMatrix<double> shifted = sym_laplacian.to_eigen();
    for (int i = 0; i < n; ++i) shifted.coeffRef(i, i) += shift;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(shifted);
    if (solver.info() != Eigen::Success) throw NumericalError("shift-invert factorization failed");

    // Plain Lanczos sees one copy of a repeated eigenvalue; deflated reruns
    // recover any missing multiplicity below the current m-th value.
    Eigen::MatrixXd locked(n, 0);
    std::vector<std::pair<double, Eigen::VectorXd>> found;
    Eigenpairs first = detail::lanczos_smallest(sym_laplacian, solver, m, locked, opt);
    for (int c = 0; c < first.values.size(); ++c) found.emplace_back(first.values[c], first.vectors.col(c));
    for (int round = 0; round < 64; ++round) {
        std::sort(found.begin(), found.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        if (static_cast<int>(found.size()) >= n) break;
        locked.resize(n, static_cast<Eigen::Index>(found.size()));
        for (std::size_t c = 0; c < found.size(); ++c) locked.col(static_cast<Eigen::Index>(c)) = found[c].second;
        const int probe = std::min(4, n - static_cast<int>(found.size()));
        Eigenpairs extra = detail::lanczos_smallest(sym_laplacian, solver, probe, locked, opt);
        const double mth = found[static_cast<std::size_t>(m - 1)].first;
        bool added = false;
        for (int c = 0; c < extra.values.size(); ++c) {
            if (extra.values[c] < mth - opt.residual_tol) {
                found.emplace_back(extra.values[c], extra.vectors.col(c));
                added = true;
            }
        }
        if (!added) break;
    }
    std::sort(found.begin(), found.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    out.values.resize(m);
    out.vectors.resize(n, m);
    for (int c = 0; c < m; ++c) {
        out.values[c] = found[static_cast<std::size_t>(c)].first;
        out.vectors.col(c) = found[static_cast<std::size_t>(c)].second;
    }
    detail::fix_signs(out.vectors);
    return out;
}

struct LboOptions {
    MassMode mass_mode = MassMode::quarter;
    Normalization normalization = Normalization::symmetric;
};

struct LboBundle {
    CsrMatrix stiffness;
    std::vector<double> lumped_mass;
    CsrMatrix laplacian;         ///< normalized per `normalization`
    double lambda_max = 0.0;     ///< inflated estimate used for scaling
    bool lambda_converged = true;
    CsrMatrix scaled_laplacian;  ///< 2 L / lambda_max - I
    Normalization normalization = Normalization::symmetric;
    std::size_t negative_weights = 0;
};

inline LboBundle build_lbo(const TetMesh& mesh, const LboOptions& opt = {}) {
    LboBundle b;
    AssemblyStats stats;
    b.stiffness = assemble_stiffness(mesh, &stats);
    b.negative_weights = stats.negative_weights;
    b.lumped_mass = assemble_lumped_mass(mesh, opt.mass_mode);
    b.normalization = opt.normalization;
    b.laplacian = normalized_laplacian(b.stiffness, b.lumped_mass, opt.normalization);
    const LambdaEstimate est = estimate_lambda_max(b.laplacian);
    b.lambda_max = est.value;
    b.lambda_converged = est.converged;
    b.scaled_laplacian = scale_laplacian(b.laplacian, b.lambda_max);
    return b;
}

/// Symmetric normalized Laplacian of a bundle, whichever mode it was built in.
inline CsrMatrix symmetric_laplacian(const LboBundle& b) {
    return b.normalization == Normalization::symmetric
               ? b.laplacian
               : normalized_laplacian(b.stiffness, b.lumped_mass, Normalization::symmetric);
}

// ---------------------------------------------------------------------------
// Operator cache: little-endian binary, doubles stored bit-exactly.

/// FNV-1a over the raw vertex coordinates and tet indices.
inline std::uint64_t mesh_content_hash(const TetMesh& mesh) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](const void* data, std::size_t len) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < len; ++i) {
            h ^= p[i];
            h *= 0x100000001b3ULL;
        }
    };
    for (const Vec3& v : mesh.vertices) feed(v.data(), sizeof(double) * 3);
    for (const Tet& t : mesh.tets) feed(t.data(), sizeof(int) * 4);
    return h;
}

namespace detail {

inline constexpr char kLboMagic[8] = {'L', 'E', 'T', 'L', 'B', 'O', '0', '1'};

template <class T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw DataError("truncated operator cache");
    return v;
}

template <class T>
void write_vec(std::ostream& out, const std::vector<T>& v) {
    write_pod<std::uint64_t>(out, v.size());
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
}

template <class T>
std::vector<T> read_vec(std::istream& in, std::uint64_t limit) {
    const auto n = read_pod<std::uint64_t>(in);
    if (n > limit) throw DataError("corrupt operator cache (array length)");
    std::vector<T> v(n);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
    if (!in) throw DataError("truncated operator cache");
    return v;
}

inline void write_csr(std::ostream& out, const CsrMatrix& m) {
    write_pod<std::int32_t>(out, m.rows());
    write_pod<std::int32_t>(out, m.cols());
    write_vec(out, std::vector<std::int64_t>(m.row_offsets().begin(), m.row_offsets().end()));
    write_vec(out, std::vector<int>(m.col_indices().begin(), m.col_indices().end()));
    write_vec(out, std::vector<double>(m.values().begin(), m.values().end()));
}

inline CsrMatrix read_csr(std::istream& in) {
    const auto rows = read_pod<std::int32_t>(in);
    const auto cols = read_pod<std::int32_t>(in);
    constexpr std::uint64_t limit = 1ULL << 34;
    auto offsets = read_vec<std::int64_t>(in, limit);
    auto indices = read_vec<int>(in, limit);
    auto values = read_vec<double>(in, limit);
    return CsrMatrix(rows, cols, std::move(offsets), std::move(indices), std::move(values));
}

} // namespace detail

inline void save_lbo(std::ostream& out, const LboBundle& b, std::uint64_t mesh_hash) {
    out.write(detail::kLboMagic, sizeof(detail::kLboMagic));
    detail::write_pod<std::uint64_t>(out, mesh_hash);
    detail::write_pod<std::uint8_t>(out, b.normalization == Normalization::symmetric ? 0 : 1);
    detail::write_pod<double>(out, b.lambda_max);
    detail::write_pod<std::uint8_t>(out, b.lambda_converged ? 1 : 0);
    detail::write_pod<std::uint64_t>(out, b.negative_weights);
    detail::write_vec(out, b.lumped_mass);
    detail::write_csr(out, b.stiffness);
    detail::write_csr(out, b.laplacian);
    detail::write_csr(out, b.scaled_laplacian);
}

/// Throws DataError on a corrupt, truncated or mismatched cache entry.
inline LboBundle load_lbo(std::istream& in, std::uint64_t expected_hash) {
    char magic[sizeof(detail::kLboMagic)];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, detail::kLboMagic, sizeof(magic)) != 0) throw DataError("not an operator cache file");
    if (detail::read_pod<std::uint64_t>(in) != expected_hash) throw DataError("operator cache belongs to another mesh");
    LboBundle b;
    b.normalization = detail::read_pod<std::uint8_t>(in) == 0 ? Normalization::symmetric : Normalization::random_walk;
    b.lambda_max = detail::read_pod<double>(in);
    b.lambda_converged = detail::read_pod<std::uint8_t>(in) != 0;
    b.negative_weights = detail::read_pod<std::uint64_t>(in);
    b.lumped_mass = detail::read_vec<double>(in, 1ULL << 32);
    b.stiffness = detail::read_csr(in);
    b.laplacian = detail::read_csr(in);
    b.scaled_laplacian = detail::read_csr(in);
    const auto n = static_cast<std::size_t>(b.stiffness.rows());
    if (b.lumped_mass.size() != n || static_cast<std::size_t>(b.laplacian.rows()) != n ||
        static_cast<std::size_t>(b.scaled_laplacian.rows()) != n || !(b.lambda_max > 0.0)) {
        throw DataError("inconsistent operator cache");
    }
    return b;
}

} // namespace letet
