#pragma once

// Landmark (super node) selection. The primary selector is greedy maximum
// posterior variance of a Gaussian process whose prior is a multi-scale heat
// diffusion kernel built from the low Laplacian spectrum; farthest point
// sampling is the cheap fallback.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "letet/error.hpp"
#include "letet/lbo.hpp"
#include "letet/mesh_io.hpp"

namespace letet {

enum class LandmarkMethod { gp_diffusion, fps };

inline std::string to_string(LandmarkMethod m) { return m == LandmarkMethod::gp_diffusion ? "gp-diffusion" : "fps"; }

inline LandmarkMethod landmark_method_from_string(const std::string& s) {
    if (s == "gp-diffusion") return LandmarkMethod::gp_diffusion;
    if (s == "fps") return LandmarkMethod::fps;
    throw DataError("unknown landmark method '" + s + "'");
}

struct LandmarkSet {
    std::vector<int> indices;  ///< selection order
    std::vector<Vec3> positions;
    LandmarkMethod method = LandmarkMethod::gp_diffusion;
    std::uint64_t seed = 0;
    std::vector<double> posterior_variance;  ///< gp-diffusion only, at selection time

    std::size_t size() const { return indices.size(); }

    friend bool operator==(const LandmarkSet& a, const LandmarkSet& b) {
        return a.indices == b.indices && a.positions == b.positions && a.method == b.method && a.seed == b.seed;
    }
};

struct DiffusionKernelSpec {
    std::vector<double> scales{0.01, 0.1, 1.0};  ///< diffusion times, ascending
    int n_eigenpairs = 64;

    void validate() const {
        if (scales.empty()) throw DataError("diffusion kernel needs at least one scale");
        for (std::size_t s = 0; s < scales.size(); ++s) {
            if (!(scales[s] > 0.0)) throw DataError("diffusion scales must be positive");
            if (s > 0 && !(scales[s] > scales[s - 1])) throw DataError("diffusion scales must be ascending");
        }
        if (n_eigenpairs < 2) throw DataError("diffusion kernel needs at least 2 eigenpairs");
    }
};

/// k(i, j) = sum_s sum_m exp(-lambda_m t_s) phi_m(i) phi_m(j), held in factored
/// form Phi diag(w) Phi^T.
class DiffusionKernel {
public:
    DiffusionKernel(const Eigenpairs& pairs, const DiffusionKernelSpec& spec) : phi_(pairs.vectors) {
        spec.validate();
        weights_ = Eigen::VectorXd::Zero(pairs.values.size());
        for (Eigen::Index m = 0; m < pairs.values.size(); ++m) {
            const double lam = std::max(pairs.values[m], 0.0);
            for (double t : spec.scales) weights_[m] += std::exp(-lam * t);
        }
    }

    Eigen::Index size() const { return phi_.rows(); }

    double operator()(Eigen::Index i, Eigen::Index j) const {
        return (phi_.row(i).array() * weights_.transpose().array() * phi_.row(j).array()).sum();
    }

    Eigen::VectorXd column(Eigen::Index j) const { return phi_ * weights_.cwiseProduct(phi_.row(j).transpose()); }

    Eigen::VectorXd diagonal() const { return (phi_.array().square().rowwise() * weights_.transpose().array()).rowwise().sum(); }

    Eigen::MatrixXd dense() const { return phi_ * weights_.asDiagonal() * phi_.transpose(); }

private:
    Eigen::MatrixXd phi_;
    Eigen::VectorXd weights_;
};

inline double diffusion_kernel_value(int i, int j, const Eigenpairs& pairs, const DiffusionKernelSpec& spec) {
    return DiffusionKernel(pairs, spec)(i, j);
}

/// Greedy GP landmarking: repeatedly pick the vertex with the largest
/// posterior variance given the points already chosen (lowest index on ties).
/// This is pivoted Cholesky of the kernel with maximum-diagonal pivoting.
inline LandmarkSet gp_greedy_select(const TetMesh& mesh, const Eigenpairs& pairs, const DiffusionKernelSpec& spec,
                                    int n) {
    const DiffusionKernel kernel(pairs, spec);
    const auto big_n = static_cast<int>(mesh.n_vertices());
    if (kernel.size() != big_n) throw DataError("eigenpairs do not match mesh size");
    if (n < 1 || n > big_n) throw DataError("landmark count must be in [1, N]");

    const Eigen::VectorXd prior = kernel.diagonal();
    double jitter = 0.0;
    bool jittered = false;

    LandmarkSet out;
    out.method = LandmarkMethod::gp_diffusion;
    std::vector<char> chosen(static_cast<std::size_t>(big_n), 0);
    // Row s of `factor` holds L^{-1} k_{S, i} for all i, i.e. the Cholesky columns.
    Eigen::MatrixXd factor(0, big_n);
    Eigen::VectorXd variance = prior;

    auto rebuild = [&]() {
        factor.resize(0, big_n);
        variance = prior;
        for (std::size_t p = 0; p < out.indices.size(); ++p) {
            const int s = out.indices[p];
            Eigen::VectorXd col = kernel.column(s);
            if (factor.rows() > 0) col -= factor.transpose() * factor.col(s);
            const double pivot = prior[s] + jitter - (factor.rows() > 0 ? factor.col(s).squaredNorm() : 0.0);
            if (!(pivot > 0.0)) return false;
            col /= std::sqrt(pivot);
            col[s] = std::sqrt(pivot);
            factor.conservativeResize(factor.rows() + 1, Eigen::NoChange);
            factor.row(factor.rows() - 1) = col.transpose();
            variance -= col.cwiseAbs2();
            variance[s] = 0.0;
        }
        return true;
    };

    while (static_cast<int>(out.indices.size()) < n) {
        int best = -1;
        double best_var = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < big_n; ++i) {
            if (!chosen[i] && variance[i] > best_var) {
                best_var = variance[i];
                best = i;
            }
        }
        const double pivot = best_var + jitter;
        const double scale = prior.maxCoeff();
        if (!(pivot > 1e-14 * scale)) {
            if (jittered) throw NumericalError("kernel matrix of selected landmarks is singular");
            // K_SS numerically singular: regularize once and refactor.
            out.indices.push_back(best);
            double trace = 0.0;
            for (int s : out.indices) trace += prior[s];
            jitter = 1e-10 * trace / static_cast<double>(out.indices.size());
            jittered = true;
            out.indices.pop_back();
            if (!rebuild()) throw NumericalError("kernel matrix of selected landmarks is singular");
            continue;
        }
        Eigen::VectorXd col = kernel.column(best);
        if (factor.rows() > 0) col -= factor.transpose() * factor.col(best);
        const double root = std::sqrt(pivot);
        col /= root;
        col[best] = root;
        factor.conservativeResize(factor.rows() + 1, Eigen::NoChange);
        factor.row(factor.rows() - 1) = col.transpose();
        variance -= col.cwiseAbs2();
        variance[best] = 0.0;
        chosen[best] = 1;
        out.indices.push_back(best);
        out.posterior_variance.push_back(best_var);
        out.positions.push_back(mesh.vertices[best]);
    }
    return out;
}

/// Farthest point sampling from the vertex of maximum norm; ties go to the lowest index.
inline LandmarkSet fps_select(const std::vector<Vec3>& vertices, int n, std::uint64_t seed = 0) {
    const auto big_n = static_cast<int>(vertices.size());
    if (n < 1 || n > big_n) throw DataError("landmark count must be in [1, N]");
    LandmarkSet out;
    out.method = LandmarkMethod::fps;
    out.seed = seed;
    int first = 0;
    for (int i = 1; i < big_n; ++i) {
        if (dot(vertices[i], vertices[i]) > dot(vertices[first], vertices[first])) first = i;
    }
    std::vector<double> dist(static_cast<std::size_t>(big_n), std::numeric_limits<double>::infinity());
    int next = first;
    for (int k = 0; k < n; ++k) {
        out.indices.push_back(next);
        out.positions.push_back(vertices[next]);
        dist[next] = -1.0;
        int arg = -1;
        double far = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < big_n; ++i) {
            if (dist[i] < 0.0) continue;
            dist[i] = std::min(dist[i], squared_distance(vertices[i], vertices[next]));
            if (dist[i] > far) {
                far = dist[i];
                arg = i;
            }
        }
        next = arg;
    }
    return out;
}

/// max over vertices of the distance to the nearest landmark.
inline double coverage_radius(const std::vector<Vec3>& vertices, const std::vector<int>& landmarks) {
    double worst = 0.0;
    for (const Vec3& v : vertices) {
        double best = std::numeric_limits<double>::infinity();
        for (int s : landmarks) best = std::min(best, squared_distance(v, vertices[s]));
        worst = std::max(worst, best);
    }
    return std::sqrt(worst);
}

/// Sidecar text: `method`, `seed`, `count` lines followed by one index per line.
inline void save_landmarks(std::ostream& out, const LandmarkSet& set) {
    if (set.indices.empty()) throw DataError("cannot save an empty landmark set");
    out << "method " << to_string(set.method) << '\n' << "seed " << set.seed << '\n' << "count " << set.size() << '\n';
    for (int i : set.indices) out << i << '\n';
}

inline LandmarkSet load_landmarks(std::istream& in, const TetMesh& mesh) {
    LandmarkSet set;
    std::string key, method;
    std::size_t count = 0;
    if (!(in >> key >> method) || key != "method") throw DataError("landmark file: missing method");
    set.method = landmark_method_from_string(method);
    if (!(in >> key >> set.seed) || key != "seed") throw DataError("landmark file: missing seed");
    if (!(in >> key >> count) || key != "count") throw DataError("landmark file: missing count");
    if (count == 0) throw DataError("landmark file: empty set");
    std::vector<char> seen(mesh.n_vertices(), 0);
    for (std::size_t k = 0; k < count; ++k) {
        long long idx = 0;
        if (!(in >> idx)) throw DataError("landmark file: truncated");
        if (idx < 0 || idx >= static_cast<long long>(mesh.n_vertices())) throw DataError("landmark/mesh mismatch");
        if (seen[static_cast<std::size_t>(idx)]++) throw DataError("landmark file: duplicate index");
        set.indices.push_back(static_cast<int>(idx));
        set.positions.push_back(mesh.vertices[static_cast<std::size_t>(idx)]);
    }
    return set;
}

} // namespace letet
