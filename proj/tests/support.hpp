#pragma once

// Shared test fixtures and oracles. Nothing here calls into the code under
// test for the quantity being checked.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "letet/mesh_io.hpp"
#include "letet/nn/params.hpp"
#include "letet/nn/tensor.hpp"
#include "letet/random.hpp"

namespace testing_support {

using letet::Tet;
using letet::TetMesh;
using letet::Vec3;
using letet::operator-;
using letet::operator+;

/// nx*ny*nz box of cubes, each split into 6 tets, with vertex jitter.
inline TetMesh box_mesh(int nx, int ny, int nz, double jitter, std::uint64_t seed) {
    TetMesh m;
    auto id = [&](int i, int j, int k) { return (i * (ny + 1) + j) * (nz + 1) + k; };
    letet::Rng rng(seed);
    for (int i = 0; i <= nx; ++i)
        for (int j = 0; j <= ny; ++j)
            for (int k = 0; k <= nz; ++k)
                m.vertices.push_back({i + rng.uniform(-jitter, jitter), j + rng.uniform(-jitter, jitter),
                                      k + rng.uniform(-jitter, jitter)});
    const int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
    for (int i = 0; i < nx; ++i)
        for (int j = 0; j < ny; ++j)
            for (int k = 0; k < nz; ++k)
                for (const auto& p : perms) {
                    int c[3] = {i, j, k};
                    Tet t{};
                    t[0] = id(c[0], c[1], c[2]);
                    for (int s = 0; s < 3; ++s) {
                        ++c[p[s]];
                        t[s + 1] = id(c[0], c[1], c[2]);
                    }
                    // Orient by hand so tests do not rely on validate_and_orient.
                    const auto& v = m.vertices;
                    const Vec3 a = v[t[1]] - v[t[0]], b = v[t[2]] - v[t[0]], d = v[t[3]] - v[t[0]];
                    if (letet::dot(a, letet::cross(b, d)) < 0) std::swap(t[2], t[3]);
                    m.tets.push_back(t);
                }
    return m;
}

inline std::array<Vec3, 4> regular_tet() {
    const double s = 1.0 / std::sqrt(2.0);
    return {Vec3{1, 0, -s}, Vec3{-1, 0, -s}, Vec3{0, 1, s}, Vec3{0, -1, s}};
}

inline TetMesh single_tet_mesh(const std::array<Vec3, 4>& p) {
    TetMesh m;
    m.vertices.assign(p.begin(), p.end());
    m.tets.push_back({0, 1, 2, 3});
    return m;
}

/// Random tet with a volume bounded away from zero.
inline std::array<Vec3, 4> random_tet(letet::Rng& rng) {
    for (;;) {
        std::array<Vec3, 4> p;
        for (auto& v : p) v = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        const Vec3 a = p[1] - p[0], b = p[2] - p[0], c = p[3] - p[0];
        const double vol = letet::dot(a, letet::cross(b, c)) / 6.0;
        if (std::abs(vol) > 0.02) {
            if (vol < 0) std::swap(p[2], p[3]);
            return p;
        }
    }
}

/// Vertices relabeled by `perm` (new index of old vertex i is perm[i]).
inline TetMesh permute_mesh(const TetMesh& m, const std::vector<int>& perm) {
    TetMesh out;
    out.vertices.resize(m.n_vertices());
    for (std::size_t i = 0; i < m.n_vertices(); ++i) out.vertices[perm[i]] = m.vertices[i];
    for (Tet t : m.tets) {
        for (int& v : t) v = perm[v];
        out.tets.push_back(t);
    }
    return out;
}

inline std::vector<int> random_permutation(std::size_t n, std::uint64_t seed) {
    std::vector<int> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = static_cast<int>(i);
    letet::Rng rng(seed);
    rng.shuffle(p.begin(), p.end());
    return p;
}

// ---------------------------------------------------------------------------
// Minimal legacy-VTK reader written against the file format description.

struct VtkData {
    std::vector<std::array<double, 3>> points;
    std::vector<std::vector<int>> cells;
    std::vector<int> cell_types;
    std::string scalar_name;
    std::string scalar_type;
    int components = 0;
    std::vector<double> scalars;
};

inline VtkData read_vtk(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    if (line.rfind("# vtk DataFile Version", 0) != 0) throw std::runtime_error("bad VTK magic");
    std::getline(in, line);  // title
    std::getline(in, line);
    if (line != "ASCII") throw std::runtime_error("not ASCII");
    VtkData d;
    std::string kw;
    while (in >> kw) {
        if (kw == "DATASET") {
            in >> kw;
            if (kw != "UNSTRUCTURED_GRID") throw std::runtime_error("unexpected dataset " + kw);
        } else if (kw == "POINTS") {
            std::size_t n;
            std::string type;
            in >> n >> type;
            d.points.resize(n);
            for (auto& p : d.points) in >> p[0] >> p[1] >> p[2];
        } else if (kw == "CELLS") {
            std::size_t n, total;
            in >> n >> total;
            std::size_t seen = 0;
            for (std::size_t c = 0; c < n; ++c) {
                int k;
                in >> k;
                std::vector<int> ids(static_cast<std::size_t>(k));
                for (int& i : ids) in >> i;
                d.cells.push_back(ids);
                seen += 1 + static_cast<std::size_t>(k);
            }
            if (seen != total) throw std::runtime_error("CELLS size mismatch");
        } else if (kw == "CELL_TYPES") {
            std::size_t n;
            in >> n;
            d.cell_types.resize(n);
            for (int& t : d.cell_types) in >> t;
        } else if (kw == "POINT_DATA") {
            std::size_t n;
            in >> n;
            std::string scalars_kw;
            in >> scalars_kw >> d.scalar_name >> d.scalar_type >> d.components;
            if (scalars_kw != "SCALARS") throw std::runtime_error("expected SCALARS");
            std::string lt, def;
            in >> lt >> def;
            d.scalars.resize(n * static_cast<std::size_t>(d.components));
            for (double& v : d.scalars) in >> v;
        } else {
            throw std::runtime_error("unexpected keyword " + kw);
        }
        if (in.fail()) throw std::runtime_error("malformed VTK after " + kw);
    }
    return d;
}

// ---------------------------------------------------------------------------
// Central finite differences over every parameter entry.

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst;
};

/// Relative error per entry is |a - n| / max(|a|, |n|, floor). Each entry is
/// differenced at h and h/4 and the better agreement kept: a ReLU kink closer
/// than h to the evaluation point spoils the wide step only.
inline GradCheckResult grad_check(letet::nn::ParamSet& params, const std::function<letet::nn::Tensor()>& loss_fn,
                                  double h = 1e-5, double floor = 1e-6) {
    params.zero_grad();
    const letet::nn::Tensor loss = loss_fn();
    loss.backward();
    GradCheckResult res;
    for (auto& [name, t] : params) {
        const std::vector<double> analytic(t.grad().begin(), t.grad().end());
        auto w = t.data();
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double orig = w[i];
            double err = std::numeric_limits<double>::infinity(), numeric = 0.0;
            for (double step : {h, h / 4}) {
                w[i] = orig + step;
                const double fp = loss_fn().item();
                w[i] = orig - step;
                const double fm = loss_fn().item();
                w[i] = orig;
                const double n = (fp - fm) / (2 * step);
                const double e = std::abs(analytic[i] - n) / std::max({std::abs(analytic[i]), std::abs(n), floor});
                if (e < err) {
                    err = e;
                    numeric = n;
                }
                if (err < 1e-6) break;
            }
            if (err > res.max_rel_error) {
                res.max_rel_error = err;
                res.worst = name + "[" + std::to_string(i) + "] analytic=" + std::to_string(analytic[i]) +
                            " numeric=" + std::to_string(numeric);
            }
        }
    }
    return res;
}

/// Gradient of a scalar function with respect to an input tensor (treated as a parameter).
inline GradCheckResult grad_check_input(letet::nn::Tensor& x, const std::function<letet::nn::Tensor()>& loss_fn,
                                        double h = 1e-5, double floor = 1e-6) {
    letet::nn::ParamSet ps;
    ps.add("input", x);
    return grad_check(ps, loss_fn, h, floor);
}

inline letet::nn::Tensor random_tensor(int rows, int cols, letet::Rng& rng, bool trainable, double scale = 1.0) {
    std::vector<double> v(static_cast<std::size_t>(rows) * cols);
    for (double& x : v) x = scale * rng.uniform(-1, 1);
    return trainable ? letet::nn::Tensor::parameter(rows, cols, std::move(v))
                     : letet::nn::Tensor::constant(rows, cols, std::move(v));
}

inline Eigen::MatrixXd to_eigen(const letet::nn::Tensor& t) {
    Eigen::MatrixXd m(t.rows(), t.cols());
    for (int r = 0; r < t.rows(); ++r)
        for (int c = 0; c < t.cols(); ++c) m(r, c) = t.at(r, c);
    return m;
}

/// 1-D logistic regression on a scalar feature by Newton's method.
struct Logistic1D {
    double w = 0.0, b = 0.0;

    static Logistic1D fit(const std::vector<double>& x, const std::vector<int>& y, int iterations = 50) {
        Logistic1D m;
        for (int it = 0; it < iterations; ++it) {
            Eigen::Matrix2d H = Eigen::Matrix2d::Identity() * 1e-9;
            Eigen::Vector2d g = Eigen::Vector2d::Zero();
            for (std::size_t i = 0; i < x.size(); ++i) {
                const double p = 1.0 / (1.0 + std::exp(-(m.w * x[i] + m.b)));
                const Eigen::Vector2d f(x[i], 1.0);
                g += (p - y[i]) * f;
                H += p * (1 - p) * f * f.transpose();
            }
            const Eigen::Vector2d step = H.ldlt().solve(g);
            m.w -= step(0);
            m.b -= step(1);
            if (step.norm() < 1e-12) break;
        }
        return m;
    }

    int predict(double x) const { return w * x + b >= 0.0 ? 1 : 0; }
};

} // namespace testing_support
