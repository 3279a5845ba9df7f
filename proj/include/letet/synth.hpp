#pragma once

// Synthetic labeled tetrahedral balls: grid-stuffed unit ball, a localized
// inward dent on label-1 samples, and a label-conditional scalar biomarker.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "letet/error.hpp"
#include "letet/geometry.hpp"
#include "letet/mesh_io.hpp"
#include "letet/model.hpp"
#include "letet/random.hpp"

namespace letet {

struct SynthSpec {
    int n_per_class = 40;
    int grid_resolution = 8;  ///< cubes per unit length (ball radius 1)
    double bump_amplitude = 0.15;
    double bump_radius = 0.6;
    double center_spread = 0.1;  ///< per-sample wobble of the dent center around the dataset direction
    double center_depth = 0.85;  ///< |c| relative to the ball radius
    double biomarker_separation = 1.5;
    double noise_scale = 0.005;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_per_class < 1) throw DataError("synth: n_per_class must be positive");
        if (grid_resolution < 4) throw DataError("synth: resolution too low for connectivity (need >= 4)");
        if (!(bump_amplitude > 0.0 && bump_amplitude < 0.5)) throw DataError("synth: amplitude must lie in (0, 0.5)");
        if (!(bump_radius > 0.0) || !(noise_scale >= 0.0) || !(biomarker_separation >= 0.0) || !(center_spread >= 0.0) ||
            !(center_depth > 0.0 && center_depth <= 1.0)) {
            throw DataError("synth: scales must be positive");
        }
    }
};

namespace detail {

inline const std::array<std::array<int, 3>, 6>& axis_permutations() {
    static const std::array<std::array<int, 3>, 6> p = {{{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
    return p;
}

inline bool tets_connected(const TetMesh& mesh) {
    std::vector<std::vector<int>> by_vertex(mesh.n_vertices());
    for (std::size_t t = 0; t < mesh.n_tets(); ++t) {
        for (int v : mesh.tets[t]) by_vertex[static_cast<std::size_t>(v)].push_back(static_cast<int>(t));
    }
    std::vector<char> seen_v(mesh.n_vertices(), 0);
    std::queue<int> q;
    q.push(mesh.tets[0][0]);
    seen_v[static_cast<std::size_t>(mesh.tets[0][0])] = 1;
    std::size_t reached = 1;
    while (!q.empty()) {
        const int v = q.front();
        q.pop();
        for (int t : by_vertex[static_cast<std::size_t>(v)]) {
            for (int w : mesh.tets[static_cast<std::size_t>(t)]) {
                if (!seen_v[static_cast<std::size_t>(w)]) {
                    seen_v[static_cast<std::size_t>(w)] = 1;
                    ++reached;
                    q.push(w);
                }
            }
        }
    }
    return reached == mesh.n_vertices();
}

} // namespace detail

/// Cubes of side 1/resolution whose centers lie in the unit ball, each split
/// into 6 tets sharing the cube's main diagonal; jittered, oriented, normalized.
inline TetMesh generate_ball_mesh(const SynthSpec& spec, std::uint64_t seed) {
    spec.validate();
    const int r = spec.grid_resolution;
    const double h = 1.0 / r;
    std::map<std::array<int, 3>, int> ids;
    TetMesh mesh;
    auto vertex = [&](int i, int j, int k) {
        const std::array<int, 3> key{i, j, k};
        auto it = ids.find(key);
        if (it != ids.end()) return it->second;
        const int id = static_cast<int>(mesh.vertices.size());
        ids.emplace(key, id);
        mesh.vertices.push_back({i * h, j * h, k * h});
        return id;
    };
    for (int i = -r; i < r; ++i) {
        for (int j = -r; j < r; ++j) {
            for (int k = -r; k < r; ++k) {
                const Vec3 c{(i + 0.5) * h, (j + 0.5) * h, (k + 0.5) * h};
                if (dot(c, c) >= 1.0) continue;
                for (const auto& perm : detail::axis_permutations()) {
                    std::array<int, 3> cur{i, j, k};
                    Tet t{};
                    t[0] = vertex(cur[0], cur[1], cur[2]);
                    for (int s = 0; s < 3; ++s) {
                        ++cur[static_cast<std::size_t>(perm[static_cast<std::size_t>(s)])];
                        t[static_cast<std::size_t>(s) + 1] = vertex(cur[0], cur[1], cur[2]);
                    }
                    mesh.tets.push_back(t);
                }
            }
        }
    }
    // Relabel vertices in lexicographic grid order so the output does not depend on insertion order.
    std::vector<int> remap(mesh.vertices.size());
    std::vector<Vec3> ordered;
    ordered.reserve(mesh.vertices.size());
    for (const auto& [key, id] : ids) {
        remap[static_cast<std::size_t>(id)] = static_cast<int>(ordered.size());
        ordered.push_back(mesh.vertices[static_cast<std::size_t>(id)]);
    }
    mesh.vertices = std::move(ordered);
    for (Tet& t : mesh.tets) {
        for (int& v : t) v = remap[static_cast<std::size_t>(v)];
    }
    if (mesh.n_tets() == 0 || !detail::tets_connected(mesh)) throw DataError("synth: resolution too low for connectivity");

    Rng rng(derive_seed(seed, 0xba11));
    const double jitter = 0.1 * h;
    for (Vec3& v : mesh.vertices) {
        for (double& x : v) x += rng.uniform(-jitter, jitter);
    }
    return normalize_mesh(validate_and_orient(mesh).mesh).mesh;
}

/// Unit direction of the dataset-wide dent location.
inline Vec3 dent_direction(std::uint64_t dataset_seed) {
    Rng rng(derive_seed(dataset_seed, 0xd1));
    Vec3 d{rng.normal(), rng.normal(), rng.normal()};
    const double n = norm(d);
    return n > 0.0 ? (1.0 / n) * d : Vec3{1.0, 0.0, 0.0};
}

struct Deformation {
    TetMesh mesh;
    std::vector<char> mask;        ///< vertices with d(v) > 0.1 amplitude
    std::vector<double> magnitude;  ///< planted displacement per vertex (noise excluded)
    Vec3 center{};
};

/// Label 1: inward radial displacement A exp(-|v - c|^2 / rho^2), cut to zero
/// outside the mask. Both labels get isotropic Gaussian vertex noise.
inline Deformation apply_class_deformation(const TetMesh& mesh, int label, const SynthSpec& spec, std::uint64_t seed) {
    spec.validate();
    if (label != 0 && label != 1) throw DataError("synth: label must be 0 or 1");
    Rng rng(derive_seed(seed, 0xdef0));
    Deformation out;
    out.mesh = mesh;
    out.mask.assign(mesh.n_vertices(), 0);
    out.magnitude.assign(mesh.n_vertices(), 0.0);
    Vec3 dir = dent_direction(spec.seed);
    const Vec3 wobble{rng.normal(), rng.normal(), rng.normal()};
    dir = dir + spec.center_spread * wobble;
    dir = (1.0 / norm(dir)) * dir;
    out.center = spec.center_depth * dir;
    if (label == 1) {
        const double cutoff = 0.1 * spec.bump_amplitude;
        for (std::size_t i = 0; i < mesh.n_vertices(); ++i) {
            const Vec3& v = mesh.vertices[i];
            const double d = spec.bump_amplitude * std::exp(-squared_distance(v, out.center) / (spec.bump_radius * spec.bump_radius));
            const double r = norm(v);
            if (d <= cutoff || r == 0.0) continue;
            out.mask[i] = 1;
            out.magnitude[i] = d;
            // Near the origin a full step would pass through it; stop halfway instead.
            out.mesh.vertices[i] = v - (std::min(d, 0.5 * r) / r) * v;
        }
    }
    for (Vec3& v : out.mesh.vertices) {
        for (double& x : v) x += spec.noise_scale * rng.normal();
    }
    for (std::size_t t = 0; t < mesh.n_tets(); ++t) {
        const auto p = out.mesh.corners(t);
        if (!(signed_volume(p[0], p[1], p[2], p[3]) > 0.0)) throw DataError("synth: amplitude too large (tet " + std::to_string(t) + " inverted)");
    }
    return out;
}

/// Class-conditional N(+-separation/2, 1), un-normalized.
inline double generate_biomarker(int label, const SynthSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(derive_seed(seed, 0xb10));
    const double mean = (label == 1 ? 0.5 : -0.5) * spec.biomarker_separation;
    return mean + rng.normal();
}

/// Crossover band between the class-1 5th and class-0 95th percentiles.
struct BiomarkerBand {
    double lower = 0.0;
    double upper = 0.0;
    bool empty() const { return !(lower <= upper); }
};

inline constexpr double kNormal95 = 1.6448536269514722;

inline BiomarkerBand medium_band(const SynthSpec& spec) {
    const double s = spec.biomarker_separation / 2.0;
    return {s - kNormal95, -s + kNormal95};
}

inline RiskStratum synthetic_stratum(double biomarker, const SynthSpec& spec) {
    if (!std::isfinite(biomarker)) throw DataError("synthetic_stratum: non-finite biomarker");
    const BiomarkerBand band = medium_band(spec);
    if (!band.empty() && biomarker >= band.lower && biomarker <= band.upper) return RiskStratum::medium;
    return biomarker < (band.lower + band.upper) / 2.0 ? RiskStratum::low : RiskStratum::high;
}

/// One generated sample before operator/landmark preprocessing.
struct RawSample {
    std::string id;
    TetMesh mesh;  ///< normalized
    int label = 0;
    double biomarker = 0.0;
    RiskStratum stratum = RiskStratum::low;
    std::vector<char> mask;
    std::uint64_t seed = 0;
};

inline RawSample generate_sample(const SynthSpec& spec, int index) {
    RawSample s;
    s.seed = derive_seed(spec.seed, 0x5a, static_cast<std::uint64_t>(index));
    s.label = index % 2;
    char buf[32];
    std::snprintf(buf, sizeof buf, "s%04d", index);
    s.id = buf;
    const TetMesh ball = generate_ball_mesh(spec, s.seed);
    Deformation def = apply_class_deformation(ball, s.label, spec, s.seed);
    s.mesh = normalize_mesh(validate_and_orient(def.mesh).mesh).mesh;
    s.mask = std::move(def.mask);
    s.biomarker = generate_biomarker(s.label, spec, s.seed);
    s.stratum = synthetic_stratum(s.biomarker, spec);
    return s;
}

struct SynthDataset {
    SynthSpec spec;
    std::vector<MeshSample> samples;
    std::vector<RiskStratum> strata;
    std::vector<std::vector<char>> masks;
    std::vector<std::uint64_t> seeds;

    std::vector<int> labels() const {
        std::vector<int> out;
        for (const auto& s : samples) out.push_back(s.label);
        return out;
    }
};

inline std::vector<RawSample> generate_raw_dataset(const SynthSpec& spec) {
    spec.validate();
    std::vector<RawSample> out;
    for (int i = 0; i < 2 * spec.n_per_class; ++i) out.push_back(generate_sample(spec, i));
    return out;
}

/// Generates and preprocesses every sample (operators, landmarks, patches).
inline SynthDataset build_dataset(const SynthSpec& spec, PrepOptions prep = {}) {
    SynthDataset ds;
    ds.spec = spec;
    for (RawSample& raw : generate_raw_dataset(spec)) {
        prep.seed = raw.seed;
        ds.samples.push_back(prepare_sample(raw.id, raw.mesh, raw.label, raw.biomarker, prep));
        ds.strata.push_back(raw.stratum);
        ds.masks.push_back(std::move(raw.mask));
        ds.seeds.push_back(raw.seed);
    }
    return ds;
}

} // namespace letet
