#pragma once

#include <algorithm>
#include <limits>
#include <tuple>
#include <vector>

#include "letet/error.hpp"
#include "letet/geometry.hpp"
#include "letet/landmarks.hpp"

namespace letet {

/// Nearest-super-node partition of the mesh vertices; one patch per landmark.
struct PatchAssignment {
    std::vector<int> labels;  ///< per vertex, in [0, n_patches)
    int n_patches = 0;
    std::vector<Vec3> centers;  ///< super node positions
    std::vector<int> sizes;
};

inline PatchAssignment assign_patches(const std::vector<Vec3>& vertices, const LandmarkSet& landmarks) {
    if (landmarks.indices.empty()) throw DataError("patch assignment needs at least one landmark");
    PatchAssignment out;
    out.n_patches = static_cast<int>(landmarks.size());
    out.centers.reserve(landmarks.size());
    for (int idx : landmarks.indices) {
        if (idx < 0 || idx >= static_cast<int>(vertices.size())) throw DataError("landmark/mesh mismatch");
        out.centers.push_back(vertices[idx]);
    }
    out.labels.resize(vertices.size());
    for (std::size_t v = 0; v < vertices.size(); ++v) {
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (int p = 0; p < out.n_patches; ++p) {
            const double d = squared_distance(vertices[v], out.centers[p]);
            if (d < best_d) {
                best_d = d;
                best = p;
            }
        }
        out.labels[v] = best;
    }
    // A super node always owns its patch, even when another landmark coincides with it.
    for (int p = 0; p < out.n_patches; ++p) out.labels[landmarks.indices[p]] = p;
    out.sizes.assign(static_cast<std::size_t>(out.n_patches), 0);
    for (int l : out.labels) ++out.sizes[l];
    return out;
}

/// Directed edges (target <- source), sorted by (target, source), self-loops included.
struct EdgeList {
    std::vector<int> targets;
    std::vector<int> sources;

    std::size_t size() const { return targets.size(); }
};

inline EdgeList build_radius_graph(const std::vector<Vec3>& centers, double radius) {
    if (!(radius > 0.0)) throw DataError("radius must be positive");
    EdgeList edges;
    const double r2 = radius * radius;
    const auto n = static_cast<int>(centers.size());
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i == j || squared_distance(centers[i], centers[j]) <= r2) {
                edges.targets.push_back(i);
                edges.sources.push_back(j);
            }
        }
    }
    return edges;
}

} // namespace letet
