#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "letet/error.hpp"
#include "letet/mesh_io.hpp"
#include "letet/model.hpp"

namespace letet {

struct Heatmap {
    std::vector<double> values;  ///< per vertex, in [0, 1]
    std::string layer;
    bool all_zero = false;
    std::string warning;  ///< set when the raw map vanished everywhere
};

/// Grad-CAM on the last Chebyshev layer output A (N x d):
/// alpha_c = mean_i d logit / dA_ic, m_i = max(0, sum_c alpha_c A_ic), max-normalized.
inline Heatmap gradcam(const PreparedSample& ps, const ModelParams& mp, const ModelConfig& cfg) {
    if (!cfg.uses_conv()) throw DataError("no convolutional feature map (variant " + to_string(cfg.variant) + ")");
    const ForwardResult fr = forward(ps, mp, cfg);
    const nn::Tensor& a = fr.feature_map;
    const int n = a.rows();
    const int d = a.cols();
    std::vector<double> alpha(static_cast<std::size_t>(d), 0.0);
    if (a.requires_grad()) {
        fr.logit.backward();
        if (a.has_grad()) {
            const auto g = a.grad();
            for (int i = 0; i < n; ++i) {
                for (int c = 0; c < d; ++c) alpha[static_cast<std::size_t>(c)] += g[static_cast<std::size_t>(i) * d + c];
            }
            for (double& x : alpha) x /= n;
        }
    }
    Heatmap h;
    h.layer = "cheb" + std::to_string(cfg.n_tetcnn_layers - 1);
    h.values.assign(static_cast<std::size_t>(n), 0.0);
    const auto av = a.data();
    double peak = 0.0;
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int c = 0; c < d; ++c) s += alpha[static_cast<std::size_t>(c)] * av[static_cast<std::size_t>(i) * d + c];
        if (!std::isfinite(s)) throw NumericalError("gradcam: non-finite activation map");
        h.values[static_cast<std::size_t>(i)] = std::max(0.0, s);
        peak = std::max(peak, h.values[static_cast<std::size_t>(i)]);
    }
    if (peak > 0.0) {
        for (double& v : h.values) v /= peak;
    } else {
        h.all_zero = true;
        h.warning = "gradcam: activation map is zero everywhere for sample '" + ps.sample->id + "'";
    }
    return h;
}

inline Heatmap gradcam(const MeshSample& s, const ModelParams& mp, const ModelConfig& cfg) {
    return gradcam(prepare_for_model(s, cfg), mp, cfg);
}

/// VTK legacy text with the heatmap as point scalars named "gradcam".
inline std::string export_heatmap(const TetMesh& mesh, const Heatmap& h) {
    return write_vtk_scalar(mesh, VertexField{h.values, 1}, "gradcam");
}

/// Share of the top-decile heat mass that lands on masked vertices.
inline double top_decile_mass_in_mask(const std::vector<double>& heat, const std::vector<char>& mask) {
    if (heat.size() != mask.size() || heat.empty()) throw DataError("heatmap/mask size mismatch");
    std::vector<std::size_t> order(heat.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const std::size_t k = std::max<std::size_t>(1, (heat.size() + 9) / 10);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) { return heat[a] > heat[b] || (heat[a] == heat[b] && a < b); });
    double total = 0.0, inside = 0.0;
    for (std::size_t r = 0; r < k; ++r) {
        total += heat[order[r]];
        if (mask[order[r]]) inside += heat[order[r]];
    }
    return total > 0.0 ? inside / total : 0.0;
}

} // namespace letet
