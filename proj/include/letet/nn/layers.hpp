#pragma once

// Network layers: pointwise MLP, Chebyshev spectral convolution over the
// scaled tetrahedral Laplacian, and radius-graph vector attention with learned
// relative positional encoding.

#include <memory>
#include <string>
#include <vector>

#include "letet/error.hpp"
#include "letet/geometry.hpp"
#include "letet/nn/params.hpp"
#include "letet/nn/tensor.hpp"
#include "letet/tokenize.hpp"

namespace letet::nn {

struct Linear {
    Tensor weight;  ///< in x out
    Tensor bias;    ///< 1 x out, may be undefined

    static Linear create(ParamSet& params, const std::string& name, int in, int out, Rng& rng, bool with_bias = true) {
        Linear l;
        l.weight = params.add(name + ".weight", glorot_uniform(in, out, rng));
        if (with_bias) l.bias = params.add(name + ".bias", zero_parameter(1, out));
        return l;
    }

    static Linear bind(const ParamSet& params, const std::string& name) {
        Linear l;
        l.weight = params.at(name + ".weight");
        if (params.contains(name + ".bias")) l.bias = params.at(name + ".bias");
        return l;
    }

    Tensor operator()(const Tensor& x) const {
        Tensor y = matmul(x, weight);
        return bias.defined() ? add_bias(y, bias) : y;
    }
};

/// affine -> ReLU -> affine
struct TwoLayerMlp {
    Linear first;
    Linear second;

    static TwoLayerMlp create(ParamSet& params, const std::string& name, int in, int hidden, int out, Rng& rng) {
        return {Linear::create(params, name + ".0", in, hidden, rng), Linear::create(params, name + ".1", hidden, out, rng)};
    }
    static TwoLayerMlp bind(const ParamSet& params, const std::string& name) {
        return {Linear::bind(params, name + ".0"), Linear::bind(params, name + ".1")};
    }

    Tensor operator()(const Tensor& x) const { return second(relu(first(x))); }
};

/// Shared-weight per-node affine map followed by ReLU.
inline Tensor pointwise_mlp_forward(const Tensor& x, const Linear& layer) { return relu(layer(x)); }

struct ChebConvParams {
    std::vector<Tensor> theta;  ///< K + 1 matrices of shape d_in x d_out

    int order() const { return static_cast<int>(theta.size()) - 1; }

    static ChebConvParams create(ParamSet& params, const std::string& name, int d_in, int d_out, int order, Rng& rng) {
        if (order < 0) throw DataError("Chebyshev order must be >= 0");
        ChebConvParams c;
        for (int m = 0; m <= order; ++m) {
            c.theta.push_back(params.add(name + ".theta" + std::to_string(m), glorot_uniform(d_in, d_out, rng)));
        }
        return c;
    }
    static ChebConvParams bind(const ParamSet& params, const std::string& name, int order) {
        ChebConvParams c;
        for (int m = 0; m <= order; ++m) c.theta.push_back(params.at(name + ".theta" + std::to_string(m)));
        return c;
    }
};

/// sum_m T_m(L~) x theta_m using T_0 x = x, T_1 x = L~ x, T_m x = 2 L~ T_{m-1} x - T_{m-2} x.
inline Tensor chebconv_forward(const Tensor& x, const std::shared_ptr<const SparseOperator>& scaled_laplacian,
                               const ChebConvParams& p) {
    if (p.theta.empty()) throw DataError("chebconv: no weights");
    if (scaled_laplacian->matrix.rows() != x.rows()) throw DataError("chebconv: operator size does not match input rows");
    if (p.theta[0].rows() != x.cols()) throw DataError("chebconv: weight rows do not match input width");
    Tensor t_prev = x;
    Tensor out = matmul(x, p.theta[0]);
    if (p.order() == 0) return out;
    Tensor t_cur = spmm(scaled_laplacian, x);
    out = add(out, matmul(t_cur, p.theta[1]));
    for (int m = 2; m <= p.order(); ++m) {
        Tensor t_next = sub(scale(spmm(scaled_laplacian, t_cur), 2.0), t_prev);
        out = add(out, matmul(t_next, p.theta[static_cast<std::size_t>(m)]));
        t_prev = t_cur;
        t_cur = t_next;
    }
    return out;
}

enum class AttentionNorm { per_channel, per_edge };

struct AttentionOptions {
    AttentionNorm norm = AttentionNorm::per_channel;
    bool value_position = true;  ///< add delta(dp) to the values as well as the scores
};

struct AttentionParams {
    Tensor query;  ///< d x d
    Tensor key;
    Tensor value;
    TwoLayerMlp delta;  ///< 3 -> d positional encoding
    TwoLayerMlp phi;    ///< d -> d relation scores on (q - k)

    static AttentionParams create(ParamSet& params, const std::string& name, int d, Rng& rng) {
        AttentionParams a;
        a.query = params.add(name + ".query", glorot_uniform(d, d, rng));
        a.key = params.add(name + ".key", glorot_uniform(d, d, rng));
        a.value = params.add(name + ".value", glorot_uniform(d, d, rng));
        a.delta = TwoLayerMlp::create(params, name + ".delta", 3, d, d, rng);
        a.phi = TwoLayerMlp::create(params, name + ".phi", d, d, d, rng);
        return a;
    }
    static AttentionParams bind(const ParamSet& params, const std::string& name) {
        AttentionParams a;
        a.query = params.at(name + ".query");
        a.key = params.at(name + ".key");
        a.value = params.at(name + ".value");
        a.delta = TwoLayerMlp::bind(params, name + ".delta");
        a.phi = TwoLayerMlp::bind(params, name + ".phi");
        return a;
    }
};

/// Edge structure of the token graph in the form the attention layer consumes.
struct TokenGraph {
    int n_tokens = 0;
    std::shared_ptr<const std::vector<int>> targets;
    std::shared_ptr<const std::vector<int>> sources;
    Tensor offsets;  ///< per edge p_source - p_target, |E| x 3

    static TokenGraph build(const std::vector<Vec3>& centers, const EdgeList& edges) {
        TokenGraph g;
        g.n_tokens = static_cast<int>(centers.size());
        std::vector<char> has_incoming(centers.size(), 0);
        std::vector<double> off;
        off.reserve(edges.size() * 3);
        for (std::size_t e = 0; e < edges.size(); ++e) {
            const int i = edges.targets[e];
            const int j = edges.sources[e];
            if (i < 0 || j < 0 || i >= g.n_tokens || j >= g.n_tokens) throw DataError("edge endpoint out of range");
            has_incoming[static_cast<std::size_t>(i)] = 1;
            const Vec3 d = centers[static_cast<std::size_t>(j)] - centers[static_cast<std::size_t>(i)];
            off.insert(off.end(), d.begin(), d.end());
        }
        for (std::size_t i = 0; i < has_incoming.size(); ++i) {
            if (!has_incoming[i]) throw DataError("token " + std::to_string(i) + " has no incoming edge");
        }
        g.targets = std::make_shared<const std::vector<int>>(edges.targets);
        g.sources = std::make_shared<const std::vector<int>>(edges.sources);
        g.offsets = Tensor::constant(static_cast<int>(edges.size()), 3, std::move(off));
        return g;
    }
};

/// For each edge (i <- j): e_ij = phi(q_i - k_j) + delta(p_j - p_i); weights are
/// the softmax of e_ij over the incoming edges of i, and the output is
/// x_i + sum_j a_ij * (v_j + delta(p_j - p_i)).
inline Tensor point_transformer_forward(const Tensor& tokens, const TokenGraph& graph, const AttentionParams& p,
                                        const AttentionOptions& opt = {}) {
    if (tokens.rows() != graph.n_tokens) throw DataError("attention: token count does not match graph");
    const Tensor q = matmul(tokens, p.query);
    const Tensor k = matmul(tokens, p.key);
    const Tensor v = matmul(tokens, p.value);
    const Tensor qi = gather_rows(q, graph.targets);
    const Tensor kj = gather_rows(k, graph.sources);
    const Tensor vj = gather_rows(v, graph.sources);
    const Tensor pos = p.delta(graph.offsets);
    const Tensor scores = add(p.phi(sub(qi, kj)), pos);
    const Tensor values = opt.value_position ? add(vj, pos) : vj;
    Tensor messages;
    if (opt.norm == AttentionNorm::per_channel) {
        messages = mul(segment_softmax(scores, graph.targets, graph.n_tokens), values);
    } else {
        messages = mul_column_broadcast(segment_softmax(mean_cols(scores), graph.targets, graph.n_tokens), values);
    }
    return add(segment_sum(messages, graph.targets, graph.n_tokens), tokens);
}

inline Tensor pool_patch_features(const Tensor& node_features, const PatchAssignment& patches) {
    if (static_cast<std::size_t>(node_features.rows()) != patches.labels.size()) {
        throw DataError("pool_patch_features: feature rows do not match vertex count");
    }
    return segment_mean(node_features, std::make_shared<const std::vector<int>>(patches.labels), patches.n_patches);
}

inline Tensor global_mean_pool(const Tensor& tokens) { return mean_rows(tokens); }

} // namespace letet::nn
