#pragma once

// The full landmark-enhanced network (pointwise MLP -> Chebyshev layers ->
// patch tokens -> radius-graph attention -> global pooling -> head), its
// training and evaluation loops, metrics, and the biomarker labeling rules.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "letet/error.hpp"
#include "letet/landmarks.hpp"
#include "letet/lbo.hpp"
#include "letet/mesh_io.hpp"
#include "letet/nn/layers.hpp"
#include "letet/nn/optim.hpp"
#include "letet/nn/params.hpp"
#include "letet/random.hpp"
#include "letet/tokenize.hpp"

namespace letet {

enum class Variant { letetcnn, le, tetcnn_only };

inline std::string to_string(Variant v) {
    switch (v) {
    case Variant::letetcnn: return "LETetCNN";
    case Variant::le: return "LE";
    case Variant::tetcnn_only: return "TetCNN-only";
    }
    return "?";
}

inline Variant variant_from_string(const std::string& s) {
    if (s == "LETetCNN") return Variant::letetcnn;
    if (s == "LE") return Variant::le;
    if (s == "TetCNN-only" || s == "TetCNN") return Variant::tetcnn_only;
    throw DataError("unknown model variant '" + s + "'");
}

struct ModelConfig {
    int hidden_dim = 128;
    int n_tetcnn_layers = 2;
    int n_transformer_layers = 2;
    int cheb_order = 3;
    double radius = 0.5;
    int n_landmarks = 64;
    Variant variant = Variant::letetcnn;
    bool fuse_biomarker = false;
    nn::AttentionOptions attention{};

    void validate() const {
        if (hidden_dim < 1 || n_tetcnn_layers < 0 || n_transformer_layers < 0 || cheb_order < 0 || n_landmarks < 1) {
            throw DataError("model config: counts must be positive");
        }
        if (!(radius > 0.0)) throw DataError("model config: radius must be positive");
        if (variant != Variant::le && n_tetcnn_layers < 1) throw DataError("model config: variant needs a TetCNN layer");
    }

    bool uses_conv() const { return variant != Variant::le; }
    bool uses_attention() const { return variant != Variant::tetcnn_only; }
};

struct TrainConfig {
    double lr = 1e-4;
    double weight_decay = 1e-4;
    int epochs = 500;
    int micro_batch = 2;
    int accumulation_steps = 1;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(lr >= 0.0) || !(weight_decay >= 0.0)) throw DataError("train config: rates must be non-negative");
        if (epochs < 1 || micro_batch < 1 || accumulation_steps < 1) throw DataError("train config: counts must be positive");
    }
};

struct MeshSample {
    std::string id;
    TetMesh mesh;  ///< normalized
    LboBundle lbo;
    LandmarkSet landmarks;
    PatchAssignment patches;
    int label = 0;
    std::optional<double> biomarker;

    void validate() const {
        const std::size_t n = mesh.n_vertices();
        if (static_cast<std::size_t>(lbo.scaled_laplacian.rows()) != n || lbo.lumped_mass.size() != n ||
            patches.labels.size() != n || patches.n_patches != static_cast<int>(landmarks.size()) ||
            patches.centers.size() != landmarks.size()) {
            throw DataError("sample '" + id + "': component sizes are inconsistent");
        }
        if (label != 0 && label != 1) throw DataError("sample '" + id + "': label must be 0 or 1");
    }
};

/// Mesh -> operators -> landmarks -> patches for one sample.
struct PrepOptions {
    LboOptions lbo{};
    LandmarkMethod method = LandmarkMethod::gp_diffusion;
    DiffusionKernelSpec kernel{};
    int n_landmarks = 64;
    EigenOptions eigen{};
    std::uint64_t seed = 0;
};

inline LandmarkSet select_landmarks(const TetMesh& mesh, const LboBundle& lbo, const PrepOptions& opt) {
    LandmarkSet set;
    if (opt.method == LandmarkMethod::fps) {
        set = fps_select(mesh.vertices, opt.n_landmarks, opt.seed);
    } else {
        const int m = std::min<int>(opt.kernel.n_eigenpairs, static_cast<int>(mesh.n_vertices()));
        const Eigenpairs pairs = truncated_eigenpairs(symmetric_laplacian(lbo), m, opt.eigen);
        set = gp_greedy_select(mesh, pairs, opt.kernel, opt.n_landmarks);
    }
    set.seed = opt.seed;
    return set;
}

inline MeshSample prepare_sample(std::string id, const TetMesh& normalized_mesh, int label, std::optional<double> biomarker,
                                 const PrepOptions& opt) {
    MeshSample s;
    s.id = std::move(id);
    s.mesh = normalized_mesh;
    s.lbo = build_lbo(s.mesh, opt.lbo);
    s.landmarks = select_landmarks(s.mesh, s.lbo, opt);
    s.patches = assign_patches(s.mesh.vertices, s.landmarks);
    s.label = label;
    s.biomarker = biomarker;
    return s;
}

/// Trainable parameters plus the biomarker z-score statistics of the training split.
struct ModelParams {
    nn::ParamSet params;
    double biomarker_mean = 0.0;
    double biomarker_std = 1.0;

    ModelParams clone() const { return {params.clone(), biomarker_mean, biomarker_std}; }
};

inline ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(derive_seed(seed, 0x1417));
    ModelParams mp;
    auto& ps = mp.params;
    const int d = cfg.hidden_dim;
    if (cfg.uses_conv()) {
        nn::Linear::create(ps, "input", 3, d, rng);
        for (int l = 0; l < cfg.n_tetcnn_layers; ++l) {
            nn::ChebConvParams::create(ps, "cheb" + std::to_string(l), d, d, cfg.cheb_order, rng);
        }
    } else {
        nn::Linear::create(ps, "project", 3, d, rng);
    }
    if (cfg.uses_attention()) {
        for (int l = 0; l < cfg.n_transformer_layers; ++l) nn::AttentionParams::create(ps, "attn" + std::to_string(l), d, rng);
    }
    nn::Linear::create(ps, "head", d, 1, rng);
    if (cfg.fuse_biomarker) ps.add("head.biomarker", nn::zero_parameter(1, 1));
    return mp;
}

/// Per-sample constants reused by every forward pass.
struct PreparedSample {
    const MeshSample* sample = nullptr;
    std::shared_ptr<const nn::SparseOperator> laplacian;
    nn::Tensor coords;
    std::shared_ptr<const std::vector<int>> patch_labels;
    nn::TokenGraph graph;
};

inline PreparedSample prepare_for_model(const MeshSample& s, const ModelConfig& cfg) {
    s.validate();
    PreparedSample p;
    p.sample = &s;
    p.laplacian = std::make_shared<const nn::SparseOperator>(s.lbo.scaled_laplacian);
    std::vector<double> xyz;
    xyz.reserve(3 * s.mesh.n_vertices());
    for (const Vec3& v : s.mesh.vertices) xyz.insert(xyz.end(), v.begin(), v.end());
    p.coords = nn::Tensor::constant(static_cast<int>(s.mesh.n_vertices()), 3, std::move(xyz));
    p.patch_labels = std::make_shared<const std::vector<int>>(s.patches.labels);
    p.graph = nn::TokenGraph::build(s.patches.centers, build_radius_graph(s.patches.centers, cfg.radius));
    return p;
}

struct ForwardResult {
    nn::Tensor logit;        ///< 1 x 1, pre-sigmoid
    nn::Tensor feature_map;  ///< last Chebyshev layer activation (N x d); undefined for LE
    nn::Tensor tokens;       ///< token embeddings after attention
};

inline ForwardResult forward(const PreparedSample& ps, const ModelParams& mp, const ModelConfig& cfg) {
    const nn::ParamSet& params = mp.params;
    ForwardResult out;
    nn::Tensor tokens;
    const int n_patches = ps.sample->patches.n_patches;
    if (cfg.uses_conv()) {
        nn::Tensor x = nn::pointwise_mlp_forward(ps.coords, nn::Linear::bind(params, "input"));
        for (int l = 0; l < cfg.n_tetcnn_layers; ++l) {
            const auto conv = nn::ChebConvParams::bind(params, "cheb" + std::to_string(l), cfg.cheb_order);
            x = nn::relu(nn::chebconv_forward(x, ps.laplacian, conv));
        }
        out.feature_map = x;
        tokens = nn::segment_mean(x, ps.patch_labels, n_patches);
    } else {
        tokens = nn::segment_mean(nn::Linear::bind(params, "project")(ps.coords), ps.patch_labels, n_patches);
    }
    if (cfg.uses_attention()) {
        for (int l = 0; l < cfg.n_transformer_layers; ++l) {
            tokens = nn::point_transformer_forward(tokens, ps.graph, nn::AttentionParams::bind(params, "attn" + std::to_string(l)),
                                                   cfg.attention);
        }
    }
    out.tokens = tokens;
    nn::Tensor logit = nn::Linear::bind(params, "head")(nn::global_mean_pool(tokens));
    if (cfg.fuse_biomarker) {
        if (!ps.sample->biomarker) throw DataError("sample '" + ps.sample->id + "' has no biomarker value");
        const double z = (*ps.sample->biomarker - mp.biomarker_mean) / mp.biomarker_std;
        logit = nn::add(logit, nn::scale(params.at("head.biomarker"), z));
    }
    out.logit = logit;
    return out;
}

inline ForwardResult forward(const MeshSample& s, const ModelParams& mp, const ModelConfig& cfg) {
    return forward(prepare_for_model(s, cfg), mp, cfg);
}

// ---------------------------------------------------------------------------
// Metrics

struct Metrics {
    long long tp = 0, tn = 0, fp = 0, fn = 0;
    std::optional<double> accuracy;
    std::optional<double> sensitivity;  ///< TP / (TP + FN)
    std::optional<double> specificity;  ///< TN / (TN + FP)

    long long total() const { return tp + tn + fp + fn; }

    static Metrics from_counts(long long tp, long long tn, long long fp, long long fn) {
        Metrics m{tp, tn, fp, fn, {}, {}, {}};
        if (m.total() > 0) m.accuracy = static_cast<double>(tp + tn) / static_cast<double>(m.total());
        if (tp + fn > 0) m.sensitivity = static_cast<double>(tp) / static_cast<double>(tp + fn);
        if (tn + fp > 0) m.specificity = static_cast<double>(tn) / static_cast<double>(tn + fp);
        return m;
    }

    static Metrics from_predictions(const std::vector<int>& labels, const std::vector<int>& predicted) {
        long long tp = 0, tn = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] == 1) (predicted[i] == 1 ? tp : fn)++;
            else (predicted[i] == 1 ? fp : tn)++;
        }
        return from_counts(tp, tn, fp, fn);
    }
};

struct Evaluation {
    Metrics metrics;
    std::vector<double> probabilities;  ///< aligned with the evaluated indices
    double mean_loss = 0.0;
};

inline Evaluation evaluate_prepared(const std::vector<PreparedSample>& prepared, const std::vector<int>& indices,
                                    const ModelParams& mp, const ModelConfig& cfg, double threshold = 0.5) {
    if (indices.empty()) throw DataError("evaluate: empty dataset");
    Evaluation ev;
    std::vector<int> labels, predicted;
    for (int i : indices) {
        const PreparedSample& ps = prepared[static_cast<std::size_t>(i)];
        const nn::Tensor logit = forward(ps, mp, cfg).logit;
        const double p = nn::sigmoid(logit.item());
        ev.mean_loss += nn::bce_with_logits(logit, ps.sample->label).item();
        ev.probabilities.push_back(p);
        labels.push_back(ps.sample->label);
        predicted.push_back(p >= threshold ? 1 : 0);
    }
    ev.mean_loss /= static_cast<double>(indices.size());
    ev.metrics = Metrics::from_predictions(labels, predicted);
    return ev;
}

inline Evaluation evaluate(const std::vector<MeshSample>& samples, const ModelParams& mp, const ModelConfig& cfg,
                           double threshold = 0.5) {
    std::vector<PreparedSample> prepared;
    prepared.reserve(samples.size());
    for (const auto& s : samples) prepared.push_back(prepare_for_model(s, cfg));
    std::vector<int> all(samples.size());
    std::iota(all.begin(), all.end(), 0);
    return evaluate_prepared(prepared, all, mp, cfg, threshold);
}

// ---------------------------------------------------------------------------
// Splitting and training

struct Split {
    std::vector<int> train, val, test;
};

/// Stratified 70/15/15 split (per class: val and test get round(0.15 n) each).
inline Split stratified_split(const std::vector<int>& labels, std::uint64_t seed, double val_frac = 0.15,
                              double test_frac = 0.15) {
    Split split;
    Rng rng(derive_seed(seed, 0x5b1));
    for (int cls = 0; cls <= 1; ++cls) {
        std::vector<int> members;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] == cls) members.push_back(static_cast<int>(i));
        }
        rng.shuffle(members.begin(), members.end());
        const auto n = static_cast<double>(members.size());
        const auto n_val = static_cast<std::size_t>(std::lround(val_frac * n));
        const auto n_test = static_cast<std::size_t>(std::lround(test_frac * n));
        for (std::size_t k = 0; k < members.size(); ++k) {
            if (k < n_test) split.test.push_back(members[k]);
            else if (k < n_test + n_val) split.val.push_back(members[k]);
            else split.train.push_back(members[k]);
        }
    }
    for (auto* v : {&split.train, &split.val, &split.test}) std::sort(v->begin(), v->end());
    return split;
}

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    std::optional<double> val_accuracy;
    std::optional<double> val_loss;
};

struct TrainResult {
    ModelParams params;  ///< best-validation checkpoint
    std::vector<EpochRecord> history;
    int best_epoch = 0;
};

inline TrainResult train(const std::vector<MeshSample>& samples, const Split& split, const ModelConfig& mcfg,
                         const TrainConfig& tcfg) {
    mcfg.validate();
    tcfg.validate();
    int per_class[2] = {0, 0};
    for (int i : split.train) ++per_class[samples.at(static_cast<std::size_t>(i)).label];
    if (per_class[0] < 2 || per_class[1] < 2) throw DataError("training split needs at least 2 samples per class");

    std::vector<PreparedSample> prepared;
    prepared.reserve(samples.size());
    for (const auto& s : samples) prepared.push_back(prepare_for_model(s, mcfg));

    ModelParams mp = init_params(mcfg, tcfg.seed);
    if (mcfg.fuse_biomarker) {
        double sum = 0.0, sq = 0.0;
        for (int i : split.train) {
            const auto& b = samples[static_cast<std::size_t>(i)].biomarker;
            if (!b) throw DataError("sample '" + samples[static_cast<std::size_t>(i)].id + "' has no biomarker value");
            sum += *b;
        }
        const double n = static_cast<double>(split.train.size());
        mp.biomarker_mean = sum / n;
        for (int i : split.train) sq += std::pow(*samples[static_cast<std::size_t>(i)].biomarker - mp.biomarker_mean, 2);
        mp.biomarker_std = std::sqrt(sq / n);
        if (!(mp.biomarker_std > 0.0)) mp.biomarker_std = 1.0;
    }

    const nn::AdamConfig adam{tcfg.lr, tcfg.weight_decay};
    nn::AdamState state;
    TrainResult result;
    result.params = mp.clone();
    double best_acc = -1.0, best_loss = std::numeric_limits<double>::infinity();
    const std::size_t step_size = static_cast<std::size_t>(tcfg.micro_batch) * static_cast<std::size_t>(tcfg.accumulation_steps);

    for (int epoch = 1; epoch <= tcfg.epochs; ++epoch) {
        std::vector<int> order = split.train;
        Rng rng(derive_seed(tcfg.seed, 0xe90c, static_cast<std::uint64_t>(epoch)));
        rng.shuffle(order.begin(), order.end());
        double loss_sum = 0.0;
        long long correct = 0;
        for (std::size_t start = 0; start < order.size(); start += step_size) {
            nn::GradientAccumulator acc(mp.params);
            const std::size_t stop = std::min(order.size(), start + step_size);
            for (std::size_t k = start; k < stop; ++k) {
                const PreparedSample& ps = prepared[static_cast<std::size_t>(order[k])];
                const nn::Tensor logit = forward(ps, mp, mcfg).logit;
                if (!std::isfinite(logit.item())) {
                    throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + ", sample '" + ps.sample->id + "'");
                }
                const nn::Tensor loss = nn::bce_with_logits(logit, ps.sample->label);
                loss_sum += loss.item();
                correct += ((logit.item() >= 0.0 ? 1 : 0) == ps.sample->label) ? 1 : 0;
                acc.add(loss);
            }
            acc.finalize();
            nn::adam_step(mp.params, state, adam);
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(order.size());
        rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
        bool better = false;
        if (!split.val.empty()) {
            const Evaluation ev = evaluate_prepared(prepared, split.val, mp, mcfg);
            rec.val_accuracy = ev.metrics.accuracy;
            rec.val_loss = ev.mean_loss;
            better = *ev.metrics.accuracy > best_acc || (*ev.metrics.accuracy == best_acc && ev.mean_loss < best_loss);
            if (better) {
                best_acc = *ev.metrics.accuracy;
                best_loss = ev.mean_loss;
            }
        } else {
            better = true;
        }
        if (better) {
            result.params = mp.clone();
            result.best_epoch = epoch;
        }
        result.history.push_back(rec);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Clinical labeling rules

enum class RiskStratum { low, medium, high };

inline std::string to_string(RiskStratum r) {
    switch (r) {
    case RiskStratum::low: return "low";
    case RiskStratum::medium: return "medium";
    case RiskStratum::high: return "high";
    }
    return "?";
}

inline RiskStratum risk_stratum_from_string(const std::string& s) {
    if (s == "low") return RiskStratum::low;
    if (s == "medium") return RiskStratum::medium;
    if (s == "high") return RiskStratum::high;
    throw DataError("unknown risk stratum '" + s + "'");
}

inline constexpr double kPtauLowCutoff = 1.53;
inline constexpr double kPtauHighCutoff = 2.602;
inline constexpr double kCentiloidPositive = 20.0;

/// pTau-217 two-cutoff rule: < 1.53 low, [1.53, 2.602] medium, > 2.602 high.
inline RiskStratum stratify_risk(double ptau217) {
    if (!std::isfinite(ptau217)) throw DataError("stratify_risk: non-finite biomarker");
    if (ptau217 < kPtauLowCutoff) return RiskStratum::low;
    if (ptau217 <= kPtauHighCutoff) return RiskStratum::medium;
    return RiskStratum::high;
}

/// Amyloid positivity: Centiloid strictly above 20.
inline int amyloid_label(double centiloid) {
    if (!std::isfinite(centiloid)) throw DataError("amyloid_label: non-finite Centiloid");
    return centiloid > kCentiloidPositive ? 1 : 0;
}

} // namespace letet
