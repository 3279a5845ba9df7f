#pragma once

#include <cmath>
#include <cstddef>
#include <set>
#include <string>
#include <vector>

#include "letet/error.hpp"
#include "letet/nn/params.hpp"

namespace letet::nn {

struct AdamConfig {
    double lr = 1e-4;
    double weight_decay = 1e-4;  ///< coupled: added to the gradient as wd * theta
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<std::vector<double>> first;
    std::vector<std::vector<double>> second;
    long long step = 0;
};

/// One bias-corrected Adam update from the gradients currently held by `params`.
inline void adam_step(ParamSet& params, AdamState& state, const AdamConfig& cfg) {
    if (state.first.empty()) {
        for (auto& [name, t] : params) {
            state.first.emplace_back(t.size(), 0.0);
            state.second.emplace_back(t.size(), 0.0);
        }
    }
    if (state.first.size() != params.size()) throw DataError("optimizer state does not match parameters");
    // Validate before mutating anything.
    for (auto& [name, t] : params) {
        for (double g : t.grad()) {
            if (!std::isfinite(g)) throw NumericalError("non-finite gradient in parameter '" + name + "'");
        }
    }
    ++state.step;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    std::size_t k = 0;
    for (auto& [name, t] : params) {
        auto w = t.data();
        auto g = t.grad();
        auto& m = state.first[k];
        auto& v = state.second[k];
        if (m.size() != w.size()) throw DataError("optimizer state shape mismatch for '" + name + "'");
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double gi = g[i] + cfg.weight_decay * w[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
            w[i] -= cfg.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.eps);
        }
        ++k;
    }
}

/// Sums per-sample gradients over micro-batches, then averages over the
/// total sample count before a single optimizer step.
class GradientAccumulator {
public:
    explicit GradientAccumulator(ParamSet& params) : params_(params) {
        for (const auto& [name, t] : params_) members_.insert(t.node_ptr().get());
        params_.zero_grad();
    }

    /// Backpropagates one sample loss into the parameter gradients.
    void add(const Tensor& loss) {
        for (const Tensor& leaf : loss.backward()) {
            if (!members_.count(leaf.node_ptr().get())) {
                throw DataError("loss depends on a trainable tensor outside the parameter set");
            }
        }
        ++samples_;
    }

    std::size_t samples() const { return samples_; }

    /// Divides accumulated gradients by the sample count; returns that count.
    std::size_t finalize() {
        if (samples_ == 0) return 0;
        const double inv = 1.0 / static_cast<double>(samples_);
        for (auto& [name, t] : params_) {
            for (double& g : t.mutable_grad()) g *= inv;
        }
        return samples_;
    }

private:
    ParamSet& params_;
    std::set<const Node*> members_;
    std::size_t samples_ = 0;
};

} // namespace letet::nn
