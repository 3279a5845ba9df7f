#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "letet/error.hpp"
#include "letet/nn/tensor.hpp"
#include "letet/random.hpp"

namespace letet::nn {

/// Named trainable tensors in insertion order.
class ParamSet {
public:
    Tensor& add(const std::string& name, Tensor t) {
        if (index_.count(name)) throw DataError("duplicate parameter '" + name + "'");
        index_[name] = entries_.size();
        entries_.emplace_back(name, std::move(t));
        return entries_.back().second;
    }

    const Tensor& at(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw DataError("unknown parameter '" + name + "'");
        return entries_[it->second].second;
    }
    Tensor& at(const std::string& name) {
        return const_cast<Tensor&>(static_cast<const ParamSet&>(*this).at(name));
    }
    bool contains(const std::string& name) const { return index_.count(name) > 0; }

    std::size_t size() const { return entries_.size(); }
    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

    void zero_grad() {
        for (auto& [name, t] : entries_) t.zero_grad();
    }

    std::size_t count() const {
        std::size_t n = 0;
        for (const auto& [name, t] : entries_) n += t.size();
        return n;
    }

    /// Deep copy: fresh leaf tensors with copied values and no gradients.
    ParamSet clone() const {
        ParamSet out;
        for (const auto& [name, t] : entries_) {
            out.add(name, Tensor::parameter(t.rows(), t.cols(), std::vector<double>(t.data().begin(), t.data().end())));
        }
        return out;
    }

    /// Copies values from another set with identical names and shapes.
    void assign(const ParamSet& other) {
        for (auto& [name, t] : entries_) {
            const Tensor& src = other.at(name);
            if (src.rows() != t.rows() || src.cols() != t.cols()) throw DataError("shape mismatch for '" + name + "'");
            std::copy(src.data().begin(), src.data().end(), t.data().begin());
        }
    }

private:
    std::vector<std::pair<std::string, Tensor>> entries_;
    std::map<std::string, std::size_t> index_;
};

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
inline Tensor glorot_uniform(int fan_in, int fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::vector<double> w(static_cast<std::size_t>(fan_in) * fan_out);
    for (double& v : w) v = rng.uniform(-bound, bound);
    return Tensor::parameter(fan_in, fan_out, std::move(w));
}

inline Tensor zero_parameter(int rows, int cols) {
    return Tensor::parameter(rows, cols, std::vector<double>(static_cast<std::size_t>(rows) * cols, 0.0));
}

} // namespace letet::nn
