#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "fwrd/autodiff.hpp"

namespace fwrd {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class NonFiniteGradient : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Adam with bias correction over a fixed parameter list.
template <class T>
class Adam {
public:
    Adam(std::vector<Var<T>> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
        for (const auto& p : params_) {
            m_.emplace_back(p.shape());
            v_.emplace_back(p.shape());
        }
    }

    /// Applies one update from the accumulated gradients. Parameters without a
    /// gradient are treated as having a zero gradient.
    void step() {
        for (std::size_t i = 0; i < params_.size(); ++i) {
            if (params_[i].has_grad() && !params_[i].grad().all_finite())
                throw NonFiniteGradient("non-finite gradient in parameter '" + params_[i].name() + "'");
        }
        ++step_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
        const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
        for (std::size_t i = 0; i < params_.size(); ++i) {
            Tensor<T>& w = params_[i].mutable_value();
            const bool has = params_[i].has_grad();
            T* m = m_[i].data();
            T* v = v_[i].data();
            for (std::size_t j = 0; j < w.numel(); ++j) {
                const T g = has ? params_[i].grad()[j] : T(0);
                m[j] = b1 * m[j] + (T(1) - b1) * g;
                v[j] = b2 * v[j] + (T(1) - b2) * g * g;
                const double mhat = static_cast<double>(m[j]) / bc1;
                const double vhat = static_cast<double>(v[j]) / bc2;
                w[j] -= static_cast<T>(cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
            }
        }
    }

    void zero_grad() {
        for (auto& p : params_) p.zero_grad();
    }

    std::uint64_t steps() const { return step_; }
    const AdamConfig& config() const { return cfg_; }
    const Tensor<T>& first_moment(std::size_t i) const { return m_[i]; }
    const Tensor<T>& second_moment(std::size_t i) const { return v_[i]; }

private:
    std::vector<Var<T>> params_;
    AdamConfig cfg_;
    std::vector<Tensor<T>> m_, v_;
    std::uint64_t step_ = 0;
};

}  // namespace fwrd
