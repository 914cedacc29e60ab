#pragma once

#include <cmath>
#include <vector>

#include "sdavs/tensor.h"

namespace sdavs {

// Multi-step learning-rate schedule: lr0 * gamma^k where k counts milestones
// already passed; a step exactly at a milestone is decayed (boundary
// inclusive). Milestones and `step` share the caller's unit (epochs here).
inline double lr_multistep(double lr0, int64_t step, const std::vector<int64_t>& milestones,
                           double gamma) {
    int k = 0;
    for (int64_t m : milestones)
        if (step >= m) ++k;
    return lr0 * std::pow(gamma, k);
}

// AdamW with decoupled weight decay: decay is applied directly to the weights
// (w *= 1 - lr*wd) before the bias-corrected adaptive update, so it never
// enters the moment estimates.
template <typename S>
class AdamW {
  public:
    struct Hyper {
        double lr = 1e-3;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        double weight_decay = 1e-2;
    };

    AdamW(std::vector<Tensor<S>> params, Hyper hp) : params_(std::move(params)), hp_(hp) {
        m_.resize(params_.size());
        v_.resize(params_.size());
        for (size_t i = 0; i < params_.size(); ++i) {
            m_[i].assign(size_t(params_[i].size()), S(0));
            v_[i].assign(size_t(params_[i].size()), S(0));
        }
    }

    void set_lr(double lr) { hp_.lr = lr; }
    double lr() const { return hp_.lr; }
    int64_t step_count() const { return t_; }

    void zero_grad() {
        for (auto& p : params_) p.zero_grad();
    }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(hp_.beta1, double(t_));
        const double bc2 = 1.0 - std::pow(hp_.beta2, double(t_));
        for (size_t i = 0; i < params_.size(); ++i) {
            auto& p = params_[i];
            const auto& g = p.grad_ref();
            S* w = p.data();
            const int64_t n = p.size();
            S* m = m_[i].data();
            S* v = v_[i].data();
            const S decay = S(1.0 - hp_.lr * hp_.weight_decay);
            for (int64_t j = 0; j < n; ++j) {
                const S gj = g.empty() ? S(0) : g[size_t(j)];
                w[j] *= decay;
                m[j] = S(hp_.beta1) * m[j] + S(1.0 - hp_.beta1) * gj;
                v[j] = S(hp_.beta2) * v[j] + S(1.0 - hp_.beta2) * gj * gj;
                const S mhat = m[j] / S(bc1);
                const S vhat = v[j] / S(bc2);
                w[j] -= S(hp_.lr) * mhat / (std::sqrt(vhat) + S(hp_.eps));
            }
        }
    }

  private:
    std::vector<Tensor<S>> params_;
    Hyper hp_;
    std::vector<std::vector<S>> m_, v_;
    int64_t t_ = 0;
};

}  // namespace sdavs
