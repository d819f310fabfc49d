#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "percept/autodiff.hpp"
#include "percept/errors.hpp"

namespace percept::ad {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Standard bias-corrected Adam. Parameters with no gradient buffer (never
// touched by a tape) are left unchanged.
class Adam {
public:
    explicit Adam(std::vector<Tensor*> params, AdamConfig cfg = {})
        : params_(std::move(params)), cfg_(cfg) {
        m_.reserve(params_.size());
        v_.reserve(params_.size());
        for (Tensor* p : params_) {
            m_.emplace_back(p->data.size(), 0.0);
            v_.emplace_back(p->data.size(), 0.0);
        }
    }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t pi = 0; pi < params_.size(); ++pi) {
            Tensor* p = params_[pi];
            if (p->grad.size() != p->data.size()) continue;
            for (std::size_t i = 0; i < p->data.size(); ++i) {
                const double g = p->grad[i];
                m_[pi][i] = cfg_.beta1 * m_[pi][i] + (1.0 - cfg_.beta1) * g;
                v_[pi][i] = cfg_.beta2 * v_[pi][i] + (1.0 - cfg_.beta2) * g * g;
                const double mhat = m_[pi][i] / bc1;
                const double vhat = v_[pi][i] / bc2;
                p->data[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
    }

    std::int64_t steps() const { return t_; }

private:
    std::vector<Tensor*> params_;
    AdamConfig cfg_;
    std::vector<std::vector<double>> m_, v_;
    std::int64_t t_ = 0;
};

}  // namespace percept::ad
