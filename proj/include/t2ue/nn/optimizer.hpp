#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "t2ue/nn/layers.hpp"

namespace t2ue {

enum class OptKind { adam, sgd };
enum class LrSchedule { cosine, constant };

template <typename S>
struct OptimConfig {
    OptKind kind = OptKind::adam;
    S lr = S(1e-3);
    S weight_decay = S(0);
    S beta1 = S(0.9);
    S beta2 = S(0.999);
    S adam_eps = S(1e-8);
    S momentum = S(0.9);
    LrSchedule schedule = LrSchedule::cosine;
};

inline double cosine_lr(double base, int64_t step, int64_t total_steps) {
    if (total_steps <= 1) return base;
    double t = static_cast<double>(step) / static_cast<double>(total_steps);
    if (t > 1.0) t = 1.0;
    return base * 0.5 * (1.0 + std::cos(3.14159265358979323846 * t));
}

/// Adam with decoupled weight decay, or SGD with momentum and coupled decay.
template <typename S>
class Optimizer {
public:
    Optimizer(std::vector<Param<S>*> params, OptimConfig<S> cfg, int64_t total_steps)
        : params_(std::move(params)), cfg_(cfg), total_steps_(total_steps) {
        for (auto* p : params_) {
            state1_.push_back(Tensor<S>::zeros(p->value.shape));
            if (cfg_.kind == OptKind::adam) state2_.push_back(Tensor<S>::zeros(p->value.shape));
        }
    }

    const std::vector<Param<S>*>& params() const { return params_; }

    double current_lr() const {
        return cfg_.schedule == LrSchedule::cosine ? cosine_lr(cfg_.lr, t_, total_steps_) : cfg_.lr;
    }

    void step(const std::vector<Tensor<S>>& grads) {
        if (grads.size() != params_.size()) throw std::invalid_argument("optimizer: grad count mismatch");
        const S lr = static_cast<S>(current_lr());
        ++t_;
        for (size_t i = 0; i < params_.size(); ++i) {
            auto& p = params_[i]->value.data;
            const auto& g = grads[i].data;
            if (g.size() != p.size()) throw std::invalid_argument("optimizer: grad shape mismatch");
            if (cfg_.kind == OptKind::adam) {
                auto& m = state1_[i].data;
                auto& v = state2_[i].data;
                m = cfg_.beta1 * m + (S(1) - cfg_.beta1) * g;
                v = cfg_.beta2 * v + (S(1) - cfg_.beta2) * g * g;
                const S bc1 = S(1) - static_cast<S>(std::pow(static_cast<double>(cfg_.beta1), static_cast<double>(t_)));
                const S bc2 = S(1) - static_cast<S>(std::pow(static_cast<double>(cfg_.beta2), static_cast<double>(t_)));
                p -= lr * ((m / bc1) / ((v / bc2).sqrt() + cfg_.adam_eps));
                if (cfg_.weight_decay > S(0)) p -= lr * cfg_.weight_decay * p;
            } else {
                auto& buf = state1_[i].data;
                buf = cfg_.momentum * buf + g + cfg_.weight_decay * p;
                p -= lr * buf;
            }
        }
    }

private:
    std::vector<Param<S>*> params_;
    OptimConfig<S> cfg_;
    int64_t total_steps_;
    int64_t t_ = 0;
    std::vector<Tensor<S>> state1_;
    std::vector<Tensor<S>> state2_;
};

}  // namespace t2ue
