#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lvm/errors.hpp"

namespace lvm {

struct OptimizerConfig {
    double base_lr = 1.5e-4;
    double final_lr = 1.5e-5;
    int warmup_steps = 2000;
    int decay_steps = 144000;
    double weight_decay = 0.1;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-8;

    void validate() const {
        if (final_lr < 0 || final_lr > base_lr) {
            throw ConfigError("optimizer: need 0 <= final_lr <= base_lr");
        }
        if (warmup_steps < 0 || decay_steps < 0) {
            throw ConfigError("optimizer: warmup/decay steps must be >= 0");
        }
        if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) {
            throw ConfigError("optimizer: betas must lie in [0,1)");
        }
    }
};

// Linear ramp 0 -> base_lr over warmup_steps, cosine base_lr -> final_lr over
// decay_steps, constant final_lr afterwards. Continuous at the boundary.
inline double lr_at(int step, const OptimizerConfig& cfg) {
    if (step < 0) {
        throw ConfigError("lr_at: step must be >= 0");
    }
    if (cfg.warmup_steps > 0 && step < cfg.warmup_steps) {
        return cfg.base_lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
    }
    const int t = step - cfg.warmup_steps;
    if (cfg.decay_steps > 0 && t < cfg.decay_steps) {
        const double frac = static_cast<double>(t) / static_cast<double>(cfg.decay_steps);
        return cfg.final_lr +
               0.5 * (cfg.base_lr - cfg.final_lr) * (1.0 + std::cos(3.14159265358979323846 * frac));
    }
    return cfg.final_lr;
}

template <class S>
struct AdamStateT {
    std::vector<S> m;
    std::vector<S> v;

    void init(size_t n) {
        m.assign(n, S(0));
        v.assign(n, S(0));
    }
};

// One decoupled-weight-decay Adam step on a single parameter tensor. Decay is
// applied to the parameter itself, never to the gradient; moments are
// bias-corrected. `step` counts from 1.
template <class S>
void adamw_step(S* param, const S* grad, size_t n, AdamStateT<S>& state,
                const OptimizerConfig& cfg, int step, double lr, const std::string& name) {
    if (state.m.size() != n || state.v.size() != n) {
        throw DimensionError("adamw_step: state size mismatch for " + name);
    }
    if (step < 1) {
        throw ConfigError("adamw_step: step must be >= 1");
    }
    for (size_t i = 0; i < n; ++i) {
        if (!std::isfinite(static_cast<double>(grad[i]))) {
            throw TrainingError("non-finite gradient in parameter '" + name + "'");
        }
    }
    const double b1 = cfg.beta1, b2 = cfg.beta2;
    const double bc1 = 1.0 - std::pow(b1, step);
    const double bc2 = 1.0 - std::pow(b2, step);
    const S decay_mult = static_cast<S>(1.0 - lr * cfg.weight_decay);
    for (size_t i = 0; i < n; ++i) {
        const double g = static_cast<double>(grad[i]);
        const double m = b1 * static_cast<double>(state.m[i]) + (1.0 - b1) * g;
        const double v = b2 * static_cast<double>(state.v[i]) + (1.0 - b2) * g * g;
        state.m[i] = static_cast<S>(m);
        state.v[i] = static_cast<S>(v);
        const double mhat = m / bc1;
        const double vhat = v / bc2;
        param[i] = param[i] * decay_mult -
                   static_cast<S>(lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
}

} // namespace lvm
