#pragma once

// Central finite-difference oracle for the differentiable primitives. Lives in
// test code only; it never touches the backward implementations it checks.

#include <cmath>
#include <functional>
#include <vector>

#include "lvm/rng.hpp"
#include "lvm/tensor.hpp"

namespace gradcheck {

using DTensor = lvm::TensorT<double>;
using DTape = lvm::TapeT<double>;

inline DTensor random_tensor(std::vector<int> shape, lvm::Rng& rng, double scale = 1.0,
                             bool requires_grad = true) {
    DTensor t(std::move(shape), requires_grad);
    for (int64_t i = 0; i < t.numel(); ++i) {
        t.ptr()[i] = rng.next_normal() * scale;
    }
    return t;
}

// Runs fn twice per perturbed element; fn must rebuild its graph from the
// given inputs each call and return a scalar.
inline double max_rel_err(std::vector<DTensor>& inputs,
                          const std::function<DTensor(DTape*)>& fn, double h = 1e-5) {
    for (auto& in : inputs) {
        in.zero_grad();
    }
    DTape tape;
    DTensor loss = fn(&tape);
    tape.backward(loss);

    double worst = 0.0;
    for (auto& in : inputs) {
        if (!in.requires_grad) {
            continue;
        }
        for (int64_t i = 0; i < in.numel(); ++i) {
            const double orig = in.ptr()[i];
            in.ptr()[i] = orig + h;
            const double fp = fn(nullptr).ptr()[0];
            in.ptr()[i] = orig - h;
            const double fm = fn(nullptr).ptr()[0];
            in.ptr()[i] = orig;
            const double fd = (fp - fm) / (2.0 * h);
            const double an = in.gptr()[i];
            const double denom = std::max({std::fabs(fd), std::fabs(an), 1e-6});
            const double rel = std::fabs(fd - an) / denom;
            if (rel > worst) {
                worst = rel;
            }
        }
    }
    return worst;
}

} // namespace gradcheck
