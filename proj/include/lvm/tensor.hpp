#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "lvm/errors.hpp"

namespace lvm {

// Dense row-major array with optional gradient buffer. Handles share storage;
// copying a TensorT aliases the same data, matching the tape's view of it.
// S is float for training and double for finite-difference gradient checks.
template <class S>
struct TensorT {
    std::vector<int> shape;
    std::shared_ptr<std::vector<S>> data;
    std::shared_ptr<std::vector<S>> grad;
    bool requires_grad = false;

    TensorT() = default;

    explicit TensorT(std::vector<int> shp, bool rg = false) : shape(std::move(shp)), requires_grad(rg) {
        data = std::make_shared<std::vector<S>>(static_cast<size_t>(count(shape)), S(0));
        if (requires_grad) {
            grad = std::make_shared<std::vector<S>>(data->size(), S(0));
        }
    }

    static int64_t count(const std::vector<int>& shp) {
        int64_t n = 1;
        for (int d : shp) {
            if (d <= 0) {
                throw DimensionError("tensor extent must be positive, got " + std::to_string(d));
            }
            n *= d;
        }
        return n;
    }

    int64_t numel() const { return data ? static_cast<int64_t>(data->size()) : 0; }
    S* ptr() { return data->data(); }
    const S* ptr() const { return data->data(); }
    S* gptr() { return grad->data(); }
    const S* gptr() const { return grad->data(); }

    void ensure_grad() {
        if (!grad) {
            grad = std::make_shared<std::vector<S>>(data->size(), S(0));
        }
    }

    void zero_grad() {
        if (grad) {
            std::fill(grad->begin(), grad->end(), S(0));
        }
    }

    bool defined() const { return static_cast<bool>(data); }
};

using Tensor = TensorT<float>;

inline std::string shape_str(const std::vector<int>& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        out += std::to_string(s[i]);
        if (i + 1 < s.size()) {
            out += "x";
        }
    }
    return out + "]";
}

// Ordered record of executed differentiable operations. backward() visits the
// entries in reverse execution order exactly once, then clears the record.
template <class S>
class TapeT {
public:
    void record(std::function<void()> fn) { entries_.push_back(std::move(fn)); }

    size_t size() const { return entries_.size(); }

    void backward(TensorT<S>& loss) {
        if (loss.numel() != 1) {
            throw DimensionError("backward expects a scalar loss, got " + shape_str(loss.shape));
        }
        loss.ensure_grad();
        (*loss.grad)[0] = S(1);
        for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
            (*it)();
        }
        entries_.clear();
    }

    void clear() { entries_.clear(); }

private:
    std::vector<std::function<void()>> entries_;
};

using Tape = TapeT<float>;

namespace kernels {

// Row kernels shared by the batched training path and the incremental
// decoding path. They are noinline so both call sites run the exact same
// machine code; this is what makes cached decoding bit-identical to a full
// re-forward (same accumulation order, same contraction choices).

// Reductions accumulate in eight fixed lanes so the loop vectorizes without
// relaxed floating-point semantics; the bracketing is part of the contract.
template <class S>
inline S dot_lanes(const S* a, const S* b, int n) {
    S lane[8] = {S(0), S(0), S(0), S(0), S(0), S(0), S(0), S(0)};
    int i = 0;
    for (; i + 8 <= n; i += 8) {
        for (int l = 0; l < 8; ++l) {
            lane[l] += a[i + l] * b[i + l];
        }
    }
    S acc = ((lane[0] + lane[1]) + (lane[2] + lane[3])) +
            ((lane[4] + lane[5]) + (lane[6] + lane[7]));
    for (; i < n; ++i) {
        acc += a[i] * b[i];
    }
    return acc;
}

template <class S>
[[gnu::noinline]] S dot(const S* a, const S* b, int n) {
    return dot_lanes(a, b, n);
}

// out[j] += x[k] * w[k*out_dim + j], k ascending. Caller zeroes out.
template <class S>
[[gnu::noinline]] void vec_mat(S* out, const S* x, const S* w, int in_dim, int out_dim) {
    for (int k = 0; k < in_dim; ++k) {
        const S a = x[k];
        const S* row = w + static_cast<size_t>(k) * out_dim;
        for (int j = 0; j < out_dim; ++j) {
            out[j] += a * row[j];
        }
    }
}

template <class S>
[[gnu::noinline]] void axpy(S* out, S a, const S* x, int n) {
    for (int i = 0; i < n; ++i) {
        out[i] += a * x[i];
    }
}

// In-place softmax over row[0..n): stable; exp, sum and scale run as separate
// vectorizable passes with lane-bracketed summation.
template <class S>
[[gnu::noinline]] void softmax_inplace(S* row, int n) {
    S mx = row[0];
    for (int i = 1; i < n; ++i) {
        if (row[i] > mx) {
            mx = row[i];
        }
    }
    for (int i = 0; i < n; ++i) {
        row[i] = std::exp(row[i] - mx);
    }
    S lane[8] = {S(0), S(0), S(0), S(0), S(0), S(0), S(0), S(0)};
    int i = 0;
    for (; i + 8 <= n; i += 8) {
        for (int l = 0; l < 8; ++l) {
            lane[l] += row[i + l];
        }
    }
    S sum = ((lane[0] + lane[1]) + (lane[2] + lane[3])) +
            ((lane[4] + lane[5]) + (lane[6] + lane[7]));
    for (; i < n; ++i) {
        sum += row[i];
    }
    const S inv = S(1) / sum;
    for (int j = 0; j < n; ++j) {
        row[j] *= inv;
    }
}

// y[i] = x[i] * w[i] / sqrt(mean(x^2) + eps)
template <class S>
[[gnu::noinline]] void rms_apply(S* out, const S* x, const S* w, int n, S eps) {
    S ms = S(0);
    for (int i = 0; i < n; ++i) {
        ms += x[i] * x[i];
    }
    ms = ms / static_cast<S>(n);
    const S inv = S(1) / std::sqrt(ms + eps);
    for (int i = 0; i < n; ++i) {
        out[i] = x[i] * w[i] * inv;
    }
}

// Rotate (even, odd) channel pairs of each head by position-dependent angles.
template <class S>
[[gnu::noinline]] void rope_apply_row(S* x, int n_heads, int head_dim, int64_t pos, double base) {
    for (int h = 0; h < n_heads; ++h) {
        S* v = x + static_cast<size_t>(h) * head_dim;
        for (int i = 0; i + 1 < head_dim; i += 2) {
            const double freq = std::pow(base, -static_cast<double>(i) / head_dim);
            const double ang = static_cast<double>(pos) * freq;
            const S c = static_cast<S>(std::cos(ang));
            const S s = static_cast<S>(std::sin(ang));
            const S v0 = v[i];
            const S v1 = v[i + 1];
            v[i] = v0 * c - v1 * s;
            v[i + 1] = v0 * s + v1 * c;
        }
    }
}

template <class S>
[[gnu::noinline]] void silu_row(S* out, const S* x, int n) {
    for (int i = 0; i < n; ++i) {
        const S v = x[i];
        out[i] = v / (S(1) + std::exp(-v));
    }
}

template <class S>
[[gnu::noinline]] void mul_rows(S* out, const S* a, const S* b, int n) {
    for (int i = 0; i < n; ++i) {
        out[i] = a[i] * b[i];
    }
}

template <class S>
[[gnu::noinline]] void add_rows(S* out, const S* a, const S* b, int n) {
    for (int i = 0; i < n; ++i) {
        out[i] = a[i] + b[i];
    }
}

// Lowest index wins ties.
template <class S>
[[gnu::noinline]] int argmax_row(const S* row, int n) {
    int best = 0;
    for (int i = 1; i < n; ++i) {
        if (row[i] > row[best]) {
            best = i;
        }
    }
    return best;
}

// One causal attention score row: out[j] = (q . k_j) * inv for j < count,
// with k_j = k_base + j * row_stride. Covers a whole key prefix per call so
// the training path and the cached decode path share one code body.
template <class S>
[[gnu::noinline]] void attn_score_row(S* out, const S* q, const S* k_base, size_t row_stride,
                                      int count, int hd, S inv) {
    if (hd == 16) {
        // every desk preset uses head_dim 16; the fixed trip count unrolls
        for (int j = 0; j < count; ++j) {
            out[j] = dot_lanes(q, k_base + static_cast<size_t>(j) * row_stride, 16) * inv;
        }
        return;
    }
    for (int j = 0; j < count; ++j) {
        out[j] = dot_lanes(q, k_base + static_cast<size_t>(j) * row_stride, hd) * inv;
    }
}

// One attention mix row: out += sum_j probs[j] * v_j, j ascending.
template <class S>
[[gnu::noinline]] void attn_mix_row(S* out, const S* probs, const S* v_base, size_t row_stride,
                                    int count, int hd) {
    if (hd == 16) {
        for (int j = 0; j < count; ++j) {
            const S p = probs[j];
            const S* vj = v_base + static_cast<size_t>(j) * row_stride;
            for (int d = 0; d < 16; ++d) {
                out[d] += p * vj[d];
            }
        }
        return;
    }
    for (int j = 0; j < count; ++j) {
        const S p = probs[j];
        const S* vj = v_base + static_cast<size_t>(j) * row_stride;
        for (int d = 0; d < hd; ++d) {
            out[d] += p * vj[d];
        }
    }
}

} // namespace kernels

} // namespace lvm
