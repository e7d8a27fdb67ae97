#pragma once

#include <cstring>
#include <vector>

#include "lvm/tensor.hpp"

namespace lvm::ops {

// Differentiable primitives over TensorT<S>. Each op computes its forward
// value eagerly and, when a tape is supplied and an input requires gradients,
// records one backward closure. Passing tape == nullptr runs inference-only.

namespace detail {

template <class S>
bool track(TapeT<S>* tape, const TensorT<S>& t) {
    return tape != nullptr && t.requires_grad;
}

template <class S>
bool track2(TapeT<S>* tape, const TensorT<S>& a, const TensorT<S>& b) {
    return tape != nullptr && (a.requires_grad || b.requires_grad);
}

} // namespace detail

template <class S>
TensorT<S> matmul(TapeT<S>* tape, const TensorT<S>& a, const TensorT<S>& b) {
    if (a.shape.size() != 2 || b.shape.size() != 2 || a.shape[1] != b.shape[0]) {
        throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape) + " and " +
                             shape_str(b.shape));
    }
    const int m = a.shape[0], k = a.shape[1], n = b.shape[1];
    TensorT<S> out({m, n});
    for (int i = 0; i < m; ++i) {
        kernels::vec_mat(out.ptr() + static_cast<size_t>(i) * n,
                         a.ptr() + static_cast<size_t>(i) * k, b.ptr(), k, n);
    }
    if (detail::track2(tape, a, b)) {
        out.requires_grad = true;
        out.ensure_grad();
        TensorT<S> ac = a, bc = b, oc = out;
        tape->record([ac, bc, oc, m, k, n]() mutable {
            const S* g = oc.gptr();
            if (ac.requires_grad) {
                ac.ensure_grad();
                S* da = ac.gptr();
                for (int i = 0; i < m; ++i) {
                    const S* grow = g + static_cast<size_t>(i) * n;
                    for (int p = 0; p < k; ++p) {
                        da[static_cast<size_t>(i) * k + p] +=
                            kernels::dot(grow, bc.ptr() + static_cast<size_t>(p) * n, n);
                    }
                }
            }
            if (bc.requires_grad) {
                bc.ensure_grad();
                S* db = bc.gptr();
                for (int i = 0; i < m; ++i) {
                    const S* grow = g + static_cast<size_t>(i) * n;
                    const S* arow = ac.ptr() + static_cast<size_t>(i) * k;
                    for (int p = 0; p < k; ++p) {
                        kernels::axpy(db + static_cast<size_t>(p) * n, arow[p], grow, n);
                    }
                }
            }
        });
    }
    return out;
}

// 2D convolution, zero padding of (k-1)/2 on every side. Odd kernels only;
// with stride s dividing H and W this yields H' = H/s exactly.
template <class S>
TensorT<S> conv2d(TapeT<S>* tape, const TensorT<S>& x, const TensorT<S>& w, int stride) {
    if (x.shape.size() != 3 || w.shape.size() != 4) {
        throw DimensionError("conv2d: want x[C,H,W], w[Co,C,k,k], got " + shape_str(x.shape) +
                             " and " + shape_str(w.shape));
    }
    const int C = x.shape[0], H = x.shape[1], W = x.shape[2];
    const int Co = w.shape[0], Cw = w.shape[1], k = w.shape[2], k2 = w.shape[3];
    if (Cw != C || k != k2) {
        throw DimensionError("conv2d: kernel " + shape_str(w.shape) + " does not match input " +
                             shape_str(x.shape));
    }
    if (k % 2 == 0) {
        throw DimensionError("conv2d: kernel size must be odd, got " + std::to_string(k));
    }
    if (stride < 1) {
        throw DimensionError("conv2d: stride must be >= 1, got " + std::to_string(stride));
    }
    const int pad = (k - 1) / 2;
    if (k > H || k > W) {
        throw DimensionError("conv2d: kernel " + std::to_string(k) + " larger than padded input " +
                             shape_str(x.shape));
    }
    const int Ho = (H + 2 * pad - k) / stride + 1;
    const int Wo = (W + 2 * pad - k) / stride + 1;
    const int Hp = H + 2 * pad, Wp = W + 2 * pad;
    TensorT<S> out({Co, Ho, Wo});

    // zero-padded input copy keeps the inner loops branch-free
    std::vector<S> xpad(static_cast<size_t>(C) * Hp * Wp, S(0));
    for (int ci = 0; ci < C; ++ci) {
        for (int y = 0; y < H; ++y) {
            std::memcpy(xpad.data() + (static_cast<size_t>(ci) * Hp + y + pad) * Wp + pad,
                        x.ptr() + (static_cast<size_t>(ci) * H + y) * W, sizeof(S) * W);
        }
    }

    const S* wp = w.ptr();
    for (int co = 0; co < Co; ++co) {
        S* ochan = out.ptr() + static_cast<size_t>(co) * Ho * Wo;
        for (int ci = 0; ci < C; ++ci) {
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    const S wv = wp[((static_cast<size_t>(co) * C + ci) * k + ky) * k + kx];
                    const S* base = xpad.data() + static_cast<size_t>(ci) * Hp * Wp +
                                    static_cast<size_t>(ky) * Wp + kx;
                    for (int oy = 0; oy < Ho; ++oy) {
                        const S* in_row = base + static_cast<size_t>(oy) * stride * Wp;
                        S* out_row = ochan + static_cast<size_t>(oy) * Wo;
                        if (stride == 1) {
                            for (int ox = 0; ox < Wo; ++ox) {
                                out_row[ox] += wv * in_row[ox];
                            }
                        } else {
                            for (int ox = 0; ox < Wo; ++ox) {
                                out_row[ox] += wv * in_row[static_cast<size_t>(ox) * stride];
                            }
                        }
                    }
                }
            }
        }
    }

    if (detail::track2(tape, x, w)) {
        out.requires_grad = true;
        out.ensure_grad();
        TensorT<S> xc = x, wc = w, oc = out;
        tape->record([xc, wc, oc, C, H, W, Co, Ho, Wo, Hp, Wp, k, pad, stride]() mutable {
            const S* g = oc.gptr();
            const bool dx = xc.requires_grad;
            const bool dw = wc.requires_grad;
            if (dx) {
                xc.ensure_grad();
            }
            if (dw) {
                wc.ensure_grad();
            }
            // rebuild the padded input (cheap relative to the arithmetic)
            std::vector<S> xpad(static_cast<size_t>(C) * Hp * Wp, S(0));
            for (int ci = 0; ci < C; ++ci) {
                for (int y = 0; y < H; ++y) {
                    std::memcpy(xpad.data() + (static_cast<size_t>(ci) * Hp + y + pad) * Wp + pad,
                                xc.ptr() + (static_cast<size_t>(ci) * H + y) * W, sizeof(S) * W);
                }
            }
            std::vector<S> dxpad;
            if (dx) {
                dxpad.assign(static_cast<size_t>(C) * Hp * Wp, S(0));
            }
            for (int co = 0; co < Co; ++co) {
                const S* gchan = g + static_cast<size_t>(co) * Ho * Wo;
                for (int ci = 0; ci < C; ++ci) {
                    for (int ky = 0; ky < k; ++ky) {
                        for (int kx = 0; kx < k; ++kx) {
                            const size_t wi =
                                ((static_cast<size_t>(co) * C + ci) * k + ky) * k + kx;
                            const S wv = wc.ptr()[wi];
                            const size_t off = static_cast<size_t>(ci) * Hp * Wp +
                                               static_cast<size_t>(ky) * Wp + kx;
                            S wacc = S(0);
                            for (int oy = 0; oy < Ho; ++oy) {
                                const S* grow = gchan + static_cast<size_t>(oy) * Wo;
                                const size_t row = off + static_cast<size_t>(oy) * stride * Wp;
                                const S* in_row = xpad.data() + row;
                                S* dx_row = dx ? dxpad.data() + row : nullptr;
                                if (stride == 1) {
                                    for (int ox = 0; ox < Wo; ++ox) {
                                        wacc += grow[ox] * in_row[ox];
                                    }
                                    if (dx) {
                                        for (int ox = 0; ox < Wo; ++ox) {
                                            dx_row[ox] += wv * grow[ox];
                                        }
                                    }
                                } else {
                                    for (int ox = 0; ox < Wo; ++ox) {
                                        wacc += grow[ox] * in_row[static_cast<size_t>(ox) * stride];
                                    }
                                    if (dx) {
                                        for (int ox = 0; ox < Wo; ++ox) {
                                            dx_row[static_cast<size_t>(ox) * stride] +=
                                                wv * grow[ox];
                                        }
                                    }
                                }
                            }
                            if (dw) {
                                wc.gptr()[wi] += wacc;
                            }
                        }
                    }
                }
            }
            if (dx) {
                for (int ci = 0; ci < C; ++ci) {
                    for (int y = 0; y < H; ++y) {
                        const S* src =
                            dxpad.data() + (static_cast<size_t>(ci) * Hp + y + pad) * Wp + pad;
                        S* dst = xc.gptr() + (static_cast<size_t>(ci) * H + y) * W;
                        for (int xx = 0; xx < W; ++xx) {
                            dst[xx] += src[xx];
                        }
                    }
                }
            }
        });
    }
    return out;
}

template <class S>
TensorT<S> upsample2x(TapeT<S>* tape, const TensorT<S>& x) {
    if (x.shape.size() != 3) {
        throw DimensionError("upsample2x: want [C,H,W], got " + shape_str(x.shape));
    }
    const int C = x.shape[0], H = x.shape[1], W = x.shape[2];
    TensorT<S> out({C, 2 * H, 2 * W});
    for (int c = 0; c < C; ++c) {
        for (int y = 0; y < 2 * H; ++y) {
            for (int xx = 0; xx < 2 * W; ++xx) {
                out.ptr()[(static_cast<size_t>(c) * 2 * H + y) * 2 * W + xx] =
                    x.ptr()[(static_cast<size_t>(c) * H + y / 2) * W + xx / 2];
            }
        }
    }
    if (detail::track(tape, x)) {
        out.requires_grad = true;
        out.ensure_grad();
        TensorT<S> xc = x, oc = out;
        tape->record([xc, oc, C, H, W]() mutable {
            xc.ensure_grad();
            for (int c = 0; c < C; ++c) {
                for (int y = 0; y < 2 * H; ++y) {
                    for (int xx = 0; xx < 2 * W; ++xx) {
                        xc.gptr()[(static_cast<size_t>(c) * H + y / 2) * W + xx / 2] +=
                            oc.gptr()[(static_cast<size_t>(c) * 2 * H + y) * 2 * W + xx];
                    }
                }
            }
        });
    }
    return out;
}

template <class S>
TensorT<S> embedding_gather(TapeT<S>* tape, const TensorT<S>& table, const std::vector<int>& ids) {
    if (table.shape.size() != 2) {
        throw DimensionError("embedding_gather: want table[V,h], got " + shape_str(table.shape));
    }
    const int V = table.shape[0], h = table.shape[1];
    for (int id : ids) {
        if (id < 0 || id >= V) {
            throw InvalidTokenError("embedding_gather: id " + std::to_string(id) +
                                    " outside vocabulary of size " + std::to_string(V));
        }
    }
    const int T = static_cast<int>(ids.size());
    TensorT<S> out({T, h});
    for (int t = 0; t < T; ++t) {
        std::memcpy(out.ptr() + static_cast<size_t>(t) * h,
                    table.ptr() + static_cast<size_t>(ids[t]) * h, sizeof(S) * h);
    }
    if (detail::track(tape, table)) {
        out.requires_grad = true;
        out.ensure_grad();
        TensorT<S> tc = table, oc = out;
        std::vector<int> idc = ids;
        tape->record([tc, oc, idc, h]() mutable {
            tc.ensure_grad();
            for (size_t t = 0; t < idc.size(); ++t) {
                kernels::axpy(tc.gptr() + static_cast<size_t>(idc[t]) * h, S(1),
                              oc.gptr() + t * h, h);
            }
        });
    }
    return out;
}

template <class S>
TensorT<S> rms_norm(TapeT<S>* tape, const TensorT<S>& x, const TensorT<S>& w, S eps) {
    if (x.shape.size() != 2 || w.shape.size() != 1 || x.shape[1] != w.shape[0]) {
        throw DimensionError("rms_norm: want x[T,h], w[h], got " + shape_str(x.shape) + " and " +
                             shape_str(w.shape));
    }
    const int T = x.shape[0], h = x.shape[1];
    TensorT<S> out({T, h});
    for (int t = 0; t < T; ++t) {
        kernels::rms_apply(out.ptr() + static_cast<size_t>(t) * h,
                           x.ptr() + static_cast<size_t>(t) * h, w.ptr(), h, eps);
    }
    if (detail::track2(tape, x, w)) {
        out.requires_grad = true;
        out.ensure_grad();
        TensorT<S> xc = x, wc = w, oc = out;
        tape->record([xc, wc, oc, T, h, eps]() mutable {
            const bool dx = xc.requires_grad;
            const bool dw = wc.requires_grad;
            if (dx) {
                xc.ensure_grad();
            }
            if (dw) {
                wc.ensure_grad();
            }
            for (int t = 0; t < T; ++t) {
                const S* xr = xc.ptr() + static_cast<size_t>(t) * h;
                const S* gr = oc.gptr() + static_cast<size_t>(t) * h;
                S ms = S(0);
                for (int i = 0; i < h; ++i) {
                    ms += xr[i] * xr[i];
                }
                ms /= static_cast<S>(h);
                const S r = S(1) / std::sqrt(ms + eps);
                if (dw) {
                    for (int i = 0; i < h; ++i) {
                        wc.gptr()[i] += gr[i] * xr[i] * r;
                    }
                }
                if (dx) {
                    S proj = S(0);
                    for (int i = 0; i < h; ++i) {
                        proj += gr[i] * wc.ptr()[i] * xr[i];
                    }
                    const S scale = proj * r * r * r / static_cast<S>(h);
                    S* dxr = xc.gptr() + static_cast<size_t>(t) * h;
                    for (int i = 0; i < h; ++i) {
                        dxr[i] += gr[i] * wc.ptr()[i] * r - xr[i] * scale;
                    }
                }
            }
        });
    }
    return out;
}

template <class S>
TensorT<S> silu(TapeT<S>* tape, const TensorT<S>& x) {
    TensorT<S> out(x.shape);
    const int64_t n = x.numel();
    kernels::silu_row(out.ptr(), x.ptr(), static_cast<int>(n));
    if (detail::track(tape, x)) {
        out.requires_grad = true;
        out.ensure_grad();
        TensorT<S> xc = x, oc = out;
        tape->record([xc, oc, n]() mutable {
            xc.ensure_grad();
            for (int64_t i = 0; i < n; ++i) {
                const S v = xc.ptr()[i];
                const S sig = S(1) / (S(1) + std::exp(-v));
                xc.gptr()[i] += oc.gptr()[i] * sig * (S(1) + v * (S(1) - sig));
            }
        });
    }
    return out;
}

template <class S>
TensorT<S> add(TapeT<S>* tape, const TensorT<S>& a, const TensorT<S>& b) {
    if (a.shape != b.shape) {
        throw DimensionError("add: shape mismatch " + shape_str(a.shape) + " vs " +
                             shape_str(b.shape));
    }
    TensorT<S> out(a.shape);
    kernels::add_rows(out.ptr(), a.ptr(), b.ptr(), static_cast<int>(a.numel()));
    if (detail::track2(tape, a, b)) {
        out.requires_grad = true;
        out.ensure_grad();
        TensorT<S> ac = a, bc = b, oc = out;
        tape->record([ac, bc, oc]() mutable {
            const int n = static_cast<int>(oc.numel());
            if (ac.requires_grad) {
                ac.ensure_grad();
                kernels::axpy(ac.gptr(), S(1), oc.gptr(), n);
            }
            if (bc.requires_grad) {
                bc.ensure_grad();
                kernels::axpy(bc.gptr(), S(1), oc.gptr(), n);
            }
        });
    }
    return out;
}

template <class S>
TensorT<S> sub(TapeT<S>* tape, const TensorT<S>& a, const TensorT<S>& b) {
    if (a.shape != b.shape) {
        throw DimensionError("sub: shape mismatch " + shape_str(a.shape) + " vs " +
                             shape_str(b.shape));
    }
    TensorT<S> out(a.shape);
    for (int64_t i = 0; i < a.numel(); ++i) {
        out.ptr()[i] = a.ptr()[i] - b.ptr()[i];
    }
    if (detail::track2(tape, a, b)) {
        out.requires_grad = true;
        out.ensure_grad();
        TensorT<S> ac = a, bc = b, oc = out;
        tape->record([ac, bc, oc]() mutable {
            const int n = static_cast<int>(oc.numel());
            if (ac.requires_grad) {
                ac.ensure_grad();
                kernels::axpy(ac.gptr(), S(1), oc.gptr(), n);
            }
            if (bc.requires_grad) {
                bc.ensure_grad();
                kernels::axpy(bc.gptr(), S(-1), oc.gptr(), n);
            }
        });
    }
    return out;
}

template <class S>
TensorT<S> mul(TapeT<S>* tape, const TensorT<S>& a, const TensorT<S>& b) {
    if (a.shape != b.shape) {
        throw DimensionError("mul: shape mismatch " + shape_str(a.shape) + " vs " +
                             shape_str(b.shape));
    }
    TensorT<S> out(a.shape);
    kernels::mul_rows(out.ptr(), a.ptr(), b.ptr(), static_cast<int>(a.numel()));
    if (detail::track2(tape, a, b)) {
        out.requires_grad = true;
        out.ensure_grad();
        TensorT<S> ac = a, bc = b, oc = out;
        tape->record([ac, bc, oc]() mutable {
            const int64_t n = oc.numel();
            if (ac.requires_grad) {
                ac.ensure_grad();
                for (int64_t i = 0; i < n; ++i) {
                    ac.gptr()[i] += oc.gptr()[i] * bc.ptr()[i];
                }
            }
            if (bc.requires_grad) {
                bc.ensure_grad();
                for (int64_t i = 0; i < n; ++i) {
                    bc.gptr()[i] += oc.gptr()[i] * ac.ptr()[i];
                }
            }
        });
    }
    return out;
}

template <class S>
TensorT<S> scale(TapeT<S>* tape, const TensorT<S>& a, S s) {
    TensorT<S> out(a.shape);
    for (int64_t i = 0; i < a.numel(); ++i) {
        out.ptr()[i] = a.ptr()[i] * s;
    }
    if (detail::track(tape, a)) {
        out.requires_grad = true;
        out.ensure_grad();
        TensorT<S> ac = a, oc = out;
        tape->record([ac, oc, s]() mutable {
            ac.ensure_grad();
            kernels::axpy(ac.gptr(), s, oc.gptr(), static_cast<int>(oc.numel()));
        });
    }
    return out;
}

// Shares storage, blocks gradient flow.
template <class S>
TensorT<S> detach(const TensorT<S>& a) {
    TensorT<S> out;
    out.shape = a.shape;
    out.data = a.data;
    out.requires_grad = false;
    return out;
}

template <class S>
TensorT<S> mean_sqerr(TapeT<S>* tape, const TensorT<S>& a, const TensorT<S>& b) {
    if (a.shape != b.shape) {
        throw DimensionError("mean_sqerr: shape mismatch " + shape_str(a.shape) + " vs " +
                             shape_str(b.shape));
    }
    const int64_t n = a.numel();
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(a.ptr()[i]) - static_cast<double>(b.ptr()[i]);
        acc += d * d;
    }
    TensorT<S> out({1});
    out.ptr()[0] = static_cast<S>(acc / static_cast<double>(n));
    if (detail::track2(tape, a, b)) {
        out.requires_grad = true;
        out.ensure_grad();
        TensorT<S> ac = a, bc = b, oc = out;
        tape->record([ac, bc, oc, n]() mutable {
            const S g = oc.gptr()[0] * S(2) / static_cast<S>(n);
            if (ac.requires_grad) {
                ac.ensure_grad();
                for (int64_t i = 0; i < n; ++i) {
                    ac.gptr()[i] += g * (ac.ptr()[i] - bc.ptr()[i]);
                }
            }
            if (bc.requires_grad) {
                bc.ensure_grad();
                for (int64_t i = 0; i < n; ++i) {
                    bc.gptr()[i] -= g * (ac.ptr()[i] - bc.ptr()[i]);
                }
            }
        });
    }
    return out;
}

// Mean next-token cross-entropy over rows of logits against integer targets.
template <class S>
TensorT<S> softmax_xent_mean(TapeT<S>* tape, const TensorT<S>& logits,
                             const std::vector<int>& targets) {
    if (logits.shape.size() != 2 || static_cast<size_t>(logits.shape[0]) != targets.size()) {
        throw DimensionError("softmax_xent_mean: logits " + shape_str(logits.shape) + " vs " +
                             std::to_string(targets.size()) + " targets");
    }
    const int T = logits.shape[0], V = logits.shape[1];
    for (int t : targets) {
        if (t < 0 || t >= V) {
            throw InvalidTokenError("softmax_xent_mean: target " + std::to_string(t) +
                                    " outside vocabulary of size " + std::to_string(V));
        }
    }
    double acc = 0.0;
    for (int t = 0; t < T; ++t) {
        const S* row = logits.ptr() + static_cast<size_t>(t) * V;
        S mx = row[0];
        for (int j = 1; j < V; ++j) {
            if (row[j] > mx) {
                mx = row[j];
            }
        }
        double sum = 0.0;
        for (int j = 0; j < V; ++j) {
            sum += std::exp(static_cast<double>(row[j] - mx));
        }
        acc += std::log(sum) + static_cast<double>(mx) - static_cast<double>(row[targets[t]]);
    }
    TensorT<S> out({1});
    out.ptr()[0] = static_cast<S>(acc / T);
    if (detail::track(tape, logits)) {
        out.requires_grad = true;
        out.ensure_grad();
        TensorT<S> lc = logits, oc = out;
        std::vector<int> tg = targets;
        tape->record([lc, oc, tg, T, V]() mutable {
            lc.ensure_grad();
            const S g = oc.gptr()[0] / static_cast<S>(T);
            std::vector<S> prob(static_cast<size_t>(V));
            for (int t = 0; t < T; ++t) {
                const S* row = lc.ptr() + static_cast<size_t>(t) * V;
                std::memcpy(prob.data(), row, sizeof(S) * V);
                kernels::softmax_inplace(prob.data(), V);
                S* drow = lc.gptr() + static_cast<size_t>(t) * V;
                for (int j = 0; j < V; ++j) {
                    drow[j] += g * prob[j];
                }
                drow[tg[t]] -= g;
            }
        });
    }
    return out;
}

// Rotary position embedding across head channel pairs; pos0 is the absolute
// position of row 0.
template <class S>
TensorT<S> rope(TapeT<S>* tape, const TensorT<S>& x, int n_heads, double base, int64_t pos0) {
    if (x.shape.size() != 2 || x.shape[1] % n_heads != 0) {
        throw DimensionError("rope: want [T,h] with h divisible by heads, got " +
                             shape_str(x.shape));
    }
    const int T = x.shape[0], h = x.shape[1];
    const int hd = h / n_heads;
    TensorT<S> out(x.shape);
    std::memcpy(out.ptr(), x.ptr(), sizeof(S) * static_cast<size_t>(x.numel()));
    for (int t = 0; t < T; ++t) {
        kernels::rope_apply_row(out.ptr() + static_cast<size_t>(t) * h, n_heads, hd, pos0 + t,
                                base);
    }
    if (detail::track(tape, x)) {
        out.requires_grad = true;
        out.ensure_grad();
        TensorT<S> xc = x, oc = out;
        tape->record([xc, oc, T, h, hd, n_heads, base, pos0]() mutable {
            xc.ensure_grad();
            for (int t = 0; t < T; ++t) {
                const S* gr = oc.gptr() + static_cast<size_t>(t) * h;
                S* dx = xc.gptr() + static_cast<size_t>(t) * h;
                for (int hh = 0; hh < n_heads; ++hh) {
                    const S* gv = gr + static_cast<size_t>(hh) * hd;
                    S* dv = dx + static_cast<size_t>(hh) * hd;
                    for (int i = 0; i + 1 < hd; i += 2) {
                        const double freq = std::pow(base, -static_cast<double>(i) / hd);
                        const double ang = static_cast<double>(pos0 + t) * freq;
                        const S c = static_cast<S>(std::cos(ang));
                        const S s = static_cast<S>(std::sin(ang));
                        // transpose of the forward rotation
                        dv[i] += gv[i] * c + gv[i + 1] * s;
                        dv[i + 1] += -gv[i] * s + gv[i + 1] * c;
                    }
                }
            }
        });
    }
    return out;
}

// Causal scaled dot-product scores: out[(head*T + i)*T + j] = q_i . k_j / sqrt(d)
// for j <= i, zero above the diagonal.
template <class S>
TensorT<S> attn_scores(TapeT<S>* tape, const TensorT<S>& q, const TensorT<S>& k, int n_heads) {
    if (q.shape != k.shape || q.shape.size() != 2 || q.shape[1] % n_heads != 0) {
        throw DimensionError("attn_scores: want matching [T,h], got " + shape_str(q.shape) +
                             " and " + shape_str(k.shape));
    }
    const int T = q.shape[0], h = q.shape[1];
    const int hd = h / n_heads;
    const S inv = S(1) / std::sqrt(static_cast<S>(hd));
    TensorT<S> out({n_heads * T, T});
    for (int hh = 0; hh < n_heads; ++hh) {
        const S* k_base = k.ptr() + static_cast<size_t>(hh) * hd;
        for (int i = 0; i < T; ++i) {
            kernels::attn_score_row(out.ptr() + (static_cast<size_t>(hh) * T + i) * T,
                                    q.ptr() + static_cast<size_t>(i) * h +
                                        static_cast<size_t>(hh) * hd,
                                    k_base, static_cast<size_t>(h), i + 1, hd, inv);
        }
    }
    if (detail::track2(tape, q, k)) {
        out.requires_grad = true;
        out.ensure_grad();
        TensorT<S> qc = q, kc = k, oc = out;
        tape->record([qc, kc, oc, T, h, hd, n_heads, inv]() mutable {
            const bool dq = qc.requires_grad;
            const bool dk = kc.requires_grad;
            if (dq) {
                qc.ensure_grad();
            }
            if (dk) {
                kc.ensure_grad();
            }
            for (int hh = 0; hh < n_heads; ++hh) {
                const size_t ho = static_cast<size_t>(hh) * hd;
                for (int i = 0; i < T; ++i) {
                    const S* grow = oc.gptr() + (static_cast<size_t>(hh) * T + i) * T;
                    S* dqi = dq ? qc.gptr() + static_cast<size_t>(i) * h + ho : nullptr;
                    const S* qi = qc.ptr() + static_cast<size_t>(i) * h + ho;
                    for (int j = 0; j <= i; ++j) {
                        const S g = grow[j] * inv;
                        if (g == S(0)) {
                            continue;
                        }
                        const S* kj = kc.ptr() + static_cast<size_t>(j) * h + ho;
                        if (dq) {
                            for (int d = 0; d < hd; ++d) {
                                dqi[d] += g * kj[d];
                            }
                        }
                        if (dk) {
                            S* dkj = kc.gptr() + static_cast<size_t>(j) * h + ho;
                            for (int d = 0; d < hd; ++d) {
                                dkj[d] += g * qi[d];
                            }
                        }
                    }
                }
            }
        });
    }
    return out;
}

// Row softmax over the causal prefix [0..i]; positions above the diagonal
// stay exactly zero.
template <class S>
TensorT<S> causal_softmax(TapeT<S>* tape, const TensorT<S>& s, int n_heads) {
    if (s.shape.size() != 2 || s.shape[0] % n_heads != 0) {
        throw DimensionError("causal_softmax: want [heads*T,T], got " + shape_str(s.shape));
    }
    const int T = s.shape[1];
    if (s.shape[0] != n_heads * T) {
        throw DimensionError("causal_softmax: rows " + std::to_string(s.shape[0]) +
                             " != heads*T = " + std::to_string(n_heads * T));
    }
    TensorT<S> out(s.shape);
    for (int hh = 0; hh < n_heads; ++hh) {
        for (int i = 0; i < T; ++i) {
            const size_t off = (static_cast<size_t>(hh) * T + i) * T;
            std::memcpy(out.ptr() + off, s.ptr() + off, sizeof(S) * static_cast<size_t>(i + 1));
            kernels::softmax_inplace(out.ptr() + off, i + 1);
        }
    }
    if (detail::track(tape, s)) {
        out.requires_grad = true;
        out.ensure_grad();
        TensorT<S> sc = s, oc = out;
        tape->record([sc, oc, T, n_heads]() mutable {
            sc.ensure_grad();
            for (int hh = 0; hh < n_heads; ++hh) {
                for (int i = 0; i < T; ++i) {
                    const size_t off = (static_cast<size_t>(hh) * T + i) * T;
                    const S* p = oc.ptr() + off;
                    const S* g = oc.gptr() + off;
                    const S inner = kernels::dot_lanes(g, p, i + 1);
                    S* ds = sc.gptr() + off;
                    for (int j = 0; j <= i; ++j) {
                        ds[j] += p[j] * (g[j] - inner);
                    }
                }
            }
        });
    }
    return out;
}

// out_i(head) = sum_{j<=i} p[(head*T+i)*T + j] * v_j(head)
template <class S>
TensorT<S> attn_mix(TapeT<S>* tape, const TensorT<S>& p, const TensorT<S>& v, int n_heads) {
    if (v.shape.size() != 2 || v.shape[1] % n_heads != 0) {
        throw DimensionError("attn_mix: want v[T,h], got " + shape_str(v.shape));
    }
    const int T = v.shape[0], h = v.shape[1];
    const int hd = h / n_heads;
    if (p.shape.size() != 2 || p.shape[0] != n_heads * T || p.shape[1] != T) {
        throw DimensionError("attn_mix: probs " + shape_str(p.shape) + " do not match v " +
                             shape_str(v.shape));
    }
    TensorT<S> out({T, h});
    for (int hh = 0; hh < n_heads; ++hh) {
        const S* v_base = v.ptr() + static_cast<size_t>(hh) * hd;
        for (int i = 0; i < T; ++i) {
            kernels::attn_mix_row(out.ptr() + static_cast<size_t>(i) * h +
                                      static_cast<size_t>(hh) * hd,
                                  p.ptr() + (static_cast<size_t>(hh) * T + i) * T, v_base,
                                  static_cast<size_t>(h), i + 1, hd);
        }
    }
    if (detail::track2(tape, p, v)) {
        out.requires_grad = true;
        out.ensure_grad();
        TensorT<S> pc = p, vc = v, oc = out;
        tape->record([pc, vc, oc, T, h, hd, n_heads]() mutable {
            const bool dp = pc.requires_grad;
            const bool dv = vc.requires_grad;
            if (dp) {
                pc.ensure_grad();
            }
            if (dv) {
                vc.ensure_grad();
            }
            for (int hh = 0; hh < n_heads; ++hh) {
                const size_t ho = static_cast<size_t>(hh) * hd;
                for (int i = 0; i < T; ++i) {
                    const S* grow = oc.gptr() + static_cast<size_t>(i) * h + ho;
                    const size_t prow = (static_cast<size_t>(hh) * T + i) * T;
                    for (int j = 0; j <= i; ++j) {
                        if (dp) {
                            const S* vj = vc.ptr() + static_cast<size_t>(j) * h + ho;
                            S acc = S(0);
                            for (int d = 0; d < hd; ++d) {
                                acc += grow[d] * vj[d];
                            }
                            pc.gptr()[prow + j] += acc;
                        }
                        if (dv) {
                            const S pv = pc.ptr()[prow + j];
                            S* dvj = vc.gptr() + static_cast<size_t>(j) * h + ho;
                            for (int d = 0; d < hd; ++d) {
                                dvj[d] += pv * grow[d];
                            }
                        }
                    }
                }
            }
        });
    }
    return out;
}

// [C,H,W] -> [H*W, C] (scan-line rows of channel vectors)
template <class S>
TensorT<S> chw_to_hwc(TapeT<S>* tape, const TensorT<S>& x) {
    if (x.shape.size() != 3) {
        throw DimensionError("chw_to_hwc: want [C,H,W], got " + shape_str(x.shape));
    }
    const int C = x.shape[0], H = x.shape[1], W = x.shape[2];
    TensorT<S> out({H * W, C});
    for (int c = 0; c < C; ++c) {
        for (int i = 0; i < H * W; ++i) {
            out.ptr()[static_cast<size_t>(i) * C + c] = x.ptr()[static_cast<size_t>(c) * H * W + i];
        }
    }
    if (detail::track(tape, x)) {
        out.requires_grad = true;
        out.ensure_grad();
        TensorT<S> xc = x, oc = out;
        tape->record([xc, oc, C, H, W]() mutable {
            xc.ensure_grad();
            for (int c = 0; c < C; ++c) {
                for (int i = 0; i < H * W; ++i) {
                    xc.gptr()[static_cast<size_t>(c) * H * W + i] +=
                        oc.gptr()[static_cast<size_t>(i) * C + c];
                }
            }
        });
    }
    return out;
}

// [H*W, C] -> [C,H,W]
template <class S>
TensorT<S> hwc_to_chw(TapeT<S>* tape, const TensorT<S>& x, int H, int W) {
    if (x.shape.size() != 2 || x.shape[0] != H * W) {
        throw DimensionError("hwc_to_chw: want [H*W,C], got " + shape_str(x.shape));
    }
    const int C = x.shape[1];
    TensorT<S> out({C, H, W});
    for (int c = 0; c < C; ++c) {
        for (int i = 0; i < H * W; ++i) {
            out.ptr()[static_cast<size_t>(c) * H * W + i] = x.ptr()[static_cast<size_t>(i) * C + c];
        }
    }
    if (detail::track(tape, x)) {
        out.requires_grad = true;
        out.ensure_grad();
        TensorT<S> xc = x, oc = out;
        tape->record([xc, oc, C, H, W]() mutable {
            xc.ensure_grad();
            for (int c = 0; c < C; ++c) {
                for (int i = 0; i < H * W; ++i) {
                    xc.gptr()[static_cast<size_t>(i) * C + c] +=
                        oc.gptr()[static_cast<size_t>(c) * H * W + i];
                }
            }
        });
    }
    return out;
}

} // namespace lvm::ops
