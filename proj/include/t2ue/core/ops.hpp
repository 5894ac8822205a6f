#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "t2ue/core/graph.hpp"
#include "t2ue/core/tensor.hpp"

// Differentiable building blocks as free functions over Graph/Var.
// Every backward here is exercised by the finite-difference checker in the
// unit suite; keep forward and backward in one place when touching them.

namespace t2ue {

// ---------------------------------------------------------------------------
// elementwise

template <typename S>
Var<S> add(Var<S> a, Var<S> b) {
    if (!same_shape(a.value().shape, b.value().shape)) throw std::invalid_argument("add: shape mismatch");
    Graph<S>& g = *a.graph();
    Tensor<S> out(a.value().shape, a.value().data + b.value().data);
    int ia = a.id(), ib = b.id();
    return g.apply(std::move(out), {a, b}, [ia, ib](Graph<S>& gr, int self) {
        const auto& go = gr.grad(self).data;
        gr.accumulate(ia, go);
        gr.accumulate(ib, go);
    });
}

template <typename S>
Var<S> sub(Var<S> a, Var<S> b) {
    if (!same_shape(a.value().shape, b.value().shape)) throw std::invalid_argument("sub: shape mismatch");
    Graph<S>& g = *a.graph();
    Tensor<S> out(a.value().shape, a.value().data - b.value().data);
    int ia = a.id(), ib = b.id();
    return g.apply(std::move(out), {a, b}, [ia, ib](Graph<S>& gr, int self) {
        const auto& go = gr.grad(self).data;
        gr.accumulate(ia, go);
        gr.accumulate(ib, -go);
    });
}

template <typename S>
Var<S> mul(Var<S> a, Var<S> b) {
    if (!same_shape(a.value().shape, b.value().shape)) throw std::invalid_argument("mul: shape mismatch");
    Graph<S>& g = *a.graph();
    Tensor<S> out(a.value().shape, a.value().data * b.value().data);
    int ia = a.id(), ib = b.id();
    return g.apply(std::move(out), {a, b}, [ia, ib](Graph<S>& gr, int self) {
        const auto& go = gr.grad(self).data;
        gr.accumulate(ia, go * gr.value(ib).data);
        gr.accumulate(ib, go * gr.value(ia).data);
    });
}

template <typename S>
Var<S> scale(Var<S> a, S c) {
    Graph<S>& g = *a.graph();
    Tensor<S> out(a.value().shape, a.value().data * c);
    int ia = a.id();
    return g.apply(std::move(out), {a}, [ia, c](Graph<S>& gr, int self) {
        gr.accumulate(ia, gr.grad(self).data * c);
    });
}

template <typename S>
Var<S> relu(Var<S> a) {
    Graph<S>& g = *a.graph();
    Tensor<S> out(a.value().shape, a.value().data.max(S(0)));
    int ia = a.id();
    return g.apply(std::move(out), {a}, [ia](Graph<S>& gr, int self) {
        auto mask = (gr.value(ia).data > S(0)).template cast<S>();
        gr.accumulate(ia, gr.grad(self).data * mask);
    });
}

template <typename S>
Var<S> leaky_relu(Var<S> a, S slope) {
    Graph<S>& g = *a.graph();
    const auto& x = a.value().data;
    Tensor<S> out(a.value().shape, (x > S(0)).select(x, x * slope));
    int ia = a.id();
    return g.apply(std::move(out), {a}, [ia, slope](Graph<S>& gr, int self) {
        const auto& x = gr.value(ia).data;
        ArrayX<S> d = (x > S(0)).select(ArrayX<S>::Constant(x.size(), S(1)),
                                        ArrayX<S>::Constant(x.size(), slope));
        gr.accumulate(ia, gr.grad(self).data * d);
    });
}

template <typename S>
Var<S> tanh_act(Var<S> a) {
    Graph<S>& g = *a.graph();
    Tensor<S> out(a.value().shape, a.value().data.tanh());
    int ia = a.id();
    return g.apply(std::move(out), {a}, [ia](Graph<S>& gr, int self) {
        const auto& y = gr.value(self).data;
        gr.accumulate(ia, gr.grad(self).data * (S(1) - y * y));
    });
}

template <typename S>
Var<S> exp_op(Var<S> a) {
    Graph<S>& g = *a.graph();
    Tensor<S> out(a.value().shape, a.value().data.exp());
    int ia = a.id();
    return g.apply(std::move(out), {a}, [ia](Graph<S>& gr, int self) {
        gr.accumulate(ia, gr.grad(self).data * gr.value(self).data);
    });
}

/// Clamp to [0, 1]; gradient passes only where the input was strictly inside.
template <typename S>
Var<S> clamp01(Var<S> a) {
    Graph<S>& g = *a.graph();
    Tensor<S> out(a.value().shape, a.value().data.max(S(0)).min(S(1)));
    int ia = a.id();
    return g.apply(std::move(out), {a}, [ia](Graph<S>& gr, int self) {
        const auto& x = gr.value(ia).data;
        auto mask = (x > S(0) && x < S(1)).template cast<S>();
        gr.accumulate(ia, gr.grad(self).data * mask);
    });
}

template <typename S>
Var<S> reshape(Var<S> a, std::vector<int> shape) {
    if (Tensor<S>::count(shape) != a.value().size()) throw std::invalid_argument("reshape: size mismatch");
    Graph<S>& g = *a.graph();
    Tensor<S> out(shape, a.value().data);
    int ia = a.id();
    return g.apply(std::move(out), {a}, [ia](Graph<S>& gr, int self) {
        gr.accumulate(ia, gr.grad(self).data);
    });
}

// ---------------------------------------------------------------------------
// linear algebra

template <typename S>
Var<S> matmul(Var<S> a, Var<S> b) {
    const auto& sa = a.value().shape;
    const auto& sb = b.value().shape;
    if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) throw std::invalid_argument("matmul: shape mismatch");
    Graph<S>& g = *a.graph();
    Tensor<S> out({sa[0], sb[1]});
    out.mat().noalias() = a.value().mat() * b.value().mat();
    int ia = a.id(), ib = b.id();
    return g.apply(std::move(out), {a, b}, [ia, ib](Graph<S>& gr, int self) {
        const auto& A = gr.value(ia);
        const auto& B = gr.value(ib);
        auto G = gr.grad(self).mat(A.shape[0], B.shape[1]);
        if (gr.needs_grad(ia)) {
            Tensor<S> da(A.shape);
            da.mat().noalias() = G * B.mat().transpose();
            gr.accumulate(ia, da.data);
        }
        if (gr.needs_grad(ib)) {
            Tensor<S> db(B.shape);
            db.mat().noalias() = A.mat().transpose() * G;
            gr.accumulate(ib, db.data);
        }
    });
}

template <typename S>
Var<S> transpose(Var<S> a) {
    const auto& sa = a.value().shape;
    if (sa.size() != 2) throw std::invalid_argument("transpose: need 2-d");
    Graph<S>& g = *a.graph();
    Tensor<S> out({sa[1], sa[0]});
    out.mat() = a.value().mat().transpose();
    int ia = a.id();
    return g.apply(std::move(out), {a}, [ia](Graph<S>& gr, int self) {
        const auto& A = gr.value(ia);
        Tensor<S> da(A.shape);
        da.mat() = gr.grad(self).mat(A.shape[1], A.shape[0]).transpose();
        gr.accumulate(ia, da.data);
    });
}

/// y = x + row-broadcast bias. x: (N, C), b: (C).
template <typename S>
Var<S> add_rowvec(Var<S> x, Var<S> b) {
    const auto& sx = x.value().shape;
    if (sx.size() != 2 || b.value().size() != sx[1]) throw std::invalid_argument("add_rowvec: shape mismatch");
    Graph<S>& g = *x.graph();
    Tensor<S> out({sx[0], sx[1]});
    out.mat() = x.value().mat().rowwise() + b.value().mat(1, sx[1]).row(0);
    int ix = x.id(), ib = b.id();
    return g.apply(std::move(out), {x, b}, [ix, ib](Graph<S>& gr, int self) {
        const auto& sx2 = gr.value(ix).shape;
        auto G = gr.grad(self).mat(sx2[0], sx2[1]);
        gr.accumulate(ix, gr.grad(self).data);
        if (gr.needs_grad(ib)) {
            Tensor<S> db({sx2[1]});
            db.mat(1, sx2[1]) = G.colwise().sum();
            gr.accumulate(ib, db.data);
        }
    });
}

/// Replicate a length-C vector into N rows.
template <typename S>
Var<S> broadcast_rows(Var<S> v, int n) {
    int c = static_cast<int>(v.value().size());
    Graph<S>& g = *v.graph();
    Tensor<S> out({n, c});
    out.mat() = v.value().mat(1, c).row(0).replicate(n, 1);
    int iv = v.id();
    return g.apply(std::move(out), {v}, [iv, n, c](Graph<S>& gr, int self) {
        Tensor<S> dv(gr.value(iv).shape);
        dv.mat(1, c) = gr.grad(self).mat(n, c).colwise().sum();
        gr.accumulate(iv, dv.data);
    });
}

/// Rows of x scaled to unit L2 norm. x: (N, d).
template <typename S>
Var<S> l2_normalize_rows(Var<S> x) {
    const auto& sx = x.value().shape;
    if (sx.size() != 2) throw std::invalid_argument("l2_normalize_rows: need 2-d");
    const int n = sx[0], d = sx[1];
    Graph<S>& g = *x.graph();
    Tensor<S> out({n, d});
    auto X = x.value().mat();
    auto inv = std::make_shared<ArrayX<S>>(n);
    for (int i = 0; i < n; ++i) {
        S nm = X.row(i).norm();
        if (!(nm > S(1e-12))) throw std::invalid_argument("l2_normalize_rows: zero-norm row " + std::to_string(i));
        (*inv)[i] = S(1) / nm;
        out.mat().row(i) = X.row(i) * (*inv)[i];
    }
    int ix = x.id();
    return g.apply(std::move(out), {x}, [ix, inv, n, d](Graph<S>& gr, int self) {
        auto Y = gr.value(self).mat(n, d);
        auto G = gr.grad(self).mat(n, d);
        Tensor<S> dx({n, d});
        for (int i = 0; i < n; ++i) {
            S dot = Y.row(i).dot(G.row(i));
            dx.mat().row(i) = (G.row(i) - Y.row(i) * dot) * (*inv)[i];
        }
        gr.accumulate(ix, dx.data);
    });
}

/// S[i][j] = <a_i, b_j>. Scalar loops so that pairwise_dot(b, a) is the exact
/// elementwise transpose of pairwise_dot(a, b).
template <typename S>
Var<S> pairwise_dot(Var<S> a, Var<S> b) {
    const auto& sa = a.value().shape;
    const auto& sb = b.value().shape;
    if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[1]) throw std::invalid_argument("pairwise_dot: shape mismatch");
    const int n = sa[0], m = sb[0], d = sa[1];
    Graph<S>& g = *a.graph();
    Tensor<S> out({n, m});
    const S* A = a.value().data.data();
    const S* B = b.value().data.data();
    for (int i = 0; i < n; ++i) {
        const S* pa = A + static_cast<int64_t>(i) * d;
        for (int j = 0; j < m; ++j) {
            const S* pb = B + static_cast<int64_t>(j) * d;
            S acc = S(0);
            for (int k = 0; k < d; ++k) acc += pa[k] * pb[k];
            out.data[static_cast<int64_t>(i) * m + j] = acc;
        }
    }
    int ia = a.id(), ib = b.id();
    return g.apply(std::move(out), {a, b}, [ia, ib, n, m](Graph<S>& gr, int self) {
        auto G = gr.grad(self).mat(n, m);
        const auto& A = gr.value(ia);
        const auto& B = gr.value(ib);
        if (gr.needs_grad(ia)) {
            Tensor<S> da(A.shape);
            da.mat().noalias() = G * B.mat();
            gr.accumulate(ia, da.data);
        }
        if (gr.needs_grad(ib)) {
            Tensor<S> db(B.shape);
            db.mat().noalias() = G.transpose() * A.mat();
            gr.accumulate(ib, db.data);
        }
    });
}

/// y = x / s with a scalar (1-element) variable s.
template <typename S>
Var<S> div_by_scalar(Var<S> x, Var<S> s) {
    if (s.value().size() != 1) throw std::invalid_argument("div_by_scalar: s must be scalar");
    Graph<S>& g = *x.graph();
    S sv = s.value()[0];
    Tensor<S> out(x.value().shape, x.value().data / sv);
    int ix = x.id(), is = s.id();
    return g.apply(std::move(out), {x, s}, [ix, is, sv](Graph<S>& gr, int self) {
        const auto& go = gr.grad(self).data;
        gr.accumulate(ix, go / sv);
        if (gr.needs_grad(is)) {
            S ds = -(go * gr.value(self).data).sum() / sv;
            ArrayX<S> d(1);
            d[0] = ds;
            gr.accumulate(is, d);
        }
    });
}

// ---------------------------------------------------------------------------
// reductions

template <typename S>
Var<S> sum_all(Var<S> x) {
    Graph<S>& g = *x.graph();
    Tensor<S> out = Tensor<S>::scalar(x.value().data.sum());
    int ix = x.id();
    return g.apply(std::move(out), {x}, [ix](Graph<S>& gr, int self) {
        S go = gr.grad(self).data[0];
        gr.accumulate(ix, ArrayX<S>::Constant(gr.value(ix).size(), go));
    });
}

template <typename S>
Var<S> mean_all(Var<S> x) {
    Graph<S>& g = *x.graph();
    S inv = S(1) / static_cast<S>(x.value().size());
    Tensor<S> out = Tensor<S>::scalar(x.value().data.sum() * inv);
    int ix = x.id();
    return g.apply(std::move(out), {x}, [ix, inv](Graph<S>& gr, int self) {
        S go = gr.grad(self).data[0] * inv;
        gr.accumulate(ix, ArrayX<S>::Constant(gr.value(ix).size(), go));
    });
}

/// Mean softmax cross-entropy over rows; targets[i] is the hot column of row i.
template <typename S>
Var<S> cross_entropy_rows(Var<S> logits, std::vector<int> targets) {
    const auto& sl = logits.value().shape;
    if (sl.size() != 2) throw std::invalid_argument("cross_entropy_rows: need 2-d logits");
    const int n = sl[0], m = sl[1];
    if (static_cast<int>(targets.size()) != n) throw std::invalid_argument("cross_entropy_rows: target count mismatch");
    for (int t : targets)
        if (t < 0 || t >= m) throw std::invalid_argument("cross_entropy_rows: target out of range");
    Graph<S>& g = *logits.graph();
    auto L = logits.value().mat();
    S total = S(0);
    for (int i = 0; i < n; ++i) {
        S mx = L.row(i).maxCoeff();
        S lse = std::log((L.row(i).array() - mx).exp().sum()) + mx;
        total += lse - L(i, targets[static_cast<size_t>(i)]);
    }
    Tensor<S> out = Tensor<S>::scalar(total / static_cast<S>(n));
    int il = logits.id();
    auto tgt = std::make_shared<std::vector<int>>(std::move(targets));
    return g.apply(std::move(out), {logits}, [il, tgt, n, m](Graph<S>& gr, int self) {
        S go = gr.grad(self).data[0] / static_cast<S>(n);
        auto L2 = gr.value(il).mat(n, m);
        Tensor<S> dl({n, m});
        for (int i = 0; i < n; ++i) {
            S mx = L2.row(i).maxCoeff();
            ArrayX<S> e = (L2.row(i).array() - mx).exp().transpose();
            e /= e.sum();
            dl.mat().row(i) = e.transpose() * go;
            dl.mat()(i, (*tgt)[static_cast<size_t>(i)]) -= go;
        }
        gr.accumulate(il, dl.data);
    });
}

// ---------------------------------------------------------------------------
// spatial ops (NCHW)

struct ConvSpec {
    int in_ch = 0, out_ch = 0;
    int kernel = 3;
    int stride = 1;
    int pad = 1;
    int out_size(int in) const { return (in + 2 * pad - kernel) / stride + 1; }
};

namespace detail {

/// Gather conv patches of image n into cols (P x K), K = C*k*k.
template <typename S>
void im2col_one(const Tensor<S>& x, int n, const ConvSpec& cs, int H, int W, MatMap<S> cols) {
    const int k = cs.kernel, C = cs.in_ch;
    const int Ho = cs.out_size(H), Wo = cs.out_size(W);
    const S* base = x.data.data() + static_cast<int64_t>(n) * C * H * W;
    for (int oy = 0; oy < Ho; ++oy) {
        for (int ox = 0; ox < Wo; ++ox) {
            int p = oy * Wo + ox;
            for (int c = 0; c < C; ++c) {
                const S* chan = base + static_cast<int64_t>(c) * H * W;
                for (int ky = 0; ky < k; ++ky) {
                    int iy = oy * cs.stride - cs.pad + ky;
                    for (int kx = 0; kx < k; ++kx) {
                        int ix = ox * cs.stride - cs.pad + kx;
                        S v = (iy >= 0 && iy < H && ix >= 0 && ix < W) ? chan[iy * W + ix] : S(0);
                        cols(p, (c * k + ky) * k + kx) = v;
                    }
                }
            }
        }
    }
}

template <typename S>
void col2im_one(const MatrixRM<S>& cols, int n, const ConvSpec& cs, int H, int W, Tensor<S>& dx) {
    const int k = cs.kernel, C = cs.in_ch;
    const int Ho = cs.out_size(H), Wo = cs.out_size(W);
    S* base = dx.data.data() + static_cast<int64_t>(n) * C * H * W;
    for (int oy = 0; oy < Ho; ++oy) {
        for (int ox = 0; ox < Wo; ++ox) {
            int p = oy * Wo + ox;
            for (int c = 0; c < C; ++c) {
                S* chan = base + static_cast<int64_t>(c) * H * W;
                for (int ky = 0; ky < k; ++ky) {
                    int iy = oy * cs.stride - cs.pad + ky;
                    if (iy < 0 || iy >= H) continue;
                    for (int kx = 0; kx < k; ++kx) {
                        int ix = ox * cs.stride - cs.pad + kx;
                        if (ix < 0 || ix >= W) continue;
                        chan[iy * W + ix] += cols(p, (c * k + ky) * k + kx);
                    }
                }
            }
        }
    }
}

template <typename S>
MatrixRM<S> im2col_batch(const Tensor<S>& x, const ConvSpec& cs) {
    const int N = x.shape[0], H = x.shape[2], W = x.shape[3];
    const int P = cs.out_size(H) * cs.out_size(W);
    const int K = cs.in_ch * cs.kernel * cs.kernel;
    MatrixRM<S> cols(static_cast<int64_t>(N) * P, K);
    for (int n = 0; n < N; ++n) {
        MatMap<S> block(cols.data() + static_cast<int64_t>(n) * P * K, P, K);
        im2col_one(x, n, cs, H, W, block);
    }
    return cols;
}

}  // namespace detail

/// 2-d convolution. x: (N, Cin, H, W); w: (Cin*k*k, Cout); b: (Cout).
/// Patch matrices are rebuilt in the backward pass instead of being retained.
template <typename S>
Var<S> conv2d(Var<S> x, Var<S> w, Var<S> b, const ConvSpec& cs) {
    const auto& sx = x.value().shape;
    if (sx.size() != 4) throw std::invalid_argument("conv2d: input must be NCHW");
    if (sx[1] != cs.in_ch) throw std::invalid_argument("conv2d: channel mismatch");
    const int K = cs.in_ch * cs.kernel * cs.kernel;
    if (w.value().shape != std::vector<int>{K, cs.out_ch}) throw std::invalid_argument("conv2d: weight shape");
    if (b.value().size() != cs.out_ch) throw std::invalid_argument("conv2d: bias shape");
    const int N = sx[0], H = sx[2], W = sx[3];
    const int Ho = cs.out_size(H), Wo = cs.out_size(W), P = Ho * Wo;

    Graph<S>& g = *x.graph();
    MatrixRM<S> cols = detail::im2col_batch(x.value(), cs);
    MatrixRM<S> ymat(static_cast<int64_t>(N) * P, cs.out_ch);
    ymat.noalias() = cols * w.value().mat();

    Tensor<S> out({N, cs.out_ch, Ho, Wo});
    const auto bias = b.value().data;
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < cs.out_ch; ++c) {
            S* dst = out.data.data() + ((static_cast<int64_t>(n) * cs.out_ch + c) * P);
            for (int p = 0; p < P; ++p) dst[p] = ymat(static_cast<int64_t>(n) * P + p, c) + bias[c];
        }
    }

    int ix = x.id(), iw = w.id(), ib = b.id();
    ConvSpec spec = cs;
    return g.apply(std::move(out), {x, w, b}, [ix, iw, ib, spec, N, H, W, P](Graph<S>& gr, int self) {
        const int Co = spec.out_ch;
        const auto& go = gr.grad(self);
        MatrixRM<S> gmat(static_cast<int64_t>(N) * P, Co);
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < Co; ++c) {
                const S* src = go.data.data() + ((static_cast<int64_t>(n) * Co + c) * P);
                for (int p = 0; p < P; ++p) gmat(static_cast<int64_t>(n) * P + p, c) = src[p];
            }
        if (gr.needs_grad(ib)) {
            Tensor<S> db({Co});
            db.mat(1, Co) = gmat.colwise().sum();
            gr.accumulate(ib, db.data);
        }
        if (gr.needs_grad(iw)) {
            MatrixRM<S> cols = detail::im2col_batch(gr.value(ix), spec);
            Tensor<S> dw(gr.value(iw).shape);
            dw.mat().noalias() = cols.transpose() * gmat;
            gr.accumulate(iw, dw.data);
        }
        if (gr.needs_grad(ix)) {
            MatrixRM<S> dcols(static_cast<int64_t>(N) * P, spec.in_ch * spec.kernel * spec.kernel);
            dcols.noalias() = gmat * gr.value(iw).mat().transpose();
            Tensor<S> dx(gr.value(ix).shape);
            for (int n = 0; n < N; ++n) {
                MatrixRM<S> block = dcols.middleRows(static_cast<int64_t>(n) * P, P);
                detail::col2im_one(block, n, spec, H, W, dx);
            }
            gr.accumulate(ix, dx.data);
        }
    });
}

/// Nearest-neighbour 2x upsample.
template <typename S>
Var<S> upsample2x(Var<S> x) {
    const auto& sx = x.value().shape;
    if (sx.size() != 4) throw std::invalid_argument("upsample2x: input must be NCHW");
    const int N = sx[0], C = sx[1], H = sx[2], W = sx[3];
    Graph<S>& g = *x.graph();
    Tensor<S> out({N, C, 2 * H, 2 * W});
    const S* src = x.value().data.data();
    S* dst = out.data.data();
    for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; ++nc) {
        const S* sp = src + nc * H * W;
        S* dp = dst + nc * 4 * H * W;
        for (int y = 0; y < H; ++y)
            for (int xx = 0; xx < W; ++xx) {
                S v = sp[y * W + xx];
                S* q = dp + (2 * y) * 2 * W + 2 * xx;
                q[0] = v;
                q[1] = v;
                q[2 * W] = v;
                q[2 * W + 1] = v;
            }
    }
    int ix = x.id();
    return g.apply(std::move(out), {x}, [ix, N, C, H, W](Graph<S>& gr, int self) {
        Tensor<S> dx(gr.value(ix).shape);
        const S* gp = gr.grad(self).data.data();
        S* dp = dx.data.data();
        for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; ++nc) {
            const S* sp = gp + nc * 4 * H * W;
            S* q = dp + nc * H * W;
            for (int y = 0; y < H; ++y)
                for (int xx = 0; xx < W; ++xx) {
                    const S* s0 = sp + (2 * y) * 2 * W + 2 * xx;
                    q[y * W + xx] = s0[0] + s0[1] + s0[2 * W] + s0[2 * W + 1];
                }
        }
        gr.accumulate(ix, dx.data);
    });
}

/// (N, C, H, W) -> (N, C) spatial mean.
template <typename S>
Var<S> global_avg_pool(Var<S> x) {
    const auto& sx = x.value().shape;
    if (sx.size() != 4) throw std::invalid_argument("global_avg_pool: input must be NCHW");
    const int N = sx[0], C = sx[1], HW = sx[2] * sx[3];
    Graph<S>& g = *x.graph();
    Tensor<S> out({N, C});
    const S inv = S(1) / static_cast<S>(HW);
    for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; ++nc) {
        const S* sp = x.value().data.data() + nc * HW;
        S acc = S(0);
        for (int i = 0; i < HW; ++i) acc += sp[i];
        out.data[nc] = acc * inv;
    }
    int ix = x.id();
    return g.apply(std::move(out), {x}, [ix, N, C, HW, inv](Graph<S>& gr, int self) {
        Tensor<S> dx(gr.value(ix).shape);
        for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; ++nc) {
            S go = gr.grad(self).data[nc] * inv;
            S* dp = dx.data.data() + nc * HW;
            for (int i = 0; i < HW; ++i) dp[i] = go;
        }
        gr.accumulate(ix, dx.data);
    });
}

// ---------------------------------------------------------------------------
// conditional batch normalization

/// Batch-statistics normalization with per-sample, per-channel affine
/// parameters. h: (N, C, H, W); gamma, beta: (N, C). Channel mean/variance are
/// taken over batch and spatial dims; running stats (if given) are updated
/// with the biased batch moments.
template <typename S>
Var<S> sscbn_train(Var<S> h, Var<S> gamma, Var<S> beta, S eps, ArrayX<S>* run_mean = nullptr,
                   ArrayX<S>* run_var = nullptr, S momentum = S(0.1)) {
    const auto& sh = h.value().shape;
    if (sh.size() != 4) throw std::invalid_argument("sscbn: input must be NCHW");
    const int N = sh[0], C = sh[1], HW = sh[2] * sh[3];
    if (N < 2) throw std::invalid_argument("sscbn: batch size must be >= 2 in training mode");
    if (gamma.value().shape != std::vector<int>{N, C} || beta.value().shape != std::vector<int>{N, C})
        throw std::invalid_argument("sscbn: gamma/beta must be (N, C); channel mismatch");

    Graph<S>& g = *h.graph();
    const int64_t m = static_cast<int64_t>(N) * HW;
    auto xhat = std::make_shared<Tensor<S>>(h.value().shape);
    auto inv_std = std::make_shared<ArrayX<S>>(C);

    Tensor<S> out(h.value().shape);
    const S* hp = h.value().data.data();
    for (int c = 0; c < C; ++c) {
        double mu = 0.0;
        for (int n = 0; n < N; ++n) {
            const S* p = hp + (static_cast<int64_t>(n) * C + c) * HW;
            for (int i = 0; i < HW; ++i) mu += static_cast<double>(p[i]);
        }
        mu /= static_cast<double>(m);
        double var = 0.0;
        for (int n = 0; n < N; ++n) {
            const S* p = hp + (static_cast<int64_t>(n) * C + c) * HW;
            for (int i = 0; i < HW; ++i) {
                double d = static_cast<double>(p[i]) - mu;
                var += d * d;
            }
        }
        var /= static_cast<double>(m);
        S istd = S(1) / std::sqrt(static_cast<S>(var) + eps);
        (*inv_std)[c] = istd;
        if (run_mean) {
            (*run_mean)[c] = (S(1) - momentum) * (*run_mean)[c] + momentum * static_cast<S>(mu);
            (*run_var)[c] = (S(1) - momentum) * (*run_var)[c] + momentum * static_cast<S>(var);
        }
        for (int n = 0; n < N; ++n) {
            const S* p = hp + (static_cast<int64_t>(n) * C + c) * HW;
            S* xh = xhat->data.data() + (static_cast<int64_t>(n) * C + c) * HW;
            S* op = out.data.data() + (static_cast<int64_t>(n) * C + c) * HW;
            S ga = gamma.value().data[static_cast<int64_t>(n) * C + c];
            S be = beta.value().data[static_cast<int64_t>(n) * C + c];
            for (int i = 0; i < HW; ++i) {
                S v = (p[i] - static_cast<S>(mu)) * istd;
                xh[i] = v;
                op[i] = ga * v + be;
            }
        }
    }

    int ih = h.id(), ig = gamma.id(), ib = beta.id();
    return g.apply(std::move(out), {h, gamma, beta}, [ih, ig, ib, xhat, inv_std, N, C, HW](Graph<S>& gr, int self) {
        const auto& go = gr.grad(self);
        const S* gp = go.data.data();
        const S* gam = gr.value(ig).data.data();
        const int64_t m = static_cast<int64_t>(N) * HW;
        Tensor<S> dgamma({N, C});
        Tensor<S> dbeta({N, C});
        Tensor<S> dh(gr.value(ih).shape);
        for (int c = 0; c < C; ++c) {
            // dxhat = go * gamma; dh from the batch-stat chain rule.
            double sum_dx = 0.0, sum_dx_xh = 0.0;
            for (int n = 0; n < N; ++n) {
                const S* gq = gp + (static_cast<int64_t>(n) * C + c) * HW;
                const S* xh = xhat->data.data() + (static_cast<int64_t>(n) * C + c) * HW;
                S ga = gam[static_cast<int64_t>(n) * C + c];
                double dgam = 0.0, dbet = 0.0;
                for (int i = 0; i < HW; ++i) {
                    double dxh = static_cast<double>(gq[i]) * ga;
                    sum_dx += dxh;
                    sum_dx_xh += dxh * static_cast<double>(xh[i]);
                    dgam += static_cast<double>(gq[i]) * xh[i];
                    dbet += static_cast<double>(gq[i]);
                }
                dgamma.data[static_cast<int64_t>(n) * C + c] = static_cast<S>(dgam);
                dbeta.data[static_cast<int64_t>(n) * C + c] = static_cast<S>(dbet);
            }
            const double mean_dx = sum_dx / static_cast<double>(m);
            const double mean_dx_xh = sum_dx_xh / static_cast<double>(m);
            if (gr.needs_grad(ih)) {
                for (int n = 0; n < N; ++n) {
                    const S* gq = gp + (static_cast<int64_t>(n) * C + c) * HW;
                    const S* xh = xhat->data.data() + (static_cast<int64_t>(n) * C + c) * HW;
                    S* dq = dh.data.data() + (static_cast<int64_t>(n) * C + c) * HW;
                    S ga = gam[static_cast<int64_t>(n) * C + c];
                    for (int i = 0; i < HW; ++i) {
                        double dxh = static_cast<double>(gq[i]) * ga;
                        dq[i] = static_cast<S>((dxh - mean_dx - static_cast<double>(xh[i]) * mean_dx_xh) *
                                               static_cast<double>((*inv_std)[c]));
                    }
                }
            }
        }
        gr.accumulate(ih, dh.data);
        gr.accumulate(ig, dgamma.data);
        gr.accumulate(ib, dbeta.data);
    });
}

/// Inference-mode variant using fixed per-channel statistics.
template <typename S>
Var<S> sscbn_infer(Var<S> h, Var<S> gamma, Var<S> beta, S eps, const ArrayX<S>& fixed_mean,
                   const ArrayX<S>& fixed_var) {
    const auto& sh = h.value().shape;
    if (sh.size() != 4) throw std::invalid_argument("sscbn: input must be NCHW");
    const int N = sh[0], C = sh[1], HW = sh[2] * sh[3];
    if (gamma.value().shape != std::vector<int>{N, C} || beta.value().shape != std::vector<int>{N, C})
        throw std::invalid_argument("sscbn: gamma/beta must be (N, C); channel mismatch");
    if (fixed_mean.size() != C) throw std::invalid_argument("sscbn: running stats channel mismatch");

    Graph<S>& g = *h.graph();
    auto inv_std = std::make_shared<ArrayX<S>>(C);
    auto mean = std::make_shared<ArrayX<S>>(fixed_mean);
    for (int c = 0; c < C; ++c) (*inv_std)[c] = S(1) / std::sqrt(fixed_var[c] + eps);

    Tensor<S> out(h.value().shape);
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const S* p = h.value().data.data() + (static_cast<int64_t>(n) * C + c) * HW;
            S* op = out.data.data() + (static_cast<int64_t>(n) * C + c) * HW;
            S ga = gamma.value().data[static_cast<int64_t>(n) * C + c];
            S be = beta.value().data[static_cast<int64_t>(n) * C + c];
            for (int i = 0; i < HW; ++i) op[i] = ga * (p[i] - (*mean)[c]) * (*inv_std)[c] + be;
        }

    int ih = h.id(), ig = gamma.id(), ib = beta.id();
    return g.apply(std::move(out), {h, gamma, beta}, [ih, ig, ib, inv_std, mean, N, C, HW](Graph<S>& gr, int self) {
        const auto& go = gr.grad(self);
        const S* gam = gr.value(ig).data.data();
        Tensor<S> dh(gr.value(ih).shape);
        Tensor<S> dgamma({N, C});
        Tensor<S> dbeta({N, C});
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
                const S* gq = go.data.data() + (static_cast<int64_t>(n) * C + c) * HW;
                const S* hp = gr.value(ih).data.data() + (static_cast<int64_t>(n) * C + c) * HW;
                S* dq = dh.data.data() + (static_cast<int64_t>(n) * C + c) * HW;
                S ga = gam[static_cast<int64_t>(n) * C + c];
                double dgam = 0.0, dbet = 0.0;
                for (int i = 0; i < HW; ++i) {
                    S xh = (hp[i] - (*mean)[c]) * (*inv_std)[c];
                    dq[i] = gq[i] * ga * (*inv_std)[c];
                    dgam += static_cast<double>(gq[i]) * xh;
                    dbet += static_cast<double>(gq[i]);
                }
                dgamma.data[static_cast<int64_t>(n) * C + c] = static_cast<S>(dgam);
                dbeta.data[static_cast<int64_t>(n) * C + c] = static_cast<S>(dbet);
            }
        gr.accumulate(ih, dh.data);
        gr.accumulate(ig, dgamma.data);
        gr.accumulate(ib, dbeta.data);
    });
}

// ---------------------------------------------------------------------------
// embeddings

/// Mean-pooled token embedding lookup. table: (V, E); one id list per sample.
template <typename S>
Var<S> embedding_mean(Var<S> table, std::vector<std::vector<int>> ids) {
    const auto& st = table.value().shape;
    if (st.size() != 2) throw std::invalid_argument("embedding_mean: table must be 2-d");
    const int V = st[0], E = st[1];
    const int N = static_cast<int>(ids.size());
    if (N == 0) throw std::invalid_argument("embedding_mean: empty batch");
    for (const auto& row : ids) {
        if (row.empty()) throw std::invalid_argument("embedding_mean: empty token list");
        for (int t : row)
            if (t < 0 || t >= V) throw std::invalid_argument("embedding_mean: token id out of range");
    }
    Graph<S>& g = *table.graph();
    Tensor<S> out({N, E});
    auto T = table.value().mat();
    for (int i = 0; i < N; ++i) {
        Eigen::Matrix<S, 1, Eigen::Dynamic> acc = Eigen::Matrix<S, 1, Eigen::Dynamic>::Zero(E);
        for (int t : ids[static_cast<size_t>(i)]) acc += T.row(t);
        out.mat().row(i) = acc / static_cast<S>(ids[static_cast<size_t>(i)].size());
    }
    int it = table.id();
    auto idp = std::make_shared<std::vector<std::vector<int>>>(std::move(ids));
    return g.apply(std::move(out), {table}, [it, idp, N, E](Graph<S>& gr, int self) {
        if (!gr.needs_grad(it)) return;
        auto G = gr.grad(self).mat(N, E);
        Tensor<S> dt(gr.value(it).shape);
        for (int i = 0; i < N; ++i) {
            S inv = S(1) / static_cast<S>((*idp)[static_cast<size_t>(i)].size());
            for (int t : (*idp)[static_cast<size_t>(i)]) dt.mat().row(t) += G.row(i) * inv;
        }
        gr.accumulate(it, dt.data);
    });
}

// ---------------------------------------------------------------------------
// contrastive losses

/// Cosine similarity matrix; rows are normalized internally.
template <typename S>
Var<S> cosine_similarity_matrix(Var<S> a, Var<S> b) {
    const auto& sa = a.value().shape;
    const auto& sb = b.value().shape;
    if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[1])
        throw std::invalid_argument("cosine_similarity_matrix: dimension mismatch");
    return pairwise_dot(l2_normalize_rows(a), l2_normalize_rows(b));
}

/// Symmetric cross-entropy over a pre-scaled logit matrix: the mean of the
/// row-wise and column-wise diagonal-target CE terms.
template <typename S>
Var<S> info_nce_from_logits(Var<S> logits) {
    const auto& sl = logits.value().shape;
    if (sl.size() != 2 || sl[0] != sl[1]) throw std::invalid_argument("info_nce: logits must be square");
    if (sl[0] < 2) throw std::invalid_argument("info_nce: batch size must be >= 2");
    std::vector<int> diag(static_cast<size_t>(sl[0]));
    for (int i = 0; i < sl[0]; ++i) diag[static_cast<size_t>(i)] = i;
    auto a = cross_entropy_rows(logits, diag);
    auto b = cross_entropy_rows(transpose(logits), diag);
    return scale(add(a, b), S(0.5));
}

/// InfoNCE with scalar temperature. img, txt: (N, d); tau > 0.
template <typename S>
Var<S> info_nce(Var<S> img, Var<S> txt, Var<S> tau) {
    const auto& si = img.value().shape;
    const auto& st = txt.value().shape;
    if (si != st) throw std::invalid_argument("info_nce: batch shapes must match");
    if (si[0] < 2) throw std::invalid_argument("info_nce: batch size must be >= 2");
    if (!(tau.value()[0] > S(0))) throw std::invalid_argument("info_nce: temperature must be positive");
    auto sim = cosine_similarity_matrix(img, txt);
    return info_nce_from_logits(div_by_scalar(sim, tau));
}

}  // namespace t2ue
