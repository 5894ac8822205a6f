#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "t2ue/core/graph.hpp"
#include "t2ue/core/ops.hpp"
#include "t2ue/core/rng.hpp"

namespace t2ue {

/// Named trainable tensor. Declaration order inside a model defines the
/// serialization order of its checkpoint blocks.
template <typename S>
struct Param {
    std::string name;
    Tensor<S> value;
};

/// Per-graph binding of parameters to leaf variables. One binder per forward
/// pass; `trainable` decides whether the leaves request gradients.
template <typename S>
class Binder {
public:
    Binder(Graph<S>& g, bool trainable) : g_(&g), trainable_(trainable) {}

    Var<S> operator()(Param<S>& p) {
        auto it = vars_.find(&p);
        if (it != vars_.end()) return it->second;
        Var<S> v = g_->leaf(p.value, trainable_);
        vars_.emplace(&p, v);
        return v;
    }

    Graph<S>& graph() { return *g_; }

    /// Gradient accumulated for `p` in this graph (zeros if unused).
    Tensor<S> grad_of(const Param<S>& p) const {
        auto it = vars_.find(const_cast<Param<S>*>(&p));
        if (it == vars_.end() || !g_->has_grad(it->second.id())) return Tensor<S>::zeros(p.value.shape);
        return g_->grad(it->second.id());
    }

private:
    Graph<S>* g_;
    bool trainable_;
    std::unordered_map<Param<S>*, Var<S>> vars_;
};

// ---------------------------------------------------------------------------
// initializers

template <typename S>
void fill_normal(Tensor<S>& t, Rng& rng, double stddev) {
    for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<S>(rng.normal() * stddev);
}

template <typename S>
void he_init(Tensor<S>& t, Rng& rng, int fan_in) {
    fill_normal(t, rng, std::sqrt(2.0 / static_cast<double>(fan_in)));
}

// ---------------------------------------------------------------------------
// layers

template <typename S>
struct Linear {
    Param<S> w;  // (in, out)
    Param<S> b;  // (out)

    void init(const std::string& name, Rng& rng, int in, int out, double w_scale = -1.0) {
        w.name = name + ".w";
        b.name = name + ".b";
        w.value = Tensor<S>({in, out});
        b.value = Tensor<S>({out});
        double s = w_scale >= 0.0 ? w_scale : std::sqrt(2.0 / static_cast<double>(in));
        fill_normal(w.value, rng, s);
    }

    Var<S> operator()(Binder<S>& bind, Var<S> x) { return add_rowvec(matmul(x, bind(w)), bind(b)); }

    template <typename F>
    void visit(F&& f) {
        f(w);
        f(b);
    }
};

template <typename S>
struct Conv2dLayer {
    ConvSpec spec;
    Param<S> w;  // (Cin*k*k, Cout)
    Param<S> b;  // (Cout)

    void init(const std::string& name, Rng& rng, const ConvSpec& cs, double w_scale = -1.0) {
        spec = cs;
        int K = cs.in_ch * cs.kernel * cs.kernel;
        w.name = name + ".w";
        b.name = name + ".b";
        w.value = Tensor<S>({K, cs.out_ch});
        b.value = Tensor<S>({cs.out_ch});
        double s = w_scale >= 0.0 ? w_scale : std::sqrt(2.0 / static_cast<double>(K));
        fill_normal(w.value, rng, s);
    }

    Var<S> operator()(Binder<S>& bind, Var<S> x) { return conv2d(x, bind(w), bind(b), spec); }

    template <typename F>
    void visit(F&& f) {
        f(w);
        f(b);
    }
};

/// Conditional batch normalization: per-channel scale and shift predicted
/// from a conditioning vector by two affine heads. Running moments are kept
/// as named (non-trainable) buffers so they checkpoint with the model.
template <typename S>
struct CondBatchNorm {
    Linear<S> gamma_head;  // d_cond -> C, bias starts at 1
    Linear<S> beta_head;   // d_cond -> C, bias starts at 0
    Param<S> run_mean;
    Param<S> run_var;
    S eps = S(1e-5);
    S momentum = S(0.1);
    int channels = 0;

    void init(const std::string& name, Rng& rng, int d_cond, int c) {
        channels = c;
        gamma_head.init(name + ".gamma", rng, d_cond, c, 0.02);
        beta_head.init(name + ".beta", rng, d_cond, c, 0.02);
        gamma_head.b.value.data.setConstant(S(1));
        run_mean.name = name + ".run_mean";
        run_mean.value = Tensor<S>({c});
        run_var.name = name + ".run_var";
        run_var.value = Tensor<S>::full({c}, S(1));
    }

    Var<S> operator()(Binder<S>& bind, Var<S> h, Var<S> cond, bool training) {
        Var<S> gamma = gamma_head(bind, cond);
        Var<S> beta = beta_head(bind, cond);
        if (training) return sscbn_train(h, gamma, beta, eps, &run_mean.value.data, &run_var.value.data, momentum);
        return sscbn_infer(h, gamma, beta, eps, run_mean.value.data, run_var.value.data);
    }

    template <typename F>
    void visit(F&& f) {
        gamma_head.visit(f);
        beta_head.visit(f);
    }

    template <typename F>
    void visit_buffers(F&& f) {
        f(run_mean);
        f(run_var);
    }
};

/// Plain batch normalization; a fixed per-channel affine broadcast over the
/// batch, reusing the conditional kernel.
template <typename S>
struct BatchNorm {
    Param<S> gamma;  // (C)
    Param<S> beta;   // (C)
    Param<S> run_mean;
    Param<S> run_var;
    S eps = S(1e-5);
    S momentum = S(0.1);

    void init(const std::string& name, int c) {
        gamma.name = name + ".gamma";
        beta.name = name + ".beta";
        gamma.value = Tensor<S>::full({c}, S(1));
        beta.value = Tensor<S>({c});
        run_mean.name = name + ".run_mean";
        run_mean.value = Tensor<S>({c});
        run_var.name = name + ".run_var";
        run_var.value = Tensor<S>::full({c}, S(1));
    }

    Var<S> operator()(Binder<S>& bind, Var<S> h, bool training) {
        int n = h.value().shape[0];
        Var<S> ga = broadcast_rows(bind(gamma), n);
        Var<S> be = broadcast_rows(bind(beta), n);
        if (training) return sscbn_train(h, ga, be, eps, &run_mean.value.data, &run_var.value.data, momentum);
        return sscbn_infer(h, ga, be, eps, run_mean.value.data, run_var.value.data);
    }

    template <typename F>
    void visit(F&& f) {
        f(gamma);
        f(beta);
    }

    template <typename F>
    void visit_buffers(F&& f) {
        f(run_mean);
        f(run_var);
    }
};

}  // namespace t2ue
