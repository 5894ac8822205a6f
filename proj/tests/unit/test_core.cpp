#include <doctest.h>

#include <cmath>
#include <vector>

#include "t2ue/core/gradcheck.hpp"
#include "t2ue/core/graph.hpp"
#include "t2ue/core/ops.hpp"
#include "t2ue/core/rng.hpp"

using namespace t2ue;

namespace {

Tensor<double> random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
    Tensor<double> t(std::move(shape));
    for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal() * scale;
    return t;
}

}  // namespace

TEST_CASE("cosine similarity analytic values") {
    Graph<double> g;
    auto a = g.leaf(Tensor<double>::from({1, 2}, {1, 0}));
    auto b = g.leaf(Tensor<double>::from({1, 2}, {1, 0}));
    CHECK(cosine_similarity_matrix(a, b).value()[0] == doctest::Approx(1.0).epsilon(1e-12));

    auto c = g.leaf(Tensor<double>::from({1, 2}, {0, 1}));
    CHECK(cosine_similarity_matrix(a, c).value()[0] == doctest::Approx(0.0).epsilon(1e-12));

    auto d = g.leaf(Tensor<double>::from({1, 2}, {1, 1}));
    CHECK(cosine_similarity_matrix(d, a).value()[0] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("cosine similarity rejects zero-norm rows and bad dims") {
    Graph<double> g;
    auto a = g.leaf(Tensor<double>::from({1, 2}, {0, 0}));
    auto b = g.leaf(Tensor<double>::from({1, 2}, {1, 0}));
    CHECK_THROWS_AS((void)cosine_similarity_matrix(a, b), std::invalid_argument);

    auto c = g.leaf(Tensor<double>::from({1, 3}, {1, 0, 0}));
    CHECK_THROWS_AS((void)cosine_similarity_matrix(b, c), std::invalid_argument);
}

TEST_CASE("cosine similarity bounded in [-1, 1]") {
    Rng rng(7);
    Graph<double> g;
    auto a = g.leaf(random_tensor({5, 8}, rng, 3.0));
    auto b = g.leaf(random_tensor({6, 8}, rng, 0.2));
    auto s = cosine_similarity_matrix(a, b);
    for (int64_t i = 0; i < s.value().size(); ++i) {
        CHECK(s.value()[i] <= 1.0 + 1e-6);
        CHECK(s.value()[i] >= -1.0 - 1e-6);
    }
}

TEST_CASE("info_nce closed forms") {
    // uniform logits: loss = ln N
    {
        Graph<double> g;
        auto l = g.leaf(Tensor<double>::zeros({4, 4}));
        CHECK(info_nce_from_logits(l).value()[0] == doctest::Approx(std::log(4.0)).epsilon(1e-9));
    }
    // hand-computed two-pair case
    {
        Graph<double> g;
        auto l = g.leaf(Tensor<double>::from({2, 2}, {1, 0, 0, 1}));
        CHECK(info_nce_from_logits(l).value()[0] == doctest::Approx(std::log(1.0 + std::exp(-1.0))).epsilon(1e-9));
        CHECK(info_nce_from_logits(l).value()[0] == doctest::Approx(0.313262).epsilon(1e-5));
    }
    // saturated correct pairs
    {
        Graph<double> g;
        auto l = g.leaf(Tensor<double>::from({2, 2}, {50, -50, -50, 50}));
        CHECK(info_nce_from_logits(l).value()[0] < 1e-8);
    }
}

TEST_CASE("info_nce validation") {
    Graph<double> g;
    Rng rng(3);
    auto a = g.leaf(random_tensor({1, 4}, rng));
    auto b = g.leaf(random_tensor({1, 4}, rng));
    auto tau = g.leaf(Tensor<double>::scalar(0.1));
    CHECK_THROWS_AS((void)info_nce(a, b, tau), std::invalid_argument);  // N < 2

    auto c = g.leaf(random_tensor({3, 4}, rng));
    auto d = g.leaf(random_tensor({3, 4}, rng));
    auto bad_tau = g.leaf(Tensor<double>::scalar(0.0));
    CHECK_THROWS_AS((void)info_nce(c, d, bad_tau), std::invalid_argument);
}

TEST_CASE("info_nce is exactly symmetric in its arguments") {
    Rng rng(11);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor<double> img = random_tensor({6, 8}, rng);
        Tensor<double> txt = random_tensor({6, 8}, rng);
        Graph<double> g;
        auto tau = g.leaf(Tensor<double>::scalar(0.07));
        double ab = info_nce(g.leaf(img), g.leaf(txt), tau).value()[0];
        double ba = info_nce(g.leaf(txt), g.leaf(img), tau).value()[0];
        CHECK(ab == ba);  // bitwise
    }
}

TEST_CASE("info_nce lower bound and uniform equality") {
    Rng rng(13);
    for (int trial = 0; trial < 10; ++trial) {
        Graph<double> g;
        auto l = g.leaf(random_tensor({5, 5}, rng, 2.0));
        CHECK(info_nce_from_logits(l).value()[0] >= 0.0);
    }
    Graph<double> g;
    auto l = g.leaf(Tensor<double>::full({7, 7}, 3.25));
    CHECK(info_nce_from_logits(l).value()[0] == doctest::Approx(std::log(7.0)).epsilon(1e-12));
}

TEST_CASE("info_nce monotone in diagonal logits") {
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor<double> base = random_tensor({4, 4}, rng, 1.5);
        Graph<double> g0;
        double before = info_nce_from_logits(g0.leaf(base)).value()[0];
        int i = rng.uniform_int(4);
        base.mat()(i, i) += rng.uniform(0.0, 2.0);
        Graph<double> g1;
        double after = info_nce_from_logits(g1.leaf(base)).value()[0];
        CHECK(after <= before + 1e-12);
    }
}

TEST_CASE("grad_check harness on analytic quadratic") {
    Rng rng(5);
    auto make = [](Graph<double>&, const std::vector<Var<double>>& xs) { return sum_all(mul(xs[0], xs[0])); };
    Tensor<double> x = Tensor<double>::from({2}, {1, 2});
    auto res = grad_check(make, {x}, 1e-5);
    CHECK(res.max_rel_err <= 1e-7);

    // verify the analytic gradient itself is [2, 4]
    Graph<double> g;
    auto v = g.leaf(x, true);
    auto loss = sum_all(mul(v, v));
    g.backward(loss);
    CHECK(g.grad(v.id())[0] == doctest::Approx(2.0));
    CHECK(g.grad(v.id())[1] == doctest::Approx(4.0));
}

TEST_CASE("grad_check flags a deliberately wrong gradient") {
    // y = sum(x) with a backward that doubles the true gradient
    auto make = [](Graph<double>& g, const std::vector<Var<double>>& xs) {
        int ix = xs[0].id();
        Tensor<double> out = Tensor<double>::scalar(xs[0].value().data.sum());
        return g.apply(std::move(out), {xs[0]}, [ix](Graph<double>& gr, int self) {
            double go = gr.grad(self).data[0];
            gr.accumulate(ix, ArrayX<double>::Constant(gr.value(ix).size(), 2.0 * go));
        });
    };
    Rng rng(23);
    auto res = grad_check(make, {random_tensor({3}, rng)}, 1e-5);
    CHECK(res.max_rel_err == doctest::Approx(0.5).epsilon(1e-4));
}

TEST_CASE("gradients: elementwise and matmul ops") {
    Rng rng(29);
    auto relu_like = [](Graph<double>&, const std::vector<Var<double>>& xs) {
        return sum_all(mul(leaky_relu(xs[0], 0.2), tanh_act(xs[1])));
    };
    auto r1 = grad_check(relu_like, {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)}, 1e-6);
    CHECK(r1.max_rel_err <= 1e-4);

    auto mm = [](Graph<double>&, const std::vector<Var<double>>& xs) {
        return mean_all(matmul(xs[0], xs[1]));
    };
    auto r2 = grad_check(mm, {random_tensor({3, 5}, rng), random_tensor({5, 2}, rng)}, 1e-6);
    CHECK(r2.max_rel_err <= 1e-6);

    auto lin = [](Graph<double>&, const std::vector<Var<double>>& xs) {
        return mean_all(exp_op(scale(add_rowvec(xs[0], xs[1]), 0.3)));
    };
    auto r3 = grad_check(lin, {random_tensor({4, 3}, rng), random_tensor({3}, rng)}, 1e-6);
    CHECK(r3.max_rel_err <= 1e-6);
}

TEST_CASE("gradients: normalize, pairwise dot, transpose, div-by-scalar") {
    Rng rng(31);
    auto f = [](Graph<double>&, const std::vector<Var<double>>& xs) {
        auto s = pairwise_dot(l2_normalize_rows(xs[0]), l2_normalize_rows(xs[1]));
        return mean_all(mul(s, transpose(transpose(s))));
    };
    auto r = grad_check(f, {random_tensor({3, 4}, rng), random_tensor({2, 4}, rng)}, 1e-6);
    CHECK(r.max_rel_err <= 1e-4);

    auto fdiv = [](Graph<double>&, const std::vector<Var<double>>& xs) {
        return sum_all(div_by_scalar(xs[0], xs[1]));
    };
    Tensor<double> tau = Tensor<double>::scalar(0.31);
    auto r2 = grad_check(fdiv, {random_tensor({2, 3}, rng), tau}, 1e-6);
    CHECK(r2.max_rel_err <= 1e-6);
}

TEST_CASE("gradients: info_nce end to end") {
    Rng rng(37);
    auto f = [](Graph<double>&, const std::vector<Var<double>>& xs) {
        return info_nce(xs[0], xs[1], xs[2]);
    };
    for (int trial = 0; trial < 3; ++trial) {
        auto r = grad_check(
            f, {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng), Tensor<double>::scalar(0.2)}, 1e-6);
        CHECK(r.max_rel_err <= 1e-4);
    }
}

TEST_CASE("gradients: conv2d, upsample, pooling, clamp") {
    Rng rng(41);
    ConvSpec cs{2, 3, 3, 2, 1};
    auto f = [cs](Graph<double>&, const std::vector<Var<double>>& xs) {
        return mean_all(conv2d(xs[0], xs[1], xs[2], cs));
    };
    auto r = grad_check(
        f, {random_tensor({2, 2, 5, 5}, rng), random_tensor({2 * 9, 3}, rng), random_tensor({3}, rng)}, 1e-6);
    CHECK(r.max_rel_err <= 1e-4);

    ConvSpec c1{2, 2, 1, 1, 0};
    auto f2 = [c1](Graph<double>&, const std::vector<Var<double>>& xs) {
        auto up = upsample2x(xs[0]);
        auto y = conv2d(up, xs[1], xs[2], c1);
        return sum_all(global_avg_pool(clamp01(y)));
    };
    auto r2 = grad_check(
        f2, {random_tensor({2, 2, 3, 3}, rng, 0.4), random_tensor({2, 2}, rng), random_tensor({2}, rng, 0.1)},
        1e-6);
    CHECK(r2.max_rel_err <= 1e-4);
}

TEST_CASE("gradients: cross entropy and embedding") {
    Rng rng(43);
    auto f = [](Graph<double>&, const std::vector<Var<double>>& xs) {
        return cross_entropy_rows(xs[0], {1, 0, 2});
    };
    auto r = grad_check(f, {random_tensor({3, 3}, rng)}, 1e-6);
    CHECK(r.max_rel_err <= 1e-6);

    std::vector<std::vector<int>> ids = {{0, 1}, {2}, {1, 1, 3}};
    auto f2 = [ids](Graph<double>&, const std::vector<Var<double>>& xs) {
        return mean_all(embedding_mean(xs[0], ids));
    };
    auto r2 = grad_check(f2, {random_tensor({4, 3}, rng)}, 1e-6);
    CHECK(r2.max_rel_err <= 1e-6);
}

TEST_CASE("sscbn reduces to batch standardization under identity heads") {
    Rng rng(47);
    const int n = 4, c = 3, h = 5, w = 5;
    Graph<double> g;
    auto x = g.leaf(random_tensor({n, c, h, w}, rng, 2.0));
    auto gamma = g.leaf(Tensor<double>::full({n, c}, 1.0));
    auto beta = g.leaf(Tensor<double>::zeros({n, c}));
    auto y = sscbn_train(x, gamma, beta, 1e-5);
    // per-channel mean ~0, var ~1 over batch+spatial
    const int hw = h * w;
    for (int ch = 0; ch < c; ++ch) {
        double mu = 0, var = 0;
        for (int b = 0; b < n; ++b)
            for (int i = 0; i < hw; ++i) mu += y.value().data[(b * c + ch) * hw + i];
        mu /= n * hw;
        for (int b = 0; b < n; ++b)
            for (int i = 0; i < hw; ++i) {
                double d = y.value().data[(b * c + ch) * hw + i] - mu;
                var += d * d;
            }
        var /= n * hw;
        CHECK(mu == doctest::Approx(0.0).epsilon(1e-9));
        CHECK(var == doctest::Approx(1.0).epsilon(1e-3));  // up to eps_bn
    }
}

TEST_CASE("sscbn affine heads scale and shift") {
    Rng rng(53);
    const int n = 3, c = 2, h = 4, w = 4;
    Graph<double> g;
    auto x = g.leaf(random_tensor({n, c, h, w}, rng));
    auto gamma = g.leaf(Tensor<double>::full({n, c}, 2.0));
    auto beta = g.leaf(Tensor<double>::full({n, c}, 1.0));
    auto y = sscbn_train(x, gamma, beta, 1e-5);
    const int hw = h * w;
    for (int ch = 0; ch < c; ++ch) {
        double mu = 0, var = 0;
        for (int b = 0; b < n; ++b)
            for (int i = 0; i < hw; ++i) mu += y.value().data[(b * c + ch) * hw + i];
        mu /= n * hw;
        for (int b = 0; b < n; ++b)
            for (int i = 0; i < hw; ++i) {
                double d = y.value().data[(b * c + ch) * hw + i] - mu;
                var += d * d;
            }
        var /= n * hw;
        CHECK(mu == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(std::sqrt(var) == doctest::Approx(2.0).epsilon(1e-3));
    }
}

TEST_CASE("sscbn batch size and shape validation") {
    Graph<double> g;
    Rng rng(59);
    auto x1 = g.leaf(random_tensor({1, 2, 3, 3}, rng));
    auto ga = g.leaf(Tensor<double>::full({1, 2}, 1.0));
    CHECK_THROWS_AS((void)sscbn_train(x1, ga, ga, 1e-5), std::invalid_argument);

    auto x2 = g.leaf(random_tensor({2, 3, 3, 3}, rng));
    auto ga2 = g.leaf(Tensor<double>::full({2, 2}, 1.0));  // wrong channel count
    CHECK_THROWS_AS((void)sscbn_train(x2, ga2, ga2, 1e-5), std::invalid_argument);
}

TEST_CASE("sscbn gradients vs finite differences (train and infer)") {
    Rng rng(61);
    auto f = [](Graph<double>& g, const std::vector<Var<double>>& xs) {
        // heads included: gamma = emb*Wg + 1, beta = emb*Wb
        auto ones = g.leaf(Tensor<double>::full({2, 3}, 1.0));
        auto gamma = add(matmul(xs[1], xs[2]), ones);
        auto beta = matmul(xs[1], xs[3]);
        auto y = sscbn_train(xs[0], gamma, beta, 1e-5);
        return mean_all(mul(y, y));
    };
    auto r = grad_check(f,
                        {random_tensor({2, 3, 4, 4}, rng), random_tensor({2, 5}, rng),
                         random_tensor({5, 3}, rng, 0.3), random_tensor({5, 3}, rng, 0.3)},
                        1e-6);
    CHECK(r.max_rel_err <= 1e-4);

    ArrayX<double> fm = ArrayX<double>::Constant(3, 0.2);
    ArrayX<double> fv = ArrayX<double>::Constant(3, 1.7);
    auto f2 = [&fm, &fv](Graph<double>&, const std::vector<Var<double>>& xs) {
        auto y = sscbn_infer(xs[0], xs[1], xs[2], 1e-5, fm, fv);
        return mean_all(mul(y, y));
    };
    auto r2 = grad_check(
        f2, {random_tensor({2, 3, 4, 4}, rng), random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)}, 1e-6);
    CHECK(r2.max_rel_err <= 1e-4);
}

TEST_CASE("sscbn running statistics update") {
    Rng rng(67);
    ArrayX<double> rm = ArrayX<double>::Zero(2);
    ArrayX<double> rv = ArrayX<double>::Ones(2);
    Graph<double> g;
    auto x = g.leaf(random_tensor({3, 2, 4, 4}, rng, 2.0));
    auto ga = g.leaf(Tensor<double>::full({3, 2}, 1.0));
    auto be = g.leaf(Tensor<double>::zeros({3, 2}));
    (void)sscbn_train(x, ga, be, 1e-5, &rm, &rv, 0.1);
    // after one step: 0.9*init + 0.1*batch
    const int hw = 16;
    for (int c = 0; c < 2; ++c) {
        double mu = 0;
        for (int n = 0; n < 3; ++n)
            for (int i = 0; i < hw; ++i) mu += x.value().data[(n * 2 + c) * hw + i];
        mu /= 3 * hw;
        CHECK(rm[c] == doctest::Approx(0.1 * mu).epsilon(1e-9));
    }
}
