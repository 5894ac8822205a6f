#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "t2ue/core/gradcheck.hpp"
#include "t2ue/models/classifier.hpp"
#include "t2ue/models/dual_encoder.hpp"
#include "t2ue/models/generator.hpp"

using namespace t2ue;
namespace fs = std::filesystem;

namespace {

Vocab toy_vocab() {
    return Vocab::build({"a photo of a {color} {shape}", "the {shape} is {color}"}, {"red", "blue"},
                        {"circle", "square"});
}

DualEncoder<float> tiny_encoder(uint64_t seed = 11) {
    DualEncoder<float> m;
    Rng rng(seed);
    m.init(rng, {}, toy_vocab());
    return m;
}

std::string slurp(const std::string& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

Tensor<float> random_images(int n, int side, uint64_t seed) {
    Tensor<float> t({n, 3, side, side});
    Rng rng(seed);
    for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(rng.uniform());
    return t;
}

}  // namespace

TEST_CASE("vocab encodes known words and maps unknown ones to UNK") {
    Vocab v = toy_vocab();
    auto ids = v.encode("a photo of a red circle");
    for (int id : ids) CHECK(id > 0);
    int64_t before = v.unk_count();
    auto ids2 = v.encode("a photo of a purple circle");
    CHECK(v.unk_count() == before + 1);
    CHECK(ids2[4] == 0);  // "purple" -> UNK slot
    CHECK_THROWS_AS((void)v.encode(""), std::invalid_argument);
}

TEST_CASE("encode_text: determinism and raw/normalized consistency") {
    auto m = tiny_encoder();
    Graph<float> g;
    Binder<float> bind(g, false);
    std::vector<std::string> caps = {"a photo of a red circle", "a photo of a red circle",
                                     "the square is blue"};
    Var<float> raw = m.encode_text_raw(bind, caps);
    Var<float> norm = l2_normalize_rows(raw);
    auto R = raw.value().mat(3, 64);
    auto N = norm.value().mat(3, 64);
    CHECK((R.row(0) - R.row(1)).norm() == 0.0f);  // identical captions, identical rows
    for (int i = 0; i < 3; ++i) {
        CHECK(N.row(i).norm() == doctest::Approx(1.0).epsilon(1e-5));
        Eigen::RowVectorXf renorm = R.row(i) / R.row(i).norm();
        CHECK((renorm - N.row(i)).norm() <= 1e-6f);
    }
}

TEST_CASE("encode_image: normalized rows, shape checks, duplicate determinism") {
    auto m = tiny_encoder();
    Tensor<float> batch = random_images(4, 32, 5);
    // duplicate row 0 into row 1
    const int64_t per = 3 * 32 * 32;
    for (int64_t j = 0; j < per; ++j) batch.data[per + j] = batch.data[j];
    Graph<float> g;
    Binder<float> bind(g, false);
    Var<float> e = m.encode_image(bind, g.leaf(batch), false);
    CHECK(e.value().shape == std::vector<int>{4, 64});
    auto E = e.value().mat(4, 64);
    for (int i = 0; i < 4; ++i) CHECK(E.row(i).norm() == doctest::Approx(1.0).epsilon(1e-5));
    CHECK((E.row(0) - E.row(1)).norm() == 0.0f);

    Graph<float> g2;
    Binder<float> b2(g2, false);
    CHECK_THROWS_AS((void)m.encode_image(b2, g2.leaf(random_images(2, 16, 1)), false), std::invalid_argument);
}

TEST_CASE("dual encoder checkpoint round trip is bit-exact") {
    fs::create_directories("/tmp/t2ue_test_ckpt");
    auto m = tiny_encoder(42);
    m.set_frozen(true);
    std::string p1 = "/tmp/t2ue_test_ckpt/a.t2ue", p2 = "/tmp/t2ue_test_ckpt/b.t2ue";
    m.save(p1);
    DualEncoder<float> n = DualEncoder<float>::load(p1);
    CHECK(n.frozen());
    n.save(p2);
    CHECK(slurp(p1) == slurp(p2));

    // loaded model reproduces embeddings exactly
    Tensor<float> imgs = random_images(2, 32, 9);
    Graph<float> ga, gb;
    Binder<float> ba(ga, false), bb(gb, false);
    auto ea = m.encode_image(ba, ga.leaf(imgs), false);
    auto eb = n.encode_image(bb, gb.leaf(imgs), false);
    CHECK((ea.value().data - eb.value().data).abs().maxCoeff() == 0.0f);
}

TEST_CASE("generator bound holds for random inputs and vanishes with a zero head") {
    Generator<float> gen;
    Rng rng(3);
    gen.init(rng, {});
    const float eps = 8.0f / 255.0f;
    Rng zr(7);
    Tensor<float> cond({8, 64}), z({8, 64});
    for (int64_t i = 0; i < cond.size(); ++i) cond[i] = static_cast<float>(zr.normal() * 3.0);
    for (int64_t i = 0; i < z.size(); ++i) z[i] = static_cast<float>(zr.normal());
    Tensor<float> d = generate_noise(gen, cond, z);
    CHECK(d.shape == std::vector<int>{8, 3, 32, 32});
    CHECK(d.data.abs().maxCoeff() <= eps);

    gen.head.w.value.data.setZero();
    gen.head.b.value.data.setZero();
    Tensor<float> d0 = generate_noise(gen, cond, z);
    CHECK(d0.data.abs().maxCoeff() == 0.0f);

    // raw output pinned at 1 -> eps * tanh(1)
    gen.head.b.value.data.setConstant(1.0f);
    Tensor<float> d1 = generate_noise(gen, cond, z);
    for (int64_t i = 0; i < d1.size(); ++i)
        CHECK(d1[i] == doctest::Approx(eps * std::tanh(1.0)).epsilon(1e-6));
}

TEST_CASE("generator inference is deterministic and sensitive to the conditioning text") {
    Generator<float> gen;
    Rng rng(5);
    gen.init(rng, {});
    Rng zr(13);
    Tensor<float> z({2, 64});
    for (int64_t i = 0; i < z.size(); ++i) z[i] = static_cast<float>(zr.normal());
    Tensor<float> ca({2, 64}), cb({2, 64});
    for (int64_t i = 0; i < ca.size(); ++i) ca[i] = static_cast<float>(zr.normal());
    for (int64_t i = 0; i < cb.size(); ++i) cb[i] = static_cast<float>(zr.normal());

    Tensor<float> d1 = generate_noise(gen, ca, z);
    Tensor<float> d2 = generate_noise(gen, ca, z);
    CHECK((d1.data - d2.data).abs().maxCoeff() == 0.0f);

    Tensor<float> d3 = generate_noise(gen, cb, z);
    double rel = std::sqrt((d1.data - d3.data).square().sum() / (d1.data.square().sum() + 1e-20));
    CHECK(rel >= 1e-3);

    Tensor<float> bad({2, 32});
    CHECK_THROWS_AS((void)generate_noise(gen, bad, z), std::invalid_argument);
}

TEST_CASE("ssacn block: upsampling shape and pure-skip identity") {
    SsacnBlock<double> blk;
    Rng rng(17);
    blk.init("blk", rng, 4, 4, 8, 0.2);
    blk.conv1.w.value.data.setZero();
    blk.conv1.b.value.data.setZero();
    blk.conv2.w.value.data.setZero();
    blk.conv2.b.value.data.setZero();

    Graph<double> g;
    Binder<double> bind(g, false);
    Tensor<double> x({2, 4, 4, 4});
    Rng xr(19);
    for (int64_t i = 0; i < x.size(); ++i) x[i] = xr.normal();
    Tensor<double> cond({2, 8});
    for (int64_t i = 0; i < cond.size(); ++i) cond[i] = xr.normal();
    Var<double> y = blk(bind, g.leaf(x), g.leaf(cond), true);
    CHECK(y.value().shape == std::vector<int>{2, 4, 8, 8});

    Graph<double> g2;
    Binder<double> b2(g2, false);
    Var<double> up = upsample2x(g2.leaf(x));
    Graph<double> g3;
    Binder<double> b3(g3, false);
    Var<double> y2 = blk(b3, g3.leaf(x), g3.leaf(cond), true);
    CHECK((y2.value().data - up.value().data).abs().maxCoeff() == 0.0);
}

TEST_CASE("ssacn block conditioning path carries gradient") {
    SsacnBlock<double> blk;
    Rng rng2(23);
    blk.init("blk", rng2, 3, 2, 4, 0.2);
    auto make = [&blk](Graph<double>& g, const std::vector<Var<double>>& xs) {
        Binder<double> bind(g, false);
        Var<double> y = blk(bind, xs[0], xs[1], true);
        return mean_all(mul(y, y));
    };
    Rng rng(29);
    Tensor<double> x({2, 3, 3, 3});
    for (int64_t i = 0; i < x.size(); ++i) x[i] = rng.normal();
    Tensor<double> cond({2, 4});
    for (int64_t i = 0; i < cond.size(); ++i) cond[i] = rng.normal();
    auto res = grad_check(make, {x, cond}, 1e-6);
    CHECK(res.max_rel_err <= 1e-4);

    // explicit non-zero gradient w.r.t. the conditioning vector
    Graph<double> g;
    auto vx = g.leaf(x, true);
    auto vc = g.leaf(cond, true);
    Binder<double> bind(g, false);
    auto loss = sum_all(blk(bind, vx, vc, true));
    g.backward(loss);
    CHECK(g.grad(vc.id()).data.abs().maxCoeff() > 0.0);
}

TEST_CASE("generator parameter gradients match finite differences") {
    GeneratorConfig cfg;
    cfg.latent_dim = 4;
    cfg.cond_dim = 4;
    cfg.base_channels = 4;
    cfg.base_size = 2;
    cfg.block_channels = {3};
    cfg.head_init = 0.3;
    Generator<double> gen;
    Rng rng(31);
    gen.init(rng, cfg);

    Rng dr(37);
    Tensor<double> cond({2, 4}), z({2, 4});
    for (int64_t i = 0; i < cond.size(); ++i) cond[i] = dr.normal();
    for (int64_t i = 0; i < z.size(); ++i) z[i] = dr.normal();

    auto loss_value = [&]() {
        Graph<double> g;
        Binder<double> bind(g, false);
        return sum_all(gen.forward(bind, g.leaf(cond), g.leaf(z), true)).value()[0];
    };

    // analytic pass: sum(delta) w.r.t. every generator parameter
    Graph<double> g;
    Binder<double> bind(g, true);
    Var<double> loss = sum_all(gen.forward(bind, g.leaf(cond), g.leaf(z), true));
    g.backward(loss);

    // conv biases feeding a normalization layer are near-invariant
    // directions; a larger step keeps the quotient out of cancellation noise
    const double h = 1e-4;
    double max_rel = 0.0;
    for (Param<double>* p : gen.params()) {
        Tensor<double> analytic = bind.grad_of(*p);
        for (int64_t i = 0; i < std::min<int64_t>(p->value.size(), 3); ++i) {
            double save = p->value[i];
            p->value[i] = save + h;
            double lp = loss_value();
            p->value[i] = save - h;
            double lm = loss_value();
            p->value[i] = save;
            double num = (lp - lm) / (2 * h);
            double rel = std::fabs(analytic[i] - num) / std::max({std::fabs(analytic[i]), std::fabs(num), 1e-8});
            max_rel = std::max(max_rel, rel);
        }
    }
    CHECK(max_rel <= 1e-4);
}

TEST_CASE("generator checkpoint round trip") {
    Generator<float> gen;
    Rng rng(41);
    GeneratorConfig cfg;
    cfg.block_channels = {16, 8, 4};
    gen.init(rng, cfg);
    fs::create_directories("/tmp/t2ue_test_ckpt");
    gen.save("/tmp/t2ue_test_ckpt/g1.t2ue");
    Generator<float> g2 = Generator<float>::load("/tmp/t2ue_test_ckpt/g1.t2ue");
    g2.save("/tmp/t2ue_test_ckpt/g2.t2ue");
    CHECK(slurp("/tmp/t2ue_test_ckpt/g1.t2ue") == slurp("/tmp/t2ue_test_ckpt/g2.t2ue"));
    CHECK(g2.cfg.block_channels == cfg.block_channels);
}

TEST_CASE("generator config validation") {
    GeneratorConfig bad;
    bad.epsilon_num = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    GeneratorConfig ok;
    CHECK(ok.output_size() == 32);
    CHECK(ok.epsilon() == doctest::Approx(8.0 / 255.0));
}

TEST_CASE("classifier checkpoint round trip and logits shape") {
    Classifier<float> c;
    Rng rng(43);
    c.init(rng, Arch::conv4_residual, 16, true);
    Graph<float> g;
    Binder<float> bind(g, false);
    Var<float> l = c.logits(bind, g.leaf(random_images(3, 32, 10)), false);
    CHECK(l.value().shape == std::vector<int>{3, 16});

    fs::create_directories("/tmp/t2ue_test_ckpt");
    c.save("/tmp/t2ue_test_ckpt/c1.t2ue");
    Classifier<float> c2 = Classifier<float>::load("/tmp/t2ue_test_ckpt/c1.t2ue");
    Graph<float> g2;
    Binder<float> b2(g2, false);
    Var<float> l2 = c2.logits(b2, g2.leaf(random_images(3, 32, 10)), false);
    CHECK((l.value().data - l2.value().data).abs().maxCoeff() == 0.0f);
}
