#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "t2ue/eval/metrics.hpp"
#include "t2ue/models/classifier.hpp"
#include "t2ue/models/dual_encoder.hpp"
#include "t2ue/train/trainers.hpp"
#include "t2ue/victim/augment.hpp"

using namespace t2ue;
namespace fs = std::filesystem;

namespace {

Dataset tiny_train(const std::string& tag, int per_class, uint64_t seed) {
    DatasetSpec s;
    s.samples_per_class_train = per_class;
    s.samples_per_class_test = 1;
    s.seed = seed;
    std::string dir = "/tmp/t2ue_tr_" + tag;
    fs::remove_all(dir);
    generate_dataset(s, "train", dir);
    return Dataset::from_manifest(dir + "/manifest.json");
}

}  // namespace

TEST_CASE("make_batches covers every index once with full batches first") {
    Rng r1(9), r2(9);
    auto b1 = make_batches(100, 32, r1);
    auto b2 = make_batches(100, 32, r2);
    CHECK(b1 == b2);  // deterministic under the seed
    std::vector<int> seen(100, 0);
    size_t total = 0;
    for (const auto& b : b1) {
        CHECK(b.size() >= 2);
        for (int i : b) ++seen[static_cast<size_t>(i)];
        total += b.size();
    }
    CHECK(total == 100);
    for (int c : seen) CHECK(c == 1);
}

TEST_CASE("cosine schedule endpoints") {
    CHECK(cosine_lr(0.1, 0, 100) == doctest::Approx(0.1));
    CHECK(cosine_lr(0.1, 100, 100) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(cosine_lr(0.1, 50, 100) == doctest::Approx(0.05));
}

TEST_CASE("optimizers descend a quadratic") {
    for (OptKind kind : {OptKind::adam, OptKind::sgd}) {
        Param<float> p;
        p.name = "x";
        p.value = Tensor<float>::from({2}, {3.0f, -2.0f});
        OptimConfig<float> oc;
        oc.kind = kind;
        oc.lr = kind == OptKind::adam ? 0.05f : 0.1f;
        oc.schedule = LrSchedule::constant;
        Optimizer<float> opt({&p}, oc, 200);
        for (int t = 0; t < 200; ++t) {
            Tensor<float> g({2});
            g.data = 2.0f * p.value.data;  // grad of |x|^2
            opt.step({g});
        }
        CHECK(p.value.data.abs().maxCoeff() <= 1e-2f);
    }
}

TEST_CASE("contrastive trainer: frozen refusal and dataset size validation") {
    Dataset d = tiny_train("con", 2, 5);
    DualEncoder<float> m;
    Rng rng(1);
    m.init(rng, {}, Vocab::build(d.spec.caption_templates, d.spec.colors, d.spec.shapes));
    m.set_frozen(true);
    TrainConfig tc;
    tc.epochs = 1;
    tc.batch_size = 8;
    CHECK_THROWS_AS((void)train_contrastive(m, d, tc), std::invalid_argument);

    m.set_frozen(false);
    tc.batch_size = 10000;
    CHECK_THROWS_AS((void)train_contrastive(m, d, tc), std::invalid_argument);
}

TEST_CASE("contrastive trainer: first-epoch loss near ln(batch) and seeded determinism") {
    Dataset d = tiny_train("con2", 6, 7);  // 96 samples
    TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 32;
    tc.seed = 11;

    auto run = [&](uint64_t init_seed) {
        DualEncoder<float> m;
        Rng rng(init_seed);
        m.init(rng, {}, Vocab::build(d.spec.caption_templates, d.spec.colors, d.spec.shapes));
        return train_contrastive(m, d, tc, {}, false);
    };
    auto l1 = run(3);
    auto l2 = run(3);
    CHECK(l1.back().train_loss == doctest::Approx(l2.back().train_loss).epsilon(1e-9));

    // untrained embeddings spread logits thinly: mean first-epoch loss ~ ln N
    CHECK(l1.front().train_loss == doctest::Approx(std::log(32.0)).epsilon(0.2));
    CHECK(l1.back().train_loss < l1.front().train_loss);
}

TEST_CASE("supervised trainer: determinism and poison-ratio-zero identity") {
    Dataset train = tiny_train("sup", 4, 9);
    Dataset test = tiny_train("sup_t", 1, 10);
    SupervisedConfig sc;
    sc.base.epochs = 2;
    sc.base.batch_size = 16;
    sc.base.seed = 21;

    auto run = [&](const Dataset& data) {
        Classifier<float> m;
        Rng rng(13);
        m.init(rng, Arch::conv4, 16, true);
        return train_supervised(m, data, test, sc, false);
    };
    auto c1 = run(train);
    auto c2 = run(train);
    CHECK(c1.back().train_loss == doctest::Approx(c2.back().train_loss).epsilon(1e-9));
    CHECK(c1.back().test_metric == c2.back().test_metric);
    CHECK(static_cast<int>(c1.size()) == sc.base.epochs);

    // ratio-0 mix is the clean dataset object, bit for bit
    Dataset prot = train;
    for (auto& s : prot.samples) s.image.data += 0.002f;
    Dataset mixed = mix_poison(train, prot, 0.0, 99);
    auto c3 = run(mixed);
    CHECK(c3.back().train_loss == c1.back().train_loss);
    CHECK(c3.back().test_metric == c1.back().test_metric);
}

TEST_CASE("supervised trainer: defense paths run and learn") {
    Dataset train = tiny_train("def", 3, 15);
    Dataset test = tiny_train("def_t", 1, 16);
    for (Defense def : {Defense::cutout, Defense::mixup, Defense::augproxy}) {
        Classifier<float> m;
        Rng rng(17);
        m.init(rng, Arch::conv4, 16, true);
        SupervisedConfig sc;
        sc.base.epochs = 1;
        sc.base.batch_size = 16;
        sc.base.seed = 31;
        sc.defense = def;
        sc.cutout_size = 8;
        auto curve = train_supervised(m, train, test, sc, false);
        CHECK(std::isfinite(curve.back().train_loss));
    }
}
