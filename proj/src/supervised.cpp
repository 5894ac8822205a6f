#include <chrono>
#include <cmath>
#include <iostream>

#include "t2ue/eval/metrics.hpp"
#include "t2ue/train/trainers.hpp"
#include "t2ue/victim/augment.hpp"

namespace t2ue {

Defense defense_from_string(const std::string& s) {
    if (s == "none") return Defense::none;
    if (s == "cutout") return Defense::cutout;
    if (s == "mixup") return Defense::mixup;
    if (s == "augproxy") return Defense::augproxy;
    throw std::invalid_argument("unknown defense: " + s);
}

std::string defense_name(Defense d) {
    switch (d) {
        case Defense::none: return "none";
        case Defense::cutout: return "cutout";
        case Defense::mixup: return "mixup";
        case Defense::augproxy: return "augproxy";
    }
    throw std::invalid_argument("defense_name: bad value");
}

std::vector<EpochRecord> train_supervised(Classifier<float>& model, const Dataset& train, const Dataset& test,
                                          const SupervisedConfig& cfg, bool verbose) {
    cfg.base.validate();
    if (train.size() < cfg.base.batch_size) throw std::invalid_argument("train_supervised: batch_size exceeds dataset");

    Rng rng(cfg.base.seed);
    Rng aug_rng(hash_u64(cfg.base.seed, 0xa06));
    const int steps_per_epoch = static_cast<int>(make_batches(train.size(), cfg.base.batch_size, rng).size());
    Optimizer<float> opt(model.params(), cfg.base.optim(), static_cast<int64_t>(steps_per_epoch) * cfg.base.epochs);

    const int h = train.spec.image_size;
    const int64_t per = static_cast<int64_t>(3) * h * h;

    std::vector<EpochRecord> curve;
    for (int epoch = 1; epoch <= cfg.base.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        auto batches = make_batches(train.size(), cfg.base.batch_size, rng);
        double loss_sum = 0.0;
        int step = 0;
        for (const auto& batch : batches) {
            const int n = static_cast<int>(batch.size());
            Tensor<float> images = train.image_batch(batch);
            std::vector<int> labels = train.label_batch(batch);

            if (cfg.defense == Defense::cutout || cfg.defense == Defense::augproxy) {
                for (int i = 0; i < n; ++i) {
                    Tensor<float> img({3, h, h});
                    for (int64_t j = 0; j < per; ++j) img.data[j] = images.data[i * per + j];
                    Tensor<float> aug = cfg.defense == Defense::cutout ? cutout(img, cfg.cutout_size, aug_rng)
                                                                       : augproxy(img, aug_rng);
                    for (int64_t j = 0; j < per; ++j) images.data[i * per + j] = aug.data[j];
                }
            }

            double lambda = 1.0;
            std::vector<int> perm_labels = labels;
            if (cfg.defense == Defense::mixup) {
                lambda = aug_rng.beta(cfg.mixup_alpha, cfg.mixup_alpha);
                std::vector<int> perm(static_cast<size_t>(n));
                for (int i = 0; i < n; ++i) perm[static_cast<size_t>(i)] = i;
                for (int i = n - 1; i > 0; --i)
                    std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(aug_rng.uniform_int(i + 1))]);
                for (int i = 0; i < n; ++i) perm_labels[static_cast<size_t>(i)] = labels[static_cast<size_t>(perm[static_cast<size_t>(i)])];
                images = mixup_batch(images, perm, lambda);
            }

            Graph<float> g;
            Binder<float> bind(g, true);
            Var<float> logits = model.logits(bind, g.leaf(std::move(images)), true);
            Var<float> loss;
            if (cfg.defense == Defense::mixup) {
                Var<float> la = cross_entropy_rows(logits, labels);
                Var<float> lb = cross_entropy_rows(logits, perm_labels);
                loss = add(scale(la, static_cast<float>(lambda)), scale(lb, static_cast<float>(1.0 - lambda)));
            } else {
                loss = cross_entropy_rows(logits, labels);
            }
            double lv = loss.value()[0];
            if (!std::isfinite(lv))
                throw std::runtime_error("train_supervised: non-finite loss at epoch " + std::to_string(epoch) +
                                         " step " + std::to_string(step));
            g.backward(loss);
            std::vector<Tensor<float>> grads;
            for (auto* p : opt.params()) grads.push_back(bind.grad_of(*p));
            opt.step(grads);
            loss_sum += lv;
            ++step;
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / std::max(1, step);
        rec.test_metric = classify_eval(model, test);
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (verbose)
            std::cerr << "[supervised] epoch " << epoch << "/" << cfg.base.epochs << " loss " << rec.train_loss
                      << " test " << rec.test_metric << "\n";
        curve.push_back(rec);
    }
    return curve;
}

}  // namespace t2ue
