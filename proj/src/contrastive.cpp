#include <chrono>
#include <cmath>
#include <iostream>

#include "t2ue/train/trainers.hpp"

namespace t2ue {

std::vector<std::vector<int>> make_batches(int n, int batch_size, Rng& rng) {
    std::vector<int> idx(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
    for (int i = n - 1; i > 0; --i) std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(rng.uniform_int(i + 1))]);
    std::vector<std::vector<int>> batches;
    for (int start = 0; start < n; start += batch_size) {
        int m = std::min(batch_size, n - start);
        if (m < 2) break;  // contrastive/batch-norm steps need >= 2
        batches.emplace_back(idx.begin() + start, idx.begin() + start + m);
    }
    return batches;
}

std::vector<EpochRecord> train_contrastive(DualEncoder<float>& model, const Dataset& train, const TrainConfig& cfg,
                                           const EpochCallback& epoch_eval, bool verbose) {
    cfg.validate();
    if (model.frozen()) throw std::invalid_argument("train_contrastive: model is frozen");
    if (train.size() < cfg.batch_size) throw std::invalid_argument("train_contrastive: batch_size exceeds dataset");

    Rng rng(cfg.seed);
    const int steps_per_epoch = static_cast<int>(make_batches(train.size(), cfg.batch_size, rng).size());
    Optimizer<float> opt(model.params(), cfg.optim(), static_cast<int64_t>(steps_per_epoch) * cfg.epochs);

    std::vector<EpochRecord> log;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        auto batches = make_batches(train.size(), cfg.batch_size, rng);
        double loss_sum = 0.0;
        int step = 0;
        for (const auto& batch : batches) {
            Graph<float> g;
            Binder<float> bind(g, true);
            Var<float> img = model.encode_image(bind, g.leaf(train.image_batch(batch)), true);
            Var<float> txt = model.encode_text_raw(bind, train.caption_batch(batch));
            Var<float> loss = info_nce(img, txt, model.temperature(bind));
            double lv = loss.value()[0];
            if (!std::isfinite(lv))
                throw std::runtime_error("train_contrastive: non-finite loss at epoch " + std::to_string(epoch) +
                                         " step " + std::to_string(step));
            g.backward(loss);
            std::vector<Tensor<float>> grads;
            for (auto* p : opt.params()) grads.push_back(bind.grad_of(*p));
            opt.step(grads);
            model.clamp_logit_scale();
            loss_sum += lv;
            ++step;
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / std::max(1, step);
        if (epoch_eval) rec.test_metric = epoch_eval(epoch);
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (verbose)
            std::cerr << "[contrastive] epoch " << epoch << "/" << cfg.epochs << " loss " << rec.train_loss
                      << (epoch_eval ? " metric " + std::to_string(rec.test_metric) : "") << "\n";
        log.push_back(rec);
    }
    return log;
}

}  // namespace t2ue
