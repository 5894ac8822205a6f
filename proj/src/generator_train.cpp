#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "t2ue/train/trainers.hpp"

namespace fs = std::filesystem;

namespace t2ue {

namespace {

std::string ckpt_name(const std::string& dir, int epoch) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "gen_epoch_%04d.t2ue", epoch);
    return (fs::path(dir) / buf).string();
}

Tensor<float> sample_latents(int n, int dim, Rng& rng) {
    Tensor<float> z({n, dim});
    for (int64_t i = 0; i < z.size(); ++i) z[i] = static_cast<float>(rng.normal());
    return z;
}

/// Mean alignment loss over the dataset with the current generator, no
/// updates; the epoch-0 reference point of the training log.
double eval_alignment(const Dataset& data, DualEncoder<float>& surrogate, Generator<float>& gen, int batch_size,
                     Rng& rng) {
    double sum = 0.0;
    int steps = 0;
    Rng order(hash_u64(0x5e11, batch_size));
    auto batches = make_batches(data.size(), batch_size, order);
    for (const auto& idx : batches) {
        int n = static_cast<int>(idx.size());
        Graph<float> g;
        Binder<float> bs(g, false), bg(g, false);
        Var<float> cond = surrogate.encode_text_raw(bs, data.caption_batch(idx));
        Var<float> delta = gen.forward(bg, cond, g.leaf(sample_latents(n, gen.cfg.latent_dim, rng)), false);
        Var<float> ue = clamp01(add(g.leaf(data.image_batch(idx)), delta));
        Var<float> img = surrogate.encode_image(bs, ue, false);
        Var<float> loss = info_nce(img, cond, surrogate.temperature(bs));
        sum += loss.value()[0];
        ++steps;
    }
    return sum / std::max(1, steps);
}

}  // namespace

double clean_alignment_loss(const Dataset& data, DualEncoder<float>& surrogate, int batch_size, uint64_t seed) {
    double sum = 0.0;
    int steps = 0;
    Rng rng(seed);
    auto batches = make_batches(data.size(), batch_size, rng);
    for (const auto& idx : batches) {
        Graph<float> g;
        Binder<float> bs(g, false);
        Var<float> cond = surrogate.encode_text_raw(bs, data.caption_batch(idx));
        Var<float> img = surrogate.encode_image(bs, g.leaf(data.image_batch(idx)), false);
        Var<float> loss = info_nce(img, cond, surrogate.temperature(bs));
        sum += loss.value()[0];
        ++steps;
    }
    return sum / std::max(1, steps);
}

std::vector<EpochRecord> train_generator(const Dataset& train, DualEncoder<float>& surrogate,
                                         Generator<float>& gen, const TrainConfig& cfg, const std::string& out_dir,
                                         bool verbose) {
    cfg.validate();
    if (!surrogate.frozen()) throw std::invalid_argument("train_generator: surrogate must be frozen");
    if (train.spec.image_size != gen.cfg.output_size())
        throw std::invalid_argument("train_generator: generator resolution " +
                                    std::to_string(gen.cfg.output_size()) + " does not match dataset " +
                                    std::to_string(train.spec.image_size));
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw std::runtime_error("train_generator: cannot create " + out_dir);

    Rng rng(cfg.seed);
    const int steps_per_epoch = static_cast<int>(make_batches(train.size(), cfg.batch_size, rng).size());
    Optimizer<float> opt(gen.params(), cfg.optim(), static_cast<int64_t>(steps_per_epoch) * cfg.epochs);
    const float tau = surrogate.temperature_value();

    std::vector<EpochRecord> log;
    {
        EpochRecord rec;
        rec.epoch = 0;
        Rng eval_rng(hash_u64(cfg.seed, 0xe0a1));
        rec.train_loss = eval_alignment(train, surrogate, gen, cfg.batch_size, eval_rng);
        rec.checkpoint = ckpt_name(out_dir, 0);
        gen.save(rec.checkpoint);
        log.push_back(rec);
        if (verbose) std::cerr << "[generator] epoch 0 (untrained) alignment loss " << rec.train_loss << "\n";
    }

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        auto batches = make_batches(train.size(), cfg.batch_size, rng);
        double loss_sum = 0.0;
        int step = 0;
        for (const auto& batch : batches) {
            int n = static_cast<int>(batch.size());
            Graph<float> g;
            Binder<float> bind_sur(g, false);  // frozen: no parameter gradients
            Binder<float> bind_gen(g, true);
            Var<float> cond = surrogate.encode_text_raw(bind_sur, train.caption_batch(batch));
            Var<float> z = g.leaf(sample_latents(n, gen.cfg.latent_dim, rng));  // fresh latents every step
            Var<float> delta = gen.forward(bind_gen, cond, z, true);
            Var<float> ue = clamp01(add(g.leaf(train.image_batch(batch)), delta));
            Var<float> img = surrogate.encode_image(bind_sur, ue, false);
            Var<float> loss = info_nce(img, cond, g.leaf(Tensor<float>::scalar(tau)));
            double lv = loss.value()[0];
            if (!std::isfinite(lv))
                throw std::runtime_error("train_generator: non-finite loss at epoch " + std::to_string(epoch) +
                                         " step " + std::to_string(step));
            g.backward(loss);
            std::vector<Tensor<float>> grads;
            for (auto* p : opt.params()) grads.push_back(bind_gen.grad_of(*p));
            opt.step(grads);
            loss_sum += lv;
            ++step;
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / std::max(1, step);
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (epoch % cfg.checkpoint_every == 0 || epoch == cfg.epochs) {
            rec.checkpoint = ckpt_name(out_dir, epoch);
            gen.save(rec.checkpoint);
        }
        if (verbose)
            std::cerr << "[generator] epoch " << epoch << "/" << cfg.epochs << " loss " << rec.train_loss << " ("
                      << rec.seconds << "s)\n";
        log.push_back(rec);
    }
    return log;
}

}  // namespace t2ue
