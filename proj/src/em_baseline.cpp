#include "t2ue/victim/em_baseline.hpp"

#include <cmath>
#include <iostream>

#include "t2ue/models/classifier.hpp"
#include "t2ue/protect/protect.hpp"
#include "t2ue/train/trainers.hpp"

namespace t2ue {

namespace {

void clip_box(Tensor<float>& t, float eps) { t.data = t.data.max(-eps).min(eps); }

}  // namespace

EmResult em_baseline_noise(const Dataset& train, const EmConfig& cfg, bool verbose) {
    if (train.size() == 0) throw std::invalid_argument("em_baseline_noise: empty dataset");
    const int h = train.spec.image_size;
    const float eps = static_cast<float>(cfg.epsilon);
    const float alpha = static_cast<float>(cfg.step_size > 0.0 ? cfg.step_size : cfg.epsilon / 10.0);
    const int64_t per = static_cast<int64_t>(3) * h * h;
    const int num_classes = train.spec.num_classes();

    EmResult res;
    res.class_wise = cfg.class_wise;
    const int slots = cfg.class_wise ? num_classes : train.size();
    res.noise.assign(static_cast<size_t>(slots), Tensor<float>({3, h, h}));

    Rng rng(cfg.seed);
    Rng model_rng(hash_u64(cfg.seed, 0xe3));
    Classifier<float> model;
    model.init(model_rng, cfg.arch, num_classes, true);
    OptimConfig<float> oc;
    oc.kind = OptKind::sgd;
    oc.lr = static_cast<float>(cfg.model_lr);
    oc.weight_decay = 5e-4f;
    oc.schedule = LrSchedule::constant;
    Optimizer<float> opt(model.params(), oc, cfg.outer_rounds * cfg.model_steps);

    auto noise_slot = [&](int sample_idx) -> Tensor<float>& {
        return cfg.class_wise ? res.noise[static_cast<size_t>(train.samples[static_cast<size_t>(sample_idx)].class_id)]
                              : res.noise[static_cast<size_t>(sample_idx)];
    };

    auto perturbed_batch = [&](const std::vector<int>& idx) {
        Tensor<float> b = train.image_batch(idx);
        for (size_t i = 0; i < idx.size(); ++i) {
            const Tensor<float>& d = noise_slot(idx[static_cast<size_t>(i)]);
            for (int64_t j = 0; j < per; ++j) {
                float v = b.data[static_cast<int64_t>(i) * per + j] + d.data[j];
                b.data[static_cast<int64_t>(i) * per + j] = std::min(1.0f, std::max(0.0f, v));
            }
        }
        return b;
    };

    for (int round = 0; round < cfg.outer_rounds; ++round) {
        // model phase
        auto batches = make_batches(train.size(), cfg.batch_size, rng);
        for (int s = 0; s < cfg.model_steps && s < static_cast<int>(batches.size()); ++s) {
            const auto& idx = batches[static_cast<size_t>(s)];
            Graph<float> g;
            Binder<float> bind(g, true);
            Var<float> logits = model.logits(bind, g.leaf(perturbed_batch(idx)), true);
            Var<float> loss = cross_entropy_rows(logits, train.label_batch(idx));
            if (!std::isfinite(static_cast<double>(loss.value()[0])))
                throw std::runtime_error("em_baseline_noise: model phase diverged at round " + std::to_string(round));
            g.backward(loss);
            std::vector<Tensor<float>> grads;
            for (auto* p : opt.params()) grads.push_back(bind.grad_of(*p));
            opt.step(grads);
        }

        // noise phase: one pass over the data, pgd_steps per batch
        auto nbatches = make_batches(train.size(), cfg.batch_size, rng);
        double loss_sum = 0.0;
        int steps = 0;
        for (const auto& idx : nbatches) {
            const int n = static_cast<int>(idx.size());
            for (int it = 0; it < cfg.pgd_steps; ++it) {
                Graph<float> g;
                Binder<float> bind(g, false);
                Tensor<float> dbatch({n, 3, h, h});
                for (int i = 0; i < n; ++i) {
                    const Tensor<float>& d = noise_slot(idx[static_cast<size_t>(i)]);
                    for (int64_t j = 0; j < per; ++j) dbatch.data[static_cast<int64_t>(i) * per + j] = d.data[j];
                }
                Var<float> delta = g.leaf(std::move(dbatch), true);
                Var<float> ue = clamp01(add(g.leaf(train.image_batch(idx)), delta));
                Var<float> logits = model.logits(bind, ue, false);
                Var<float> loss = cross_entropy_rows(logits, train.label_batch(idx));
                g.backward(loss);
                const Tensor<float>& grad = g.grad(delta.id());
                if (cfg.class_wise) {
                    // aggregate signed step per class over the batch
                    std::vector<Tensor<float>> acc(static_cast<size_t>(num_classes));
                    std::vector<int> seen(static_cast<size_t>(num_classes), 0);
                    for (int i = 0; i < n; ++i) {
                        int cls = train.samples[static_cast<size_t>(idx[static_cast<size_t>(i)])].class_id;
                        if (!seen[static_cast<size_t>(cls)]) {
                            acc[static_cast<size_t>(cls)] = Tensor<float>({3, h, h});
                            seen[static_cast<size_t>(cls)] = 1;
                        }
                        for (int64_t j = 0; j < per; ++j)
                            acc[static_cast<size_t>(cls)].data[j] += grad.data[static_cast<int64_t>(i) * per + j];
                    }
                    for (int cls = 0; cls < num_classes; ++cls)
                        if (seen[static_cast<size_t>(cls)]) {
                            Tensor<float>& d = res.noise[static_cast<size_t>(cls)];
                            for (int64_t j = 0; j < per; ++j) {
                                float s = acc[static_cast<size_t>(cls)].data[j];
                                d.data[j] -= alpha * ((s > 0.f) - (s < 0.f));
                            }
                            clip_box(d, eps);
                        }
                } else {
                    for (int i = 0; i < n; ++i) {
                        Tensor<float>& d = noise_slot(idx[static_cast<size_t>(i)]);
                        for (int64_t j = 0; j < per; ++j) {
                            float s = grad.data[static_cast<int64_t>(i) * per + j];
                            d.data[j] -= alpha * ((s > 0.f) - (s < 0.f));
                        }
                        clip_box(d, eps);
                    }
                }
                if (it == cfg.pgd_steps - 1) {
                    loss_sum += loss.value()[0];
                    ++steps;
                }
            }
        }
        res.round_loss.push_back(loss_sum / std::max(1, steps));
        if (verbose)
            std::cerr << "[em] round " << round + 1 << "/" << cfg.outer_rounds << " perturbed loss "
                      << res.round_loss.back() << "\n";
    }

    // snap to the export grid
    int eps_num = static_cast<int>(std::lround(cfg.epsilon * 255.0));
    for (auto& d : res.noise) d = quantize_noise(d, eps_num);
    return res;
}

Dataset apply_em_noise(const Dataset& data, const EmResult& em) {
    Dataset out = data;
    for (int i = 0; i < out.size(); ++i) {
        const Tensor<float>& d =
            em.class_wise ? em.noise[static_cast<size_t>(out.samples[static_cast<size_t>(i)].class_id)]
                          : em.noise[static_cast<size_t>(i)];
        out.samples[static_cast<size_t>(i)].image = apply_noise(out.samples[static_cast<size_t>(i)].image, d);
    }
    return out;
}

}  // namespace t2ue
