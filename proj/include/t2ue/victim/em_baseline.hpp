#pragma once

#include <cstdint>
#include <vector>

#include "t2ue/data/dataset.hpp"
#include "t2ue/models/backbone.hpp"

namespace t2ue {

/// Error-minimizing baseline settings. This method needs the images
/// themselves (it is the non-zero-contact comparison point).
struct EmConfig {
    int outer_rounds = 10;
    int model_steps = 10;   // model updates per round
    int pgd_steps = 20;     // noise updates per batch per round
    int batch_size = 64;
    double epsilon = 8.0 / 255.0;
    double step_size = 0.0;  // 0 -> epsilon / 10
    bool class_wise = false;
    Arch arch = Arch::conv4;
    double model_lr = 0.1;
    uint64_t seed = 1;
};

struct EmResult {
    bool class_wise = false;
    std::vector<Tensor<float>> noise;       // per sample (dataset order) or per class
    std::vector<double> round_loss;         // perturbed-data loss after each outer round
};

/// Alternating bilevel loop: a few model steps on the perturbed data, then
/// signed-gradient noise steps minimizing the same loss, projected onto the
/// epsilon box. Returned maps are snapped to the 1/255 grid.
EmResult em_baseline_noise(const Dataset& train, const EmConfig& cfg, bool verbose = true);

/// Dataset with precomputed noise applied (clamped to [0,1]).
Dataset apply_em_noise(const Dataset& data, const EmResult& em);

}  // namespace t2ue
