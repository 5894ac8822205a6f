#pragma once

#include <cstdint>
#include <vector>

#include "t2ue/core/rng.hpp"
#include "t2ue/core/tensor.hpp"
#include "t2ue/data/dataset.hpp"

namespace t2ue {

/// Gray out a random square patch (0.5 in all channels). patch_size 0 is the
/// identity; patch_size == side covers the full image.
Tensor<float> cutout(const Tensor<float>& img, int patch_size, Rng& rng);

/// Seeded light augmentation pipeline: horizontal flip, rotation within
/// +/- 15 degrees, 4-pixel pad-and-crop, brightness shift within +/- 0.2.
/// A documented lightweight stand-in for heavier learned policies.
Tensor<float> augproxy(const Tensor<float>& img, Rng& rng);

/// lambda * batch[i] + (1 - lambda) * batch[perm[i]], labels carried along;
/// the soft-label pair (labels[i], labels[perm[i]], lambda) drives the loss.
Tensor<float> mixup_batch(const Tensor<float>& images, const std::vector<int>& perm, double lambda);

/// I.i.d. uniform noise in [-eps, eps], snapped to the 1/255 grid.
Tensor<float> random_noise(const std::vector<int>& shape, double epsilon, Rng& rng);

/// Replace exactly floor(ratio * N) of the clean samples (chosen without
/// replacement, seeded) with their protected counterparts, matched by id.
Dataset mix_poison(const Dataset& clean, const Dataset& protected_set, double ratio, uint64_t seed);

}  // namespace t2ue
