#pragma once

#include <functional>
#include <string>
#include <vector>

#include "t2ue/data/dataset.hpp"
#include "t2ue/models/classifier.hpp"
#include "t2ue/models/dual_encoder.hpp"
#include "t2ue/models/generator.hpp"
#include "t2ue/train/train_config.hpp"

namespace t2ue {

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double test_metric = 0.0;  // retrieval Hit@1 or top-1 accuracy, when evaluated
    double seconds = 0.0;
    std::string checkpoint;
};

using EpochCallback = std::function<double(int epoch)>;  // returns the test metric to log

/// Contrastive training of a dual encoder over (image, caption) batches.
/// Shared by the surrogate stage and the contrastive victim; refuses frozen
/// models. `epoch_eval`, when set, runs after each epoch.
std::vector<EpochRecord> train_contrastive(DualEncoder<float>& model, const Dataset& train, const TrainConfig& cfg,
                                           const EpochCallback& epoch_eval = {}, bool verbose = true);

/// Mean clean-data alignment loss under a frozen surrogate (shuffled
/// batches); the reference point the generator must not start far from.
double clean_alignment_loss(const Dataset& data, DualEncoder<float>& surrogate, int batch_size, uint64_t seed);

/// Noise-generator training against a frozen surrogate. Per step: draw a
/// batch, condition on the raw text embedding, resample latents, add the
/// bounded noise to the images, and descend the surrogate's alignment loss
/// w.r.t. the generator parameters only. Writes epoch-cadenced checkpoints
/// (including the untrained epoch 0) under out_dir.
std::vector<EpochRecord> train_generator(const Dataset& train, DualEncoder<float>& surrogate,
                                         Generator<float>& gen, const TrainConfig& cfg, const std::string& out_dir,
                                         bool verbose = true);

enum class Defense { none, cutout, mixup, augproxy };

Defense defense_from_string(const std::string& s);
std::string defense_name(Defense d);

struct SupervisedConfig {
    TrainConfig base;
    Defense defense = Defense::none;
    int cutout_size = 12;
    double mixup_alpha = 1.0;

    SupervisedConfig() {
        base.optimizer = OptKind::sgd;
        base.lr = 0.1;
        base.weight_decay = 5e-4;
        base.epochs = 60;
    }
};

/// Cross-entropy training with the SGD recipe; evaluates clean-test top-1
/// after each epoch into the returned curve.
std::vector<EpochRecord> train_supervised(Classifier<float>& model, const Dataset& train, const Dataset& test,
                                          const SupervisedConfig& cfg, bool verbose = true);

/// Deterministic shuffled batches: full batches plus a >= 2 remainder.
std::vector<std::vector<int>> make_batches(int n, int batch_size, Rng& rng);

}  // namespace t2ue
