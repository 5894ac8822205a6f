#pragma once

#include <string>
#include <vector>

#include "t2ue/data/dataset.hpp"
#include "t2ue/models/dual_encoder.hpp"
#include "t2ue/models/generator.hpp"
#include "t2ue/protect/plan.hpp"

namespace t2ue {

/// clamp(image + delta, 0, 1); shapes must match.
Tensor<float> apply_noise(const Tensor<float>& image, const Tensor<float>& delta);

/// Snap each value to the nearest multiple of 1/255, ties away from zero.
/// Requires |delta| <= epsilon_num/255 on entry; the bound survives because
/// the box edge lies on the grid.
Tensor<float> quantize_noise(const Tensor<float>& delta, int epsilon_num);

/// Computes noise from plan entries alone: captions and latents in, bounded
/// noise out. The interface carries no image arguments, which is what keeps
/// protection zero-contact.
class NoiseSynthesizer {
public:
    NoiseSynthesizer(Generator<float>& gen, DualEncoder<float>& surrogate) : gen_(&gen), text_side_(&surrogate) {}

    /// (K, 3, H, W) noise for K plan entries, inference mode.
    Tensor<float> batch_noise(const std::vector<const PlanEntry*>& entries);

    /// Noise for every entry of a plan, in plan order.
    std::vector<Tensor<float>> noise_for_plan(const ProtectionPlan& plan, int batch_size = 64);

private:
    Generator<float>* gen_;
    DualEncoder<float>* text_side_;
};

struct ExportOptions {
    std::string generator_hash;  // content hash of the generator checkpoint, if known
    bool write_noise_maps = true;
    int max_noise_maps = 64;
};

/// Protected copy of a dataset: per sample, look up the plan entry, quantize
/// the synthesized noise, add, clamp, and write PNGs plus a manifest with the
/// plan and generator hashes. Captions and labels are copied verbatim.
DatasetManifest export_protected(const Dataset& data, Generator<float>& gen, DualEncoder<float>& surrogate,
                                 const ProtectionPlan& plan, const std::string& out_dir,
                                 const ExportOptions& opts = {});

/// In-memory protected dataset (same pixels the export would write).
Dataset protect_in_memory(const Dataset& data, Generator<float>& gen, DualEncoder<float>& surrogate,
                          const ProtectionPlan& plan);

}  // namespace t2ue
