#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "t2ue/core/tensor.hpp"

namespace t2ue {

/// Full description of the procedural captioned-shapes corpus. Regenerating
/// from an identical spec yields byte-identical files.
struct DatasetSpec {
    int image_size = 32;
    std::vector<std::string> shapes = {"circle", "square", "triangle", "cross"};
    std::vector<std::string> colors = {"red", "green", "blue", "yellow"};
    int samples_per_class_train = 150;
    int samples_per_class_test = 50;
    std::vector<std::string> caption_templates = {
        "a photo of a {color} {shape}",
        "an image of a {color} {shape}",
        "a {color} {shape} on a plain background",
        "the {shape} is {color}",
    };
    uint64_t seed = 1;

    int num_classes() const { return static_cast<int>(shapes.size() * colors.size()); }
    int samples_per_class(const std::string& split) const {
        return split == "train" ? samples_per_class_train : samples_per_class_test;
    }

    void validate() const;
    nlohmann::json to_json() const;
    static DatasetSpec from_json(const nlohmann::json& j);
};

/// Caption text for (class, template); pure function of the spec.
std::string caption_for(int class_id, int template_id, const DatasetSpec& spec);

/// Recover the class id from a caption's color and shape words; returns -1 if
/// either word is missing.
int parse_caption_class(const std::string& caption, const DatasetSpec& spec);

struct CaptionedSample {
    std::string id;
    Tensor<float> image;  // (3, H, W) in [0, 1]
    std::string caption;
    int class_id = 0;
    int template_id = 0;
};

struct ManifestEntry {
    std::string id;
    std::string file;  // relative to the manifest directory
    std::string caption;
    int class_id = 0;
    int template_id = 0;
};

struct DatasetManifest {
    DatasetSpec spec;
    std::string split;
    std::vector<ManifestEntry> entries;
    nlohmann::json extra;  // protected-set metadata (plan hash, ...)

    std::string dir;  // directory the manifest was written to / loaded from

    nlohmann::json to_json() const;
    static DatasetManifest from_json(const nlohmann::json& j);
};

/// Renders the corpus split into out_dir (one PNG per sample plus
/// manifest.json). Per-sample randomness is keyed by
/// hash(seed, split, class_id, index), so the two splits draw from disjoint
/// streams and regeneration is exact.
DatasetManifest generate_dataset(const DatasetSpec& spec, const std::string& split, const std::string& out_dir);

void save_manifest(const DatasetManifest& m, const std::string& dir);
DatasetManifest read_manifest(const std::string& manifest_path);

/// Decodes every sample listed by a manifest, in manifest order.
std::vector<CaptionedSample> load_dataset(const std::string& manifest_path);

/// Writes an in-memory dataset to PNGs plus manifest.json under out_dir;
/// extra fields are merged into the manifest.
struct Dataset;
DatasetManifest export_dataset(const Dataset& data, const std::string& out_dir,
                               const nlohmann::json& extra = nlohmann::json::object());

/// In-memory view used by trainers: parallel arrays plus batch assembly.
struct Dataset {
    DatasetSpec spec;
    std::string split;
    std::vector<CaptionedSample> samples;

    int size() const { return static_cast<int>(samples.size()); }
    int image_size() const { return spec.image_size; }

    /// Stack the given sample indices into an (N, 3, H, W) batch.
    Tensor<float> image_batch(const std::vector<int>& idx) const;
    std::vector<std::string> caption_batch(const std::vector<int>& idx) const;
    std::vector<int> label_batch(const std::vector<int>& idx) const;

    static Dataset from_manifest(const std::string& manifest_path);
};

}  // namespace t2ue
