#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "t2ue/data/dataset.hpp"

namespace t2ue {

enum class ProtectMode { class_wise, sample_wise };

ProtectMode protect_mode_from_string(const std::string& s);
std::string protect_mode_name(ProtectMode m);

/// One materialized noise recipe: the caption to condition on and the latent
/// to draw with. Keys are "class:<id>" (class-wise) or the sample id.
struct PlanEntry {
    std::string key;
    int class_id = 0;
    int template_id = 0;
    std::string caption;
    std::vector<float> z;
};

/// Deterministic map from class or sample identity to (caption, latent).
/// Built purely from the dataset spec; never sees image data.
struct ProtectionPlan {
    ProtectMode mode = ProtectMode::class_wise;
    uint64_t plan_seed = 0;
    int epsilon_num = 8;
    int latent_dim = 64;
    int fixed_template = 0;  // class-wise template policy
    std::string split = "train";
    std::vector<PlanEntry> entries;
    std::unordered_map<std::string, int> index;

    const PlanEntry* find(const std::string& sample_id, int class_id) const;

    nlohmann::json to_json() const;
    static ProtectionPlan from_json(const nlohmann::json& j);
    void save(const std::string& path) const;
    static ProtectionPlan load(const std::string& path);

    /// Content hash of the canonical serialization.
    std::string hash_hex_str() const;
};

ProtectionPlan make_plan(ProtectMode mode, const DatasetSpec& spec, const std::string& split, uint64_t plan_seed,
                         int latent_dim, int epsilon_num, int fixed_template = 0);

/// Id format shared with the generator of the corpus files.
std::string dataset_sample_id(const std::string& split, int class_id, int index);

}  // namespace t2ue
