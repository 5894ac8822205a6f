#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "t2ue/data/dataset.hpp"
#include "t2ue/models/generator.hpp"
#include "t2ue/protect/plan.hpp"
#include "t2ue/train/train_config.hpp"
#include "t2ue/train/trainers.hpp"

namespace t2ue {

/// Resolved experiment configuration: one section per stage plus the global
/// seed and output root. Section seeds left unset derive from the global
/// seed; unknown config keys are rejected.
struct RunConfig {
    uint64_t seed = 1;
    std::string output_root = "out";
    std::string profile = "full";

    DatasetSpec dataset;
    TrainConfig surrogate_train;
    GeneratorConfig generator_model;
    TrainConfig generator_train;
    uint64_t plan_seed = 0;
    int fixed_template = 0;
    TrainConfig victim_supervised;   // SGD recipe
    TrainConfig victim_contrastive;  // same recipe as the surrogate stage
    int cutout_size = 12;
    double mixup_alpha = 1.0;
    int quick_epochs = 20;       // checkpoint-sweep victim epochs
    int quick_per_class = 40;    // checkpoint-sweep training subset
    std::vector<int> k_list = {1, 5, 10};
    int bench_per_class = 10;
    int bench_reps = 3;

    RunConfig();

    void derive_seeds();                 // fill section seeds from the global seed
    void apply_profile(const std::string& name);
    void validate() const;

    nlohmann::json to_json() const;
    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig load_file(const std::string& path);  // resolves output_root against the file dir
};

namespace pipeline {

struct Paths {
    std::string root;
    std::string dataset_dir(const std::string& split) const { return root + "/dataset/" + split; }
    std::string dataset_manifest(const std::string& split) const { return dataset_dir(split) + "/manifest.json"; }
    std::string surrogate_dir() const { return root + "/surrogate"; }
    std::string surrogate_ckpt() const { return surrogate_dir() + "/surrogate.t2ue"; }
    std::string generator_dir() const { return root + "/generator"; }
    std::string protected_dir(const std::string& mode) const { return root + "/protected/" + mode; }
    std::string baseline_dir(const std::string& name) const { return root + "/baseline/" + name; }
    std::string victim_dir(const std::string& name) const { return root + "/victims/" + name; }
    std::string sweep_dir() const { return root + "/sweep"; }
    std::string bench_dir() const { return root + "/bench"; }
};

Paths paths(const RunConfig& cfg);

/// Write the resolved config into a run directory.
void freeze_config(const RunConfig& cfg, const std::string& dir);

nlohmann::json dataset_stage(const RunConfig& cfg);
nlohmann::json surrogate_stage(const RunConfig& cfg);
nlohmann::json generator_stage(const RunConfig& cfg);
nlohmann::json protect_stage(const RunConfig& cfg, ProtectMode mode, const std::string& split = "train");
nlohmann::json em_stage(const RunConfig& cfg);
nlohmann::json random_stage(const RunConfig& cfg);

struct VictimSpec {
    std::string name;
    std::string paradigm = "supervised";  // or "contrastive"
    Arch arch = Arch::conv4;
    Defense defense = Defense::none;
    double poison_ratio = 1.0;
    std::string source = "clean";  // clean | t2ue_class_wise | t2ue_sample_wise | em | random
};

nlohmann::json victim_stage(const RunConfig& cfg, const VictimSpec& spec);
nlohmann::json sweep_stage(const RunConfig& cfg);
nlohmann::json bench_stage(const RunConfig& cfg);

/// Collects every stage's result.json under the output root into report.json
/// plus tables.csv and SVG plots; returns the report body.
nlohmann::json report_stage(const RunConfig& cfg);

/// The standard victim matrix reproduce-all runs.
std::vector<VictimSpec> standard_victims();

/// Full pipeline end to end; `jobs` parallelizes the victim matrix.
nlohmann::json reproduce_all(const RunConfig& cfg, int jobs = 1);

}  // namespace pipeline

}  // namespace t2ue
