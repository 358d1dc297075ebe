#pragma once

#include <string>
#include <vector>

#include "synthgap/dataset.hpp"
#include "synthgap/model.hpp"
#include "synthgap/trainer.hpp"

namespace synthgap {

// The experiment configuration document (TOML). Unknown sections or keys are
// rejected; materialize_config() writes every key back out so a stored config
// is fully self-describing.
struct ExperimentConfig {
    // [dataset]
    int num_categories = 10;
    int per_category_train = 500;
    int per_category_val = 100;
    int image_size = 32;
    double fidelity = 0.5;     // proxy-arm fidelity
    uint64_t dataset_seed = 0;  // 0: derived from seeds.master

    // [model]
    std::vector<int> stage_widths = {16, 32, 64, 128};
    int blocks_per_stage = 2;
    double head_temperature = 0.1;

    // [train]
    int epochs = 30;
    int batch_size = 128;
    double base_lr = 0.1;
    double warmup_epochs = 3;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    std::string augmentation = "basic";
    std::string normalization = "default";
    bool bn_eval_update = false;

    // [protocol]
    std::string kind = "baseline";
    std::string direction = "synth-to-real";
    std::vector<int> n_list;  // empty: 0..U
    std::vector<double> fractions = {1.0, 0.5, 0.25, 0.125};
    std::string arms = "both";
    std::string ablation = "normalization";
    int patch_size = 8;
    std::vector<double> fidelity_grid = {0.25, 0.5, 0.75, 1.0};
    int repeats = 1;
    int retrain_epochs = 0;  // 0: full schedule for retrained suffixes

    // [output]
    std::string workspace;  // empty: $SYNTHGAP_WORKSPACE, then "workspace"

    // [seeds]
    uint64_t master_seed = 42;
};

ExperimentConfig parse_config(const std::string& toml_text);
ExperimentConfig load_config(const fs::path& path);
std::string materialize_config(const ExperimentConfig& cfg);

// Derived pieces, validated.
DatasetSpec real_dataset_spec(const ExperimentConfig& cfg);
ArchitectureConfig architecture(const ExperimentConfig& cfg);
TrainConfig train_config(const ExperimentConfig& cfg);
fs::path resolve_workspace(const ExperimentConfig& cfg);

}  // namespace synthgap
