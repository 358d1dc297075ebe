#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "synthgap/analysis.hpp"
#include "synthgap/dataset.hpp"
#include "synthgap/model.hpp"
#include "synthgap/trainer.hpp"

namespace synthgap {

enum class Direction { RealToSynth, SynthToReal };
std::string to_string(Direction d);
Direction direction_from_string(const std::string& s);

enum class AblationKind { Normalization, Augmentation, Texture, Fidelity };
std::string to_string(AblationKind k);
AblationKind ablation_from_string(const std::string& s);

// Training-data descriptor for one run, resolvable against the workspace.
struct DataSelector {
    std::string dataset_id = "real";  // "real", "proxy", "proxy_f<phi>"
    double fraction = 1.0;            // stratified_reduce(train, fraction) when < 1
    uint64_t fraction_seed = 0;
    int scramble_patch = 0;  // texture_scramble per image when > 0
    uint64_t scramble_seed = 0;
};

struct InitSpec {
    enum class Kind { Fresh, Transfer };
    Kind kind = Kind::Fresh;
    uint64_t init_seed = 0;        // Fresh
    std::string checkpoint;        // Transfer: workspace-relative checkpoint dir
    int freeze_n = 0;              // Transfer: freeze_prefix / reinit_suffix boundary
    uint64_t reinit_seed = 0;
};

// Fully materialized description of one training run. Serialized as
// run_config.json inside the run directory; replaying it reproduces the run
// bit-exactly.
struct RunSpec {
    std::string protocol;  // also the sweep id: runs/<protocol>/<param>/
    std::string param;
    uint64_t seed = 0;
    std::string eval_dataset_id = "real";
    DataSelector train_data;
    ArchitectureConfig arch;
    TrainConfig train_cfg;
    InitSpec init;
};

std::string run_spec_to_json(const RunSpec& spec);
RunSpec run_spec_from_json(const std::string& text);

struct RunResult {
    RunSpec spec;
    SummaryStats stats;
    double train_loss_last_k = 0;
    TrainLog log;
    std::string status;  // "complete" or "failed: <reason>"
    fs::path dir;
    bool from_cache = false;
};

struct SweepRow {
    std::string protocol, param;
    uint64_t seed = 0;
    SummaryStats stats;
    std::string status;
    std::string run_dir;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    bool all_complete() const;
};

// sweep.csv round-trip (header:
// protocol,param,seed,top1_mean,top1_std,top5_mean,top5_std,status)
void write_sweep_csv(const SweepResult& sweep, const fs::path& path);
SweepResult read_sweep_csv(const fs::path& path);

// Layer-transfer plan: freeze the first N transferred units of a pretrained
// model, reinitialize the rest, retrain on the other dataset, evaluate on
// the real validation split.
struct TransferPlan {
    Direction direction = Direction::SynthToReal;
    int n_transferred = 0;
    std::string pretrain_checkpoint;  // workspace-relative
    TrainConfig retrain_cfg;
    uint64_t reinit_seed = 0;
    std::string param;  // registry point id
};

// Orchestrates the experiment protocols against one workspace
// (workspace/{datasets,runs,reports}). All per-point seeds are derived as
// hash(master_seed, protocol, param), so adding points never perturbs
// existing ones. Completed run directories are reused unless forced.
class TransferLab {
public:
    TransferLab(fs::path workspace, ArchitectureConfig arch, TrainConfig base_cfg,
                DatasetSpec real_spec, double proxy_fidelity, uint64_t master_seed);

    const fs::path& workspace() const { return workspace_; }
    fs::path datasets_dir() const { return workspace_ / "datasets"; }
    fs::path runs_dir() const { return workspace_ / "runs"; }
    fs::path dataset_dir(const std::string& id) const { return datasets_dir() / id; }

    int jobs = 1;
    int last_k = 5;
    int retrain_epochs = 0;  // 0: retrained suffix uses the full schedule
    bool force = false;
    bool verbose = false;

    // Writes datasets/real and datasets/proxy; refuses to overwrite existing
    // directories unless force.
    void generate_datasets();
    // Opens (or, for fidelity variants, deterministically generates) a dataset.
    const Dataset& dataset(const std::string& id);

    uint64_t point_seed(const std::string& protocol, const std::string& param) const;

    RunResult execute_run(const RunSpec& spec);
    // Re-executes a completed run from its materialized run_config.json into
    // out_dir and returns the fresh result.
    RunResult replay_run(const fs::path& run_dir, const fs::path& out_dir);

    // Plain training of dataset_id, evaluated on real validation data; the
    // checkpoint doubles as the pretrain source for transfer protocols.
    RunResult baseline(const std::string& dataset_id, int rep = 0);

    SummaryStats run_transfer_point(const TransferPlan& plan);
    SweepResult run_transfer_sweep(Direction direction, const std::vector<int>& n_list);
    SweepResult run_data_reduction_sweep(const std::vector<double>& fractions,
                                         bool arm_pretrained, bool arm_scratch, int repeats = 1);
    SweepResult run_ablation(AblationKind kind, int texture_patch = 8,
                             std::vector<double> fidelity_grid = {0.25, 0.5, 0.75, 1.0});

    const ArchitectureConfig& arch() const { return arch_; }
    const TrainConfig& base_cfg() const { return base_cfg_; }
    const DatasetSpec& real_spec() const { return real_spec_; }
    double proxy_fidelity() const { return proxy_fidelity_; }
    uint64_t master_seed() const { return master_seed_; }

private:
    fs::path workspace_;
    ArchitectureConfig arch_;
    TrainConfig base_cfg_;
    DatasetSpec real_spec_;
    double proxy_fidelity_;
    uint64_t master_seed_;
    std::map<std::string, Dataset> datasets_;
    std::unique_ptr<std::mutex> mutex_ = std::make_unique<std::mutex>();

    SampleSet resolve_train(const DataSelector& sel);
    SampleSet resolve_val(const std::string& dataset_id);
    RunResult execute_run_at(const RunSpec& spec, const fs::path& dir, bool reuse_cache);
    std::vector<RunResult> execute_many(const std::vector<RunSpec>& specs);
    TrainConfig retrain_config(uint64_t train_seed) const;
};

}  // namespace synthgap
