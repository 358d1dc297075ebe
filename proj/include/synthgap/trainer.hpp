#pragma once

#include <vector>

#include "synthgap/augment.hpp"
#include "synthgap/dataset.hpp"
#include "synthgap/model.hpp"

namespace synthgap {

enum class NormalizationMode { Default, Exact };

std::string to_string(NormalizationMode m);
NormalizationMode normalization_from_string(const std::string& s);

// The training recipe: SGD with momentum, linear warmup into cosine decay,
// per-view mean cross-entropy, per-epoch evaluation.
struct TrainConfig {
    int epochs = 30;
    int batch_size = 128;
    double base_lr = 0.1;
    double warmup_epochs = 3;
    double momentum = 0.9;
    double weight_decay = 1e-4;  // skipped for BN parameters
    AugmentationPipeline augmentation = AugmentationPipeline::Basic;
    NormalizationMode normalization = NormalizationMode::Default;
    bool bn_eval_update = false;
    uint64_t seed = 0;
};

void validate(const TrainConfig& cfg);

struct EpochRecord {
    int epoch = 0;
    double lr = 0;          // at epoch start
    double train_loss = 0;  // mean over all views
    double top1 = 0, top5 = 0;
};

struct TrainLog {
    std::vector<EpochRecord> epochs;
};

bool operator==(const EpochRecord& a, const EpochRecord& b);
bool operator==(const TrainLog& a, const TrainLog& b);

struct SummaryStats {
    double top1_mean = 0, top1_std = 0;
    double top5_mean = 0, top5_std = 0;
    int k = 0;
};

struct Metrics {
    std::vector<double> topk;  // aligned with the requested ks
    double mean_loss = 0;
};

// Learning rate at fractional epoch t: linear 0 -> base_lr over the warmup,
// then base_lr * 0.5 * (1 + cos(pi * (t - warmup)/(epochs - warmup))).
double lr_at(const TrainConfig& cfg, double t);

// Trains in place and returns the per-epoch log. Deterministic under
// (cfg.seed, data): epoch order is reshuffled from hash(seed, epoch) and each
// sample's augmentation stream from hash(seed, epoch, position).
TrainLog train(Model& model, const SampleSet& train_data, const SampleSet& val_data,
               const TrainConfig& cfg);

// Top-k accuracy (ties broken toward lower category index) and mean loss on
// full, unaugmented images normalized with `stats`.
Metrics evaluate(Model& model, const SampleSet& data, const std::vector<int>& ks,
                 const ChannelStats& stats);

// Mean and population std of top-1/top-5 over the last k epochs.
SummaryStats aggregate_last_k(const TrainLog& log, int k);

// Central finite differences (h = 1e-5) against the analytic gradients of
// the mean cross-entropy, run at 64-bit precision on every trainable
// parameter. Returns the max relative error with a 1e-8 denominator guard.
// Eval mode checks BN in use-running-stats form; Train mode differentiates
// through the batch statistics (running-stat updates suppressed either way).
double gradient_check(const Model& tiny_model, const Eigen::MatrixXf& input, TensorShape shape,
                      const std::vector<int>& labels, RunMode mode = RunMode::Eval);

// --- small pieces used by the loop, exposed for direct testing ---

// v <- momentum*v + g;  p <- p - lr*(v + weight_decay*p)
void sgd_update(float* param, const float* grad, float* velocity, Eigen::Index n, float lr,
                float momentum, float weight_decay);

// Per-k counts of samples whose label ranks within the top k logits.
std::vector<int> topk_correct(const Eigen::MatrixXf& logits, const std::vector<int>& labels,
                              const std::vector<int>& ks);

// Sum of per-column cross-entropies; if dlogits is non-null it receives
// (softmax - onehot) * grad_scale per column.
template <typename S>
double softmax_xent(const MatX<S>& logits, const std::vector<int>& labels, MatX<S>* dlogits,
                    double grad_scale);

void write_metrics_csv(const TrainLog& log, const fs::path& path);
TrainLog read_metrics_csv(const fs::path& path);

}  // namespace synthgap
