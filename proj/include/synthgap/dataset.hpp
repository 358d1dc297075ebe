#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "synthgap/image.hpp"
#include "synthgap/io.hpp"

namespace synthgap {

enum class Distribution { Real, Proxy };

std::string to_string(Distribution d);
Distribution distribution_from_string(const std::string& s);

// Parameters of a generated dataset. A Proxy dataset with fidelity 1 is
// parameter-identical to the Real dataset with the same seed.
struct DatasetSpec {
    int num_categories = 10;
    int per_category_train = 500;
    int per_category_val = 100;
    int image_size = 32;
    Distribution distribution = Distribution::Real;
    double fidelity = 1.0;  // meaningful only for Proxy
    uint64_t seed = 0;
};

void validate(const DatasetSpec& spec);  // throws ValidationError

inline constexpr double kStdClampEps = 1e-6;
inline constexpr const char* kGeneratorVersion = "synthgap-gen-1";

struct ChannelStats {
    std::array<double, 3> mean{0, 0, 0};
    std::array<double, 3> std{1, 1, 1};
};

// The fixed "default" normalization constants (the ImageNet-values analog),
// used regardless of dataset when normalization mode is Default.
ChannelStats default_channel_stats();

enum class Split { Train, Val };

struct DatasetManifest {
    DatasetSpec spec;
    int train_count = 0;
    int val_count = 0;
    std::string generator_version;
    ChannelStats train_stats;
};

// On-disk handle of a generated dataset. Records are validated against the
// manifest on open and read into memory; handles are immutable afterwards
// and safe to share.
class Dataset {
public:
    static Dataset open(const fs::path& root);

    const DatasetManifest& manifest() const { return manifest_; }
    const fs::path& root() const { return root_; }
    int image_size() const { return manifest_.spec.image_size; }
    int num_categories() const { return manifest_.spec.num_categories; }

    int count(Split s) const;
    // CHW pixel block of one record (3 * size * size bytes).
    const uint8_t* image_data(Split s, int index) const;
    uint16_t label(Split s, int index) const;

private:
    Dataset() = default;
    fs::path root_;
    DatasetManifest manifest_;
    std::shared_ptr<std::vector<uint8_t>> train_images_, val_images_;
    std::shared_ptr<std::vector<uint16_t>> train_labels_, val_labels_;
};

// Renders one sample as a pure function of (spec, category, rng_state).
// The base shape stream is shared between Real and Proxy; Proxy-only
// perturbations come from a salted side stream and scale with (1 - fidelity),
// so fidelity 1 reproduces the Real pixels exactly.
Image render_sample(const DatasetSpec& spec, int category, uint64_t rng_state);

// rng_state for the record at `index` of `split`, by contract a function of
// (spec.seed, split, index) only.
uint64_t sample_rng_state(const DatasetSpec& spec, Split split, int index);

// Writes both splits plus manifest.json into out_dir and returns the opened
// handle. Deterministic: identical spec => byte-identical files.
Dataset generate_dataset(const DatasetSpec& spec, const fs::path& out_dir);

// Stratified per-category subsample of the train split.
struct DatasetView {
    const Dataset* base = nullptr;
    double fraction = 1.0;
    uint64_t seed = 0;
    std::vector<uint32_t> indices;  // into the train split, sorted ascending
};

// Retains floor(fraction * count) uniformly-random train indices per
// category, without replacement, deterministic under seed.
DatasetView stratified_reduce(const Dataset& data, double fraction, uint64_t seed);

// Uniform read-only sample access for trainers and statistics: a dataset
// split, an optional index subset, and an optional per-image scramble
// transform applied on fetch.
class SampleSet {
public:
    static SampleSet train_of(const Dataset& ds);
    static SampleSet val_of(const Dataset& ds);
    static SampleSet of_view(const DatasetView& view);

    SampleSet with_scramble(int patch_size, uint64_t seed) const;

    size_t size() const { return indices_ ? indices_->size() : static_cast<size_t>(count_); }
    int image_size() const;
    int num_categories() const;
    uint16_t label(size_t i) const;
    // Copies record i (after any transform) into dst, 3*size*size bytes.
    void fetch(size_t i, uint8_t* dst) const;

private:
    const Dataset* ds_ = nullptr;
    Split split_ = Split::Train;
    int count_ = 0;
    std::shared_ptr<const std::vector<uint32_t>> indices_;  // null = full split
    std::optional<int> scramble_patch_;
    uint64_t scramble_seed_ = 0;
    uint32_t record_index(size_t i) const;
};

// Per-channel mean/std over all pixels of all images, in [0,1] units.
// Population (divide-by-n) convention; std clamped below at kStdClampEps.
ChannelStats compute_channel_stats(const SampleSet& data);
ChannelStats compute_channel_stats(const Dataset& data);  // train split
ChannelStats compute_channel_stats(const DatasetView& view);

}  // namespace synthgap
