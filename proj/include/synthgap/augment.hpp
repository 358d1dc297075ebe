#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "synthgap/dataset.hpp"

namespace synthgap {

enum class AugmentationPipeline { None, Basic, MultiCrop };

std::string to_string(AugmentationPipeline p);
AugmentationPipeline augmentation_from_string(const std::string& s);

// One augmented view: float pixels in [0,1], stored as a (3, size*size)
// matrix whose column p = y*size + x holds the channel vector of pixel (x,y).
struct ImageView {
    int size = 0;
    Eigen::MatrixXf data;
};

// Applies the pipeline to a CHW uint8 image of side src_size.
//   None      -> 1 full-image view (pixels / 255)
//   Basic     -> 1 random-resized-crop, area scale in [0.4,1.0], hflip p=0.5,
//                output src_size
//   MultiCrop -> 1 global crop (scale [0.4,1.0], output src_size) plus
//                8 local crops (scale [0.05,0.4], output src_size/2),
//                flips independent
// Deterministic under rng_state.
std::vector<ImageView> apply_augmentation(const uint8_t* chw, int src_size,
                                          AugmentationPipeline pipeline, uint64_t rng_state);

// Per-channel (x - mean) / std. Input expected in [0,1].
Eigen::MatrixXf normalize(const Eigen::MatrixXf& view, const ChannelStats& stats);
void normalize_inplace(Eigen::MatrixXf& view, const ChannelStats& stats);

}  // namespace synthgap
