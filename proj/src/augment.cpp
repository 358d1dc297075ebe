#include "synthgap/augment.hpp"

#include <algorithm>
#include <cmath>

#include "synthgap/errors.hpp"
#include "synthgap/rng.hpp"

namespace synthgap {

std::string to_string(AugmentationPipeline p) {
    switch (p) {
        case AugmentationPipeline::None: return "none";
        case AugmentationPipeline::Basic: return "basic";
        case AugmentationPipeline::MultiCrop: return "multicrop";
    }
    return "none";
}

AugmentationPipeline augmentation_from_string(const std::string& s) {
    if (s == "none") return AugmentationPipeline::None;
    if (s == "basic") return AugmentationPipeline::Basic;
    if (s == "multicrop") return AugmentationPipeline::MultiCrop;
    throw ValidationError("unknown augmentation pipeline: '" + s + "'");
}

namespace {

constexpr double kMinAspect = 0.75;  // crop aspect sampled log-uniform in [3/4, 4/3]

// Bilinear sample of channel plane at source coordinate (sx, sy), clamped to
// the crop region [x0, x0+w) x [y0, y0+h).
inline float sample_bilinear(const uint8_t* plane, int src, int x0, int y0, int w, int h,
                             double sx, double sy) {
    sx = std::clamp(sx, static_cast<double>(x0), static_cast<double>(x0 + w - 1));
    sy = std::clamp(sy, static_cast<double>(y0), static_cast<double>(y0 + h - 1));
    int ix = static_cast<int>(std::floor(sx));
    int iy = static_cast<int>(std::floor(sy));
    int ix1 = std::min(ix + 1, x0 + w - 1);
    int iy1 = std::min(iy + 1, y0 + h - 1);
    double fx = sx - ix, fy = sy - iy;
    double v00 = plane[iy * src + ix], v01 = plane[iy * src + ix1];
    double v10 = plane[iy1 * src + ix], v11 = plane[iy1 * src + ix1];
    double top = v00 + fx * (v01 - v00);
    double bot = v10 + fx * (v11 - v10);
    return static_cast<float>((top + fy * (bot - top)) / 255.0);
}

// Random-resized-crop + optional horizontal flip. Draw order: area scale,
// log-aspect, x offset, y offset, flip.
ImageView random_resized_crop(const uint8_t* chw, int src, double scale_lo, double scale_hi,
                              int out_size, Rng& rng) {
    const double area = static_cast<double>(src) * src;
    double s = rng.uniform(scale_lo, scale_hi);
    double aspect = std::exp(rng.uniform(std::log(kMinAspect), std::log(1.0 / kMinAspect)));
    int w = std::clamp(static_cast<int>(std::lround(std::sqrt(area * s * aspect))), 1, src);
    int h = std::clamp(static_cast<int>(std::lround(std::sqrt(area * s / aspect))), 1, src);
    int x0 = static_cast<int>(rng.uniform_index(static_cast<uint64_t>(src - w + 1)));
    int y0 = static_cast<int>(rng.uniform_index(static_cast<uint64_t>(src - h + 1)));
    bool flip = rng.uniform() < 0.5;

    ImageView view;
    view.size = out_size;
    view.data.resize(3, static_cast<Eigen::Index>(out_size) * out_size);
    const size_t plane_size = static_cast<size_t>(src) * src;
    for (int oy = 0; oy < out_size; ++oy) {
        double sy = y0 + (oy + 0.5) * h / out_size - 0.5;
        for (int ox = 0; ox < out_size; ++ox) {
            int px = flip ? out_size - 1 - ox : ox;
            double sx = x0 + (px + 0.5) * w / out_size - 0.5;
            Eigen::Index col = static_cast<Eigen::Index>(oy) * out_size + ox;
            for (int c = 0; c < 3; ++c)
                view.data(c, col) = sample_bilinear(chw + c * plane_size, src, x0, y0, w, h, sx, sy);
        }
    }
    return view;
}

ImageView full_view(const uint8_t* chw, int src) {
    ImageView view;
    view.size = src;
    view.data.resize(3, static_cast<Eigen::Index>(src) * src);
    const size_t plane_size = static_cast<size_t>(src) * src;
    for (int c = 0; c < 3; ++c)
        for (size_t p = 0; p < plane_size; ++p)
            view.data(c, static_cast<Eigen::Index>(p)) = chw[c * plane_size + p] / 255.0f;
    return view;
}

}  // namespace

std::vector<ImageView> apply_augmentation(const uint8_t* chw, int src_size,
                                          AugmentationPipeline pipeline, uint64_t rng_state) {
    std::vector<ImageView> views;
    switch (pipeline) {
        case AugmentationPipeline::None:
            views.push_back(full_view(chw, src_size));
            break;
        case AugmentationPipeline::Basic: {
            Rng rng(rng_state);
            views.push_back(random_resized_crop(chw, src_size, 0.4, 1.0, src_size, rng));
            break;
        }
        case AugmentationPipeline::MultiCrop: {
            Rng rng(rng_state);
            views.push_back(random_resized_crop(chw, src_size, 0.4, 1.0, src_size, rng));
            const int local = src_size / 2;
            for (int i = 0; i < 8; ++i)
                views.push_back(random_resized_crop(chw, src_size, 0.05, 0.4, local, rng));
            break;
        }
    }
    return views;
}

Eigen::MatrixXf normalize(const Eigen::MatrixXf& view, const ChannelStats& stats) {
    Eigen::MatrixXf out = view;
    normalize_inplace(out, stats);
    return out;
}

void normalize_inplace(Eigen::MatrixXf& view, const ChannelStats& stats) {
    if (view.rows() != 3) throw ValidationError("normalize: expected 3-channel input");
    for (int c = 0; c < 3; ++c) {
        view.row(c) = (view.row(c).array() - static_cast<float>(stats.mean[c])) /
                      static_cast<float>(stats.std[c]);
    }
}

}  // namespace synthgap
