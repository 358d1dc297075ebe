#pragma once

#include <cstdint>
#include <vector>

namespace synthgap {

// 8-bit RGB image, channel-major (CHW) to match the on-disk record layout.
struct Image {
    int height = 0;
    int width = 0;
    std::vector<uint8_t> chw;  // 3 * height * width

    Image() = default;
    Image(int h, int w) : height(h), width(w), chw(static_cast<size_t>(3) * h * w, 0) {}

    uint8_t& at(int c, int y, int x) {
        return chw[(static_cast<size_t>(c) * height + y) * width + x];
    }
    uint8_t at(int c, int y, int x) const {
        return chw[(static_cast<size_t>(c) * height + y) * width + x];
    }
    size_t pixel_count() const { return static_cast<size_t>(height) * width; }
};

// Permutes pixels (RGB triples) within each non-overlapping
// patch_size x patch_size patch using a seed-deterministic shuffle.
// Destroys sub-patch texture while preserving patch-level layout; the pixel
// multiset of every patch is unchanged. patch_size == 1 is the identity.
Image texture_scramble(const Image& img, int patch_size, uint64_t seed);

}  // namespace synthgap
