#include <algorithm>
#include <cmath>

#include "synthgap/dataset.hpp"
#include "synthgap/errors.hpp"
#include "synthgap/rng.hpp"

namespace synthgap {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr uint64_t kPerturbSalt = 0x70657274757262ULL;  // side stream tag

// Category cues: vertex count (shape) and grating base frequency (texture).
// Both are needed jointly to separate the high-vertex-count categories, which
// look near-circular at 32 px.
int vertex_count(int category) { return 3 + category; }
double base_frequency(int category) { return 2.0 + 0.6 * category; }

// Proxy deviation strengths at fidelity 0. Each term scales linearly with
// (1 - fidelity).
constexpr double kFreqPerturb = 0.55;     // relative grating-frequency error
constexpr double kVertexJitter = 0.30;    // relative radial vertex displacement
constexpr double kArtifactAmp = 0.22;     // low-frequency additive field
constexpr std::array<double, 3> kColorShift = {0.16, -0.12, 0.14};

struct Point {
    double x, y;
};

// even-odd crossing test; handles the slightly non-convex jittered polygons
bool point_in_polygon(const std::vector<Point>& poly, double px, double py) {
    bool inside = false;
    size_t n = poly.size();
    for (size_t i = 0, j = n - 1; i < n; j = i++) {
        const Point& a = poly[j];
        const Point& b = poly[i];
        if ((b.y > py) != (a.y > py)) {
            double x_int = b.x + (py - b.y) * (a.x - b.x) / (a.y - b.y);
            if (px < x_int) inside = !inside;
        }
    }
    return inside;
}

uint8_t quantize(double v) {
    double c = std::clamp(v, 0.0, 1.0);
    return static_cast<uint8_t>(std::lround(c * 255.0));
}

}  // namespace

uint64_t sample_rng_state(const DatasetSpec& spec, Split split, int index) {
    return hash_combine(spec.seed, split == Split::Train ? 1u : 2u,
                        static_cast<uint64_t>(index));
}

Image render_sample(const DatasetSpec& spec, int category, uint64_t rng_state) {
    if (category < 0 || category >= spec.num_categories) {
        throw ValidationError("render_sample: category " + std::to_string(category) +
                              " out of range [0, " + std::to_string(spec.num_categories) + ")");
    }
    const int n = spec.image_size;
    const bool proxy = spec.distribution == Distribution::Proxy;
    const double dev = proxy ? 1.0 - spec.fidelity : 0.0;

    // Base stream: identical draw sequence for Real and Proxy.
    Rng base(rng_state);
    std::array<double, 3> bg;
    for (auto& c : bg) c = base.uniform(0.08, 0.55);
    const double grad_angle = base.uniform(0.0, kTwoPi);
    const double grad_strength = base.uniform(0.0, 0.15);
    const double rotation = base.uniform(0.0, kTwoPi);
    const double scale = base.uniform(0.5, 0.8);  // polygon diameter / image size
    const double cx = 0.5 * n + base.uniform(-0.08, 0.08) * n;
    const double cy = 0.5 * n + base.uniform(-0.08, 0.08) * n;
    const double grating_angle = base.uniform(0.0, kTwoPi);
    const double grating_phase = base.uniform(0.0, kTwoPi);
    std::array<double, 3> fg_hi, fg_lo;
    for (auto& c : fg_hi) c = base.uniform(0.55, 0.98);
    for (auto& c : fg_lo) c = base.uniform(0.02, 0.45);
    const double freq_wobble = base.uniform(-1.0, 1.0);  // small intra-class variation

    double frequency = base_frequency(category) * (1.0 + 0.05 * freq_wobble);

    // Perturb stream: drawn only under Proxy; every effect scales with dev,
    // so dev == 0 leaves the Real pixels bit-identical.
    const int nv = vertex_count(category);
    std::vector<double> radial_jitter(nv, 0.0);
    double art_fx = 0.0, art_fy = 0.0, art_phase = 0.0, art_amp = 0.0;
    std::array<double, 3> color_shift = {0.0, 0.0, 0.0};
    if (proxy) {
        Rng perturb(hash_combine(rng_state, kPerturbSalt));
        frequency *= 1.0 + kFreqPerturb * dev * perturb.uniform(-1.0, 1.0);
        for (auto& j : radial_jitter) j = kVertexJitter * dev * perturb.uniform(-1.0, 1.0);
        art_fx = perturb.uniform(0.5, 1.5);
        art_fy = perturb.uniform(0.5, 1.5);
        art_phase = perturb.uniform(0.0, kTwoPi);
        art_amp = kArtifactAmp * dev;
        for (int c = 0; c < 3; ++c) color_shift[c] = kColorShift[c] * dev;
    }

    std::vector<Point> poly(nv);
    const double radius = 0.5 * scale * n;
    for (int i = 0; i < nv; ++i) {
        double ang = rotation + kTwoPi * i / nv;
        double r = radius * (1.0 + radial_jitter[i]);
        poly[i] = {cx + r * std::cos(ang), cy + r * std::sin(ang)};
    }

    const double ga_c = std::cos(grating_angle), ga_s = std::sin(grating_angle);
    const double bg_c = std::cos(grad_angle), bg_s = std::sin(grad_angle);

    Image img(n, n);
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            const double px = x + 0.5, py = y + 0.5;
            std::array<double, 3> pix;
            if (point_in_polygon(poly, px, py)) {
                double u = (px * ga_c + py * ga_s) / n;
                double g = 0.5 + 0.5 * std::sin(kTwoPi * frequency * u + grating_phase);
                for (int c = 0; c < 3; ++c) pix[c] = fg_hi[c] * g + fg_lo[c] * (1.0 - g);
            } else {
                double t = (px * bg_c + py * bg_s) / n - 0.5;
                for (int c = 0; c < 3; ++c) pix[c] = bg[c] + grad_strength * t;
            }
            if (proxy) {
                double field = art_amp * std::sin(kTwoPi * (art_fx * px + art_fy * py) / n + art_phase);
                for (int c = 0; c < 3; ++c) pix[c] += field + color_shift[c];
            }
            for (int c = 0; c < 3; ++c) img.at(c, y, x) = quantize(pix[c]);
        }
    }
    return img;
}

Image texture_scramble(const Image& img, int patch_size, uint64_t seed) {
    if (patch_size < 1 || img.height % patch_size != 0 || img.width % patch_size != 0) {
        throw ValidationError("texture_scramble: patch_size " + std::to_string(patch_size) +
                              " does not divide " + std::to_string(img.height) + "x" +
                              std::to_string(img.width));
    }
    Image out(img.height, img.width);
    Rng rng(seed);
    std::vector<int> perm(static_cast<size_t>(patch_size) * patch_size);
    for (int py = 0; py < img.height; py += patch_size) {
        for (int px = 0; px < img.width; px += patch_size) {
            for (size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(i);
            rng.shuffle(perm.begin(), perm.end());
            for (size_t i = 0; i < perm.size(); ++i) {
                int sy = py + perm[i] / patch_size, sx = px + perm[i] % patch_size;
                int dy = py + static_cast<int>(i) / patch_size, dx = px + static_cast<int>(i) % patch_size;
                for (int c = 0; c < 3; ++c) out.at(c, dy, dx) = img.at(c, sy, sx);
            }
        }
    }
    return out;
}

}  // namespace synthgap
