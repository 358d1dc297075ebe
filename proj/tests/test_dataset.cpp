#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <set>

#include "synthgap/rng.hpp"
#include "test_util.hpp"

using namespace synthgap;
using test::TempDir;

namespace {

DatasetSpec small_spec(Distribution dist, double fidelity, uint64_t seed = 42) {
    DatasetSpec spec;
    spec.num_categories = 4;
    spec.per_category_train = 30;
    spec.per_category_val = 10;
    spec.image_size = 32;
    spec.distribution = dist;
    spec.fidelity = fidelity;
    spec.seed = seed;
    return spec;
}

double mean_abs_diff(const Image& a, const Image& b) {
    double sum = 0;
    for (size_t i = 0; i < a.chw.size(); ++i)
        sum += std::abs(static_cast<int>(a.chw[i]) - static_cast<int>(b.chw[i]));
    return sum / static_cast<double>(a.chw.size());
}

}  // namespace

TEST_CASE("render_sample is a pure function of its rng state") {
    auto spec = small_spec(Distribution::Proxy, 0.3);
    Image a = render_sample(spec, 2, 1234);
    Image b = render_sample(spec, 2, 1234);
    CHECK(a.chw == b.chw);
    Image c = render_sample(spec, 2, 1235);
    CHECK(a.chw != c.chw);
}

TEST_CASE("render_sample rejects out-of-range categories") {
    auto spec = small_spec(Distribution::Real, 1.0);
    CHECK_THROWS_AS(render_sample(spec, 4, 0), ValidationError);
    CHECK_THROWS_AS(render_sample(spec, -1, 0), ValidationError);
}

TEST_CASE("proxy at fidelity 1 renders the real pixels exactly") {
    auto real = small_spec(Distribution::Real, 1.0);
    auto proxy = small_spec(Distribution::Proxy, 1.0);
    for (int cat = 0; cat < 4; ++cat) {
        for (uint64_t state : {0ull, 99ull, 31337ull}) {
            Image a = render_sample(real, cat, state);
            Image b = render_sample(proxy, cat, state);
            CHECK(a.chw == b.chw);
        }
    }
}

TEST_CASE("proxy at fidelity 0 deviates from fidelity 1") {
    auto p0 = small_spec(Distribution::Proxy, 0.0);
    auto p1 = small_spec(Distribution::Proxy, 1.0);
    Image a = render_sample(p0, 1, 777);
    Image b = render_sample(p1, 1, 777);
    CHECK(mean_abs_diff(a, b) > 0.0);
}

TEST_CASE("generate_dataset writes the declared counts and is reproducible") {
    TempDir tmp("gen_counts");
    auto spec = small_spec(Distribution::Real, 1.0);
    Dataset ds = generate_dataset(spec, tmp.path / "a");
    CHECK(ds.manifest().train_count == 120);
    CHECK(ds.manifest().val_count == 40);
    CHECK(ds.manifest().generator_version == kGeneratorVersion);
    // grouped labels
    CHECK(ds.label(Split::Train, 0) == 0);
    CHECK(ds.label(Split::Train, 119) == 3);

    generate_dataset(spec, tmp.path / "b");
    CHECK(read_file_bytes(tmp.path / "a/train_images.bin") ==
          read_file_bytes(tmp.path / "b/train_images.bin"));
    CHECK(read_file_bytes(tmp.path / "a/val_images.bin") ==
          read_file_bytes(tmp.path / "b/val_images.bin"));
    CHECK(read_text_file(tmp.path / "a/manifest.json") ==
          read_text_file(tmp.path / "b/manifest.json"));
}

TEST_CASE("default-counts manifest reports 5000 train records") {
    TempDir tmp("gen_default_counts");
    DatasetSpec spec;  // defaults: 10 categories x 500
    spec.seed = 1;
    spec.per_category_val = 1;  // val size irrelevant here
    Dataset ds = generate_dataset(spec, tmp.path / "d");
    CHECK(ds.manifest().train_count == 5000);
}

TEST_CASE("fidelity-1 proxy dataset is byte-identical to the real dataset") {
    TempDir tmp("gen_identity");
    generate_dataset(small_spec(Distribution::Real, 1.0), tmp.path / "real");
    generate_dataset(small_spec(Distribution::Proxy, 1.0), tmp.path / "proxy");
    CHECK(read_file_bytes(tmp.path / "real/train_images.bin") ==
          read_file_bytes(tmp.path / "proxy/train_images.bin"));
    CHECK(read_file_bytes(tmp.path / "real/val_images.bin") ==
          read_file_bytes(tmp.path / "proxy/val_images.bin"));
    CHECK(read_file_bytes(tmp.path / "real/train_labels.bin") ==
          read_file_bytes(tmp.path / "proxy/train_labels.bin"));
}

TEST_CASE("proxy color shift moves the channel means monotonically in fidelity") {
    TempDir tmp("gen_shift");
    Dataset real = generate_dataset(small_spec(Distribution::Real, 1.0), tmp.path / "real");
    const auto real_stats = real.manifest().train_stats;

    double prev_dist = -1.0;
    const double grid[] = {0.0, 0.25, 0.5, 0.75, 1.0};
    for (double phi : grid) {
        Dataset proxy = generate_dataset(small_spec(Distribution::Proxy, phi),
                                         tmp.path / ("proxy" + format_double(phi)));
        const auto stats = proxy.manifest().train_stats;
        double dist = 0;
        for (int c = 0; c < 3; ++c) dist += std::abs(stats.mean[c] - real_stats.mean[c]);
        if (phi == 0.5) {
            for (int c = 0; c < 3; ++c)
                CHECK(std::abs(stats.mean[c] - real_stats.mean[c]) > 0.01);
        }
        if (prev_dist >= 0) CHECK(dist <= prev_dist + 1e-12);  // non-increasing in phi
        prev_dist = dist;
    }
    CHECK(prev_dist == 0.0);  // equal at fidelity 1
}

TEST_CASE("invalid specs are rejected") {
    DatasetSpec spec;
    spec.num_categories = 1;
    CHECK_THROWS_AS(validate(spec), ValidationError);
    spec = DatasetSpec{};
    spec.fidelity = 1.5;
    CHECK_THROWS_AS(validate(spec), ValidationError);
    spec = DatasetSpec{};
    spec.per_category_train = 0;
    CHECK_THROWS_AS(validate(spec), ValidationError);
}

TEST_CASE("channel stats: constant and two-value hand cases") {
    TempDir tmp("stats_hand");
    // all-zero images: mean 0, std clamped at epsilon
    std::vector<Image> zeros(4, Image(4, 4));
    std::vector<uint16_t> labels = {0, 0, 1, 1};
    Dataset z = test::forge_dataset(tmp.path / "zeros", zeros, labels, zeros, labels, 2);
    auto s = compute_channel_stats(z);
    for (int c = 0; c < 3; ++c) {
        CHECK(s.mean[c] == 0.0);
        CHECK(s.std[c] == kStdClampEps);
    }

    // two single-pixel images, channel 0 values 0 and 255: mean .5, std .5
    Image lo(1, 1), hi(1, 1);
    hi.at(0, 0, 0) = 255;
    Dataset d = test::forge_dataset(tmp.path / "pair", {lo, hi}, {0, 1}, {lo, hi}, {0, 1}, 2);
    auto p = compute_channel_stats(d);
    CHECK(p.mean[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(p.std[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(p.mean[1] == 0.0);
    CHECK(p.std[1] == kStdClampEps);
}

TEST_CASE("channel stats are deterministic on generated data") {
    TempDir tmp("stats_det");
    Dataset ds = generate_dataset(small_spec(Distribution::Real, 1.0), tmp.path / "d");
    auto a = compute_channel_stats(ds);
    auto b = compute_channel_stats(ds);
    for (int c = 0; c < 3; ++c) {
        CHECK(a.mean[c] == b.mean[c]);
        CHECK(a.std[c] == b.std[c]);
    }
    // manifest stats come from the same definition
    for (int c = 0; c < 3; ++c) {
        CHECK(a.mean[c] == doctest::Approx(ds.manifest().train_stats.mean[c]).epsilon(1e-12));
        CHECK(a.std[c] == doctest::Approx(ds.manifest().train_stats.std[c]).epsilon(1e-12));
    }
}

TEST_CASE("stratified_reduce keeps exactly floor(fraction * count) per category") {
    TempDir tmp("reduce");
    auto spec = small_spec(Distribution::Real, 1.0);
    Dataset ds = generate_dataset(spec, tmp.path / "d");

    DatasetView half = stratified_reduce(ds, 0.5, 9);
    CHECK(half.indices.size() == 4 * 15);
    std::set<uint32_t> unique(half.indices.begin(), half.indices.end());
    CHECK(unique.size() == half.indices.size());
    std::array<int, 4> per_cat{0, 0, 0, 0};
    for (uint32_t idx : half.indices) {
        CHECK(idx < 120);
        ++per_cat[ds.label(Split::Train, static_cast<int>(idx))];
    }
    for (int c = 0; c < 4; ++c) CHECK(per_cat[c] == 15);

    // determinism + seed sensitivity
    DatasetView again = stratified_reduce(ds, 0.5, 9);
    CHECK(again.indices == half.indices);
    DatasetView other = stratified_reduce(ds, 0.5, 10);
    CHECK(other.indices != half.indices);

    // identity at fraction 1
    DatasetView full = stratified_reduce(ds, 1.0, 3);
    CHECK(full.indices.size() == 120);
    for (uint32_t i = 0; i < 120; ++i) CHECK(full.indices[i] == i);

    // floor rule: 30 * (1/8) -> 3
    DatasetView eighth = stratified_reduce(ds, 0.125, 4);
    CHECK(eighth.indices.size() == 4 * 3);

    CHECK_THROWS_AS(stratified_reduce(ds, 0.0, 1), ValidationError);
    CHECK_THROWS_AS(stratified_reduce(ds, 1.5, 1), ValidationError);
    CHECK_THROWS_AS(stratified_reduce(ds, 0.01, 1), ValidationError);  // floor == 0
}

TEST_CASE("floor arithmetic of the halving ladder") {
    // 1300 per category halved -> 650; 500 at 1/8 -> 62
    CHECK(static_cast<int>(std::floor(0.5 * 1300)) == 650);
    CHECK(static_cast<int>(std::floor(500.0 / 8.0)) == 62);
}

TEST_CASE("texture_scramble preserves pixel multisets per patch") {
    auto spec = small_spec(Distribution::Real, 1.0);
    Image img = render_sample(spec, 3, 555);

    Image identity = texture_scramble(img, 1, 123);
    CHECK(identity.chw == img.chw);

    Image scrambled = texture_scramble(img, 8, 123);
    CHECK(scrambled.chw != img.chw);
    Image scrambled2 = texture_scramble(img, 8, 123);
    CHECK(scrambled.chw == scrambled2.chw);

    // per-patch multiset of RGB triples is unchanged
    for (int py = 0; py < 32; py += 8) {
        for (int px = 0; px < 32; px += 8) {
            std::vector<std::array<uint8_t, 3>> before, after;
            for (int y = py; y < py + 8; ++y) {
                for (int x = px; x < px + 8; ++x) {
                    before.push_back({img.at(0, y, x), img.at(1, y, x), img.at(2, y, x)});
                    after.push_back({scrambled.at(0, y, x), scrambled.at(1, y, x),
                                     scrambled.at(2, y, x)});
                }
            }
            std::sort(before.begin(), before.end());
            std::sort(after.begin(), after.end());
            CHECK(before == after);
        }
    }

    CHECK_THROWS_AS(texture_scramble(img, 5, 1), ValidationError);
    CHECK_THROWS_AS(texture_scramble(img, 0, 1), ValidationError);
}

TEST_CASE("dataset open validates file sizes and labels") {
    TempDir tmp("open_validate");
    auto spec = small_spec(Distribution::Real, 1.0);
    generate_dataset(spec, tmp.path / "d");

    // truncated images file
    auto bytes = read_file_bytes(tmp.path / "d/train_images.bin");
    bytes.resize(bytes.size() - 10);
    write_file_bytes(tmp.path / "d/train_images.bin", bytes.data(), bytes.size());
    CHECK_THROWS_AS(Dataset::open(tmp.path / "d"), FormatError);

    CHECK_THROWS_AS(Dataset::open(tmp.path / "missing"), NotFoundError);
}

TEST_CASE("sample sets view the right records") {
    TempDir tmp("sampleset");
    auto spec = small_spec(Distribution::Real, 1.0);
    Dataset ds = generate_dataset(spec, tmp.path / "d");

    SampleSet train = SampleSet::train_of(ds);
    SampleSet val = SampleSet::val_of(ds);
    CHECK(train.size() == 120);
    CHECK(val.size() == 40);

    DatasetView view = stratified_reduce(ds, 0.5, 1);
    SampleSet reduced = SampleSet::of_view(view);
    CHECK(reduced.size() == 60);
    std::vector<uint8_t> a(3 * 32 * 32), b(3 * 32 * 32);
    reduced.fetch(0, a.data());
    std::memcpy(b.data(), ds.image_data(Split::Train, static_cast<int>(view.indices[0])),
                b.size());
    CHECK(a == b);
    CHECK(reduced.label(0) == ds.label(Split::Train, static_cast<int>(view.indices[0])));

    // scramble transform preserves the global pixel multiset
    SampleSet scrambled = train.with_scramble(8, 77);
    scrambled.fetch(5, a.data());
    std::memcpy(b.data(), ds.image_data(Split::Train, 5), b.size());
    CHECK(a != b);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);
}
