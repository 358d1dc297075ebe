#include <doctest.h>

#include "synthgap/augment.hpp"
#include "test_util.hpp"

using namespace synthgap;

namespace {

Image sample_image(int size = 32) {
    DatasetSpec spec;
    spec.image_size = size;
    spec.seed = 5;
    return render_sample(spec, 4, 99);
}

}  // namespace

TEST_CASE("pipeline None returns one full view with pixels / 255") {
    Image img = sample_image();
    auto views = apply_augmentation(img.chw.data(), 32, AugmentationPipeline::None, 0);
    REQUIRE(views.size() == 1);
    CHECK(views[0].size == 32);
    REQUIRE(views[0].data.cols() == 1024);
    for (int c = 0; c < 3; ++c) {
        for (int p = 0; p < 1024; ++p) {
            CHECK(views[0].data(c, p) == doctest::Approx(img.chw[c * 1024 + p] / 255.0f));
        }
    }
}

TEST_CASE("pipeline Basic is deterministic under its rng state") {
    Image img = sample_image();
    auto a = apply_augmentation(img.chw.data(), 32, AugmentationPipeline::Basic, 42);
    auto b = apply_augmentation(img.chw.data(), 32, AugmentationPipeline::Basic, 42);
    REQUIRE(a.size() == 1);
    REQUIRE(b.size() == 1);
    CHECK(a[0].size == 32);
    CHECK(a[0].data == b[0].data);
    auto c = apply_augmentation(img.chw.data(), 32, AugmentationPipeline::Basic, 43);
    CHECK(a[0].data != c[0].data);
    CHECK(a[0].data.minCoeff() >= 0.0f);
    CHECK(a[0].data.maxCoeff() <= 1.0f);
}

TEST_CASE("pipeline MultiCrop yields one global and eight local crops") {
    Image img = sample_image();
    auto views = apply_augmentation(img.chw.data(), 32, AugmentationPipeline::MultiCrop, 7);
    REQUIRE(views.size() == 9);
    CHECK(views[0].size == 32);
    CHECK(views[0].data.cols() == 1024);
    for (int i = 1; i <= 8; ++i) {
        CHECK(views[i].size == 16);
        CHECK(views[i].data.cols() == 256);
    }
    auto again = apply_augmentation(img.chw.data(), 32, AugmentationPipeline::MultiCrop, 7);
    for (int i = 0; i < 9; ++i) CHECK(views[i].data == again[i].data);
}

TEST_CASE("normalize applies (x - mean) / std per channel") {
    ChannelStats identity;
    identity.mean = {0, 0, 0};
    identity.std = {1, 1, 1};
    Eigen::MatrixXf view = Eigen::MatrixXf::Random(3, 16).cwiseAbs();
    CHECK(normalize(view, identity) == view);

    ChannelStats stats;
    stats.mean = {0.25, 0.5, 0.75};
    stats.std = {0.5, 0.25, 0.125};
    Eigen::MatrixXf constant(3, 4);
    for (int c = 0; c < 3; ++c)
        constant.row(c).setConstant(static_cast<float>(stats.mean[c]));
    Eigen::MatrixXf out = normalize(constant, stats);
    CHECK(out.cwiseAbs().maxCoeff() == 0.0f);

    Eigen::MatrixXf bad(2, 4);
    CHECK_THROWS_AS(normalize(bad, stats), ValidationError);
}

TEST_CASE("self-normalization closure: exact stats map the split to mean 0 std 1") {
    test::TempDir tmp("selfnorm");
    DatasetSpec spec = test::tiny_spec();
    spec.per_category_train = 40;
    Dataset ds = generate_dataset(spec, tmp.path / "d");
    SampleSet train = SampleSet::train_of(ds);
    ChannelStats stats = compute_channel_stats(train);

    // normalize every train image with its own exact stats, re-measure
    const int size = ds.image_size();
    std::vector<uint8_t> buf(3 * size * size);
    std::array<double, 3> sum{0, 0, 0}, sum_sq{0, 0, 0};
    for (size_t i = 0; i < train.size(); ++i) {
        train.fetch(i, buf.data());
        auto views = apply_augmentation(buf.data(), size, AugmentationPipeline::None, 0);
        normalize_inplace(views[0].data, stats);
        for (int c = 0; c < 3; ++c) {
            for (int p = 0; p < size * size; ++p) {
                const double v = views[0].data(c, p);
                sum[c] += v;
                sum_sq[c] += v * v;
            }
        }
    }
    const double n = static_cast<double>(train.size()) * size * size;
    for (int c = 0; c < 3; ++c) {
        const double mean = sum[c] / n;
        const double std = std::sqrt(std::max(sum_sq[c] / n - mean * mean, 0.0));
        CHECK(std::abs(mean) < 1e-4);
        CHECK(std::abs(std - 1.0) < 1e-4);
    }
}
