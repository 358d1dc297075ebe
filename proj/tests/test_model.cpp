#include <doctest.h>

#include "synthgap/rng.hpp"
#include "test_util.hpp"

using namespace synthgap;
using test::TempDir;
using test::tiny_arch;

namespace {

// one Train-mode step's worth of state change without an optimizer:
// forward in Train mode mutates BN running stats of non-frozen units
void train_forward(Model& model, int batch = 4, int size = 16) {
    NetCache<float> cache;
    NnScratch<float> scratch;
    Eigen::MatrixXf input =
        Eigen::MatrixXf::Random(3, static_cast<Eigen::Index>(batch) * size * size).cwiseAbs();
    net_forward(model, input, {batch, size, size}, RunMode::Train, cache, scratch);
}

}  // namespace

TEST_CASE("default architecture partitions into 10 units") {
    ArchitectureConfig cfg;
    CHECK(cfg.units() == 10);
    Model model = build_model(cfg, 1);
    CHECK(model.units() == 10);
    CHECK(model.blocks.size() == 8);
}

TEST_CASE("architecture validation") {
    ArchitectureConfig cfg;
    cfg.stage_widths = {};
    CHECK_THROWS_AS(validate(cfg), ValidationError);
    cfg = ArchitectureConfig{};
    cfg.stage_widths = {32, 16};  // decreasing
    CHECK_THROWS_AS(validate(cfg), ValidationError);
    cfg = ArchitectureConfig{};
    cfg.head_temperature = 0;
    CHECK_THROWS_AS(validate(cfg), ValidationError);
}

TEST_CASE("build_model is deterministic under its seed") {
    ArchitectureConfig cfg = tiny_arch();
    Model a = build_model(cfg, 123);
    Model b = build_model(cfg, 123);
    CHECK(snapshot(a) == snapshot(b));
    Model c = build_model(cfg, 124);
    CHECK_FALSE(snapshot(a) == snapshot(c));
}

TEST_CASE("partition covers every parameter exactly once") {
    Model model = build_model(ArchitectureConfig{}, 3);
    auto table = tensor_table(model);
    size_t total = 0;
    int prev_unit = 0;
    for (const auto& t : table) {
        CHECK(t.unit >= prev_unit);  // forward order
        prev_unit = t.unit;
        total += static_cast<size_t>(t.size());
    }
    ParamSnapshot snap = snapshot(model);
    CHECK(snap.data.size() == total);
    CHECK(snap.unit_offsets.size() == 11);
    size_t unit_sum = 0;
    for (int u = 0; u < 10; ++u) unit_sum += snap.unit_size(u);
    CHECK(unit_sum == total);
    for (int u = 0; u < 10; ++u) CHECK(snap.unit_size(u) > 0);
}

TEST_CASE("stem initializer variance tracks 2 / fan_in at width 128") {
    ArchitectureConfig cfg;
    cfg.stage_widths = {128, 128};
    cfg.blocks_per_stage = 1;
    Model model = build_model(cfg, 2024);
    const auto& w = model.stem.weight;  // 128 x 27 draws
    const double n = static_cast<double>(w.size());
    double mean = w.cast<double>().sum() / n;
    double var = (w.cast<double>().array() - mean).square().sum() / n;
    const double target = 2.0 / 27.0;
    CHECK(var > 0.9 * target);
    CHECK(var < 1.1 * target);
}

TEST_CASE("freeze_prefix marks exactly the prefix and validates range") {
    Model model = build_model(tiny_arch(), 5);
    freeze_prefix(model, 2);
    CHECK(model.frozen == std::vector<uint8_t>{1, 1, 0, 0});
    CHECK(model.frozen_prefix() == 2);
    freeze_prefix(model, 0);
    CHECK(model.frozen_prefix() == 0);
    CHECK_THROWS_AS(freeze_prefix(model, 5), ValidationError);
    CHECK_THROWS_AS(freeze_prefix(model, -1), ValidationError);
}

TEST_CASE("reinit_suffix redraws only the suffix and resets its BN stats") {
    Model model = build_model(tiny_arch(), 5);
    train_forward(model);  // move running stats off their init values
    ParamSnapshot before = snapshot(model);

    SUBCASE("N = U is a no-op") {
        reinit_suffix(model, 4, 99);
        CHECK(snapshot(model) == before);
    }
    SUBCASE("N = 2 keeps units 1..2 bit-identical and changes 3..U") {
        reinit_suffix(model, 2, 99);
        ParamSnapshot after = snapshot(model);
        CHECK(after.unit_equal(before, 0));
        CHECK(after.unit_equal(before, 1));
        CHECK_FALSE(after.unit_equal(before, 2));
        CHECK_FALSE(after.unit_equal(before, 3));
    }
    SUBCASE("N = 0 equals a fresh build with the reinit seed") {
        reinit_suffix(model, 0, 99);
        Model fresh = build_model(tiny_arch(), 99);
        CHECK(snapshot(model) == snapshot(fresh));
    }
}

TEST_CASE("forward produces (batch, categories) logits for 32 and 16 px inputs") {
    ArchitectureConfig cfg;  // default 4-stage, 10 categories
    Model model = build_model(cfg, 7);
    NetCache<float> cache;
    NnScratch<float> scratch;
    for (int size : {32, 16}) {
        Eigen::MatrixXf input =
            Eigen::MatrixXf::Random(3, static_cast<Eigen::Index>(9) * size * size).cwiseAbs();
        Eigen::MatrixXf logits =
            net_forward(model, input, {9, size, size}, RunMode::Eval, cache, scratch);
        CHECK(logits.rows() == 10);
        CHECK(logits.cols() == 9);
    }
    Eigen::MatrixXf tiny = Eigen::MatrixXf::Random(3, 8 * 8).cwiseAbs();
    CHECK_THROWS_AS(net_forward(model, tiny, {1, 8, 8}, RunMode::Eval, cache, scratch),
                    ValidationError);
}

TEST_CASE("eval-mode forward is idempotent on model state") {
    Model model = build_model(tiny_arch(), 9);
    train_forward(model);  // give running stats non-trivial values
    ParamSnapshot before = snapshot(model);
    NetCache<float> cache;
    NnScratch<float> scratch;
    Eigen::MatrixXf input = Eigen::MatrixXf::Random(3, 2 * 16 * 16).cwiseAbs();
    Eigen::MatrixXf l1 = net_forward(model, input, {2, 16, 16}, RunMode::Eval, cache, scratch);
    Eigen::MatrixXf l2 = net_forward(model, input, {2, 16, 16}, RunMode::Eval, cache, scratch);
    CHECK(l1 == l2);
    CHECK(snapshot(model) == before);
}

TEST_CASE("train-mode forward updates running stats of non-frozen BN layers") {
    Model model = build_model(tiny_arch(), 9);
    ParamSnapshot before = snapshot(model);
    train_forward(model);
    ParamSnapshot after = snapshot(model);
    CHECK_FALSE(after == before);
    // frozen prefix stays bit-identical even in train mode
    Model frozen = build_model(tiny_arch(), 9);
    freeze_prefix(frozen, 2);
    ParamSnapshot fb = snapshot(frozen);
    train_forward(frozen);
    ParamSnapshot fa = snapshot(frozen);
    CHECK(fa.unit_equal(fb, 0));
    CHECK(fa.unit_equal(fb, 1));
    CHECK_FALSE(fa.unit_equal(fb, 2));
}

TEST_CASE("bn_eval_update switches eval forward to train-style statistics") {
    Model model = build_model(tiny_arch(), 31);
    train_forward(model);
    ParamSnapshot base = snapshot(model);
    NetCache<float> cache;
    NnScratch<float> scratch;
    Eigen::MatrixXf input = Eigen::MatrixXf::Random(3, 2 * 16 * 16).cwiseAbs();

    set_bn_eval_update(model, false);
    net_forward(model, input, {2, 16, 16}, RunMode::Eval, cache, scratch);
    CHECK(snapshot(model) == base);

    set_bn_eval_update(model, true);
    net_forward(model, input, {2, 16, 16}, RunMode::Eval, cache, scratch);
    ParamSnapshot updated = snapshot(model);
    CHECK_FALSE(updated == base);

    set_bn_eval_update(model, false);
    net_forward(model, input, {2, 16, 16}, RunMode::Eval, cache, scratch);
    CHECK(snapshot(model) == updated);
}

TEST_CASE("cosine head invariances") {
    Rng rng(5);
    Eigen::MatrixXf feats(6, 3), weights(4, 6);
    for (int i = 0; i < feats.size(); ++i)
        feats.data()[i] = static_cast<float>(rng.normal());
    for (int i = 0; i < weights.size(); ++i)
        weights.data()[i] = static_cast<float>(rng.normal());

    Eigen::MatrixXf base = cosine_head_logits<float>(feats, weights, 0.1f);

    SUBCASE("feature scaling leaves logits unchanged") {
        Eigen::MatrixXf scaled = cosine_head_logits<float>(3.7f * feats, weights, 0.1f);
        CHECK((scaled - base).cwiseAbs().maxCoeff() < 1e-6f);
    }
    SUBCASE("weight-row scaling leaves logits unchanged") {
        Eigen::MatrixXf w2 = weights;
        w2.row(2) *= 11.0f;
        Eigen::MatrixXf scaled = cosine_head_logits<float>(feats, w2, 0.1f);
        CHECK((scaled - base).cwiseAbs().maxCoeff() < 1e-6f);
    }
    SUBCASE("halving tau doubles logits, argmax unchanged") {
        Eigen::MatrixXf doubled = cosine_head_logits<float>(feats, weights, 0.05f);
        CHECK((doubled - 2.0f * base).cwiseAbs().maxCoeff() < 1e-5f);
        for (int j = 0; j < 3; ++j) {
            Eigen::Index a, b;
            base.col(j).maxCoeff(&a);
            doubled.col(j).maxCoeff(&b);
            CHECK(a == b);
        }
    }
    SUBCASE("feature equal to a weight row reaches the unit cosine bound") {
        Eigen::MatrixXf f = weights.row(1).transpose();
        Eigen::MatrixXf logits = cosine_head_logits<float>(f, weights, 1.0f);
        CHECK(logits(1, 0) == doctest::Approx(1.0).epsilon(1e-6));
        Eigen::Index best;
        logits.col(0).maxCoeff(&best);
        CHECK(best == 1);
    }
    SUBCASE("temperature must be positive") {
        CHECK_THROWS_AS(cosine_head_logits<float>(feats, weights, 0.0f), ValidationError);
    }
}

TEST_CASE("checkpoint round-trip restores everything bit-exactly") {
    TempDir tmp("ckpt");
    Model model = build_model(tiny_arch(), 77);
    train_forward(model);
    freeze_prefix(model, 3);
    reinit_suffix(model, 3, 88);
    ParamSnapshot before = snapshot(model);

    save_checkpoint(model, tmp.path / "ck");
    Model loaded = load_checkpoint(tmp.path / "ck");
    CHECK(snapshot(loaded) == before);
    CHECK(loaded.frozen == model.frozen);
    CHECK(loaded.seed_log == model.seed_log);
    CHECK(loaded.cfg == model.cfg);
    CHECK(loaded.frozen_prefix() == 3);
}

TEST_CASE("checkpoint errors") {
    TempDir tmp("ckpt_err");
    Model model = build_model(tiny_arch(), 1);
    save_checkpoint(model, tmp.path / "ck");

    SUBCASE("missing directory") {
        CHECK_THROWS_AS(load_checkpoint(tmp.path / "nope"), NotFoundError);
    }
    SUBCASE("truncated params names expected and found byte counts") {
        auto bytes = read_file_bytes(tmp.path / "ck/params.bin");
        bytes.resize(bytes.size() / 2);
        write_file_bytes(tmp.path / "ck/params.bin", bytes.data(), bytes.size());
        try {
            load_checkpoint(tmp.path / "ck");
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("expected") != std::string::npos);
            CHECK(msg.find("found") != std::string::npos);
        }
    }
    SUBCASE("architecture mismatch on expected-config load") {
        CHECK_THROWS_AS(load_checkpoint(tmp.path / "ck", ArchitectureConfig{}), ValidationError);
        Model ok = load_checkpoint(tmp.path / "ck", tiny_arch());
        CHECK(snapshot(ok) == snapshot(model));
    }
    SUBCASE("corrupt manifest") {
        write_text_file(tmp.path / "ck/manifest.json", "{not json");
        CHECK_THROWS_AS(load_checkpoint(tmp.path / "ck"), FormatError);
    }
}
