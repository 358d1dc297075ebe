#include <doctest.h>

#include <cmath>

#include "synthgap/rng.hpp"
#include "test_util.hpp"

using namespace synthgap;
using test::TempDir;
using test::tiny_arch;
using test::tiny_spec;
using test::tiny_train_cfg;

TEST_CASE("lr schedule endpoints and shape") {
    TrainConfig cfg;
    cfg.epochs = 30;
    cfg.warmup_epochs = 3;
    cfg.base_lr = 0.1;

    CHECK(lr_at(cfg, 0.0) == 0.0);
    CHECK(lr_at(cfg, 3.0) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(lr_at(cfg, 30.0) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(lr_at(cfg, (3.0 + 30.0) / 2) == doctest::Approx(0.05).epsilon(1e-12));
    CHECK(lr_at(cfg, 1.5) == doctest::Approx(0.05).epsilon(1e-12));  // linear warmup

    // continuity at warmup and monotone decay afterwards
    CHECK(lr_at(cfg, 3.0 - 1e-9) == doctest::Approx(lr_at(cfg, 3.0 + 1e-9)).epsilon(1e-6));
    double prev = lr_at(cfg, 3.0);
    for (int i = 1; i <= 100; ++i) {
        double cur = lr_at(cfg, 3.0 + 27.0 * i / 100.0);
        CHECK(cur <= prev + 1e-15);
        prev = cur;
    }
    CHECK_THROWS_AS(lr_at(cfg, -0.1), ValidationError);
    CHECK_THROWS_AS(lr_at(cfg, 30.1), ValidationError);

    TrainConfig no_warmup = cfg;
    no_warmup.warmup_epochs = 0;
    CHECK(no_warmup.epochs > 0);
    CHECK(lr_at(no_warmup, 0.0) == doctest::Approx(0.1).epsilon(1e-15));
}

TEST_CASE("train config validation") {
    TrainConfig cfg;
    cfg.warmup_epochs = 30;
    CHECK_THROWS_AS(validate(cfg), ValidationError);
    cfg = TrainConfig{};
    cfg.momentum = 1.0;
    CHECK_THROWS_AS(validate(cfg), ValidationError);
    cfg = TrainConfig{};
    cfg.base_lr = 0;
    CHECK_THROWS_AS(validate(cfg), ValidationError);
    cfg = TrainConfig{};
    cfg.epochs = 0;
    cfg.warmup_epochs = 0;
    CHECK_NOTHROW(validate(cfg));
}

TEST_CASE("momentum 0 reduces to plain SGD on a quadratic") {
    // L = 0.5*c*p^2, g = c*p, closed form p_t = p0*(1 - lr*c)^t
    const float c = 0.8f, lr = 0.1f, p0 = 2.0f;
    float p = p0, v = 0.0f;
    for (int t = 1; t <= 20; ++t) {
        const float g = c * p;
        sgd_update(&p, &g, &v, 1, lr, 0.0f, 0.0f);
        const float expected = p0 * std::pow(1.0f - lr * c, static_cast<float>(t));
        CHECK(p == doctest::Approx(expected).epsilon(1e-5));
    }
}

TEST_CASE("momentum accumulates the velocity buffer") {
    // two steps with constant gradient g: v1 = g, v2 = m*g + g
    float p = 0.0f, v = 0.0f;
    const float g = 1.0f, lr = 1.0f, m = 0.9f;
    sgd_update(&p, &g, &v, 1, lr, m, 0.0f);
    CHECK(p == doctest::Approx(-1.0));
    sgd_update(&p, &g, &v, 1, lr, m, 0.0f);
    CHECK(v == doctest::Approx(1.9));
    CHECK(p == doctest::Approx(-2.9));
}

TEST_CASE("aggregate_last_k hand cases") {
    TrainLog log;
    const double window[] = {0.5, 0.6, 0.88, 0.87, 0.88, 0.87, 0.88};
    for (int i = 0; i < 7; ++i)
        log.epochs.push_back({i, 0.1, 1.0, window[i], window[i]});

    SummaryStats s = aggregate_last_k(log, 5);
    CHECK(s.top1_mean == doctest::Approx(0.876).epsilon(1e-12));
    CHECK(s.top1_std == doctest::Approx(0.004898979485566356).epsilon(1e-9));
    CHECK(s.k == 5);

    SummaryStats last = aggregate_last_k(log, 1);
    CHECK(last.top1_mean == 0.88);
    CHECK(last.top1_std == 0.0);

    TrainLog constant;
    for (int i = 0; i < 4; ++i) constant.epochs.push_back({i, 0.1, 1.0, 0.7, 0.9});
    SummaryStats cs = aggregate_last_k(constant, 4);
    CHECK(cs.top1_std == 0.0);
    CHECK(cs.top5_std == 0.0);

    CHECK_THROWS_AS(aggregate_last_k(log, 0), ValidationError);
    CHECK_THROWS_AS(aggregate_last_k(log, 8), ValidationError);
}

TEST_CASE("topk_correct matches a brute-force sort oracle") {
    // hand-built rows with known ranks
    Eigen::MatrixXf logits(5, 4);
    logits << 0.9f, 0.1f, 0.3f, 0.5f,
              0.8f, 0.9f, 0.3f, 0.5f,
              0.1f, 0.2f, 0.3f, 0.5f,
              0.2f, 0.3f, 0.3f, 0.5f,
              0.3f, 0.4f, 0.3f, 0.5f;
    // col 0: label 0 is argmax -> top1; col 1: label 0 ranked 2nd -> top2
    // col 2: ties at 0.3 (rows 2,3,4 tie with row 1? no: rows 1..4 hold .3,.3,.3,.3)
    // col 3: all equal -> tie-break by index
    std::vector<int> labels = {0, 0, 3, 4};
    auto counts = topk_correct(logits, labels, {1, 2, 5});
    CHECK(counts[0] == 1);
    CHECK(counts[2] == 4);

    // brute-force oracle on random instances: rank by (logit desc, index asc)
    Rng rng(99);
    for (int trial = 0; trial < 100; ++trial) {
        const int k_cats = 6, n = 8;
        Eigen::MatrixXf l(k_cats, n);
        std::vector<int> lab(n);
        for (int j = 0; j < n; ++j) {
            lab[j] = static_cast<int>(rng.uniform_index(k_cats));
            for (int c = 0; c < k_cats; ++c)
                l(c, j) = static_cast<float>(std::round(rng.uniform() * 4) / 4);  // force ties
        }
        std::vector<int> ks = {1, 3, 6};
        auto got = topk_correct(l, lab, ks);
        for (size_t ki = 0; ki < ks.size(); ++ki) {
            int expected = 0;
            for (int j = 0; j < n; ++j) {
                std::vector<int> order(k_cats);
                for (int c = 0; c < k_cats; ++c) order[c] = c;
                std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
                    if (l(a, j) != l(b, j)) return l(a, j) > l(b, j);
                    return a < b;
                });
                for (int r = 0; r < ks[ki]; ++r)
                    if (order[r] == lab[j]) { ++expected; break; }
            }
            CHECK(got[ki] == expected);
        }
    }
}

TEST_CASE("evaluate: single-sample rank cases via a stacked-deck model") {
    // craft logits through evaluate() by training nothing: instead check the
    // contract through topk_correct above and the metric bounds here
    TempDir tmp("eval_bounds");
    Dataset ds = generate_dataset(tiny_spec(), tmp.path / "d");
    Model model = build_model(tiny_arch(), 3);
    Metrics m = evaluate(model, SampleSet::val_of(ds), {1, 3}, default_channel_stats());
    CHECK(m.topk.size() == 2);
    CHECK(m.topk[0] >= 0.0);
    CHECK(m.topk[0] <= m.topk[1]);
    CHECK(m.topk[1] <= 1.0);
    CHECK(std::isfinite(m.mean_loss));
    CHECK_THROWS_AS(evaluate(model, SampleSet::val_of(ds), {}, default_channel_stats()),
                    ValidationError);
    CHECK_THROWS_AS(evaluate(model, SampleSet::val_of(ds), {4}, default_channel_stats()),
                    ValidationError);
}

TEST_CASE("train with epochs 0 returns an empty log and leaves the model untouched") {
    TempDir tmp("train0");
    Dataset ds = generate_dataset(tiny_spec(), tmp.path / "d");
    Model model = build_model(tiny_arch(), 4);
    ParamSnapshot before = snapshot(model);
    TrainConfig cfg = tiny_train_cfg(0);
    cfg.warmup_epochs = 0;
    TrainLog log = train(model, SampleSet::train_of(ds), SampleSet::val_of(ds), cfg);
    CHECK(log.epochs.empty());
    CHECK(snapshot(model) == before);
}

TEST_CASE("training with everything frozen is a parameter no-op with full logs") {
    TempDir tmp("train_frozen");
    Dataset ds = generate_dataset(tiny_spec(), tmp.path / "d");
    Model model = build_model(tiny_arch(), 4);
    freeze_prefix(model, model.units());
    ParamSnapshot before = snapshot(model);
    TrainLog log = train(model, SampleSet::train_of(ds), SampleSet::val_of(ds), tiny_train_cfg(2));
    CHECK(log.epochs.size() == 2);
    CHECK(snapshot(model) == before);
    // with nothing changing, both epochs evaluate identically
    CHECK(log.epochs[0].top1 == log.epochs[1].top1);
}

TEST_CASE("loss decreases on a linearly separable toy problem") {
    TempDir tmp("train_toy");
    // two categories: dark vs bright constant images with slight noise
    std::vector<Image> train_imgs, val_imgs;
    std::vector<uint16_t> tl, vl;
    Rng rng(12);
    auto make = [&](int cat, std::vector<Image>& out, std::vector<uint16_t>& labels) {
        Image img(16, 16);
        for (auto& px : img.chw) {
            const double base = cat == 0 ? 60.0 : 190.0;
            px = static_cast<uint8_t>(base + rng.uniform(-25.0, 25.0));
        }
        out.push_back(img);
        labels.push_back(static_cast<uint16_t>(cat));
    };
    for (int i = 0; i < 16; ++i) make(0, train_imgs, tl);
    for (int i = 0; i < 16; ++i) make(1, train_imgs, tl);
    for (int i = 0; i < 4; ++i) make(0, val_imgs, vl);
    for (int i = 0; i < 4; ++i) make(1, val_imgs, vl);
    // grouped-by-category layout expected by forge_dataset
    std::sort(tl.begin(), tl.end());
    std::sort(vl.begin(), vl.end());
    Dataset ds = test::forge_dataset(tmp.path / "toy", train_imgs, tl, val_imgs, vl, 2);

    Model model = build_model(tiny_arch(2), 6);
    TrainConfig cfg = tiny_train_cfg(5, 21);
    cfg.batch_size = 8;
    TrainLog log = train(model, SampleSet::train_of(ds), SampleSet::val_of(ds), cfg);
    REQUIRE(log.epochs.size() == 5);
    CHECK(log.epochs.back().train_loss < log.epochs.front().train_loss);
    CHECK(log.epochs.back().top1 >= 0.5);
}

TEST_CASE("training is bit-deterministic under (config, data, seed)") {
    TempDir tmp("train_det");
    Dataset ds = generate_dataset(tiny_spec(), tmp.path / "d");
    TrainConfig cfg = tiny_train_cfg(2, 33);
    cfg.augmentation = AugmentationPipeline::MultiCrop;

    Model a = build_model(tiny_arch(), 8);
    TrainLog la = train(a, SampleSet::train_of(ds), SampleSet::val_of(ds), cfg);
    Model b = build_model(tiny_arch(), 8);
    TrainLog lb = train(b, SampleSet::train_of(ds), SampleSet::val_of(ds), cfg);
    CHECK(la == lb);
    CHECK(snapshot(a) == snapshot(b));

    cfg.seed = 34;
    Model c = build_model(tiny_arch(), 8);
    TrainLog lc = train(c, SampleSet::train_of(ds), SampleSet::val_of(ds), cfg);
    CHECK_FALSE(la == lc);
}

TEST_CASE("per-epoch logs carry the schedule and bounded accuracies") {
    TempDir tmp("train_log");
    Dataset ds = generate_dataset(tiny_spec(), tmp.path / "d");
    Model model = build_model(tiny_arch(), 8);
    TrainConfig cfg = tiny_train_cfg(3, 5);
    TrainLog log = train(model, SampleSet::train_of(ds), SampleSet::val_of(ds), cfg);
    REQUIRE(log.epochs.size() == 3);
    for (int e = 0; e < 3; ++e) {
        CHECK(log.epochs[e].epoch == e);
        CHECK(log.epochs[e].lr == lr_at(cfg, e));
        CHECK(log.epochs[e].top1 >= 0.0);
        CHECK(log.epochs[e].top1 <= log.epochs[e].top5);
        CHECK(log.epochs[e].top5 <= 1.0);
    }
}

TEST_CASE("category mismatch and empty data are rejected") {
    TempDir tmp("train_errs");
    Dataset ds = generate_dataset(tiny_spec(), tmp.path / "d");
    Model model = build_model(tiny_arch(4), 1);  // 4 categories vs dataset's 3
    CHECK_THROWS_AS(train(model, SampleSet::train_of(ds), SampleSet::val_of(ds), tiny_train_cfg()),
                    ValidationError);
}

TEST_CASE("non-finite loss raises a divergence error naming the epoch") {
    TempDir tmp("train_div");
    Dataset ds = generate_dataset(tiny_spec(), tmp.path / "d");
    Model model = build_model(tiny_arch(), 2);
    model.stem.weight(0, 0) = std::numeric_limits<float>::quiet_NaN();
    try {
        train(model, SampleSet::train_of(ds), SampleSet::val_of(ds), tiny_train_cfg(2));
        FAIL("expected DivergenceError");
    } catch (const DivergenceError& e) {
        CHECK(e.epoch() == 0);
    }
}

TEST_CASE("metrics csv round-trip") {
    TempDir tmp("metrics_csv");
    TrainLog log;
    log.epochs.push_back({0, 0.03333333333333333, 2.1987654321, 0.125, 0.5});
    log.epochs.push_back({1, 0.1, 1.0, 0.25, 0.625});
    write_metrics_csv(log, tmp.path / "m.csv");
    TrainLog back = read_metrics_csv(tmp.path / "m.csv");
    CHECK(back == log);
}

// ---------------------------------------------------------------------------
// finite-difference gradient checks

namespace {

ArchitectureConfig grad_arch() {
    ArchitectureConfig cfg;
    cfg.stage_widths = {4, 6};
    cfg.blocks_per_stage = 1;
    cfg.num_categories = 3;
    return cfg;
}

}  // namespace

TEST_CASE("gradient check: linear head only (convex case)") {
    Model model = build_model(grad_arch(), 17);
    freeze_prefix(model, model.units() - 1);
    Eigen::MatrixXf input(3, 2 * 8 * 8);
    Rng rng(3);
    for (int i = 0; i < input.size(); ++i)
        input.data()[i] = static_cast<float>(rng.uniform());
    const double err = gradient_check(model, input, {2, 8, 8}, {0, 2});
    CHECK(err < 1e-6);
}

TEST_CASE("gradient check: full tiny residual model, BN in running-stats mode") {
    Model model = build_model(grad_arch(), 18);
    Eigen::MatrixXf input(3, 2 * 8 * 8);
    Rng rng(4);
    for (int i = 0; i < input.size(); ++i)
        input.data()[i] = static_cast<float>(rng.uniform());
    const double err = gradient_check(model, input, {2, 8, 8}, {1, 2});
    CHECK(err < 1e-4);
}

TEST_CASE("gradient check: train mode differentiates through batch statistics") {
    Model model = build_model(grad_arch(), 19);
    Eigen::MatrixXf input(3, 3 * 8 * 8);
    Rng rng(5);
    for (int i = 0; i < input.size(); ++i)
        input.data()[i] = static_cast<float>(rng.uniform());
    const double err = gradient_check(model, input, {3, 8, 8}, {0, 1, 2}, RunMode::Train);
    CHECK(err < 1e-4);
}

TEST_CASE("gradient check: zero input and zero head hit the norm guard finitely") {
    Model model = build_model(grad_arch(), 20);
    freeze_prefix(model, model.units() - 1);
    model.head.weight.setZero();
    Eigen::MatrixXf input = Eigen::MatrixXf::Zero(3, 1 * 8 * 8);
    const double err = gradient_check(model, input, {1, 8, 8}, {0});
    CHECK(std::isfinite(err));
}

TEST_CASE("gradient check rejects oversized inputs") {
    Model model = build_model(grad_arch(), 21);
    Eigen::MatrixXf input = Eigen::MatrixXf::Zero(3, 5 * 8 * 8);
    CHECK_THROWS_AS(gradient_check(model, input, {5, 8, 8}, {0, 1, 2, 0, 1}), ValidationError);
    Model big = build_model(ArchitectureConfig{}, 1);
    Eigen::MatrixXf in16 = Eigen::MatrixXf::Zero(3, 16 * 16);
    CHECK_THROWS_AS(gradient_check(big, in16, {1, 16, 16}, {0}), ValidationError);
}
