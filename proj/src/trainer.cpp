#include "synthgap/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "synthgap/rng.hpp"

namespace synthgap {

namespace {
constexpr uint64_t kOrderSalt = 0x6f72646572ULL;
constexpr uint64_t kAugSalt = 0x617567ULL;
constexpr int kEvalBatch = 256;
}  // namespace

std::string to_string(NormalizationMode m) {
    return m == NormalizationMode::Default ? "default" : "exact";
}

NormalizationMode normalization_from_string(const std::string& s) {
    if (s == "default") return NormalizationMode::Default;
    if (s == "exact") return NormalizationMode::Exact;
    throw ValidationError("unknown normalization mode: '" + s + "'");
}

void validate(const TrainConfig& cfg) {
    if (cfg.epochs < 0) throw ValidationError("TrainConfig: epochs must be >= 0");
    if (cfg.batch_size < 1) throw ValidationError("TrainConfig: batch_size must be >= 1");
    if (!(cfg.base_lr > 0)) throw ValidationError("TrainConfig: base_lr must be > 0");
    if (cfg.warmup_epochs < 0 ||
        (cfg.epochs > 0 && !(cfg.warmup_epochs < static_cast<double>(cfg.epochs))))
        throw ValidationError("TrainConfig: need 0 <= warmup_epochs < epochs");
    if (!(cfg.momentum >= 0 && cfg.momentum < 1))
        throw ValidationError("TrainConfig: momentum must be in [0,1)");
    if (cfg.weight_decay < 0) throw ValidationError("TrainConfig: weight_decay must be >= 0");
}

bool operator==(const EpochRecord& a, const EpochRecord& b) {
    return a.epoch == b.epoch && a.lr == b.lr && a.train_loss == b.train_loss &&
           a.top1 == b.top1 && a.top5 == b.top5;
}

bool operator==(const TrainLog& a, const TrainLog& b) { return a.epochs == b.epochs; }

double lr_at(const TrainConfig& cfg, double t) {
    if (t < 0 || t > cfg.epochs)
        throw ValidationError("lr_at: t must be in [0, epochs]");
    if (cfg.epochs == 0) return cfg.base_lr;
    if (cfg.warmup_epochs > 0 && t <= cfg.warmup_epochs)
        return cfg.base_lr * t / cfg.warmup_epochs;
    const double span = cfg.epochs - cfg.warmup_epochs;
    const double x = (t - cfg.warmup_epochs) / span;
    return cfg.base_lr * 0.5 * (1.0 + std::cos(M_PI * x));
}

void sgd_update(float* param, const float* grad, float* velocity, Eigen::Index n, float lr,
                float momentum, float weight_decay) {
    for (Eigen::Index i = 0; i < n; ++i) {
        velocity[i] = momentum * velocity[i] + grad[i];
        param[i] -= lr * (velocity[i] + weight_decay * param[i]);
    }
}

template <typename S>
double softmax_xent(const MatX<S>& logits, const std::vector<int>& labels, MatX<S>* dlogits,
                    double grad_scale) {
    const Eigen::Index k = logits.rows(), n = logits.cols();
    if (dlogits) dlogits->resize(k, n);
    double loss_sum = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
        const S m = logits.col(j).maxCoeff();
        VecX<S> z = (logits.col(j).array() - m).exp().matrix();
        const S zsum = z.sum();
        const int label = labels[static_cast<size_t>(j)];
        loss_sum += -static_cast<double>(logits(label, j) - m - std::log(static_cast<double>(zsum)));
        if (dlogits) {
            dlogits->col(j) = z * (S(1) / zsum) * static_cast<S>(grad_scale);
            (*dlogits)(label, j) -= static_cast<S>(grad_scale);
        }
    }
    return loss_sum;
}

template double softmax_xent<float>(const MatX<float>&, const std::vector<int>&, MatX<float>*,
                                    double);
template double softmax_xent<double>(const MatX<double>&, const std::vector<int>&, MatX<double>*,
                                     double);

std::vector<int> topk_correct(const Eigen::MatrixXf& logits, const std::vector<int>& labels,
                              const std::vector<int>& ks) {
    std::vector<int> correct(ks.size(), 0);
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
        const int label = labels[static_cast<size_t>(j)];
        const float lv = logits(label, j);
        // rank = number of categories strictly better, ties won by lower index
        int rank = 0;
        for (Eigen::Index c = 0; c < logits.rows(); ++c) {
            if (logits(c, j) > lv || (logits(c, j) == lv && c < label)) ++rank;
        }
        for (size_t i = 0; i < ks.size(); ++i)
            if (rank < ks[i]) ++correct[i];
    }
    return correct;
}

namespace {

struct SgdState {
    std::vector<Eigen::VectorXf> velocity;

    explicit SgdState(Model& model) {
        for (const auto& t : tensor_table(model))
            velocity.push_back(Eigen::VectorXf::Zero(t.size()));
    }

    void step(Model& model, float lr, float momentum, float weight_decay) {
        auto table = tensor_table(model);
        for (size_t i = 0; i < table.size(); ++i) {
            auto& t = table[i];
            if (t.running_stat || model.frozen[t.unit]) continue;
            sgd_update(t.data, t.grad, velocity[i].data(), t.size(), lr, momentum,
                       t.decayed ? weight_decay : 0.0f);
        }
    }
};

// A batch of same-sized views packed into one (3, n*size*size) matrix.
struct ViewGroup {
    int size = 0;
    std::vector<Eigen::MatrixXf> views;
    std::vector<int> labels;
};

Eigen::MatrixXf pack_group(const ViewGroup& g) {
    const Eigen::Index pixels = static_cast<Eigen::Index>(g.size) * g.size;
    Eigen::MatrixXf input(3, pixels * static_cast<Eigen::Index>(g.views.size()));
    for (size_t i = 0; i < g.views.size(); ++i)
        input.middleCols(static_cast<Eigen::Index>(i) * pixels, pixels) = g.views[i];
    return input;
}

}  // namespace

Metrics evaluate(Model& model, const SampleSet& data, const std::vector<int>& ks,
                 const ChannelStats& stats) {
    if (data.size() == 0) throw ValidationError("evaluate: empty dataset");
    if (ks.empty()) throw ValidationError("evaluate: ks must be non-empty");
    for (int k : ks)
        if (k < 1 || k > model.cfg.num_categories)
            throw ValidationError("evaluate: k out of range");
    if (data.num_categories() != model.cfg.num_categories)
        throw ValidationError("evaluate: dataset category count does not match model");

    const int size = data.image_size();
    const Eigen::Index pixels = static_cast<Eigen::Index>(size) * size;
    std::vector<uint8_t> buf(static_cast<size_t>(3) * pixels);
    NetCache<float> cache;
    NnScratch<float> scratch;
    std::vector<int> correct(ks.size(), 0);
    double loss_sum = 0;

    const size_t n = data.size();
    for (size_t start = 0; start < n; start += kEvalBatch) {
        const int bsize = static_cast<int>(std::min<size_t>(kEvalBatch, n - start));
        Eigen::MatrixXf input(3, pixels * bsize);
        std::vector<int> labels(bsize);
        for (int i = 0; i < bsize; ++i) {
            data.fetch(start + i, buf.data());
            auto views = apply_augmentation(buf.data(), size, AugmentationPipeline::None, 0);
            normalize_inplace(views[0].data, stats);
            input.middleCols(static_cast<Eigen::Index>(i) * pixels, pixels) = views[0].data;
            labels[i] = data.label(start + i);
        }
        TensorShape shape{bsize, size, size};
        Eigen::MatrixXf logits = net_forward(model, input, shape, RunMode::Eval, cache, scratch);
        loss_sum += softmax_xent<float>(logits, labels, nullptr, 0.0);
        auto batch_correct = topk_correct(logits, labels, ks);
        for (size_t i = 0; i < ks.size(); ++i) correct[i] += batch_correct[i];
    }
    Metrics m;
    m.mean_loss = loss_sum / static_cast<double>(n);
    for (size_t i = 0; i < ks.size(); ++i)
        m.topk.push_back(static_cast<double>(correct[i]) / static_cast<double>(n));
    return m;
}

TrainLog train(Model& model, const SampleSet& train_data, const SampleSet& val_data,
               const TrainConfig& cfg) {
    validate(cfg);
    if (train_data.size() == 0 || val_data.size() == 0)
        throw ValidationError("train: empty dataset");
    if (train_data.num_categories() != model.cfg.num_categories)
        throw ValidationError("train: dataset category count does not match model");

    TrainLog log;
    if (cfg.epochs == 0) return log;

    const ChannelStats stats = cfg.normalization == NormalizationMode::Exact
                                   ? compute_channel_stats(train_data)
                                   : default_channel_stats();
    set_bn_eval_update(model, cfg.bn_eval_update);

    const int size = train_data.image_size();
    const size_t n = train_data.size();
    const int nbatch = static_cast<int>((n + cfg.batch_size - 1) / cfg.batch_size);
    const std::vector<int> eval_ks = {1, std::min(5, model.cfg.num_categories)};

    SgdState opt(model);
    NetCache<float> cache;
    NnScratch<float> scratch;
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::vector<uint8_t> buf(static_cast<size_t>(3) * size * size);

    for (int e = 0; e < cfg.epochs; ++e) {
        Rng order_rng(hash_combine(cfg.seed, kOrderSalt, static_cast<uint64_t>(e)));
        order_rng.shuffle(order.begin(), order.end());

        double loss_sum = 0;
        size_t view_count = 0;
        for (int b = 0; b < nbatch; ++b) {
            const size_t lo = static_cast<size_t>(b) * cfg.batch_size;
            const size_t hi = std::min(n, lo + cfg.batch_size);

            // larger views first: the global-crop group trains before locals
            std::map<int, ViewGroup, std::greater<int>> groups;
            for (size_t pos = lo; pos < hi; ++pos) {
                train_data.fetch(order[pos], buf.data());
                const int label = train_data.label(order[pos]);
                auto views = apply_augmentation(
                    buf.data(), size, cfg.augmentation,
                    hash_combine(cfg.seed, kAugSalt, static_cast<uint64_t>(e), pos));
                for (auto& v : views) {
                    normalize_inplace(v.data, stats);
                    auto& g = groups[v.size];
                    g.size = v.size;
                    g.views.push_back(std::move(v.data));
                    g.labels.push_back(label);
                }
            }
            size_t total_views = 0;
            for (const auto& [sz, g] : groups) total_views += g.views.size();

            zero_grads(model);
            double batch_loss = 0;
            for (const auto& [sz, g] : groups) {
                Eigen::MatrixXf input = pack_group(g);
                TensorShape shape{static_cast<int>(g.views.size()), sz, sz};
                Eigen::MatrixXf logits =
                    net_forward(model, input, shape, RunMode::Train, cache, scratch);
                Eigen::MatrixXf dlogits;
                batch_loss += softmax_xent<float>(logits, g.labels, &dlogits,
                                                  1.0 / static_cast<double>(total_views));
                net_backward(model, cache, dlogits, scratch);
            }
            if (!std::isfinite(batch_loss))
                throw DivergenceError("train: non-finite loss at epoch " + std::to_string(e), e);

            const double lr = lr_at(cfg, e + static_cast<double>(b) / nbatch);
            opt.step(model, static_cast<float>(lr), static_cast<float>(cfg.momentum),
                     static_cast<float>(cfg.weight_decay));
            loss_sum += batch_loss;
            view_count += total_views;
        }

        Metrics m = evaluate(model, val_data, eval_ks, stats);
        log.epochs.push_back(EpochRecord{e, lr_at(cfg, e), loss_sum / static_cast<double>(view_count),
                                         m.topk[0], m.topk[1]});
    }
    return log;
}

SummaryStats aggregate_last_k(const TrainLog& log, int k) {
    const int n = static_cast<int>(log.epochs.size());
    if (k < 1 || k > n) throw ValidationError("aggregate_last_k: k out of range");
    auto stats_of = [&](auto getter) {
        double mean = 0;
        for (int i = n - k; i < n; ++i) mean += getter(log.epochs[i]);
        mean /= k;
        double var = 0;
        for (int i = n - k; i < n; ++i) {
            const double d = getter(log.epochs[i]) - mean;
            var += d * d;
        }
        return std::pair<double, double>(mean, std::sqrt(var / k));
    };
    SummaryStats s;
    std::tie(s.top1_mean, s.top1_std) = stats_of([](const EpochRecord& r) { return r.top1; });
    std::tie(s.top5_mean, s.top5_std) = stats_of([](const EpochRecord& r) { return r.top5; });
    s.k = k;
    return s;
}

double gradient_check(const Model& tiny_model, const Eigen::MatrixXf& input, TensorShape shape,
                      const std::vector<int>& labels, RunMode mode) {
    if (shape.batch < 1 || shape.batch > 4)
        throw ValidationError("gradient_check: batch must be in [1, 4]");
    if (labels.size() != static_cast<size_t>(shape.batch))
        throw ValidationError("gradient_check: labels must match the batch");
    NetT<double> net = to_double(tiny_model);
    auto table = tensor_table(net);
    size_t trainable = 0;
    for (const auto& t : table)
        if (!t.running_stat && !net.frozen[t.unit]) trainable += static_cast<size_t>(t.size());
    if (trainable > 5000)
        throw ValidationError("gradient_check: model has " + std::to_string(trainable) +
                              " trainable parameters, limit is 5000");

    MatX<double> x = input.cast<double>();
    NetCache<double> cache;
    NnScratch<double> scratch;
    const double inv_n = 1.0 / static_cast<double>(shape.batch);

    auto loss_at = [&]() {
        MatX<double> logits =
            net_forward(net, x, shape, mode, cache, scratch, /*allow_stat_updates=*/false);
        return softmax_xent<double>(logits, labels, nullptr, 0.0) * inv_n;
    };

    zero_grads(net);
    {
        MatX<double> logits =
            net_forward(net, x, shape, mode, cache, scratch, /*allow_stat_updates=*/false);
        MatX<double> dlogits;
        softmax_xent<double>(logits, labels, &dlogits, inv_n);
        net_backward(net, cache, dlogits, scratch);
    }

    const double h = 1e-5;
    double max_rel = 0;
    for (const auto& t : table) {
        if (t.running_stat || net.frozen[t.unit]) continue;
        const double* g = t.grad;
        for (Eigen::Index i = 0; i < t.size(); ++i) {
            const double saved = t.data[i];
            t.data[i] = saved + h;
            const double lp = loss_at();
            t.data[i] = saved - h;
            const double lm = loss_at();
            t.data[i] = saved;
            const double fd = (lp - lm) / (2 * h);
            const double ga = g[i];
            if (!std::isfinite(fd) || !std::isfinite(ga))
                throw DivergenceError("gradient_check: non-finite gradient at " + t.name, 0);
            const double denom = std::max({std::abs(ga), std::abs(fd), 1e-8});
            max_rel = std::max(max_rel, std::abs(ga - fd) / denom);
        }
    }
    return max_rel;
}

void write_metrics_csv(const TrainLog& log, const fs::path& path) {
    std::string out = "epoch,lr,train_loss,val_top1,val_top5\n";
    for (const auto& r : log.epochs) {
        out += std::to_string(r.epoch) + "," + format_double(r.lr) + "," +
               format_double(r.train_loss) + "," + format_double(r.top1) + "," +
               format_double(r.top5) + "\n";
    }
    write_text_file(path, out);
}

TrainLog read_metrics_csv(const fs::path& path) {
    std::istringstream in(read_text_file(path));
    std::string line;
    if (!std::getline(in, line) || line != "epoch,lr,train_loss,val_top1,val_top5")
        throw FormatError(path.string() + ": bad metrics header");
    TrainLog log;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        if (f.size() != 5) throw FormatError(path.string() + ": bad metrics row");
        EpochRecord r;
        r.epoch = static_cast<int>(parse_double(f[0]));
        r.lr = parse_double(f[1]);
        r.train_loss = parse_double(f[2]);
        r.top1 = parse_double(f[3]);
        r.top5 = parse_double(f[4]);
        log.epochs.push_back(r);
    }
    return log;
}

}  // namespace synthgap
