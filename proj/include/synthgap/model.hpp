#pragma once

#include <functional>
#include <string>
#include <vector>

#include "synthgap/io.hpp"
#include "synthgap/nn.hpp"

namespace synthgap {

// Desk-scale analog of the 18-unit ResNet-50 indexing: unit 0 is the stem
// convolution, units 1..stages*blocks are the residual blocks in forward
// order, the last unit is the pooled cosine-classifier head.
struct ArchitectureConfig {
    std::vector<int> stage_widths = {16, 32, 64, 128};
    int blocks_per_stage = 2;
    int num_categories = 10;
    double head_temperature = 0.1;

    int units() const {
        return 1 + static_cast<int>(stage_widths.size()) * blocks_per_stage + 1;
    }
};

void validate(const ArchitectureConfig& cfg);
bool operator==(const ArchitectureConfig& a, const ArchitectureConfig& b);

template <typename S>
struct BlockT {
    Conv<S> conv1;
    BatchNorm<S> bn1;
    Conv<S> conv2;
    BatchNorm<S> bn2;
    bool has_projection = false;
    Conv<S> proj;  // 1x1, matches stride/width changes on the shortcut
    BatchNorm<S> proj_bn;
    int stride = 1;
};

template <typename S>
struct NetT {
    ArchitectureConfig cfg;
    Conv<S> stem;
    BatchNorm<S> stem_bn;
    std::vector<BlockT<S>> blocks;
    CosineHead<S> head;
    std::vector<uint8_t> frozen;      // per transfer unit
    bool bn_eval_update = false;      // Table-2 override: eval uses batch stats
    std::vector<uint64_t> seed_log;   // build seed followed by reinit seeds

    int units() const { return cfg.units(); }
    int frozen_prefix() const {
        int n = 0;
        while (n < units() && frozen[n]) ++n;
        return n;
    }
};

using Model = NetT<float>;

// A tensor slot inside the partition; `running_stat` marks BN running
// mean/var (state, not trainable), `decayed` marks weights subject to weight
// decay (conv and head weights, never BN affine parameters). `grad` is null
// for running stats.
template <typename S>
struct TensorRef {
    int unit;
    std::string name;
    S* data;
    S* grad;
    Eigen::Index rows, cols;
    bool running_stat;
    bool decayed;
    Eigen::Index size() const { return rows * cols; }
};

// Enumerates every parameter and BN running statistic exactly once, in
// forward (topological) order. This single enumeration defines the snapshot,
// checkpoint, and optimizer-state layouts.
template <typename S>
std::vector<TensorRef<S>> tensor_table(NetT<S>& net);

template <typename S>
NetT<S> build_net(const ArchitectureConfig& cfg, uint64_t seed);

Model build_model(const ArchitectureConfig& cfg, uint64_t seed);

// Freezes units 1..n (0 clears all): no gradient application, no BN
// running-stat updates, forward uses stored running statistics.
void freeze_prefix(Model& model, int n);

// Re-draws units n+1..U with the build_model initializer (fresh per-unit
// streams derived from seed) and resets their BN running statistics.
// reinit_suffix(m, 0, s) reproduces build_model(cfg, s) parameters exactly.
void reinit_suffix(Model& model, int n, uint64_t seed);

void set_bn_eval_update(Model& model, bool enabled);

// Flat copy of all parameters and running stats with unit boundaries.
struct ParamSnapshot {
    std::vector<float> data;
    std::vector<size_t> unit_offsets;  // size U+1, prefix offsets into data

    size_t unit_size(int u) const { return unit_offsets[u + 1] - unit_offsets[u]; }
    bool unit_equal(const ParamSnapshot& other, int u) const;
};

ParamSnapshot snapshot(const Model& model);
bool operator==(const ParamSnapshot& a, const ParamSnapshot& b);

// Checkpoint directory: manifest.json (architecture, unit/tensor table with
// byte offsets, frozen flags, seed log) + params.bin (little-endian float32
// in manifest order, running stats included).
void save_checkpoint(const Model& model, const fs::path& dir);
Model load_checkpoint(const fs::path& dir);
// Validates the stored architecture against `expected` before loading.
Model load_checkpoint(const fs::path& dir, const ArchitectureConfig& expected);

// ---------------------------------------------------------------------------
// Whole-net forward/backward

template <typename S>
struct BlockCache {
    MatX<S> conv1_out, relu1_out, conv2_out, proj_out, out;
    BnCache<S> bn1, bn2, bnp;
    TensorShape in_shape, out_shape;
};

template <typename S>
struct NetCache {
    MatX<S> input;
    TensorShape input_shape;
    MatX<S> stem_out, stem_act;
    BnCache<S> stem_bn;
    TensorShape stem_shape;
    std::vector<BlockCache<S>> blocks;
    MatX<S> feats;
    HeadCache<S> head;
};

// Runs the net on a (3, batch*h*w) input. Train mode uses batch statistics
// and updates running stats on non-frozen BN layers; Eval uses running stats
// unless bn_eval_update is set. `allow_stat_updates=false` suppresses the
// running-stat side effect (used by the finite-difference checker).
template <typename S>
MatX<S> net_forward(NetT<S>& net, const MatX<S>& input, TensorShape shape, RunMode mode,
                    NetCache<S>& cache, NnScratch<S>& scratch,
                    bool allow_stat_updates = true);

// Accumulates parameter gradients for non-frozen units. The frozen prefix is
// skipped entirely (no gradients flow below the lowest non-frozen unit).
template <typename S>
void net_backward(NetT<S>& net, NetCache<S>& cache, const MatX<S>& dlogits,
                  NnScratch<S>& scratch);

template <typename S>
void zero_grads(NetT<S>& net);

// float -> double copy for the 64-bit gradient check
NetT<double> to_double(const Model& model);

// ---------------------------------------------------------------------------
// template definitions

template <typename S>
MatX<S> net_forward(NetT<S>& net, const MatX<S>& input, TensorShape shape, RunMode mode,
                    NetCache<S>& cache, NnScratch<S>& scratch, bool allow_stat_updates) {
    if (input.rows() != 3)
        throw ValidationError("net_forward: expected 3 input channels, got " +
                              std::to_string(input.rows()));
    if (input.cols() != shape.pixels())
        throw ValidationError("net_forward: input columns do not match shape");
    const int min_side = 1 << static_cast<int>(net.cfg.stage_widths.size());
    if (shape.height < min_side || shape.width < min_side)
        throw ValidationError("net_forward: spatial size must be >= " + std::to_string(min_side));

    auto bn_flags = [&](int unit) {
        bool frozen = net.frozen[unit] != 0;
        bool batch_mode = !frozen && (mode == RunMode::Train || net.bn_eval_update);
        bool update = batch_mode && allow_stat_updates;
        return std::pair<bool, bool>(batch_mode, update);
    };

    cache.input = input;
    cache.input_shape = shape;
    auto [stem_bm, stem_up] = bn_flags(0);
    conv_forward(net.stem, input, shape, cache.stem_out, cache.stem_shape, scratch);
    bn_forward(net.stem_bn, cache.stem_out, stem_bm, stem_up, cache.stem_bn, cache.stem_act);
    relu_inplace(cache.stem_act);

    cache.blocks.resize(net.blocks.size());
    TensorShape cur_shape = cache.stem_shape;
    const MatX<S>* cur = &cache.stem_act;
    for (size_t i = 0; i < net.blocks.size(); ++i) {
        BlockT<S>& blk = net.blocks[i];
        BlockCache<S>& bc = cache.blocks[i];
        auto [bm, up] = bn_flags(1 + static_cast<int>(i));
        bc.in_shape = cur_shape;
        conv_forward(blk.conv1, *cur, cur_shape, bc.conv1_out, bc.out_shape, scratch);
        bn_forward(blk.bn1, bc.conv1_out, bm, up, bc.bn1, bc.relu1_out);
        relu_inplace(bc.relu1_out);
        TensorShape s2;
        conv_forward(blk.conv2, bc.relu1_out, bc.out_shape, bc.conv2_out, s2, scratch);
        bn_forward(blk.bn2, bc.conv2_out, bm, up, bc.bn2, bc.out);
        if (blk.has_projection) {
            // proj_out caches the pre-BN shortcut values for the backward pass
            TensorShape sp;
            conv_forward(blk.proj, *cur, cur_shape, bc.proj_out, sp, scratch);
            MatX<S> proj_bn_out;
            bn_forward(blk.proj_bn, bc.proj_out, bm, up, bc.bnp, proj_bn_out);
            bc.out += proj_bn_out;
        } else {
            bc.out += *cur;
        }
        relu_inplace(bc.out);
        cur = &bc.out;
        cur_shape = bc.out_shape;
    }

    gap_forward(*cur, cur_shape, cache.feats);
    MatX<S> logits;
    head_forward(net.head, cache.feats, cache.head, logits);
    return logits;
}

template <typename S>
void net_backward(NetT<S>& net, NetCache<S>& cache, const MatX<S>& dlogits,
                  NnScratch<S>& scratch) {
    const int num_units = net.units();
    int lowest_unfrozen = 0;
    while (lowest_unfrozen < num_units && net.frozen[lowest_unfrozen]) ++lowest_unfrozen;
    if (lowest_unfrozen == num_units) return;  // everything frozen: no-op

    const int head_unit = num_units - 1;
    MatX<S> dfeats;
    head_backward(net.head, cache.head, dlogits, dfeats, !net.frozen[head_unit]);
    if (lowest_unfrozen == head_unit) return;

    const TensorShape last_shape =
        cache.blocks.empty() ? cache.stem_shape : cache.blocks.back().out_shape;
    MatX<S>& dcur = scratch.grad_a;
    gap_backward(dfeats, last_shape, dcur);

    for (int i = static_cast<int>(net.blocks.size()) - 1; i >= 0; --i) {
        const int unit = 1 + i;
        if (lowest_unfrozen > unit) break;  // deeper units are all frozen
        BlockT<S>& blk = net.blocks[i];
        BlockCache<S>& bc = cache.blocks[i];
        const bool need_dx = lowest_unfrozen < unit;
        const MatX<S>& block_in = i == 0 ? cache.stem_act : cache.blocks[i - 1].out;

        relu_backward(bc.out, dcur);  // dcur now holds d(sum)
        MatX<S> dc2;
        bn_backward(blk.bn2, bc.bn2, bc.conv2_out, dcur, dc2);
        MatX<S> dr1;
        conv_backward(blk.conv2, bc.relu1_out, bc.out_shape, bc.out_shape, dc2, &dr1, scratch);
        relu_backward(bc.relu1_out, dr1);
        MatX<S> dc1;
        bn_backward(blk.bn1, bc.bn1, bc.conv1_out, dr1, dc1);
        MatX<S>& din = scratch.grad_b;
        conv_backward(blk.conv1, block_in, bc.in_shape, bc.out_shape, dc1,
                      need_dx ? &din : nullptr, scratch);
        if (blk.has_projection) {
            MatX<S> dproj_raw;
            bn_backward(blk.proj_bn, bc.bnp, bc.proj_out, dcur, dproj_raw);
            MatX<S> din_proj;
            conv_backward(blk.proj, block_in, bc.in_shape, bc.out_shape, dproj_raw,
                          need_dx ? &din_proj : nullptr, scratch);
            if (need_dx) din += din_proj;
        } else if (need_dx) {
            din += dcur;
        }
        if (!need_dx) return;
        std::swap(scratch.grad_a, scratch.grad_b);
    }

    if (!net.frozen[0]) {
        relu_backward(cache.stem_act, dcur);
        MatX<S> dc0;
        bn_backward(net.stem_bn, cache.stem_bn, cache.stem_out, dcur, dc0);
        conv_backward(net.stem, cache.input, cache.input_shape, cache.stem_shape, dc0,
                      static_cast<MatX<S>*>(nullptr), scratch);
    }
}

template <typename S>
void zero_grads(NetT<S>& net) {
    for (auto& t : tensor_table(net)) {
        if (t.grad) std::fill(t.grad, t.grad + t.size(), S(0));
    }
}

}  // namespace synthgap
