#pragma once

#include <cmath>
#include <cstdint>

#include <Eigen/Core>

#include "synthgap/errors.hpp"

namespace synthgap {

template <typename S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;

// Activations live in (channels, batch*height*width) matrices; column
// p = (b*height + y)*width + x holds pixel (x,y) of sample b. This keeps
// conv GEMMs column-major friendly and batch-norm row-wise.
struct TensorShape {
    int batch = 0;
    int height = 0;
    int width = 0;
    Eigen::Index pixels() const {
        return static_cast<Eigen::Index>(batch) * height * width;
    }
};

enum class RunMode { Train, Eval };

inline constexpr double kBnEps = 1e-5;
inline constexpr double kBnMomentum = 0.1;
inline constexpr double kNormGuard = 1e-12;  // cosine-head norm floor

template <typename S>
struct Conv {
    int in_c = 0, out_c = 0, ksize = 3, stride = 1, pad = 1;
    MatX<S> weight;  // (out_c, ksize*ksize*in_c), col = tap*in_c + channel
    MatX<S> grad;

    int fan_in() const { return ksize * ksize * in_c; }
    static TensorShape out_shape(const Conv& c, TensorShape in) {
        auto dim = [&](int n) { return (n + 2 * c.pad - c.ksize) / c.stride + 1; };
        return {in.batch, dim(in.height), dim(in.width)};
    }
};

template <typename S>
struct BatchNorm {
    VecX<S> gamma, beta, running_mean, running_var;
    VecX<S> grad_gamma, grad_beta;
};

template <typename S>
struct CosineHead {
    MatX<S> weight;  // (num_categories, feature_dim)
    MatX<S> grad;
    S temperature = S(0.1);
};

template <typename S>
struct BnCache {
    VecX<S> mean, inv_std;
    bool batch_mode = false;
};

// Shared conv scratch, reused across layers and steps.
template <typename S>
struct NnScratch {
    MatX<S> cols, dcols;
    MatX<S> grad_a, grad_b;  // ping-pong activation-gradient buffers
};

// ---------------------------------------------------------------------------
// im2col / col2im

template <typename S>
void im2col(const MatX<S>& x, TensorShape in, const Conv<S>& conv, TensorShape out,
            MatX<S>& cols) {
    const int k = conv.ksize, stride = conv.stride, pad = conv.pad;
    const int ic = conv.in_c;
    cols.resize(static_cast<Eigen::Index>(k) * k * ic, out.pixels());
    const int ow = out.width, oh = out.height;
#pragma omp parallel for schedule(static)
    for (int b = 0; b < out.batch; ++b) {
        const Eigen::Index in_base = static_cast<Eigen::Index>(b) * in.height * in.width;
        const Eigen::Index out_base = static_cast<Eigen::Index>(b) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                const Eigen::Index p = out_base + static_cast<Eigen::Index>(oy) * ow + ox;
                S* dst = cols.data() + p * cols.rows();
                for (int ky = 0; ky < k; ++ky) {
                    const int iy = oy * stride - pad + ky;
                    for (int kx = 0; kx < k; ++kx) {
                        const int ix = ox * stride - pad + kx;
                        S* seg = dst + (ky * k + kx) * ic;
                        if (iy >= 0 && iy < in.height && ix >= 0 && ix < in.width) {
                            const S* src =
                                x.data() + (in_base + static_cast<Eigen::Index>(iy) * in.width + ix) * ic;
                            for (int c = 0; c < ic; ++c) seg[c] = src[c];
                        } else {
                            for (int c = 0; c < ic; ++c) seg[c] = S(0);
                        }
                    }
                }
            }
        }
    }
}

template <typename S>
void col2im(const MatX<S>& dcols, TensorShape in, const Conv<S>& conv, TensorShape out,
            MatX<S>& dx) {
    const int k = conv.ksize, stride = conv.stride, pad = conv.pad;
    const int ic = conv.in_c;
    dx.resize(ic, in.pixels());
    dx.setZero();
    const int ow = out.width, oh = out.height;
#pragma omp parallel for schedule(static)
    for (int b = 0; b < out.batch; ++b) {
        const Eigen::Index in_base = static_cast<Eigen::Index>(b) * in.height * in.width;
        const Eigen::Index out_base = static_cast<Eigen::Index>(b) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                const Eigen::Index p = out_base + static_cast<Eigen::Index>(oy) * ow + ox;
                const S* src = dcols.data() + p * dcols.rows();
                for (int ky = 0; ky < k; ++ky) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= in.height) continue;
                    for (int kx = 0; kx < k; ++kx) {
                        const int ix = ox * stride - pad + kx;
                        if (ix < 0 || ix >= in.width) continue;
                        S* dst =
                            dx.data() + (in_base + static_cast<Eigen::Index>(iy) * in.width + ix) * ic;
                        const S* seg = src + (ky * k + kx) * ic;
                        for (int c = 0; c < ic; ++c) dst[c] += seg[c];
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Layer forward/backward

template <typename S>
void conv_forward(const Conv<S>& conv, const MatX<S>& x, TensorShape in, MatX<S>& y,
                  TensorShape& out, NnScratch<S>& scratch) {
    out = Conv<S>::out_shape(conv, in);
    im2col(x, in, conv, out, scratch.cols);
    y.resize(conv.out_c, out.pixels());
    y.noalias() = conv.weight * scratch.cols;
}

// Accumulates dW; optionally produces dx.
template <typename S>
void conv_backward(Conv<S>& conv, const MatX<S>& x, TensorShape in, TensorShape out,
                   const MatX<S>& dy, MatX<S>* dx, NnScratch<S>& scratch,
                   bool param_grads = true) {
    if (param_grads) {
        im2col(x, in, conv, out, scratch.cols);
        conv.grad.noalias() += dy * scratch.cols.transpose();
    }
    if (dx) {
        scratch.dcols.resize(conv.weight.cols(), out.pixels());
        scratch.dcols.noalias() = conv.weight.transpose() * dy;
        col2im(scratch.dcols, in, conv, out, *dx);
    }
}

template <typename S>
void bn_forward(BatchNorm<S>& bn, const MatX<S>& x, bool batch_mode, bool update_running,
                BnCache<S>& cache, MatX<S>& y) {
    cache.batch_mode = batch_mode;
    if (batch_mode) {
        cache.mean = x.rowwise().mean();
        VecX<S> var = (x.colwise() - cache.mean).array().square().rowwise().mean().matrix();
        cache.inv_std = (var.array() + S(kBnEps)).rsqrt().matrix();
        if (update_running) {
            bn.running_mean = (S(1) - S(kBnMomentum)) * bn.running_mean + S(kBnMomentum) * cache.mean;
            bn.running_var = (S(1) - S(kBnMomentum)) * bn.running_var + S(kBnMomentum) * var;
        }
    } else {
        cache.mean = bn.running_mean;
        cache.inv_std = (bn.running_var.array() + S(kBnEps)).rsqrt().matrix();
    }
    VecX<S> scale = bn.gamma.cwiseProduct(cache.inv_std);
    VecX<S> shift = bn.beta - cache.mean.cwiseProduct(scale);
    y = ((x.array().colwise() * scale.array()).colwise() + shift.array()).matrix();
}

template <typename S>
void bn_backward(BatchNorm<S>& bn, const BnCache<S>& cache, const MatX<S>& x,
                 const MatX<S>& dy, MatX<S>& dx) {
    const auto p = static_cast<S>(x.cols());
    MatX<S> xhat =
        ((x.colwise() - cache.mean).array().colwise() * cache.inv_std.array()).matrix();
    VecX<S> sum_dy = dy.rowwise().sum();
    VecX<S> sum_dy_xhat = (dy.array() * xhat.array()).rowwise().sum().matrix();
    bn.grad_gamma += sum_dy_xhat;
    bn.grad_beta += sum_dy;
    VecX<S> scale = bn.gamma.cwiseProduct(cache.inv_std);
    if (cache.batch_mode) {
        dx = (((dy.colwise() - sum_dy / p).array() -
               xhat.array().colwise() * (sum_dy_xhat / p).array())
                  .colwise() *
              scale.array())
                 .matrix();
    } else {
        dx = (dy.array().colwise() * scale.array()).matrix();
    }
}

template <typename S>
void relu_inplace(MatX<S>& x) {
    x = x.cwiseMax(S(0));
}

// mask taken from the stored relu output: out > 0
template <typename S>
void relu_backward(const MatX<S>& out, MatX<S>& dy) {
    dy = (out.array() > S(0)).select(dy, MatX<S>::Zero(dy.rows(), dy.cols()));
}

template <typename S>
void gap_forward(const MatX<S>& x, TensorShape shape, MatX<S>& feats) {
    const Eigen::Index hw = static_cast<Eigen::Index>(shape.height) * shape.width;
    feats.resize(x.rows(), shape.batch);
    for (int b = 0; b < shape.batch; ++b)
        feats.col(b) = x.middleCols(b * hw, hw).rowwise().mean();
}

template <typename S>
void gap_backward(const MatX<S>& dfeats, TensorShape shape, MatX<S>& dx) {
    const Eigen::Index hw = static_cast<Eigen::Index>(shape.height) * shape.width;
    dx.resize(dfeats.rows(), shape.batch * hw);
    for (int b = 0; b < shape.batch; ++b)
        dx.middleCols(b * hw, hw) = (dfeats.col(b) / static_cast<S>(hw)).replicate(1, hw);
}

template <typename S>
struct HeadCache {
    MatX<S> feats_n, weight_n;  // L2-normalized features (cols) and rows
    VecX<S> feat_norms, weight_norms;  // raw norms, pre-guard
};

// logit_k = (f/||f|| . w_k/||w_k||) / tau, with the norm floor kNormGuard.
template <typename S>
void head_forward(const CosineHead<S>& head, const MatX<S>& feats, HeadCache<S>& cache,
                  MatX<S>& logits) {
    cache.feat_norms = feats.colwise().norm().transpose();
    cache.weight_norms = head.weight.rowwise().norm();
    cache.feats_n = (feats.array().rowwise() /
                     cache.feat_norms.transpose().array().max(S(kNormGuard)))
                        .matrix();
    cache.weight_n =
        (head.weight.array().colwise() / cache.weight_norms.array().max(S(kNormGuard))).matrix();
    logits.noalias() = cache.weight_n * cache.feats_n;
    logits /= head.temperature;
}

template <typename S>
void head_backward(CosineHead<S>& head, const HeadCache<S>& cache, const MatX<S>& dlogits,
                   MatX<S>& dfeats, bool param_grads) {
    MatX<S> g = dlogits / head.temperature;
    MatX<S> dfn(cache.feats_n.rows(), cache.feats_n.cols());
    dfn.noalias() = cache.weight_n.transpose() * g;
    dfeats.resize(dfn.rows(), dfn.cols());
    for (Eigen::Index b = 0; b < dfn.cols(); ++b) {
        const S n = cache.feat_norms(b);
        if (n > S(kNormGuard)) {
            const S dot = cache.feats_n.col(b).dot(dfn.col(b));
            dfeats.col(b) = (dfn.col(b) - cache.feats_n.col(b) * dot) / n;
        } else {
            dfeats.col(b) = dfn.col(b) / S(kNormGuard);
        }
    }
    if (!param_grads) return;
    MatX<S> dwn(head.weight.rows(), head.weight.cols());
    dwn.noalias() = g * cache.feats_n.transpose();
    for (Eigen::Index k = 0; k < dwn.rows(); ++k) {
        const S n = cache.weight_norms(k);
        if (n > S(kNormGuard)) {
            const S dot = cache.weight_n.row(k).dot(dwn.row(k));
            head.grad.row(k) += (dwn.row(k) - cache.weight_n.row(k) * dot) / n;
        } else {
            head.grad.row(k) += dwn.row(k) / S(kNormGuard);
        }
    }
}

// Standalone cosine-head logits (the spec-level operation).
template <typename S>
MatX<S> cosine_head_logits(const MatX<S>& features, const MatX<S>& head_weights, S tau) {
    if (!(tau > S(0))) throw ValidationError("cosine_head: temperature must be > 0");
    CosineHead<S> head;
    head.weight = head_weights;
    head.temperature = tau;
    HeadCache<S> cache;
    MatX<S> logits;
    head_forward(head, features, cache, logits);
    return logits;
}

}  // namespace synthgap
