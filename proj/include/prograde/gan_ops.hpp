#pragma once

#include "prograde/tape.hpp"

// The four mechanism layers (pixelwise feature normalization, minibatch
// standard deviation, runtime weight scaling, fade-in blend) plus the
// normalization layers the fixed baseline configuration needs. All are
// composites of tape primitives, so first- and second-order gradients come
// from the tape itself.

namespace prograde {

struct PixelnormConfig {
    double epsilon = 1e-8;
};

struct FadeState {
    double alpha = 1.0;
};

/// Normalizes the feature vector of each pixel to unit mean square:
/// b = a / sqrt(mean_j (a_j)^2 + eps).
template <typename T>
Var pixelnorm(Tape<T>& tp, Var x, const PixelnormConfig& cfg = {}) {
    const Shape& s = tp.shape(x);
    check(s.rank == 4 && s[1] >= 1, "pixelnorm: expected (B,C,H,W), got " + s.str());
    Var ms = tp.scale(tp.sum_axes(tp.square(x), 0b0010u), T(1) / static_cast<T>(s[1]));
    Var denom = tp.sqrt(tp.add_scalar(ms, static_cast<T>(cfg.epsilon)));
    return tp.div(x, tp.broadcast_to(denom, s));
}

/// Appends one constant feature map holding the batch-averaged per-feature,
/// per-location population standard deviation. `grad_guard` only bounds the
/// sqrt slope at zero variance; the forward value is the exact stddev, so a
/// constant batch yields an exactly zero map.
template <typename T>
Var minibatch_stddev(Tape<T>& tp, Var x, T grad_guard = T(1e-8)) {
    const Shape& s = tp.shape(x);
    check(s.rank == 4 && s[0] >= 1, "minibatch_stddev: expected (B,C,H,W), got " + s.str());
    const T inv_b = T(1) / static_cast<T>(s[0]);
    Var mu = tp.scale(tp.sum_axes(x, 0b0001u), inv_b);
    Var centered = tp.sub(x, tp.broadcast_to(mu, s));
    Var variance = tp.scale(tp.sum_axes(tp.square(centered), 0b0001u), inv_b);
    Var sd = tp.sqrt(variance, grad_guard);
    Var pooled = tp.mean_all(sd);
    Var map = tp.broadcast_to(pooled, Shape{s[0], 1, s[2], s[3]});
    return tp.concat_channels(x, map);
}

/// Linear blend (1-alpha)*old + alpha*new. Endpoints short-circuit so they
/// are bit-exact and the unused path receives no gradient.
template <typename T>
Var fade_blend(Tape<T>& tp, Var old_path, Var new_path, const FadeState& fade) {
    check(tp.shape(old_path) == tp.shape(new_path),
          "fade_blend: shape mismatch " + tp.shape(old_path).str() + " vs " + tp.shape(new_path).str());
    const double a = fade.alpha;
    check(a >= 0.0 && a <= 1.0, "fade_blend: alpha out of [0,1]");
    if (a == 0.0) return old_path;
    if (a == 1.0) return new_path;
    return tp.add(tp.scale(old_path, static_cast<T>(1.0 - a)), tp.scale(new_path, static_cast<T>(a)));
}

/// Adds a per-channel bias to a (B,C,H,W) activation or per-feature to (B,F).
template <typename T>
Var bias_add(Tape<T>& tp, Var x, Var bias) {
    const Shape& s = tp.shape(x);
    const int c = tp.shape(bias)[0];
    if (s.rank == 4) {
        check(s[1] == c, "bias_add: channel mismatch");
        return tp.add(x, tp.reshape(bias, Shape{1, c, 1, 1}));
    }
    check(s.rank == 2 && s[1] == c, "bias_add: feature mismatch");
    return tp.add(x, tp.reshape(bias, Shape{1, c}));
}

/// Multiplicative Gaussian noise x * (1 + magnitude * n). Magnitude zero is
/// the identity (no op recorded).
template <typename T>
Var multiplicative_noise(Tape<T>& tp, Var x, double magnitude, Rng& rng) {
    if (magnitude == 0.0) return x;
    Tensor<T> f = Tensor<T>::uninitialized(tp.shape(x));
    for (auto& v : f.raw()) v = static_cast<T>(1.0 + magnitude * rng.normal());
    return tp.mul(x, tp.constant(std::move(f)));
}

/// Batch normalization over (B,H,W) per channel, training mode. Returns the
/// normalized output; batch statistics are exposed for the running-average
/// update, which lives outside the tape.
template <typename T>
Var batchnorm_train(Tape<T>& tp, Var x, Var gamma, Var beta, T eps,
                    Tensor<T>* batch_mean_out = nullptr, Tensor<T>* batch_var_out = nullptr) {
    const Shape& s = tp.shape(x);
    check(s.rank == 4, "batchnorm: expected (B,C,H,W)");
    const T inv_n = T(1) / static_cast<T>(static_cast<std::int64_t>(s[0]) * s[2] * s[3]);
    Var mu = tp.scale(tp.sum_axes(x, 0b1101u), inv_n);
    Var centered = tp.sub(x, tp.broadcast_to(mu, s));
    Var variance = tp.scale(tp.sum_axes(tp.square(centered), 0b1101u), inv_n);
    if (batch_mean_out) *batch_mean_out = tp.value(mu).clone();
    if (batch_var_out) *batch_var_out = tp.value(variance).clone();
    Var norm = tp.div(centered, tp.broadcast_to(tp.sqrt(tp.add_scalar(variance, eps)), s));
    Var scaled = tp.mul(norm, tp.reshape(gamma, Shape{1, s[1], 1, 1}));
    return tp.add(scaled, tp.reshape(beta, Shape{1, s[1], 1, 1}));
}

/// Batch normalization with frozen running statistics (evaluation mode).
template <typename T>
Var batchnorm_eval(Tape<T>& tp, Var x, Var gamma, Var beta, const Tensor<T>& running_mean,
                   const Tensor<T>& running_var, T eps) {
    const Shape& s = tp.shape(x);
    const int c = s[1];
    Tensor<T> inv_sd = Tensor<T>::uninitialized({c});
    for (int i = 0; i < c; ++i)
        inv_sd.mutable_data()[i] = T(1) / std::sqrt(running_var.data()[i] + eps);
    Var centered = tp.sub(x, tp.reshape(tp.constant(running_mean.clone()), Shape{1, c, 1, 1}));
    Var norm = tp.mul(centered, tp.reshape(tp.constant(std::move(inv_sd)), Shape{1, c, 1, 1}));
    return tp.add(tp.mul(norm, tp.reshape(gamma, Shape{1, c, 1, 1})),
                  tp.reshape(beta, Shape{1, c, 1, 1}));
}

/// Layer normalization over (C,H,W) per sample with per-channel gain/offset.
template <typename T>
Var layernorm(Tape<T>& tp, Var x, Var gamma, Var beta, T eps) {
    const Shape& s = tp.shape(x);
    check(s.rank == 4, "layernorm: expected (B,C,H,W)");
    const T inv_n = T(1) / static_cast<T>(static_cast<std::int64_t>(s[1]) * s[2] * s[3]);
    Var mu = tp.scale(tp.sum_axes(x, 0b1110u), inv_n);
    Var centered = tp.sub(x, tp.broadcast_to(mu, s));
    Var variance = tp.scale(tp.sum_axes(tp.square(centered), 0b1110u), inv_n);
    Var norm = tp.div(centered, tp.broadcast_to(tp.sqrt(tp.add_scalar(variance, eps)), s));
    Var scaled = tp.mul(norm, tp.reshape(gamma, Shape{1, s[1], 1, 1}));
    return tp.add(scaled, tp.reshape(beta, Shape{1, s[1], 1, 1}));
}

}  // namespace prograde
