#pragma once

#include "prograde/network.hpp"

namespace prograde {

enum class LossKind { kWganGp, kLsgan };

struct LossConfig {
    LossKind kind = LossKind::kWganGp;
    double gamma = 1.0;  // gradient-norm target; 750 in the fast-transition setting
    double penalty_weight = 10.0;
    double drift_weight = 0.001;
    int n_critic = 1;

    void validate() const {
        check(gamma > 0, "loss: gamma must be positive");
        check(penalty_weight >= 0, "loss: penalty weight must be non-negative");
        check(drift_weight >= 0, "loss: drift weight must be non-negative");
        check(n_critic >= 1, "loss: n_critic must be at least 1");
    }
};

/// Exponential moving average of the discriminator output driving the
/// adaptive-noise stabilization of the least-squares loss.
struct LsganNoiseState {
    double d_hat = 0.0;
};

/// Updates d_hat <- 0.1 d + 0.9 d_hat and returns the noise magnitude
/// 0.2 * max(0, d_hat - 0.5)^2 together with the new state.
inline std::pair<double, LsganNoiseState> adaptive_noise_magnitude(LsganNoiseState state, double d) {
    LsganNoiseState next{0.1 * d + 0.9 * state.d_hat};
    const double over = std::max(0.0, next.d_hat - 0.5);
    return {0.2 * over * over, next};
}

/// Penalty term weight * E[(||grad_xhat D(xhat)||_2 - gamma)^2 / gamma^2],
/// with xhat sampled uniformly on segments between real/fake pairs (one
/// uniform scalar per pair). `critic` maps an image var to (B,1) scores;
/// differentiating the result w.r.t. critic parameters runs a second
/// backward pass through the recorded input gradient.
template <typename T, typename Critic>
Var gradient_penalty(Tape<T>& tp, Critic&& critic, const Tensor<T>& real, const Tensor<T>& fake,
                     const LossConfig& cfg, Rng& rng) {
    cfg.validate();
    check(real.shape() == fake.shape(),
          "gradient_penalty: real/fake shape mismatch " + real.shape().str() + " vs " + fake.shape().str());
    const Shape& s = real.shape();
    const std::int64_t per_sample = s.numel() / s[0];

    Tensor<T> mix = Tensor<T>::uninitialized(s);
    for (int b = 0; b < s[0]; ++b) {
        const T u = static_cast<T>(rng.uniform());
        const T* pr = real.data() + b * per_sample;
        const T* pf = fake.data() + b * per_sample;
        T* pm = mix.mutable_data() + b * per_sample;
        for (std::int64_t i = 0; i < per_sample; ++i) pm[i] = pr[i] + u * (pf[i] - pr[i]);
    }

    Var xhat = tp.leaf(std::move(mix));
    Var scores = critic(xhat);
    Var grad = tp.backward(tp.sum_all(scores), {xhat}, /*keep_graph=*/true)[0];

    unsigned reduce_mask = 0;
    for (int ax = 4 - tp.shape(xhat).rank + 1; ax < 4; ++ax) reduce_mask |= 1u << ax;
    Var sq = tp.sum_axes(tp.square(grad), reduce_mask);         // per-sample squared norm
    Var norm = tp.sqrt(sq, T(1e-12));                           // guarded slope at 0
    Var residual = tp.add_scalar(norm, static_cast<T>(-cfg.gamma));
    const T w = static_cast<T>(cfg.penalty_weight / (cfg.gamma * cfg.gamma));
    return tp.scale(tp.mean_all(tp.square(residual)), w);
}

/// Critic loss E[D(fake)] - E[D(real)] + penalty + drift * E[D(real)^2].
/// `fake` is a detached sample batch; its generator receives no gradient.
template <typename T, typename Critic>
Var wgan_d_loss(Tape<T>& tp, Critic&& critic, const Tensor<T>& real, const Tensor<T>& fake,
                const LossConfig& cfg, Rng& gp_rng) {
    Var d_real = critic(tp.constant(real));
    Var d_fake = critic(tp.constant(fake));
    Var loss = tp.sub(tp.mean_all(d_fake), tp.mean_all(d_real));
    loss = tp.add(loss, gradient_penalty(tp, critic, real, fake, cfg, gp_rng));
    if (cfg.drift_weight > 0)
        loss = tp.add(loss, tp.scale(tp.mean_all(tp.square(d_real)), static_cast<T>(cfg.drift_weight)));
    return loss;
}

/// Least-squares critic loss with targets 1 (real) and 0 (fake):
/// 0.5 E[(D(real)-1)^2] + 0.5 E[D(fake)^2].
template <typename T, typename Critic>
Var lsgan_d_loss(Tape<T>& tp, Critic&& critic, const Tensor<T>& real, const Tensor<T>& fake) {
    Var d_real = critic(tp.constant(real));
    Var d_fake = critic(tp.constant(fake));
    Var real_term = tp.mean_all(tp.square(tp.add_scalar(d_real, T(-1))));
    Var fake_term = tp.mean_all(tp.square(d_fake));
    return tp.scale(tp.add(real_term, fake_term), T(0.5));
}

/// Generator objectives given the critic scores of a differentiable fake
/// batch: -E[D] for the Wasserstein loss, 0.5 E[(D-1)^2] for least squares.
template <typename T>
Var wgan_g_objective(Tape<T>& tp, Var fake_scores) {
    return tp.neg(tp.mean_all(fake_scores));
}

template <typename T>
Var lsgan_g_objective(Tape<T>& tp, Var fake_scores) {
    return tp.scale(tp.mean_all(tp.square(tp.add_scalar(fake_scores, T(-1)))), T(0.5));
}

template <typename T>
struct GanLosses {
    Var d_loss, g_loss;
};

/// Both objectives on one tape for the full networks; training evaluates the
/// two sides on separate tapes.
template <typename T>
GanLosses<T> wgan_gp_losses(Binding<T>& bind, Generator<T>& g, Discriminator<T>& d,
                            const Tensor<T>& real, const Tensor<T>& latents, const LossConfig& cfg,
                            Rng& gp_rng, const ForwardOptions& opt = {}) {
    Tape<T>& tp = bind.tape();
    auto critic = [&](Var images) { return d.forward(bind, images, opt); };
    Var fake_var = g.forward(bind, tp.constant(latents), opt);
    Tensor<T> fake = tp.value(fake_var).clone();
    GanLosses<T> out;
    out.d_loss = wgan_d_loss(tp, critic, real, fake, cfg, gp_rng);
    out.g_loss = wgan_g_objective(tp, critic(fake_var));
    return out;
}

template <typename T>
GanLosses<T> lsgan_losses(Binding<T>& bind, Generator<T>& g, Discriminator<T>& d,
                          const Tensor<T>& real, const Tensor<T>& latents,
                          const ForwardOptions& opt = {}) {
    Tape<T>& tp = bind.tape();
    auto critic = [&](Var images) { return d.forward(bind, images, opt); };
    Var fake_var = g.forward(bind, tp.constant(latents), opt);
    Tensor<T> fake = tp.value(fake_var).clone();
    GanLosses<T> out;
    out.d_loss = lsgan_d_loss(tp, critic, real, fake);
    out.g_loss = lsgan_g_objective(tp, critic(fake_var));
    return out;
}

}  // namespace prograde
