#pragma once

#include <map>
#include <span>
#include <string>

#include "prograde/network.hpp"

namespace prograde {

struct OptimizerConfig {
    double alpha = 0.001;
    double beta1 = 0.0;
    double beta2 = 0.99;
    double epsilon = 1e-8;
};

struct EmaConfig {
    double decay = 0.999;
};

/// One bias-corrected Adam update. Inputs are immutable; fresh tensors come
/// back for the parameter and both moments.
template <typename T>
void adam_step(Tensor<T>& param, const Tensor<T>& grad, Tensor<T>& m, Tensor<T>& v,
               const OptimizerConfig& cfg, std::int64_t step_index) {
    check(step_index >= 1, "adam_step: step index starts at 1");
    check(param.shape() == grad.shape() && param.shape() == m.shape() && param.shape() == v.shape(),
          "adam_step: shape mismatch");
    const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
    const T bc1 = static_cast<T>(1.0 - std::pow(cfg.beta1, static_cast<double>(step_index)));
    const T bc2 = static_cast<T>(1.0 - std::pow(cfg.beta2, static_cast<double>(step_index)));
    const T lr = static_cast<T>(cfg.alpha);
    const T eps = static_cast<T>(cfg.epsilon);

    Tensor<T> np = Tensor<T>::uninitialized(param.shape());
    Tensor<T> nm = Tensor<T>::uninitialized(param.shape());
    Tensor<T> nv = Tensor<T>::uninitialized(param.shape());
    const std::int64_t n = param.numel();
    for (std::int64_t i = 0; i < n; ++i) {
        const T gi = grad.data()[i];
        check(is_finite_value(gi), "adam_step: non-finite gradient");
        const T mi = b1 * m.data()[i] + (T(1) - b1) * gi;
        const T vi = b2 * v.data()[i] + (T(1) - b2) * gi * gi;
        nm.mutable_data()[i] = mi;
        nv.mutable_data()[i] = vi;
        const T m_hat = mi / bc1;
        const T v_hat = vi / bc2;
        np.mutable_data()[i] = param.data()[i] - lr * m_hat / (std::sqrt(v_hat) + eps);
    }
    param = std::move(np);
    m = std::move(nm);
    v = std::move(nv);
}

/// Adam moments keyed by parameter name, so growth (which inserts parameters
/// mid-list) never disturbs existing state. The bias-correction step index
/// is also per parameter: a block added at a growth boundary starts at t=1,
/// otherwise its fresh second moment would be divided by the old run's
/// nearly-saturated correction and its first updates would come out almost
/// an order of magnitude too large. Parameters without a gradient this step
/// are left untouched.
template <typename T>
class AdamState {
  public:
    struct Moments {
        Tensor<T> m, v;
        std::int64_t t = 0;
    };

    explicit AdamState(OptimizerConfig cfg = {}) : cfg_(cfg) {}

    const OptimizerConfig& config() const { return cfg_; }
    std::int64_t step_count() const { return steps_; }

    void step(std::span<ParamRef<T>> params, const std::map<std::string, Tensor<T>>& grads) {
        ++steps_;
        for (auto& p : params) {
            auto it = grads.find(p.name);
            if (it == grads.end()) continue;
            Moments& mo = moments_[p.name];
            if (mo.m.empty()) {
                mo.m = Tensor<T>::zeros(p.tensor->shape());
                mo.v = Tensor<T>::zeros(p.tensor->shape());
            }
            ++mo.t;
            adam_step(*p.tensor, it->second, mo.m, mo.v, cfg_, mo.t);
        }
    }

    std::map<std::string, Moments>& moments() { return moments_; }
    void set_step_count(std::int64_t t) { steps_ = t; }

  private:
    OptimizerConfig cfg_;
    std::int64_t steps_ = 0;
    std::map<std::string, Moments> moments_;
};

/// ema <- decay * ema + (1 - decay) * current, elementwise.
template <typename T>
Tensor<T> ema_update(const Tensor<T>& ema, const Tensor<T>& current, const EmaConfig& cfg) {
    check(ema.shape() == current.shape(), "ema_update: shape mismatch");
    const T d = static_cast<T>(cfg.decay);
    Tensor<T> out = Tensor<T>::uninitialized(ema.shape());
    for (std::int64_t i = 0; i < ema.numel(); ++i)
        out.mutable_data()[i] = d * ema.data()[i] + (T(1) - d) * current.data()[i];
    return out;
}

/// Shadow copy of generator weights for evaluation and sampling. Parameters
/// appearing for the first time (after growth) enter at their current value.
template <typename T>
class EmaState {
  public:
    explicit EmaState(EmaConfig cfg = {}) : cfg_(cfg) {}

    const EmaConfig& config() const { return cfg_; }

    void update(std::span<ParamRef<T>> params) {
        for (auto& p : params) {
            auto it = shadow_.find(p.name);
            if (it == shadow_.end()) shadow_.emplace(p.name, p.tensor->clone());
            else it->second = ema_update(it->second, *p.tensor, cfg_);
        }
    }

    /// Copies the shadow weights into a network (e.g. a sampling clone).
    void apply(std::span<ParamRef<T>> params) const {
        for (auto& p : params) {
            auto it = shadow_.find(p.name);
            if (it != shadow_.end()) *p.tensor = it->second.clone();
        }
    }

    std::map<std::string, Tensor<T>>& shadow() { return shadow_; }
    const std::map<std::string, Tensor<T>>& shadow() const { return shadow_; }

  private:
    EmaConfig cfg_;
    std::map<std::string, Tensor<T>> shadow_;
};

}  // namespace prograde
