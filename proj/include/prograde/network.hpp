#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "prograde/gan_ops.hpp"
#include "prograde/tape.hpp"

namespace prograde {

enum class Variant { kFull, kReduced, kBaseline };

inline std::string variant_name(Variant v) {
    switch (v) {
        case Variant::kFull: return "full";
        case Variant::kReduced: return "reduced";
        case Variant::kBaseline: return "baseline";
    }
    return "?";
}

inline bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

/// Structural description of a generator/discriminator pair.
struct NetworkSpec {
    int max_resolution = 64;
    Variant variant = Variant::kFull;
    int latent_size = 512;
    /// Upper bound applied to every level of the channel schedule. 512 (the
    /// schedule's own maximum) leaves the schedule untouched; smaller values
    /// are a desk-scale knob for cheap experiments.
    int channel_cap = 512;

    void validate() const {
        check(is_power_of_two(max_resolution) && max_resolution >= 4 && max_resolution <= 1024,
              "network: resolution must be a power of two in [4,1024], got " + std::to_string(max_resolution));
        check(latent_size >= 1, "network: latent size must be positive");
        check(channel_cap >= 1, "network: channel cap must be positive");
    }

    /// Feature maps of the Conv 3x3 layers at a given resolution level.
    /// Full schedule: 512 maps up to 32x32, halving afterwards. The reduced
    /// variant halves the 16x16 level and divides by 4 beyond, which leaves
    /// 32 maps at 128x128.
    int channels(int resolution) const {
        check(is_power_of_two(resolution) && resolution >= 4, "network: bad resolution level");
        const int full = std::min(512, 16384 / resolution);
        int c = full;
        if (variant == Variant::kReduced) {
            if (resolution == 16) c = full / 2;
            else if (resolution > 16) c = full / 4;
        }
        return std::min(c, channel_cap);
    }

    int levels() const {
        int n = 1, r = 4;
        while (r < max_resolution) { r *= 2; ++n; }
        return n;
    }
};

template <typename T>
struct ParamRef {
    std::string name;
    Tensor<T>* tensor;
};

/// Per-step association of parameter tensors with tape leaves. All forward
/// passes of one training step share a binding, so gradients of a parameter
/// accumulate across passes automatically.
template <typename T>
class Binding {
  public:
    explicit Binding(Tape<T>& tape) : tape_(&tape) {}

    Tape<T>& tape() { return *tape_; }

    Var leaf_of(const std::string& name, const Tensor<T>& tensor) {
        auto it = index_.find(name);
        if (it != index_.end()) return vars_[it->second];
        Var v = tape_->leaf(tensor);
        index_.emplace(name, vars_.size());
        names_.push_back(name);
        vars_.push_back(v);
        return v;
    }

    bool bound(const std::string& name) const { return index_.count(name) != 0; }
    const std::vector<std::string>& names() const { return names_; }
    const std::vector<Var>& vars() const { return vars_; }

    /// Gradients of `loss` for every bound parameter, keyed by name.
    std::map<std::string, Tensor<T>> gradients(Var loss, bool keep_graph = false) {
        std::vector<Var> gs = tape_->backward(loss, std::span<const Var>(vars_), keep_graph);
        std::map<std::string, Tensor<T>> out;
        for (std::size_t i = 0; i < names_.size(); ++i) out.emplace(names_[i], tape_->value(gs[i]));
        return out;
    }

  private:
    Tape<T>* tape_;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<std::string> names_;
    std::vector<Var> vars_;
};

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

/// Convolution whose stored weights stay unit-normal while the forward pass
/// applies the per-layer He constant sqrt(2/fan_in) at runtime. The same
/// struct covers the baseline configuration, where the constant is folded
/// into the initialization instead (runtime scale 1).
template <typename T>
struct EqualizedConv {
    std::string name;
    Tensor<T> w;  // (out, in, k, k)
    Tensor<T> b;  // (out)
    int pad = 0;
    T runtime_scale = T(1);

    static EqualizedConv make(std::string name, int cout, int cin, int k, int pad, Rng& rng,
                              bool equalized) {
        EqualizedConv l;
        l.name = std::move(name);
        l.w = Tensor<T>::normal({cout, cin, k, k}, rng);
        l.b = Tensor<T>::zeros({cout});
        l.pad = pad;
        const T he = static_cast<T>(std::sqrt(2.0 / (static_cast<double>(cin) * k * k)));
        if (equalized) {
            l.runtime_scale = he;
        } else {
            for (auto& v : l.w.raw()) v *= he;
        }
        return l;
    }

    Var forward(Binding<T>& bind, Var x) const {
        Tape<T>& tp = bind.tape();
        Var weight = bind.leaf_of(name + ".w", w);
        if (runtime_scale != T(1)) weight = tp.scale(weight, runtime_scale);
        Var out = tp.conv2d(x, weight, pad);
        return bias_add(tp, out, bind.leaf_of(name + ".b", b));
    }

    void collect(std::vector<ParamRef<T>>& out) {
        out.push_back({name + ".w", &w});
        out.push_back({name + ".b", &b});
    }
};

template <typename T>
struct BatchNormLayer {
    std::string name;
    Tensor<T> gamma, beta, running_mean, running_var;
    double momentum = 0.9;
    T eps = T(1e-8);

    static BatchNormLayer make(std::string name, int channels) {
        BatchNormLayer l;
        l.name = std::move(name);
        l.gamma = Tensor<T>::full({channels}, T(1));
        l.beta = Tensor<T>::zeros({channels});
        l.running_mean = Tensor<T>::zeros({channels});
        l.running_var = Tensor<T>::full({channels}, T(1));
        return l;
    }

    Var forward(Binding<T>& bind, Var x, bool training) {
        Tape<T>& tp = bind.tape();
        Var gm = bind.leaf_of(name + ".gamma", gamma);
        Var bt = bind.leaf_of(name + ".beta", beta);
        if (!training) return batchnorm_eval(tp, x, gm, bt, running_mean, running_var, eps);
        Tensor<T> mean, var;
        Var out = batchnorm_train(tp, x, gm, bt, eps, &mean, &var);
        const int c = gamma.shape()[0];
        Tensor<T> rm = Tensor<T>::uninitialized({c});
        Tensor<T> rv = Tensor<T>::uninitialized({c});
        for (int i = 0; i < c; ++i) {
            rm.mutable_data()[i] = static_cast<T>(momentum) * running_mean.data()[i] +
                                   static_cast<T>(1.0 - momentum) * mean.data()[i];
            rv.mutable_data()[i] = static_cast<T>(momentum) * running_var.data()[i] +
                                   static_cast<T>(1.0 - momentum) * var.data()[i];
        }
        running_mean = std::move(rm);
        running_var = std::move(rv);
        return out;
    }

    void collect(std::vector<ParamRef<T>>& out) {
        out.push_back({name + ".gamma", &gamma});
        out.push_back({name + ".beta", &beta});
        out.push_back({name + ".running_mean", &running_mean});
        out.push_back({name + ".running_var", &running_var});
    }
};

template <typename T>
struct LayerNormLayer {
    std::string name;
    Tensor<T> gamma, beta;
    T eps = T(1e-8);

    static LayerNormLayer make(std::string name, int channels) {
        LayerNormLayer l;
        l.name = std::move(name);
        l.gamma = Tensor<T>::full({channels}, T(1));
        l.beta = Tensor<T>::zeros({channels});
        return l;
    }

    Var forward(Binding<T>& bind, Var x) {
        return layernorm(bind.tape(), x, bind.leaf_of(name + ".gamma", gamma),
                         bind.leaf_of(name + ".beta", beta), eps);
    }

    void collect(std::vector<ParamRef<T>>& out) {
        out.push_back({name + ".gamma", &gamma});
        out.push_back({name + ".beta", &beta});
    }
};

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

/// Forward options shared by both networks.
struct ForwardOptions {
    double alpha = 1.0;          // fade-in blend factor of the newest block
    bool training = true;        // batch-norm mode (baseline only)
    double noise_magnitude = 0;  // multiplicative noise on D conv inputs (LSGAN hack)
    Rng* noise_rng = nullptr;
};

template <typename T>
class Generator {
  public:
    struct Block {
        int resolution = 4;
        EqualizedConv<T> conv0, conv1;
        BatchNormLayer<T> bn0, bn1;  // baseline only
    };

    static Generator build(const NetworkSpec& spec, Rng& rng, int resolution) {
        spec.validate();
        check(is_power_of_two(resolution) && resolution >= 4 && resolution <= spec.max_resolution,
              "generator: bad build resolution " + std::to_string(resolution));
        Generator g;
        g.spec_ = spec;
        for (int r = 4; r <= resolution; r *= 2) g.append_level(r, rng);
        return g;
    }

    const NetworkSpec& spec() const { return spec_; }
    int resolution() const { return blocks_.back().resolution; }
    int block_count() const { return static_cast<int>(blocks_.size()); }

    /// Adds the next-resolution block and RGB head; existing parameters are
    /// untouched. The old head keeps serving the faded path until alpha
    /// reaches 1.
    void grow(Rng& rng) {
        check(spec_.variant != Variant::kBaseline, "generator: baseline variant does not grow");
        check(resolution() < spec_.max_resolution, "generator: already at max resolution");
        append_level(resolution() * 2, rng);
    }

    /// Latents (B, latent_size) -> images (B, 3, R, R).
    Var forward(Binding<T>& bind, Var latents, const ForwardOptions& opt = {}) {
        Tape<T>& tp = bind.tape();
        const Shape& ls = tp.shape(latents);
        check(ls.rank == 2 && ls[1] == spec_.latent_size,
              "generator: latents must be (B," + std::to_string(spec_.latent_size) + "), got " + ls.str());
        const bool baseline = spec_.variant == Variant::kBaseline;
        const int cur = block_count() - 1;
        const bool fading = !baseline && cur > 0 && opt.alpha < 1.0;

        Var x = tp.reshape(latents, Shape{ls[0], ls[1], 1, 1});
        Var prev_features{};
        for (int i = 0; i <= cur; ++i) {
            if (fading && i == cur) {
                prev_features = x;
                if (opt.alpha <= 0.0) break;
            }
            if (i > 0) x = tp.upsample2x(x);
            x = block_forward(bind, blocks_[i], x, i == 0, opt.training);
        }

        if (!fading) {
            Var rgb = to_rgb_[cur].forward(bind, x);
            return baseline ? tp.tanh(rgb) : rgb;
        }
        Var old_rgb = tp.upsample2x(to_rgb_[cur - 1].forward(bind, prev_features));
        if (opt.alpha <= 0.0) return old_rgb;
        Var new_rgb = to_rgb_[cur].forward(bind, x);
        return fade_blend(tp, old_rgb, new_rgb, FadeState{opt.alpha});
    }

    std::vector<ParamRef<T>> params() {
        std::vector<ParamRef<T>> out;
        const bool baseline = spec_.variant == Variant::kBaseline;
        for (auto& b : blocks_) {
            b.conv0.collect(out);
            b.conv1.collect(out);
            if (baseline) {
                b.bn0.collect(out);
                b.bn1.collect(out);
            }
        }
        for (auto& h : to_rgb_) h.collect(out);
        return out;
    }

  private:
    void append_level(int r, Rng& rng) {
        const bool eq = spec_.variant != Variant::kBaseline;
        const std::string base = "g.b" + std::to_string(r) + ".";
        Block blk;
        blk.resolution = r;
        if (r == 4) {
            // The 4x4 conv with padding 3 maps the (B,L,1,1) latent to a
            // (B,C,4,4) activation, one kernel tap per output position.
            blk.conv0 = EqualizedConv<T>::make(base + "conv0", spec_.channels(4), spec_.latent_size, 4, 3, rng, eq);
            blk.conv1 = EqualizedConv<T>::make(base + "conv1", spec_.channels(4), spec_.channels(4), 3, 1, rng, eq);
        } else {
            blk.conv0 = EqualizedConv<T>::make(base + "conv0", spec_.channels(r), spec_.channels(r / 2), 3, 1, rng, eq);
            blk.conv1 = EqualizedConv<T>::make(base + "conv1", spec_.channels(r), spec_.channels(r), 3, 1, rng, eq);
        }
        if (spec_.variant == Variant::kBaseline) {
            blk.bn0 = BatchNormLayer<T>::make(base + "bn0", spec_.channels(r));
            blk.bn1 = BatchNormLayer<T>::make(base + "bn1", spec_.channels(r));
        }
        blocks_.push_back(std::move(blk));
        to_rgb_.push_back(EqualizedConv<T>::make("g.rgb" + std::to_string(r), 3, spec_.channels(r), 1, 0, rng, eq));
    }

    /// Two convolutions with activation; pixelwise normalization follows
    /// each Conv 3x3 (so not the 4x4 latent conv of the input block).
    Var block_forward(Binding<T>& bind, Block& blk, Var x, bool input_block, bool training) {
        Tape<T>& tp = bind.tape();
        const bool baseline = spec_.variant == Variant::kBaseline;
        x = blk.conv0.forward(bind, x);
        if (baseline) x = tp.relu(blk.bn0.forward(bind, x, training));
        else if (input_block) x = tp.leaky_relu(x, T(0.2));
        else x = pixelnorm(tp, tp.leaky_relu(x, T(0.2)));
        x = blk.conv1.forward(bind, x);
        if (baseline) x = tp.relu(blk.bn1.forward(bind, x, training));
        else x = pixelnorm(tp, tp.leaky_relu(x, T(0.2)));
        return x;
    }

    NetworkSpec spec_;
    std::vector<Block> blocks_;
    std::vector<EqualizedConv<T>> to_rgb_;
};

// ---------------------------------------------------------------------------
// Discriminator
// ---------------------------------------------------------------------------

template <typename T>
class Discriminator {
  public:
    struct Block {
        int resolution = 4;
        EqualizedConv<T> conv0, conv1;
        LayerNormLayer<T> ln0, ln1;  // baseline only
    };

    static Discriminator build(const NetworkSpec& spec, Rng& rng, int resolution) {
        spec.validate();
        check(is_power_of_two(resolution) && resolution >= 4 && resolution <= spec.max_resolution,
              "discriminator: bad build resolution " + std::to_string(resolution));
        Discriminator d;
        d.spec_ = spec;
        const bool eq = spec.variant != Variant::kBaseline;
        d.out_ = EqualizedConv<T>::make("d.out", 1, spec.channels(4), 1, 0, rng, eq);
        for (int r = 4; r <= resolution; r *= 2) d.append_level(r, rng);
        return d;
    }

    const NetworkSpec& spec() const { return spec_; }
    int resolution() const { return blocks_.back().resolution; }
    int block_count() const { return static_cast<int>(blocks_.size()); }
    bool uses_minibatch_stddev() const { return spec_.variant != Variant::kBaseline; }

    void grow(Rng& rng) {
        check(spec_.variant != Variant::kBaseline, "discriminator: baseline variant does not grow");
        check(resolution() < spec_.max_resolution, "discriminator: already at max resolution");
        append_level(resolution() * 2, rng);
    }

    /// Images (B, 3, R, R) -> scores (B, 1).
    Var forward(Binding<T>& bind, Var images, const ForwardOptions& opt = {}) {
        Tape<T>& tp = bind.tape();
        const Shape& is = tp.shape(images);
        const int r = resolution();
        check(is.rank == 4 && is[1] == 3 && is[2] == r && is[3] == r,
              "discriminator: expected (B,3," + std::to_string(r) + "," + std::to_string(r) + "), got " + is.str());
        const bool baseline = spec_.variant == Variant::kBaseline;
        const int cur = block_count() - 1;
        const bool fading = !baseline && cur > 0 && opt.alpha < 1.0;

        Var x{};
        if (!fading || opt.alpha > 0.0) {
            x = tp.leaky_relu(from_rgb_[cur].forward(bind, images), T(0.2));
            if (cur > 0) x = block_forward(bind, blocks_[cur], x, opt);
        }
        if (fading && cur > 0) {
            Var old_x = tp.leaky_relu(from_rgb_[cur - 1].forward(bind, tp.avgpool2x(images)), T(0.2));
            x = opt.alpha <= 0.0 ? old_x : fade_blend(tp, old_x, x, FadeState{opt.alpha});
        }
        for (int i = cur - 1; i >= 1; --i) x = block_forward(bind, blocks_[i], x, opt);

        // 4x4 tail: stddev map, Conv 3x3, Conv 4x4 down to 1x1, linear score.
        if (uses_minibatch_stddev()) x = minibatch_stddev(tp, x);
        x = apply_noise(bind, x, opt);
        x = blocks_[0].conv0.forward(bind, x);
        if (baseline) x = blocks_[0].ln0.forward(bind, x);
        x = tp.leaky_relu(x, T(0.2));
        x = apply_noise(bind, x, opt);
        x = blocks_[0].conv1.forward(bind, x);
        if (baseline) x = blocks_[0].ln1.forward(bind, x);
        x = tp.leaky_relu(x, T(0.2));
        x = out_.forward(bind, x);
        return tp.reshape(x, Shape{is[0], 1});
    }

    std::vector<ParamRef<T>> params() {
        std::vector<ParamRef<T>> out;
        const bool baseline = spec_.variant == Variant::kBaseline;
        for (auto& b : blocks_) {
            b.conv0.collect(out);
            b.conv1.collect(out);
            if (baseline) {
                b.ln0.collect(out);
                b.ln1.collect(out);
            }
        }
        for (auto& h : from_rgb_) h.collect(out);
        out_.collect(out);
        return out;
    }

  private:
    void append_level(int r, Rng& rng) {
        const bool eq = spec_.variant != Variant::kBaseline;
        const std::string base = "d.b" + std::to_string(r) + ".";
        Block blk;
        blk.resolution = r;
        if (r == 4) {
            const int extra = uses_minibatch_stddev() ? 1 : 0;
            blk.conv0 = EqualizedConv<T>::make(base + "conv0", spec_.channels(4), spec_.channels(4) + extra, 3, 1, rng, eq);
            blk.conv1 = EqualizedConv<T>::make(base + "conv1", spec_.channels(4), spec_.channels(4), 4, 0, rng, eq);
        } else {
            blk.conv0 = EqualizedConv<T>::make(base + "conv0", spec_.channels(r), spec_.channels(r), 3, 1, rng, eq);
            blk.conv1 = EqualizedConv<T>::make(base + "conv1", spec_.channels(r / 2), spec_.channels(r), 3, 1, rng, eq);
        }
        if (spec_.variant == Variant::kBaseline) {
            blk.ln0 = LayerNormLayer<T>::make(base + "ln0", blk.conv0.w.shape()[0]);
            blk.ln1 = LayerNormLayer<T>::make(base + "ln1", blk.conv1.w.shape()[0]);
        }
        blocks_.push_back(std::move(blk));
        from_rgb_.push_back(EqualizedConv<T>::make("d.rgb" + std::to_string(r), spec_.channels(r), 3, 1, 0, rng, eq));
    }

    Var apply_noise(Binding<T>& bind, Var x, const ForwardOptions& opt) {
        if (opt.noise_magnitude == 0.0 || opt.noise_rng == nullptr) return x;
        return multiplicative_noise(bind.tape(), x, opt.noise_magnitude, *opt.noise_rng);
    }

    /// One downsampling block (resolution > 4): Conv 3x3, Conv 3x3 into the
    /// next level's channel count, average pool.
    Var block_forward(Binding<T>& bind, Block& blk, Var x, const ForwardOptions& opt) {
        Tape<T>& tp = bind.tape();
        const bool baseline = spec_.variant == Variant::kBaseline;
        x = apply_noise(bind, x, opt);
        x = blk.conv0.forward(bind, x);
        if (baseline) x = blk.ln0.forward(bind, x);
        x = tp.leaky_relu(x, T(0.2));
        x = apply_noise(bind, x, opt);
        x = blk.conv1.forward(bind, x);
        if (baseline) x = blk.ln1.forward(bind, x);
        x = tp.leaky_relu(x, T(0.2));
        return tp.avgpool2x(x);
    }

    NetworkSpec spec_;
    std::vector<Block> blocks_;
    std::vector<EqualizedConv<T>> from_rgb_;
    EqualizedConv<T> out_;
};

/// Fixed-resolution pair following the prior-art training configuration:
/// He init applied at initialization, batch/layer normalization, ReLU and
/// tanh in the generator, 128-component normal latents, no progression.
template <typename T>
std::pair<Generator<T>, Discriminator<T>> build_baseline(NetworkSpec spec, Rng& rng) {
    spec.variant = Variant::kBaseline;
    Generator<T> g = Generator<T>::build(spec, rng, spec.max_resolution);
    Discriminator<T> d = Discriminator<T>::build(spec, rng, spec.max_resolution);
    return {std::move(g), std::move(d)};
}

template <typename T, typename Net>
std::map<std::string, Tensor<T>*> param_map(Net& net) {
    std::map<std::string, Tensor<T>*> out;
    for (auto& p : net.params()) out[p.name] = p.tensor;
    return out;
}

}  // namespace prograde
