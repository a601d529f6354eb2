#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>

#include "prograde/checkpoint.hpp"
#include "prograde/config.hpp"
#include "prograde/dataset.hpp"
#include "prograde/image.hpp"
#include "prograde/losses.hpp"
#include "prograde/metrics.hpp"
#include "prograde/optim.hpp"
#include "prograde/progression.hpp"

namespace prograde {

/// Latents on the unit hypersphere (or plain normal for the baseline setup).
template <typename T>
Tensor<T> sample_latents(int count, int latent_size, Rng& rng, bool hypersphere = true) {
    check(count >= 1 && latent_size >= 1, "sample_latents: bad arguments");
    Tensor<T> out = Tensor<T>::normal({count, latent_size}, rng);
    if (!hypersphere) return out;
    for (int i = 0; i < count; ++i) {
        T* row = out.mutable_data() + static_cast<std::int64_t>(i) * latent_size;
        double norm = 0;
        for (int j = 0; j < latent_size; ++j) norm += static_cast<double>(row[j]) * row[j];
        norm = std::sqrt(norm);
        if (norm < 1e-12) { row[0] = T(1); norm = 1.0; }
        for (int j = 0; j < latent_size; ++j) row[j] = static_cast<T>(row[j] / norm);
    }
    return out;
}

struct LatentWalkConfig {
    double sigma_frames = 45.0;  // Gaussian temporal blur width
    double frame_rate = 60.0;    // frames per second (documents the sigma unit)
    int latent_size = 512;
};

/// Per-frame i.i.d. latents blurred across time with a Gaussian (truncated
/// at 3 sigma, reflected edges), then normalized to the hypersphere.
template <typename T>
Tensor<T> latent_walk(int frame_count, const LatentWalkConfig& cfg, Rng& rng) {
    check(frame_count >= 1, "latent_walk: need at least one frame");
    check(cfg.sigma_frames > 0, "latent_walk: sigma must be positive");
    const int dim = cfg.latent_size;
    Tensor<T> raw = Tensor<T>::normal({frame_count, dim}, rng);

    const int radius = static_cast<int>(std::ceil(3.0 * cfg.sigma_frames));
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0;
    for (int t = -radius; t <= radius; ++t) {
        kernel[t + radius] = std::exp(-0.5 * t * t / (cfg.sigma_frames * cfg.sigma_frames));
        sum += kernel[t + radius];
    }
    for (auto& k : kernel) k /= sum;

    auto reflect = [&](int i) {
        if (frame_count == 1) return 0;
        const int period = 2 * (frame_count - 1);
        i = ((i % period) + period) % period;
        return i < frame_count ? i : period - i;
    };

    Tensor<T> out = Tensor<T>::uninitialized({frame_count, dim});
    for (int f = 0; f < frame_count; ++f) {
        for (int d = 0; d < dim; ++d) {
            double acc = 0;
            for (int t = -radius; t <= radius; ++t)
                acc += kernel[t + radius] * static_cast<double>(raw.at(reflect(f + t), d));
            out.mutable_data()[static_cast<std::int64_t>(f) * dim + d] = static_cast<T>(acc);
        }
        T* row = out.mutable_data() + static_cast<std::int64_t>(f) * dim;
        double norm = 0;
        for (int d = 0; d < dim; ++d) norm += static_cast<double>(row[d]) * row[d];
        norm = std::sqrt(norm);
        if (norm < 1e-12) { row[0] = T(1); norm = 1.0; }
        for (int d = 0; d < dim; ++d) row[d] = static_cast<T>(row[d] / norm);
    }
    return out;
}

/// Repeated 2x2 box downsampling of a (3,R,R) image to a target resolution.
template <typename T>
Tensor<T> downsample_to(const Tensor<T>& img, int resolution) {
    const Shape& s = img.shape();
    check(s.rank == 3 && s[1] == s[2], "downsample_to: expected square (C,R,R)");
    check(resolution <= s[1], "downsample_to: cannot upsample");
    Tensor<T> cur = Tensor<T>::from({1, s[0], s[1], s[2]}, std::vector<T>(img.values()));
    while (cur.shape()[2] > resolution) cur = kernels::avgpool2x(cur);
    check(cur.shape()[2] == resolution, "downsample_to: resolution is not a power-of-two divisor");
    return Tensor<T>::from({s[0], resolution, resolution}, std::vector<T>(cur.values()));
}

template <typename T>
Tensor<T> flip_horizontal(const Tensor<T>& img) {
    const Shape& s = img.shape();
    Tensor<T> out = Tensor<T>::uninitialized(s);
    for (int c = 0; c < s[0]; ++c)
        for (int y = 0; y < s[1]; ++y)
            for (int x = 0; x < s[2]; ++x)
                out.mutable_data()[(static_cast<std::int64_t>(c) * s[1] + y) * s[2] + x] =
                    img.at(c, y, s[2] - 1 - x);
    return out;
}

struct StepStats {
    std::uint64_t step_index = 0;
    std::uint64_t images_shown = 0;
    int resolution = 4;
    double alpha = 1.0;
    double d_loss = 0, g_loss = 0;
    std::uint64_t d_updates = 0, g_updates = 0;  // cumulative
};

struct TrainerCallbacks {
    std::function<void(const StepStats&)> on_step;
};

/// Optimization loop: schedule-driven growth, n_critic alternation, Adam on
/// raw weights, generator EMA, periodic SWD/sample emission, atomic
/// checkpoints. Deterministic: dataset order, mirror flips and every random
/// draw are pure functions of the seed, so equal seeds give bit-identical
/// checkpoints and resume is bit-exact.
class Trainer {
  public:
    Trainer(RunConfig cfg, std::uint64_t seed, std::string out_dir = "")
        : cfg_(std::move(cfg)),
          seed_(seed),
          out_dir_(std::move(out_dir)),
          spec_(cfg_.network_spec()),
          schedule_(cfg_.schedule_config()),
          loss_cfg_(cfg_.loss_config()),
          adam_g_(cfg_.optimizer_config()),
          adam_d_(cfg_.optimizer_config()),
          ema_(cfg_.ema_config()) {
        loss_cfg_.validate();
        Rng master(seed_);
        rng_init_ = master.substream("init");
        rng_latent_ = master.substream("latent");
        rng_gp_ = master.substream("gp");
        rng_noise_ = master.substream("noise");
        data_seed_ = master.substream("data").serialize()[0];

        const int r0 = state_at(0, schedule_).resolution;
        g_ = Generator<float>::build(spec_, rng_init_, r0);
        d_ = Discriminator<float>::build(spec_, rng_init_, r0);
        if (!out_dir_.empty()) {
            std::filesystem::create_directories(out_dir_);
            std::ofstream snap(out_dir_ + "/config.cfg");
            snap << cfg_.serialize();
            metrics_out_.open(out_dir_ + "/metrics.csv");
            metrics_out_ << metrics_header();
        }
    }

    /// Dataset injection: images as (3,R,R) tensors in [-1,1] at the maximum
    /// scheduled resolution.
    void set_dataset(std::vector<Tensor<float>> images) {
        check(!images.empty(), "trainer: empty dataset");
        for (const auto& img : images)
            check(img.shape() == Shape{3, cfg_.max_resolution, cfg_.max_resolution},
                  "trainer: dataset image shape " + img.shape().str() + " does not match max resolution " +
                      std::to_string(cfg_.max_resolution));
        dataset_ = std::move(images);
    }

    /// Loads the dataset named by the config (directory or synthetic).
    void load_dataset() {
        std::vector<Tensor<float>> images;
        if (cfg_.synthetic_count > 0) {
            for (auto& img : make_synthetic_shapes_images()) images.push_back(std::move(img));
        } else {
            check(!cfg_.dataset_path.empty(), "trainer: dataset.path or dataset.synthetic_count required");
            for (auto& [name, img] : load_image_dir(cfg_.dataset_path)) {
                Tensor<float> t = to_tensor_pm1<float>(img);
                if (t.shape()[1] != cfg_.max_resolution)
                    t = downsample_to(t, cfg_.max_resolution);
                images.push_back(std::move(t));
            }
        }
        set_dataset(std::move(images));
    }

    const Generator<float>& generator() const { return g_; }
    const Discriminator<float>& discriminator() const { return d_; }
    Generator<float>& generator() { return g_; }
    std::uint64_t images_shown() const { return images_shown_; }
    const StepStats& stats() const { return stats_; }
    const std::vector<Tensor<float>>& dataset() const { return dataset_; }
    ThroughputLog& throughput() { return throughput_; }

    /// Runs until `until_images` real images have been shown (capped by the
    /// config's total budget when zero).
    void run(std::uint64_t until_images = 0, const TrainerCallbacks& callbacks = {}) {
        check(!dataset_.empty(), "trainer: dataset not loaded");
        if (until_images == 0) until_images = cfg_.total_images;
        const auto t0 = std::chrono::steady_clock::now();
        while (images_shown_ < until_images) {
            step();
            throughput_.add(images_shown_,
                            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
            if (callbacks.on_step) callbacks.on_step(stats_);
            maybe_emit();
        }
        if (!out_dir_.empty()) {
            save(out_dir_ + "/final.ckpt");
            std::ofstream tp(out_dir_ + "/throughput.csv");
            tp << throughput_.csv();
        }
    }

    /// One iteration: n_critic discriminator updates, one generator update,
    /// EMA refresh. The images-shown counter advances once per real batch.
    void step() {
        const ProgressionState st = state_at(images_shown_, schedule_);
        if (st.resolution > g_.resolution()) {
            g_.grow(rng_init_);
            d_.grow(rng_init_);
            check(g_.resolution() == st.resolution, "trainer: growth fell behind the schedule");
        }
        const double alpha = st.phase == Phase::kFade ? st.alpha : 1.0;
        const int batch = minibatch_size_for(st.resolution, schedule_);
        const bool hypersphere = spec_.variant != Variant::kBaseline;
        const bool lsgan = loss_cfg_.kind == LossKind::kLsgan;

        double d_loss_val = 0;
        for (int c = 0; c < loss_cfg_.n_critic; ++c) {
            ForwardOptions opt{alpha, true, lsgan ? noise_magnitude_ : 0.0, &rng_noise_};
            Tensor<float> real = next_real_batch(batch, st.resolution);
            Tensor<float> fake;
            {
                Tape<float> tf;
                Binding<float> bf(tf);
                Tensor<float> lat = sample_latents<float>(batch, spec_.latent_size, rng_latent_, hypersphere);
                fake = tf.value(g_.forward(bf, tf.constant(std::move(lat)), opt)).clone();
            }
            Tape<float> td;
            Binding<float> bd(td);
            auto critic = [&](Var images) { return d_.forward(bd, images, opt); };
            Var d_loss = lsgan ? lsgan_d_loss(td, critic, real, fake)
                               : wgan_d_loss(td, critic, real, fake, loss_cfg_, rng_gp_);
            d_loss_val = td.value(d_loss).scalar();
            guard_finite(d_loss_val, "discriminator loss");
            auto grads = bd.gradients(d_loss);
            auto dparams = d_.params();
            adam_d_.step(std::span<ParamRef<float>>(dparams), grads);
            images_shown_ += batch;
            stats_.d_updates += 1;

            if (lsgan) {
                // Feed the critic's mean real-image output to the adaptive
                // noise recurrence.
                Tape<float> te;
                Binding<float> be(te);
                ForwardOptions probe{alpha, true, 0.0, nullptr};
                const Tensor<float>& s = te.value(d_.forward(be, te.constant(real), probe));
                double mean = 0;
                for (std::int64_t i = 0; i < s.numel(); ++i) mean += s.data()[i];
                mean /= static_cast<double>(s.numel());
                auto [mag, next] = adaptive_noise_magnitude(lsgan_state_, mean);
                noise_magnitude_ = mag;
                lsgan_state_ = next;
            }
        }

        ForwardOptions opt{alpha, true, lsgan ? noise_magnitude_ : 0.0, &rng_noise_};
        Tape<float> tg;
        Binding<float> bg(tg);
        Tensor<float> lat = sample_latents<float>(batch, spec_.latent_size, rng_latent_, hypersphere);
        Var fake_scores = d_.forward(bg, g_.forward(bg, tg.constant(std::move(lat)), opt), opt);
        Var g_loss = lsgan ? lsgan_g_objective(tg, fake_scores) : wgan_g_objective(tg, fake_scores);
        const double g_loss_val = tg.value(g_loss).scalar();
        guard_finite(g_loss_val, "generator loss");
        auto gparams = g_.params();
        auto grads = gradients_for(bg, g_loss, gparams);
        adam_g_.step(std::span<ParamRef<float>>(gparams), grads);
        ema_.update(std::span<ParamRef<float>>(gparams));
        stats_.g_updates += 1;

        stats_.step_index += 1;
        stats_.images_shown = images_shown_;
        stats_.resolution = st.resolution;
        stats_.alpha = alpha;
        stats_.d_loss = d_loss_val;
        stats_.g_loss = g_loss_val;
        write_metrics_row();
    }

    /// EMA samples at the current resolution, clamped to [-1,1].
    std::vector<Tensor<float>> sample_ema_images(int count, Rng rng, std::optional<double> alpha = {}) {
        Generator<float> sampler = g_;
        auto sparams = sampler.params();
        ema_.apply(std::span<ParamRef<float>>(sparams));
        const ProgressionState st = state_at(images_shown_, schedule_);
        ForwardOptions opt;
        opt.alpha = alpha.value_or(st.phase == Phase::kFade ? st.alpha : 1.0);
        opt.training = false;
        std::vector<Tensor<float>> out;
        const bool hypersphere = spec_.variant != Variant::kBaseline;
        int remaining = count;
        while (remaining > 0) {
            const int n = std::min(remaining, 32);
            Tape<float> tp;
            Binding<float> b(tp);
            Tensor<float> lat = sample_latents<float>(n, spec_.latent_size, rng, hypersphere);
            const Tensor<float>& imgs = tp.value(sampler.forward(b, tp.constant(std::move(lat)), opt));
            const Shape& s = imgs.shape();
            for (int i = 0; i < n; ++i) {
                Tensor<float> img = Tensor<float>::uninitialized({3, s[2], s[3]});
                const std::int64_t plane = static_cast<std::int64_t>(s[2]) * s[3];
                for (std::int64_t j = 0; j < 3 * plane; ++j) {
                    float v = imgs.data()[i * 3 * plane + j];
                    img.mutable_data()[j] = std::clamp(v, -1.0f, 1.0f);
                }
                out.push_back(std::move(img));
            }
            remaining -= n;
        }
        return out;
    }

    /// SWD between EMA samples and training images at the current resolution,
    /// scaled x1e3 per level. Only meaningful once resolution >= base.
    std::optional<SwdReport> eval_swd(int images_per_set) {
        const ProgressionState st = state_at(images_shown_, schedule_);
        if (st.resolution < cfg_.swd_base_resolution) return std::nullopt;
        Rng eval = Rng(seed_).substream("eval").substream(images_shown_);
        std::vector<Tensor<float>> fake = sample_ema_images(images_per_set, eval.substream("latents"));
        std::vector<Tensor<float>> real;
        Rng pick = eval.substream("reals");
        for (int i = 0; i < images_per_set; ++i)
            real.push_back(downsample_to(dataset_[pick.below(dataset_.size())], st.resolution));
        SwdConfig sc = cfg_.swd_config();
        sc.images_per_set = images_per_set;
        SwdReport rep = swd_report(real, fake, sc, eval.substream("swd"));
        last_swd_ = rep;
        return rep;
    }

    // -- checkpointing -------------------------------------------------------

    Checkpoint make_checkpoint() {
        Checkpoint ck;
        ck.config_text = cfg_.serialize();
        ck.images_shown = images_shown_;
        ck.resolution = g_.resolution();
        const ProgressionState st = state_at(images_shown_, schedule_);
        ck.alpha = st.phase == Phase::kFade ? st.alpha : 1.0;
        ck.adam_g_steps = static_cast<std::uint64_t>(adam_g_.step_count());
        ck.adam_d_steps = static_cast<std::uint64_t>(adam_d_.step_count());
        ck.lsgan_d_hat = lsgan_state_.d_hat;
        ck.seed = seed_;
        for (auto& p : g_.params()) ck.g_params.emplace(p.name, p.tensor->clone());
        for (auto& p : d_.params()) ck.d_params.emplace(p.name, p.tensor->clone());
        for (const auto& [name, t] : ema_.shadow()) ck.ema_params.emplace(name, t.clone());
        for (auto& [name, mo] : adam_g_.moments()) {
            ck.adam_g_m.emplace(name, mo.m.clone());
            ck.adam_g_v.emplace(name, mo.v.clone());
            ck.adam_g_t.emplace(name, static_cast<std::uint64_t>(mo.t));
        }
        for (auto& [name, mo] : adam_d_.moments()) {
            ck.adam_d_m.emplace(name, mo.m.clone());
            ck.adam_d_v.emplace(name, mo.v.clone());
            ck.adam_d_t.emplace(name, static_cast<std::uint64_t>(mo.t));
        }
        ck.rng_states["init"] = rng_init_.serialize();
        ck.rng_states["latent"] = rng_latent_.serialize();
        ck.rng_states["gp"] = rng_gp_.serialize();
        ck.rng_states["noise"] = rng_noise_.serialize();
        return ck;
    }

    void restore(const Checkpoint& ck) {
        check(ck.config_text == cfg_.serialize(),
              "trainer: checkpoint was produced by a different configuration");
        images_shown_ = ck.images_shown;
        stats_.images_shown = images_shown_;
        // Rebuild both networks at the stored resolution, then overwrite
        // every parameter from the manifest.
        Rng scratch(0);
        g_ = Generator<float>::build(spec_, scratch, ck.resolution);
        d_ = Discriminator<float>::build(spec_, scratch, ck.resolution);
        load_params(g_, ck.g_params, "generator");
        load_params(d_, ck.d_params, "discriminator");
        ema_.shadow().clear();
        for (const auto& [name, t] : ck.ema_params) ema_.shadow().emplace(name, t.clone());
        adam_g_.moments().clear();
        adam_d_.moments().clear();
        for (const auto& [name, t] : ck.adam_g_m) adam_g_.moments()[name].m = t.clone();
        for (const auto& [name, t] : ck.adam_g_v) adam_g_.moments()[name].v = t.clone();
        for (const auto& [name, t] : ck.adam_g_t) adam_g_.moments()[name].t = static_cast<std::int64_t>(t);
        for (const auto& [name, t] : ck.adam_d_m) adam_d_.moments()[name].m = t.clone();
        for (const auto& [name, t] : ck.adam_d_v) adam_d_.moments()[name].v = t.clone();
        for (const auto& [name, t] : ck.adam_d_t) adam_d_.moments()[name].t = static_cast<std::int64_t>(t);
        adam_g_.set_step_count(static_cast<std::int64_t>(ck.adam_g_steps));
        adam_d_.set_step_count(static_cast<std::int64_t>(ck.adam_d_steps));
        lsgan_state_.d_hat = ck.lsgan_d_hat;
        noise_magnitude_ = 0.2 * std::pow(std::max(0.0, lsgan_state_.d_hat - 0.5), 2.0);
        auto rng_of = [&](const char* name) {
            auto it = ck.rng_states.find(name);
            check(it != ck.rng_states.end(), std::string("checkpoint: missing rng state ") + name);
            Rng r;
            r.deserialize(it->second);
            return r;
        };
        rng_init_ = rng_of("init");
        rng_latent_ = rng_of("latent");
        rng_gp_ = rng_of("gp");
        rng_noise_ = rng_of("noise");
    }

    void save(const std::string& path) { save_checkpoint(path, make_checkpoint()); }

    void load(const std::string& path) { restore(load_checkpoint(path)); }

    /// Epoch permutations and mirror flips are pure functions of the seed
    /// and counter, so batch content is position-addressable and survives
    /// checkpoint/resume exactly.
    Tensor<float> next_real_batch(int batch, int resolution) {
        const std::size_t n = dataset_.size();
        Tensor<float> out = Tensor<float>::uninitialized({batch, 3, resolution, resolution});
        const std::int64_t per = static_cast<std::int64_t>(3) * resolution * resolution;
        for (int k = 0; k < batch; ++k) {
            const std::uint64_t gi = images_shown_ + k;
            const std::uint64_t epoch = gi / n;
            const std::uint64_t offset = gi % n;
            if (epoch != perm_epoch_ || perm_.empty()) {
                perm_.resize(n);
                for (std::size_t i = 0; i < n; ++i) perm_[i] = static_cast<int>(i);
                Rng shuffle = Rng(data_seed_).substream(epoch);
                for (std::size_t i = n - 1; i > 0; --i)
                    std::swap(perm_[i], perm_[shuffle.below(i + 1)]);
                perm_epoch_ = epoch;
            }
            Tensor<float> img = dataset_[perm_[offset]];
            if (cfg_.mirror_augment) {
                Rng m = Rng(data_seed_).substream("mirror").substream(gi);
                if (m.coin()) img = flip_horizontal(img);
            }
            if (resolution != img.shape()[1]) img = downsample_to(img, resolution);
            std::memcpy(out.mutable_data() + static_cast<std::int64_t>(k) * per, img.data(), sizeof(float) * per);
        }
        return out;
    }

  private:
    std::vector<Tensor<float>> make_synthetic_shapes_images() {
        std::vector<Tensor<float>> out;
        for (const auto& img : make_synthetic_shapes(cfg_.synthetic_count, cfg_.max_resolution, cfg_.synthetic_seed))
            out.push_back(to_tensor_pm1<float>(img));
        return out;
    }

    void guard_finite(double v, const char* what) {
        if (std::isfinite(v)) return;
        if (!out_dir_.empty()) save(out_dir_ + "/diagnostic.ckpt");
        raise(std::string("trainer: non-finite ") + what + " at " + std::to_string(images_shown_) +
              " images (diagnostic checkpoint written)");
    }

    std::map<std::string, Tensor<float>> gradients_for(Binding<float>& bind, Var loss,
                                                       std::vector<ParamRef<float>>& which) {
        std::vector<Var> wrt;
        std::vector<std::string> names;
        for (auto& p : which) {
            if (!bind.bound(p.name)) continue;
            wrt.push_back(bind.leaf_of(p.name, *p.tensor));
            names.push_back(p.name);
        }
        auto gs = bind.tape().backward(loss, std::span<const Var>(wrt));
        std::map<std::string, Tensor<float>> out;
        for (std::size_t i = 0; i < names.size(); ++i) out.emplace(names[i], bind.tape().value(gs[i]));
        return out;
    }

    std::string metrics_header() {
        std::string h = "step,images_shown,resolution,alpha,d_loss,g_loss";
        for (int r = cfg_.swd_base_resolution; r <= cfg_.max_resolution; r *= 2)
            h += ",swd_" + std::to_string(r);
        h += ",swd_avg\n";
        return h;
    }

    void write_metrics_row(const SwdReport* swd = nullptr) {
        if (!metrics_out_.is_open()) return;
        metrics_out_ << stats_.step_index << "," << stats_.images_shown << "," << stats_.resolution << ","
                     << stats_.alpha << "," << stats_.d_loss << "," << stats_.g_loss;
        int levels = 0;
        for (int r = cfg_.swd_base_resolution; r <= cfg_.max_resolution; r *= 2) ++levels;
        for (int l = 0; l < levels; ++l) {
            metrics_out_ << ",";
            if (swd && l < static_cast<int>(swd->level_swd_x1e3.size())) metrics_out_ << swd->level_swd_x1e3[l];
        }
        metrics_out_ << ",";
        if (swd) metrics_out_ << swd->average_x1e3;
        metrics_out_ << "\n";
        metrics_out_.flush();
    }

    void maybe_emit() {
        if (out_dir_.empty()) return;
        if (cfg_.eval_interval > 0 && images_shown_ / cfg_.eval_interval > last_eval_mark_) {
            last_eval_mark_ = images_shown_ / cfg_.eval_interval;
            auto rep = eval_swd(cfg_.eval_images);
            if (rep) write_metrics_row(&*rep);
            Rng srng = Rng(seed_).substream("samples").substream(images_shown_);
            auto samples = sample_ema_images(cfg_.sample_count, srng);
            std::vector<ImageU8> tiles;
            for (auto& t : samples) tiles.push_back(from_tensor_pm1(t));
            write_image(out_dir_ + "/samples_" + std::to_string(images_shown_) + ".png", image_grid(tiles));
        }
        if (cfg_.checkpoint_interval > 0 && images_shown_ / cfg_.checkpoint_interval > last_ckpt_mark_) {
            last_ckpt_mark_ = images_shown_ / cfg_.checkpoint_interval;
            save(out_dir_ + "/ckpt_" + std::to_string(images_shown_) + ".ckpt");
        }
    }

    template <typename Net>
    void load_params(Net& net, const std::map<std::string, Tensor<float>>& stored, const char* what) {
        auto pm = param_map<float>(net);
        check(pm.size() == stored.size(), std::string("checkpoint: ") + what + " parameter count mismatch (" +
                                              std::to_string(pm.size()) + " vs " + std::to_string(stored.size()) + ")");
        for (auto& [name, ptr] : pm) {
            auto it = stored.find(name);
            check(it != stored.end(), std::string("checkpoint: missing ") + what + " parameter " + name);
            check(it->second.shape() == ptr->shape(), "checkpoint: shape mismatch for " + name);
            *ptr = it->second.clone();
        }
    }

    RunConfig cfg_;
    std::uint64_t seed_;
    std::string out_dir_;
    NetworkSpec spec_;
    ScheduleConfig schedule_;
    LossConfig loss_cfg_;

    Generator<float> g_;
    Discriminator<float> d_;
    AdamState<float> adam_g_, adam_d_;
    EmaState<float> ema_;

    Rng rng_init_, rng_latent_, rng_gp_, rng_noise_;
    std::uint64_t data_seed_ = 0;
    LsganNoiseState lsgan_state_;
    double noise_magnitude_ = 0;

    std::vector<Tensor<float>> dataset_;
    std::vector<int> perm_;
    std::uint64_t perm_epoch_ = ~0ULL;

    std::uint64_t images_shown_ = 0;
    StepStats stats_;
    ThroughputLog throughput_;
    std::ofstream metrics_out_;
    std::uint64_t last_eval_mark_ = 0, last_ckpt_mark_ = 0;
    std::optional<SwdReport> last_swd_;
};

}  // namespace prograde
