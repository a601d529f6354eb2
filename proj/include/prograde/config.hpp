#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "prograde/losses.hpp"
#include "prograde/metrics.hpp"
#include "prograde/network.hpp"
#include "prograde/optim.hpp"
#include "prograde/progression.hpp"

namespace prograde {

/// Fully-resolved run configuration. Every constant is a documented key in a
/// flat `key = value` text format; unknown keys are errors. Defaults follow
/// the full training configuration; a few (phase length, critic iterations,
/// optimizer constants) shift with the variant exactly as the reduced and
/// baseline setups prescribe.
struct RunConfig {
    // network.*
    std::string variant = "full";  // full | reduced | baseline
    int max_resolution = 64;
    int latent_size = 512;
    int channel_cap = 512;

    // schedule.*
    bool progressive = true;
    std::uint64_t phase_length = 800000;
    std::uint64_t total_images = 0;  // resolved to the full progression budget
    int minibatch_default = 0;       // 0 = per-resolution table
    std::map<int, int> minibatch_overrides;

    // loss.*
    std::string loss_kind = "wgan-gp";  // wgan-gp | lsgan
    double gamma = 1.0;
    double lambda = 10.0;
    double drift = 0.001;
    int n_critic = 1;

    // optimizer.*
    double adam_alpha = 0.001;
    double adam_beta1 = 0.0;
    double adam_beta2 = 0.99;
    double adam_epsilon = 1e-8;
    double ema_decay = 0.999;

    // metrics.*
    int swd_images_per_set = 1024;
    int swd_patches_per_image = 128;
    int swd_projections = 128;
    int swd_base_resolution = 16;
    int swd_patch_size = 7;
    std::uint64_t eval_interval = 20000;  // images between SWD/sample emissions; 0 = off
    int eval_images = 256;

    // dataset.*
    std::string dataset_path;
    int synthetic_count = 0;  // when > 0, use procedural shapes instead of dataset.path
    std::uint64_t synthetic_seed = 1;
    bool mirror_augment = false;
    int prep_supersample = 512;
    int prep_resolution = 128;

    // io.*
    std::uint64_t checkpoint_interval = 0;  // images; 0 = final checkpoint only
    int sample_count = 16;

    NetworkSpec network_spec() const {
        NetworkSpec s;
        s.max_resolution = max_resolution;
        s.variant = variant == "full" ? Variant::kFull : variant == "reduced" ? Variant::kReduced : Variant::kBaseline;
        s.latent_size = latent_size;
        s.channel_cap = channel_cap;
        return s;
    }

    ScheduleConfig schedule_config() const {
        ScheduleConfig s;
        s.phase_length = phase_length;
        s.max_resolution = max_resolution;
        s.progressive = progressive;
        s.minibatch_overrides = minibatch_overrides;
        if (minibatch_default > 0)
            for (int r = 4; r <= 1024; r *= 2)
                if (!s.minibatch_overrides.count(r)) s.minibatch_overrides[r] = minibatch_default;
        return s;
    }

    LossConfig loss_config() const {
        LossConfig l;
        l.kind = loss_kind == "lsgan" ? LossKind::kLsgan : LossKind::kWganGp;
        l.gamma = gamma;
        l.penalty_weight = lambda;
        l.drift_weight = drift;
        l.n_critic = n_critic;
        return l;
    }

    OptimizerConfig optimizer_config() const { return {adam_alpha, adam_beta1, adam_beta2, adam_epsilon}; }
    EmaConfig ema_config() const { return {ema_decay}; }

    SwdConfig swd_config() const {
        SwdConfig s;
        s.images_per_set = swd_images_per_set;
        s.patches_per_image = swd_patches_per_image;
        s.projections = swd_projections;
        s.base_resolution = swd_base_resolution;
        s.patch_size = swd_patch_size;
        return s;
    }

    std::string serialize() const;
};

namespace detail_config {

struct RawEntry {
    std::string value;
    int line;
};

inline void fail_key(const std::string& key, int line, const std::string& why) {
    raise("config: line " + std::to_string(line) + ": key '" + key + "': " + why);
}

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    std::size_t e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

}  // namespace detail_config

inline RunConfig parse_config(const std::string& text) {
    using detail_config::fail_key;
    std::map<std::string, detail_config::RawEntry> raw;
    {
        std::stringstream ss(text);
        std::string line;
        int lineno = 0;
        while (std::getline(ss, line)) {
            ++lineno;
            const std::size_t hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            line = detail_config::trim(line);
            if (line.empty()) continue;
            const std::size_t eq = line.find('=');
            check(eq != std::string::npos, "config: line " + std::to_string(lineno) + ": expected 'key = value'");
            const std::string key = detail_config::trim(line.substr(0, eq));
            const std::string val = detail_config::trim(line.substr(eq + 1));
            check(!key.empty() && !val.empty(), "config: line " + std::to_string(lineno) + ": empty key or value");
            check(!raw.count(key), "config: line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
            raw[key] = {val, lineno};
        }
    }

    RunConfig cfg;
    std::map<std::string, bool> seen;

    auto take = [&](const std::string& key) -> std::optional<detail_config::RawEntry> {
        auto it = raw.find(key);
        if (it == raw.end()) return std::nullopt;
        seen[key] = true;
        return it->second;
    };
    auto get_string = [&](const std::string& key, std::string& out) {
        if (auto e = take(key)) out = e->value;
    };
    auto get_bool = [&](const std::string& key, bool& out) {
        if (auto e = take(key)) {
            if (e->value == "true") out = true;
            else if (e->value == "false") out = false;
            else fail_key(key, e->line, "expected true or false, got '" + e->value + "'");
        }
    };
    auto parse_i64 = [&](const std::string& key, const detail_config::RawEntry& e) {
        char* end = nullptr;
        const long long v = std::strtoll(e.value.c_str(), &end, 10);
        if (end != e.value.c_str() + e.value.size()) fail_key(key, e.line, "expected integer, got '" + e.value + "'");
        return v;
    };
    auto get_int = [&](const std::string& key, int& out, long long lo, long long hi) {
        if (auto e = take(key)) {
            const long long v = parse_i64(key, *e);
            if (v < lo || v > hi)
                fail_key(key, e->line, "value " + e->value + " out of range [" + std::to_string(lo) + "," +
                                           std::to_string(hi) + "]");
            out = static_cast<int>(v);
        }
    };
    auto get_u64 = [&](const std::string& key, std::uint64_t& out, long long lo = 0) {
        if (auto e = take(key)) {
            const long long v = parse_i64(key, *e);
            if (v < lo) fail_key(key, e->line, "value must be at least " + std::to_string(lo));
            out = static_cast<std::uint64_t>(v);
        }
    };
    auto get_double = [&](const std::string& key, double& out, double lo, bool lo_strict) {
        if (auto e = take(key)) {
            char* end = nullptr;
            const double v = std::strtod(e->value.c_str(), &end);
            if (end != e->value.c_str() + e->value.size())
                fail_key(key, e->line, "expected number, got '" + e->value + "'");
            if (v < lo || (lo_strict && v <= lo))
                fail_key(key, e->line, "value " + e->value + (lo_strict ? " must be > " : " must be >= ") +
                                           std::to_string(lo));
            out = v;
        }
    };

    const bool variant_set = raw.count("network.variant") != 0;
    (void)variant_set;
    get_string("network.variant", cfg.variant);
    if (cfg.variant != "full" && cfg.variant != "reduced" && cfg.variant != "baseline")
        fail_key("network.variant", raw.count("network.variant") ? raw["network.variant"].line : 0,
                 "must be full, reduced or baseline (got '" + cfg.variant + "')");
    const bool reduced = cfg.variant == "reduced";
    const bool baseline = cfg.variant == "baseline";

    // variant-conditional defaults, overridable by explicit keys
    if (reduced) cfg.phase_length = 600000;
    if (baseline) {
        cfg.latent_size = 128;
        cfg.progressive = false;
        cfg.n_critic = 5;
        cfg.drift = 0.0;
        cfg.adam_alpha = 0.0001;
        cfg.adam_beta2 = 0.9;
        cfg.minibatch_default = 64;
    }

    get_int("network.max_resolution", cfg.max_resolution, 4, 1024);
    if (!is_power_of_two(cfg.max_resolution))
        fail_key("network.max_resolution", raw["network.max_resolution"].line, "must be a power of two");
    get_int("network.latent_size", cfg.latent_size, 1, 1 << 20);
    get_int("network.channel_cap", cfg.channel_cap, 1, 4096);

    get_bool("schedule.progressive", cfg.progressive);
    get_u64("schedule.phase_length", cfg.phase_length, 1);
    get_u64("schedule.total_images", cfg.total_images, 0);
    get_int("schedule.minibatch_default", cfg.minibatch_default, 0, 65536);
    for (int r = 4; r <= 1024; r *= 2) {
        int v = 0;
        get_int("schedule.minibatch." + std::to_string(r), v, 1, 65536);
        if (v > 0) cfg.minibatch_overrides[r] = v;
    }

    get_string("loss.kind", cfg.loss_kind);
    if (cfg.loss_kind != "wgan-gp" && cfg.loss_kind != "lsgan")
        fail_key("loss.kind", raw["loss.kind"].line, "must be wgan-gp or lsgan (got '" + cfg.loss_kind + "')");
    get_double("loss.gamma", cfg.gamma, 0.0, true);
    get_double("loss.lambda", cfg.lambda, 0.0, false);
    get_double("loss.drift", cfg.drift, 0.0, false);
    get_int("loss.n_critic", cfg.n_critic, 1, 1000);

    get_double("optimizer.alpha", cfg.adam_alpha, 0.0, true);
    get_double("optimizer.beta1", cfg.adam_beta1, 0.0, false);
    get_double("optimizer.beta2", cfg.adam_beta2, 0.0, false);
    get_double("optimizer.epsilon", cfg.adam_epsilon, 0.0, true);
    get_double("optimizer.ema_decay", cfg.ema_decay, 0.0, false);
    if (cfg.adam_beta1 >= 1.0) fail_key("optimizer.beta1", raw["optimizer.beta1"].line, "must be < 1");
    if (cfg.adam_beta2 >= 1.0) fail_key("optimizer.beta2", raw["optimizer.beta2"].line, "must be < 1");
    if (cfg.ema_decay >= 1.0) fail_key("optimizer.ema_decay", raw["optimizer.ema_decay"].line, "must be < 1");

    get_int("metrics.images_per_set", cfg.swd_images_per_set, 1, 1 << 20);
    get_int("metrics.patches_per_image", cfg.swd_patches_per_image, 1, 1 << 16);
    get_int("metrics.projections", cfg.swd_projections, 1, 1 << 16);
    get_int("metrics.base_resolution", cfg.swd_base_resolution, 8, 1024);
    get_int("metrics.patch_size", cfg.swd_patch_size, 1, 63);
    if (cfg.swd_patch_size % 2 == 0)
        fail_key("metrics.patch_size", raw["metrics.patch_size"].line, "must be odd");
    get_u64("metrics.eval_interval", cfg.eval_interval, 0);
    get_int("metrics.eval_images", cfg.eval_images, 1, 1 << 20);

    get_string("dataset.path", cfg.dataset_path);
    get_int("dataset.synthetic_count", cfg.synthetic_count, 0, 1 << 24);
    get_u64("dataset.synthetic_seed", cfg.synthetic_seed, 0);
    get_bool("dataset.mirror_augment", cfg.mirror_augment);
    get_int("dataset.supersample", cfg.prep_supersample, 1, 1 << 14);
    get_int("dataset.resolution", cfg.prep_resolution, 1, 1 << 13);

    get_u64("io.checkpoint_interval", cfg.checkpoint_interval, 0);
    get_int("io.sample_count", cfg.sample_count, 1, 4096);

    for (const auto& [key, entry] : raw)
        if (!seen.count(key))
            raise("config: line " + std::to_string(entry.line) + ": unknown key '" + key + "'");

    if (cfg.total_images == 0) cfg.total_images = schedule_total_images(cfg.schedule_config());
    if (baseline && cfg.progressive)
        fail_key("schedule.progressive", raw["schedule.progressive"].line,
                 "the baseline variant has no progression hooks");
    return cfg;
}

inline std::string RunConfig::serialize() const {
    std::ostringstream os;
    os.precision(17);
    os << "dataset.mirror_augment = " << (mirror_augment ? "true" : "false") << "\n";
    if (!dataset_path.empty()) os << "dataset.path = " << dataset_path << "\n";
    os << "dataset.resolution = " << prep_resolution << "\n";
    os << "dataset.supersample = " << prep_supersample << "\n";
    os << "dataset.synthetic_count = " << synthetic_count << "\n";
    os << "dataset.synthetic_seed = " << synthetic_seed << "\n";
    os << "io.checkpoint_interval = " << checkpoint_interval << "\n";
    os << "io.sample_count = " << sample_count << "\n";
    os << "loss.drift = " << drift << "\n";
    os << "loss.gamma = " << gamma << "\n";
    os << "loss.kind = " << loss_kind << "\n";
    os << "loss.lambda = " << lambda << "\n";
    os << "loss.n_critic = " << n_critic << "\n";
    os << "metrics.base_resolution = " << swd_base_resolution << "\n";
    os << "metrics.eval_images = " << eval_images << "\n";
    os << "metrics.eval_interval = " << eval_interval << "\n";
    os << "metrics.images_per_set = " << swd_images_per_set << "\n";
    os << "metrics.patch_size = " << swd_patch_size << "\n";
    os << "metrics.patches_per_image = " << swd_patches_per_image << "\n";
    os << "metrics.projections = " << swd_projections << "\n";
    os << "network.channel_cap = " << channel_cap << "\n";
    os << "network.latent_size = " << latent_size << "\n";
    os << "network.max_resolution = " << max_resolution << "\n";
    os << "network.variant = " << variant << "\n";
    os << "optimizer.alpha = " << adam_alpha << "\n";
    os << "optimizer.beta1 = " << adam_beta1 << "\n";
    os << "optimizer.beta2 = " << adam_beta2 << "\n";
    os << "optimizer.ema_decay = " << ema_decay << "\n";
    os << "optimizer.epsilon = " << adam_epsilon << "\n";
    for (const auto& [r, v] : minibatch_overrides)
        os << "schedule.minibatch." << r << " = " << v << "\n";
    os << "schedule.minibatch_default = " << minibatch_default << "\n";
    os << "schedule.phase_length = " << phase_length << "\n";
    os << "schedule.progressive = " << (progressive ? "true" : "false") << "\n";
    os << "schedule.total_images = " << total_images << "\n";
    return os.str();
}

}  // namespace prograde
