// prograde command-line interface: training, evaluation and dataset
// preparation subcommands. Every randomized subcommand takes --seed and is
// reproducible under it. Exit codes: 0 success, 1 usage, 2 runtime error.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "prograde/prograde.hpp"

namespace fs = std::filesystem;
using namespace prograde;

namespace {

std::string read_text_file(const std::string& path) {
    std::ifstream f(path);
    check(f.good(), "io: cannot open " + path);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

RunConfig config_from_file(const std::string& path) {
    return parse_config(path.empty() ? "" : read_text_file(path));
}

Generator<float> generator_from_checkpoint(const Checkpoint& ck, RunConfig* cfg_out = nullptr) {
    RunConfig cfg = parse_config(ck.config_text);
    Rng scratch(0);
    Generator<float> g = Generator<float>::build(cfg.network_spec(), scratch, ck.resolution);
    auto pm = param_map<float>(g);
    for (auto& [name, ptr] : pm) {
        auto it = ck.ema_params.find(name);
        if (it == ck.ema_params.end()) it = ck.g_params.find(name);
        check(it != ck.g_params.end() || ck.ema_params.count(name), "checkpoint: missing parameter " + name);
        check(it->second.shape() == ptr->shape(), "checkpoint: shape mismatch for " + name);
        *ptr = it->second.clone();
    }
    if (cfg_out) *cfg_out = cfg;
    return g;
}

std::vector<ImageU8> render_latents(Generator<float>& g, const Tensor<float>& latents, double alpha) {
    std::vector<ImageU8> out;
    const int count = latents.shape()[0];
    const int dim = latents.shape()[1];
    ForwardOptions opt;
    opt.alpha = alpha;
    opt.training = false;
    for (int start = 0; start < count; start += 32) {
        const int n = std::min(32, count - start);
        std::vector<float> chunk(latents.data() + static_cast<std::int64_t>(start) * dim,
                                 latents.data() + static_cast<std::int64_t>(start + n) * dim);
        Tape<float> tp;
        Binding<float> b(tp);
        Var imgs = g.forward(b, tp.constant(Tensor<float>::from({n, dim}, std::move(chunk))), opt);
        const Tensor<float>& v = tp.value(imgs);
        const int r = v.shape()[2];
        for (int i = 0; i < n; ++i) {
            std::vector<float> px(v.data() + static_cast<std::int64_t>(i) * 3 * r * r,
                                  v.data() + static_cast<std::int64_t>(i + 1) * 3 * r * r);
            out.push_back(from_tensor_pm1(Tensor<float>::from({3, r, r}, std::move(px))));
        }
    }
    return out;
}

int cmd_train(const std::string& config_path, const std::string& out_dir, const std::string& resume,
              bool deterministic, std::uint64_t seed) {
    (void)deterministic;  // runs are bit-reproducible for a fixed seed either way
    RunConfig cfg = config_from_file(config_path);
    Trainer trainer(cfg, seed, out_dir);
    trainer.load_dataset();
    if (!resume.empty()) trainer.load(resume);
    std::uint64_t last_print = 0;
    TrainerCallbacks cb;
    cb.on_step = [&](const StepStats& st) {
        if (st.images_shown - last_print >= 4096 || st.images_shown >= cfg.total_images) {
            last_print = st.images_shown;
            std::cout << "images=" << st.images_shown << " res=" << st.resolution << " alpha=" << st.alpha
                      << " d_loss=" << st.d_loss << " g_loss=" << st.g_loss << "\n";
        }
    };
    trainer.run(0, cb);
    std::cout << "done: " << trainer.images_shown() << " images shown, checkpoint at " << out_dir
              << "/final.ckpt\n";
    return 0;
}

int cmd_eval_swd(const std::string& real_dir, const std::string& fake_dir, const std::string& config_path,
                 std::uint64_t seed) {
    RunConfig cfg = config_from_file(config_path);
    auto load = [](const std::string& dir) {
        std::vector<Tensor<float>> out;
        for (auto& [name, img] : load_image_dir(dir)) out.push_back(to_tensor_pm1<float>(img));
        return out;
    };
    SwdReport rep = swd_report(load(real_dir), load(fake_dir), cfg.swd_config(), Rng(seed));
    std::cout << "level,swd_x1e3\n";
    for (std::size_t i = 0; i < rep.level_resolutions.size(); ++i)
        std::cout << rep.level_resolutions[i] << "," << rep.level_swd_x1e3[i] << "\n";
    std::cout << "average," << rep.average_x1e3 << "\n";
    return 0;
}

int cmd_mode_test(const std::string& labels_path, int modes) {
    std::ifstream f(labels_path);
    check(f.good(), "io: cannot open " + labels_path);
    std::vector<int> labels;
    std::string line;
    while (std::getline(f, line)) {
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) {
            field = detail_config::trim(field);
            if (field.empty() || !(std::isdigit(field[0]) || field[0] == '-')) continue;
            labels.push_back(std::stoi(field));
        }
    }
    ModeCoverage mc = mode_coverage(labels, modes);
    std::cout << "modes,kl\n" << mc.modes_covered << "," << mc.kl_divergence << "\n";
    return 0;
}

int cmd_prep_dataset(const std::string& images_dir, const std::string& landmarks_path,
                     const std::string& out_dir, int top_k, const std::string& config_path) {
    RunConfig cfg = config_from_file(config_path);
    auto landmarks = parse_landmarks_csv(landmarks_path);
    check(!landmarks.empty(), "prep-dataset: no landmark rows in " + landmarks_path);
    fs::create_directories(out_dir);

    std::vector<std::string> names;
    std::vector<double> scores;
    std::vector<ImageU8> crops;
    for (const auto& [name, lm] : landmarks) {
        const std::string path = images_dir + "/" + name;
        check(fs::exists(path), "prep-dataset: image listed in landmarks not found: " + path);
        ImageU8 raw = read_image(path);
        Tensor<double> src = to_tensor01(raw);
        CropFrame frame = crop_frame_from_landmarks(lm);

        // Margin big enough to cover the rotated square, then re-center the
        // frame in the extended image.
        double outreach = 0;
        for (int sx : {-1, 1})
            for (int sy : {-1, 1}) {
                const Vec2 corner = frame.center + frame.axis_x * (sx * frame.size / 2) +
                                    frame.axis_y * (sy * frame.size / 2);
                outreach = std::max({outreach, -corner.x, -corner.y, corner.x - (raw.width - 1),
                                     corner.y - (raw.height - 1)});
            }
        const int margin = outreach > 0 ? static_cast<int>(std::ceil(outreach)) + 2 : 0;
        Tensor<double> extended = extend_borders(src, margin);
        CropFrame shifted = frame;
        shifted.center = frame.center + Vec2{static_cast<double>(margin), static_cast<double>(margin)};
        Tensor<double> crop = render_crop(extended, shifted, cfg.prep_supersample, cfg.prep_resolution);
        ImageU8 out_img = from_tensor01(crop);
        names.push_back(name);
        scores.push_back(quality_score(out_img));
        crops.push_back(std::move(out_img));
    }

    check(top_k <= static_cast<int>(names.size()),
          "prep-dataset: top-k " + std::to_string(top_k) + " exceeds image count " + std::to_string(names.size()));
    const std::vector<int> selected = select_top_k(scores, top_k);
    std::vector<char> keep(names.size(), 0);
    for (int i : selected) keep[i] = 1;

    std::ofstream manifest(out_dir + "/manifest.csv");
    manifest << "filename,score,selected\n";
    for (std::size_t i = 0; i < names.size(); ++i) {
        std::string base = names[i];
        const std::size_t dot = base.find_last_of('.');
        if (dot != std::string::npos) base = base.substr(0, dot);
        if (keep[i]) write_image(out_dir + "/" + base + ".png", crops[i]);
        manifest << names[i] << "," << scores[i] << "," << (keep[i] ? 1 : 0) << "\n";
    }
    std::cout << "prepared " << selected.size() << " of " << names.size() << " images into " << out_dir << "\n";
    return 0;
}

int cmd_latent_walk(int frames, double sigma, double fps, std::uint64_t seed, const std::string& checkpoint,
                    const std::string& out_dir, const std::string& csv_path) {
    check(!checkpoint.empty() || !csv_path.empty(), "latent-walk: need --checkpoint with --out, or --csv");
    LatentWalkConfig cfg;
    cfg.sigma_frames = sigma;
    cfg.frame_rate = fps;

    if (!checkpoint.empty()) {
        Checkpoint ck = load_checkpoint(checkpoint);
        RunConfig rc;
        Generator<float> g = generator_from_checkpoint(ck, &rc);
        cfg.latent_size = rc.latent_size;
        Rng rng(seed);
        Tensor<float> latents = latent_walk<float>(frames, cfg, rng);
        check(!out_dir.empty(), "latent-walk: --out required with --checkpoint");
        fs::create_directories(out_dir);
        auto imgs = render_latents(g, latents, ck.alpha);
        for (int i = 0; i < frames; ++i) {
            char name[32];
            std::snprintf(name, sizeof(name), "frame_%05d.png", i);
            write_image(out_dir + "/" + name, imgs[i]);
        }
        std::cout << "wrote " << frames << " frames to " << out_dir << "\n";
        return 0;
    }

    Rng rng(seed);
    Tensor<float> latents = latent_walk<float>(frames, cfg, rng);
    std::ofstream f(csv_path);
    check(f.good(), "io: cannot write " + csv_path);
    f.precision(9);
    for (int i = 0; i < frames; ++i) {
        for (int d = 0; d < cfg.latent_size; ++d) f << (d ? "," : "") << latents.at(i, d);
        f << "\n";
    }
    std::cout << "wrote " << frames << " latent rows to " << csv_path << "\n";
    return 0;
}

int cmd_gen_samples(const std::string& checkpoint, int count, std::uint64_t seed, const std::string& out_dir) {
    Checkpoint ck = load_checkpoint(checkpoint);
    RunConfig rc;
    Generator<float> g = generator_from_checkpoint(ck, &rc);
    Rng rng = Rng(seed).substream("gen-samples");
    Tensor<float> latents =
        sample_latents<float>(count, rc.latent_size, rng, rc.variant != "baseline");
    auto imgs = render_latents(g, latents, ck.alpha);
    fs::create_directories(out_dir);
    for (int i = 0; i < count; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "sample_%04d.png", i);
        write_image(out_dir + "/" + name, imgs[i]);
    }
    write_image(out_dir + "/grid.png", image_grid(imgs));
    std::cout << "wrote " << count << " samples and grid.png to " << out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    if (const char* env = std::getenv("PROGRADE_THREADS")) {
        const int v = std::atoi(env);
        if (v >= 1) set_max_threads(v);
    }

    CLI::App app{"prograde: progressive GAN training mechanisms, SWD evaluation and dataset tools"};
    app.require_subcommand(1);

    std::string config_path, out_dir, resume, real_dir, fake_dir, labels_path, images_dir, landmarks_path,
        checkpoint, csv_path;
    std::uint64_t seed = 0;
    bool deterministic = false;
    int modes = 1000, top_k = 0, count = 16, frames = 60;
    double sigma = 45.0, fps = 60.0;

    auto* train = app.add_subcommand("train", "run the training loop");
    train->add_option("--config", config_path, "run configuration file")->required();
    train->add_option("--out", out_dir, "output directory")->required();
    train->add_option("--resume", resume, "checkpoint to resume from");
    train->add_flag("--deterministic", deterministic, "assert bit-reproducible mode");
    train->add_option("--seed", seed, "master seed");

    auto* swd = app.add_subcommand("eval-swd", "sliced Wasserstein distance between two image sets");
    swd->add_option("--real", real_dir, "directory of real images")->required();
    swd->add_option("--fake", fake_dir, "directory of generated images")->required();
    swd->add_option("--config", config_path, "configuration file");
    swd->add_option("--seed", seed, "projection seed");

    auto* mode = app.add_subcommand("mode-test", "mode coverage and KL(histogram || uniform)");
    mode->add_option("--labels", labels_path, "CSV of integer labels")->required();
    mode->add_option("--modes", modes, "total number of modes (default 1000)");

    auto* prep = app.add_subcommand("prep-dataset", "landmark-driven crop, score and selection");
    prep->add_option("--images", images_dir, "input image directory")->required();
    prep->add_option("--landmarks", landmarks_path, "landmark CSV")->required();
    prep->add_option("--out", out_dir, "output directory")->required();
    prep->add_option("--top-k", top_k, "number of images to keep")->required();
    prep->add_option("--config", config_path, "configuration file");

    auto* walk = app.add_subcommand("latent-walk", "temporally smoothed latent interpolation");
    walk->add_option("--frames", frames, "frame count");
    walk->add_option("--sigma", sigma, "Gaussian blur width in frames");
    walk->add_option("--fps", fps, "frame rate the sigma refers to");
    walk->add_option("--seed", seed, "latent seed");
    walk->add_option("--checkpoint", checkpoint, "checkpoint to render frames with");
    walk->add_option("--out", out_dir, "frame output directory");
    walk->add_option("--csv", csv_path, "write latent vectors as CSV instead");

    auto* gen = app.add_subcommand("gen-samples", "sample images from a checkpoint (EMA weights)");
    gen->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
    gen->add_option("--count", count, "number of samples");
    gen->add_option("--seed", seed, "latent seed");
    gen->add_option("--out", out_dir, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (*train) return cmd_train(config_path, out_dir, resume, deterministic, seed);
        if (*swd) return cmd_eval_swd(real_dir, fake_dir, config_path, seed);
        if (*mode) return cmd_mode_test(labels_path, modes);
        if (*prep) return cmd_prep_dataset(images_dir, landmarks_path, out_dir, top_k, config_path);
        if (*walk) return cmd_latent_walk(frames, sigma, fps, seed, checkpoint, out_dir, csv_path);
        if (*gen) return cmd_gen_samples(checkpoint, count, seed, out_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
