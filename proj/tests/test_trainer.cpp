#include <doctest.h>

#include "test_support.hpp"

using namespace prograde;

namespace {

// Tiny configuration that still exercises growth: 4 -> 8, 24-image phases.
RunConfig tiny_config(const std::string& extra = "") {
    return parse_config(
        "network.variant = reduced\n"
        "network.max_resolution = 8\n"
        "network.latent_size = 8\n"
        "network.channel_cap = 8\n"
        "schedule.phase_length = 24\n"
        "schedule.minibatch_default = 4\n"
        "metrics.eval_interval = 0\n"
        "dataset.synthetic_count = 12\n"
        "dataset.synthetic_seed = 5\n" +
        extra);
}

std::map<std::string, Tensor<float>> snapshot_params(Trainer& t) {
    std::map<std::string, Tensor<float>> out;
    Checkpoint ck = t.make_checkpoint();
    out.insert(ck.g_params.begin(), ck.g_params.end());
    for (auto& [k, v] : ck.d_params) out.emplace("D/" + k, v);
    return out;
}

}  // namespace

TEST_CASE("training smoke: losses finite, growth at its boundary, counters per n_critic") {
    Trainer tr(tiny_config("loss.n_critic = 2\n"), 7);
    tr.load_dataset();

    std::vector<StepStats> history;
    TrainerCallbacks cb;
    cb.on_step = [&](const StepStats& st) {
        CHECK(std::isfinite(st.d_loss));
        CHECK(std::isfinite(st.g_loss));
        history.push_back(st);
    };
    tr.run(72, cb);  // phases: [0,24) 4x4 stab, [24,48) fade to 8, [48,72) 8 stab

    REQUIRE(!history.empty());
    for (const auto& st : history) {
        const ProgressionState ps = state_at(st.images_shown - 8, tiny_config().schedule_config());
        CHECK(st.resolution == ps.resolution);  // step began in this state
        CHECK(st.d_updates == 2 * st.g_updates);
    }
    bool saw_fade = false;
    for (const auto& st : history) saw_fade |= (st.alpha > 0.0 && st.alpha < 1.0);
    CHECK(saw_fade);
    CHECK(history.back().resolution == 8);
}

TEST_CASE("deterministic mode: equal seeds give bit-identical checkpoints") {
    Trainer a(tiny_config(), 11);
    Trainer b(tiny_config(), 11);
    a.load_dataset();
    b.load_dataset();
    a.run(48);
    b.run(48);
    CHECK(encode_checkpoint(a.make_checkpoint()) == encode_checkpoint(b.make_checkpoint()));

    Trainer c(tiny_config(), 12);
    c.load_dataset();
    c.run(48);
    CHECK(encode_checkpoint(c.make_checkpoint()) != encode_checkpoint(a.make_checkpoint()));
}

TEST_CASE("checkpoint resume reproduces the uninterrupted run bit-exactly") {
    Trainer full(tiny_config(), 13);
    full.load_dataset();
    full.run(32);  // past the growth boundary
    Checkpoint mid = full.make_checkpoint();
    full.step();
    auto expected = snapshot_params(full);

    Trainer resumed(tiny_config(), 13);
    resumed.load_dataset();
    resumed.restore(mid);
    resumed.step();
    auto got = snapshot_params(resumed);

    REQUIRE(expected.size() == got.size());
    for (auto& [name, t] : expected) CHECK(t.bit_equal(got.at(name)));
    CHECK(encode_checkpoint(full.make_checkpoint()) == encode_checkpoint(resumed.make_checkpoint()));
}

TEST_CASE("restore rejects a mismatched configuration") {
    Trainer a(tiny_config(), 17);
    a.load_dataset();
    a.run(8);
    Checkpoint ck = a.make_checkpoint();
    Trainer b(tiny_config("loss.gamma = 2\n"), 17);
    b.load_dataset();
    CHECK_THROWS_AS(b.restore(ck), Error);
}

TEST_CASE("EMA follows its recurrence and takes no gradient updates") {
    Trainer tr(tiny_config(), 19);
    tr.load_dataset();
    tr.step();
    Checkpoint c1 = tr.make_checkpoint();
    tr.step();
    Checkpoint c2 = tr.make_checkpoint();

    // ema_2 = decay*ema_1 + (1-decay)*param_2 for a parameter present in both.
    const std::string name = "g.b4.conv0.w";
    const auto& e1 = c1.ema_params.at(name);
    const auto& e2 = c2.ema_params.at(name);
    const auto& p2 = c2.g_params.at(name);
    for (std::int64_t i = 0; i < e1.numel(); ++i) {
        const float expect = 0.999f * e1.data()[i] + 0.001f * p2.data()[i];
        CHECK(e2.data()[i] == doctest::Approx(expect).epsilon(1e-6));
    }
}

TEST_CASE("ingested real batches stay in [-1,1] and mirroring flips about half") {
    RunConfig cfg = tiny_config("dataset.mirror_augment = true\n");
    Trainer tr(cfg, 23);
    tr.load_dataset();

    Tensor<float> batch = tr.next_real_batch(4, 8);
    for (std::int64_t i = 0; i < batch.numel(); ++i) {
        CHECK(batch.data()[i] >= -1.0f);
        CHECK(batch.data()[i] <= 1.0f);
    }

    // Compare against the unmirrored pipeline over many draws.
    RunConfig plain_cfg = tiny_config();
    Trainer plain(plain_cfg, 23);
    plain.load_dataset();
    const int draws = 400;
    Tensor<float> with = tr.next_real_batch(draws, 8);
    Tensor<float> without = plain.next_real_batch(draws, 8);
    int flipped = 0;
    const std::int64_t per = 3 * 8 * 8;
    for (int k = 0; k < draws; ++k) {
        bool same = true;
        for (std::int64_t i = 0; i < per && same; ++i)
            same = with.data()[k * per + i] == without.data()[k * per + i];
        if (!same) ++flipped;
    }
    CHECK(flipped > draws / 2 - 60);
    CHECK(flipped < draws / 2 + 60);
}

TEST_CASE("sampling uses EMA weights and is reproducible") {
    Trainer tr(tiny_config(), 29);
    tr.load_dataset();
    tr.run(16);
    auto s1 = tr.sample_ema_images(3, Rng(77));
    auto s2 = tr.sample_ema_images(3, Rng(77));
    REQUIRE(s1.size() == 3);
    for (std::size_t i = 0; i < s1.size(); ++i) CHECK(s1[i].bit_equal(s2[i]));
    for (auto& img : s1)
        for (std::int64_t i = 0; i < img.numel(); ++i) {
            CHECK(img.data()[i] <= 1.0f);
            CHECK(img.data()[i] >= -1.0f);
        }
}

TEST_CASE("lsgan training smoke with adaptive noise stays finite") {
    RunConfig cfg = tiny_config("loss.kind = lsgan\n");
    Trainer tr(cfg, 31);
    tr.load_dataset();
    TrainerCallbacks cb;
    cb.on_step = [&](const StepStats& st) {
        CHECK(std::isfinite(st.d_loss));
        CHECK(std::isfinite(st.g_loss));
    };
    tr.run(32, cb);
}

TEST_CASE("baseline variant trains a fixed-resolution pair") {
    RunConfig cfg = parse_config(
        "network.variant = baseline\n"
        "network.max_resolution = 8\n"
        "network.latent_size = 16\n"
        "network.channel_cap = 8\n"
        "schedule.minibatch_default = 4\n"
        "schedule.total_images = 40\n"
        "schedule.phase_length = 1000\n"
        "metrics.eval_interval = 0\n"
        "dataset.synthetic_count = 12\n");
    CHECK(cfg.n_critic == 5);
    Trainer tr(cfg, 37);
    tr.load_dataset();
    tr.run();
    CHECK(tr.generator().resolution() == 8);
    CHECK(tr.stats().d_updates == 5 * tr.stats().g_updates);
}
