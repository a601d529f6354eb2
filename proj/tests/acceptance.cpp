// Acceptance suite: one pass/fail line per criterion, nonzero exit if any
// fail. Tolerances and thresholds are pinned in code. Criterion 9 runs the
// end-to-end progressive training smoke and is by far the longest part.

#include <chrono>
#include <cstring>
#include <functional>
#include <iostream>
#include <sstream>

#include "prograde/prograde.hpp"
#include "test_support.hpp"

using namespace prograde;

namespace {

struct Check {
    bool ok = true;
    std::ostringstream detail;

    void expect(bool cond, const std::string& what) {
        if (!cond) {
            ok = false;
            detail << (detail.str().empty() ? "" : "; ") << what;
        }
    }
    void expect_near(double got, double want, double tol, const std::string& what) {
        expect(std::abs(got - want) <= tol,
               what + " got " + std::to_string(got) + " want " + std::to_string(want) + " tol " + std::to_string(tol));
    }
    void expect_lt(double got, double bound, const std::string& what) {
        expect(got < bound, what + " got " + std::to_string(got) + " bound " + std::to_string(bound));
    }
};

double now_seconds() {
    static const auto t0 = std::chrono::steady_clock::now();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness of every primitive, 10 random points each,
//    relative error < 1e-5 in 64-bit, < 2 min.
// ---------------------------------------------------------------------------
void criterion_1(Check& c) {
    const double t_start = now_seconds();
    auto fd = [&](const char* name, auto f, std::vector<Shape> shapes, std::uint64_t seed) {
        for (int point = 0; point < 10; ++point) {
            Rng rng(seed + point);
            std::vector<Tensor<double>> pts;
            for (const Shape& s : shapes) pts.push_back(Tensor<double>::normal(s, rng));
            const double err = gradient_check<double>(f, pts, 1e-4);
            c.expect_lt(err, 1e-5, std::string(name) + " point " + std::to_string(point));
        }
    };

    fd("conv1x1", [](Tape<double>& tp, std::span<const Var> x) { return tp.sum_all(tp.square(tp.conv2d(x[0], x[1], 0))); },
       {{1, 3, 4, 4}, {2, 3, 1, 1}}, 1000);
    fd("conv3x3", [](Tape<double>& tp, std::span<const Var> x) { return tp.sum_all(tp.square(tp.conv2d(x[0], x[1], 1))); },
       {{1, 2, 4, 4}, {2, 2, 3, 3}}, 2000);
    fd("conv4x4", [](Tape<double>& tp, std::span<const Var> x) { return tp.sum_all(tp.square(tp.conv2d(x[0], x[1], 0))); },
       {{1, 2, 4, 4}, {2, 2, 4, 4}}, 3000);
    // leaky_relu is checked away from its kink: a sample inside the
    // finite-difference radius of 0 would straddle the slope change.
    for (int point = 0; point < 10; ++point) {
        Rng rng(4000 + point);
        Tensor<double> x = Tensor<double>::normal({2, 3, 3, 3}, rng);
        for (auto& v : x.raw())
            if (std::abs(v) < 0.05) v = v < 0 ? v - 0.05 : v + 0.05;
        const double err = gradient_check<double>(
            [](Tape<double>& tp, std::span<const Var> xs) {
                return tp.sum_all(tp.square(tp.leaky_relu(xs[0], 0.2)));
            },
            {x}, 1e-4);
        c.expect_lt(err, 1e-5, std::string("leaky_relu point ") + std::to_string(point));
    }
    fd("upsample2x", [](Tape<double>& tp, std::span<const Var> x) { return tp.sum_all(tp.square(tp.upsample2x(x[0]))); },
       {{1, 2, 3, 3}}, 5000);
    fd("avgpool2x", [](Tape<double>& tp, std::span<const Var> x) { return tp.sum_all(tp.square(tp.avgpool2x(x[0]))); },
       {{1, 2, 4, 4}}, 6000);
    // pixelnorm's squared norm is constant by construction; weight the
    // output so its gradient is non-trivial.
    Rng probe_rng(70001);
    const Tensor<double> probe = Tensor<double>::normal({1, 4, 2, 2}, probe_rng);
    fd("pixelnorm",
       [&](Tape<double>& tp, std::span<const Var> x) {
           return tp.sum_all(tp.mul(pixelnorm(tp, x[0]), tp.constant(probe.clone())));
       },
       {{1, 4, 2, 2}}, 7000);
    fd("minibatch_stddev",
       [](Tape<double>& tp, std::span<const Var> x) { return tp.sum_all(tp.square(minibatch_stddev(tp, x[0]))); },
       {{3, 2, 2, 2}}, 8000);
    fd("equalized_scaling",
       [](Tape<double>& tp, std::span<const Var> x) {
           const double scale = std::sqrt(2.0 / 18.0);
           return tp.sum_all(tp.square(tp.conv2d(x[0], tp.scale(x[1], scale), 1)));
       },
       {{1, 2, 3, 3}, {2, 2, 3, 3}}, 9000);
    fd("fade_blend",
       [](Tape<double>& tp, std::span<const Var> x) {
           return tp.sum_all(tp.square(fade_blend(tp, x[0], x[1], {0.37})));
       },
       {{1, 2, 3, 3}, {1, 2, 3, 3}}, 10000);

    const double elapsed = now_seconds() - t_start;
    c.expect_lt(elapsed, 120.0, "criterion-1 runtime seconds");
    c.detail << (c.detail.str().empty() ? "" : "; ") << "runtime " << elapsed << "s";
}

// ---------------------------------------------------------------------------
// 2. Second-order: penalty derivative vs finite differences (<1e-4) and the
//    linear-critic closed form (w=(3,4), gamma=1 -> 16, within 1e-6).
// ---------------------------------------------------------------------------
void criterion_2(Check& c) {
    Rng rng(20001);
    Tensor<double> real = Tensor<double>::normal({2, 2, 4, 4}, rng);
    Tensor<double> fake = Tensor<double>::normal({2, 2, 4, 4}, rng);
    LossConfig cfg;
    cfg.penalty_weight = 1.0;

    auto penalty_of = [&](Tape<double>& tp, std::span<const Var> ws) {
        auto critic = [&](Var images) {
            Var h = tp.leaky_relu(tp.conv2d(images, ws[0], 1), 0.2);
            return tp.reshape(tp.conv2d(h, ws[1], 0), Shape{tp.shape(images)[0], 1});
        };
        Rng gp(17);
        return gradient_penalty(tp, critic, real, fake, cfg, gp);
    };
    std::vector<Tensor<double>> ws{Tensor<double>::normal({3, 2, 3, 3}, rng),
                                   Tensor<double>::normal({1, 3, 4, 4}, rng)};
    c.expect_lt(gradient_check<double>(penalty_of, ws, 1e-4), 1e-4, "second-order FD error");

    // Closed form.
    Tape<double> tp;
    auto linear = [&](Var images) {
        const int b = tp.shape(images)[0];
        Var flat = tp.reshape(images, Shape{b, 2});
        Var w = tp.constant(Tensor<double>::from({1, 2}, {3.0, 4.0}));
        return tp.reshape(tp.sum_axes(tp.mul(flat, w), 0b1000u), Shape{b, 1});
    };
    Rng gp(23);
    Tensor<double> r2 = Tensor<double>::normal({4, 2, 1, 1}, rng);
    Tensor<double> f2 = Tensor<double>::normal({4, 2, 1, 1}, rng);
    const double pen = tp.value(gradient_penalty(tp, linear, r2, f2, cfg, gp)).scalar();
    c.expect_near(pen, 16.0, 1e-6, "linear critic closed form");
}

// ---------------------------------------------------------------------------
// 3. Mechanism invariants.
// ---------------------------------------------------------------------------
void criterion_3(Check& c) {
    Rng rng(30001);

    {  // pixelnorm unit mean square and scale invariance
        Tape<double> tp;
        Var x = tp.leaf(Tensor<double>::normal({2, 8, 3, 3}, rng));
        const Tensor<double>& n = tp.value(pixelnorm(tp, x));
        for (int b = 0; b < 2; ++b)
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) {
                    double ms = 0;
                    for (int ch = 0; ch < 8; ++ch) ms += n.at(b, ch, i, j) * n.at(b, ch, i, j);
                    c.expect_near(ms / 8, 1.0, 1e-6, "pixelnorm mean square");
                }
        const Tensor<double>& scaled = tp.value(pixelnorm(tp, tp.scale(x, 11.0)));
        c.expect_lt(max_abs_diff(n, scaled), 1e-6, "pixelnorm scale invariance");
    }
    {  // minibatch stddev: zero map on constant batch, 1.0 on {0,2}
        Tape<double> tp;
        std::vector<double> v;
        Tensor<double> one = Tensor<double>::full({1, 2, 2, 2}, 0.42);
        for (int b = 0; b < 3; ++b) v.insert(v.end(), one.values().begin(), one.values().end());
        const Tensor<double>& y = tp.value(minibatch_stddev(tp, tp.leaf(Tensor<double>::from({3, 2, 2, 2}, std::move(v)))));
        for (int b = 0; b < 3; ++b)
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j)
                    c.expect(y.at(b, 2, i, j) == 0.0, "stddev map not exactly zero on constant batch");

        const Tensor<double>& z =
            tp.value(minibatch_stddev(tp, tp.leaf(Tensor<double>::from({2, 1, 1, 1}, {0.0, 2.0}))));
        c.expect(z.at(0, 1, 0, 0) == 1.0, "stddev {0,2} map must be exactly 1.0");
    }
    {  // equalized forward equals the pre-scaled control bit-exactly
        EqualizedConv<float> l = EqualizedConv<float>::make("t", 6, 4, 3, 1, rng, true);
        Tensor<float> pre = l.w.clone();
        for (auto& w : pre.raw()) w *= l.runtime_scale;
        Tape<float> tp;
        Binding<float> bind(tp);
        Rng xr(30007);
        Tensor<float> x = Tensor<float>::normal({2, 4, 5, 5}, xr);
        const Tensor<float>& a = tp.value(l.forward(bind, tp.constant(x)));
        const Tensor<float>& b =
            tp.value(bias_add(tp, tp.conv2d(tp.constant(x), tp.constant(pre), 1), tp.constant(l.b)));
        c.expect(a.bit_equal(b), "equalized forward differs from pre-scaled control");
    }
    {  // fade endpoints
        Tape<double> tp;
        Tensor<double> av = Tensor<double>::normal({1, 3, 4, 4}, rng);
        Tensor<double> bv = Tensor<double>::normal({1, 3, 4, 4}, rng);
        Var a = tp.constant(av), b = tp.constant(bv);
        c.expect(tp.value(fade_blend(tp, a, b, {0.0})).bit_equal(av), "fade alpha=0 not bit-exact");
        c.expect(tp.value(fade_blend(tp, a, b, {1.0})).bit_equal(bv), "fade alpha=1 not bit-exact");
    }
}

// ---------------------------------------------------------------------------
// 4. Schedule table, reduced variant, minibatch map.
// ---------------------------------------------------------------------------
void criterion_4(Check& c) {
    ScheduleConfig full;
    full.phase_length = 800000;
    full.max_resolution = 1024;
    for (std::uint64_t p = 0; p * 800000 <= 8000000; ++p) {
        const std::uint64_t b = p * 800000;
        for (std::uint64_t probe : {b, b + 1, b == 0 ? b : b - 1}) {
            const ProgressionState st = state_at(probe, full);
            const std::uint64_t pi = probe / 800000;
            const int want_res = pi == 0 ? 4 : 4 << ((pi + 1) / 2);
            c.expect(st.resolution == want_res,
                     "resolution at " + std::to_string(probe) + " = " + std::to_string(st.resolution));
            const bool want_fade = pi % 2 == 1;
            c.expect((st.phase == Phase::kFade) == want_fade, "phase at " + std::to_string(probe));
            if (want_fade)
                c.expect_near(st.alpha, static_cast<double>(probe - pi * 800000) / 800000.0, 1e-12,
                              "alpha at " + std::to_string(probe));
            else
                c.expect(st.alpha == 1.0, "alpha at stabilize " + std::to_string(probe));
        }
    }

    ScheduleConfig reduced = full;
    reduced.phase_length = 600000;
    const ProgressionState r = state_at(900000, reduced);
    c.expect(r.resolution == 8 && r.phase == Phase::kFade, "reduced variant state at 900k");
    c.expect_near(r.alpha, 0.5, 1e-12, "reduced variant alpha at 900k");

    c.expect(minibatch_size_for(4) == 16 && minibatch_size_for(128) == 16, "minibatch 4..128");
    c.expect(minibatch_size_for(256) == 14, "minibatch 256");
    c.expect(minibatch_size_for(512) == 6, "minibatch 512");
    c.expect(minibatch_size_for(1024) == 3, "minibatch 1024");
}

// ---------------------------------------------------------------------------
// 5. Growth consistency at reduced capacity.
// ---------------------------------------------------------------------------
void criterion_5(Check& c) {
    NetworkSpec spec;
    spec.variant = Variant::kReduced;
    spec.max_resolution = 16;
    spec.latent_size = 512;

    Rng rng(50001);
    Generator<float> grown = Generator<float>::build(spec, rng, 4);
    auto before = param_map<float>(grown);
    std::map<std::string, Tensor<float>> snapshot;
    for (auto& [name, ptr] : before) snapshot.emplace(name, ptr->clone());
    grown.grow(rng);
    grown.grow(rng);
    for (auto& [name, t] : snapshot)
        c.expect(param_map<float>(grown).at(name)->bit_equal(t), "parameter " + name + " not carried bit-exactly");

    Rng scratch(1);
    Generator<float> direct = Generator<float>::build(spec, scratch, 16);
    auto dst = param_map<float>(direct);
    auto src = param_map<float>(grown);
    c.expect(dst.size() == src.size(), "parameter sets differ between grown and direct");
    for (auto& [name, ptr] : dst) *ptr = src.at(name)->clone();

    Rng lrng(50003);
    Tensor<float> lat = sample_latents<float>(2, 512, lrng);
    Tape<float> ta, tb;
    Binding<float> ba(ta), bb(tb);
    const Tensor<float>& ia = ta.value(grown.forward(ba, ta.constant(lat), {}));
    const Tensor<float>& ib = tb.value(direct.forward(bb, tb.constant(lat), {}));
    c.expect_lt(max_abs_diff(ia, ib), 1e-6, "grown vs direct forward differ");
}

// ---------------------------------------------------------------------------
// 6. SWD pipeline, including the desk-config timing bound.
// ---------------------------------------------------------------------------
void criterion_6(Check& c) {
    const double t_start = now_seconds();
    Rng rng(60001);
    for (int r : {16, 32, 64, 128, 256}) {
        Tensor<double> img = Tensor<double>::normal({3, r, r}, rng);
        c.expect_lt(max_abs_diff(laplacian_reconstruct(laplacian_pyramid(img, 16)), img), 1e-6,
                    "pyramid reconstruction at " + std::to_string(r));
    }

    {  // SWD(A,A) = 0 and the exact 1D oracle
        auto imgs = make_synthetic_shapes(8, 16, 3);
        std::vector<Tensor<float>> set;
        for (auto& im : imgs) set.push_back(to_tensor_pm1<float>(im));
        Rng prng(5);
        PatchSet a = extract_descriptors(set, 32, 7, prng);
        c.expect(sliced_wasserstein(a, a, 16, Rng(9)) == 0.0, "SWD(A,A) != 0");

        PatchSet u, v;
        u.rows = v.rows = 2;
        u.dim = v.dim = 1;
        u.channels = v.channels = 1;
        u.data = {0.0f, 1.0f};
        v.data = {1.0f, 2.0f};
        c.expect_near(sliced_wasserstein(u, v, 4, Rng(2)), 1.0, 1e-12, "1D sorted-matching oracle");
    }
    {  // mean-shift monotonicity
        Rng base_rng(60007);
        std::vector<Tensor<float>> base;
        for (int i = 0; i < 34; ++i) base.push_back(Tensor<float>::normal({3, 16, 16}, base_rng));
        Rng pr(13);
        PatchSet a = extract_descriptors(base, 128, 7, pr);  // 4352 points
        auto shifted = [&](float delta) {
            std::vector<Tensor<float>> imgs;
            for (const auto& img : base) {
                Tensor<float> t = img.clone();
                for (auto& x : t.raw()) x += delta;
                imgs.push_back(std::move(t));
            }
            Rng pr2(13);
            return extract_descriptors(imgs, 128, 7, pr2);
        };
        const double d05 = sliced_wasserstein(a, shifted(0.5f), 64, Rng(7));
        const double d10 = sliced_wasserstein(a, shifted(1.0f), 64, Rng(7));
        const double d20 = sliced_wasserstein(a, shifted(2.0f), 64, Rng(7));
        c.expect(0 < d05 && d05 < d10 && d10 < d20, "mean-shift monotonicity");
    }
    {  // projection-count concentration, 512 vs 32
        Rng r1(60011);
        std::vector<Tensor<float>> xa, xb;
        for (int i = 0; i < 16; ++i) xa.push_back(Tensor<float>::normal({3, 16, 16}, r1));
        for (int i = 0; i < 16; ++i) {
            Tensor<float> t = Tensor<float>::normal({3, 16, 16}, r1);
            for (auto& x : t.raw()) x += 0.35f;
            xb.push_back(std::move(t));
        }
        Rng pa(17), pb(19);
        PatchSet a = extract_descriptors(xa, 64, 7, pa);
        PatchSet b = extract_descriptors(xb, 64, 7, pb);
        auto spread = [&](int projections) {
            std::vector<double> vals;
            for (std::uint64_t s = 0; s < 12; ++s)
                vals.push_back(sliced_wasserstein(a, b, projections, Rng(4000 + s)));
            double mean = 0;
            for (double v : vals) mean += v;
            mean /= vals.size();
            double var = 0;
            for (double v : vals) var += (v - mean) * (v - mean);
            return std::sqrt(var / vals.size());
        };
        c.expect(spread(512) < spread(32), "projection concentration 512 vs 32");
    }
    {  // desk-config end-to-end report: 1024 images, 128 projections
        auto real_u8 = make_synthetic_shapes(1024, 64, 21);
        auto fake_u8 = make_synthetic_shapes(1024, 64, 22);
        std::vector<Tensor<float>> real, fake;
        for (auto& im : real_u8) real.push_back(to_tensor_pm1<float>(im));
        for (auto& im : fake_u8) fake.push_back(to_tensor_pm1<float>(im));
        SwdConfig cfg;  // 1024 images, 128 patches, 128 projections, base 16
        SwdReport rep = swd_report(real, fake, cfg, Rng(23));
        c.expect(rep.level_resolutions == std::vector<int>{16, 32, 64}, "desk report levels");
        c.expect(rep.average_x1e3 > 0, "desk report average positive");
    }
    const double elapsed = now_seconds() - t_start;
    c.expect_lt(elapsed, 300.0, "criterion-6 runtime seconds");
    c.detail << (c.detail.str().empty() ? "" : "; ") << "runtime " << elapsed << "s";
}

// ---------------------------------------------------------------------------
// 7. Mode test exact values.
// ---------------------------------------------------------------------------
void criterion_7(Check& c) {
    std::vector<int> uniform;
    for (int i = 0; i < 1000; ++i)
        for (int k = 0; k < 4; ++k) uniform.push_back(i);
    ModeCoverage u = mode_coverage(uniform);
    c.expect(u.modes_covered == 1000 && std::abs(u.kl_divergence) < 1e-12, "uniform KL");

    ModeCoverage s = mode_coverage(std::vector<int>(25600, 7));
    c.expect_near(s.kl_divergence, std::log(1000.0), 1e-9, "single-bin KL");

    std::vector<int> two;
    for (int k = 0; k < 12800; ++k) {
        two.push_back(1);
        two.push_back(999);
    }
    c.expect_near(mode_coverage(two).kl_divergence, std::log(500.0), 1e-9, "two-bin KL");
}

// ---------------------------------------------------------------------------
// 8. Dataset geometry and quality ordinals.
// ---------------------------------------------------------------------------
void criterion_8(Check& c) {
    {  // symmetric-face example, exact
        CropFrame f = crop_frame_from_landmarks({{-1, 0}, {1, 0}, {-1, 2}, {1, 2}});
        c.expect(f.center.x == 0.0 && std::abs(f.center.y - 0.2) < 1e-15, "example center");
        c.expect(f.size == 8.0, "example size");
        c.expect(f.axis_x.x == 1.0 && f.axis_x.y == 0.0, "example x axis");
        c.expect(f.axis_y.x == 0.0 && f.axis_y.y == -1.0, "example y axis");
    }
    Rng rng(80001);
    for (int t = 0; t < 100; ++t) {  // equivariance and homogeneity
        Landmarks lm{{rng.normal(), rng.normal()},
                     {rng.normal() + 3, rng.normal()},
                     {rng.normal(), rng.normal() + 3},
                     {rng.normal() + 3, rng.normal() + 3}};
        CropFrame base = crop_frame_from_landmarks(lm);
        const double theta = rng.uniform() * 6.283185307179586;
        const double cs = std::cos(theta), sn = std::sin(theta);
        auto rot = [&](Vec2 v) { return Vec2{v.x * cs - v.y * sn, v.x * sn + v.y * cs}; };
        CropFrame r = crop_frame_from_landmarks({rot(lm.e0), rot(lm.e1), rot(lm.m0), rot(lm.m1)});
        c.expect(std::abs(r.size - base.size) < 1e-9, "rotation leaves size");
        const Vec2 ec = rot(base.center), ex = rot(base.axis_x);
        c.expect(std::abs(r.center.x - ec.x) < 1e-9 && std::abs(r.center.y - ec.y) < 1e-9, "center equivariance");
        c.expect(std::abs(r.axis_x.x - ex.x) < 1e-9 && std::abs(r.axis_x.y - ex.y) < 1e-9, "axis equivariance");

        const double k = 0.25 + 3 * rng.uniform();
        CropFrame s = crop_frame_from_landmarks({lm.e0 * k, lm.e1 * k, lm.m0 * k, lm.m1 * k});
        c.expect(std::abs(s.size - k * base.size) < 1e-9, "scale homogeneity of s");
        c.expect(std::abs(s.center.x - k * base.center.x) < 1e-9, "scale homogeneity of c");
        c.expect(std::abs(s.axis_x.x - base.axis_x.x) < 1e-9, "axes scale invariance");
    }
    {  // quality ordinals, 20 instances each
        Rng qr(80003);
        int noise_wins = 0, iso_wins = 0;
        for (int t = 0; t < 20; ++t) {
            ImageU8 noise = ImageU8::make(64, 64, 3);
            for (auto& p : noise.pixels) p = static_cast<std::uint8_t>(qr.below(256));
            ImageU8 blurred = from_tensor01(gaussian_blur(to_tensor01(noise), 2.0));
            if (quality_score(noise) > quality_score(blurred)) ++noise_wins;

            ImageU8 stripes = ImageU8::make(64, 64, 3);
            const double phase = qr.uniform() * 6.28;
            for (int y = 0; y < 64; ++y)
                for (int x = 0; x < 64; ++x) {
                    const double v = 0.5 + 0.45 * std::sin(2 * 3.14159265 * 12 * x / 64.0 + phase);
                    for (int ch = 0; ch < 3; ++ch)
                        stripes.at(x, y, ch) = static_cast<std::uint8_t>(std::lround(v * 255));
                }
            ImageU8 iso = ImageU8::make(64, 64, 3);
            for (auto& p : iso.pixels) p = static_cast<std::uint8_t>(
                std::clamp<long>(std::lround(127.5 + 114.75 * std::sin(qr.uniform() * 6.28)), 0, 255));
            if (quality_score(iso) > quality_score(stripes)) ++iso_wins;
        }
        c.expect(noise_wins == 20, "noise > blurred in " + std::to_string(noise_wins) + "/20");
        c.expect(iso_wins == 20, "isotropic > striped in " + std::to_string(iso_wins) + "/20");
    }
}

// ---------------------------------------------------------------------------
// 9. End-to-end progressive smoke at reduced capacity.
// ---------------------------------------------------------------------------

// Desk-scale schedule: images per phase for the main smoke run; the budget
// is 5 phases (4 stab, 8 fade, 8 stab, 16 fade, 16 stab), far under the
// 200k ceiling. Minibatch 8 doubles the optimizer steps a fixed image
// budget buys, and the EMA horizon shrinks to match a run that is a few
// hundred steps long rather than hundreds of thousands.
constexpr std::uint64_t kSmokePhase = 1200;
constexpr std::uint64_t kSmokeBudget = 5 * kSmokePhase;
constexpr int kSmokeBatch = 8;
constexpr double kSmokeEmaDecay = 0.95;
constexpr int kSwdSamples = 512;

// The progressive-vs-non-progressive comparison is qualitative; it runs on
// channel-capped networks so three seed pairs stay affordable on CPU.
constexpr std::uint64_t kComparePhase = 640;
constexpr int kCompareCap = 64;

RunConfig smoke_config(bool progressive, std::uint64_t phase, int cap) {
    std::ostringstream os;
    os << "network.variant = reduced\n"
       << "network.max_resolution = 16\n"
       << "network.channel_cap = " << cap << "\n";
    if (cap < 512) os << "network.latent_size = 64\n";
    os << "schedule.phase_length = " << phase << "\n"
       << "schedule.progressive = " << (progressive ? "true" : "false") << "\n"
       << "schedule.total_images = " << 5 * phase << "\n"
       << "schedule.minibatch_default = " << kSmokeBatch << "\n"
       << "optimizer.ema_decay = " << kSmokeEmaDecay << "\n"
       << "metrics.eval_interval = 0\n"
       << "dataset.synthetic_count = 2000\n"
       << "dataset.synthetic_seed = 42\n";
    return parse_config(os.str());
}

double swd16_of(Trainer& tr, int count, std::uint64_t eval_seed) {
    Rng eval(eval_seed);
    std::vector<Tensor<float>> fake = tr.sample_ema_images(count, eval.substream("latents"));
    for (auto& img : fake) {
        while (img.shape()[1] < 16) {
            Tensor<float> up = kernels::upsample2x(
                Tensor<float>::from({1, 3, img.shape()[1], img.shape()[2]}, std::vector<float>(img.values())));
            img = Tensor<float>::from({3, up.shape()[2], up.shape()[3]}, std::vector<float>(up.values()));
        }
    }
    std::vector<Tensor<float>> real;
    Rng pick = eval.substream("reals");
    for (int i = 0; i < count; ++i) {
        const auto& ds = tr.dataset();
        real.push_back(ds[pick.below(ds.size())]);
    }
    SwdConfig sc;
    sc.images_per_set = count;
    sc.patches_per_image = 128;
    sc.projections = 128;
    sc.base_resolution = 16;
    SwdReport rep = swd_report(real, fake, sc, eval.substream("swd"));
    return rep.level_swd_x1e3.front();
}

void criterion_9(Check& c) {
    const double t_start = now_seconds();
    static_assert(kSmokeBudget <= 200000);

    RunConfig cfg = smoke_config(true, kSmokePhase, 512);
    Trainer tr(cfg, 1);
    tr.load_dataset();
    const double t_train_start = now_seconds();

    const double swd_init = swd16_of(tr, kSwdSamples, 901);
    c.expect(swd_init > 0, "initial SWD positive");

    bool all_finite = true;
    TrainerCallbacks cb;
    cb.on_step = [&](const StepStats& st) {
        all_finite = all_finite && std::isfinite(st.d_loss) && std::isfinite(st.g_loss);
    };

    tr.run(2 * kSmokePhase, cb);  // into the 8x8 stabilize phase

    // Bit-exact resume: continue one step on a restored copy and compare.
    Checkpoint mid = tr.make_checkpoint();
    tr.step();
    Trainer resumed(cfg, 1);
    resumed.load_dataset();
    resumed.restore(mid);
    resumed.step();
    const auto a = encode_checkpoint(tr.make_checkpoint());
    const auto b = encode_checkpoint(resumed.make_checkpoint());
    c.expect(a == b, "checkpoint resume not bit-exact");

    tr.run(kSmokeBudget, cb);
    c.expect(all_finite, "losses stayed finite");
    c.expect(tr.generator().resolution() == 16, "reached 16x16");

    const double swd_final = swd16_of(tr, kSwdSamples, 902);
    const double train_seconds = now_seconds() - t_train_start;
    c.expect_lt(train_seconds, 3600.0, "training run seconds");
    const double improvement = (swd_init - swd_final) / swd_init;
    c.expect(improvement >= 0.30, "SWD-16 improvement " + std::to_string(improvement * 100) + "% (init " +
                                      std::to_string(swd_init) + " -> final " + std::to_string(swd_final) + ")");
    c.detail << (c.detail.str().empty() ? "" : "; ") << "swd16 " << swd_init << " -> " << swd_final << " ("
             << improvement * 100 << "%), train " << train_seconds << "s";

    // Progressive vs non-progressive, identical budget and seed, 3 seeds,
    // majority — qualitative assertion on channel-capped networks.
    int prog_wins = 0;
    for (std::uint64_t seed : {101ULL, 102ULL, 103ULL}) {
        RunConfig pc = smoke_config(true, kComparePhase, kCompareCap);
        Trainer prog(pc, seed);
        prog.load_dataset();
        prog.run(5 * kComparePhase);
        const double sp = swd16_of(prog, 256, 910 + seed);

        RunConfig nc = smoke_config(false, kComparePhase, kCompareCap);
        Trainer nonprog(nc, seed);
        nonprog.load_dataset();
        nonprog.run(5 * kComparePhase);
        const double sn = swd16_of(nonprog, 256, 910 + seed);
        if (sp <= sn) ++prog_wins;
        c.detail << "; seed " << seed << " prog " << sp << " vs nonprog " << sn;
    }
    c.expect(prog_wins >= 2, "progressive won only " + std::to_string(prog_wins) + "/3 seeds");

    const double elapsed = now_seconds() - t_start;
    c.detail << "; total " << elapsed << "s";
}

// ---------------------------------------------------------------------------
// 10. LSGAN hack arithmetic.
// ---------------------------------------------------------------------------
void criterion_10(Check& c) {
    auto [mag, st] = adaptive_noise_magnitude({0.5}, 1.0);
    c.expect_near(st.d_hat, 0.55, 1e-12, "d_hat recurrence");
    c.expect_near(mag, 0.2 * 0.05 * 0.05, 1e-12, "magnitude formula");

    auto [mag2, st2] = adaptive_noise_magnitude({0.0}, 0.0);
    c.expect(st2.d_hat == 0.0 && mag2 == 0.0, "zero state stays zero");

    auto [mag3, st3] = adaptive_noise_magnitude({0.4}, 0.5);
    c.expect(st3.d_hat <= 0.5 && mag3 == 0.0, "clamped residual");

    Tape<float> tp;
    Rng rng(100001);
    Var x = tp.leaf(Tensor<float>::normal({2, 3, 4, 4}, rng));
    Rng noise(5);
    Var same = multiplicative_noise(tp, x, 0.0, noise);
    c.expect(same.id == x.id && tp.value(same).bit_equal(tp.value(x)), "magnitude-0 noise not the identity");
}

}  // namespace

int main(int argc, char** argv) {
    int only = 0;
    if (argc > 2 && std::strcmp(argv[1], "--only") == 0) only = std::atoi(argv[2]);

    struct Entry {
        int id;
        const char* name;
        std::function<void(Check&)> fn;
    };
    const std::vector<Entry> criteria{
        {1, "gradient correctness of every primitive", criterion_1},
        {2, "second-order gradient penalty", criterion_2},
        {3, "mechanism invariants", criterion_3},
        {4, "progression schedule and minibatch map", criterion_4},
        {5, "growth consistency", criterion_5},
        {6, "sliced Wasserstein pipeline", criterion_6},
        {7, "mode coverage statistics", criterion_7},
        {8, "dataset geometry and quality ordinals", criterion_8},
        {9, "end-to-end progressive training smoke", criterion_9},
        {10, "adaptive-noise arithmetic", criterion_10},
    };

    bool all_ok = true;
    for (const auto& entry : criteria) {
        if (only != 0 && entry.id != only) continue;
        Check c;
        const double t0 = now_seconds();
        try {
            entry.fn(c);
        } catch (const std::exception& e) {
            c.ok = false;
            c.detail << "exception: " << e.what();
        }
        const double dt = now_seconds() - t0;
        std::cout << (c.ok ? "[PASS]" : "[FAIL]") << " criterion " << entry.id << ": " << entry.name;
        if (!c.detail.str().empty()) std::cout << " -- " << c.detail.str();
        std::cout << " (" << dt << "s)" << std::endl;
        all_ok = all_ok && c.ok;
    }
    return all_ok ? 0 : 1;
}
