#include <doctest.h>

#include "test_support.hpp"

using namespace prograde;

TEST_CASE("pixelnorm: direct formula, zero vector, unit mean square") {
    Tape<double> tp;
    Var x = tp.leaf(Tensor<double>::full({1, 4, 1, 1}, 3.0));
    Var y = pixelnorm(tp, x);
    for (int c = 0; c < 4; ++c)
        CHECK(tp.value(y).at(0, c, 0, 0) == doctest::Approx(3.0 / std::sqrt(9.0 + 1e-8)).epsilon(1e-9));
    CHECK(std::abs(tp.value(y).at(0, 0, 0, 0) - 1.0) < 1e-8);

    Var z = pixelnorm(tp, tp.leaf(Tensor<double>::zeros({1, 4, 2, 2})));
    for (std::int64_t i = 0; i < 16; ++i) CHECK(tp.value(z).at(static_cast<int>(i)) == 0.0);

    Rng rng(41);
    Var r = tp.leaf(Tensor<double>::normal({2, 8, 3, 3}, rng));
    Var n = pixelnorm(tp, r);
    for (int b = 0; b < 2; ++b)
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double ms = 0;
                for (int c = 0; c < 8; ++c) ms += tp.value(n).at(b, c, i, j) * tp.value(n).at(b, c, i, j);
                CHECK(std::abs(ms / 8 - 1.0) < 1e-6);
            }
}

TEST_CASE("pixelnorm is idempotent and scale-invariant away from epsilon") {
    Tape<double> tp;
    Rng rng(43);
    Tensor<double> xv = Tensor<double>::normal({2, 6, 2, 2}, rng);
    Var x = tp.leaf(xv);
    Var once = pixelnorm(tp, x);
    Var twice = pixelnorm(tp, once);
    CHECK(max_abs_diff(tp.value(once), tp.value(twice)) < 1e-6);

    Var scaled = pixelnorm(tp, tp.scale(x, 7.5));
    CHECK(max_abs_diff(tp.value(once), tp.value(scaled)) < 1e-6);
}

TEST_CASE("pixelnorm gradient matches finite differences") {
    // The squared norm of the output is constant by construction, so the
    // probe weights each output element to keep the gradient non-trivial.
    Rng rng(47);
    std::vector<Tensor<double>> pts{Tensor<double>::normal({1, 4, 2, 2}, rng)};
    Tensor<double> probe = Tensor<double>::normal({1, 4, 2, 2}, rng);
    double err = gradient_check<double>(
        [&](Tape<double>& tp, std::span<const Var> xs) {
            return tp.sum_all(tp.mul(pixelnorm(tp, xs[0]), tp.constant(probe.clone())));
        },
        pts, 1e-5);
    CHECK(err < 1e-5);
}

TEST_CASE("minibatch_stddev: constant batch gives an exactly zero map") {
    Tape<double> tp;
    Tensor<double> one = Tensor<double>::full({1, 2, 3, 3}, 0.37);
    std::vector<double> batch;
    for (int b = 0; b < 4; ++b) batch.insert(batch.end(), one.values().begin(), one.values().end());
    Var x = tp.leaf(Tensor<double>::from({4, 2, 3, 3}, std::move(batch)));
    Var y = minibatch_stddev(tp, x);
    CHECK(tp.shape(y) == Shape{4, 3, 3, 3});
    for (int b = 0; b < 4; ++b)
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) CHECK(tp.value(y).at(b, 2, i, j) == 0.0);
}

TEST_CASE("minibatch_stddev: {0,2} example and shape growth") {
    Tape<double> tp;
    Var x = tp.leaf(Tensor<double>::from({2, 1, 1, 1}, {0.0, 2.0}));
    Var y = minibatch_stddev(tp, x);
    CHECK(tp.value(y).at(0, 1, 0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(tp.value(y).at(1, 1, 0, 0) == doctest::Approx(1.0).epsilon(1e-12));

    Tape<float> tf;
    Rng rng(53);
    Var big = tf.leaf(Tensor<float>::normal({16, 512, 4, 4}, rng));
    CHECK(tf.shape(minibatch_stddev(tf, big)) == Shape{16, 513, 4, 4});
}

TEST_CASE("minibatch_stddev map is constant across batch and space") {
    Tape<double> tp;
    Rng rng(59);
    Var x = tp.leaf(Tensor<double>::normal({3, 2, 4, 4}, rng));
    const Tensor<double>& y = tp.value(minibatch_stddev(tp, x));
    const double v = y.at(0, 2, 0, 0);
    CHECK(v > 0);
    for (int b = 0; b < 3; ++b)
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) CHECK(y.at(b, 2, i, j) == doctest::Approx(v).epsilon(1e-15));
}

TEST_CASE("minibatch_stddev gradient matches finite differences") {
    Rng rng(61);
    std::vector<Tensor<double>> pts{Tensor<double>::normal({3, 2, 2, 2}, rng)};
    double err = gradient_check<double>(
        [](Tape<double>& tp, std::span<const Var> xs) {
            return tp.mean_all(tp.square(minibatch_stddev(tp, xs[0])));
        },
        pts, 1e-5);
    CHECK(err < 1e-5);
}

TEST_CASE("equalized scaling: runtime constant and bit-exact control") {
    Rng rng(67);
    EqualizedConv<double> layer = EqualizedConv<double>::make("t", 4, 4, 5, 2, rng, true);
    CHECK(layer.runtime_scale == doctest::Approx(std::sqrt(2.0 / 100.0)).epsilon(1e-12));
    CHECK(layer.runtime_scale == doctest::Approx(0.141421).epsilon(1e-6));

    // Control layer with pre-multiplied weights, same bias.
    Tensor<double> pre = layer.w.clone();
    for (auto& v : pre.raw()) v *= layer.runtime_scale;

    Tape<double> tp;
    Binding<double> bind(tp);
    Rng xr(71);
    Tensor<double> xv = Tensor<double>::normal({2, 4, 6, 6}, xr);
    Var out = layer.forward(bind, tp.constant(xv));
    Var control = tp.conv2d(tp.constant(xv), tp.constant(pre), 2);
    CHECK(tp.value(out).bit_equal(tp.value(bias_add(tp, control, tp.constant(layer.b)))));
}

TEST_CASE("equalized scaling: gradient of raw weight is scale times effective gradient") {
    Rng rng(73);
    Tensor<double> xv = Tensor<double>::normal({1, 2, 4, 4}, rng);
    Tensor<double> wv = Tensor<double>::normal({3, 2, 3, 3}, rng);
    const double c = std::sqrt(2.0 / (2 * 9));

    Tape<double> tp;
    Var w_raw = tp.leaf(wv);
    Var y1 = tp.conv2d(tp.constant(xv), tp.scale(w_raw, c), 1);
    auto g_raw = tp.backward(tp.sum_all(y1), {w_raw}, true);

    Tensor<double> eff = wv.clone();
    for (auto& v : eff.raw()) v *= c;
    Tape<double> tq;
    Var w_eff = tq.leaf(eff);
    Var y2 = tq.conv2d(tq.constant(xv), w_eff, 1);
    auto g_eff = tq.backward(tq.sum_all(y2), {w_eff}, true);

    for (std::int64_t i = 0; i < wv.numel(); ++i)
        CHECK(tp.value(g_raw[0]).at(static_cast<int>(i)) ==
              doctest::Approx(c * tq.value(g_eff[0]).at(static_cast<int>(i))).epsilon(1e-12));
}

TEST_CASE("effective weights at initialization have stddev sqrt(2/fan_in)") {
    Rng rng(79);
    const int fan_in = 24 * 9;
    EqualizedConv<float> l = EqualizedConv<float>::make("t", 512, 24, 3, 1, rng, true);
    const std::int64_t n = l.w.numel();
    REQUIRE(n >= 100000);
    double sq = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double eff = l.w.data()[i] * l.runtime_scale;
        sq += eff * eff;
    }
    const double sd = std::sqrt(sq / n);
    CHECK(std::abs(sd - std::sqrt(2.0 / fan_in)) / std::sqrt(2.0 / fan_in) < 0.01);
}

TEST_CASE("fade_blend endpoints are bit-exact, midpoint is linear") {
    Tape<double> tp;
    Rng rng(83);
    Tensor<double> av = Tensor<double>::normal({2, 3, 4, 4}, rng);
    Tensor<double> bv = Tensor<double>::normal({2, 3, 4, 4}, rng);
    Var a = tp.leaf(av), b = tp.leaf(bv);

    CHECK(tp.value(fade_blend(tp, a, b, {0.0})).bit_equal(av));
    CHECK(tp.value(fade_blend(tp, a, b, {1.0})).bit_equal(bv));

    Var two = tp.constant(Tensor<double>::full({1, 1, 1, 1}, 2.0));
    Var four = tp.constant(Tensor<double>::full({1, 1, 1, 1}, 4.0));
    CHECK(tp.value(fade_blend(tp, two, four, {0.5})).scalar() == doctest::Approx(3.0));

    // Linear in alpha.
    Rng arng(89);
    for (int t = 0; t < 8; ++t) {
        const double alpha = arng.uniform();
        const Tensor<double>& mix = tp.value(fade_blend(tp, a, b, {alpha}));
        for (int i = 0; i < 8; ++i)
            CHECK(mix.at(i) == doctest::Approx((1 - alpha) * av.at(i) + alpha * bv.at(i)).epsilon(1e-12));
    }

    Var small = tp.leaf(Tensor<double>::zeros({1, 3, 4, 4}));
    CHECK_THROWS_AS(fade_blend(tp, a, small, {0.5}), Error);
}

TEST_CASE("fade_blend gradient flows per blend weight") {
    Rng rng(97);
    std::vector<Tensor<double>> pts{Tensor<double>::normal({1, 2, 2, 2}, rng),
                                    Tensor<double>::normal({1, 2, 2, 2}, rng)};
    double err = gradient_check<double>(
        [](Tape<double>& tp, std::span<const Var> xs) {
            return tp.mean_all(tp.square(fade_blend(tp, xs[0], xs[1], {0.3})));
        },
        pts, 1e-5);
    CHECK(err < 1e-6);
}

TEST_CASE("multiplicative noise: magnitude zero is the identity, variance scales") {
    Tape<double> tp;
    Rng rng(101);
    Var x = tp.leaf(Tensor<double>::normal({2, 3, 4, 4}, rng));
    Rng noise(7);
    Var same = multiplicative_noise(tp, x, 0.0, noise);
    CHECK(same.id == x.id);  // no op recorded at all

    Rng n2(7);
    Var noisy = multiplicative_noise(tp, tp.ones_like(x), 0.5, n2);
    double mean = 0, sq = 0;
    const std::int64_t n = tp.value(noisy).numel();
    for (std::int64_t i = 0; i < n; ++i) {
        mean += tp.value(noisy).at(static_cast<int>(i));
        sq += tp.value(noisy).at(static_cast<int>(i)) * tp.value(noisy).at(static_cast<int>(i));
    }
    mean /= n;
    const double var = sq / n - mean * mean;
    CHECK(std::abs(mean - 1.0) < 0.2);
    CHECK(var == doctest::Approx(0.25).epsilon(0.5));
}

TEST_CASE("batchnorm training mode centers per-feature batch statistics") {
    Tape<double> tp;
    Binding<double> bind(tp);
    BatchNormLayer<double> bn = BatchNormLayer<double>::make("bn", 3);
    Rng rng(103);
    Var x = tp.leaf(Tensor<double>::normal({4, 3, 5, 5}, rng));
    Var y = bn.forward(bind, x, true);
    for (int c = 0; c < 3; ++c) {
        double mean = 0;
        for (int b = 0; b < 4; ++b)
            for (int i = 0; i < 5; ++i)
                for (int j = 0; j < 5; ++j) mean += tp.value(y).at(b, c, i, j);
        CHECK(std::abs(mean / 100.0) < 1e-9);
    }
}
