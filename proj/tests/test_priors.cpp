#include <doctest.h>

#include "im2mesh/priors.hpp"

using namespace im2mesh;

TEST_CASE("timestep intervals follow the 50-step annealed window") {
    TimestepScheduler sched;
    sched.total_steps = 500;

    auto [lo0, hi0] = sched.interval(0);
    CHECK(lo0 == doctest::Approx(930.0));
    CHECK(hi0 == doctest::Approx(980.0));

    auto [lo499, hi499] = sched.interval(499);
    CHECK(lo499 == doctest::Approx(66.0));
    CHECK(hi499 == doctest::Approx(166.0));

    CHECK(sched.interval(49) == sched.interval(0));
    CHECK(sched.interval(50) != sched.interval(0));

    double prev_center = 1e9;
    for (int step = 0; step < 500; ++step) {
        auto [lo, hi] = sched.interval(step);
        CHECK(lo >= 20.0);
        CHECK(hi <= 980.0);
        CHECK(lo <= hi);
        double center = 980.0 + (20.0 - 980.0) * ((step / 50) * 50) / 500.0;
        CHECK(center <= prev_center + 1e-12);
        prev_center = center;
    }
    CHECK_THROWS(sched.interval(-1));
    CHECK_THROWS(sched.interval(500));
}

TEST_CASE("timestep draws stay inside their interval") {
    TimestepScheduler sched;
    sched.total_steps = 500;
    Rng rng(3);
    for (int step = 0; step < 500; step += 7) {
        auto [lo, hi] = sched.interval(step);
        for (int i = 0; i < 20; ++i) {
            double t = sched.sample(step, rng);
            CHECK(t >= lo);
            CHECK(t <= hi);
        }
    }

    // Degenerate window: deterministic center.
    TimestepScheduler tight = sched;
    tight.window = 0.0;
    for (int i = 0; i < 5; ++i) CHECK(tight.sample(100, rng) == doctest::Approx(788.0));

    // Empirical mean of the uniform interval.
    auto [lo, hi] = sched.interval(200);
    double sum = 0.0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) sum += sched.sample(200, rng);
    double sigma = (hi - lo) / std::sqrt(12.0);
    CHECK(std::abs(sum / n - 0.5 * (lo + hi)) < 3.0 * sigma / std::sqrt(double(n)));
}

TEST_CASE("oracle score is the exact mse gradient against the gt render") {
    TriangleMesh gt = make_uv_sphere(0.5, 16, 24);
    assign_procedural_colors(gt, "gradient");
    OracleBank bank(gt);
    CameraPose pose{30, 10, 2, 49.1, 32};

    Image target = bank.render_target(pose);
    SUBCASE("fixed point at t = 20 (no blur)") {
        ScoreFeedback fb = oracle_score(bank, target, pose, 20.0);
        CHECK(fb.magnitude == 0.0);
        CHECK(fb.error == 0.0);
        for (double v : fb.grad_image.data) CHECK(v == 0.0);
    }

    SUBCASE("constant offset gives the linear residual") {
        Image shifted = target;
        for (double& v : shifted.data) v += 0.1;
        ScoreFeedback fb = oracle_score(bank, shifted, pose, 20.0);
        double expect = 0.2 / (32.0 * 32.0);
        for (double v : fb.grad_image.data) CHECK(v == doctest::Approx(expect).epsilon(1e-9));
        CHECK(fb.error == doctest::Approx(0.1).epsilon(1e-9));
        CHECK(fb.magnitude ==
              doctest::Approx(fb.grad_image.l2_norm()).epsilon(1e-9));
    }

    SUBCASE("gradient matches finite differences to 1e-8") {
        Rng rng(5);
        Image rendered = target;
        for (double& v : rendered.data) v += rng.uniform(-0.2, 0.2);
        double t = 20.0;  // no blur: target fixed
        ScoreFeedback fb = oracle_score(bank, rendered, pose, t);
        auto loss = [&](const Image& img) {
            double s = 0.0;
            for (size_t i = 0; i < img.data.size(); ++i) {
                double d = img.data[i] - target.data[i];
                s += d * d;
            }
            return s / (32.0 * 32.0);
        };
        for (int probe = 0; probe < 20; ++probe) {
            size_t i = rng.uniform_index(rendered.data.size());
            Image up = rendered, dn = rendered;
            up.data[i] += 1e-4;
            dn.data[i] -= 1e-4;
            double fd = (loss(up) - loss(dn)) / 2e-4;
            CHECK(fb.grad_image.data[i] == doctest::Approx(fd).epsilon(1e-8));
        }
    }

    SUBCASE("blur strength follows the timestep ramp") {
        Image rendered(32, 32, 3, 0.5);
        ScoreFeedback low_t = oracle_score(bank, rendered, pose, 20.0);
        ScoreFeedback high_t = oracle_score(bank, rendered, pose, 980.0);
        ScoreFeedback no_blur = oracle_score(bank, rendered, pose, 980.0, 2.0, false);
        // t = 20 is blur-free, so it matches the blur-disabled path.
        ScoreFeedback low_ref = oracle_score(bank, rendered, pose, 20.0, 2.0, false);
        CHECK((Eigen::Map<VecX>(low_t.grad_image.data.data(), low_t.grad_image.data.size()) -
               Eigen::Map<VecX>(low_ref.grad_image.data.data(), low_ref.grad_image.data.size()))
                  .norm() == 0.0);
        CHECK(high_t.magnitude != no_blur.magnitude);
    }

    SUBCASE("purity: identical inputs produce identical feedback") {
        Image rendered(32, 32, 3, 0.3);
        ScoreFeedback a = oracle_score(bank, rendered, pose, 400.0);
        ScoreFeedback b = oracle_score(bank, rendered, pose, 400.0);
        CHECK(a.magnitude == b.magnitude);
        CHECK(a.error == b.error);
        CHECK(a.grad_image.data == b.grad_image.data);
    }
}

TEST_CASE("constant prior produces exactly the requested magnitude") {
    Rng rng(7);
    Image dir(8, 8, 3);
    for (double& v : dir.data) v = rng.uniform(-1, 1);

    ConstantPrior zero(dir, 0.0);
    Image rendered(8, 8, 3, 0.5);
    CameraPose pose{0, 0, 2, 49.1, 8};
    ScoreFeedback fz = zero.score(rendered, pose, 100.0);
    CHECK(fz.magnitude == 0.0);
    CHECK(fz.grad_image.l2_norm() == 0.0);

    ConstantPrior six(dir, 6.0);
    ScoreFeedback fs = six.score(rendered, pose, 100.0);
    CHECK(fs.magnitude == doctest::Approx(6.0).epsilon(1e-12));
    CHECK(fs.grad_image.l2_norm() == doctest::Approx(6.0).epsilon(1e-12));

    // Default hook is the identity; the eta-scaling variant multiplies.
    CHECK(six.timestep_transform(500.0, 0.25) == 500.0);
    ConstantPrior scaled(dir, 6.0, true);
    CHECK(scaled.timestep_transform(500.0, 0.25) == doctest::Approx(125.0));

    CHECK_THROWS(ConstantPrior(dir, -1.0));
}

TEST_CASE("gaussian blur basics") {
    Image img(16, 16, 1);
    Rng rng(9);
    for (double& v : img.data) v = rng.uniform();
    Image same = gaussian_blur(img, 0.0);
    CHECK(same.data == img.data);

    Image constant(16, 16, 1, 0.7);
    Image blurred = gaussian_blur(constant, 2.0);
    for (double v : blurred.data) CHECK(v == doctest::Approx(0.7).epsilon(1e-12));

    // Smoothing shrinks the dynamic range of noise.
    Image noisy_blur = gaussian_blur(img, 1.5);
    auto range = [](const Image& im) {
        double lo = 1e9, hi = -1e9;
        for (double v : im.data) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        return hi - lo;
    };
    CHECK(range(noisy_blur) < range(img));
}
