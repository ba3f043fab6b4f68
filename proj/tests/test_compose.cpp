#include <doctest.h>

#include "im2mesh/compose.hpp"

using namespace im2mesh;

namespace {

Image image_with_norm(int h, int w, double target_norm, Rng& rng) {
    Image img(h, w, 3);
    for (double& v : img.data) v = rng.uniform(-1, 1);
    double n = img.l2_norm();
    for (double& v : img.data) v *= target_norm / n;
    return img;
}

double cosine(const Image& a, const Image& b) {
    double dot = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) dot += a.data[i] * b.data[i];
    return dot / (a.l2_norm() * b.l2_norm());
}

}  // namespace

TEST_CASE("bound schedules hit the published endpoints exactly") {
    ComposeSchedule editing = ComposeSchedule::editing(1000);
    Bounds b0 = compose_bounds(editing, 0.5, 0);
    CHECK(b0.upper == 100.0);
    CHECK_FALSE(b0.lower_active);

    Bounds b_front = compose_bounds(editing, 0.8, 0);
    CHECK(b_front.upper == doctest::Approx(100.0 * 0.2));

    Bounds b_end = compose_bounds(editing, 0.2, 1000);
    CHECK(b_end.upper == 10.0);
    CHECK(b_end.lower_active);
    CHECK(b_end.lower == 1.0);

    Bounds b_lower0 = compose_bounds(editing, 0.2, 0);
    CHECK(b_lower0.lower == 10.0);

    ComposeSchedule enh = ComposeSchedule::enhancement(1000);
    CHECK(compose_bounds(enh, 0.6, 0).upper == 2.0);
    CHECK(compose_bounds(enh, 0.6, 1000).upper == 0.5);

    // Upper >= lower whenever both are active, including the enhancement
    // mode where the raw lower schedule would exceed the upper bound.
    Bounds tight = compose_bounds(enh, 0.2, 0);
    CHECK(tight.lower_active);
    CHECK(tight.lower <= tight.upper);

    // Upper bound stays positive even for eta -> 1.
    CHECK(compose_bounds(editing, 1.0, 1000).upper >= 1e-6);
}

TEST_CASE("bounds are continuous in iteration and split at the front threshold") {
    ComposeSchedule editing = ComposeSchedule::editing(1000);
    for (int i = 0; i < 1000; i += 50) {
        double a = compose_bounds(editing, 0.5, i).upper;
        double b = compose_bounds(editing, 0.5, i + 1).upper;
        CHECK(std::abs(a - b) < 0.2);  // slope is (100-10)/1000 per iter
    }
    double left = compose_bounds(editing, 0.75, 500).upper;
    double right = compose_bounds(editing, 0.75 + 1e-12, 500).upper;
    CHECK(left == doctest::Approx(55.0));
    CHECK(right == doctest::Approx(55.0 * 0.25));
}

TEST_CASE("compose clamps the magnitude ratio per the stated rules") {
    Rng rng(1);
    // Upper bound 2 via the enhancement schedule at iter 0.
    ComposeSchedule enh = ComposeSchedule::enhancement(1000);
    Image phi = image_with_norm(8, 8, 2.0, rng);
    Image rho = image_with_norm(8, 8, 6.0, rng);

    ComposeResult r = compose(phi, rho, 0.6, 0, enh);
    CHECK(r.ratio == doctest::Approx(3.0));
    CHECK(r.rescaled_rho);
    CHECK_FALSE(r.rescaled_phi);
    CHECK(r.scaled_rho.l2_norm() == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(r.scaled_phi.l2_norm() == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(r.scaled_rho.l2_norm() / r.scaled_phi.l2_norm() == doctest::Approx(2.0));
    CHECK(cosine(r.scaled_rho, rho) == doctest::Approx(1.0));

    // G below an active lower bound scales phi down by G / lower.
    ComposeSchedule editing = ComposeSchedule::editing(1000);
    Image phi2 = image_with_norm(8, 8, 2.0, rng);
    Image rho2 = image_with_norm(8, 8, 1.0, rng);
    ComposeResult r2 = compose(phi2, rho2, 0.2, 1000, editing);  // lower = 1
    CHECK(r2.ratio == doctest::Approx(0.5));
    CHECK(r2.rescaled_phi);
    CHECK(r2.scaled_phi.l2_norm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r2.scaled_rho.l2_norm() / r2.scaled_phi.l2_norm() == doctest::Approx(1.0));
    CHECK(cosine(r2.scaled_phi, phi2) == doctest::Approx(1.0));

    // In-bounds inputs pass through bit-identically.
    Image phi3 = image_with_norm(8, 8, 1.0, rng);
    Image rho3 = image_with_norm(8, 8, 5.0, rng);
    ComposeResult r3 = compose(phi3, rho3, 0.6, 0, editing);  // 5 in [_, 100]
    CHECK(r3.scaled_phi.data == phi3.data);
    CHECK(r3.scaled_rho.data == rho3.data);
    CHECK_FALSE(r3.rescaled_phi);
    CHECK_FALSE(r3.rescaled_rho);
}

TEST_CASE("zero 3d-aware gradient passes through with a sentinel") {
    Rng rng(2);
    Image phi(8, 8, 3);  // zero
    Image rho = image_with_norm(8, 8, 4.0, rng);
    ComposeResult r = compose(phi, rho, 0.5, 10, ComposeSchedule::editing(100));
    CHECK(r.degenerate);
    CHECK(std::isinf(r.ratio));
    CHECK(r.scaled_rho.data == rho.data);
    CHECK(r.scaled_phi.data == phi.data);
}

TEST_CASE("containment property over randomized draws") {
    Rng rng(3);
    for (int trial = 0; trial < 10000; ++trial) {
        bool editing = rng.uniform() < 0.5;
        int total = 1000;
        ComposeSchedule sched =
            editing ? ComposeSchedule::editing(total) : ComposeSchedule::enhancement(total);
        double eta = rng.uniform();
        int iter = static_cast<int>(rng.uniform_index(total + 1));
        double mag_phi = std::exp(rng.uniform(-4.0, 4.0));
        double mag_rho = std::exp(rng.uniform(-4.0, 4.0));
        Image phi = image_with_norm(4, 4, mag_phi, rng);
        Image rho = image_with_norm(4, 4, mag_rho, rng);

        ComposeResult r = compose(phi, rho, eta, iter, sched);
        CHECK_FALSE(r.degenerate);
        CHECK_FALSE((r.rescaled_phi && r.rescaled_rho));  // mutually exclusive

        double post = r.scaled_rho.l2_norm() / r.scaled_phi.l2_norm();
        CHECK(post <= r.bounds.upper * (1.0 + 1e-9));
        if (r.bounds.lower_active) CHECK(post >= r.bounds.lower * (1.0 - 1e-9));

        // Direction preservation.
        if (r.rescaled_rho) CHECK(cosine(r.scaled_rho, rho) > 1.0 - 1e-12);
        if (r.rescaled_phi) CHECK(cosine(r.scaled_phi, phi) > 1.0 - 1e-12);
    }
}
