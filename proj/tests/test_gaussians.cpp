#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cstdio>

#include "im2mesh/gaussians.hpp"

using namespace im2mesh;

namespace {

GaussianCloud small_cloud(Index n, Rng& rng) {
    GaussianCloud c = init_cloud(n, rng);
    for (Index i = 0; i < n; ++i) {
        c.positions.row(i) << rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4),
            rng.uniform(-0.4, 0.4);
        c.log_scales.row(i) << rng.uniform(-3.5, -2.0), rng.uniform(-3.5, -2.0),
            rng.uniform(-3.5, -2.0);
        Vec4 q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
        c.rotations.row(i) = (q / q.norm()).transpose();
        c.opacity_logits[i] = rng.uniform(-1.0, 2.0);
        c.colors.row(i) << rng.uniform(), rng.uniform(), rng.uniform();
    }
    return c;
}

}  // namespace

TEST_CASE("cloud initialization follows the stated defaults") {
    Rng rng(1);
    GaussianCloud c = init_cloud(1000, rng);
    double max_norm = 0.0;
    for (Index i = 0; i < c.count(); ++i)
        max_norm = std::max(max_norm, c.positions.row(i).norm());
    CHECK(max_norm <= 0.5);
    for (Index i = 0; i < c.count(); ++i) {
        CHECK(c.opacity(i) == doctest::Approx(0.1).epsilon(1e-6));
        CHECK(c.colors(i, 0) == 0.5);
        CHECK(c.colors(i, 1) == 0.5);
        CHECK(c.colors(i, 2) == 0.5);
        CHECK(c.scales(i).minCoeff() > 0.0);
    }
    CHECK_THROWS(init_cloud(0, rng));
}

TEST_CASE("covariance construction") {
    CHECK((covariance(Vec3::Zero(), Vec4(1, 0, 0, 0)) - Mat3::Identity()).norm() < 1e-14);

    Vec3 ls(std::log(2.0), 0.0, 0.0);
    Mat3 expect = Vec3(4.0, 1.0, 1.0).asDiagonal();
    CHECK((covariance(ls, Vec4(1, 0, 0, 0)) - expect).norm() < 1e-12);

    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        Vec3 s(rng.uniform(-2, 0.5), rng.uniform(-2, 0.5), rng.uniform(-2, 0.5));
        Vec4 q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
        q.normalize();
        Mat3 cov = covariance(s, q);
        CHECK((cov - cov.transpose()).norm() < 1e-12);

        Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
        Vec3 expected_sq = (2.0 * s).array().exp();
        std::sort(expected_sq.data(), expected_sq.data() + 3);
        for (int k = 0; k < 3; ++k) {
            CHECK(eig.eigenvalues()[k] == doctest::Approx(expected_sq[k]).epsilon(1e-9));
            CHECK(eig.eigenvalues()[k] >= -1e-12);  // PSD
        }
    }
}

TEST_CASE("top-k selection follows mean accumulated gradients") {
    DensifyStats stats(4);
    stats.grad_norm_accum << 5, 1, 3, 2;
    stats.count << 1, 1, 1, 1;
    auto sel = topk_selection(stats, 4, 0.5);
    REQUIRE(sel.size() == 2);
    CHECK(sel[0] == 0);
    CHECK(sel[1] == 2);

    CHECK(topk_selection(stats, 4, 0.0).empty());

    // Monotone: selection at r1 < r2 is a subset.
    Rng rng(9);
    DensifyStats big(20);
    for (Index i = 0; i < 20; ++i) {
        big.grad_norm_accum[i] = rng.uniform();
        big.count[i] = 1;
    }
    auto s1 = topk_selection(big, 20, 0.3);
    auto s2 = topk_selection(big, 20, 0.7);
    for (Index i : s1) CHECK(std::find(s2.begin(), s2.end(), i) != s2.end());
}

TEST_CASE("densify clones small and splits large gaussians") {
    Rng rng(2);
    GaussianCloud c = small_cloud(4, rng);
    c.log_scales = MatX3::Constant(4, 3, std::log(0.01));
    DensifyStats stats(4);
    stats.grad_norm_accum << 5, 1, 3, 2;
    stats.count << 1, 1, 1, 1;

    SUBCASE("ratio zero is a no-op") {
        Rng r(3);
        CloudEdit e = densify_topk(c, stats, 0.0, 0.05, r);
        CHECK(e.cloud.count() == 4);
        CHECK((e.cloud.positions - c.positions).norm() == 0.0);
    }

    SUBCASE("clones below the split threshold") {
        Rng r(3);
        CloudEdit e = densify_topk(c, stats, 0.5, 0.05, r);
        CHECK(e.cloud.count() == 6);  // two selected, one copy each
        int fresh = 0;
        for (auto v : e.is_new) fresh += v;
        CHECK(fresh == 2);
    }

    SUBCASE("splits above the threshold replace the parent with two") {
        GaussianCloud big = c;
        big.log_scales = MatX3::Constant(4, 3, std::log(0.2));
        Rng r(3);
        CloudEdit e = densify_topk(big, stats, 0.5, 0.05, r);
        CHECK(e.cloud.count() == 6);  // 2 kept + 2*2 children
        for (Index i = 0; i < e.cloud.count(); ++i) {
            if (e.is_new[i])
                CHECK(e.cloud.log_scales(i, 0) ==
                      doctest::Approx(std::log(0.2) - std::log(1.6)));
        }
    }

    SUBCASE("deterministic under a fixed seed") {
        Rng r1(3), r2(3);
        CloudEdit e1 = densify_topk(c, stats, 0.5, 0.05, r1);
        CloudEdit e2 = densify_topk(c, stats, 0.5, 0.05, r2);
        CHECK((e1.cloud.positions - e2.cloud.positions).norm() == 0.0);
    }
}

TEST_CASE("pruning") {
    Rng rng(4);
    GaussianCloud c = small_cloud(4, rng);
    c.opacity_logits << logit(0.05), logit(0.5), logit(0.09), logit(0.2);
    CloudEdit e = prune(c, 0.1);
    REQUIRE(e.cloud.count() == 2);
    CHECK(e.parent[0] == 1);
    CHECK(e.parent[1] == 3);
    CHECK_FALSE(e.all_pruned_warning);

    // Idempotence.
    CloudEdit e2 = prune(e.cloud, 0.1);
    CHECK(e2.cloud.count() == e.cloud.count());
    CHECK((e2.cloud.positions - e.cloud.positions).norm() == 0.0);

    // All above threshold: unchanged.
    GaussianCloud high = small_cloud(4, rng);
    high.opacity_logits = VecX::Constant(4, logit(0.5));
    CHECK(prune(high, 0.1).cloud.count() == 4);

    // All below: single max-opacity survivor plus a warning.
    GaussianCloud low = small_cloud(3, rng);
    low.opacity_logits << logit(0.01), logit(0.05), logit(0.02);
    CloudEdit worst = prune(low, 0.1);
    CHECK(worst.cloud.count() == 1);
    CHECK(worst.parent[0] == 1);
    CHECK(worst.all_pruned_warning);
}

TEST_CASE("local density queries") {
    Rng rng(6);
    GaussianCloud c = small_cloud(1, rng);
    c.positions.row(0) << 0.1, -0.2, 0.05;
    double alpha = c.opacity(0);
    CHECK(density_at(c, c.positions.row(0).transpose()) == doctest::Approx(alpha));

    // Far beyond the cutoff: exactly zero.
    CHECK(density_at(c, Vec3(50, 50, 50)) == 0.0);

    // Two gaussians, midpoint query against the closed form without cutoff.
    GaussianCloud two = small_cloud(2, rng);
    two.positions.row(0) << -0.02, 0.0, 0.0;
    two.positions.row(1) << 0.02, 0.0, 0.0;
    Vec3 mid(0.0, 0.0, 0.0);
    double oracle = 0.0;
    for (Index i = 0; i < 2; ++i) {
        Vec3 d = mid - two.positions.row(i).transpose();
        Mat3 cov = covariance(two.log_scales.row(i).transpose(), two.rotations.row(i).transpose());
        oracle += two.opacity(i) * std::exp(-0.5 * d.dot(cov.inverse() * d));
    }
    CHECK(density_at(two, mid) == doctest::Approx(oracle).epsilon(1e-6));

    // Exact mode equals brute force for any cutoff choice.
    DensityOptions exact;
    exact.exact = true;
    GaussianCloud many = small_cloud(30, rng);
    for (int trial = 0; trial < 20; ++trial) {
        Vec3 p(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        double brute = 0.0;
        for (Index i = 0; i < many.count(); ++i) {
            Vec3 d = p - many.positions.row(i).transpose();
            Mat3 cov =
                covariance(many.log_scales.row(i).transpose(), many.rotations.row(i).transpose());
            brute += many.opacity(i) * std::exp(-0.5 * d.dot(cov.inverse() * d));
        }
        CHECK(density_at(many, p, exact) == doctest::Approx(brute).epsilon(1e-12));
    }

    CHECK_THROWS(density_at(GaussianCloud{}, Vec3::Zero()));
}

TEST_CASE("density on a lattice matches point queries") {
    Rng rng(8);
    GaussianCloud c = small_cloud(10, rng);
    int res = 8;
    auto field = density_on_grid(c, res);
    auto exact_field = [&](int x, int y, int z) {
        double cell = 2.0 / res;
        return density_at(c, Vec3(-1 + x * cell, -1 + y * cell, -1 + z * cell));
    };
    for (int x = 0; x <= res; x += 2)
        for (int y = 0; y <= res; y += 2)
            for (int z = 0; z <= res; z += 2)
                CHECK(field[(static_cast<size_t>(x) * (res + 1) + y) * (res + 1) + z] ==
                      doctest::Approx(exact_field(x, y, z)).epsilon(1e-9));
}

TEST_CASE("cloud checkpoints round-trip bit-exactly") {
    Rng rng(10);
    GaussianCloud c = small_cloud(17, rng);
    std::string path = "test_cloud_ckpt.bin";
    save_cloud(c, path);
    GaussianCloud r = load_cloud(path);
    CHECK(r.count() == c.count());
    CHECK((r.positions - c.positions).norm() == 0.0);
    CHECK((r.log_scales - c.log_scales).norm() == 0.0);
    CHECK((r.rotations - c.rotations).norm() == 0.0);
    CHECK((r.opacity_logits - c.opacity_logits).norm() == 0.0);
    CHECK((r.colors - c.colors).norm() == 0.0);
    std::remove(path.c_str());
}
