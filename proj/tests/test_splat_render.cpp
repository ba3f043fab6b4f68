#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "im2mesh/image_ops.hpp"
#include "im2mesh/splat_render.hpp"

using namespace im2mesh;

namespace {

GaussianCloud random_scene(Index n, Rng& rng) {
    GaussianCloud c;
    c.positions.resize(n, 3);
    c.log_scales.resize(n, 3);
    c.rotations.resize(n, 4);
    c.opacity_logits.resize(n);
    c.colors.resize(n, 3);
    for (Index i = 0; i < n; ++i) {
        c.positions.row(i) << rng.uniform(-0.35, 0.35), rng.uniform(-0.35, 0.35),
            rng.uniform(-0.35, 0.35);
        for (int k = 0; k < 3; ++k) c.log_scales(i, k) = rng.uniform(-2.8, -1.6);
        Vec4 q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
        c.rotations.row(i) = (q / q.norm()).transpose();
        c.opacity_logits[i] = rng.uniform(-0.5, 2.0);
        c.colors.row(i) << rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9);
    }
    return c;
}

/// Weighted scalar loss over rgb and accumulated opacity.
double scene_loss(const GaussianCloud& cloud, const CameraPose& pose, const Image& w_rgb,
                  const Image& w_acc, const SplatRenderOptions& opts) {
    SplatImage img = splat_render(cloud, pose, opts);
    double loss = 0.0;
    for (size_t i = 0; i < img.rgb.data.size(); ++i) loss += w_rgb.data[i] * img.rgb.data[i];
    for (size_t i = 0; i < img.accum_opacity.data.size(); ++i)
        loss += w_acc.data[i] * img.accum_opacity.data[i];
    return loss;
}

double rel_err(const VecX& fd, const VecX& an) {
    double denom = std::max({fd.norm(), an.norm(), 1e-12});
    return (fd - an).norm() / denom;
}

}  // namespace

TEST_CASE("empty cloud renders black with zero opacity") {
    GaussianCloud empty;
    CameraPose pose{0, 0, 2, 49.1, 16};
    SplatImage img = splat_render(empty, pose);
    for (double v : img.rgb.data) CHECK(v == 0.0);
    for (double v : img.accum_opacity.data) CHECK(v == 0.0);
}

TEST_CASE("single gaussian peaks at the image center") {
    GaussianCloud c;
    c.positions = MatX3::Zero(1, 3);
    c.log_scales = MatX3::Constant(1, 3, std::log(0.05));
    c.rotations.resize(1, 4);
    c.rotations.row(0) << 1, 0, 0, 0;
    c.opacity_logits = VecX::Constant(1, logit(0.98));
    c.colors = MatX3::Constant(1, 3, 1.0);

    CameraPose pose{0, 0, 2, 49.1, 16};
    SplatImage img = splat_render(c, pose);
    double best = -1.0;
    int best_r = -1, best_c = -1;
    for (int r = 0; r < 16; ++r)
        for (int col = 0; col < 16; ++col)
            if (img.accum_opacity.at(r, col)[0] > best) {
                best = img.accum_opacity.at(r, col)[0];
                best_r = r;
                best_c = col;
            }
    // Principal point is at (8, 8); the four touching pixels are equidistant.
    CHECK(best > 0.5);
    CHECK(std::abs(best_r - 7.5) <= 1.0);
    CHECK(std::abs(best_c - 7.5) <= 1.0);
}

TEST_CASE("well separated gaussians keep their own colors at their peaks") {
    GaussianCloud c;
    c.positions.resize(2, 3);
    c.positions.row(0) << -0.5, 0.0, 0.0;
    c.positions.row(1) << 0.5, 0.0, 0.0;
    c.log_scales = MatX3::Constant(2, 3, std::log(0.03));
    c.rotations.resize(2, 4);
    c.rotations.row(0) << 1, 0, 0, 0;
    c.rotations.row(1) << 1, 0, 0, 0;
    c.opacity_logits = VecX::Constant(2, logit(0.95));
    c.colors.resize(2, 3);
    c.colors.row(0) << 1.0, 0.0, 0.0;
    c.colors.row(1) << 0.0, 1.0, 0.0;

    CameraPose pose{0, 0, 2, 49.1, 64};
    CameraFrame frame = make_frame(pose);
    SplatImage img = splat_render(c, pose);
    for (int g = 0; g < 2; ++g) {
        Vec2 px = frame.project(frame.world_to_cam(c.positions.row(g).transpose()));
        int r = static_cast<int>(px.y()), col = static_cast<int>(px.x());
        const double* rgb = img.rgb.at(r, col);
        double acc = img.accum_opacity.at(r, col)[0];
        CHECK(acc > 0.5);
        CHECK(rgb[g] / acc > 0.99);       // own channel dominates
        CHECK(rgb[1 - g] / acc < 0.01);   // other color absent
    }
}

TEST_CASE("contributor weights sum to the accumulated opacity") {
    Rng rng(3);
    GaussianCloud c = random_scene(5, rng);
    CameraPose pose{30, 10, 2, 49.1, 16};
    SplatImage img = splat_render(c, pose);
    for (int r = 0; r < 16; ++r) {
        for (int col = 0; col < 16; ++col) {
            double sum = 0.0;
            for (const auto& cb : img.pixel(r, col)) sum += cb.weight;
            CHECK(sum == doctest::Approx(img.accum_opacity.at(r, col)[0]).epsilon(1e-12));
        }
    }
}

TEST_CASE("zero upstream gradients give zero parameter gradients") {
    Rng rng(4);
    GaussianCloud c = random_scene(4, rng);
    CameraPose pose{0, 0, 2, 49.1, 16};
    SplatImage img = splat_render(c, pose);
    Image zr(16, 16, 3), zt(16, 16, 1);
    SplatGradients g = splat_backward(c, pose, img, zr, zt);
    CHECK(g.positions.norm() == 0.0);
    CHECK(g.log_scales.norm() == 0.0);
    CHECK(g.rotations.norm() == 0.0);
    CHECK(g.opacity_logits.norm() == 0.0);
    CHECK(g.colors.norm() == 0.0);
}

TEST_CASE("color gradients equal the blend-weighted image gradient") {
    Rng rng(5);
    GaussianCloud c = random_scene(4, rng);
    CameraPose pose{15, -5, 2, 49.1, 16};
    SplatImage img = splat_render(c, pose);
    Image grad_rgb(16, 16, 3), zt(16, 16, 1);
    for (double& v : grad_rgb.data) v = rng.uniform(-1, 1);
    SplatGradients g = splat_backward(c, pose, img, grad_rgb, zt);

    MatX3 expect = MatX3::Zero(c.count(), 3);
    for (int r = 0; r < 16; ++r)
        for (int col = 0; col < 16; ++col)
            for (const auto& cb : img.pixel(r, col))
                for (int ch = 0; ch < 3; ++ch)
                    expect(cb.gaussian, ch) += cb.weight * grad_rgb.at(r, col)[ch];
    CHECK((g.colors - expect).norm() < 1e-12);
}

TEST_CASE("backward matches central finite differences on random scenes") {
    SplatRenderOptions opts;
    opts.exact = true;  // cutoff-free forward keeps the loss smooth
    const double step = 1e-4;
    const int res = 16;

    for (int scene = 0; scene < 20; ++scene) {
        Rng rng(100 + scene);
        Index n = 1 + static_cast<Index>(rng.uniform_index(5));
        GaussianCloud c = random_scene(n, rng);
        CameraPose pose{rng.uniform(-180, 180), rng.uniform(-30, 30), 2, 49.1, res};

        Image w_rgb(res, res, 3), w_acc(res, res, 1);
        for (double& v : w_rgb.data) v = rng.uniform(-1, 1);
        for (double& v : w_acc.data) v = rng.uniform(-1, 1);

        SplatImage img = splat_render(c, pose, opts);
        SplatGradients g = splat_backward(c, pose, img, w_rgb, w_acc, opts);

        auto fd_group = [&](auto&& get_ref, Index count) {
            VecX fd(count);
            for (Index k = 0; k < count; ++k) {
                double& ref = get_ref(k);
                double saved = ref;
                ref = saved + step;
                double up = scene_loss(c, pose, w_rgb, w_acc, opts);
                ref = saved - step;
                double dn = scene_loss(c, pose, w_rgb, w_acc, opts);
                ref = saved;
                fd[k] = (up - dn) / (2.0 * step);
            }
            return fd;
        };

        VecX fd_col = fd_group([&](Index k) -> double& { return c.colors.data()[k]; },
                               c.colors.size());
        VecX an_col = Eigen::Map<VecX>(g.colors.data(), g.colors.size());
        CHECK(rel_err(fd_col, an_col) < 1e-3);

        VecX fd_op = fd_group([&](Index k) -> double& { return c.opacity_logits[k]; },
                              c.opacity_logits.size());
        CHECK(rel_err(fd_op, g.opacity_logits) < 1e-3);

        VecX fd_pos = fd_group([&](Index k) -> double& { return c.positions.data()[k]; },
                               c.positions.size());
        VecX an_pos = Eigen::Map<VecX>(g.positions.data(), g.positions.size());
        CHECK(rel_err(fd_pos, an_pos) < 1e-2);

        VecX fd_scale = fd_group([&](Index k) -> double& { return c.log_scales.data()[k]; },
                                 c.log_scales.size());
        VecX an_scale = Eigen::Map<VecX>(g.log_scales.data(), g.log_scales.size());
        CHECK(rel_err(fd_scale, an_scale) < 1e-2);

        VecX fd_rot = fd_group([&](Index k) -> double& { return c.rotations.data()[k]; },
                               c.rotations.size());
        VecX an_rot = Eigen::Map<VecX>(g.rotations.data(), g.rotations.size());
        CHECK(rel_err(fd_rot, an_rot) < 1e-2);
    }
}

TEST_CASE("rendering is invariant to input ordering") {
    Rng rng(6);
    GaussianCloud c = random_scene(6, rng);
    CameraPose pose{40, 5, 2, 49.1, 32};
    SplatImage a = splat_render(c, pose);

    // Reverse the rows.
    GaussianCloud rev;
    Index n = c.count();
    rev.positions.resize(n, 3);
    rev.log_scales.resize(n, 3);
    rev.rotations.resize(n, 4);
    rev.opacity_logits.resize(n);
    rev.colors.resize(n, 3);
    for (Index i = 0; i < n; ++i) {
        rev.positions.row(i) = c.positions.row(n - 1 - i);
        rev.log_scales.row(i) = c.log_scales.row(n - 1 - i);
        rev.rotations.row(i) = c.rotations.row(n - 1 - i);
        rev.opacity_logits[i] = c.opacity_logits[n - 1 - i];
        rev.colors.row(i) = c.colors.row(n - 1 - i);
    }
    SplatImage b = splat_render(rev, pose);
    double max_diff = 0.0;
    for (size_t i = 0; i < a.rgb.data.size(); ++i)
        max_diff = std::max(max_diff, std::abs(a.rgb.data[i] - b.rgb.data[i]));
    CHECK(max_diff == 0.0);
}

TEST_CASE("accumulated opacity is monotone in any single opacity") {
    Rng rng(7);
    GaussianCloud c = random_scene(4, rng);
    CameraPose pose{0, 0, 2, 49.1, 16};
    SplatImage before = splat_render(c, pose);
    for (Index g = 0; g < c.count(); ++g) {
        GaussianCloud bumped = c;
        bumped.opacity_logits[g] += 0.5;
        SplatImage after = splat_render(bumped, pose);
        for (size_t i = 0; i < before.accum_opacity.data.size(); ++i)
            CHECK(after.accum_opacity.data[i] >= before.accum_opacity.data[i] - 1e-12);
    }
}

TEST_CASE("resolutions agree after box downsampling on a smooth scene") {
    Rng rng(8);
    GaussianCloud c = random_scene(5, rng);
    c.log_scales = MatX3::Constant(5, 3, std::log(0.12));  // broad, smooth footprints
    CameraPose lo{20, 10, 2, 49.1, 32}, hi{20, 10, 2, 49.1, 64};
    SplatImage a = splat_render(c, lo);
    SplatImage b = splat_render(c, hi);
    Image down = downsample2x(b.rgb);
    double mae = 0.0;
    for (size_t i = 0; i < a.rgb.data.size(); ++i)
        mae += std::abs(a.rgb.data[i] - down.data[i]);
    mae /= static_cast<double>(a.rgb.data.size());
    CHECK(mae < 2e-2);
}
