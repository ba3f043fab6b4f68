#include "im2mesh/splat_render.hpp"

#include <algorithm>
#include <numeric>

#include "im2mesh/parallel.hpp"

namespace im2mesh {

namespace {

constexpr int kTile = 16;

/// Per-Gaussian projection state shared by forward and backward.
struct Projected {
    int32_t index;    // index into the cloud
    double depth;
    Vec3 p_cam;
    Vec2 mean2d;
    Mat3 cov_cam;     // covariance rotated into camera space
    Eigen::Matrix<double, 2, 3> jac;
    Mat2 cov2d;
    double conic_a, conic_b, conic_c;  // inverse 2D covariance
    double radius;    // bounding radius in pixels
    double alpha;
};

struct Projection {
    CameraFrame frame;
    std::vector<Projected> splats;  // sorted front to back
};

Projection project_cloud(const GaussianCloud& cloud, const CameraPose& pose,
                         const SplatRenderOptions& opts) {
    Projection proj;
    proj.frame = make_frame(pose);
    const CameraFrame& fr = proj.frame;

    proj.splats.reserve(cloud.count());
    for (Index i = 0; i < cloud.count(); ++i) {
        Vec3 p_cam = fr.world_to_cam(cloud.positions.row(i).transpose());
        double d = fr.depth_of(p_cam);
        if (d < opts.near) continue;

        Projected s;
        s.index = static_cast<int32_t>(i);
        s.depth = d;
        s.p_cam = p_cam;
        s.mean2d = fr.project(p_cam);

        Mat3 cov_world = covariance(cloud.log_scales.row(i).transpose(),
                                    cloud.rotations.row(i).transpose());
        s.cov_cam = fr.rot * cov_world * fr.rot.transpose();

        double f = fr.focal;
        s.jac << f / d, 0.0, f * p_cam.x() / (d * d),
                 0.0, -f / d, -f * p_cam.y() / (d * d);
        s.cov2d = s.jac * s.cov_cam * s.jac.transpose();
        s.cov2d(0, 0) += opts.dilation;
        s.cov2d(1, 1) += opts.dilation;

        double det = s.cov2d(0, 0) * s.cov2d(1, 1) - s.cov2d(0, 1) * s.cov2d(1, 0);
        if (det <= 0.0) continue;
        s.conic_a = s.cov2d(1, 1) / det;
        s.conic_b = -s.cov2d(0, 1) / det;
        s.conic_c = s.cov2d(0, 0) / det;

        double mid = 0.5 * (s.cov2d(0, 0) + s.cov2d(1, 1));
        double lambda_max = mid + std::sqrt(std::max(0.0, mid * mid - det));
        s.radius = opts.footprint_sigma * std::sqrt(lambda_max);
        s.alpha = cloud.opacity(i);
        proj.splats.push_back(s);
    }
    std::sort(proj.splats.begin(), proj.splats.end(), [](const Projected& a, const Projected& b) {
        if (a.depth != b.depth) return a.depth < b.depth;
        return a.index < b.index;
    });
    return proj;
}

/// Splat indices per tile, preserving depth order.
std::vector<std::vector<int>> bin_tiles(const Projection& proj, int res, bool exact) {
    int tiles = (res + kTile - 1) / kTile;
    std::vector<std::vector<int>> bins(static_cast<size_t>(tiles) * tiles);
    for (int k = 0; k < static_cast<int>(proj.splats.size()); ++k) {
        const Projected& s = proj.splats[k];
        int tx0 = 0, tx1 = tiles - 1, ty0 = 0, ty1 = tiles - 1;
        if (!exact) {
            tx0 = std::clamp(static_cast<int>((s.mean2d.x() - s.radius) / kTile), 0, tiles - 1);
            tx1 = std::clamp(static_cast<int>((s.mean2d.x() + s.radius) / kTile), 0, tiles - 1);
            ty0 = std::clamp(static_cast<int>((s.mean2d.y() - s.radius) / kTile), 0, tiles - 1);
            ty1 = std::clamp(static_cast<int>((s.mean2d.y() + s.radius) / kTile), 0, tiles - 1);
            if (s.mean2d.x() + s.radius < 0 || s.mean2d.x() - s.radius > res ||
                s.mean2d.y() + s.radius < 0 || s.mean2d.y() - s.radius > res)
                continue;
        }
        for (int ty = ty0; ty <= ty1; ++ty)
            for (int tx = tx0; tx <= tx1; ++tx) bins[static_cast<size_t>(ty) * tiles + tx].push_back(k);
    }
    return bins;
}

}  // namespace

SplatImage splat_render(const GaussianCloud& cloud, const CameraPose& pose,
                        const SplatRenderOptions& opts) {
    int res = pose.resolution;
    if (res < 8) throw std::invalid_argument("splat_render: resolution must be >= 8");

    SplatImage out;
    out.rgb = Image(res, res, 3);
    out.accum_opacity = Image(res, res, 1);
    out.contributors.resize(static_cast<size_t>(res) * res);
    if (cloud.count() == 0) return out;

    Projection proj = project_cloud(cloud, pose, opts);
    auto bins = bin_tiles(proj, res, opts.exact);
    int tiles = (res + kTile - 1) / kTile;

    parallel_rows(res, opts.threads, [&](int, int row_begin, int row_end) {
    for (int row = row_begin; row < row_end; ++row) {
        for (int col = 0; col < res; ++col) {
            const auto& bin = bins[static_cast<size_t>(row / kTile) * tiles + col / kTile];
            double px = col + 0.5, py = row + 0.5;
            double transmittance = 1.0;
            double rgb[3] = {0, 0, 0};
            auto& contribs = out.contributors[static_cast<size_t>(row) * res + col];

            for (int k : bin) {
                const Projected& s = proj.splats[k];
                double dx = px - s.mean2d.x();
                double dy = py - s.mean2d.y();
                if (!opts.exact && (std::abs(dx) > s.radius || std::abs(dy) > s.radius)) continue;
                double q = s.conic_a * dx * dx + 2.0 * s.conic_b * dx * dy + s.conic_c * dy * dy;
                if (q < 0.0) continue;
                double alpha = std::min(opts.alpha_clamp, s.alpha * std::exp(-0.5 * q));
                if (alpha < (opts.exact ? 0.0 : opts.alpha_skip)) continue;
                if (alpha <= 0.0) continue;

                double w = alpha * transmittance;
                const double* c = cloud.colors.row(s.index).data();
                rgb[0] += c[0] * w;
                rgb[1] += c[1] * w;
                rgb[2] += c[2] * w;
                contribs.push_back({s.index, w});
                transmittance *= 1.0 - alpha;
                if (!opts.exact && transmittance < opts.early_stop) break;
            }

            double* prgb = out.rgb.at(row, col);
            prgb[0] = rgb[0];
            prgb[1] = rgb[1];
            prgb[2] = rgb[2];
            out.accum_opacity.at(row, col)[0] = 1.0 - transmittance;
        }
    }
    });
    return out;
}

bool SplatGradients::all_finite() const {
    auto finite = [](const auto& m) { return m.allFinite(); };
    return finite(positions) && finite(log_scales) && finite(rotations) &&
           finite(opacity_logits) && finite(colors) && finite(view_grad_norm);
}

SplatGradients splat_backward(const GaussianCloud& cloud, const CameraPose& pose,
                              const SplatImage& image, const Image& grad_rgb,
                              const Image& grad_opacity, const SplatRenderOptions& opts,
                              const std::vector<bool>& gaussian_mask) {
    int res = pose.resolution;
    if (grad_rgb.height != res || grad_rgb.width != res || grad_rgb.channels != 3)
        throw std::invalid_argument("splat_backward: grad_rgb shape mismatch");
    if (grad_opacity.height != res || grad_opacity.width != res || grad_opacity.channels != 1)
        throw std::invalid_argument("splat_backward: grad_opacity shape mismatch");
    if (!gaussian_mask.empty() && static_cast<Index>(gaussian_mask.size()) != cloud.count())
        throw std::invalid_argument("splat_backward: gaussian_mask size mismatch");

    SplatGradients grads(cloud.count());
    if (cloud.count() == 0) return grads;

    Projection proj = project_cloud(cloud, pose, opts);
    std::vector<int> splat_of_gaussian(cloud.count(), -1);
    for (int k = 0; k < static_cast<int>(proj.splats.size()); ++k)
        splat_of_gaussian[proj.splats[k].index] = k;

    // Image-space accumulation per Gaussian; workers own private buffers
    // reduced in worker order so results are deterministic per thread count.
    struct Accum {
        MatX3 conic;  // (a, b, c) convention: q = a dx^2 + 2 b dx dy + c dy^2
        Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor> mean2d;
        MatX3 colors;
        VecX logits;
    };
    int workers = std::max(1, std::min(opts.threads, res));
    std::vector<Accum> accums(workers);
    for (Accum& a : accums) {
        a.conic = MatX3::Zero(cloud.count(), 3);
        a.mean2d = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>::Zero(cloud.count(), 2);
        a.colors = MatX3::Zero(cloud.count(), 3);
        a.logits = VecX::Zero(cloud.count());
    }

    parallel_rows(res, opts.threads, [&](int worker, int row_begin, int row_end) {
    Accum& acc = accums[worker];
    for (int row = row_begin; row < row_end; ++row) {
        for (int col = 0; col < res; ++col) {
            const auto& contribs = image.pixel(row, col);
            if (contribs.empty()) continue;
            const double* g_rgb = grad_rgb.at(row, col);
            double g_acc = grad_opacity.at(row, col)[0];
            double px = col + 0.5, py = row + 0.5;

            // Replay transmittances front to back.
            size_t m = contribs.size();
            std::vector<double> trans(m), alphas(m);
            double t = 1.0;
            for (size_t i = 0; i < m; ++i) {
                trans[i] = t;
                alphas[i] = contribs[i].weight / t;
                t -= contribs[i].weight;
            }

            // Back-to-front suffix sums over later contributions.
            double suffix_rgb[3] = {0, 0, 0};
            double suffix_acc = 0.0;
            for (size_t ii = m; ii-- > 0;) {
                const SplatContribution& cb = contribs[ii];
                Index gi = cb.gaussian;
                double alpha = alphas[ii];
                double t_i = trans[ii];
                const double* color = cloud.colors.row(gi).data();

                bool masked = !gaussian_mask.empty() && !gaussian_mask[gi];
                if (!masked) {
                    // Color enters linearly.
                    acc.colors(gi, 0) += cb.weight * g_rgb[0];
                    acc.colors(gi, 1) += cb.weight * g_rgb[1];
                    acc.colors(gi, 2) += cb.weight * g_rgb[2];

                    double one_minus = std::max(1.0 - alpha, 1e-12);
                    double d_alpha = 0.0;
                    for (int ch = 0; ch < 3; ++ch)
                        d_alpha += g_rgb[ch] * (color[ch] * t_i - suffix_rgb[ch] / one_minus);
                    d_alpha += g_acc * (t_i - suffix_acc / one_minus);

                    bool clamped = alpha >= opts.alpha_clamp - 1e-12;
                    if (!clamped) {
                        int k = splat_of_gaussian[gi];
                        const Projected& s = proj.splats[k];
                        double g = alpha / s.alpha;  // exp(-q/2)
                        double a = s.alpha;

                        // d alpha / d logit through sigmoid.
                        acc.logits[gi] += d_alpha * g * a * (1.0 - a);

                        double dL_dg = d_alpha * a;
                        double dx = px - s.mean2d.x();
                        double dy = py - s.mean2d.y();
                        double dL_dq = -0.5 * g * dL_dg;
                        // q = a dx^2 + 2 b dx dy + c dy^2
                        double dq_ddx = 2.0 * (s.conic_a * dx + s.conic_b * dy);
                        double dq_ddy = 2.0 * (s.conic_b * dx + s.conic_c * dy);
                        acc.mean2d(gi, 0) += -dL_dq * dq_ddx;
                        acc.mean2d(gi, 1) += -dL_dq * dq_ddy;
                        acc.conic(gi, 0) += dL_dq * dx * dx;
                        acc.conic(gi, 1) += dL_dq * 2.0 * dx * dy;
                        acc.conic(gi, 2) += dL_dq * dy * dy;
                    }
                }

                suffix_rgb[0] += color[0] * cb.weight;
                suffix_rgb[1] += color[1] * cb.weight;
                suffix_rgb[2] += color[2] * cb.weight;
                suffix_acc += cb.weight;
            }
        }
    }
    });

    MatX3 g_mean_conic = std::move(accums[0].conic);
    Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor> g_mean2d =
        std::move(accums[0].mean2d);
    grads.colors = std::move(accums[0].colors);
    grads.opacity_logits = std::move(accums[0].logits);
    for (int w = 1; w < workers; ++w) {
        g_mean_conic += accums[w].conic;
        g_mean2d += accums[w].mean2d;
        grads.colors += accums[w].colors;
        grads.opacity_logits += accums[w].logits;
    }

    // Per-Gaussian finalize: chain image-space grads to parameters.
    const CameraFrame& fr = proj.frame;
    for (const Projected& s : proj.splats) {
        Index gi = s.index;
        if (!gaussian_mask.empty() && !gaussian_mask[gi]) continue;
        Vec2 gm(g_mean2d(gi, 0), g_mean2d(gi, 1));
        grads.view_grad_norm[gi] = gm.norm();

        // Conic (a, b, c) back to the full symmetric 2x2 matrix.
        Mat2 g_conic;
        g_conic << g_mean_conic(gi, 0), 0.5 * g_mean_conic(gi, 1),
                   0.5 * g_mean_conic(gi, 1), g_mean_conic(gi, 2);
        Mat2 conic;
        conic << s.conic_a, s.conic_b, s.conic_b, s.conic_c;
        Mat2 g_cov2d = -conic * g_conic * conic;

        // cov2d = J cov_cam J^T (+ dilation which has no parameters).
        Mat3 g_cov_cam = s.jac.transpose() * g_cov2d * s.jac;
        Eigen::Matrix<double, 2, 3> g_jac =
            2.0 * g_cov2d * s.jac * s.cov_cam;

        // Projected mean back to the camera-space position.
        Vec3 g_pcam = s.jac.transpose() * gm;

        // J itself depends on the camera-space position.
        double f = fr.focal, d = s.depth;
        double d2 = d * d, d3 = d2 * d;
        g_pcam.x() += g_jac(0, 2) * (f / d2);
        g_pcam.y() += g_jac(1, 2) * (-f / d2);
        g_pcam.z() += g_jac(0, 0) * (f / d2) + g_jac(0, 2) * (2.0 * f * s.p_cam.x() / d3) +
                      g_jac(1, 1) * (-f / d2) + g_jac(1, 2) * (-2.0 * f * s.p_cam.y() / d3);

        grads.positions.row(gi) += (fr.rot.transpose() * g_pcam).transpose();

        // cov_cam = R_w cov_world R_w^T.
        Mat3 g_cov_world = fr.rot.transpose() * g_cov_cam * fr.rot;

        // cov_world = R diag(s^2) R^T.
        Vec4 q = cloud.rotations.row(gi).transpose();
        Mat3 rot = quat_to_rotation(q);
        Vec3 ls = cloud.log_scales.row(gi).transpose();
        Vec3 s2 = (2.0 * ls).array().exp();
        Mat3 rt_g_r = rot.transpose() * g_cov_world * rot;
        for (int k = 0; k < 3; ++k) grads.log_scales(gi, k) += 2.0 * s2[k] * rt_g_r(k, k);

        Mat3 g_rot = 2.0 * g_cov_world * rot * s2.asDiagonal();
        double w = q[0], x = q[1], y = q[2], z = q[3];
        Mat3 dR[4];
        dR[0] << 0, -z, y, z, 0, -x, -y, x, 0;
        dR[1] << 0, y, z, y, -2 * x, -w, z, w, -2 * x;
        dR[2] << -2 * y, x, w, x, 0, z, -w, z, -2 * y;
        dR[3] << -2 * z, -w, x, w, -2 * z, y, x, y, 0;
        Vec4 g_quat_hat;
        for (int k = 0; k < 4; ++k) g_quat_hat[k] = 2.0 * (g_rot.array() * dR[k].array()).sum();
        // Through normalization (stored quaternions are unit-norm).
        Vec4 g_quat = g_quat_hat - q * q.dot(g_quat_hat);
        grads.rotations.row(gi) += g_quat.transpose();
    }
    return grads;
}

}  // namespace im2mesh
