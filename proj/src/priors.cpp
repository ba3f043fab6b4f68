#include "im2mesh/priors.hpp"

#include <algorithm>

namespace im2mesh {

std::pair<double, double> TimestepScheduler::interval(int step) const {
    if (step < 0 || step >= total_steps)
        throw std::invalid_argument("TimestepScheduler::interval: step out of range");
    double block = static_cast<double>((step / update_period) * update_period);
    double center = t_start + (t_end - t_start) * block / total_steps;
    double lo = std::max(t_end, center - 0.5 * window);
    double hi = std::min(t_start, center + 0.5 * window);
    return {lo, hi};
}

double TimestepScheduler::sample(int step, Rng& rng) const {
    auto [lo, hi] = interval(step);
    return lo == hi ? lo : rng.uniform(lo, hi);
}

OracleBank::OracleBank(TriangleMesh mesh) : mesh_(std::move(mesh)) {
    if (mesh_.face_count() == 0) throw std::invalid_argument("OracleBank: mesh has no faces");
    if (!mesh_.has_colors())
        throw std::invalid_argument("OracleBank: mesh needs per-vertex colors");
}

Image OracleBank::render_target(const CameraPose& pose) const {
    MeshRenderOptions opts;
    opts.mask_band = false;  // hard targets
    return render_mesh(mesh_, nullptr, 1.0, pose, opts).rgb;
}

Image gaussian_blur(const Image& img, double sigma) {
    if (sigma <= 1e-12) return img;
    int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += kernel[i + radius];
    }
    for (double& k : kernel) k /= sum;

    Image tmp(img.height, img.width, img.channels);
    Image out(img.height, img.width, img.channels);
    int h = img.height, w = img.width, c = img.channels;
    for (int r = 0; r < h; ++r) {
        for (int col = 0; col < w; ++col) {
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int k = -radius; k <= radius; ++k) {
                    int cc = std::clamp(col + k, 0, w - 1);
                    acc += kernel[k + radius] * img.at(r, cc)[ch];
                }
                tmp.at(r, col)[ch] = acc;
            }
        }
    }
    for (int r = 0; r < h; ++r) {
        for (int col = 0; col < w; ++col) {
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int k = -radius; k <= radius; ++k) {
                    int rr = std::clamp(r + k, 0, h - 1);
                    acc += kernel[k + radius] * tmp.at(rr, col)[ch];
                }
                out.at(r, col)[ch] = acc;
            }
        }
    }
    return out;
}

ScoreFeedback oracle_score(const OracleBank& bank, const Image& rendered, const CameraPose& pose,
                           double t, double sigma_max, bool blur_enabled) {
    Image target = bank.render_target(pose);
    if (!target.same_shape(rendered))
        throw std::invalid_argument("oracle_score: rendered image shape does not match the pose");
    if (blur_enabled) {
        double sigma = sigma_max * (t - 20.0) / 960.0;
        target = gaussian_blur(target, sigma);
    }

    ScoreFeedback fb;
    fb.grad_image = Image(rendered.height, rendered.width, rendered.channels);
    double scale = 2.0 / (static_cast<double>(rendered.height) * rendered.width);
    double abs_sum = 0.0, sq_sum = 0.0;
    for (size_t i = 0; i < rendered.data.size(); ++i) {
        double diff = rendered.data[i] - target.data[i];
        double g = scale * diff;
        fb.grad_image.data[i] = g;
        abs_sum += std::abs(diff);
        sq_sum += g * g;
    }
    fb.magnitude = std::sqrt(sq_sum);
    fb.error = abs_sum / static_cast<double>(rendered.data.size());
    return fb;
}

ConstantPrior::ConstantPrior(Image direction, double magnitude, bool scale_t_by_eta)
    : unit_direction_(std::move(direction)), magnitude_(magnitude),
      scale_t_by_eta_(scale_t_by_eta) {
    if (magnitude_ < 0.0) throw std::invalid_argument("ConstantPrior: magnitude must be >= 0");
    double norm = unit_direction_.l2_norm();
    if (norm > 0.0)
        for (double& v : unit_direction_.data) v /= norm;
}

ScoreFeedback ConstantPrior::score(const Image& rendered, const CameraPose& /*pose*/,
                                   double /*t*/) const {
    if (!rendered.same_shape(unit_direction_))
        throw std::invalid_argument("ConstantPrior: rendered shape mismatch");
    ScoreFeedback fb;
    fb.grad_image = unit_direction_;
    for (double& v : fb.grad_image.data) v *= magnitude_;
    fb.magnitude = magnitude_;
    fb.error = magnitude_;
    return fb;
}

}  // namespace im2mesh
