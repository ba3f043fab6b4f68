#pragma once

#include <vector>

#include "im2mesh/camera.hpp"
#include "im2mesh/gaussians.hpp"
#include "im2mesh/types.hpp"

namespace im2mesh {

struct SplatContribution {
    int32_t gaussian;  // index into the cloud
    double weight;     // alpha_i * T_i at this pixel
};

/// Forward rasterization output. `accum_opacity` is the per-pixel
/// transmittance sum T_k; contributor lists are kept front-to-back so the
/// backward pass can replay the compositing.
struct SplatImage {
    Image rgb;            // H x W x 3, black background
    Image accum_opacity;  // H x W x 1
    std::vector<std::vector<SplatContribution>> contributors;

    const std::vector<SplatContribution>& pixel(int r, int c) const {
        return contributors[static_cast<size_t>(r) * rgb.width + c];
    }
};

struct SplatRenderOptions {
    bool exact = false;            // disable footprint/alpha cutoffs and early stop
    int threads = 1;               // row-parallel workers; results are
                                   // deterministic per fixed thread count
    double footprint_sigma = 3.0;  // bounding radius in projected sigmas
    double alpha_skip = 1.0 / 255.0;
    double early_stop = 1e-4;      // residual transmittance threshold
    double dilation = 0.3;         // anti-aliasing dilation on the 2D covariance
    double alpha_clamp = 0.99;
    double near = 0.05;
};

struct SplatGradients {
    MatX3 positions;
    MatX3 log_scales;
    MatX4 rotations;
    VecX opacity_logits;
    MatX3 colors;
    VecX view_grad_norm;  // per-Gaussian |dL/d(projected center)|, feeds DensifyStats

    explicit SplatGradients(Index n = 0) { resize(n); }
    void resize(Index n) {
        positions = MatX3::Zero(n, 3);
        log_scales = MatX3::Zero(n, 3);
        rotations = MatX4::Zero(n, 4);
        opacity_logits = VecX::Zero(n);
        colors = MatX3::Zero(n, 3);
        view_grad_norm = VecX::Zero(n);
    }
    bool all_finite() const;
};

SplatImage splat_render(const GaussianCloud& cloud, const CameraPose& pose,
                        const SplatRenderOptions& opts = {});

/// Backpropagate image-space gradients to all Gaussian parameters. The
/// forward image must come from the same (cloud, pose, opts).
/// `grad_opacity` may be masked to a Gaussian subset via `gaussian_mask`
/// (empty = all participate); the mask applies to every gradient path.
SplatGradients splat_backward(const GaussianCloud& cloud, const CameraPose& pose,
                              const SplatImage& image, const Image& grad_rgb,
                              const Image& grad_opacity, const SplatRenderOptions& opts = {},
                              const std::vector<bool>& gaussian_mask = {});

}  // namespace im2mesh
