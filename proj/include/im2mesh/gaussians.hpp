#pragma once

#include <string>
#include <vector>

#include "im2mesh/types.hpp"

namespace im2mesh {

/// Anisotropic 3D Gaussian set, structure-of-arrays. Scales live in log
/// space, opacities as logits; quaternions are kept unit-norm (w, x, y, z).
struct GaussianCloud {
    MatX3 positions;       // N x 3
    MatX3 log_scales;      // N x 3, per-axis
    MatX4 rotations;       // N x 4 unit quaternions
    VecX opacity_logits;   // N
    MatX3 colors;          // N x 3 rgb in [0, 1]

    Index count() const { return positions.rows(); }

    double opacity(Index i) const { return sigmoid(opacity_logits[i]); }
    Vec3 scales(Index i) const { return log_scales.row(i).array().exp(); }

    void normalize_rotations();
};

/// Gradient statistics accumulated between densification events.
struct DensifyStats {
    VecX grad_norm_accum;   // view-space positional gradient norms
    VecX count;             // accumulation counts
    MatX3 world_grad_accum; // world-space positional gradients (clone offsets)

    explicit DensifyStats(Index n = 0) { reset(n); }
    void reset(Index n) {
        grad_norm_accum = VecX::Zero(n);
        count = VecX::Zero(n);
        world_grad_accum = MatX3::Zero(n, 3);
    }
};

/// New cloud plus, per surviving/new Gaussian, the index of the source
/// Gaussian in the old cloud (used to remap optimizer state; fresh splits
/// and clones carry their parent's index with is_new set).
struct CloudEdit {
    GaussianCloud cloud;
    std::vector<Index> parent;
    std::vector<uint8_t> is_new;
    bool all_pruned_warning = false;
};

/// Uniform positions in a ball, constant opacity and grey color, isotropic
/// log-scales from the mean nearest-neighbor distance.
GaussianCloud init_cloud(Index count, Rng& rng, double sphere_radius = 0.5,
                         double opacity = 0.1, const Vec3& color = Vec3(0.5, 0.5, 0.5));

/// Sigma = R diag(s^2) R^T for one Gaussian.
Mat3 covariance(const Vec3& log_scale, const Vec4& quat);

Mat3 quat_to_rotation(const Vec4& quat);

/// Top-K densification: the K = ceil(ratio * N) Gaussians with the largest
/// mean accumulated gradient are densified. Small ones (max scale below
/// `scale_split_threshold`) are cloned with a copy offset along the mean
/// world-space gradient direction; large ones split in two with scales
/// divided by 1.6 and positions sampled within the parent.
CloudEdit densify_topk(const GaussianCloud& cloud, const DensifyStats& stats, double ratio,
                       double scale_split_threshold, Rng& rng);

/// Indices that densify_topk would select (exposed for the subset property).
std::vector<Index> topk_selection(const DensifyStats& stats, Index n, double ratio);

/// Drop Gaussians with opacity below the threshold. If all fail, the single
/// max-opacity Gaussian survives and a warning flag is set.
CloudEdit prune(const GaussianCloud& cloud, double opacity_threshold = 0.1);

struct DensityOptions {
    bool exact = false;           // disable the 3-sigma cutoff
    double mahalanobis_cutoff = 3.0;
    double min_scale = 1e-6;      // clamp before inverting the covariance
};

/// Local density: sum over Gaussians of alpha_i * exp(-1/2 d^T Sigma_i^-1 d).
double density_at(const GaussianCloud& cloud, const Vec3& point, const DensityOptions& opts = {});

/// Density sampled on a (res+1)^3 vertex lattice over [-1,1]^3, scattering
/// each Gaussian into its cutoff footprint. With opts.exact every Gaussian
/// touches every vertex.
std::vector<double> density_on_grid(const GaussianCloud& cloud, int res,
                                    const DensityOptions& opts = {});

/// Little-endian binary checkpoint with a versioned header.
void save_cloud(const GaussianCloud& cloud, const std::string& path);
GaussianCloud load_cloud(const std::string& path);

}  // namespace im2mesh
