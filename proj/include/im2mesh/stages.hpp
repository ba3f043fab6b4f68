#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>

#include "im2mesh/camera.hpp"
#include "im2mesh/compose.hpp"
#include "im2mesh/gaussians.hpp"
#include "im2mesh/mesh_render.hpp"
#include "im2mesh/priors.hpp"
#include "im2mesh/splat_render.hpp"
#include "im2mesh/surface.hpp"
#include "im2mesh/texture.hpp"
#include "im2mesh/types.hpp"

namespace im2mesh {

/// Adam with per-group first/second moments. Groups are raw parameter
/// arrays; densification remaps moment rows through CloudEdit records.
class AdamOptimizer {
public:
    AdamOptimizer(double beta1 = 0.9, double beta2 = 0.99, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(const std::string& group, double* params, const double* grads, Index n, double lr);

    /// Rebuild a group's moments after a cloud edit: carried rows copy their
    /// parent's moments, fresh rows start at zero. `width` is values per row.
    void remap(const std::string& group, const std::vector<Index>& parent,
               const std::vector<uint8_t>& is_new, Index width);

private:
    struct State {
        VecX m, v;
        long t = 0;
    };
    double beta1_, beta2_, eps_;
    std::map<std::string, State> states_;
};

struct CoarseConfig {
    int steps = 500;
    Index init_count = 1000;
    double init_radius = 0.5;
    double init_opacity = 0.1;
    int densify_period = 100;
    double topk_ratio_start = 0.5, topk_ratio_end = 0.1;
    double prune_opacity = 0.1;
    double split_scale_threshold = 0.05;
    double lambda_sds = 2000.0;  // balances the per-pixel-normalized score term
    double lambda_scale = 0.01;
    double lambda_tr = 1.0;
    double lambda_rgb_start = 0.0, lambda_rgb_end = 10000.0;
    double lambda_mask_start = 0.0, lambda_mask_end = 1000.0;
    double tau_start = 0.4, tau_end = 0.9;
    double top_opacity_fraction = 0.8;
    double foreground_threshold = 0.01;
    int res_start = 64, res_end = 128;
    double camera_radius = 2.0, fov = 49.1;
    double elevation_min = -45.0, elevation_max = 45.0;
    double lr_position = 2e-3, lr_position_final = 2e-4;
    double lr_scale = 5e-3, lr_rotation = 1e-3, lr_opacity = 5e-2, lr_color = 1e-2;
    int threads = 1;
    TimestepScheduler timesteps;  // total_steps synced to steps by run_coarse
    std::string diagnostic_path;  // cloud dump target on NaN abort

    int resolution_at(int step) const;
};

struct RefineConfig {
    int steps = 1000;  // 2000 in L-mode
    int batch = 4;
    int grid_res = 48;
    double lambda_rgb = 1500.0, lambda_mask = 5000.0, lambda_sdf = 1.0, lambda_sds = 1.0;
    double lambda_consistency = 0.1;
    double lr_sdf = 0.001, lr_deform = 0.005, lr_interp = 0.005, lr_texture = 0.01;
    int res_start = 64, res_end = 128;
    double xi_start = 1.0, xi_end = 3.0;  // reached at steps/2, constant after
    double density_iso = 0.5;
    double far_margin_cells = 2.0;
    double fit_extent = 0.9;
    int warmup_uniform = 100;
    int sampler_regions = 5;
    int sampler_queue = 32;
    double camera_radius = 2.0, fov = 49.1;
    double elevation_min = -45.0, elevation_max = 45.0;
    int threads = 1;
    TextureConfig texture;
    TimestepScheduler timesteps;  // total_steps synced to steps by run_refine

    int resolution_at(int step) const;
    double xi_at(int step) const;
};

/// One line-delimited metrics record per optimization step.
struct MetricsRecord {
    std::string stage;
    int step = 0;
    double loss_rgb = 0.0, loss_mask = 0.0;
    double sds_magnitude = 0.0;
    double scale_reg = 0.0, tr_value = 0.0;
    double sdf_reg = 0.0, consistency = 0.0;
    double ratio = 0.0, ratio_post = 0.0;                      // composition, pre/post clamp
    double bound_upper = 0.0, bound_lower = 0.0;
    bool lower_active = false;
    double azimuth = 0.0, elevation = 0.0, eta = 0.0;
    double t = 0.0;
    Index n_gaussians = 0;
};

struct TransmittanceReg {
    double value = 0.0;   // -min(tau, mean T over foreground)
    double mean_t = 0.0;
    Index n_fg = 0;
    bool saturated = false;  // mean >= tau: gradient identically zero
    Image grad_opacity;      // d(value)/dT_k (pre lambda), H x W x 1
    std::vector<bool> top_opacity_mask;
};

/// Eq. 2 transmittance term on the current render; gradient flows only to
/// the top fraction of Gaussians by opacity.
TransmittanceReg transmittance_reg(const SplatImage& image, const GaussianCloud& cloud, double tau,
                                   double top_opacity_fraction = 0.8,
                                   double foreground_threshold = 0.01);

/// L1 scale regularizer: sum over Gaussians of |exp(log_scales)|_1.
/// Optionally accumulates weight * d/d(log_scales).
double scale_reg(const GaussianCloud& cloud, MatX3* grad_log_scales = nullptr,
                 double weight = 1.0);

struct CoarseResult {
    GaussianCloud cloud;
    std::vector<MetricsRecord> records;
    bool aborted = false;
    std::string abort_reason;
};

/// Coarse loop: uniform pose sampling, SDS feedback from the prior,
/// reference-view MSE terms, scale/transmittance regularization, Top-K
/// densification and pruning on the configured period.
CoarseResult run_coarse(const CoarseConfig& config, const ScorePrior& prior, const Image& ref_rgb,
                        const Image& ref_alpha, const CameraPose& ref_pose, Rng& rng);

struct RefineResult {
    DeformableGrid grid;
    std::unique_ptr<TextureField> texture;
    TriangleMesh mesh;  // final extraction (no colors baked)
    std::vector<MetricsRecord> records;
    long compose_calls = 0;
    bool aborted = false;
    std::string abort_reason;
};

/// Refinement loop: bridges the Gaussian cloud to a deformable SDF grid,
/// then optimizes geometry and disentangled texture with 3D-aware pose
/// sampling; a second prior plus schedule enables angular composition.
RefineResult run_refine(const RefineConfig& config, const ScorePrior& prior_phi,
                        const ScorePrior* prior_rho, const ComposeSchedule* compose_schedule,
                        const GaussianCloud& cloud, const Image& ref_rgb, const Image& ref_alpha,
                        const CameraPose& ref_pose, Rng& rng);

/// Per-vertex albedo bake: eta follows each vertex's azimuth relative to
/// the reference view.
MatX3 bake_vertex_colors(const TriangleMesh& mesh, const TextureField& texture,
                         double ref_azimuth);

void save_refine_checkpoint(const DeformableGrid& grid, const TextureField& texture,
                            const std::string& path);

/// Counterpart of save_refine_checkpoint; the texture configuration must
/// match the saved parameter count.
std::pair<DeformableGrid, std::unique_ptr<TextureField>> load_refine_checkpoint(
    const std::string& path, const TextureConfig& texture_config);

}  // namespace im2mesh
