#pragma once

#include <memory>

#include "im2mesh/camera.hpp"
#include "im2mesh/mesh.hpp"
#include "im2mesh/mesh_render.hpp"
#include "im2mesh/types.hpp"

namespace im2mesh {

/// A prior's gradient on the rendered image plus its scalar error estimate
/// (fed to the 3D-aware pose sampler).
struct ScoreFeedback {
    Image grad_image;       // dL/dx, same shape as the rendered image
    double magnitude = 0.0; // |grad_image|_2
    double error = 0.0;     // >= 0
};

/// Score source contract. Implementations are immutable after construction;
/// score() is pure and never mutates the rendered image.
class ScorePrior {
public:
    virtual ~ScorePrior() = default;

    virtual ScoreFeedback score(const Image& rendered, const CameraPose& pose, double t) const = 0;

    /// Optional timestep transform hook (identity by default). Real diverse
    /// priors scale t by the balance factor to stay consistent with the
    /// reference view.
    virtual double timestep_transform(double t, double /*eta*/) const { return t; }
};

/// Annealing interval for SDS timesteps: the center tracks a linear ramp
/// from t_start to t_end, frozen within 50-step blocks, with a window of
/// width W clipped to [t_end, t_start].
struct TimestepScheduler {
    double t_start = 980.0;
    double t_end = 20.0;
    int total_steps = 500;
    int update_period = 50;
    double window = 100.0;

    std::pair<double, double> interval(int step) const;
    double sample(int step, Rng& rng) const;
};

/// Ground-truth view source: renders a known mesh (vertex colors, flat
/// shading) at the exact queried pose, non-differentiably.
class OracleBank {
public:
    explicit OracleBank(TriangleMesh mesh);

    const TriangleMesh& mesh() const { return mesh_; }
    Image render_target(const CameraPose& pose) const;

private:
    TriangleMesh mesh_;
};

/// target = GT render blurred with sigma = sigma_max * (t - 20) / 960;
/// grad = 2 (rendered - target) / (H W); error = mean |rendered - target|.
ScoreFeedback oracle_score(const OracleBank& bank, const Image& rendered, const CameraPose& pose,
                           double t, double sigma_max = 2.0, bool blur_enabled = true);

class OraclePrior : public ScorePrior {
public:
    OraclePrior(std::shared_ptr<OracleBank> bank, double sigma_max = 2.0, bool blur_enabled = true)
        : bank_(std::move(bank)), sigma_max_(sigma_max), blur_enabled_(blur_enabled) {}

    ScoreFeedback score(const Image& rendered, const CameraPose& pose, double t) const override {
        return oracle_score(*bank_, rendered, pose, t, sigma_max_, blur_enabled_);
    }

    const OracleBank& bank() const { return *bank_; }

private:
    std::shared_ptr<OracleBank> bank_;
    double sigma_max_;
    bool blur_enabled_;
};

/// Fixed-direction, fixed-magnitude feedback for composition tests.
class ConstantPrior : public ScorePrior {
public:
    ConstantPrior(Image direction, double magnitude, bool scale_t_by_eta = false);

    ScoreFeedback score(const Image& rendered, const CameraPose& pose, double t) const override;
    double timestep_transform(double t, double eta) const override {
        return scale_t_by_eta_ ? t * eta : t;
    }

private:
    Image unit_direction_;
    double magnitude_;
    bool scale_t_by_eta_;
};

/// Separable Gaussian blur with clamp-to-edge padding; sigma <= 0 returns
/// the input unchanged.
Image gaussian_blur(const Image& img, double sigma);

}  // namespace im2mesh
