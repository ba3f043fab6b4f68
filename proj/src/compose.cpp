#include "im2mesh/compose.hpp"

#include <limits>

namespace im2mesh {

ComposeSchedule ComposeSchedule::editing(int total_iters) {
    ComposeSchedule s;
    s.mode = ComposeMode::Editing;
    s.upper_start = 100.0;
    s.upper_end = 10.0;
    s.total_iters = total_iters;
    return s;
}

ComposeSchedule ComposeSchedule::enhancement(int total_iters) {
    ComposeSchedule s;
    s.mode = ComposeMode::Enhancement;
    s.upper_start = 2.0;
    s.upper_end = 0.5;
    s.total_iters = total_iters;
    return s;
}

Bounds compose_bounds(const ComposeSchedule& schedule, double eta, int iter) {
    if (eta < 0.0 || eta > 1.0) throw std::invalid_argument("compose_bounds: eta out of [0,1]");
    if (iter < 0 || iter > schedule.total_iters)
        throw std::invalid_argument("compose_bounds: iter out of range");
    double frac = schedule.total_iters > 0
                      ? static_cast<double>(iter) / schedule.total_iters
                      : 0.0;
    Bounds b;
    b.upper = lerp(schedule.upper_start, schedule.upper_end, frac);
    if (eta > schedule.front_eta_threshold) b.upper *= 1.0 - eta;
    b.upper = std::max(b.upper, 1e-6);
    b.lower_active = eta < schedule.lower_eta_threshold;
    if (b.lower_active)
        b.lower = std::min(lerp(schedule.lower_start, schedule.lower_end, frac), b.upper);
    return b;
}

ComposeResult compose(const Image& grad_phi, const Image& grad_rho, double eta, int iter,
                      const ComposeSchedule& schedule) {
    if (!grad_phi.same_shape(grad_rho))
        throw std::invalid_argument("compose: gradient shape mismatch");

    ComposeResult out;
    out.bounds = compose_bounds(schedule, eta, iter);
    out.scaled_phi = grad_phi;
    out.scaled_rho = grad_rho;

    double norm_phi = grad_phi.l2_norm();
    double norm_rho = grad_rho.l2_norm();
    if (norm_phi == 0.0) {
        // The 3D-aware term vanishing is transient; pass both through.
        out.ratio = std::numeric_limits<double>::infinity();
        out.degenerate = true;
        return out;
    }

    out.ratio = norm_rho / norm_phi;
    if (out.ratio > out.bounds.upper) {
        double s = out.bounds.upper / out.ratio;
        for (double& v : out.scaled_rho.data) v *= s;
        out.rescaled_rho = true;
    } else if (out.bounds.lower_active && out.ratio < out.bounds.lower) {
        double s = out.ratio / out.bounds.lower;
        for (double& v : out.scaled_phi.data) v *= s;
        out.rescaled_phi = true;
    }
    return out;
}

}  // namespace im2mesh
