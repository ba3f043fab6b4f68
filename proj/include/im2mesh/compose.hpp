#pragma once

#include "im2mesh/types.hpp"

namespace im2mesh {

enum class ComposeMode { Editing, Enhancement };

/// Bound schedules for the gradient-magnitude ratio G between the diverse
/// prior and the 3D-aware prior. Editing anneals the upper bound 100 -> 10,
/// enhancement 2 -> 0.5; the lower bound (active for unseen views only)
/// anneals 10 -> 1 and is capped at the upper bound so the two clamping
/// clauses stay mutually exclusive.
struct ComposeSchedule {
    ComposeMode mode = ComposeMode::Editing;
    double upper_start = 100.0, upper_end = 10.0;
    double lower_start = 10.0, lower_end = 1.0;
    double front_eta_threshold = 0.75;  // above: upper bound scaled by (1 - eta)
    double lower_eta_threshold = 0.5;   // below: lower bound active
    int total_iters = 1000;

    static ComposeSchedule editing(int total_iters);
    static ComposeSchedule enhancement(int total_iters);
};

struct Bounds {
    double upper = 0.0;
    double lower = 0.0;
    bool lower_active = false;
};

/// Evaluate the bound schedules at (eta, iter).
Bounds compose_bounds(const ComposeSchedule& schedule, double eta, int iter);

struct ComposeResult {
    Image scaled_phi;
    Image scaled_rho;
    double ratio = 0.0;       // G before clamping; +inf when |grad_phi| = 0
    Bounds bounds;
    bool rescaled_phi = false;
    bool rescaled_rho = false;
    bool degenerate = false;  // |grad_phi| = 0: both passed through unchanged
};

/// Clamp the magnitude ratio G = |grad_rho| / |grad_phi| into the active
/// bounds: G > upper scales rho by upper/G; G < lower scales phi by G/lower.
/// Directions are always preserved.
ComposeResult compose(const Image& grad_phi, const Image& grad_rho, double eta, int iter,
                      const ComposeSchedule& schedule);

}  // namespace im2mesh
