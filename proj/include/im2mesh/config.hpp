#pragma once

#include <string>

#include "im2mesh/compose.hpp"
#include "im2mesh/stages.hpp"

namespace im2mesh {

/// Full run configuration: every tunable of every module with its default.
/// Serialized as sectioned key = value text; unknown keys are rejected and
/// parse -> serialize -> parse is the identity.
struct RunConfig {
    uint64_t seed = 0;
    int threads = 1;
    std::string mode = "s";               // "s": single prior, "l": composed priors
    std::string compose_mode = "editing"; // "editing" | "enhancement"

    double ref_azimuth = 0.0;
    double ref_elevation = 0.0;

    CoarseConfig coarse;
    RefineConfig refine;
    int refine_steps_s = 1000;
    int refine_steps_l = 2000;

    // Oracle prior.
    std::string gt_mesh;                 // OBJ with per-vertex colors
    std::string gt_texture = "vertex";   // "vertex" | "checker"
    double oracle_sigma_max = 2.0;
    bool oracle_blur = true;

    // Composition schedules.
    double editing_upper_start = 100.0, editing_upper_end = 10.0;
    double enhancement_upper_start = 2.0, enhancement_upper_end = 0.5;
    double lower_start = 10.0, lower_end = 1.0;
    double front_eta_threshold = 0.75, lower_eta_threshold = 0.5;

    /// Refine step count and schedules resolved for the selected mode.
    RefineConfig resolved_refine() const;
    ComposeSchedule resolved_compose() const;
};

std::string serialize_config(const RunConfig& config);
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);
void save_config(const RunConfig& config, const std::string& path);

}  // namespace im2mesh
