#include "im2mesh/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

namespace im2mesh {

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct Entry {
    std::string section, key;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

double parse_double(const std::string& s) {
    size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("bad number: " + s);
    return v;
}

long parse_int(const std::string& s) {
    size_t pos = 0;
    long v = std::stol(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("bad integer: " + s);
    return v;
}

bool parse_bool(const std::string& s) {
    if (s == "true") return true;
    if (s == "false") return false;
    throw std::invalid_argument("bad bool (want true/false): " + s);
}

std::vector<Entry> build_schema() {
    std::vector<Entry> e;
    auto add_d = [&](const char* sec, const char* key, auto getter, auto setter) {
        e.push_back({sec, key, [=](const RunConfig& c) { return fmt_double(getter(c)); },
                     [=](RunConfig& c, const std::string& s) { setter(c, parse_double(s)); }});
    };
    auto add_i = [&](const char* sec, const char* key, auto getter, auto setter) {
        e.push_back({sec, key, [=](const RunConfig& c) { return std::to_string(getter(c)); },
                     [=](RunConfig& c, const std::string& s) { setter(c, parse_int(s)); }});
    };
    auto add_b = [&](const char* sec, const char* key, auto getter, auto setter) {
        e.push_back({sec, key,
                     [=](const RunConfig& c) { return getter(c) ? std::string("true") : "false"; },
                     [=](RunConfig& c, const std::string& s) { setter(c, parse_bool(s)); }});
    };
    auto add_s = [&](const char* sec, const char* key, auto getter, auto setter) {
        e.push_back({sec, key, [=](const RunConfig& c) { return getter(c); },
                     [=](RunConfig& c, const std::string& s) { setter(c, s); }});
    };

#define DGET(field) [](const RunConfig& c) { return c.field; }
#define DSET(field) [](RunConfig& c, auto v) { c.field = v; }
#define DSETI(field, type) [](RunConfig& c, long v) { c.field = static_cast<type>(v); }

    add_i("run", "seed", DGET(seed), DSETI(seed, uint64_t));
    add_i("run", "threads", DGET(threads), DSETI(threads, int));
    add_s("run", "mode", DGET(mode), DSET(mode));
    add_s("run", "compose_mode", DGET(compose_mode), DSET(compose_mode));

    add_d("reference", "azimuth", DGET(ref_azimuth), DSET(ref_azimuth));
    add_d("reference", "elevation", DGET(ref_elevation), DSET(ref_elevation));

    // Camera constants are shared by both stages.
    add_d("camera", "radius", DGET(coarse.camera_radius), [](RunConfig& c, double v) {
        c.coarse.camera_radius = v;
        c.refine.camera_radius = v;
    });
    add_d("camera", "fov", DGET(coarse.fov), [](RunConfig& c, double v) {
        c.coarse.fov = v;
        c.refine.fov = v;
    });
    add_d("camera", "elevation_min", DGET(coarse.elevation_min), [](RunConfig& c, double v) {
        c.coarse.elevation_min = v;
        c.refine.elevation_min = v;
    });
    add_d("camera", "elevation_max", DGET(coarse.elevation_max), [](RunConfig& c, double v) {
        c.coarse.elevation_max = v;
        c.refine.elevation_max = v;
    });

    add_i("coarse", "steps", DGET(coarse.steps), DSETI(coarse.steps, int));
    add_i("coarse", "init_count", DGET(coarse.init_count), DSETI(coarse.init_count, Index));
    add_d("coarse", "init_radius", DGET(coarse.init_radius), DSET(coarse.init_radius));
    add_d("coarse", "init_opacity", DGET(coarse.init_opacity), DSET(coarse.init_opacity));
    add_i("coarse", "densify_period", DGET(coarse.densify_period),
          DSETI(coarse.densify_period, int));
    add_d("coarse", "topk_ratio_start", DGET(coarse.topk_ratio_start),
          DSET(coarse.topk_ratio_start));
    add_d("coarse", "topk_ratio_end", DGET(coarse.topk_ratio_end), DSET(coarse.topk_ratio_end));
    add_d("coarse", "prune_opacity", DGET(coarse.prune_opacity), DSET(coarse.prune_opacity));
    add_d("coarse", "split_scale_threshold", DGET(coarse.split_scale_threshold),
          DSET(coarse.split_scale_threshold));
    add_d("coarse", "lambda_sds", DGET(coarse.lambda_sds), DSET(coarse.lambda_sds));
    add_d("coarse", "lambda_scale", DGET(coarse.lambda_scale), DSET(coarse.lambda_scale));
    add_d("coarse", "lambda_tr", DGET(coarse.lambda_tr), DSET(coarse.lambda_tr));
    add_d("coarse", "lambda_rgb_start", DGET(coarse.lambda_rgb_start),
          DSET(coarse.lambda_rgb_start));
    add_d("coarse", "lambda_rgb_end", DGET(coarse.lambda_rgb_end), DSET(coarse.lambda_rgb_end));
    add_d("coarse", "lambda_mask_start", DGET(coarse.lambda_mask_start),
          DSET(coarse.lambda_mask_start));
    add_d("coarse", "lambda_mask_end", DGET(coarse.lambda_mask_end),
          DSET(coarse.lambda_mask_end));
    add_d("coarse", "tau_start", DGET(coarse.tau_start), DSET(coarse.tau_start));
    add_d("coarse", "tau_end", DGET(coarse.tau_end), DSET(coarse.tau_end));
    add_d("coarse", "top_opacity_fraction", DGET(coarse.top_opacity_fraction),
          DSET(coarse.top_opacity_fraction));
    add_d("coarse", "foreground_threshold", DGET(coarse.foreground_threshold),
          DSET(coarse.foreground_threshold));
    add_i("coarse", "res_start", DGET(coarse.res_start), DSETI(coarse.res_start, int));
    add_i("coarse", "res_end", DGET(coarse.res_end), DSETI(coarse.res_end, int));
    add_d("coarse", "lr_position", DGET(coarse.lr_position), DSET(coarse.lr_position));
    add_d("coarse", "lr_position_final", DGET(coarse.lr_position_final),
          DSET(coarse.lr_position_final));
    add_d("coarse", "lr_scale", DGET(coarse.lr_scale), DSET(coarse.lr_scale));
    add_d("coarse", "lr_rotation", DGET(coarse.lr_rotation), DSET(coarse.lr_rotation));
    add_d("coarse", "lr_opacity", DGET(coarse.lr_opacity), DSET(coarse.lr_opacity));
    add_d("coarse", "lr_color", DGET(coarse.lr_color), DSET(coarse.lr_color));

    add_i("refine", "steps_s", DGET(refine_steps_s), DSETI(refine_steps_s, int));
    add_i("refine", "steps_l", DGET(refine_steps_l), DSETI(refine_steps_l, int));
    add_i("refine", "batch", DGET(refine.batch), DSETI(refine.batch, int));
    add_i("refine", "grid_res", DGET(refine.grid_res), DSETI(refine.grid_res, int));
    add_d("refine", "lambda_rgb", DGET(refine.lambda_rgb), DSET(refine.lambda_rgb));
    add_d("refine", "lambda_mask", DGET(refine.lambda_mask), DSET(refine.lambda_mask));
    add_d("refine", "lambda_sdf", DGET(refine.lambda_sdf), DSET(refine.lambda_sdf));
    add_d("refine", "lambda_sds", DGET(refine.lambda_sds), DSET(refine.lambda_sds));
    add_d("refine", "lambda_consistency", DGET(refine.lambda_consistency),
          DSET(refine.lambda_consistency));
    add_d("refine", "lr_sdf", DGET(refine.lr_sdf), DSET(refine.lr_sdf));
    add_d("refine", "lr_deform", DGET(refine.lr_deform), DSET(refine.lr_deform));
    add_d("refine", "lr_interp", DGET(refine.lr_interp), DSET(refine.lr_interp));
    add_d("refine", "lr_texture", DGET(refine.lr_texture), DSET(refine.lr_texture));
    add_i("refine", "res_start", DGET(refine.res_start), DSETI(refine.res_start, int));
    add_i("refine", "res_end", DGET(refine.res_end), DSETI(refine.res_end, int));
    add_d("refine", "xi_start", DGET(refine.xi_start), DSET(refine.xi_start));
    add_d("refine", "xi_end", DGET(refine.xi_end), DSET(refine.xi_end));
    add_d("refine", "density_iso", DGET(refine.density_iso), DSET(refine.density_iso));
    add_d("refine", "far_margin_cells", DGET(refine.far_margin_cells),
          DSET(refine.far_margin_cells));
    add_d("refine", "fit_extent", DGET(refine.fit_extent), DSET(refine.fit_extent));
    add_i("refine", "warmup_uniform", DGET(refine.warmup_uniform),
          DSETI(refine.warmup_uniform, int));
    add_i("refine", "sampler_regions", DGET(refine.sampler_regions),
          DSETI(refine.sampler_regions, int));
    add_i("refine", "sampler_queue", DGET(refine.sampler_queue),
          DSETI(refine.sampler_queue, int));

    add_i("texture", "levels", DGET(refine.texture.levels), DSETI(refine.texture.levels, int));
    add_i("texture", "features_per_level", DGET(refine.texture.features_per_level),
          DSETI(refine.texture.features_per_level, int));
    add_i("texture", "log2_table_size", DGET(refine.texture.log2_table_size),
          DSETI(refine.texture.log2_table_size, int));
    add_d("texture", "base_resolution", DGET(refine.texture.base_resolution),
          DSET(refine.texture.base_resolution));
    add_d("texture", "max_resolution", DGET(refine.texture.max_resolution),
          DSET(refine.texture.max_resolution));
    add_i("texture", "hidden_width", DGET(refine.texture.hidden_width),
          DSETI(refine.texture.hidden_width, int));
    add_d("texture", "init_scale", DGET(refine.texture.init_scale),
          DSET(refine.texture.init_scale));

    // Timestep scheduler constants apply to both stages.
    add_d("priors", "t_start", DGET(coarse.timesteps.t_start), [](RunConfig& c, double v) {
        c.coarse.timesteps.t_start = v;
        c.refine.timesteps.t_start = v;
    });
    add_d("priors", "t_end", DGET(coarse.timesteps.t_end), [](RunConfig& c, double v) {
        c.coarse.timesteps.t_end = v;
        c.refine.timesteps.t_end = v;
    });
    add_i("priors", "interval_update_period", DGET(coarse.timesteps.update_period),
          [](RunConfig& c, long v) {
              c.coarse.timesteps.update_period = static_cast<int>(v);
              c.refine.timesteps.update_period = static_cast<int>(v);
          });
    add_d("priors", "interval_window", DGET(coarse.timesteps.window), [](RunConfig& c, double v) {
        c.coarse.timesteps.window = v;
        c.refine.timesteps.window = v;
    });
    add_s("priors", "gt_mesh", DGET(gt_mesh), DSET(gt_mesh));
    add_s("priors", "gt_texture", DGET(gt_texture), DSET(gt_texture));
    add_d("priors", "oracle_sigma_max", DGET(oracle_sigma_max), DSET(oracle_sigma_max));
    add_b("priors", "oracle_blur", DGET(oracle_blur), DSET(oracle_blur));

    add_d("compose", "editing_upper_start", DGET(editing_upper_start),
          DSET(editing_upper_start));
    add_d("compose", "editing_upper_end", DGET(editing_upper_end), DSET(editing_upper_end));
    add_d("compose", "enhancement_upper_start", DGET(enhancement_upper_start),
          DSET(enhancement_upper_start));
    add_d("compose", "enhancement_upper_end", DGET(enhancement_upper_end),
          DSET(enhancement_upper_end));
    add_d("compose", "lower_start", DGET(lower_start), DSET(lower_start));
    add_d("compose", "lower_end", DGET(lower_end), DSET(lower_end));
    add_d("compose", "front_eta_threshold", DGET(front_eta_threshold),
          DSET(front_eta_threshold));
    add_d("compose", "lower_eta_threshold", DGET(lower_eta_threshold),
          DSET(lower_eta_threshold));

#undef DGET
#undef DSET
#undef DSETI
    return e;
}

const std::vector<Entry>& schema() {
    static const std::vector<Entry> s = build_schema();
    return s;
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

RefineConfig RunConfig::resolved_refine() const {
    RefineConfig r = refine;
    if (mode == "s") {
        r.steps = refine_steps_s;
    } else if (mode == "l") {
        r.steps = refine_steps_l;
    } else {
        throw std::invalid_argument("config: mode must be 's' or 'l'");
    }
    return r;
}

ComposeSchedule RunConfig::resolved_compose() const {
    ComposeSchedule s;
    if (compose_mode == "editing") {
        s.mode = ComposeMode::Editing;
        s.upper_start = editing_upper_start;
        s.upper_end = editing_upper_end;
    } else if (compose_mode == "enhancement") {
        s.mode = ComposeMode::Enhancement;
        s.upper_start = enhancement_upper_start;
        s.upper_end = enhancement_upper_end;
    } else {
        throw std::invalid_argument("config: compose_mode must be 'editing' or 'enhancement'");
    }
    s.lower_start = lower_start;
    s.lower_end = lower_end;
    s.front_eta_threshold = front_eta_threshold;
    s.lower_eta_threshold = lower_eta_threshold;
    s.total_iters = resolved_refine().steps;
    return s;
}

std::string serialize_config(const RunConfig& config) {
    std::ostringstream out;
    std::string current;
    for (const Entry& e : schema()) {
        if (e.section != current) {
            if (!current.empty()) out << "\n";
            out << "[" << e.section << "]\n";
            current = e.section;
        }
        out << e.key << " = " << e.get(config) << "\n";
    }
    return out.str();
}

RunConfig parse_config(const std::string& text) {
    RunConfig config;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string s = trim(line);
        if (s.empty() || s[0] == '#' || s[0] == ';') continue;
        if (s.front() == '[' && s.back() == ']') {
            section = trim(s.substr(1, s.size() - 2));
            continue;
        }
        size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config line " + std::to_string(lineno) +
                                     ": expected key = value");
        std::string key = trim(s.substr(0, eq));
        std::string value = trim(s.substr(eq + 1));
        bool found = false;
        for (const Entry& e : schema()) {
            if (e.section == section && e.key == key) {
                e.set(config, value);
                found = true;
                break;
            }
        }
        if (!found)
            throw std::runtime_error("config line " + std::to_string(lineno) + ": unknown key [" +
                                     section + "] " + key);
    }
    return config;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

void save_config(const RunConfig& config, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write config " + path);
    out << serialize_config(config);
}

}  // namespace im2mesh
