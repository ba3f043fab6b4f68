#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "im2mesh/config.hpp"
#include "im2mesh/image_ops.hpp"
#include "im2mesh/io.hpp"
#include "im2mesh/metrics.hpp"
#include "im2mesh/stages.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace im2mesh;

namespace {

constexpr int kExitUserError = 1;
constexpr int kExitInternalAbort = 2;

json record_to_json(const MetricsRecord& r) {
    return json{{"stage", r.stage},
                {"step", r.step},
                {"loss_rgb", r.loss_rgb},
                {"loss_mask", r.loss_mask},
                {"sds_magnitude", r.sds_magnitude},
                {"scale_reg", r.scale_reg},
                {"tr_value", r.tr_value},
                {"sdf_reg", r.sdf_reg},
                {"consistency", r.consistency},
                {"ratio", r.ratio},
                {"ratio_post", r.ratio_post},
                {"bound_upper", r.bound_upper},
                {"bound_lower", r.bound_lower},
                {"lower_active", r.lower_active},
                {"azimuth", r.azimuth},
                {"elevation", r.elevation},
                {"eta", r.eta},
                {"t", r.t},
                {"n", r.n_gaussians}};
}

void write_metrics(const std::vector<MetricsRecord>& records, const std::string& path,
                   bool append) {
    std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write metrics " + path);
    for (const auto& r : records) out << record_to_json(r).dump() << "\n";
}

struct LoadedReference {
    Image rgb;    // premultiplied over black
    Image alpha;
};

LoadedReference load_reference(const std::string& path) {
    RgbaImage img = load_png(path);
    if (!img.has_alpha)
        throw std::runtime_error("input image " + path +
                                 " has no alpha channel; a foreground mask is required "
                                 "(pre-segmented RGBA input)");
    LoadedReference ref;
    ref.rgb = composite_over_black(img.rgb, img.alpha);
    ref.alpha = std::move(img.alpha);
    return ref;
}

std::shared_ptr<OracleBank> make_bank(const RunConfig& config, const std::string& config_dir) {
    if (config.gt_mesh.empty())
        throw std::runtime_error("config: [priors] gt_mesh is required for oracle runs");
    fs::path p = config.gt_mesh;
    if (p.is_relative() && !config_dir.empty()) p = fs::path(config_dir) / p;
    TriangleMesh mesh = load_obj(p.string());
    assign_procedural_colors(mesh, config.gt_texture);
    return std::make_shared<OracleBank>(std::move(mesh));
}

CameraPose reference_pose(const RunConfig& config, int resolution) {
    CameraPose pose;
    pose.azimuth = config.ref_azimuth;
    pose.elevation = config.ref_elevation;
    pose.radius = config.coarse.camera_radius;
    pose.fov = config.coarse.fov;
    pose.resolution = resolution;
    return pose;
}

std::vector<CameraPose> turntable_poses(const RunConfig& config, int count, int resolution) {
    std::vector<CameraPose> poses;
    for (int k = 0; k < count; ++k) {
        CameraPose pose;
        pose.azimuth = -180.0 + 360.0 * k / count;
        pose.elevation = 0.0;
        pose.radius = config.coarse.camera_radius;
        pose.fov = config.coarse.fov;
        pose.resolution = resolution;
        poses.push_back(pose);
    }
    return poses;
}

int run_coarse_cmd(const RunConfig& config, const std::string& config_dir,
                   const std::string& image_path, const std::string& out_dir) {
    fs::create_directories(out_dir);
    LoadedReference ref = load_reference(image_path);
    auto bank = make_bank(config, config_dir);
    OraclePrior prior(bank, config.oracle_sigma_max, config.oracle_blur);
    CameraPose ref_pose = reference_pose(config, config.coarse.res_end);

    CoarseConfig cc = config.coarse;
    cc.diagnostic_path = (fs::path(out_dir) / "coarse_abort.cloud").string();
    Rng rng(config.seed);
    CoarseResult result = run_coarse(cc, prior, ref.rgb, ref.alpha, ref_pose, rng);
    write_metrics(result.records, (fs::path(out_dir) / "metrics.jsonl").string(), false);
    if (result.aborted) {
        std::cerr << "coarse stage aborted: " << result.abort_reason << "\n";
        return kExitInternalAbort;
    }
    save_cloud(result.cloud, (fs::path(out_dir) / "cloud.bin").string());
    std::cout << "coarse done: " << result.cloud.count() << " gaussians -> " << out_dir
              << "/cloud.bin\n";
    return 0;
}

int export_outputs(const RunConfig& config, RefineResult& result, const std::string& out_dir) {
    TriangleMesh mesh = result.mesh;
    mesh.colors = bake_vertex_colors(mesh, *result.texture, config.ref_azimuth);
    save_obj(mesh, (fs::path(out_dir) / "mesh.obj").string());
    save_refine_checkpoint(result.grid, *result.texture,
                           (fs::path(out_dir) / "refine.ckpt").string());

    int res = config.refine.res_end;
    auto poses = turntable_poses(config, 8, res);
    CameraPose ref_pose = reference_pose(config, res);
    for (size_t k = 0; k < poses.size(); ++k) {
        double eta = balance_factor(poses[k], ref_pose);
        MeshImage img = render_mesh(result.mesh, result.texture.get(), eta, poses[k]);
        char name[64];
        std::snprintf(name, sizeof(name), "turntable_%02zu.png", k);
        save_png((fs::path(out_dir) / name).string(), img.rgb, img.mask);
    }
    std::cout << "exported mesh.obj, refine.ckpt and 8 turntable views to " << out_dir << "\n";
    return 0;
}

int run_refine_cmd(const RunConfig& config, const std::string& config_dir,
                   const std::string& image_path, const std::string& cloud_path,
                   const std::string& out_dir) {
    fs::create_directories(out_dir);
    LoadedReference ref = load_reference(image_path);
    auto bank = make_bank(config, config_dir);
    OraclePrior prior_phi(bank, config.oracle_sigma_max, config.oracle_blur);
    CameraPose ref_pose = reference_pose(config, config.refine.res_end);

    GaussianCloud cloud = load_cloud(cloud_path);
    RefineConfig rc = config.resolved_refine();

    // L-mode composes the oracle prior with a second, blurred-oracle prior
    // standing in for the diverse 2D prior (eta-scaled timesteps).
    std::unique_ptr<ScorePrior> prior_rho;
    std::optional<ComposeSchedule> schedule;
    if (config.mode == "l") {
        prior_rho = std::make_unique<OraclePrior>(bank, 2.0 * config.oracle_sigma_max, true);
        schedule = config.resolved_compose();
    }

    Rng rng(config.seed + 1);
    RefineResult result = run_refine(rc, prior_phi, prior_rho.get(),
                                     schedule ? &*schedule : nullptr, cloud, ref.rgb, ref.alpha,
                                     ref_pose, rng);
    write_metrics(result.records, (fs::path(out_dir) / "metrics.jsonl").string(), true);
    if (result.aborted) {
        std::cerr << "refine stage aborted: " << result.abort_reason << "\n";
        return kExitInternalAbort;
    }
    return export_outputs(config, result, out_dir);
}

int run_full_cmd(const RunConfig& config, const std::string& config_dir,
                 const std::string& image_path, const std::string& out_dir) {
    int rc = run_coarse_cmd(config, config_dir, image_path, out_dir);
    if (rc != 0) return rc;
    return run_refine_cmd(config, config_dir, image_path,
                          (fs::path(out_dir) / "cloud.bin").string(), out_dir);
}

int eval_cmd(const RunConfig& config, const std::string& config_dir, const std::string& out_dir,
             const std::string& gt_path, int resolution) {
    fs::path mesh_path = fs::path(out_dir) / "mesh.obj";
    fs::path ckpt_path = fs::path(out_dir) / "refine.ckpt";
    if (!fs::exists(mesh_path))
        throw std::runtime_error("eval: missing " + mesh_path.string() + " (run first)");
    if (!fs::exists(gt_path)) throw std::runtime_error("eval: ground-truth mesh not found");

    TriangleMesh mesh = load_obj(mesh_path.string());
    TriangleMesh gt = load_obj(gt_path);
    assign_procedural_colors(gt, config.gt_texture);
    OracleBank bank(gt);

    Rng rng(config.seed);
    double cd = chamfer(mesh, gt, 100000, rng);

    json report;
    report["chamfer"] = cd;
    report["views"] = json::array();

    bool have_texture = fs::exists(ckpt_path);
    std::unique_ptr<TextureField> texture;
    DeformableGrid grid;
    if (have_texture) {
        auto loaded = load_refine_checkpoint(ckpt_path.string(), config.refine.texture);
        grid = std::move(loaded.first);
        texture = std::move(loaded.second);
    }
    CameraPose ref_pose = reference_pose(config, resolution);

    auto t0 = std::chrono::steady_clock::now();
    for (const CameraPose& pose : turntable_poses(config, 8, resolution)) {
        Image target = bank.render_target(pose);
        Image rendered;
        if (texture) {
            double eta = balance_factor(pose, ref_pose);
            rendered = render_mesh(mesh, texture.get(), eta, pose).rgb;
        } else {
            rendered = render_mesh(mesh, nullptr, 1.0, pose).rgb;
        }
        report["views"].push_back({{"azimuth", pose.azimuth}, {"psnr", psnr(rendered, target)}});
    }
    auto t1 = std::chrono::steady_clock::now();
    report["eval_seconds"] = std::chrono::duration<double>(t1 - t0).count();

    std::ofstream out(fs::path(out_dir) / "report.json");
    out << report.dump(2) << "\n";
    std::cout << report.dump(2) << "\n";
    return 0;
}

int fixture_cmd(const std::string& shape, const std::string& texture_mode,
                const std::string& out_dir, double ref_azimuth, double ref_elevation,
                int resolution) {
    fs::create_directories(out_dir);
    TriangleMesh mesh;
    if (shape == "sphere") {
        mesh = make_uv_sphere(0.5, 32, 64);
    } else if (shape == "torus") {
        mesh = make_torus(0.35, 0.15, 64, 32);
    } else if (shape == "box") {
        mesh = make_box(Vec3(0.4, 0.3, 0.35));
    } else {
        throw std::runtime_error("fixture: unknown shape " + shape);
    }
    assign_procedural_colors(mesh, texture_mode);
    save_obj(mesh, (fs::path(out_dir) / "gt.obj").string());

    RunConfig config;
    config.gt_mesh = "gt.obj";
    config.gt_texture = texture_mode;
    config.ref_azimuth = ref_azimuth;
    config.ref_elevation = ref_elevation;
    save_config(config, (fs::path(out_dir) / "run.cfg").string());

    CameraPose pose = reference_pose(config, resolution);
    OracleBank bank(mesh);
    MeshRenderOptions opts;
    opts.mask_band = false;
    MeshImage img = render_mesh(mesh, nullptr, 1.0, pose, opts);
    save_png((fs::path(out_dir) / "ref.png").string(), img.rgb, img.mask);
    std::cout << "fixture written to " << out_dir << " (gt.obj, ref.png, run.cfg)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"single-image textured mesh reconstruction "
                 "(gaussian splatting + deformable isosurface refinement)"};
    app.require_subcommand(1);

    std::string config_path, image_path, out_dir, cloud_path, gt_path;
    std::string shape = "sphere", texture_mode = "gradient";
    double ref_azimuth = 0.0, ref_elevation = 0.0;
    int resolution = 64;
    int64_t seed_override = -1;
    int threads = 1;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "run configuration file")->required();
        cmd->add_option("--out-dir", out_dir, "output directory")->required();
        cmd->add_option("--seed", seed_override, "override the config seed");
        cmd->add_option("--threads", threads, "worker threads (1 = deterministic)");
    };

    CLI::App* coarse = app.add_subcommand("coarse", "coarse stage only");
    add_common(coarse);
    coarse->add_option("--image", image_path, "reference RGBA PNG")->required();

    CLI::App* refine = app.add_subcommand("refine", "refinement stage from a cloud checkpoint");
    add_common(refine);
    refine->add_option("--image", image_path, "reference RGBA PNG")->required();
    refine->add_option("--cloud", cloud_path, "coarse cloud checkpoint")->required();

    CLI::App* runc = app.add_subcommand("run", "coarse + refine + export");
    add_common(runc);
    runc->add_option("--image", image_path, "reference RGBA PNG")->required();

    CLI::App* evalc = app.add_subcommand("eval", "chamfer + 8-view PSNR against ground truth");
    add_common(evalc);
    evalc->add_option("--gt-mesh", gt_path, "ground-truth OBJ")->required();
    evalc->add_option("--resolution", resolution, "evaluation render resolution");

    CLI::App* fixture = app.add_subcommand("make-fixture", "generate a synthetic oracle scene");
    fixture->add_option("--shape", shape, "sphere | torus | box");
    fixture->add_option("--texture", texture_mode, "gradient | checker | vertex");
    fixture->add_option("--out-dir", out_dir, "output directory")->required();
    fixture->add_option("--ref-azimuth", ref_azimuth, "reference view azimuth");
    fixture->add_option("--ref-elevation", ref_elevation, "reference view elevation");
    fixture->add_option("--resolution", resolution, "reference image resolution");

    CLI11_PARSE(app, argc, argv);

    try {
        if (fixture->parsed())
            return fixture_cmd(shape, texture_mode, out_dir, ref_azimuth, ref_elevation,
                               resolution);

        RunConfig config = load_config(config_path);
        if (seed_override >= 0) config.seed = static_cast<uint64_t>(seed_override);
        config.threads = threads;
        config.coarse.threads = threads;
        config.refine.threads = threads;
        std::string config_dir = fs::path(config_path).parent_path().string();

        if (coarse->parsed()) return run_coarse_cmd(config, config_dir, image_path, out_dir);
        if (refine->parsed())
            return run_refine_cmd(config, config_dir, image_path, cloud_path, out_dir);
        if (runc->parsed()) return run_full_cmd(config, config_dir, image_path, out_dir);
        if (evalc->parsed()) return eval_cmd(config, config_dir, out_dir, gt_path, resolution);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUserError;
    } catch (const std::runtime_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUserError;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternalAbort;
    }
    return 0;
}
