#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "im2mesh/config.hpp"
#include "im2mesh/io.hpp"
#include "im2mesh/metrics.hpp"

using namespace im2mesh;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_cli(const std::string& args) {
    std::string cmd = std::string(IM2MESH_BIN) + " " + args + " > /dev/null 2>&1";
    int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("config round-trips identically and rejects unknown keys") {
    RunConfig config;
    config.seed = 1234;
    config.coarse.lambda_rgb_end = 12345.5;
    config.refine.lr_texture = 0.0125;
    config.gt_mesh = "somewhere/gt.obj";

    std::string text = serialize_config(config);
    RunConfig parsed = parse_config(text);
    CHECK(serialize_config(parsed) == text);
    CHECK(parsed.seed == 1234);
    CHECK(parsed.coarse.lambda_rgb_end == 12345.5);
    CHECK(parsed.refine.lr_texture == 0.0125);
    CHECK(parsed.gt_mesh == "somewhere/gt.obj");

    // Exact double round trip (non-representable decimals included).
    RunConfig awkward;
    awkward.coarse.fov = 49.1;
    awkward.refine.lambda_consistency = 0.30000000000000004;
    RunConfig reparsed = parse_config(serialize_config(awkward));
    CHECK(reparsed.coarse.fov == awkward.coarse.fov);
    CHECK(reparsed.refine.lambda_consistency == awkward.refine.lambda_consistency);

    CHECK_THROWS(parse_config("[coarse]\nnot_a_key = 3\n"));
    CHECK_THROWS(parse_config("[nowhere]\nsteps = 3\n"));
    CHECK_THROWS(parse_config("[coarse]\nsteps == 3\n"));
    CHECK_THROWS(parse_config("[coarse]\nsteps = abc\n"));

    // Comments and blank lines are fine.
    RunConfig ok = parse_config("# comment\n\n[coarse]\nsteps = 7\n");
    CHECK(ok.coarse.steps == 7);

    CHECK_THROWS(parse_config("[run]\ncompose_mode = bogus\n").resolved_compose());
    RunConfig modecheck;
    modecheck.mode = "x";
    CHECK_THROWS(modecheck.resolved_refine());
}

TEST_CASE("obj export and import round-trip") {
    TriangleMesh mesh = make_uv_sphere(0.4, 8, 12);
    assign_procedural_colors(mesh, "gradient");
    TempDir dir("im2mesh_test_obj");
    fs::path p = dir.path / "m.obj";
    save_obj(mesh, p.string());
    TriangleMesh back = load_obj(p.string());
    REQUIRE(back.vertex_count() == mesh.vertex_count());
    REQUIRE(back.face_count() == mesh.face_count());
    CHECK((back.vertices - mesh.vertices).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((back.faces - mesh.faces).cwiseAbs().maxCoeff() == 0);
    REQUIRE(back.has_colors());
    CHECK((back.colors - mesh.colors).cwiseAbs().maxCoeff() < 1e-6);

    CHECK_THROWS(load_obj((dir.path / "missing.obj").string()));
}

TEST_CASE("png round trip preserves 8-bit rgba") {
    TempDir dir("im2mesh_test_png");
    Image rgb(9, 7, 3), alpha(9, 7, 1);
    Rng rng(3);
    for (double& v : rgb.data) v = rng.uniform();
    for (double& v : alpha.data) v = rng.uniform();
    fs::path p = dir.path / "img.png";
    save_png(p.string(), rgb, alpha);
    RgbaImage back = load_png(p.string());
    REQUIRE(back.has_alpha);
    for (size_t i = 0; i < rgb.data.size(); ++i)
        CHECK(std::abs(back.rgb.data[i] - rgb.data[i]) <= 0.5 / 255.0 + 1e-12);
    for (size_t i = 0; i < alpha.data.size(); ++i)
        CHECK(std::abs(back.alpha.data[i] - alpha.data[i]) <= 0.5 / 255.0 + 1e-12);

    // RGB-only save yields no alpha channel.
    fs::path q = dir.path / "opaque.png";
    save_png(q.string(), rgb);
    CHECK_FALSE(load_png(q.string()).has_alpha);
}

TEST_CASE("psnr formula and cap") {
    Image a(10, 10, 3, 0.5), b(10, 10, 3, 0.5);
    CHECK(psnr(a, b) == 99.0);

    Image c = a;
    for (double& v : c.data) v += 0.1;  // MSE = 0.01
    CHECK(psnr(a, c) == doctest::Approx(20.0).epsilon(1e-12));

    Image d = a;
    for (double& v : d.data) v += 0.01;  // MSE = 1e-4
    CHECK(psnr(a, d) == doctest::Approx(40.0).epsilon(1e-12));

    Image wrong(5, 5, 3, 0.5);
    CHECK_THROWS(psnr(a, wrong));
}

TEST_CASE("chamfer distance: identity, symmetry, monotonicity") {
    TriangleMesh sphere = make_uv_sphere(0.5, 24, 48);
    Rng rng(5);
    CHECK(chamfer(sphere, sphere, 20000, rng) < 1e-3);

    auto shifted = [&](double d) {
        TriangleMesh m = sphere;
        for (Index i = 0; i < m.vertex_count(); ++i) m.vertices(i, 0) += d;
        return m;
    };
    double prev = 0.0;
    for (double d : {0.05, 0.1, 0.2}) {
        Rng r(7);
        double cd = chamfer(sphere, shifted(d), 20000, r);
        CHECK(cd > prev);
        CHECK(cd <= d);  // offset spheres overlap, so the mean is below d
        prev = cd;
    }

    Rng r1(9), r2(9);
    TriangleMesh other = shifted(0.1);
    double ab = chamfer(sphere, other, 20000, r1);
    double ba = chamfer(other, sphere, 20000, r2);
    CHECK(ab == doctest::Approx(ba).epsilon(2e-2));

    CHECK_THROWS(chamfer(sphere, TriangleMesh{}, 100, rng));
}

TEST_CASE("cli: fixture, run, determinism, eval, error paths") {
    TempDir dir("im2mesh_test_cli");
    std::string fix = (dir.path / "fix").string();
    REQUIRE(run_cli("make-fixture --shape sphere --out-dir " + fix + " --resolution 48") == 0);
    CHECK(fs::exists(fix + "/gt.obj"));
    CHECK(fs::exists(fix + "/ref.png"));
    CHECK(fs::exists(fix + "/run.cfg"));

    // Shrink the run so the smoke test stays fast.
    RunConfig config = load_config(fix + "/run.cfg");
    config.coarse.steps = 40;
    config.coarse.init_count = 150;
    config.coarse.res_start = config.coarse.res_end = 32;
    config.coarse.densify_period = 20;
    config.refine_steps_s = 15;
    config.refine.grid_res = 20;
    config.refine.res_start = config.refine.res_end = 32;
    config.refine.warmup_uniform = 5;
    config.refine.texture.levels = 4;
    config.refine.texture.log2_table_size = 10;
    config.refine.texture.base_resolution = 4;
    config.refine.texture.max_resolution = 32;
    config.refine.texture.hidden_width = 16;
    save_config(config, fix + "/run.cfg");

    std::string out1 = (dir.path / "out1").string();
    REQUIRE(run_cli("run --config " + fix + "/run.cfg --image " + fix + "/ref.png --out-dir " +
                    out1 + " --seed 7 --threads 1") == 0);
    CHECK(fs::exists(out1 + "/cloud.bin"));
    CHECK(fs::exists(out1 + "/mesh.obj"));
    CHECK(fs::exists(out1 + "/refine.ckpt"));
    CHECK(fs::exists(out1 + "/metrics.jsonl"));
    CHECK(fs::exists(out1 + "/turntable_07.png"));
    TriangleMesh produced = load_obj(out1 + "/mesh.obj");
    CHECK(produced.face_count() >= 100);

    // Determinism: identical seeds give byte-identical metrics logs.
    std::string out2 = (dir.path / "out2").string();
    REQUIRE(run_cli("run --config " + fix + "/run.cfg --image " + fix + "/ref.png --out-dir " +
                    out2 + " --seed 7 --threads 1") == 0);
    CHECK(slurp(out1 + "/metrics.jsonl") == slurp(out2 + "/metrics.jsonl"));

    // Evaluation writes the report schema.
    REQUIRE(run_cli("eval --config " + fix + "/run.cfg --out-dir " + out1 + " --gt-mesh " + fix +
                    "/gt.obj --resolution 32") == 0);
    std::string report = slurp(out1 + "/report.json");
    CHECK(report.find("chamfer") != std::string::npos);
    CHECK(report.find("psnr") != std::string::npos);

    // Missing alpha channel is a user error naming the requirement.
    Image rgb(16, 16, 3, 0.5);
    save_png((dir.path / "noalpha.png").string(), rgb);
    std::string cmd = std::string(IM2MESH_BIN) + " coarse --config " + fix +
                      "/run.cfg --image " + (dir.path / "noalpha.png").string() +
                      " --out-dir " + (dir.path / "outx").string() + " 2> " +
                      (dir.path / "err.txt").string();
    int rc = WEXITSTATUS(std::system(cmd.c_str()));
    CHECK(rc == 1);
    std::string err = slurp(dir.path / "err.txt");
    CHECK(err.find("alpha") != std::string::npos);

    // Missing ground truth for eval fails.
    CHECK(run_cli("eval --config " + fix + "/run.cfg --out-dir " + out1 +
                  " --gt-mesh /nonexistent.obj") != 0);

    // Bad config is a user error.
    std::ofstream bad(dir.path / "bad.cfg");
    bad << "[coarse]\nunknown_key = 1\n";
    bad.close();
    CHECK(run_cli("coarse --config " + (dir.path / "bad.cfg").string() + " --image " + fix +
                  "/ref.png --out-dir " + (dir.path / "outy").string()) == 1);
}
