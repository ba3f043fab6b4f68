#include "im2mesh/stages.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "im2mesh/image_ops.hpp"

namespace im2mesh {

void AdamOptimizer::step(const std::string& group, double* params, const double* grads, Index n,
                         double lr) {
    State& st = states_[group];
    if (st.m.size() != n) {
        st.m = VecX::Zero(n);
        st.v = VecX::Zero(n);
    }
    ++st.t;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(st.t));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(st.t));
    for (Index i = 0; i < n; ++i) {
        double g = grads[i];
        st.m[i] = beta1_ * st.m[i] + (1.0 - beta1_) * g;
        st.v[i] = beta2_ * st.v[i] + (1.0 - beta2_) * g * g;
        double mhat = st.m[i] / bc1;
        double vhat = st.v[i] / bc2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
}

void AdamOptimizer::remap(const std::string& group, const std::vector<Index>& parent,
                          const std::vector<uint8_t>& is_new, Index width) {
    auto it = states_.find(group);
    if (it == states_.end()) return;
    State& st = it->second;
    Index rows = static_cast<Index>(parent.size());
    VecX m = VecX::Zero(rows * width);
    VecX v = VecX::Zero(rows * width);
    for (Index r = 0; r < rows; ++r) {
        if (is_new[r]) continue;
        Index src = parent[r];
        if (src * width + width > st.m.size()) continue;
        m.segment(r * width, width) = st.m.segment(src * width, width);
        v.segment(r * width, width) = st.v.segment(src * width, width);
    }
    st.m = std::move(m);
    st.v = std::move(v);
}

namespace {

int snapped_resolution(int start, int end, double frac) {
    int res = static_cast<int>(std::lround(lerp(start, end, frac) / 8.0)) * 8;
    return std::max(8, res);
}

}  // namespace

int CoarseConfig::resolution_at(int step) const {
    return snapped_resolution(res_start, res_end, steps > 1 ? double(step) / (steps - 1) : 0.0);
}

int RefineConfig::resolution_at(int step) const {
    return snapped_resolution(res_start, res_end, steps > 1 ? double(step) / (steps - 1) : 0.0);
}

double RefineConfig::xi_at(int step) const {
    double half = 0.5 * steps;
    double frac = half > 0 ? std::min(1.0, step / half) : 1.0;
    return lerp(xi_start, xi_end, frac);
}

TransmittanceReg transmittance_reg(const SplatImage& image, const GaussianCloud& cloud, double tau,
                                   double top_opacity_fraction, double foreground_threshold) {
    TransmittanceReg out;
    int h = image.accum_opacity.height, w = image.accum_opacity.width;
    out.grad_opacity = Image(h, w, 1);

    double sum = 0.0;
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            double t = image.accum_opacity.at(r, c)[0];
            if (t > foreground_threshold) {
                sum += t;
                ++out.n_fg;
            }
        }
    }
    if (out.n_fg == 0) return out;  // term contributes 0, flagged by n_fg

    out.mean_t = sum / static_cast<double>(out.n_fg);
    out.value = -std::min(tau, out.mean_t);
    out.saturated = out.mean_t >= tau;
    if (!out.saturated) {
        double g = -1.0 / static_cast<double>(out.n_fg);
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c)
                if (image.accum_opacity.at(r, c)[0] > foreground_threshold)
                    out.grad_opacity.at(r, c)[0] = g;
    }

    // Top fraction by opacity, ties to the lower index.
    Index n = cloud.count();
    Index k = static_cast<Index>(std::ceil(top_opacity_fraction * static_cast<double>(n)));
    std::vector<Index> order(n);
    std::iota(order.begin(), order.end(), Index(0));
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
        return cloud.opacity_logits[a] > cloud.opacity_logits[b];
    });
    out.top_opacity_mask.assign(n, false);
    for (Index i = 0; i < std::min(k, n); ++i) out.top_opacity_mask[order[i]] = true;
    return out;
}

double scale_reg(const GaussianCloud& cloud, MatX3* grad_log_scales, double weight) {
    double total = 0.0;
    for (Index i = 0; i < cloud.count(); ++i) {
        for (int k = 0; k < 3; ++k) {
            double s = std::exp(cloud.log_scales(i, k));
            total += s;
            if (grad_log_scales) (*grad_log_scales)(i, k) += weight * s;
        }
    }
    return total;
}

namespace {

void scale_image_into(const Image& src, double s, Image& dst) {
    dst = src;
    for (double& v : dst.data) v *= s;
}

void add_scaled(Image& dst, const Image& src, double s) {
    for (size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += s * src.data[i];
}

bool finite_image(const Image& img) {
    for (double v : img.data)
        if (!std::isfinite(v)) return false;
    return true;
}

struct RefViews {
    std::map<int, std::pair<Image, Image>> by_resolution;  // rgb (premultiplied), alpha
    const Image* rgb = nullptr;
    const Image* alpha = nullptr;

    const std::pair<Image, Image>& at(int res) {
        auto it = by_resolution.find(res);
        if (it == by_resolution.end()) {
            it = by_resolution
                     .emplace(res, std::make_pair(resize_image(*rgb, res, res),
                                                  resize_image(*alpha, res, res)))
                     .first;
        }
        return it->second;
    }
};

}  // namespace

CoarseResult run_coarse(const CoarseConfig& config, const ScorePrior& prior, const Image& ref_rgb,
                        const Image& ref_alpha, const CameraPose& ref_pose, Rng& rng) {
    CoarseResult result;
    if (ref_rgb.channels != 3 || ref_alpha.channels != 1 || ref_rgb.height != ref_alpha.height ||
        ref_rgb.width != ref_alpha.width)
        throw std::invalid_argument("run_coarse: reference image must be rgb + alpha");

    TimestepScheduler scheduler = config.timesteps;
    scheduler.total_steps = config.steps;

    GaussianCloud cloud =
        init_cloud(config.init_count, rng, config.init_radius, config.init_opacity);
    DensifyStats stats(cloud.count());
    AdamOptimizer opt;

    PoseRanges ranges;
    ranges.radius = config.camera_radius;
    ranges.fov = config.fov;
    ranges.elevation_min = config.elevation_min;
    ranges.elevation_max = config.elevation_max;

    RefViews refs;
    refs.rgb = &ref_rgb;
    refs.alpha = &ref_alpha;

    SplatRenderOptions ropts;
    ropts.threads = config.threads;
    bool densified_once = false;

    auto abort_run = [&](const std::string& why) {
        result.aborted = true;
        result.abort_reason = why;
        if (!config.diagnostic_path.empty()) {
            try {
                save_cloud(cloud, config.diagnostic_path);
            } catch (const std::exception&) {
            }
        }
        result.cloud = std::move(cloud);
    };

    for (int step = 0; step < config.steps; ++step) {
        double frac = config.steps > 1 ? double(step) / (config.steps - 1) : 0.0;

        // Densify + prune on the period (events at 100, 200, ...).
        if (step > 0 && step % config.densify_period == 0) {
            double ratio = lerp(config.topk_ratio_start, config.topk_ratio_end, frac);
            CloudEdit dens =
                densify_topk(cloud, stats, ratio, config.split_scale_threshold, rng);
            opt.remap("positions", dens.parent, dens.is_new, 3);
            opt.remap("log_scales", dens.parent, dens.is_new, 3);
            opt.remap("rotations", dens.parent, dens.is_new, 4);
            opt.remap("opacity_logits", dens.parent, dens.is_new, 1);
            opt.remap("colors", dens.parent, dens.is_new, 3);
            cloud = std::move(dens.cloud);

            CloudEdit pruned = prune(cloud, config.prune_opacity);
            if (pruned.all_pruned_warning)
                std::fprintf(stderr, "coarse: all Gaussians below prune threshold at step %d; "
                                     "keeping max-opacity survivor\n", step);
            opt.remap("positions", pruned.parent, pruned.is_new, 3);
            opt.remap("log_scales", pruned.parent, pruned.is_new, 3);
            opt.remap("rotations", pruned.parent, pruned.is_new, 4);
            opt.remap("opacity_logits", pruned.parent, pruned.is_new, 1);
            opt.remap("colors", pruned.parent, pruned.is_new, 3);
            cloud = std::move(pruned.cloud);
            stats.reset(cloud.count());
            densified_once = true;
        }

        int res = config.resolution_at(step);
        ranges.resolution = res;

        CameraPose pose = sample_uniform(ranges, rng);
        double t = scheduler.sample(step, rng);

        SplatImage img = splat_render(cloud, pose, ropts);
        ScoreFeedback fb = prior.score(img.rgb, pose, t);
        if (!finite_image(fb.grad_image)) return abort_run("NaN in prior feedback"), result;

        Image zero_rgb(res, res, 3), zero_t(res, res, 1);

        Image grad_rgb_sampled;
        scale_image_into(fb.grad_image, config.lambda_sds, grad_rgb_sampled);
        SplatGradients grads =
            splat_backward(cloud, pose, img, grad_rgb_sampled, zero_t, ropts);

        // Transmittance regularization (after the first densification).
        double tau = lerp(config.tau_start, config.tau_end, frac);
        TransmittanceReg tr;
        if (densified_once) {
            tr = transmittance_reg(img, cloud, tau, config.top_opacity_fraction,
                                   config.foreground_threshold);
            if (tr.n_fg > 0 && !tr.saturated) {
                Image grad_t_tr;
                scale_image_into(tr.grad_opacity, config.lambda_tr, grad_t_tr);
                SplatGradients tr_grads = splat_backward(cloud, pose, img, zero_rgb, grad_t_tr,
                                                         ropts, tr.top_opacity_mask);
                grads.positions += tr_grads.positions;
                grads.log_scales += tr_grads.log_scales;
                grads.rotations += tr_grads.rotations;
                grads.opacity_logits += tr_grads.opacity_logits;
                grads.colors += tr_grads.colors;
            }
        }

        // Reference-view MSE terms.
        CameraPose rpose = ref_pose;
        rpose.resolution = res;
        const auto& [ref_rgb_r, ref_alpha_r] = refs.at(res);
        SplatImage rimg = splat_render(cloud, rpose, ropts);

        double lambda_rgb = lerp(config.lambda_rgb_start, config.lambda_rgb_end, frac);
        double lambda_mask = lerp(config.lambda_mask_start, config.lambda_mask_end, frac);
        double inv_rgb_n = 1.0 / static_cast<double>(rimg.rgb.data.size());
        double inv_mask_n = 1.0 / static_cast<double>(rimg.accum_opacity.data.size());

        Image grad_rgb_ref(res, res, 3), grad_t_ref(res, res, 1);
        double loss_rgb = 0.0, loss_mask = 0.0;
        for (size_t i = 0; i < rimg.rgb.data.size(); ++i) {
            double d = rimg.rgb.data[i] - ref_rgb_r.data[i];
            loss_rgb += d * d;
            grad_rgb_ref.data[i] = lambda_rgb * 2.0 * d * inv_rgb_n;
        }
        loss_rgb *= inv_rgb_n;
        for (size_t i = 0; i < rimg.accum_opacity.data.size(); ++i) {
            double d = rimg.accum_opacity.data[i] - ref_alpha_r.data[i];
            loss_mask += d * d;
            grad_t_ref.data[i] = lambda_mask * 2.0 * d * inv_mask_n;
        }
        loss_mask *= inv_mask_n;

        SplatGradients ref_grads =
            splat_backward(cloud, rpose, rimg, grad_rgb_ref, grad_t_ref, ropts);
        grads.positions += ref_grads.positions;
        grads.log_scales += ref_grads.log_scales;
        grads.rotations += ref_grads.rotations;
        grads.opacity_logits += ref_grads.opacity_logits;
        grads.colors += ref_grads.colors;

        double reg_value = scale_reg(cloud, &grads.log_scales, config.lambda_scale);

        if (!grads.all_finite()) return abort_run("NaN in coarse gradients"), result;

        // Densification statistics from both rendered views.
        for (Index i = 0; i < cloud.count(); ++i) {
            double norm = grads.view_grad_norm[i] + ref_grads.view_grad_norm[i];
            if (norm > 0.0) {
                stats.grad_norm_accum[i] += norm;
                stats.count[i] += 1.0;
            }
            stats.world_grad_accum.row(i) += grads.positions.row(i);
        }

        double lr_pos = config.lr_position *
                        std::pow(config.lr_position_final / config.lr_position, frac);
        opt.step("positions", cloud.positions.data(), grads.positions.data(),
                 cloud.positions.size(), lr_pos);
        opt.step("log_scales", cloud.log_scales.data(), grads.log_scales.data(),
                 cloud.log_scales.size(), config.lr_scale);
        opt.step("rotations", cloud.rotations.data(), grads.rotations.data(),
                 cloud.rotations.size(), config.lr_rotation);
        opt.step("opacity_logits", cloud.opacity_logits.data(), grads.opacity_logits.data(),
                 cloud.opacity_logits.size(), config.lr_opacity);
        opt.step("colors", cloud.colors.data(), grads.colors.data(), cloud.colors.size(),
                 config.lr_color);

        cloud.normalize_rotations();
        for (Index i = 0; i < cloud.log_scales.size(); ++i)
            cloud.log_scales.data()[i] =
                std::clamp(cloud.log_scales.data()[i], std::log(1e-6), std::log(2.0));

        MetricsRecord rec;
        rec.stage = "coarse";
        rec.step = step;
        rec.loss_rgb = loss_rgb;
        rec.loss_mask = loss_mask;
        rec.sds_magnitude = fb.magnitude;
        rec.scale_reg = reg_value;
        rec.tr_value = tr.value;
        rec.azimuth = pose.azimuth;
        rec.elevation = pose.elevation;
        rec.t = t;
        rec.n_gaussians = cloud.count();
        result.records.push_back(rec);
    }

    result.cloud = std::move(cloud);
    return result;
}

namespace {

/// Shrink-only normalization: the coarse mesh is recentered and rescaled
/// only when it does not already fit the target box, so oracle poses stay
/// aligned with the reference image.
void fit_mesh_to_box(TriangleMesh& mesh, double extent) {
    if (mesh.vertex_count() == 0) return;
    Vec3 lo, hi;
    mesh.bounds(lo, hi);
    if (lo.minCoeff() >= -extent && hi.maxCoeff() <= extent) return;
    Vec3 center = 0.5 * (lo + hi);
    double half = ((hi - lo) * 0.5).maxCoeff();
    double scale = half > extent ? extent / half : 1.0;
    for (Index i = 0; i < mesh.vertex_count(); ++i)
        mesh.vertices.row(i) =
            ((mesh.vertices.row(i).transpose() - center) * scale).transpose();
}

}  // namespace

RefineResult run_refine(const RefineConfig& config, const ScorePrior& prior_phi,
                        const ScorePrior* prior_rho, const ComposeSchedule* compose_schedule,
                        const GaussianCloud& cloud, const Image& ref_rgb, const Image& ref_alpha,
                        const CameraPose& ref_pose, Rng& rng) {
    RefineResult result;
    result.grid = DeformableGrid(config.grid_res);
    if (prior_rho && !compose_schedule)
        throw std::invalid_argument("run_refine: second prior requires a compose schedule");

    TimestepScheduler scheduler = config.timesteps;
    scheduler.total_steps = config.steps;

    // Bridge: density field -> coarse mesh -> SDF initialization.
    VertexGrid density_field(config.grid_res);
    {
        auto density = density_on_grid(cloud, config.grid_res);
        for (size_t i = 0; i < density.size(); ++i)
            density_field.values[i] = std::min(density[i], 1.0);
    }
    TriangleMesh coarse_mesh = marching_cubes(density_field, config.density_iso);
    if (coarse_mesh.empty()) {
        result.aborted = true;
        result.abort_reason =
            "degenerate coarse mesh (no density crossing); inspect the coarse-stage "
            "diagnostics and prune/opacity settings";
        return result;
    }
    fit_mesh_to_box(coarse_mesh, config.fit_extent);

    init_sdf_from_mesh(result.grid, coarse_mesh, config.far_margin_cells);
    scale_sdf(result.grid, 1.0);  // unit-normalize: min(sdf) == -1
    result.grid.sdf_initial = result.grid.sdf;

    Rng texture_rng(rng.raw());
    result.texture = std::make_unique<TextureField>(config.texture, texture_rng);
    TextureField& texture = *result.texture;

    PoseRanges ranges;
    ranges.radius = config.camera_radius;
    ranges.fov = config.fov;
    ranges.elevation_min = config.elevation_min;
    ranges.elevation_max = config.elevation_max;
    PoseSampler sampler(config.sampler_regions, config.sampler_queue, config.warmup_uniform,
                        ref_pose.azimuth, ranges);

    RefViews refs;
    refs.rgb = &ref_rgb;
    refs.alpha = &ref_alpha;

    AdamOptimizer opt;
    MeshRenderOptions mopts;
    mopts.threads = config.threads;

    // Interpolation/splitting weights receive no gradient from the
    // simplified extractor; they stay at their initialization.

    for (int step = 0; step < config.steps; ++step) {
        double xi = config.xi_at(step);
        int res = config.resolution_at(step);
        ranges.resolution = res;
        sampler.set_resolution(res);

        ExtractedMesh extracted = extract_mesh_differentiable(result.grid, xi);
        if (extracted.mesh.empty()) {
            result.aborted = true;
            result.abort_reason = "surface vanished during refinement";
            return result;
        }
        const TriangleMesh& mesh = extracted.mesh;

        MatX3 g_vertices = MatX3::Zero(mesh.vertex_count(), 3);
        VecX g_texture = VecX::Zero(texture.param_count());

        MetricsRecord rec;
        rec.stage = "refine";
        rec.step = step;
        rec.t = scheduler.sample(step, rng);

        for (int view = 0; view < config.batch; ++view) {
            CameraPose pose = sampler.sample(rng, step);
            double eta = balance_factor(pose, ref_pose);
            MeshImage img = render_mesh(mesh, &texture, eta, pose, mopts);
            ScoreFeedback fb_phi = prior_phi.score(img.rgb, pose, rec.t);

            Image grad_rgb;
            if (prior_rho) {
                double t_rho = prior_rho->timestep_transform(rec.t, eta);
                ScoreFeedback fb_rho = prior_rho->score(img.rgb, pose, t_rho);
                ComposeResult comp =
                    compose(fb_phi.grad_image, fb_rho.grad_image, eta, step, *compose_schedule);
                ++result.compose_calls;
                scale_image_into(comp.scaled_phi, config.lambda_sds, grad_rgb);
                add_scaled(grad_rgb, comp.scaled_rho, config.lambda_sds);

                rec.ratio = comp.ratio;
                double phi_mag = comp.scaled_phi.l2_norm();
                rec.ratio_post = phi_mag > 0.0 ? comp.scaled_rho.l2_norm() / phi_mag : 0.0;
                rec.bound_upper = comp.bounds.upper;
                rec.bound_lower = comp.bounds.lower;
                rec.lower_active = comp.bounds.lower_active;
            } else {
                scale_image_into(fb_phi.grad_image, config.lambda_sds, grad_rgb);
            }
            rec.sds_magnitude += fb_phi.magnitude;

            Image zero_mask(res, res, 1);
            MeshGradients mg =
                backward_mesh(mesh, texture, eta, pose, img, grad_rgb, zero_mask, mopts);
            g_vertices += mg.vertices;
            g_texture += mg.texture;

            sampler.record_error(pose.azimuth, fb_phi.error);
            rec.azimuth = pose.azimuth;
            rec.elevation = pose.elevation;
            rec.eta = eta;
        }

        // Reference view: rgb + mask MSE.
        {
            CameraPose rpose = ref_pose;
            rpose.resolution = res;
            const auto& [ref_rgb_r, ref_alpha_r] = refs.at(res);
            double eta_ref = balance_factor(rpose, ref_pose);
            MeshImage img = render_mesh(mesh, &texture, eta_ref, rpose, mopts);

            Image grad_rgb(res, res, 3), grad_mask(res, res, 1);
            double inv_rgb_n = 1.0 / static_cast<double>(img.rgb.data.size());
            double inv_mask_n = 1.0 / static_cast<double>(img.mask.data.size());
            double w_rgb = config.lambda_rgb * config.lambda_sds;  // Eq. 5 product, literal
            for (size_t i = 0; i < img.rgb.data.size(); ++i) {
                double d = img.rgb.data[i] - ref_rgb_r.data[i];
                rec.loss_rgb += d * d;
                grad_rgb.data[i] = w_rgb * 2.0 * d * inv_rgb_n;
            }
            rec.loss_rgb *= inv_rgb_n;
            for (size_t i = 0; i < img.mask.data.size(); ++i) {
                double d = img.mask.data[i] - ref_alpha_r.data[i];
                rec.loss_mask += d * d;
                grad_mask.data[i] = config.lambda_mask * 2.0 * d * inv_mask_n;
            }
            rec.loss_mask *= inv_mask_n;

            MeshGradients mg =
                backward_mesh(mesh, texture, eta_ref, rpose, img, grad_rgb, grad_mask, mopts);
            g_vertices += mg.vertices;
            g_texture += mg.texture;
        }

        rec.consistency =
            normal_consistency_with_grad(mesh, g_vertices, config.lambda_consistency);

        // Vertex gradients back to the field (chained through the gain) and
        // the deformations.
        VecX g_field = VecX::Zero(result.grid.vertex_count());
        MatX3 g_deform = MatX3::Zero(result.grid.vertex_count(), 3);
        extracted.backward(g_vertices, g_field, g_deform);
        VecX g_sdf = xi * g_field;

        rec.sdf_reg = sdf_regularizer(result.grid, xi, &g_sdf, config.lambda_sdf);

        if (!g_sdf.allFinite() || !g_deform.allFinite() || !g_texture.allFinite()) {
            result.aborted = true;
            result.abort_reason = "NaN in refine gradients";
            return result;
        }

        opt.step("sdf", result.grid.sdf.data(), g_sdf.data(), result.grid.sdf.size(),
                 config.lr_sdf);
        opt.step("deform", result.grid.deform.data(), g_deform.data(), result.grid.deform.size(),
                 config.lr_deform);
        opt.step("texture", texture.params().data(), g_texture.data(), texture.param_count(),
                 config.lr_texture);
        result.grid.clamp_deformations();

        rec.n_gaussians = mesh.vertex_count();
        result.records.push_back(rec);
    }

    result.mesh = extract_mesh_differentiable(result.grid, config.xi_at(config.steps)).mesh;
    return result;
}

MatX3 bake_vertex_colors(const TriangleMesh& mesh, const TextureField& texture,
                         double ref_azimuth) {
    MatX3 colors(mesh.vertex_count(), 3);
    for (Index i = 0; i < mesh.vertex_count(); ++i) {
        Vec3 p = mesh.vertices.row(i).transpose();
        double azimuth = rad2deg(std::atan2(p.x(), p.z()));
        double eta = (std::cos(deg2rad(azimuth - ref_azimuth)) + 1.0) / 2.0;
        colors.row(i) = texture.albedo(p, eta).transpose();
    }
    return colors;
}

void save_refine_checkpoint(const DeformableGrid& grid, const TextureField& texture,
                            const std::string& path) {
    save_grid(grid, path);
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) throw std::runtime_error("save_refine_checkpoint: cannot append to " + path);
    uint64_t n = static_cast<uint64_t>(texture.param_count());
    out.write(reinterpret_cast<const char*>(&n), sizeof(n));
    out.write(reinterpret_cast<const char*>(texture.params().data()),
              static_cast<std::streamsize>(sizeof(double) * n));
    if (!out) throw std::runtime_error("save_refine_checkpoint: write failed");
}

std::pair<DeformableGrid, std::unique_ptr<TextureField>> load_refine_checkpoint(
    const std::string& path, const TextureConfig& texture_config) {
    DeformableGrid grid = load_grid(path);

    // The texture blob sits after the grid payload; reopen and skip to it.
    std::ifstream in(path, std::ios::binary);
    size_t vc = static_cast<size_t>(grid.vertex_count());
    size_t cc = static_cast<size_t>(grid.cell_count());
    size_t grid_bytes = 12 + sizeof(double) * (vc + 3 * vc + 20 * cc + cc + vc) + vc;
    in.seekg(static_cast<std::streamoff>(grid_bytes));

    uint64_t n = 0;
    in.read(reinterpret_cast<char*>(&n), sizeof(n));
    if (!in) throw std::runtime_error("load_refine_checkpoint: missing texture blob in " + path);
    Rng dummy(0);
    auto texture = std::make_unique<TextureField>(texture_config, dummy);
    if (static_cast<uint64_t>(texture->param_count()) != n)
        throw std::runtime_error(
            "load_refine_checkpoint: texture configuration does not match checkpoint");
    in.read(reinterpret_cast<char*>(texture->params().data()),
            static_cast<std::streamsize>(sizeof(double) * n));
    if (!in) throw std::runtime_error("load_refine_checkpoint: truncated texture blob");
    return {std::move(grid), std::move(texture)};
}

}  // namespace im2mesh
