#include "im2mesh/mesh_render.hpp"

#include <algorithm>
#include <map>

#include "im2mesh/parallel.hpp"

namespace im2mesh {

namespace {

struct ProjectedVerts {
    CameraFrame frame;
    std::vector<Vec2> screen;
    std::vector<double> depth;
    std::vector<bool> valid;
};

ProjectedVerts project_vertices(const TriangleMesh& mesh, const CameraPose& pose, double near) {
    ProjectedVerts pv;
    pv.frame = make_frame(pose);
    Index n = mesh.vertex_count();
    pv.screen.resize(n);
    pv.depth.resize(n);
    pv.valid.resize(n);
    for (Index i = 0; i < n; ++i) {
        Vec3 c = pv.frame.world_to_cam(mesh.vertices.row(i).transpose());
        double d = pv.frame.depth_of(c);
        pv.valid[i] = d > near;
        pv.depth[i] = d;
        pv.screen[i] = pv.valid[i] ? pv.frame.project(c) : Vec2::Zero();
    }
    return pv;
}

double edge_fn(const Vec2& p, const Vec2& a, const Vec2& b) {
    return (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x());
}

/// Signed screen area of a face (zero when edge-on or clipped).
double face_area2d(const ProjectedVerts& pv, const TriangleMesh& mesh, Index f) {
    int i0 = mesh.faces(f, 0), i1 = mesh.faces(f, 1), i2 = mesh.faces(f, 2);
    if (!pv.valid[i0] || !pv.valid[i1] || !pv.valid[i2]) return 0.0;
    return edge_fn(pv.screen[i0], pv.screen[i1], pv.screen[i2]);
}

}  // namespace

MeshImage render_mesh(const TriangleMesh& mesh, const TextureField* texture, double eta,
                      const CameraPose& pose, const MeshRenderOptions& opts) {
    int res = pose.resolution;
    MeshImage out;
    out.rgb = Image(res, res, 3);
    out.mask = Image(res, res, 1);
    out.hits.resize(static_cast<size_t>(res) * res);
    if (mesh.empty()) return out;
    if (!texture && !mesh.has_colors())
        throw std::invalid_argument("render_mesh: no texture and no vertex colors");

    ProjectedVerts pv = project_vertices(mesh, pose, opts.near);

    // Visibility.
    for (Index f = 0; f < mesh.face_count(); ++f) {
        int i0 = mesh.faces(f, 0), i1 = mesh.faces(f, 1), i2 = mesh.faces(f, 2);
        if (!pv.valid[i0] || !pv.valid[i1] || !pv.valid[i2]) continue;
        const Vec2 &s0 = pv.screen[i0], &s1 = pv.screen[i1], &s2 = pv.screen[i2];
        double area = edge_fn(s0, s1, s2);
        if (std::abs(area) < 1e-12) continue;

        int x0 = std::max(0, static_cast<int>(std::floor(std::min({s0.x(), s1.x(), s2.x()}) - 0.5)));
        int x1 = std::min(res - 1, static_cast<int>(std::ceil(std::max({s0.x(), s1.x(), s2.x()}))));
        int y0 = std::max(0, static_cast<int>(std::floor(std::min({s0.y(), s1.y(), s2.y()}) - 0.5)));
        int y1 = std::min(res - 1, static_cast<int>(std::ceil(std::max({s0.y(), s1.y(), s2.y()}))));

        for (int row = y0; row <= y1; ++row) {
            for (int col = x0; col <= x1; ++col) {
                Vec2 p(col + 0.5, row + 0.5);
                double e0 = edge_fn(p, s1, s2);
                double e1 = edge_fn(p, s2, s0);
                double e2 = edge_fn(p, s0, s1);
                double l0 = e0 / area, l1 = e1 / area, l2 = e2 / area;
                if (l0 < 0.0 || l1 < 0.0 || l2 < 0.0) continue;

                double a0 = l0 / pv.depth[i0], a1 = l1 / pv.depth[i1], a2 = l2 / pv.depth[i2];
                double s = a0 + a1 + a2;
                double depth = 1.0 / s;
                MeshHit& hit = out.hits[static_cast<size_t>(row) * res + col];
                if (hit.valid() && hit.depth <= depth) continue;
                hit.face = static_cast<int32_t>(f);
                hit.depth = depth;
                hit.bary[0] = a0 / s;
                hit.bary[1] = a1 / s;
                hit.bary[2] = a2 / s;
            }
        }
    }

    // Shading.
    Vec3 light = -pv.frame.forward;
    parallel_rows(res, opts.threads, [&](int, int row_begin, int row_end) {
    for (int row = row_begin; row < row_end; ++row) {
        for (int col = 0; col < res; ++col) {
            const MeshHit& hit = out.hits[static_cast<size_t>(row) * res + col];
            if (!hit.valid()) continue;
            Index f = hit.face;
            Vec3 v0 = mesh.vertices.row(mesh.faces(f, 0)).transpose();
            Vec3 v1 = mesh.vertices.row(mesh.faces(f, 1)).transpose();
            Vec3 v2 = mesh.vertices.row(mesh.faces(f, 2)).transpose();
            Vec3 point = hit.bary[0] * v0 + hit.bary[1] * v1 + hit.bary[2] * v2;

            Vec3 albedo;
            if (texture) {
                albedo = texture->albedo(point, eta);
            } else {
                albedo = hit.bary[0] * mesh.colors.row(mesh.faces(f, 0)).transpose() +
                         hit.bary[1] * mesh.colors.row(mesh.faces(f, 1)).transpose() +
                         hit.bary[2] * mesh.colors.row(mesh.faces(f, 2)).transpose();
            }
            Vec3 n = mesh.face_normal(f);
            if (n.dot(light) < 0.0) n = -n;  // flat shading on double-sided faces
            Vec3 c = shade(albedo, n, light, opts.ambient, opts.diffuse);
            double* prgb = out.rgb.at(row, col);
            prgb[0] = c[0];
            prgb[1] = c[1];
            prgb[2] = c[2];
            out.mask.at(row, col)[0] = 1.0;
        }
    }
    });

    if (!opts.mask_band) return out;

    // Silhouette edges: mesh boundary edges or edges whose adjacent faces
    // have opposite screen orientation.
    std::map<std::pair<int, int>, std::pair<Index, Index>> edge_faces;
    for (Index f = 0; f < mesh.face_count(); ++f) {
        for (int e = 0; e < 3; ++e) {
            int a = mesh.faces(f, e), b = mesh.faces(f, (e + 1) % 3);
            auto key = std::minmax(a, b);
            auto it = edge_faces.find({key.first, key.second});
            if (it == edge_faces.end()) {
                edge_faces[{key.first, key.second}] = {f, -1};
            } else {
                it->second.second = f;
            }
        }
    }
    for (const auto& [edge, faces] : edge_faces) {
        if (!pv.valid[edge.first] || !pv.valid[edge.second]) continue;
        bool silhouette;
        if (faces.second < 0) {
            silhouette = std::abs(face_area2d(pv, mesh, faces.first)) > 1e-12;
        } else {
            double a1 = face_area2d(pv, mesh, faces.first);
            double a2 = face_area2d(pv, mesh, faces.second);
            silhouette = a1 * a2 < 0.0;
        }
        if (silhouette)
            out.silhouette_segments.push_back({static_cast<Index>(edge.first),
                                               static_cast<Index>(edge.second)});
    }

    // Band pass: nearest silhouette segment per pixel within the band.
    std::vector<double> best_dist(static_cast<size_t>(res) * res,
                                  std::numeric_limits<double>::max());
    std::vector<int> best_seg(static_cast<size_t>(res) * res, -1);
    std::vector<double> best_t(static_cast<size_t>(res) * res, 0.0);

    for (int si = 0; si < static_cast<int>(out.silhouette_segments.size()); ++si) {
        auto [ia, ib] = out.silhouette_segments[si];
        Vec2 q0 = pv.screen[ia], q1 = pv.screen[ib];
        double d0 = pv.depth[ia], d1 = pv.depth[ib];
        double r = opts.band_radius;
        int x0 = std::max(0, static_cast<int>(std::floor(std::min(q0.x(), q1.x()) - r)));
        int x1 = std::min(res - 1, static_cast<int>(std::ceil(std::max(q0.x(), q1.x()) + r)));
        int y0 = std::max(0, static_cast<int>(std::floor(std::min(q0.y(), q1.y()) - r)));
        int y1 = std::min(res - 1, static_cast<int>(std::ceil(std::max(q0.y(), q1.y()) + r)));
        Vec2 seg = q1 - q0;
        double len2 = seg.squaredNorm();
        for (int row = y0; row <= y1; ++row) {
            for (int col = x0; col <= x1; ++col) {
                Vec2 p(col + 0.5, row + 0.5);
                double t = len2 < 1e-18 ? 0.0 : std::clamp((p - q0).dot(seg) / len2, 0.0, 1.0);
                double dist = (p - (q0 + t * seg)).norm();
                if (dist > r) continue;
                size_t idx = static_cast<size_t>(row) * res + col;
                const MeshHit& hit = out.hits[idx];
                if (hit.valid()) {
                    // Skip segments occluded behind the visible surface.
                    double seg_depth = lerp(d0, d1, t);
                    if (seg_depth > hit.depth + opts.occlusion_tol * pose.radius) continue;
                }
                if (dist < best_dist[idx]) {
                    best_dist[idx] = dist;
                    best_seg[idx] = si;
                    best_t[idx] = t;
                }
            }
        }
    }

    for (int row = 0; row < res; ++row) {
        for (int col = 0; col < res; ++col) {
            size_t idx = static_cast<size_t>(row) * res + col;
            if (best_seg[idx] < 0) continue;
            bool inside = out.hits[idx].valid();
            double sd = inside ? best_dist[idx] : -best_dist[idx];
            double blended = clamp01(0.5 + sd);
            out.mask.at(row, col)[0] = blended;
            out.band.push_back({row, col, best_seg[idx], best_t[idx], sd});
        }
    }
    return out;
}

MeshGradients backward_mesh(const TriangleMesh& mesh, const TextureField& texture, double eta,
                            const CameraPose& pose, const MeshImage& image, const Image& grad_rgb,
                            const Image& grad_mask, const MeshRenderOptions& opts) {
    int res = pose.resolution;
    if (grad_rgb.height != res || grad_rgb.width != res || grad_rgb.channels != 3 ||
        grad_mask.height != res || grad_mask.width != res || grad_mask.channels != 1)
        throw std::invalid_argument("backward_mesh: gradient image shape mismatch");
    if (static_cast<int>(image.hits.size()) != res * res)
        throw std::invalid_argument("backward_mesh: stale hit records");

    MeshGradients grads(mesh.vertex_count(), texture.param_count());
    if (mesh.empty()) return grads;

    ProjectedVerts pv = project_vertices(mesh, pose, opts.near);
    Vec3 light = -pv.frame.forward;
    double focal = pv.frame.focal;

    // Gradient of pixel position w.r.t. a world vertex: through the
    // projection Jacobian and the view rotation.
    auto screen_grad_to_vertex = [&](Index vi, const Vec2& g_screen, double g_depth) {
        Vec3 p_cam = pv.frame.world_to_cam(mesh.vertices.row(vi).transpose());
        double d = pv.frame.depth_of(p_cam);
        Eigen::Matrix<double, 2, 3> jac;
        jac << focal / d, 0.0, focal * p_cam.x() / (d * d),
               0.0, -focal / d, -focal * p_cam.y() / (d * d);
        Vec3 g_pcam = jac.transpose() * g_screen;
        g_pcam.z() += -g_depth;  // depth = -z_cam
        grads.vertices.row(vi) += (pv.frame.rot.transpose() * g_pcam).transpose();
    };

    int workers = std::max(1, std::min(opts.threads, res));
    std::vector<MeshGradients> worker_grads;
    worker_grads.reserve(workers);
    for (int w = 0; w < workers; ++w)
        worker_grads.emplace_back(mesh.vertex_count(), texture.param_count());

    parallel_rows(res, opts.threads, [&](int worker, int row_begin, int row_end) {
    MeshGradients& wg = worker_grads[worker];
    auto worker_screen_grad = [&](Index vi, const Vec2& g_screen, double g_depth) {
        Vec3 p_cam = pv.frame.world_to_cam(mesh.vertices.row(vi).transpose());
        double d = pv.frame.depth_of(p_cam);
        Eigen::Matrix<double, 2, 3> jac;
        jac << focal / d, 0.0, focal * p_cam.x() / (d * d),
               0.0, -focal / d, -focal * p_cam.y() / (d * d);
        Vec3 g_pcam = jac.transpose() * g_screen;
        g_pcam.z() += -g_depth;
        wg.vertices.row(vi) += (pv.frame.rot.transpose() * g_pcam).transpose();
    };
    for (int row = row_begin; row < row_end; ++row) {
        for (int col = 0; col < res; ++col) {
            const MeshHit& hit = image.hit(row, col);
            if (!hit.valid()) continue;
            const double* g_rgb = grad_rgb.at(row, col);
            if (g_rgb[0] == 0.0 && g_rgb[1] == 0.0 && g_rgb[2] == 0.0) continue;

            Index f = hit.face;
            int i0 = mesh.faces(f, 0), i1 = mesh.faces(f, 1), i2 = mesh.faces(f, 2);
            Vec3 v0 = mesh.vertices.row(i0).transpose();
            Vec3 v1 = mesh.vertices.row(i1).transpose();
            Vec3 v2 = mesh.vertices.row(i2).transpose();
            const Vec2 &s0 = pv.screen[i0], &s1 = pv.screen[i1], &s2 = pv.screen[i2];
            double d0 = pv.depth[i0], d1 = pv.depth[i1], d2 = pv.depth[i2];

            Vec2 p(col + 0.5, row + 0.5);
            double area = edge_fn(s0, s1, s2);
            if (std::abs(area) < 1e-12) continue;
            double e0 = edge_fn(p, s1, s2), e1 = edge_fn(p, s2, s0), e2 = edge_fn(p, s0, s1);
            double l0 = e0 / area, l1 = e1 / area, l2 = e2 / area;
            double a0 = l0 / d0, a1 = l1 / d1, a2 = l2 / d2;
            double s = a0 + a1 + a2;
            double lp0 = a0 / s, lp1 = a1 / s, lp2 = a2 / s;

            Vec3 point = lp0 * v0 + lp1 * v1 + lp2 * v2;

            // Forward shade with the texture, collecting parameter grads.
            Vec3 m = (v1 - v0).cross(v2 - v0);
            double mlen = m.norm();
            if (mlen < 1e-20) continue;
            Vec3 n = m / mlen;
            double flip = 1.0;
            if (n.dot(light) < 0.0) {
                n = -n;
                flip = -1.0;
            }
            double ndotl = n.dot(light);
            double sf = opts.ambient + opts.diffuse * std::max(0.0, ndotl);

            Vec3 g_albedo(g_rgb[0] * sf, g_rgb[1] * sf, g_rgb[2] * sf);
            Vec3 g_kappa = Vec3::Zero();
            Vec3 albedo =
                texture.albedo_backward(point, eta, g_albedo, wg.texture, &g_kappa);

            double g_sf = g_rgb[0] * albedo[0] + g_rgb[1] * albedo[1] + g_rgb[2] * albedo[2];

            // Normal path (flat shading).
            if (ndotl > 0.0) {
                Vec3 g_n = g_sf * opts.diffuse * light * flip;  // n = flip * m / |m|
                Vec3 n_raw = m / mlen;
                Vec3 g_m = (g_n - n_raw * n_raw.dot(g_n)) / mlen;
                Vec3 gb = (v2 - v0).cross(g_m);
                Vec3 gc = g_m.cross(v1 - v0);
                wg.vertices.row(i1) += gb.transpose();
                wg.vertices.row(i2) += gc.transpose();
                wg.vertices.row(i0) += (-gb - gc).transpose();
            }

            // point = sum lp_i v_i.
            Vec3 g_point = g_kappa;
            wg.vertices.row(i0) += (lp0 * g_point).transpose();
            wg.vertices.row(i1) += (lp1 * g_point).transpose();
            wg.vertices.row(i2) += (lp2 * g_point).transpose();

            double g_lp0 = g_point.dot(v0), g_lp1 = g_point.dot(v1), g_lp2 = g_point.dot(v2);

            // lp_i = a_i / s.
            double dot_glp = g_lp0 * lp0 + g_lp1 * lp1 + g_lp2 * lp2;
            double g_a0 = (g_lp0 - dot_glp) / s;
            double g_a1 = (g_lp1 - dot_glp) / s;
            double g_a2 = (g_lp2 - dot_glp) / s;

            // a_i = l_i / d_i.
            double g_l0 = g_a0 / d0, g_l1 = g_a1 / d1, g_l2 = g_a2 / d2;
            double g_d0 = -g_a0 * l0 / (d0 * d0);
            double g_d1 = -g_a1 * l1 / (d1 * d1);
            double g_d2 = -g_a2 * l2 / (d2 * d2);

            // l_i = e_i / area.
            double g_e0 = g_l0 / area, g_e1 = g_l1 / area, g_e2 = g_l2 / area;
            double g_area = -(g_l0 * l0 + g_l1 * l1 + g_l2 * l2) / area;

            // e0 = E(p, s1, s2), e1 = E(p, s2, s0), e2 = E(p, s0, s1),
            // area = E(s0, s1, s2); dE(p,a,b)/da = (b.y - p.y, p.x - b.x),
            // dE/db = (p.y - a.y, a.x - p.x).
            Vec2 g_s0 = Vec2::Zero(), g_s1 = Vec2::Zero(), g_s2 = Vec2::Zero();
            auto add_edge_grads = [&](double ge, const Vec2& a, const Vec2& b, Vec2& ga, Vec2& gb) {
                ga += ge * Vec2(b.y() - p.y(), p.x() - b.x());
                gb += ge * Vec2(p.y() - a.y(), a.x() - p.x());
            };
            add_edge_grads(g_e0, s1, s2, g_s1, g_s2);
            add_edge_grads(g_e1, s2, s0, g_s2, g_s0);
            add_edge_grads(g_e2, s0, s1, g_s0, g_s1);
            g_s0 += g_area * Vec2(s1.y() - s2.y(), s2.x() - s1.x());
            g_s1 += g_area * Vec2(s2.y() - s0.y(), s0.x() - s2.x());
            g_s2 += g_area * Vec2(s0.y() - s1.y(), s1.x() - s0.x());

            worker_screen_grad(i0, g_s0, g_d0);
            worker_screen_grad(i1, g_s1, g_d1);
            worker_screen_grad(i2, g_s2, g_d2);
        }
    }
    });

    for (MeshGradients& wg : worker_grads) {
        grads.vertices += wg.vertices;
        grads.texture += wg.texture;
    }

    // Mask band.
    for (const auto& bp : image.band) {
        double g_mask = grad_mask.at(bp.row, bp.col)[0];
        if (g_mask == 0.0) continue;
        double inner = 0.5 + bp.sd;
        if (inner <= 0.0 || inner >= 1.0) continue;  // clamped
        auto [ia, ib] = image.silhouette_segments[bp.segment];
        Vec2 q0 = pv.screen[ia], q1 = pv.screen[ib];
        Vec2 p(bp.col + 0.5, bp.row + 0.5);
        Vec2 closest = q0 + bp.t * (q1 - q0);
        Vec2 diff = p - closest;
        double dist = diff.norm();
        if (dist < 1e-9) continue;
        Vec2 u = diff / dist;
        double sign = bp.sd >= 0.0 ? 1.0 : -1.0;  // sd = sign * dist
        double g_dist = g_mask * sign;
        Vec2 g_q0 = -g_dist * (1.0 - bp.t) * u;
        Vec2 g_q1 = -g_dist * bp.t * u;
        screen_grad_to_vertex(ia, g_q0, 0.0);
        screen_grad_to_vertex(ib, g_q1, 0.0);
    }
    return grads;
}

}  // namespace im2mesh
