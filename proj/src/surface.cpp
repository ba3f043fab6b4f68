#include "im2mesh/surface.hpp"

#include <algorithm>
#include <fstream>

#include "im2mesh/mc_tables.hpp"

namespace im2mesh {

DeformableGrid::DeformableGrid(int r) : res(r) {
    if (r < 2) throw std::invalid_argument("DeformableGrid: resolution must be >= 2");
    sdf = VecX::Zero(vertex_count());
    deform = MatX3::Zero(vertex_count(), 3);
    interp_weights = Eigen::MatrixXd::Ones(cell_count(), 20);
    split_weights = VecX::Ones(cell_count());
    sdf_initial = VecX::Zero(vertex_count());
    far_mask.assign(static_cast<size_t>(vertex_count()), 0);
}

void DeformableGrid::clamp_deformations() {
    double half = 0.5 * cell_size();
    for (Index i = 0; i < deform.rows(); ++i)
        for (int k = 0; k < 3; ++k) deform(i, k) = std::clamp(deform(i, k), -half, half);
}

ExtractedMesh extract_isosurface(const VertexGrid& field, double iso, const MatX3* deform) {
    if (field.res < 2) throw std::invalid_argument("extract_isosurface: resolution must be >= 2");
    ExtractedMesh out;
    int n = field.verts_per_axis();

    // One potential crossing vertex per lattice edge, keyed by axis plus the
    // low-index endpoint.
    std::vector<int> edge_vertex(static_cast<size_t>(3) * n * n * n, -1);

    std::vector<Vec3> verts;
    std::vector<Vec3> edge_vecs;
    std::vector<Index> ea, eb;
    std::vector<double> ts, dta, dtb;
    std::vector<Eigen::RowVector3i> faces;

    auto vertex_position = [&](Index v) {
        Vec3 p = field.position(v);
        if (deform) p += deform->row(v).transpose();
        return p;
    };

    // Edges are canonicalized to (low, high) lattice order; the crossing
    // position is orientation-independent.
    auto crossing_vertex = [&](Index a, Index b) {
        if (a > b) std::swap(a, b);
        Index diff = b - a;
        int axis = diff == 1 ? 2 : (diff == n ? 1 : 0);
        size_t key = static_cast<size_t>(axis) * n * n * n + static_cast<size_t>(a);
        if (edge_vertex[key] >= 0) return edge_vertex[key];

        double sa = field.values[a], sb = field.values[b];
        double denom = sb - sa;
        double t = denom == 0.0 ? 0.5 : (iso - sa) / denom;
        Vec3 pa = vertex_position(a), pb = vertex_position(b);
        verts.push_back(pa + t * (pb - pa));
        edge_vecs.push_back(pb - pa);
        ea.push_back(a);
        eb.push_back(b);
        ts.push_back(t);
        double inv2 = denom == 0.0 ? 0.0 : 1.0 / (denom * denom);
        dta.push_back((iso - sb) * inv2);
        dtb.push_back(-(iso - sa) * inv2);
        int id = static_cast<int>(verts.size()) - 1;
        edge_vertex[key] = id;
        return id;
    };

    bool any_crossing = false;
    for (int x = 0; x < field.res; ++x) {
        for (int y = 0; y < field.res; ++y) {
            for (int z = 0; z < field.res; ++z) {
                Index corner[8];
                int case_index = 0;
                for (int c = 0; c < 8; ++c) {
                    corner[c] = field.linear(x + kMcCornerOffset[c][0], y + kMcCornerOffset[c][1],
                                             z + kMcCornerOffset[c][2]);
                    if (field.values[corner[c]] < iso) case_index |= 1 << c;
                }
                if (kMcEdgeTable[case_index] == 0) continue;
                any_crossing = true;

                int cell_vert[12];
                for (int e = 0; e < 12; ++e) {
                    if (!(kMcEdgeTable[case_index] & (1 << e))) continue;
                    cell_vert[e] = crossing_vertex(corner[kMcEdgeCorners[e][0]],
                                                   corner[kMcEdgeCorners[e][1]]);
                }

                const int* tri = kMcTriTable[case_index];
                for (int k = 0; tri[k] != -1; k += 3) {
                    // Swapped winding so negative-inside fields get outward
                    // normals under this corner layout.
                    int v0 = cell_vert[tri[k]];
                    int v1 = cell_vert[tri[k + 2]];
                    int v2 = cell_vert[tri[k + 1]];
                    if (v0 == v1 || v1 == v2 || v0 == v2) continue;
                    // Zero-area faces from crossings pinned to shared corners.
                    Vec3 m = (verts[v1] - verts[v0]).cross(verts[v2] - verts[v0]);
                    if (m.squaredNorm() < 1e-24) continue;
                    faces.push_back({v0, v1, v2});
                }
            }
        }
    }

    out.empty_surface = !any_crossing;
    out.mesh.vertices.resize(verts.size(), 3);
    out.edge_vec.resize(verts.size(), 3);
    for (size_t i = 0; i < verts.size(); ++i) {
        out.mesh.vertices.row(i) = verts[i].transpose();
        out.edge_vec.row(i) = edge_vecs[i].transpose();
    }
    out.mesh.faces.resize(faces.size(), 3);
    for (size_t i = 0; i < faces.size(); ++i) out.mesh.faces.row(i) = faces[i];
    out.edge_a = std::move(ea);
    out.edge_b = std::move(eb);
    out.t = Eigen::Map<VecX>(ts.data(), ts.size());
    out.dt_dsa = Eigen::Map<VecX>(dta.data(), dta.size());
    out.dt_dsb = Eigen::Map<VecX>(dtb.data(), dtb.size());
    return out;
}

void ExtractedMesh::backward(const MatX3& grad_vertices, VecX& grad_sdf,
                             MatX3& grad_deform) const {
    for (Index k = 0; k < mesh.vertices.rows(); ++k) {
        Vec3 g = grad_vertices.row(k).transpose();
        if (g.isZero()) continue;
        double g_t = g.dot(edge_vec.row(k).transpose());
        grad_sdf[edge_a[k]] += g_t * dt_dsa[k];
        grad_sdf[edge_b[k]] += g_t * dt_dsb[k];
        grad_deform.row(edge_a[k]) += (1.0 - t[k]) * g.transpose();
        grad_deform.row(edge_b[k]) += t[k] * g.transpose();
    }
}

TriangleMesh marching_cubes(const VertexGrid& field, double iso) {
    return extract_isosurface(field, iso, nullptr).mesh;
}

ExtractedMesh extract_mesh_differentiable(const DeformableGrid& grid, double sdf_gain) {
    VertexGrid field(grid.res);
    for (Index i = 0; i < grid.sdf.size(); ++i) field.values[i] = sdf_gain * grid.sdf[i];
    return extract_isosurface(field, 0.0, &grid.deform);
}

void init_sdf_from_mesh(DeformableGrid& grid, const TriangleMesh& mesh, double far_margin_cells) {
    if (mesh.face_count() == 0)
        throw std::invalid_argument("init_sdf_from_mesh: mesh has no faces");
    MeshBvh bvh(mesh);
    int n = grid.res + 1;
    double cell = grid.cell_size();
    double margin = far_margin_cells * cell;

    VertexGrid lattice(grid.res);
    for (int x = 0; x < n; ++x) {
        for (int y = 0; y < n; ++y) {
            for (int z = 0; z < n; ++z) {
                Index v = lattice.linear(x, y, z);
                Vec3 p = lattice.position(x, y, z);
                double dist = bvh.nearest(p).distance;

                // Jittered axis rays dodge exact edge/vertex hits.
                int inside_votes = 0;
                for (int axis = 0; axis < 3; ++axis) {
                    Vec3 origin = p;
                    origin[(axis + 1) % 3] += 1.17e-7;
                    origin[(axis + 2) % 3] += 2.39e-7;
                    if (bvh.count_crossings(origin, axis) % 2 == 1) ++inside_votes;
                }
                bool inside = inside_votes >= 2;
                grid.sdf[v] = inside ? -dist : dist;
                grid.far_mask[v] = dist > margin && !inside ? 1 : 0;
            }
        }
    }
}

void scale_sdf(DeformableGrid& grid, double xi) {
    double max_neg = 0.0;
    for (Index i = 0; i < grid.sdf.size(); ++i)
        if (grid.sdf[i] < 0.0) max_neg = std::max(max_neg, -grid.sdf[i]);
    if (max_neg == 0.0)
        throw std::runtime_error("scale_sdf: degenerate coarse geometry (no interior vertices)");
    grid.sdf *= xi / max_neg;
}

double sdf_regularizer(const DeformableGrid& grid, double sdf_gain, VecX* grad_sdf,
                       double grad_weight) {
    Index count = 0;
    double total = 0.0;
    for (Index i = 0; i < grid.sdf.size(); ++i)
        if (grid.far_mask[i]) ++count;
    if (count == 0) return 0.0;
    for (Index i = 0; i < grid.sdf.size(); ++i) {
        if (!grid.far_mask[i]) continue;
        double s = sdf_gain * grid.sdf[i];
        total += softplus(-s);
        if (grad_sdf) (*grad_sdf)[i] += grad_weight * (-sigmoid(-s)) * sdf_gain / count;
    }
    return total / count;
}

double normal_consistency(const TriangleMesh& mesh) {
    auto pairs = face_adjacency(mesh);
    if (pairs.empty()) return 0.0;
    double total = 0.0;
    for (auto [f, g] : pairs) total += 1.0 - mesh.face_normal(f).dot(mesh.face_normal(g));
    return total / static_cast<double>(pairs.size());
}

double normal_consistency_with_grad(const TriangleMesh& mesh, MatX3& grad_vertices,
                                    double weight) {
    auto pairs = face_adjacency(mesh);
    if (pairs.empty()) return 0.0;
    double scale = weight / static_cast<double>(pairs.size());

    // Cache raw cross products and normals.
    Index nf = mesh.face_count();
    MatX3 raw(nf, 3), normals(nf, 3);
    VecX len(nf);
    for (Index f = 0; f < nf; ++f) {
        Vec3 a = mesh.vertices.row(mesh.faces(f, 0)).transpose();
        Vec3 b = mesh.vertices.row(mesh.faces(f, 1)).transpose();
        Vec3 c = mesh.vertices.row(mesh.faces(f, 2)).transpose();
        Vec3 m = (b - a).cross(c - a);
        raw.row(f) = m.transpose();
        len[f] = m.norm();
        normals.row(f) =
            len[f] < 1e-20 ? Vec3(Vec3::Zero()).transpose() : Vec3(m / len[f]).transpose();
    }

    MatX3 g_normal = MatX3::Zero(nf, 3);
    double total = 0.0;
    for (auto [f, g] : pairs) {
        Vec3 nf1 = normals.row(f).transpose(), nf2 = normals.row(g).transpose();
        total += 1.0 - nf1.dot(nf2);
        g_normal.row(f) -= scale * nf2.transpose();
        g_normal.row(g) -= scale * nf1.transpose();
    }

    for (Index f = 0; f < nf; ++f) {
        if (len[f] < 1e-20) continue;
        Vec3 gn = g_normal.row(f).transpose();
        if (gn.isZero()) continue;
        Vec3 nrm = normals.row(f).transpose();
        Vec3 gm = (gn - nrm * nrm.dot(gn)) / len[f];
        Vec3 a = mesh.vertices.row(mesh.faces(f, 0)).transpose();
        Vec3 b = mesh.vertices.row(mesh.faces(f, 1)).transpose();
        Vec3 c = mesh.vertices.row(mesh.faces(f, 2)).transpose();
        Vec3 gb = (c - a).cross(gm);
        Vec3 gc = gm.cross(b - a);
        grad_vertices.row(mesh.faces(f, 1)) += gb.transpose();
        grad_vertices.row(mesh.faces(f, 2)) += gc.transpose();
        grad_vertices.row(mesh.faces(f, 0)) += (-gb - gc).transpose();
    }
    return total / static_cast<double>(pairs.size());
}

namespace {

constexpr uint32_t kGridMagic = 0x44475231;  // "1RGD"
constexpr uint32_t kGridVersion = 1;

}  // namespace

void save_grid(const DeformableGrid& grid, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_grid: cannot open " + path);
    auto put = [&](const void* p, size_t n) { out.write(static_cast<const char*>(p), n); };
    put(&kGridMagic, 4);
    put(&kGridVersion, 4);
    uint32_t res = static_cast<uint32_t>(grid.res);
    put(&res, 4);
    put(grid.sdf.data(), sizeof(double) * grid.sdf.size());
    put(grid.deform.data(), sizeof(double) * grid.deform.size());
    put(grid.interp_weights.data(), sizeof(double) * grid.interp_weights.size());
    put(grid.split_weights.data(), sizeof(double) * grid.split_weights.size());
    put(grid.sdf_initial.data(), sizeof(double) * grid.sdf_initial.size());
    put(grid.far_mask.data(), grid.far_mask.size());
    if (!out) throw std::runtime_error("save_grid: write failed for " + path);
}

DeformableGrid load_grid(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_grid: cannot open " + path);
    auto get = [&](void* p, size_t n) {
        in.read(static_cast<char*>(p), n);
        if (!in) throw std::runtime_error("load_grid: truncated file " + path);
    };
    uint32_t magic = 0, version = 0, res = 0;
    get(&magic, 4);
    get(&version, 4);
    if (magic != kGridMagic) throw std::runtime_error("load_grid: bad magic in " + path);
    if (version != kGridVersion) throw std::runtime_error("load_grid: unsupported version");
    get(&res, 4);
    DeformableGrid grid(static_cast<int>(res));
    get(grid.sdf.data(), sizeof(double) * grid.sdf.size());
    get(grid.deform.data(), sizeof(double) * grid.deform.size());
    get(grid.interp_weights.data(), sizeof(double) * grid.interp_weights.size());
    get(grid.split_weights.data(), sizeof(double) * grid.split_weights.size());
    get(grid.sdf_initial.data(), sizeof(double) * grid.sdf_initial.size());
    get(grid.far_mask.data(), grid.far_mask.size());
    return grid;
}

}  // namespace im2mesh
