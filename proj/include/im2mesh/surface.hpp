#pragma once

#include <string>
#include <vector>

#include "im2mesh/mesh.hpp"
#include "im2mesh/types.hpp"

namespace im2mesh {

/// Scalar field sampled at the vertices of a regular lattice over [-1,1]^3
/// with `res` cells (res+1 vertices) per axis.
struct VertexGrid {
    int res = 0;
    std::vector<double> values;  // (res+1)^3, x-major

    VertexGrid() = default;
    explicit VertexGrid(int r, double fill = 0.0)
        : res(r), values(static_cast<size_t>(r + 1) * (r + 1) * (r + 1), fill) {}

    int verts_per_axis() const { return res + 1; }
    Index vertex_count() const {
        return static_cast<Index>(res + 1) * (res + 1) * (res + 1);
    }
    double cell_size() const { return 2.0 / res; }
    Index linear(int x, int y, int z) const {
        return (static_cast<Index>(x) * (res + 1) + y) * (res + 1) + z;
    }
    Vec3 position(int x, int y, int z) const {
        double c = cell_size();
        return {-1.0 + x * c, -1.0 + y * c, -1.0 + z * c};
    }
    Vec3 position(Index v) const {
        int n = res + 1;
        int z = static_cast<int>(v % n);
        int y = static_cast<int>((v / n) % n);
        int x = static_cast<int>(v / (static_cast<Index>(n) * n));
        return position(x, y, z);
    }
};

/// Refinement-stage voxel grid: per-vertex SDF and deformation, per-cell
/// interpolation and splitting weights. The simplified extractor ignores
/// the per-cell weights but they are carried and serialized so a dual
/// marching cubes extractor can be swapped in without a data-model change.
struct DeformableGrid {
    int res = 48;
    VecX sdf;                           // (res+1)^3
    MatX3 deform;                       // (res+1)^3 x 3, |delta|_inf <= cell/2
    Eigen::MatrixXd interp_weights;     // res^3 x 20, initialized 1
    VecX split_weights;                 // res^3, initialized 1
    VecX sdf_initial;                   // snapshot after normalization
    std::vector<uint8_t> far_mask;      // initial metric SDF above the margin

    explicit DeformableGrid(int r = 48);

    Index vertex_count() const {
        return static_cast<Index>(res + 1) * (res + 1) * (res + 1);
    }
    Index cell_count() const { return static_cast<Index>(res) * res * res; }
    double cell_size() const { return 2.0 / res; }

    /// Re-project deformations into the half-cell box.
    void clamp_deformations();
};

/// Triangle mesh plus the sensitivity records of every extracted vertex:
/// each lies on a lattice edge (a, b) at parameter t, so its position
/// depends on (sdf_a, sdf_b, delta_a, delta_b).
struct ExtractedMesh {
    TriangleMesh mesh;
    std::vector<Index> edge_a, edge_b;  // lattice vertex ids per mesh vertex
    MatX3 edge_vec;                     // deformed edge vector (pb - pa)
    VecX t;
    VecX dt_dsa, dt_dsb;
    bool empty_surface = false;  // no sign change anywhere

    /// Chain mesh-vertex gradients back to the field values and the
    /// deformations. `grad_sdf` is w.r.t. the values handed to extraction;
    /// a gain applied beforehand must be chained by the caller.
    void backward(const MatX3& grad_vertices, VecX& grad_sdf, MatX3& grad_deform) const;
};

/// Core extractor; `deform` may be null for the undeformed lattice.
ExtractedMesh extract_isosurface(const VertexGrid& field, double iso, const MatX3* deform);

/// Plain marching cubes on a vertex-sampled scalar field.
TriangleMesh marching_cubes(const VertexGrid& field, double iso);

/// Differentiable extraction from a deformable grid; `sdf_gain` multiplies
/// the stored field (the scale factor xi during refinement).
ExtractedMesh extract_mesh_differentiable(const DeformableGrid& grid, double sdf_gain = 1.0);

/// Signed distance of every lattice vertex to the mesh: unsigned nearest-
/// triangle distance, negative inside by 3-axis ray-parity majority.
/// Fills grid.sdf with metric distances and grid.far_mask with vertices
/// whose distance exceeds `far_margin_cells` cells.
void init_sdf_from_mesh(DeformableGrid& grid, const TriangleMesh& mesh,
                        double far_margin_cells = 2.0);

/// s <- xi * s / max{|s_j| : s_j < 0}; afterwards min(s) == -xi. Throws if
/// the field has no negative values (degenerate coarse geometry).
void scale_sdf(DeformableGrid& grid, double xi);

/// Floater penalty: mean softplus(-s) over vertices far outside the
/// initialized surface. `grad_sdf` (optional) accumulates d/d(raw sdf),
/// with `sdf_gain` applied as in extraction.
double sdf_regularizer(const DeformableGrid& grid, double sdf_gain = 1.0,
                       VecX* grad_sdf = nullptr, double grad_weight = 1.0);

/// Mean over edge-adjacent face pairs of (1 - cos angle between normals).
double normal_consistency(const TriangleMesh& mesh);

/// Same value; also accumulates weight * d/d(vertices) into grad_vertices.
double normal_consistency_with_grad(const TriangleMesh& mesh, MatX3& grad_vertices,
                                    double weight);

void save_grid(const DeformableGrid& grid, const std::string& path);
DeformableGrid load_grid(const std::string& path);

}  // namespace im2mesh
