#pragma once

#include <vector>

#include "im2mesh/types.hpp"

namespace im2mesh {

struct TriangleMesh {
    MatX3 vertices;  // V x 3
    MatX3i faces;    // F x 3
    MatX3 colors;    // optional per-vertex rgb; rows() == 0 when absent

    Index vertex_count() const { return vertices.rows(); }
    Index face_count() const { return faces.rows(); }
    bool empty() const { return faces.rows() == 0; }
    bool has_colors() const { return colors.rows() == vertices.rows() && vertices.rows() > 0; }

    Vec3 face_normal(Index f) const;   // unit; zero for degenerate faces
    double face_area(Index f) const;
    double signed_volume() const;      // divergence theorem; positive for outward winding

    /// Axis-aligned bounds; undefined for empty vertex sets.
    void bounds(Vec3& lo, Vec3& hi) const;
};

TriangleMesh make_uv_sphere(double radius, int stacks = 24, int slices = 48);
TriangleMesh make_torus(double major_radius, double minor_radius, int major_segments = 48,
                        int minor_segments = 24);
TriangleMesh make_box(const Vec3& half_extents, const Vec3& center = Vec3::Zero());

/// Per-vertex colors: "vertex" (keep existing, grey when absent),
/// "gradient" (smooth position-based), or "checker" (3D checkerboard).
void assign_procedural_colors(TriangleMesh& mesh, const std::string& mode);

/// Edge-adjacent face pairs (faces sharing an undirected edge).
std::vector<std::pair<Index, Index>> face_adjacency(const TriangleMesh& mesh);

/// Closest point on a triangle to a query point.
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

/// Median-split AABB tree over triangles for nearest-surface queries and
/// axis-parallel ray crossing counts.
class MeshBvh {
public:
    explicit MeshBvh(const TriangleMesh& mesh);

    struct Hit {
        double distance = 0.0;
        Index face = -1;
        Vec3 point = Vec3::Zero();
    };
    Hit nearest(const Vec3& query) const;

    /// Number of triangle crossings along the ray from `origin` in +axis
    /// direction. Ray origins are expected to be jittered off degenerate
    /// configurations by the caller.
    int count_crossings(const Vec3& origin, int axis) const;

private:
    struct Node {
        Vec3 lo, hi;
        int left = -1, right = -1;   // children, or
        int first = 0, count = 0;    // leaf triangle range
        bool leaf() const { return count > 0; }
    };

    const TriangleMesh& mesh_;
    std::vector<Node> nodes_;
    std::vector<Index> order_;  // triangle indices, leaf-contiguous

    int build(std::vector<Index>& tris, int begin, int end);
};

/// Area-weighted surface samples (deterministic given the rng).
MatX3 sample_surface(const TriangleMesh& mesh, Index n_samples, Rng& rng);

}  // namespace im2mesh
