#include "im2mesh/mesh.hpp"

#include <algorithm>
#include <map>
#include <numeric>

namespace im2mesh {

Vec3 TriangleMesh::face_normal(Index f) const {
    Vec3 a = vertices.row(faces(f, 0)).transpose();
    Vec3 b = vertices.row(faces(f, 1)).transpose();
    Vec3 c = vertices.row(faces(f, 2)).transpose();
    Vec3 n = (b - a).cross(c - a);
    double len = n.norm();
    return len < 1e-20 ? Vec3::Zero() : Vec3(n / len);
}

double TriangleMesh::face_area(Index f) const {
    Vec3 a = vertices.row(faces(f, 0)).transpose();
    Vec3 b = vertices.row(faces(f, 1)).transpose();
    Vec3 c = vertices.row(faces(f, 2)).transpose();
    return 0.5 * (b - a).cross(c - a).norm();
}

double TriangleMesh::signed_volume() const {
    double v = 0.0;
    for (Index f = 0; f < faces.rows(); ++f) {
        Vec3 a = vertices.row(faces(f, 0)).transpose();
        Vec3 b = vertices.row(faces(f, 1)).transpose();
        Vec3 c = vertices.row(faces(f, 2)).transpose();
        v += a.dot(b.cross(c));
    }
    return v / 6.0;
}

void TriangleMesh::bounds(Vec3& lo, Vec3& hi) const {
    lo = vertices.colwise().minCoeff().transpose();
    hi = vertices.colwise().maxCoeff().transpose();
}

TriangleMesh make_uv_sphere(double radius, int stacks, int slices) {
    TriangleMesh mesh;
    std::vector<Vec3> verts;
    verts.emplace_back(0, radius, 0);  // north pole
    for (int i = 1; i < stacks; ++i) {
        double phi = kPi * i / stacks;  // from +Y
        for (int j = 0; j < slices; ++j) {
            double theta = 2.0 * kPi * j / slices;
            verts.emplace_back(radius * std::sin(phi) * std::sin(theta), radius * std::cos(phi),
                               radius * std::sin(phi) * std::cos(theta));
        }
    }
    verts.emplace_back(0, -radius, 0);  // south pole
    int south = static_cast<int>(verts.size()) - 1;

    std::vector<Eigen::RowVector3i> faces;
    auto ring = [&](int i, int j) { return 1 + (i - 1) * slices + (j % slices); };
    for (int j = 0; j < slices; ++j) faces.push_back({0, ring(1, j), ring(1, j + 1)});
    for (int i = 1; i < stacks - 1; ++i) {
        for (int j = 0; j < slices; ++j) {
            int a = ring(i, j), b = ring(i, j + 1), c = ring(i + 1, j), d = ring(i + 1, j + 1);
            faces.push_back({a, c, d});
            faces.push_back({a, d, b});
        }
    }
    for (int j = 0; j < slices; ++j)
        faces.push_back({south, ring(stacks - 1, j + 1), ring(stacks - 1, j)});

    mesh.vertices.resize(verts.size(), 3);
    for (size_t i = 0; i < verts.size(); ++i) mesh.vertices.row(i) = verts[i].transpose();
    mesh.faces.resize(faces.size(), 3);
    for (size_t i = 0; i < faces.size(); ++i) mesh.faces.row(i) = faces[i];
    return mesh;
}

TriangleMesh make_torus(double major_radius, double minor_radius, int major_segments,
                        int minor_segments) {
    TriangleMesh mesh;
    mesh.vertices.resize(static_cast<Index>(major_segments) * minor_segments, 3);
    for (int i = 0; i < major_segments; ++i) {
        double u = 2.0 * kPi * i / major_segments;
        for (int j = 0; j < minor_segments; ++j) {
            double v = 2.0 * kPi * j / minor_segments;
            double r = major_radius + minor_radius * std::cos(v);
            mesh.vertices.row(static_cast<Index>(i) * minor_segments + j)
                << r * std::sin(u), minor_radius * std::sin(v), r * std::cos(u);
        }
    }
    std::vector<Eigen::RowVector3i> faces;
    auto idx = [&](int i, int j) {
        return (i % major_segments) * minor_segments + (j % minor_segments);
    };
    for (int i = 0; i < major_segments; ++i) {
        for (int j = 0; j < minor_segments; ++j) {
            int a = idx(i, j), b = idx(i + 1, j), c = idx(i + 1, j + 1), d = idx(i, j + 1);
            faces.push_back({a, b, c});
            faces.push_back({a, c, d});
        }
    }
    mesh.faces.resize(faces.size(), 3);
    for (size_t i = 0; i < faces.size(); ++i) mesh.faces.row(i) = faces[i];
    return mesh;
}

TriangleMesh make_box(const Vec3& half_extents, const Vec3& center) {
    TriangleMesh mesh;
    mesh.vertices.resize(8, 3);
    for (int i = 0; i < 8; ++i) {
        Vec3 sign((i & 1) ? 1 : -1, (i & 2) ? 1 : -1, (i & 4) ? 1 : -1);
        mesh.vertices.row(i) = (center + sign.cwiseProduct(half_extents)).transpose();
    }
    static const int quads[6][4] = {
        {0, 2, 3, 1},  // -z
        {4, 5, 7, 6},  // +z
        {0, 1, 5, 4},  // -y
        {2, 6, 7, 3},  // +y
        {0, 4, 6, 2},  // -x
        {1, 3, 7, 5},  // +x
    };
    mesh.faces.resize(12, 3);
    for (int q = 0; q < 6; ++q) {
        mesh.faces.row(2 * q) << quads[q][0], quads[q][1], quads[q][2];
        mesh.faces.row(2 * q + 1) << quads[q][0], quads[q][2], quads[q][3];
    }
    return mesh;
}

void assign_procedural_colors(TriangleMesh& mesh, const std::string& mode) {
    if (mode == "vertex") {
        if (!mesh.has_colors()) {
            mesh.colors = MatX3::Constant(mesh.vertex_count(), 3, 0.5);
        }
        return;
    }
    mesh.colors.resize(mesh.vertex_count(), 3);
    if (mode == "gradient") {
        for (Index i = 0; i < mesh.vertex_count(); ++i) {
            Vec3 p = mesh.vertices.row(i).transpose();
            mesh.colors.row(i) << 0.5 + 0.35 * std::sin(3.0 * p.x()),
                0.5 + 0.35 * std::sin(3.0 * p.y() + 1.0), 0.5 + 0.35 * std::cos(3.0 * p.z());
        }
    } else if (mode == "checker") {
        for (Index i = 0; i < mesh.vertex_count(); ++i) {
            Vec3 p = mesh.vertices.row(i).transpose();
            int parity = (static_cast<int>(std::floor(p.x() * 4 + 8)) +
                          static_cast<int>(std::floor(p.y() * 4 + 8)) +
                          static_cast<int>(std::floor(p.z() * 4 + 8))) % 2;
            mesh.colors.row(i) = parity ? Vec3(0.85, 0.75, 0.2).transpose()
                                        : Vec3(0.15, 0.25, 0.7).transpose();
        }
    } else {
        throw std::invalid_argument("assign_procedural_colors: unknown mode " + mode);
    }
}

std::vector<std::pair<Index, Index>> face_adjacency(const TriangleMesh& mesh) {
    std::map<std::pair<int, int>, Index> edge_owner;
    std::vector<std::pair<Index, Index>> pairs;
    for (Index f = 0; f < mesh.faces.rows(); ++f) {
        for (int e = 0; e < 3; ++e) {
            int a = mesh.faces(f, e), b = mesh.faces(f, (e + 1) % 3);
            auto key = std::minmax(a, b);
            auto [it, inserted] = edge_owner.try_emplace({key.first, key.second}, f);
            if (!inserted && it->second != f) pairs.emplace_back(it->second, f);
        }
    }
    return pairs;
}

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    // Ericson, Real-Time Collision Detection 5.1.5.
    Vec3 ab = b - a, ac = c - a, ap = p - a;
    double d1 = ab.dot(ap), d2 = ac.dot(ap);
    if (d1 <= 0.0 && d2 <= 0.0) return a;

    Vec3 bp = p - b;
    double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0.0 && d4 <= d3) return b;

    double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + ab * (d1 / (d1 - d3));

    Vec3 cp = p - c;
    double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0.0 && d5 <= d6) return c;

    double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + ac * (d2 / (d2 - d6));

    double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
        double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }

    double denom = 1.0 / (va + vb + vc);
    return a + ab * (vb * denom) + ac * (vc * denom);
}

MeshBvh::MeshBvh(const TriangleMesh& mesh) : mesh_(mesh) {
    if (mesh.face_count() == 0) throw std::invalid_argument("MeshBvh: empty mesh");
    std::vector<Index> tris(mesh.face_count());
    std::iota(tris.begin(), tris.end(), Index(0));
    nodes_.reserve(2 * tris.size());
    build(tris, 0, static_cast<int>(tris.size()));
    order_ = std::move(tris);
}

int MeshBvh::build(std::vector<Index>& tris, int begin, int end) {
    Node node;
    node.lo = Vec3::Constant(std::numeric_limits<double>::max());
    node.hi = Vec3::Constant(-std::numeric_limits<double>::max());
    for (int i = begin; i < end; ++i) {
        for (int v = 0; v < 3; ++v) {
            Vec3 p = mesh_.vertices.row(mesh_.faces(tris[i], v)).transpose();
            node.lo = node.lo.cwiseMin(p);
            node.hi = node.hi.cwiseMax(p);
        }
    }
    int idx = static_cast<int>(nodes_.size());
    nodes_.push_back(node);

    int count = end - begin;
    if (count <= 4) {
        nodes_[idx].first = begin;
        nodes_[idx].count = count;
        return idx;
    }

    Vec3 extent = node.hi - node.lo;
    int axis = 0;
    if (extent[1] > extent[axis]) axis = 1;
    if (extent[2] > extent[axis]) axis = 2;
    auto centroid = [&](Index t) {
        return (mesh_.vertices(mesh_.faces(t, 0), axis) + mesh_.vertices(mesh_.faces(t, 1), axis) +
                mesh_.vertices(mesh_.faces(t, 2), axis)) / 3.0;
    };
    int mid = begin + count / 2;
    std::nth_element(tris.begin() + begin, tris.begin() + mid, tris.begin() + end,
                     [&](Index a, Index b) { return centroid(a) < centroid(b); });

    int left = build(tris, begin, mid);
    int right = build(tris, mid, end);
    nodes_[idx].left = left;
    nodes_[idx].right = right;
    return idx;
}

namespace {

double aabb_distance_sq(const Vec3& p, const Vec3& lo, const Vec3& hi) {
    double d = 0.0;
    for (int k = 0; k < 3; ++k) {
        double v = p[k] < lo[k] ? lo[k] - p[k] : (p[k] > hi[k] ? p[k] - hi[k] : 0.0);
        d += v * v;
    }
    return d;
}

}  // namespace

MeshBvh::Hit MeshBvh::nearest(const Vec3& query) const {
    Hit best;
    double best_sq = std::numeric_limits<double>::max();

    std::vector<int> stack{0};
    while (!stack.empty()) {
        int ni = stack.back();
        stack.pop_back();
        const Node& node = nodes_[ni];
        if (aabb_distance_sq(query, node.lo, node.hi) >= best_sq) continue;
        if (node.leaf()) {
            for (int i = node.first; i < node.first + node.count; ++i) {
                Index f = order_[i];
                Vec3 a = mesh_.vertices.row(mesh_.faces(f, 0)).transpose();
                Vec3 b = mesh_.vertices.row(mesh_.faces(f, 1)).transpose();
                Vec3 c = mesh_.vertices.row(mesh_.faces(f, 2)).transpose();
                Vec3 cp = closest_point_on_triangle(query, a, b, c);
                double d = (cp - query).squaredNorm();
                if (d < best_sq) {
                    best_sq = d;
                    best.face = f;
                    best.point = cp;
                }
            }
        } else {
            // Visit the nearer child first.
            double dl = aabb_distance_sq(query, nodes_[node.left].lo, nodes_[node.left].hi);
            double dr = aabb_distance_sq(query, nodes_[node.right].lo, nodes_[node.right].hi);
            if (dl < dr) {
                stack.push_back(node.right);
                stack.push_back(node.left);
            } else {
                stack.push_back(node.left);
                stack.push_back(node.right);
            }
        }
    }
    best.distance = std::sqrt(best_sq);
    return best;
}

int MeshBvh::count_crossings(const Vec3& origin, int axis) const {
    int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
    int crossings = 0;
    std::vector<int> stack{0};
    while (!stack.empty()) {
        int ni = stack.back();
        stack.pop_back();
        const Node& node = nodes_[ni];
        if (origin[a1] < node.lo[a1] || origin[a1] > node.hi[a1] || origin[a2] < node.lo[a2] ||
            origin[a2] > node.hi[a2] || origin[axis] > node.hi[axis])
            continue;
        if (node.leaf()) {
            for (int i = node.first; i < node.first + node.count; ++i) {
                Index f = order_[i];
                Vec3 a = mesh_.vertices.row(mesh_.faces(f, 0)).transpose();
                Vec3 b = mesh_.vertices.row(mesh_.faces(f, 1)).transpose();
                Vec3 c = mesh_.vertices.row(mesh_.faces(f, 2)).transpose();
                // 2D point-in-triangle in the plane orthogonal to the ray.
                double px = origin[a1], py = origin[a2];
                double x0 = a[a1] - px, y0 = a[a2] - py;
                double x1 = b[a1] - px, y1 = b[a2] - py;
                double x2 = c[a1] - px, y2 = c[a2] - py;
                double c0 = x0 * y1 - x1 * y0;
                double c1 = x1 * y2 - x2 * y1;
                double c2 = x2 * y0 - x0 * y2;
                bool inside = (c0 > 0 && c1 > 0 && c2 > 0) || (c0 < 0 && c1 < 0 && c2 < 0);
                if (!inside) continue;
                double area = c0 + c1 + c2;
                double t = (c1 * a[axis] + c2 * b[axis] + c0 * c[axis]) / area;
                if (t > origin[axis]) ++crossings;
            }
        } else {
            stack.push_back(node.left);
            stack.push_back(node.right);
        }
    }
    return crossings;
}

MatX3 sample_surface(const TriangleMesh& mesh, Index n_samples, Rng& rng) {
    if (mesh.face_count() == 0) throw std::invalid_argument("sample_surface: empty mesh");
    std::vector<double> cdf(mesh.face_count());
    double total = 0.0;
    for (Index f = 0; f < mesh.face_count(); ++f) {
        total += mesh.face_area(f);
        cdf[f] = total;
    }
    if (total <= 0.0) throw std::invalid_argument("sample_surface: zero-area mesh");

    MatX3 samples(n_samples, 3);
    for (Index i = 0; i < n_samples; ++i) {
        double r = rng.uniform() * total;
        Index f = static_cast<Index>(
            std::lower_bound(cdf.begin(), cdf.end(), r) - cdf.begin());
        f = std::min(f, mesh.face_count() - 1);
        double u = rng.uniform(), v = rng.uniform();
        if (u + v > 1.0) {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        Vec3 a = mesh.vertices.row(mesh.faces(f, 0)).transpose();
        Vec3 b = mesh.vertices.row(mesh.faces(f, 1)).transpose();
        Vec3 c = mesh.vertices.row(mesh.faces(f, 2)).transpose();
        samples.row(i) = (a + u * (b - a) + v * (c - a)).transpose();
    }
    return samples;
}

}  // namespace im2mesh
