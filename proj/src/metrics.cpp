#include "im2mesh/metrics.hpp"

namespace im2mesh {

double chamfer(const TriangleMesh& mesh_a, const TriangleMesh& mesh_b, Index samples, Rng& rng) {
    if (mesh_a.face_count() == 0 || mesh_b.face_count() == 0)
        throw std::invalid_argument("chamfer: empty mesh");
    MeshBvh bvh_a(mesh_a), bvh_b(mesh_b);

    auto one_way = [&](const TriangleMesh& src, const MeshBvh& dst_bvh) {
        MatX3 pts = sample_surface(src, samples, rng);
        double sum = 0.0;
        for (Index i = 0; i < pts.rows(); ++i)
            sum += dst_bvh.nearest(pts.row(i).transpose()).distance;
        return sum / static_cast<double>(pts.rows());
    };
    double ab = one_way(mesh_a, bvh_b);
    double ba = one_way(mesh_b, bvh_a);
    return 0.5 * (ab + ba);
}

double psnr(const Image& a, const Image& b) {
    double m = mse(a, b);
    if (m <= 0.0) return 99.0;
    return std::min(99.0, 10.0 * std::log10(1.0 / m));
}

}  // namespace im2mesh
