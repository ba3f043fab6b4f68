#pragma once

#include <array>
#include <vector>

#include "im2mesh/camera.hpp"
#include "im2mesh/mesh.hpp"
#include "im2mesh/texture.hpp"
#include "im2mesh/types.hpp"

namespace im2mesh {

struct MeshHit {
    int32_t face = -1;
    double bary[3] = {0, 0, 0};  // perspective-correct
    double depth = 0.0;

    bool valid() const { return face >= 0; }
};

struct MeshRenderOptions {
    int threads = 1;  // row-parallel shading/backward workers
    double near = 0.05;
    double ambient = 0.2;
    double diffuse = 0.8;
    bool mask_band = true;          // 1-pixel coverage blending on the silhouette
    double band_radius = 1.5;       // pixels searched around each silhouette segment
    double occlusion_tol = 0.05;    // depth slack when testing band visibility
};

/// Rasterized mesh view. Hit records and silhouette band entries carry what
/// the backward pass needs to replay the chain.
struct MeshImage {
    Image rgb;   // H x W x 3, black background
    Image mask;  // H x W x 1
    std::vector<MeshHit> hits;

    struct BandPixel {
        int row, col;
        int segment;   // index into silhouette_segments
        double t;      // closest-point parameter on the segment
        double sd;     // signed distance, positive inside
    };
    std::vector<BandPixel> band;
    std::vector<std::array<Index, 2>> silhouette_segments;  // vertex index pairs

    const MeshHit& hit(int r, int c) const {
        return hits[static_cast<size_t>(r) * rgb.width + c];
    }
};

/// Rasterize with flat shading and a camera-facing directional light.
/// Albedo comes from `texture` (queried at the surface point with the
/// given eta) or, when texture is null, from interpolated vertex colors.
MeshImage render_mesh(const TriangleMesh& mesh, const TextureField* texture, double eta,
                      const CameraPose& pose, const MeshRenderOptions& opts = {});

struct MeshGradients {
    MatX3 vertices;
    VecX texture;  // aligned with TextureField::params()

    MeshGradients(Index n_vertices, Index n_texture_params)
        : vertices(MatX3::Zero(n_vertices, 3)), texture(VecX::Zero(n_texture_params)) {}
};

/// Exact gradients through barycentric interpolation, the texture query,
/// and shading; silhouette gradients through the mask band only.
MeshGradients backward_mesh(const TriangleMesh& mesh, const TextureField& texture, double eta,
                            const CameraPose& pose, const MeshImage& image, const Image& grad_rgb,
                            const Image& grad_mask, const MeshRenderOptions& opts = {});

}  // namespace im2mesh
