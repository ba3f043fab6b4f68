#pragma once

#include <string>

#include "im2mesh/mesh.hpp"
#include "im2mesh/types.hpp"

namespace im2mesh {

struct RgbaImage {
    Image rgb;    // H x W x 3 in [0,1]
    Image alpha;  // H x W x 1 in [0,1]
    bool has_alpha = false;
};

/// 8-bit PNG input, normalized to rgb + alpha (gray/palette expanded).
RgbaImage load_png(const std::string& path);

/// 8-bit RGBA PNG; values clamped to [0,1]. Pass an empty alpha for opaque.
void save_png(const std::string& path, const Image& rgb, const Image& alpha = {});

/// ASCII OBJ. Vertex colors, when present, use extended 6-float vertex
/// lines (`v x y z r g b`).
void save_obj(const TriangleMesh& mesh, const std::string& path);
TriangleMesh load_obj(const std::string& path);

}  // namespace im2mesh
