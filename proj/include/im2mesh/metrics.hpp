#pragma once

#include "im2mesh/mesh.hpp"
#include "im2mesh/types.hpp"

namespace im2mesh {

/// Symmetric chamfer distance: mean nearest-surface distance over
/// area-weighted samples of each mesh against the other, averaged.
double chamfer(const TriangleMesh& mesh_a, const TriangleMesh& mesh_b, Index samples, Rng& rng);

/// 10 log10(1 / MSE) in dB, capped at 99.
double psnr(const Image& a, const Image& b);

}  // namespace im2mesh
