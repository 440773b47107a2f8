#pragma once

#include "sfield/geometry.hpp"
#include "sfield/image.hpp"
#include "sfield/scene.hpp"

namespace sfield {

// Multi-view projected color statistics of a 3D point: the conditioning input
// that replaces the time dimension. Population variance, so a single valid
// view gives variance zero.
struct ProjectedColorStats {
  Vec3 mean = Vec3::Zero();
  Vec3 variance = Vec3::Ones();  // per-channel
  int valid_count = 0;
};

// Bilinear interpolation of the four nearest pixel centers, clamp-to-edge.
// uv must satisfy 0 <= u < width, 0 <= v < height (throws otherwise); callers
// gate on project_point validity.
Vec3 bilinear_sample(const Image& image, const Vec2& uv);

// Projects x into every train camera of the rig and aggregates the sampled
// colors. Cameras whose projection is invalid are skipped. With no valid
// camera at all the stats degrade to the maximal-uncertainty sentinel
// (mean 0, variance 1).
ProjectedColorStats projected_color_stats(const Vec3& x, const FrameObservation& frame,
                                          const CameraRig& rig);

}  // namespace sfield
