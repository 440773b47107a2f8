#include "sfield/projcolor.hpp"

#include <cmath>
#include <stdexcept>

namespace sfield {

Vec3 bilinear_sample(const Image& image, const Vec2& uv) {
  if (uv.x() < 0.0 || uv.x() >= image.width || uv.y() < 0.0 || uv.y() >= image.height) {
    throw std::out_of_range("bilinear_sample: uv outside image bounds");
  }
  // Pixel centers sit at integer + 0.5.
  const double fx = uv.x() - 0.5;
  const double fy = uv.y() - 0.5;
  const int x0 = static_cast<int>(std::floor(fx));
  const int y0 = static_cast<int>(std::floor(fy));
  const double ax = fx - x0;
  const double ay = fy - y0;
  auto clampx = [&](int x) { return std::min(std::max(x, 0), image.width - 1); };
  auto clampy = [&](int y) { return std::min(std::max(y, 0), image.height - 1); };
  const Vec3 c00 = image.pixel(clampx(x0), clampy(y0));
  const Vec3 c10 = image.pixel(clampx(x0 + 1), clampy(y0));
  const Vec3 c01 = image.pixel(clampx(x0), clampy(y0 + 1));
  const Vec3 c11 = image.pixel(clampx(x0 + 1), clampy(y0 + 1));
  return (1.0 - ax) * (1.0 - ay) * c00 + ax * (1.0 - ay) * c10 + (1.0 - ax) * ay * c01 +
         ax * ay * c11;
}

ProjectedColorStats projected_color_stats(const Vec3& x, const FrameObservation& frame,
                                          const CameraRig& rig) {
  ProjectedColorStats stats;
  Vec3 sum = Vec3::Zero();
  Vec3 sum_sq = Vec3::Zero();
  int n = 0;
  for (size_t i = 0; i < rig.train_cameras.size(); ++i) {
    const Projection proj = project_point(rig.train_cameras[i], x);
    if (!proj.valid) continue;
    const Vec3 c = bilinear_sample(frame.train_images[i], proj.uv);
    sum += c;
    sum_sq += c.cwiseProduct(c);
    ++n;
  }
  if (n == 0) return stats;  // sentinel defaults
  stats.valid_count = n;
  stats.mean = sum / n;
  Vec3 var = sum_sq / n - stats.mean.cwiseProduct(stats.mean);
  stats.variance = var.cwiseMax(0.0);  // guard tiny negatives from cancellation
  return stats;
}

}  // namespace sfield
