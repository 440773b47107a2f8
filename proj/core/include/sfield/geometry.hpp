#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sfield/common.hpp"

namespace sfield {

// Pinhole camera. Extrinsics map world points into the camera frame
// (x right, y down, z forward); pixel centers sit at half-integer
// coordinates, so pixel (u, v) covers [u, u+1) x [v, v+1).
struct Camera {
  std::string id;
  int width = 0;
  int height = 0;
  double fx = 0, fy = 0, cx = 0, cy = 0;
  Mat3 rotation = Mat3::Identity();   // world-to-camera
  Vec3 translation = Vec3::Zero();    // world-to-camera
  double near_plane = 0.01;
  double far_plane = 100.0;

  Vec3 center() const { return -rotation.transpose() * translation; }
  Vec3 optical_axis() const { return rotation.row(2).transpose(); }

  // Full 3x4 projection matrix K [R|t].
  Mat34 projection() const;

  // Throws std::invalid_argument on a malformed camera (non-positive focal
  // lengths, bad near/far, non-orthonormal rotation).
  void validate() const;
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();  // unit length
  Vec2 pixel = Vec2::Zero();       // source pixel center (u+0.5, v+0.5)
};

struct Projection {
  Vec2 uv = Vec2::Zero();  // continuous pixel coordinates
  double depth = 0.0;      // z in the camera frame, scene units
  bool valid = false;      // depth > 0 and uv inside [0,w) x [0,h)
};

struct CameraRig {
  std::vector<Camera> train_cameras;
  std::vector<Camera> test_cameras;

  const Camera* find(const std::string& id) const;
};

// Ray through the center of pixel (u, v). u and v are continuous pixel
// coordinates; the ray passes through (u+0.5, v+0.5).
// Throws std::out_of_range when (u, v) is outside the image.
Ray ray_for_pixel(const Camera& camera, double u, double v);

// Projects a world point. Invalid projections (behind the camera or outside
// the image) are reported through the flag, never by throwing.
Projection project_point(const Camera& camera, const Vec3& x);

struct RigOptions {
  int width = 64;
  int height = 64;
  double fov_deg = 50.0;    // horizontal field of view
  double near_plane = 0.0;  // <= 0: derived from distance
  double far_plane = 0.0;   // <= 0: derived from distance
};

// rows x cols training cameras on a spherical patch of angular width
// `spread_deg`, all at `distance` from `look_at` and looking at it, plus one
// test camera at the patch center. Adjacent cameras are spaced
// spread/(max(rows,cols)-1) degrees apart along both axes.
CameraRig make_forward_facing_rig(int rows, int cols, double spread_deg, double distance,
                                  const Vec3& look_at, const RigOptions& options = {});

// cameras.json: array of {id, width, height, fx, fy, cx, cy,
// R (row-major 9 floats), t (3 floats), near, far, role: "train"|"test"}.
CameraRig load_cameras(const std::filesystem::path& path);
void save_cameras(const CameraRig& rig, const std::filesystem::path& path);

}  // namespace sfield
