#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sfield/geometry.hpp"
#include "sfield/image.hpp"

namespace sfield {

// Constant-density, constant-color primitive moving along a piecewise-linear
// path. The path is parameterized uniformly over the frame range, so a single
// waypoint means a static primitive.
struct Primitive {
  enum class Shape { Sphere, Box };
  Shape shape = Shape::Sphere;
  Vec3 color = Vec3::Ones();
  double density = 1.0;          // volume density, 1/scene-unit
  double radius = 0.1;           // spheres
  Vec3 half_extents = Vec3::Zero();  // boxes
  std::vector<Vec3> waypoints;   // at least one

  Vec3 position_at(int frame, int frame_count) const;
};

struct SceneSpec {
  Vec3 background = Vec3::Zero();
  std::vector<Primitive> primitives;
  int frame_count = 1;
  uint64_t seed = 0;

  // Throws when a primitive leaves [0,1]^3 at any frame, a density is
  // negative, or frame_count < 1.
  void validate() const;
};

// Per-frame multi-view observation. Images are aligned with the rig's camera
// lists; test_images may be empty when the dataset ships no test ground truth.
struct FrameObservation {
  int frame_index = 0;
  std::vector<Image> train_images;
  std::vector<Image> test_images;
};

struct Dataset {
  CameraRig rig;
  std::vector<FrameObservation> frames;
  Vec3 background = Vec3::Zero();

  // Optional instrumentation: when set, every frame(k) access is recorded.
  // Used to verify the streaming trainer's causality contract.
  mutable std::vector<int>* access_log = nullptr;

  int frame_count() const { return static_cast<int>(frames.size()); }
  const FrameObservation& frame(int k) const {
    if (access_log) access_log->push_back(k);
    return frames.at(k);
  }
};

// Analytic ground-truth render: exact transmittance over the constant-density
// intersection intervals of each ray, composited in entry order, background
// last with the remaining transmittance.
Image oracle_render(const SceneSpec& spec, const Camera& camera, int frame);

// Renders every frame for every rig camera with oracle_render.
Dataset generate_scene(const SceneSpec& spec, const CameraRig& rig);

// Dataset directory format:
//   cameras.json                          camera schema from the geometry module
//   frames/<camera-id>/<%05d frame>.png   8-bit RGB
//   meta.txt                              optional: background color, frame count
void write_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

// Scene description file: key-value text with the SceneSpec fields plus the
// camera rig used by `gen-scene`.
struct SceneFile {
  SceneSpec spec;
  int rig_rows = 3;
  int rig_cols = 4;
  double rig_spread_deg = 40.0;
  double rig_distance = 1.6;
  Vec3 look_at = Vec3(0.5, 0.5, 0.5);
  RigOptions rig_options;

  CameraRig make_rig() const;
};

SceneFile load_scene_file(const std::filesystem::path& path);
SceneFile parse_scene_text(const std::string& text, const std::string& origin = "<string>");

}  // namespace sfield
