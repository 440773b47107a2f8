#include "sfield/scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "sfield/kvfile.hpp"

namespace sfield {

Vec3 Primitive::position_at(int frame, int frame_count) const {
  if (waypoints.empty()) throw std::invalid_argument("primitive has no waypoints");
  if (waypoints.size() == 1 || frame_count <= 1) return waypoints.front();
  const double u = static_cast<double>(frame) / (frame_count - 1) * (waypoints.size() - 1);
  const int seg = std::min(static_cast<int>(u), static_cast<int>(waypoints.size()) - 2);
  const double w = u - seg;
  return (1.0 - w) * waypoints[seg] + w * waypoints[seg + 1];
}

void SceneSpec::validate() const {
  if (frame_count < 1) throw std::invalid_argument("scene: frame_count must be >= 1");
  for (std::size_t i = 0; i < primitives.size(); ++i) {
    const Primitive& p = primitives[i];
    if (p.density < 0.0)
      throw std::invalid_argument("scene: primitive " + std::to_string(i) + " has negative density");
    if (p.waypoints.empty())
      throw std::invalid_argument("scene: primitive " + std::to_string(i) + " has no waypoints");
    const Vec3 extent = p.shape == Primitive::Shape::Sphere
                            ? Vec3::Constant(p.radius)
                            : p.half_extents;
    for (int k = 0; k < frame_count; ++k) {
      const Vec3 c = p.position_at(k, frame_count);
      const Vec3 lo = c - extent;
      const Vec3 hi = c + extent;
      if (lo.minCoeff() < 0.0 || hi.maxCoeff() > 1.0)
        throw std::invalid_argument("scene: primitive " + std::to_string(i) +
                                    " leaves the unit cube at frame " + std::to_string(k));
    }
  }
}

namespace {

struct Interval {
  double t_enter, t_exit;
  double density;
  Vec3 emission;  // density * color
};

bool intersect_sphere(const Vec3& origin, const Vec3& dir, const Vec3& center, double radius,
                      double& t0, double& t1) {
  const Vec3 oc = origin - center;
  const double b = oc.dot(dir);
  const double c = oc.squaredNorm() - radius * radius;
  const double disc = b * b - c;
  if (disc <= 0.0) return false;
  const double s = std::sqrt(disc);
  t0 = -b - s;
  t1 = -b + s;
  return true;
}

bool intersect_box(const Vec3& origin, const Vec3& dir, const Vec3& center, const Vec3& half,
                   double& t0, double& t1) {
  t0 = -std::numeric_limits<double>::infinity();
  t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double lo = center[a] - half[a];
    const double hi = center[a] + half[a];
    if (dir[a] == 0.0) {
      if (origin[a] < lo || origin[a] > hi) return false;
      continue;
    }
    double ta = (lo - origin[a]) / dir[a];
    double tb = (hi - origin[a]) / dir[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 >= t1) return false;
  }
  return true;
}

// Exact transmittance compositing over constant-density intervals. Handles
// overlapping primitives by integrating between entry/exit events, where the
// active density and emission are constant.
Vec3 composite_intervals(std::vector<Interval>& intervals, const Vec3& background) {
  if (intervals.empty()) return background;

  struct Event {
    double t;
    int index;
    bool enter;
  };
  std::vector<Event> events;
  events.reserve(intervals.size() * 2);
  for (std::size_t i = 0; i < intervals.size(); ++i) {
    events.push_back({intervals[i].t_enter, static_cast<int>(i), true});
    events.push_back({intervals[i].t_exit, static_cast<int>(i), false});
  }
  std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
    if (a.t != b.t) return a.t < b.t;
    return a.enter > b.enter;
  });

  Vec3 color = Vec3::Zero();
  double transmittance = 1.0;
  double sigma = 0.0;
  Vec3 emission = Vec3::Zero();
  double t_prev = events.front().t;
  for (const Event& e : events) {
    const double len = e.t - t_prev;
    if (len > 0.0 && sigma > 0.0) {
      const double alpha = 1.0 - std::exp(-sigma * len);
      color += transmittance * alpha * (emission / sigma);
      transmittance *= std::exp(-sigma * len);
    }
    t_prev = e.t;
    if (e.enter) {
      sigma += intervals[e.index].density;
      emission += intervals[e.index].emission;
    } else {
      sigma -= intervals[e.index].density;
      emission -= intervals[e.index].emission;
    }
  }
  return color + transmittance * background;
}

}  // namespace

Image oracle_render(const SceneSpec& spec, const Camera& camera, int frame) {
  if (frame < 0 || frame >= spec.frame_count)
    throw std::out_of_range("oracle_render: frame " + std::to_string(frame) + " out of range");

  std::vector<Vec3> positions(spec.primitives.size());
  for (std::size_t i = 0; i < spec.primitives.size(); ++i)
    positions[i] = spec.primitives[i].position_at(frame, spec.frame_count);

  Image image(camera.width, camera.height);
  std::vector<Interval> intervals;
  for (int y = 0; y < camera.height; ++y) {
    for (int x = 0; x < camera.width; ++x) {
      const Ray ray = ray_for_pixel(camera, x, y);
      intervals.clear();
      for (std::size_t i = 0; i < spec.primitives.size(); ++i) {
        const Primitive& p = spec.primitives[i];
        if (p.density == 0.0) continue;
        double t0, t1;
        const bool hit = p.shape == Primitive::Shape::Sphere
                             ? intersect_sphere(ray.origin, ray.direction, positions[i], p.radius, t0, t1)
                             : intersect_box(ray.origin, ray.direction, positions[i], p.half_extents, t0, t1);
        if (!hit) continue;
        t0 = std::max(t0, 0.0);
        if (t1 <= t0) continue;
        intervals.push_back({t0, t1, p.density, p.density * p.color});
      }
      image.set_pixel(x, y, composite_intervals(intervals, spec.background));
    }
  }
  return image;
}

Dataset generate_scene(const SceneSpec& spec, const CameraRig& rig) {
  spec.validate();
  if (rig.train_cameras.empty())
    throw std::invalid_argument("generate_scene: rig has no train cameras");

  Dataset dataset;
  dataset.rig = rig;
  dataset.background = spec.background;
  dataset.frames.resize(spec.frame_count);
  for (int k = 0; k < spec.frame_count; ++k) {
    FrameObservation& obs = dataset.frames[k];
    obs.frame_index = k;
    for (const Camera& cam : rig.train_cameras)
      obs.train_images.push_back(oracle_render(spec, cam, k));
    for (const Camera& cam : rig.test_cameras)
      obs.test_images.push_back(oracle_render(spec, cam, k));
  }
  return dataset;
}

namespace {

std::string frame_filename(int k) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%05d.png", k);
  return buf;
}

}  // namespace

void write_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  fs::create_directories(path);
  save_cameras(dataset.rig, path / "cameras.json");

  {
    std::ofstream meta(path / "meta.txt");
    meta << "background " << dataset.background.x() << " " << dataset.background.y() << " "
         << dataset.background.z() << "\n";
    meta << "frame_count " << dataset.frame_count() << "\n";
  }

  auto write_cam_frames = [&](const Camera& cam, bool test) {
    const fs::path dir = path / "frames" / cam.id;
    fs::create_directories(dir);
    for (int k = 0; k < dataset.frame_count(); ++k) {
      const auto& obs = dataset.frames[k];
      const Image* img = nullptr;
      for (std::size_t i = 0; i < (test ? dataset.rig.test_cameras.size()
                                        : dataset.rig.train_cameras.size());
           ++i) {
        const Camera& c = test ? dataset.rig.test_cameras[i] : dataset.rig.train_cameras[i];
        if (c.id == cam.id) {
          const auto& images = test ? obs.test_images : obs.train_images;
          if (i < images.size()) img = &images[i];
          break;
        }
      }
      if (!img) continue;
      save_png_rgb8(*img, dir / frame_filename(k));
    }
  };
  for (const Camera& cam : dataset.rig.train_cameras) write_cam_frames(cam, false);
  for (const Camera& cam : dataset.rig.test_cameras) write_cam_frames(cam, true);
}

Dataset load_dataset(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  const fs::path camera_file = path / "cameras.json";
  if (!fs::exists(camera_file))
    throw std::runtime_error("dataset is missing camera file: " + camera_file.string());

  Dataset dataset;
  dataset.rig = load_cameras(camera_file);

  if (fs::exists(path / "meta.txt")) {
    const KvFile meta = KvFile::parse(path / "meta.txt");
    if (meta.has("background")) {
      const auto bg = meta.get_doubles("background");
      if (bg.size() != 3) throw std::runtime_error("meta.txt: background needs 3 components");
      dataset.background = Vec3(bg[0], bg[1], bg[2]);
    }
  }

  const std::string& first_id = dataset.rig.train_cameras.front().id;
  const fs::path first_dir = path / "frames" / first_id;
  if (!fs::exists(first_dir))
    throw std::runtime_error("dataset is missing frame directory: " + first_dir.string());
  int frame_count = 0;
  while (fs::exists(first_dir / frame_filename(frame_count))) ++frame_count;
  if (frame_count == 0)
    throw std::runtime_error("dataset has no frames under " + first_dir.string());

  auto load_frame = [&](const Camera& cam, int k) {
    const fs::path file = path / "frames" / cam.id / frame_filename(k);
    if (!fs::exists(file))
      throw std::runtime_error("dataset is missing frame " + std::to_string(k) + " of camera '" +
                               cam.id + "' (" + file.string() + ")");
    Image img = load_png_rgb8(file);
    if (img.width != cam.width || img.height != cam.height)
      throw std::runtime_error("image dimensions of " + file.string() + " (" +
                               std::to_string(img.width) + "x" + std::to_string(img.height) +
                               ") do not match camera '" + cam.id + "' (" +
                               std::to_string(cam.width) + "x" + std::to_string(cam.height) + ")");
    return img;
  };

  dataset.frames.resize(frame_count);
  for (int k = 0; k < frame_count; ++k) {
    dataset.frames[k].frame_index = k;
    for (const Camera& cam : dataset.rig.train_cameras)
      dataset.frames[k].train_images.push_back(load_frame(cam, k));
  }
  // Test ground truth is optional: a test camera contributes images only when
  // its directory exists, but then it must cover every frame.
  for (const Camera& cam : dataset.rig.test_cameras) {
    if (!fs::exists(path / "frames" / cam.id)) continue;
    for (int k = 0; k < frame_count; ++k)
      dataset.frames[k].test_images.push_back(load_frame(cam, k));
  }
  return dataset;
}

CameraRig SceneFile::make_rig() const {
  return make_forward_facing_rig(rig_rows, rig_cols, rig_spread_deg, rig_distance, look_at,
                                 rig_options);
}

SceneFile load_scene_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scene file: " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_scene_text(text, path.string());
}

SceneFile parse_scene_text(const std::string& text, const std::string& origin) {
  const KvFile kv = KvFile::parse_text(text, origin);
  static const std::vector<std::string> known = {
      "background", "frame_count", "seed",     "rig_rows",   "rig_cols",
      "rig_spread_deg", "rig_distance", "look_at",  "rig_width",  "rig_height",
      "rig_fov_deg", "rig_near",     "rig_far",  "primitive"};
  for (const auto& entry : kv.entries) {
    if (std::find(known.begin(), known.end(), entry.key) == known.end()) {
      throw std::runtime_error(origin + ": unknown scene key '" + entry.key + "'");
    }
  }
  SceneFile file;
  if (kv.has("background")) {
    const auto bg = kv.get_doubles("background");
    if (bg.size() != 3) throw std::runtime_error(origin + ": background needs 3 components");
    file.spec.background = Vec3(bg[0], bg[1], bg[2]);
  }
  file.spec.frame_count = static_cast<int>(kv.get_int("frame_count", 1));
  file.spec.seed = static_cast<uint64_t>(kv.get_int("seed", 0));
  file.rig_rows = static_cast<int>(kv.get_int("rig_rows", 3));
  file.rig_cols = static_cast<int>(kv.get_int("rig_cols", 4));
  file.rig_spread_deg = kv.get_double("rig_spread_deg", 40.0);
  file.rig_distance = kv.get_double("rig_distance", 1.6);
  if (kv.has("look_at")) {
    const auto la = kv.get_doubles("look_at");
    if (la.size() != 3) throw std::runtime_error(origin + ": look_at needs 3 components");
    file.look_at = Vec3(la[0], la[1], la[2]);
  }
  file.rig_options.width = static_cast<int>(kv.get_int("rig_width", 64));
  file.rig_options.height = static_cast<int>(kv.get_int("rig_height", 64));
  file.rig_options.fov_deg = kv.get_double("rig_fov_deg", 50.0);
  file.rig_options.near_plane = kv.get_double("rig_near", 0.0);
  file.rig_options.far_plane = kv.get_double("rig_far", 0.0);

  // primitive <sphere|box> color r g b density d (radius r | half_extents x y z)
  //           path x0 y0 z0 [x1 y1 z1 ...]
  for (const auto* entry : kv.all("primitive")) {
    const auto& v = entry->values;
    Primitive prim;
    std::size_t i = 0;
    auto need = [&](std::size_t n, const char* what) {
      if (i + n > v.size())
        throw std::runtime_error(origin + ": primitive: truncated " + std::string(what));
    };
    need(1, "shape");
    if (v[i] == "sphere")
      prim.shape = Primitive::Shape::Sphere;
    else if (v[i] == "box")
      prim.shape = Primitive::Shape::Box;
    else
      throw std::runtime_error(origin + ": unknown primitive shape '" + v[i] + "'");
    ++i;
    while (i < v.size()) {
      const std::string& key = v[i++];
      auto num = [&]() -> double {
        need(1, key.c_str());
        return std::stod(v[i++]);
      };
      if (key == "color") {
        prim.color = Vec3(num(), num(), num());
      } else if (key == "density") {
        prim.density = num();
      } else if (key == "radius") {
        prim.radius = num();
      } else if (key == "half_extents") {
        prim.half_extents = Vec3(num(), num(), num());
      } else if (key == "path") {
        while (i + 3 <= v.size()) {
          const double x = std::stod(v[i]);
          const double y = std::stod(v[i + 1]);
          const double z = std::stod(v[i + 2]);
          prim.waypoints.emplace_back(x, y, z);
          i += 3;
        }
        if (i != v.size())
          throw std::runtime_error(origin + ": primitive path has a dangling coordinate");
      } else {
        throw std::runtime_error(origin + ": unknown primitive attribute '" + key + "'");
      }
    }
    if (prim.waypoints.empty())
      throw std::runtime_error(origin + ": primitive needs a path with at least one waypoint");
    file.spec.primitives.push_back(std::move(prim));
  }
  file.spec.validate();
  return file;
}

}  // namespace sfield
