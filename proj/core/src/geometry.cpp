#include "sfield/geometry.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

namespace sfield {

Mat34 Camera::projection() const {
  Mat3 intrinsics;
  intrinsics << fx, 0, cx, 0, fy, cy, 0, 0, 1;
  Mat34 extrinsics;
  extrinsics.block<3, 3>(0, 0) = rotation;
  extrinsics.col(3) = translation;
  return intrinsics * extrinsics;
}

void Camera::validate() const {
  if (width <= 0 || height <= 0)
    throw std::invalid_argument("camera '" + id + "': non-positive image dimensions");
  if (fx <= 0 || fy <= 0)
    throw std::invalid_argument("camera '" + id + "': focal lengths must be positive");
  if (!(near_plane > 0.0) || !(near_plane < far_plane))
    throw std::invalid_argument("camera '" + id + "': requires 0 < near < far");
  const Mat3 err = rotation * rotation.transpose() - Mat3::Identity();
  if (err.cwiseAbs().maxCoeff() >= 1e-6)
    throw std::invalid_argument("camera '" + id + "': rotation is not orthonormal");
}

const Camera* CameraRig::find(const std::string& id) const {
  for (const auto& c : train_cameras)
    if (c.id == id) return &c;
  for (const auto& c : test_cameras)
    if (c.id == id) return &c;
  return nullptr;
}

Ray ray_for_pixel(const Camera& camera, double u, double v) {
  if (!(u >= 0.0) || !(u < camera.width) || !(v >= 0.0) || !(v < camera.height))
    throw std::out_of_range("ray_for_pixel: pixel (" + std::to_string(u) + ", " +
                            std::to_string(v) + ") outside image of camera '" + camera.id + "'");
  const double px = u + 0.5;
  const double py = v + 0.5;
  const Vec3 dir_cam((px - camera.cx) / camera.fx, (py - camera.cy) / camera.fy, 1.0);
  Ray ray;
  ray.origin = camera.center();
  ray.direction = (camera.rotation.transpose() * dir_cam).normalized();
  ray.pixel = Vec2(px, py);
  return ray;
}

Projection project_point(const Camera& camera, const Vec3& x) {
  const Vec3 x_cam = camera.rotation * x + camera.translation;
  Projection proj;
  proj.depth = x_cam.z();
  if (x_cam.z() != 0.0) {
    proj.uv = Vec2(camera.fx * x_cam.x() / x_cam.z() + camera.cx,
                   camera.fy * x_cam.y() / x_cam.z() + camera.cy);
  }
  proj.valid = proj.depth > 0.0 && proj.uv.x() >= 0.0 && proj.uv.x() < camera.width &&
               proj.uv.y() >= 0.0 && proj.uv.y() < camera.height;
  return proj;
}

namespace {

Mat3 look_at_rotation(const Vec3& position, const Vec3& target) {
  const Vec3 offset = target - position;
  if (offset.norm() < 1e-12)
    throw std::invalid_argument("make_forward_facing_rig: camera coincides with look-at point");
  const Vec3 forward = offset.normalized();
  Vec3 up = Vec3::UnitY();
  if (std::abs(forward.dot(up)) > 1.0 - 1e-9) up = Vec3::UnitX();
  const Vec3 right = up.cross(forward).normalized();
  const Vec3 down = forward.cross(right);
  Mat3 rotation;
  rotation.row(0) = right;
  rotation.row(1) = down;
  rotation.row(2) = forward;
  return rotation;
}

Camera make_rig_camera(const std::string& id, double azimuth, double elevation, double distance,
                       const Vec3& look_at, const RigOptions& options) {
  // Patch parameterization: (0,0) puts the camera on the -z side looking +z.
  const Vec3 radial(std::sin(azimuth) * std::cos(elevation), std::sin(elevation),
                    -std::cos(azimuth) * std::cos(elevation));
  Camera cam;
  cam.id = id;
  cam.width = options.width;
  cam.height = options.height;
  const double fov = options.fov_deg * M_PI / 180.0;
  cam.fx = cam.fy = options.width / (2.0 * std::tan(fov / 2.0));
  cam.cx = options.width / 2.0;
  cam.cy = options.height / 2.0;
  const Vec3 position = look_at + distance * radial;
  cam.rotation = look_at_rotation(position, look_at);
  cam.translation = -cam.rotation * position;
  cam.near_plane = options.near_plane > 0.0 ? options.near_plane : std::max(0.05, distance - 1.0);
  cam.far_plane = options.far_plane > 0.0 ? options.far_plane : distance + 1.0;
  cam.validate();
  return cam;
}

}  // namespace

CameraRig make_forward_facing_rig(int rows, int cols, double spread_deg, double distance,
                                  const Vec3& look_at, const RigOptions& options) {
  if (rows < 1 || cols < 1)
    throw std::invalid_argument("make_forward_facing_rig: rows and cols must be >= 1");
  const int longest = std::max(rows, cols);
  if (!(spread_deg >= 0.0) || !(spread_deg < 180.0) || (longest > 1 && spread_deg == 0.0))
    throw std::invalid_argument("make_forward_facing_rig: spread must be in (0, 180) degrees");

  const double step = longest > 1 ? (spread_deg * M_PI / 180.0) / (longest - 1) : 0.0;

  CameraRig rig;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double elevation = (r - (rows - 1) / 2.0) * step;
      const double azimuth = (c - (cols - 1) / 2.0) * step;
      const std::string id = "train_r" + std::to_string(r) + "c" + std::to_string(c);
      rig.train_cameras.push_back(
          make_rig_camera(id, azimuth, elevation, distance, look_at, options));
    }
  }
  rig.test_cameras.push_back(make_rig_camera("test_center", 0.0, 0.0, distance, look_at, options));
  return rig;
}

namespace {

nlohmann::json camera_to_json(const Camera& cam, const std::string& role) {
  nlohmann::json j;
  j["id"] = cam.id;
  j["width"] = cam.width;
  j["height"] = cam.height;
  j["fx"] = cam.fx;
  j["fy"] = cam.fy;
  j["cx"] = cam.cx;
  j["cy"] = cam.cy;
  std::vector<double> r(9);
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) r[i * 3 + k] = cam.rotation(i, k);
  j["R"] = r;
  j["t"] = std::vector<double>{cam.translation.x(), cam.translation.y(), cam.translation.z()};
  j["near"] = cam.near_plane;
  j["far"] = cam.far_plane;
  j["role"] = role;
  return j;
}

Camera camera_from_json(const nlohmann::json& j) {
  Camera cam;
  cam.id = j.at("id").get<std::string>();
  cam.width = j.at("width").get<int>();
  cam.height = j.at("height").get<int>();
  cam.fx = j.at("fx").get<double>();
  cam.fy = j.at("fy").get<double>();
  cam.cx = j.at("cx").get<double>();
  cam.cy = j.at("cy").get<double>();
  const auto r = j.at("R").get<std::vector<double>>();
  if (r.size() != 9) throw std::runtime_error("cameras.json: R must hold 9 floats");
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) cam.rotation(i, k) = r[i * 3 + k];
  const auto t = j.at("t").get<std::vector<double>>();
  if (t.size() != 3) throw std::runtime_error("cameras.json: t must hold 3 floats");
  cam.translation = Vec3(t[0], t[1], t[2]);
  cam.near_plane = j.at("near").get<double>();
  cam.far_plane = j.at("far").get<double>();
  cam.validate();
  return cam;
}

}  // namespace

CameraRig load_cameras(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open camera file: " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed camera file " + path.string() + ": " + e.what());
  }
  if (!doc.is_array()) throw std::runtime_error(path.string() + ": expected a JSON array");
  CameraRig rig;
  for (const auto& entry : doc) {
    const std::string role = entry.at("role").get<std::string>();
    if (role == "train")
      rig.train_cameras.push_back(camera_from_json(entry));
    else if (role == "test")
      rig.test_cameras.push_back(camera_from_json(entry));
    else
      throw std::runtime_error(path.string() + ": unknown camera role '" + role + "'");
  }
  if (rig.train_cameras.empty())
    throw std::runtime_error(path.string() + ": rig has no train cameras");
  return rig;
}

void save_cameras(const CameraRig& rig, const std::filesystem::path& path) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& cam : rig.train_cameras) doc.push_back(camera_to_json(cam, "train"));
  for (const auto& cam : rig.test_cameras) doc.push_back(camera_to_json(cam, "test"));
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write camera file: " + path.string());
  out << doc.dump(2) << "\n";
}

}  // namespace sfield
