#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "sfield/common.hpp"
#include "sfield/projcolor.hpp"
#include "sfield/rng.hpp"

namespace sfield {

// What gets concatenated to the spatial hash features at the MLP input.
enum class Conditioning {
  kProjectedColor,  // mean + variance of multi-view projected colors (6)
  kTime,            // frequency encoding of normalized time (2 * time_octaves)
  kNone,            // spatial features only
};

struct FieldConfig {
  int levels = 8;             // L
  int table_size = 1 << 14;   // T, power of two
  int features = 2;           // F per level
  int base_resolution = 16;
  double per_level_scale = 1.5;
  int hidden_width = 64;
  int hidden_depth = 2;
  int dir_octaves = 4;   // sin/cos octaves for the view direction
  int time_octaves = 4;  // sin/cos octaves for normalized time
  Conditioning conditioning = Conditioning::kProjectedColor;

  int encoding_dim() const { return levels * features; }
  int conditioning_dim() const;
  int input_dim() const { return encoding_dim() + conditioning_dim(); }
  int dir_dim() const { return 3 * 2 * dir_octaves; }
  // Lattice resolution of a level (cells per axis; corners are res+1).
  int level_resolution(int level) const;
  // Dense corner indexing when the lattice fits the table, spatial hash otherwise.
  bool level_is_dense(int level) const;

  void validate() const;  // throws std::invalid_argument
};

// One learnable tensor set: hash tables plus the MLP. Also reused as the
// gradient / Adam-moment container since shapes always match.
struct FieldTensors {
  std::vector<Eigen::MatrixXd> tables;   // per level: features x table entries
  std::vector<Eigen::MatrixXd> trunk_w;  // [0]: width x input_dim, rest width x width
  std::vector<Eigen::VectorXd> trunk_b;
  Eigen::MatrixXd density_w;  // 1 x width
  Eigen::VectorXd density_b;  // 1
  Eigen::MatrixXd color_w;    // 3 x (width + dir_dim)
  Eigen::VectorXd color_b;    // 3

  static FieldTensors zeros(const FieldConfig& config);

  void set_zero();
  size_t parameter_count() const;

  struct Block {
    double* data;
    size_t size;
    bool is_hash;  // hash tables get their own learning rate
  };
  std::vector<Block> blocks();  // canonical order, stable across calls

  void scaled_add(const FieldTensors& other, double scale);  // this += scale * other
};

struct FieldParams {
  FieldConfig config;
  FieldTensors tensors;

  // Hash tables ~ U(-1e-4, 1e-4), MLP layers Xavier-uniform, biases zero.
  static FieldParams init(const FieldConfig& config, const Rng& rng);
};

struct FieldGradients {
  FieldTensors tensors;

  explicit FieldGradients(const FieldConfig& config) : tensors(FieldTensors::zeros(config)) {}
  void set_zero() { tensors.set_zero(); }
  void add(const FieldGradients& other) { tensors.scaled_add(other.tensors, 1.0); }
};

struct FieldOutput {
  double sigma = 0.0;  // >= 0
  Vec3 color = Vec3::Zero();
};

// One forward batch, columns = samples.
struct FieldBatch {
  Eigen::Matrix3Xd positions;     // in [0,1]^3
  Eigen::Matrix3Xd directions;    // unit vectors
  Eigen::MatrixXd conditioning;   // conditioning_dim() rows

  int size() const { return static_cast<int>(positions.cols()); }
};

struct ForwardResult {
  Eigen::ArrayXd sigma;     // B
  Eigen::Matrix3Xd color;   // 3 x B
};

// Cached activations of one recorded forward pass, consumed by field_backward.
struct GradientTape {
  int batch = 0;
  Eigen::MatrixXd input;                // input_dim x B
  std::vector<Eigen::MatrixXd> trunk_z; // pre-activation per trunk layer
  Eigen::MatrixXd trunk_out;            // post-ReLU output of the last trunk layer
  Eigen::ArrayXd raw_sigma;             // density pre-activation
  Eigen::MatrixXd color_in;             // (width + dir_dim) x B
  Eigen::Matrix3Xd color;               // post-logistic
  // Trilinear scatter records: 8 corners per (sample, level).
  // Laid out sample-major: entry (s, l, c) at ((s * levels) + l) * 8 + c.
  std::vector<uint32_t> corner_index;
  std::vector<double> corner_weight;
};

// Multiresolution hash encoding of x: per level, trilinear blend of 8 corner
// feature vectors. Throws std::domain_error when x leaves the unit cube.
// When tape is non-null, corner indices/weights are appended for backward.
void hash_encode(const FieldParams& params, const Vec3& x, double* out, GradientTape* tape);

// Frequency encoding (sin/cos ladder, octave o contributes sin(2^o pi v),
// cos(2^o pi v)). Writes 2*octaves values.
void frequency_encode(double v, int octaves, double* out);

// Conditioning rows for the projected-color variant.
Eigen::Matrix<double, 6, 1> conditioning_from_stats(const ProjectedColorStats& stats);

// Batched forward pass. Records into tape when non-null. Throws
// std::domain_error on non-finite inputs or positions outside the unit cube,
// std::invalid_argument when conditioning rows do not match the config.
ForwardResult field_forward(const FieldParams& params, const FieldBatch& batch,
                            GradientTape* tape);

// Density branch only (no direction encoding, no color head): grid refresh path.
Eigen::ArrayXd density_forward(const FieldParams& params, const Eigen::Matrix3Xd& positions,
                               const Eigen::MatrixXd& conditioning);

// Exact reverse-mode gradients of the recorded batch; accumulates into grads.
void field_backward(const FieldParams& params, const GradientTape& tape,
                    const Eigen::ArrayXd& dsigma, const Eigen::Matrix3Xd& dcolor,
                    FieldGradients& grads);

// Single-sample convenience wrapper (tests, probes).
FieldOutput field_point(const FieldParams& params, const Vec3& x, const Vec3& d,
                        const Eigen::VectorXd& conditioning);

// Versioned little-endian binary checkpoint:
//   magic "SFC1" | u32 conditioning | u32 levels | u32 table_size | u32 features
//   | u32 base_resolution | f32 per_level_scale | u32 hidden_width
//   | u32 hidden_depth | u32 dir_octaves | u32 time_octaves | u64 param_count
//   | param_count f32 values in block order.
void save_checkpoint(const FieldParams& params, const std::filesystem::path& path);
FieldParams load_checkpoint(const std::filesystem::path& path);

}  // namespace sfield
