#include "sfield/field.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace sfield {

namespace {

constexpr double kSigmaClamp = 1e4;
// Spatial hash primes (Teschner et al.); table sizes are powers of two so the
// modulo is a mask.
constexpr uint64_t kPrimeX = 73856093ull;
constexpr uint64_t kPrimeY = 19349663ull;
constexpr uint64_t kPrimeZ = 83492791ull;

uint32_t corner_table_index(const FieldConfig& config, int level, int ix, int iy, int iz) {
  if (config.level_is_dense(level)) {
    const int side = config.level_resolution(level) + 1;
    return static_cast<uint32_t>((static_cast<size_t>(iz) * side + iy) * side + ix);
  }
  const uint64_t h = static_cast<uint64_t>(ix) * kPrimeX ^ static_cast<uint64_t>(iy) * kPrimeY ^
                     static_cast<uint64_t>(iz) * kPrimeZ;
  return static_cast<uint32_t>(h & (static_cast<uint64_t>(config.table_size) - 1));
}

Eigen::MatrixXd relu(const Eigen::MatrixXd& z) { return z.cwiseMax(0.0); }

void check_finite(const Eigen::MatrixXd& m, const char* what) {
  if (!m.allFinite()) throw std::domain_error(std::string("non-finite ") + what);
}

}  // namespace

int FieldConfig::conditioning_dim() const {
  switch (conditioning) {
    case Conditioning::kProjectedColor: return 6;
    case Conditioning::kTime: return 2 * time_octaves;
    case Conditioning::kNone: return 0;
  }
  return 0;
}

int FieldConfig::level_resolution(int level) const {
  return static_cast<int>(std::floor(base_resolution * std::pow(per_level_scale, level)));
}

bool FieldConfig::level_is_dense(int level) const {
  const long long side = level_resolution(level) + 1;
  return side * side * side <= table_size;
}

void FieldConfig::validate() const {
  if (levels < 1) throw std::invalid_argument("levels must be >= 1");
  if (table_size < 2 || (table_size & (table_size - 1)) != 0) {
    throw std::invalid_argument("table_size must be a power of two");
  }
  if (features < 1) throw std::invalid_argument("features must be >= 1");
  if (base_resolution < 1) throw std::invalid_argument("base_resolution must be >= 1");
  if (per_level_scale <= 1.0) throw std::invalid_argument("per_level_scale must exceed 1");
  if (hidden_width < 1 || hidden_depth < 1) {
    throw std::invalid_argument("MLP needs at least one hidden layer of width >= 1");
  }
  if (dir_octaves < 1 || time_octaves < 1) throw std::invalid_argument("octaves must be >= 1");
}

FieldTensors FieldTensors::zeros(const FieldConfig& config) {
  config.validate();
  FieldTensors t;
  t.tables.reserve(config.levels);
  for (int l = 0; l < config.levels; ++l) {
    t.tables.emplace_back(Eigen::MatrixXd::Zero(config.features, config.table_size));
  }
  int in = config.input_dim();
  for (int i = 0; i < config.hidden_depth; ++i) {
    t.trunk_w.emplace_back(Eigen::MatrixXd::Zero(config.hidden_width, in));
    t.trunk_b.emplace_back(Eigen::VectorXd::Zero(config.hidden_width));
    in = config.hidden_width;
  }
  t.density_w = Eigen::MatrixXd::Zero(1, config.hidden_width);
  t.density_b = Eigen::VectorXd::Zero(1);
  t.color_w = Eigen::MatrixXd::Zero(3, config.hidden_width + config.dir_dim());
  t.color_b = Eigen::VectorXd::Zero(3);
  return t;
}

void FieldTensors::set_zero() {
  for (auto& m : tables) m.setZero();
  for (auto& m : trunk_w) m.setZero();
  for (auto& v : trunk_b) v.setZero();
  density_w.setZero();
  density_b.setZero();
  color_w.setZero();
  color_b.setZero();
}

size_t FieldTensors::parameter_count() const {
  size_t n = 0;
  for (const auto& m : tables) n += m.size();
  for (const auto& m : trunk_w) n += m.size();
  for (const auto& v : trunk_b) n += v.size();
  return n + density_w.size() + density_b.size() + color_w.size() + color_b.size();
}

std::vector<FieldTensors::Block> FieldTensors::blocks() {
  std::vector<Block> out;
  for (auto& m : tables) out.push_back({m.data(), static_cast<size_t>(m.size()), true});
  for (size_t i = 0; i < trunk_w.size(); ++i) {
    out.push_back({trunk_w[i].data(), static_cast<size_t>(trunk_w[i].size()), false});
    out.push_back({trunk_b[i].data(), static_cast<size_t>(trunk_b[i].size()), false});
  }
  out.push_back({density_w.data(), static_cast<size_t>(density_w.size()), false});
  out.push_back({density_b.data(), static_cast<size_t>(density_b.size()), false});
  out.push_back({color_w.data(), static_cast<size_t>(color_w.size()), false});
  out.push_back({color_b.data(), static_cast<size_t>(color_b.size()), false});
  return out;
}

void FieldTensors::scaled_add(const FieldTensors& other, double scale) {
  for (size_t l = 0; l < tables.size(); ++l) tables[l] += scale * other.tables[l];
  for (size_t i = 0; i < trunk_w.size(); ++i) {
    trunk_w[i] += scale * other.trunk_w[i];
    trunk_b[i] += scale * other.trunk_b[i];
  }
  density_w += scale * other.density_w;
  density_b += scale * other.density_b;
  color_w += scale * other.color_w;
  color_b += scale * other.color_b;
}

namespace {

void fill_uniform(Eigen::MatrixXd& m, double limit, Rng rng) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = (2.0 * rng.next_double() - 1.0) * limit;
  }
}

double xavier_limit(Eigen::Index rows, Eigen::Index cols) {
  return std::sqrt(6.0 / static_cast<double>(rows + cols));
}

}  // namespace

FieldParams FieldParams::init(const FieldConfig& config, const Rng& rng) {
  FieldParams p{config, FieldTensors::zeros(config)};
  uint64_t tag = 0;
  for (auto& table : p.tensors.tables) fill_uniform(table, 1e-4, rng.fork(tag++));
  for (auto& w : p.tensors.trunk_w) {
    fill_uniform(w, xavier_limit(w.rows(), w.cols()), rng.fork(tag++));
  }
  fill_uniform(p.tensors.density_w,
               xavier_limit(p.tensors.density_w.rows(), p.tensors.density_w.cols()),
               rng.fork(tag++));
  fill_uniform(p.tensors.color_w,
               xavier_limit(p.tensors.color_w.rows(), p.tensors.color_w.cols()), rng.fork(tag++));
  return p;
}

void frequency_encode(double v, int octaves, double* out) {
  double arg = kPi * v;
  for (int o = 0; o < octaves; ++o) {
    out[2 * o] = std::sin(arg);
    out[2 * o + 1] = std::cos(arg);
    arg *= 2.0;
  }
}

Eigen::Matrix<double, 6, 1> conditioning_from_stats(const ProjectedColorStats& stats) {
  Eigen::Matrix<double, 6, 1> c;
  c << stats.mean, stats.variance;
  return c;
}

void hash_encode(const FieldParams& params, const Vec3& x, double* out, GradientTape* tape) {
  if (!in_unit_cube(x)) throw std::domain_error("hash_encode: position outside the unit cube");
  const FieldConfig& config = params.config;
  const int F = config.features;
  for (int l = 0; l < config.levels; ++l) {
    const int res = config.level_resolution(l);
    int base[3];
    double frac[3];
    for (int a = 0; a < 3; ++a) {
      const double pos = x[a] * res;
      int i0 = static_cast<int>(pos);
      if (i0 > res - 1) i0 = res - 1;  // x = 1.0 lands on the last cell
      base[a] = i0;
      frac[a] = pos - i0;
    }
    double* level_out = out + static_cast<size_t>(l) * F;
    for (int f = 0; f < F; ++f) level_out[f] = 0.0;
    const Eigen::MatrixXd& table = params.tensors.tables[l];
    for (int c = 0; c < 8; ++c) {
      const int ox = c & 1, oy = (c >> 1) & 1, oz = (c >> 2) & 1;
      const double w = (ox ? frac[0] : 1.0 - frac[0]) * (oy ? frac[1] : 1.0 - frac[1]) *
                       (oz ? frac[2] : 1.0 - frac[2]);
      const uint32_t idx =
          corner_table_index(config, l, base[0] + ox, base[1] + oy, base[2] + oz);
      for (int f = 0; f < F; ++f) level_out[f] += w * table(f, idx);
      if (tape) {
        tape->corner_index.push_back(idx);
        tape->corner_weight.push_back(w);
      }
    }
  }
}

namespace {

// Shared trunk evaluation; fills tape activations when recording.
Eigen::MatrixXd build_input(const FieldParams& params, const Eigen::Matrix3Xd& positions,
                            const Eigen::MatrixXd& conditioning, GradientTape* tape) {
  const FieldConfig& config = params.config;
  const int B = static_cast<int>(positions.cols());
  if (conditioning.rows() != config.conditioning_dim()) {
    throw std::invalid_argument("conditioning rows do not match the field config");
  }
  if (conditioning.cols() != B) {
    throw std::invalid_argument("conditioning batch size mismatch");
  }
  check_finite(positions, "positions");
  check_finite(conditioning, "conditioning");
  if (tape) {
    tape->corner_index.reserve(static_cast<size_t>(B) * config.levels * 8);
    tape->corner_weight.reserve(static_cast<size_t>(B) * config.levels * 8);
  }
  Eigen::MatrixXd input(config.input_dim(), B);
  for (int s = 0; s < B; ++s) {
    hash_encode(params, positions.col(s), input.col(s).data(), tape);
  }
  if (config.conditioning_dim() > 0) {
    input.bottomRows(config.conditioning_dim()) = conditioning;
  }
  return input;
}

Eigen::MatrixXd trunk_forward(const FieldParams& params, const Eigen::MatrixXd& input,
                              GradientTape* tape) {
  const FieldTensors& t = params.tensors;
  Eigen::MatrixXd a = input;
  for (size_t i = 0; i < t.trunk_w.size(); ++i) {
    Eigen::MatrixXd z = (t.trunk_w[i] * a).colwise() + t.trunk_b[i];
    if (tape) tape->trunk_z.push_back(z);
    a = relu(z);
  }
  return a;
}

}  // namespace

ForwardResult field_forward(const FieldParams& params, const FieldBatch& batch,
                            GradientTape* tape) {
  const FieldConfig& config = params.config;
  const FieldTensors& t = params.tensors;
  const int B = batch.size();
  if (batch.directions.cols() != B) throw std::invalid_argument("direction batch size mismatch");
  check_finite(batch.directions, "directions");

  if (tape) *tape = GradientTape{};
  Eigen::MatrixXd input = build_input(params, batch.positions, batch.conditioning, tape);
  Eigen::MatrixXd trunk_out = trunk_forward(params, input, tape);

  Eigen::ArrayXd raw_sigma = (t.density_w * trunk_out).row(0).transpose().array() + t.density_b(0);

  Eigen::MatrixXd color_in(config.hidden_width + config.dir_dim(), B);
  color_in.topRows(config.hidden_width) = trunk_out;
  for (int s = 0; s < B; ++s) {
    double* enc = color_in.col(s).data() + config.hidden_width;
    for (int a = 0; a < 3; ++a) {
      frequency_encode(batch.directions(a, s), config.dir_octaves, enc + 2 * config.dir_octaves * a);
    }
  }
  Eigen::Matrix3Xd raw_color = (t.color_w * color_in).colwise() + t.color_b;

  ForwardResult result;
  result.sigma = raw_sigma.exp().min(kSigmaClamp);
  result.color = (1.0 + (-raw_color.array()).exp()).inverse().matrix();

  if (tape) {
    tape->batch = B;
    tape->input = std::move(input);
    tape->trunk_out = std::move(trunk_out);
    tape->raw_sigma = std::move(raw_sigma);
    tape->color_in = std::move(color_in);
    tape->color = result.color;
  }
  return result;
}

Eigen::ArrayXd density_forward(const FieldParams& params, const Eigen::Matrix3Xd& positions,
                               const Eigen::MatrixXd& conditioning) {
  const FieldTensors& t = params.tensors;
  Eigen::MatrixXd input = build_input(params, positions, conditioning, nullptr);
  Eigen::MatrixXd trunk_out = trunk_forward(params, input, nullptr);
  Eigen::ArrayXd raw = (t.density_w * trunk_out).row(0).transpose().array() + t.density_b(0);
  return raw.exp().min(kSigmaClamp);
}

void field_backward(const FieldParams& params, const GradientTape& tape,
                    const Eigen::ArrayXd& dsigma, const Eigen::Matrix3Xd& dcolor,
                    FieldGradients& grads) {
  const FieldConfig& config = params.config;
  const FieldTensors& t = params.tensors;
  FieldTensors& g = grads.tensors;
  const int B = tape.batch;
  if (dsigma.size() != B || dcolor.cols() != B) {
    throw std::invalid_argument("output gradient batch size does not match the tape");
  }
  if (static_cast<int>(t.trunk_w.size()) != config.hidden_depth ||
      tape.input.rows() != config.input_dim()) {
    throw std::invalid_argument("tape does not match the parameter shapes");
  }

  // Color head: logistic' = y (1 - y).
  Eigen::Matrix3Xd d_raw_color =
      (dcolor.array() * tape.color.array() * (1.0 - tape.color.array())).matrix();
  g.color_w.noalias() += d_raw_color * tape.color_in.transpose();
  g.color_b += d_raw_color.rowwise().sum();

  // Density head: clamped exp.
  Eigen::ArrayXd sigma_deriv = tape.raw_sigma.exp();
  sigma_deriv = (sigma_deriv <= kSigmaClamp).select(sigma_deriv, 0.0);
  Eigen::RowVectorXd d_raw_sigma = (dsigma * sigma_deriv).matrix().transpose();
  g.density_w.noalias() += d_raw_sigma * tape.trunk_out.transpose();
  g.density_b(0) += d_raw_sigma.sum();

  Eigen::MatrixXd d_trunk_out =
      t.color_w.leftCols(config.hidden_width).transpose() * d_raw_color;
  d_trunk_out.noalias() += t.density_w.transpose() * d_raw_sigma;

  // Trunk layers, deepest first.
  Eigen::MatrixXd d_act = std::move(d_trunk_out);
  for (int i = config.hidden_depth - 1; i >= 0; --i) {
    const Eigen::MatrixXd& z = tape.trunk_z[i];
    Eigen::MatrixXd d_z = (z.array() > 0.0).select(d_act, 0.0);
    const Eigen::MatrixXd prev =
        (i == 0) ? tape.input : relu(tape.trunk_z[i - 1]);
    g.trunk_w[i].noalias() += d_z * prev.transpose();
    g.trunk_b[i] += d_z.rowwise().sum();
    d_act = t.trunk_w[i].transpose() * d_z;
  }

  // Scatter encoding gradients into the hash tables with the stored weights.
  const int F = config.features;
  const int L = config.levels;
  for (int s = 0; s < B; ++s) {
    for (int l = 0; l < L; ++l) {
      const size_t rec = (static_cast<size_t>(s) * L + l) * 8;
      for (int c = 0; c < 8; ++c) {
        const uint32_t idx = tape.corner_index[rec + c];
        const double w = tape.corner_weight[rec + c];
        g.tables[l].col(idx).noalias() += w * d_act.block(l * F, s, F, 1);
      }
    }
  }
}

FieldOutput field_point(const FieldParams& params, const Vec3& x, const Vec3& d,
                        const Eigen::VectorXd& conditioning) {
  FieldBatch batch;
  batch.positions = x;
  batch.directions = d;
  batch.conditioning = conditioning;
  ForwardResult r = field_forward(params, batch, nullptr);
  return FieldOutput{r.sigma(0), r.color.col(0)};
}

namespace {

constexpr char kMagic[4] = {'S', 'F', 'C', '1'};

template <typename T>
void write_pod(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(value));
}

template <typename T>
T read_pod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(value));
  if (!in) throw std::runtime_error("checkpoint truncated");
  return value;
}

}  // namespace

void save_checkpoint(const FieldParams& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out.write(kMagic, 4);
  write_pod<uint32_t>(out, static_cast<uint32_t>(params.config.conditioning));
  write_pod<uint32_t>(out, params.config.levels);
  write_pod<uint32_t>(out, params.config.table_size);
  write_pod<uint32_t>(out, params.config.features);
  write_pod<uint32_t>(out, params.config.base_resolution);
  write_pod<float>(out, static_cast<float>(params.config.per_level_scale));
  write_pod<uint32_t>(out, params.config.hidden_width);
  write_pod<uint32_t>(out, params.config.hidden_depth);
  write_pod<uint32_t>(out, params.config.dir_octaves);
  write_pod<uint32_t>(out, params.config.time_octaves);
  auto blocks = const_cast<FieldTensors&>(params.tensors).blocks();
  uint64_t count = 0;
  for (const auto& b : blocks) count += b.size;
  write_pod<uint64_t>(out, count);
  std::vector<float> buf;
  for (const auto& b : blocks) {
    buf.resize(b.size);
    for (size_t i = 0; i < b.size; ++i) buf[i] = static_cast<float>(b.data[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("short write to " + path.string());
}

FieldParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("not a field checkpoint: " + path.string());
  }
  FieldConfig config;
  config.conditioning = static_cast<Conditioning>(read_pod<uint32_t>(in));
  config.levels = static_cast<int>(read_pod<uint32_t>(in));
  config.table_size = static_cast<int>(read_pod<uint32_t>(in));
  config.features = static_cast<int>(read_pod<uint32_t>(in));
  config.base_resolution = static_cast<int>(read_pod<uint32_t>(in));
  config.per_level_scale = read_pod<float>(in);
  config.hidden_width = static_cast<int>(read_pod<uint32_t>(in));
  config.hidden_depth = static_cast<int>(read_pod<uint32_t>(in));
  config.dir_octaves = static_cast<int>(read_pod<uint32_t>(in));
  config.time_octaves = static_cast<int>(read_pod<uint32_t>(in));
  config.validate();
  FieldParams params{config, FieldTensors::zeros(config)};
  const uint64_t count = read_pod<uint64_t>(in);
  if (count != params.tensors.parameter_count()) {
    throw std::runtime_error("checkpoint parameter count mismatch");
  }
  std::vector<float> buf;
  for (auto& b : params.tensors.blocks()) {
    buf.resize(b.size);
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw std::runtime_error("checkpoint truncated");
    for (size_t i = 0; i < b.size; ++i) b.data[i] = buf[i];
  }
  return params;
}

}  // namespace sfield
