#include "sfield/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "sfield/kvfile.hpp"

namespace sfield {

double psnr(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height) {
    throw std::invalid_argument("psnr: image dimensions differ");
  }
  const size_t n = a.data.size();
  if (n == 0) throw std::invalid_argument("psnr: empty images");
  double sum = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(a.data[i]) - b.data[i];
    sum += d * d;
  }
  const double mse = sum / n;
  if (mse < 1e-10) return 100.0;
  return 10.0 * std::log10(1.0 / mse);
}

namespace {

double mean_test_psnr(const std::vector<RenderOutput>& renders,
                      const std::vector<Image>& truths) {
  double sum = 0.0;
  for (size_t i = 0; i < renders.size(); ++i) sum += psnr(renders[i].image, truths[i]);
  return sum / renders.size();
}

std::vector<RenderOutput> render_test_views(const FrameState& state,
                                            const FrameObservation& obs, const Vec3& background,
                                            const TrainConfig& config, bool with_rejection) {
  RenderConfig rc;
  rc.samples_per_ray = config.render_samples_per_ray;
  rc.sigma_min = with_rejection ? config.sampler.sigma_min_floor : 0.0;
  rc.rescue_interval = config.sampler.rescue_interval;
  rc.deterministic = true;
  rc.background = background;
  const FrameContext ctx{&state.params, &state.rig, &obs,
                         state.normalized_time(obs.frame_index)};
  std::vector<RenderOutput> out;
  for (const Camera& cam : state.rig.test_cameras) {
    out.push_back(render_image(ctx, with_rejection ? &state.grid : nullptr, cam, rc));
  }
  return out;
}

std::vector<ExtrapolationRow> extrapolate_variant(const Dataset& dataset, TrainConfig config,
                                                  Conditioning conditioning, const LogFn& log) {
  config.field.conditioning = conditioning;
  config.validate();
  FrameState state = warmup_first_frame(dataset, config);
  std::vector<ExtrapolationRow> rows;
  const int frames = static_cast<int>(dataset.frames.size());
  for (int k = 1; k < frames; ++k) {
    const FrameObservation& obs = dataset.frame(k);
    if (obs.test_images.empty()) {
      throw std::invalid_argument("extrapolation_eval needs test images on every frame");
    }
    ExtrapolationRow row;
    row.frame = k;
    // Before any training on frame k: the field sees only frame k's
    // observations through its conditioning input.
    std::vector<RenderOutput> ahead =
        render_test_views(state, obs, dataset.background, config, /*with_rejection=*/false);
    row.extrap_psnr = mean_test_psnr(ahead, obs.test_images);
    row.extrap_vs_prev = mean_test_psnr(ahead, dataset.frames[k - 1].test_images);

    train_frame(state, obs, config);
    std::vector<RenderOutput> recon =
        render_test_views(state, obs, dataset.background, config, /*with_rejection=*/false);
    row.recon_psnr = mean_test_psnr(recon, obs.test_images);
    rows.push_back(row);
    if (log) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "frame %d: extrap %.2f dB, recon %.2f dB", k,
                    row.extrap_psnr, row.recon_psnr);
      log(buf);
    }
  }
  return rows;
}

}  // namespace

ExtrapolationResult extrapolation_eval(const Dataset& dataset, const TrainConfig& config,
                                       const LogFn& log) {
  if (dataset.frames.size() < 3) {
    throw std::invalid_argument("extrapolation_eval needs at least 3 frames");
  }
  ExtrapolationResult result;
  if (log) log("variant projected-color");
  result.projected_color =
      extrapolate_variant(dataset, config, Conditioning::kProjectedColor, log);
  if (log) log("variant space-time");
  result.space_time = extrapolate_variant(dataset, config, Conditioning::kTime, log);
  return result;
}

void write_extrapolation_csv(const ExtrapolationResult& result,
                             const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << kExtrapolationCsvHeader << "\n";
  auto emit = [&](const char* name, const std::vector<ExtrapolationRow>& rows) {
    for (const auto& r : rows) {
      char buf[200];
      std::snprintf(buf, sizeof buf, "%s,%d,%.4f,%.4f,%.4f", name, r.frame, r.recon_psnr,
                    r.extrap_psnr, r.extrap_vs_prev);
      out << buf << "\n";
    }
  };
  emit("projected-color", result.projected_color);
  emit("space-time", result.space_time);
}

bool is_known_variant(const std::string& name) {
  static const std::vector<std::string> known = {
      "full",       "no-projected-color", "no-occ-transition", "neither",
      "space-time", "literal-update",     "global-update"};
  return std::find(known.begin(), known.end(), name) != known.end();
}

void AblationSpec::validate() const {
  if (variants.size() < 2) throw std::invalid_argument("ablation needs at least 2 variants");
  for (const auto& v : variants) {
    if (!is_known_variant(v)) throw std::invalid_argument("unknown ablation variant: " + v);
  }
  if (dataset_dir.empty() == scene_path.empty()) {
    throw std::invalid_argument("ablation spec needs exactly one of dataset/scene");
  }
  if (frames_lo < 1 || frames_hi < frames_lo) {
    throw std::invalid_argument("bad ablation frame window");
  }
  for (int j : j_sweep) {
    if (j < 0) throw std::invalid_argument("j_sweep values must be >= 0");
  }
}

TrainConfig variant_config(const AblationSpec& spec, const std::string& variant) {
  std::string text = spec.base_config_text;
  text += "\n";
  if (variant == "no-projected-color") {
    text += "variant unconditioned\n";
  } else if (variant == "no-occ-transition") {
    text += "transition false\n";
  } else if (variant == "neither") {
    text += "variant unconditioned\ntransition false\n";
  } else if (variant == "space-time") {
    text += "variant space-time\n";
  } else if (variant == "literal-update") {
    text += "update_mode literal\n";
  } else if (variant == "global-update") {
    text += "global_update true\ntransition false\n";
  } else if (variant != "full") {
    throw std::invalid_argument("unknown ablation variant: " + variant);
  }
  const std::string prefix = variant + ":";
  for (const auto& [key, value] : spec.overrides) {
    if (key.rfind(prefix, 0) == 0) {
      text += key.substr(prefix.size()) + " " + value + "\n";
    }
  }
  return parse_train_config(text);
}

AblationSpec parse_ablation_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open ablation spec " + path.string());
  AblationSpec spec;
  std::string line;
  int lineno = 0;
  const auto base_dir = path.parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : base_dir / fp;
  };
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    std::string key;
    if (!(ss >> key)) continue;
    auto fail = [&](const std::string& why) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + why);
    };
    if (key == "dataset") {
      std::string v;
      if (!(ss >> v)) fail("dataset needs a path");
      spec.dataset_dir = resolve(v);
    } else if (key == "scene") {
      std::string v;
      if (!(ss >> v)) fail("scene needs a path");
      spec.scene_path = resolve(v);
    } else if (key == "config") {
      std::string v;
      if (!(ss >> v)) fail("config needs a path");
      std::ifstream cfg(resolve(v));
      if (!cfg) fail("cannot open config " + v);
      std::stringstream buf;
      buf << cfg.rdbuf();
      spec.base_config_text = buf.str();
    } else if (key == "variant") {
      std::string v;
      if (!(ss >> v)) fail("variant needs a name");
      spec.variants.push_back(v);
    } else if (key == "set") {
      std::string variant, cfg_key, value, extra;
      if (!(ss >> variant >> cfg_key >> value)) fail("set needs: variant key value");
      while (ss >> extra) value += " " + extra;
      spec.overrides.emplace_back(variant + ":" + cfg_key, value);
    } else if (key == "j_sweep") {
      int j;
      while (ss >> j) spec.j_sweep.push_back(j);
    } else if (key == "frames_lo") {
      if (!(ss >> spec.frames_lo)) fail("frames_lo needs a number");
    } else if (key == "frames_hi") {
      if (!(ss >> spec.frames_hi)) fail("frames_hi needs a number");
    } else {
      fail("unknown key: " + key);
    }
  }
  spec.validate();
  return spec;
}

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct VariantSummary {
  double mean_psnr = 0.0;
  double med_train = 0.0;
  double med_render = 0.0;
};

VariantSummary summarize(const std::vector<FrameMetrics>& metrics, int lo, int hi) {
  VariantSummary s;
  double sum = 0.0;
  int count = 0;
  std::vector<double> train, render;
  for (const auto& m : metrics) {
    if (m.frame >= 1) {  // medians exclude the warm-up frame
      train.push_back(m.train_ms);
      render.push_back(m.render_ms);
    }
    if (m.frame >= lo && m.frame <= hi) {
      sum += m.psnr_db;
      ++count;
    }
  }
  s.mean_psnr = count > 0 ? sum / count : 0.0;
  s.med_train = median(train);
  s.med_render = median(render);
  return s;
}

void write_metrics_csv(const std::vector<FrameMetrics>& metrics,
                       const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << kMetricsCsvHeader << "\n";
  for (const auto& m : metrics) out << format_metrics_row(m) << "\n";
}

}  // namespace

std::vector<AblationRow> run_ablation(const AblationSpec& spec, const Dataset& dataset,
                                      const std::filesystem::path& out_dir, const LogFn& log) {
  spec.validate();
  std::filesystem::create_directories(out_dir);
  std::vector<AblationRow> rows;
  std::ofstream jsweep_out;
  if (!spec.j_sweep.empty()) {
    jsweep_out.open(out_dir / "jsweep.csv");
    jsweep_out << "variant,iters_per_frame,mean_psnr_db,median_train_ms\n";
  }

  for (const std::string& variant : spec.variants) {
    AblationRow row;
    row.variant = variant;
    try {
      const TrainConfig config = variant_config(spec, variant);
      if (log) log("ablation variant " + variant);
      const std::filesystem::path vdir = out_dir / variant;
      std::filesystem::create_directories(vdir);
      StreamResult res = stream(dataset, config);
      write_metrics_csv(res.metrics, vdir / "metrics.csv");
      const VariantSummary s = summarize(res.metrics, spec.frames_lo, spec.frames_hi);
      row.mean_psnr_db = s.mean_psnr;
      row.median_train_ms = s.med_train;
      row.median_render_ms = s.med_render;
      row.ok = true;

      for (int j : spec.j_sweep) {
        TrainConfig jc = config;
        jc.iters_per_frame = j;
        if (jc.warmup_iters < j) jc.warmup_iters = j;
        StreamResult jres = stream(dataset, jc);
        const VariantSummary js = summarize(jres.metrics, spec.frames_lo, spec.frames_hi);
        char buf[200];
        std::snprintf(buf, sizeof buf, "%s,%d,%.4f,%.3f", variant.c_str(), j, js.mean_psnr,
                      js.med_train);
        jsweep_out << buf << "\n";
        jsweep_out.flush();
      }
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
      if (log) log("variant " + variant + " failed: " + row.error);
    }
    rows.push_back(row);

    // Summary rewritten after every variant so partial results survive aborts.
    std::ofstream out(out_dir / "ablation.csv");
    out << kAblationCsvHeader << "\n";
    for (const auto& r : rows) {
      if (!r.ok) continue;
      char buf[240];
      std::snprintf(buf, sizeof buf, "%s,%.4f,%.3f,%.3f", r.variant.c_str(), r.mean_psnr_db,
                    r.median_train_ms, r.median_render_ms);
      out << buf << "\n";
    }
  }
  return rows;
}

}  // namespace sfield
