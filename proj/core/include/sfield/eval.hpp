#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "sfield/trainer.hpp"

namespace sfield {

// 10 log10(1 / MSE) for unit-range images, capped at 100 dB when MSE < 1e-10.
// Throws std::invalid_argument on dimension mismatch.
double psnr(const Image& a, const Image& b);

using LogFn = std::function<void(const std::string&)>;

struct ExtrapolationRow {
  int frame = 0;
  double recon_psnr = 0.0;      // after training on this frame
  double extrap_psnr = 0.0;     // rendered before training, vs this frame's truth
  double extrap_vs_prev = 0.0;  // same render, vs the previous frame's truth
};

struct ExtrapolationResult {
  std::vector<ExtrapolationRow> projected_color;
  std::vector<ExtrapolationRow> space_time;
};

// Frame-ahead test: for each k >= 1, render frame k's test view
// from the state trained through k-1, then train on k and render again. The
// projected-color variant conditions on frame k's train images (observations
// at k, no optimization), the space-time variant on t(k). Extrapolation
// renders bypass occupancy rejection so both variants are compared on the
// field alone.
ExtrapolationResult extrapolation_eval(const Dataset& dataset, const TrainConfig& config,
                                       const LogFn& log = {});

inline constexpr const char* kExtrapolationCsvHeader =
    "variant,frame,recon_psnr_db,extrap_psnr_db,extrap_vs_prev_psnr_db";
void write_extrapolation_csv(const ExtrapolationResult& result,
                             const std::filesystem::path& path);

// Component-knockout comparison on one scene with a shared seed and budget.
struct AblationSpec {
  std::filesystem::path dataset_dir;  // pre-generated dataset directory, or
  std::filesystem::path scene_path;   // scene spec to generate one from
  std::string base_config_text;       // train-config text applied to all variants
  std::vector<std::string> variants;
  // Extra config lines appended per variant (key then value text).
  std::vector<std::pair<std::string, std::string>> overrides;  // "variant:key" -> value
  std::vector<int> j_sweep;  // optional iters_per_frame sweep
  int frames_lo = 5;         // mean-PSNR window (inclusive)
  int frames_hi = 30;

  void validate() const;  // throws std::invalid_argument
};

// Known variant names: full, no-projected-color, no-occ-transition, neither,
// space-time, literal-update, global-update.
bool is_known_variant(const std::string& name);

// The config a named variant runs with, derived from the shared base text.
TrainConfig variant_config(const AblationSpec& spec, const std::string& variant);

AblationSpec parse_ablation_spec(const std::filesystem::path& path);

struct AblationRow {
  std::string variant;
  double mean_psnr_db = 0.0;
  double median_train_ms = 0.0;
  double median_render_ms = 0.0;
  bool ok = false;
  std::string error;
};

inline constexpr const char* kAblationCsvHeader =
    "variant,mean_psnr_db,median_train_ms,median_render_ms";

// Runs stream() once per variant (sequentially, shared dataset and seed).
// Per-variant metrics land in out_dir/<variant>/metrics.csv; the summary in
// out_dir/ablation.csv; a J sweep, when requested, in out_dir/jsweep.csv.
// A failing variant is reported in its row and does not abort the others.
std::vector<AblationRow> run_ablation(const AblationSpec& spec, const Dataset& dataset,
                                      const std::filesystem::path& out_dir,
                                      const LogFn& log = {});

}  // namespace sfield
