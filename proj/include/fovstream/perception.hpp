#pragma once

#include <cmath>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fovstream/contrast.hpp"
#include "fovstream/geometry.hpp"
#include "fovstream/vision.hpp"

namespace fovstream {

/// One eye-tracker sample: gaze in screen degrees (origin at the screen center, +y up)
/// plus the camera pose rendered at that instant.
struct GazeSample {
  double timestamp = 0.0;  // s
  Vec2 gaze;               // deg
  Camera camera;

  friend bool operator==(const GazeSample&, const GazeSample&) = default;
};

using GazeTrace = std::vector<GazeSample>;

enum class GazeMode { fixation, saccade };

struct GazeState {
  GazeMode mode = GazeMode::fixation;
  double speed = 0.0;  // deg/s

  friend bool operator==(const GazeState&, const GazeState&) = default;
};

struct PerceptionParams {
  double omega = 10.0;
  double lambda = 3.0;
  double pedestal = 2.0;
  double saccade_threshold = 180.0;  // deg/s
  int saccade_grid_rows = 8;
  int saccade_grid_cols = 8;

  void validate() const;
};

void to_json(nlohmann::json& j, const PerceptionParams& p);
void from_json(const nlohmann::json& j, PerceptionParams& p);

/// Throws TraceError on non-increasing timestamps or a malformed camera.
void validate_trace(const GazeTrace& trace);

/// Index of the last sample with timestamp <= t (0 when t precedes the trace).
size_t sample_index_at(const GazeTrace& trace, double t);

GazeState classify_speed(double speed, double threshold);

/// Offline labels: central differences inside the trace, one-sided at the ends.
std::vector<GazeState> classify_gaze(const GazeTrace& trace, double threshold = 180.0);

/// Causal label of `cur` from the previous sample (backward difference).
GazeState classify_causal(const GazeSample& prev, const GazeSample& cur, double threshold = 180.0);

/// E(g, x) = M(g - x) + pedestal.
double static_importance(const RetinaParams& retina, Vec2 gaze, Vec2 pixel, double pedestal);

struct ImportanceField {
  int width = 0;
  int height = 0;
  GazeMode mode = GazeMode::fixation;
  std::vector<double> values;
};

/// Analytic extremes of the per-pixel fields for a given configuration.
struct ImportanceBounds {
  double weber_max = 0.0;   // per-band bound on |c - c'| / (|c| + omega)
  double popping_max = 0.0; // P_max
  double static_max = 0.0;  // E_max
  double fixation_lo = 0.0; // -lambda * P_max
  double fixation_hi = 0.0; // E_max
  // Affine range used to normalize per-pixel sensitivities of either mode.
  double norm_lo = 0.0;
  double norm_hi = 0.0;
};

/// Screen-space perceptual model for one display / band layout. Immutable after
/// construction apart from lazily built caches, so share one instance per thread.
class PerceptualModel {
 public:
  PerceptualModel(const RetinaParams& retina, const DisplayParams& display, const PerceptionParams& params,
                  const BandSpec& bands = {}, const ContrastParams& contrast = {});

  const RetinaParams& retina() const { return retina_; }
  const DisplayParams& display() const { return display_; }
  const PerceptionParams& params() const { return params_; }
  const ContrastParams& contrast_params() const { return contrast_; }
  const FilterBank& filters() const { return bank_; }
  int width() const { return display_.width; }
  int height() const { return display_.height; }
  int band_count() const { return bank_.band_count(); }
  size_t pixel_count() const { return size_t(display_.width) * display_.height; }

  /// csf(nu_i, L) per band.
  const std::vector<double>& band_weights() const { return weights_; }

  BandSet decompose(const LuminanceImage& image) const;

  std::vector<double> static_field(Vec2 gaze) const;

  /// Per-pixel, per-band inclusion weights laid out [pixel * band_count + band]. Fixation:
  /// 1 for bands at or below the clamped band, else 0. Saccade: the fraction of the
  /// hypothetical gaze grid for which the band is included (independent of `gaze`).
  std::vector<double> inclusion(Vec2 gaze, GazeMode mode) const;
  const std::vector<double>& saccade_inclusion() const;

  /// Popping at one pixel from per-band contrasts of the before/after frames.
  double popping_from_contrast(const double* before, const double* after, const double* inclusion) const {
    double s = 0.0;
    for (int b = 0; b < band_count(); ++b) {
      if (inclusion[b] == 0.0) continue;
      s += inclusion[b] * weights_[b] * std::abs(before[b] - after[b]) / (std::abs(before[b]) + params_.omega);
    }
    return s;
  }

  double popping_intensity(Vec2 gaze, const BandSet& before, const BandSet& after, int x, int y) const;
  std::vector<double> popping_field(Vec2 gaze, const BandSet& before, const BandSet& after) const;

  /// P averaged over the saccade gaze grid.
  std::vector<double> saccade_popping_field(const BandSet& before, const BandSet& after) const;

  ImportanceField adaptive_importance(Vec2 gaze, GazeState state, const BandSet& before,
                                      const BandSet& after) const;

  /// Telescoping sum over consecutive frames (frames[0] is the coarsest).
  ImportanceField progressive_importance(Vec2 gaze, GazeState state, std::span<const BandSet> frames) const;

  ImportanceBounds bounds() const;

  /// Hypothetical gaze positions of the saccade integral, deg.
  std::vector<Vec2> saccade_grid() const;

 private:
  std::vector<double> popping_with(const std::vector<double>& inclusion, const BandSet& before,
                                   const BandSet& after) const;
  void check_pair(const BandSet& before, const BandSet& after) const;

  RetinaParams retina_;
  DisplayParams display_;
  PerceptionParams params_;
  ContrastParams contrast_;
  FilterBank bank_;
  std::vector<double> weights_;
  mutable std::vector<double> saccade_inclusion_;
};

}  // namespace fovstream
