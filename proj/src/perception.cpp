#include "fovstream/perception.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <nlohmann/json.hpp>

#include "fovstream/errors.hpp"

namespace fovstream {

void PerceptionParams::validate() const {
  if (!(omega > 0.0)) throw ConfigError("perception: omega must be > 0");
  if (!(lambda >= 0.0)) throw ConfigError("perception: lambda must be >= 0");
  if (!(pedestal >= 0.0)) throw ConfigError("perception: pedestal must be >= 0");
  if (!(saccade_threshold > 0.0)) throw ConfigError("perception: saccade_threshold must be > 0");
  if (saccade_grid_rows <= 0 || saccade_grid_cols <= 0) throw ConfigError("perception: saccade grid must be positive");
}

void to_json(nlohmann::json& j, const PerceptionParams& p) {
  j = nlohmann::json{{"omega", p.omega},
                     {"lambda", p.lambda},
                     {"pedestal", p.pedestal},
                     {"saccade_threshold", p.saccade_threshold},
                     {"saccade_grid", {p.saccade_grid_rows, p.saccade_grid_cols}}};
}

void from_json(const nlohmann::json& j, PerceptionParams& p) {
  if (j.contains("omega")) j.at("omega").get_to(p.omega);
  if (j.contains("lambda")) j.at("lambda").get_to(p.lambda);
  if (j.contains("pedestal")) j.at("pedestal").get_to(p.pedestal);
  if (j.contains("saccade_threshold")) j.at("saccade_threshold").get_to(p.saccade_threshold);
  if (j.contains("saccade_grid")) {
    p.saccade_grid_rows = j.at("saccade_grid").at(0).get<int>();
    p.saccade_grid_cols = j.at("saccade_grid").at(1).get<int>();
  }
}

// --- gaze classification ---------------------------------------------------------

void validate_trace(const GazeTrace& trace) {
  for (size_t i = 0; i < trace.size(); ++i) {
    const auto& s = trace[i];
    if (!std::isfinite(s.timestamp) || !std::isfinite(s.gaze.x) || !std::isfinite(s.gaze.y))
      throw TraceError("trace sample " + std::to_string(i) + " is not finite");
    if (i > 0 && !(s.timestamp > trace[i - 1].timestamp))
      throw TraceError("trace timestamps must strictly increase (sample " + std::to_string(i) + ")");
    try {
      validate_camera(s.camera);
    } catch (const DomainError& e) {
      throw TraceError("trace sample " + std::to_string(i) + ": " + e.what());
    }
  }
}

size_t sample_index_at(const GazeTrace& trace, double t) {
  auto it = std::upper_bound(trace.begin(), trace.end(), t,
                             [](double v, const GazeSample& s) { return v < s.timestamp; });
  return it == trace.begin() ? 0 : size_t(it - trace.begin()) - 1;
}

GazeState classify_speed(double speed, double threshold) {
  return {speed > threshold ? GazeMode::saccade : GazeMode::fixation, speed};
}

namespace {

double angular_speed(const GazeSample& a, const GazeSample& b) {
  const double dt = b.timestamp - a.timestamp;
  if (!(dt > 0.0)) throw TraceError("duplicate or decreasing timestamps");
  return length(b.gaze - a.gaze) / dt;
}

}  // namespace

std::vector<GazeState> classify_gaze(const GazeTrace& trace, double threshold) {
  if (trace.size() < 2) throw TraceError("classify_gaze needs at least 2 samples");
  for (size_t i = 1; i < trace.size(); ++i)
    if (!(trace[i].timestamp > trace[i - 1].timestamp))
      throw TraceError("trace timestamps must strictly increase (sample " + std::to_string(i) + ")");
  std::vector<GazeState> out(trace.size());
  for (size_t i = 0; i < trace.size(); ++i) {
    const size_t lo = i == 0 ? 0 : i - 1;
    const size_t hi = i + 1 == trace.size() ? i : i + 1;
    out[i] = classify_speed(angular_speed(trace[lo], trace[hi]), threshold);
  }
  return out;
}

GazeState classify_causal(const GazeSample& prev, const GazeSample& cur, double threshold) {
  return classify_speed(angular_speed(prev, cur), threshold);
}

double static_importance(const RetinaParams& retina, Vec2 gaze, Vec2 pixel, double pedestal) {
  return acuity_importance(retina, gaze - pixel) + pedestal;
}

// --- PerceptualModel -----------------------------------------------------------------

PerceptualModel::PerceptualModel(const RetinaParams& retina, const DisplayParams& display,
                                 const PerceptionParams& params, const BandSpec& bands,
                                 const ContrastParams& contrast)
    : retina_(retina),
      display_(display),
      params_(params),
      contrast_(contrast),
      bank_(display.width, display.height, display, bands) {
  retina_.validate();
  display_.validate();
  params_.validate();
  for (double f : bank_.frequencies()) weights_.push_back(csf(f, display_.luminance));
}

BandSet PerceptualModel::decompose(const LuminanceImage& image) const {
  image.validate();
  return bank_.decompose(image);
}

std::vector<double> PerceptualModel::static_field(Vec2 gaze) const {
  std::vector<double> out(pixel_count());
  for (int y = 0; y < height(); ++y)
    for (int x = 0; x < width(); ++x)
      out[size_t(y) * width() + x] =
          static_importance(retina_, gaze, display_.pixel_to_degrees(x, y), params_.pedestal);
  return out;
}

std::vector<Vec2> PerceptualModel::saccade_grid() const {
  std::vector<Vec2> grid;
  const int rows = params_.saccade_grid_rows, cols = params_.saccade_grid_cols;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      grid.push_back(display_.screen_to_degrees((c + 0.5) * width() / cols, (r + 0.5) * height() / rows));
  return grid;
}

std::vector<double> PerceptualModel::inclusion(Vec2 gaze, GazeMode mode) const {
  if (mode == GazeMode::saccade) return saccade_inclusion();
  const int n = band_count();
  std::vector<double> out(pixel_count() * n, 0.0);
  for (int y = 0; y < height(); ++y)
    for (int x = 0; x < width(); ++x) {
      const size_t p = size_t(y) * width() + x;
      const int k = bands_at_or_below(bank_.frequencies(),
                                      clamped_band(retina_, gaze, display_.pixel_to_degrees(x, y), display_));
      for (int b = 0; b < k; ++b) out[p * n + b] = 1.0;
    }
  return out;
}

const std::vector<double>& PerceptualModel::saccade_inclusion() const {
  if (!saccade_inclusion_.empty()) return saccade_inclusion_;
  const int n = band_count();
  const auto grid = saccade_grid();
  std::vector<int> counts(pixel_count() * n, 0);
  for (Vec2 g : grid)
    for (int y = 0; y < height(); ++y)
      for (int x = 0; x < width(); ++x) {
        const size_t p = size_t(y) * width() + x;
        const int k = bands_at_or_below(bank_.frequencies(),
                                        clamped_band(retina_, g, display_.pixel_to_degrees(x, y), display_));
        for (int b = 0; b < k; ++b) ++counts[p * n + b];
      }
  std::vector<double> out(counts.size());
  for (size_t i = 0; i < counts.size(); ++i) out[i] = double(counts[i]) / double(grid.size());
  saccade_inclusion_ = std::move(out);
  return saccade_inclusion_;
}

void PerceptualModel::check_pair(const BandSet& before, const BandSet& after) const {
  if (before.width != width() || before.height != height() || after.width != width() ||
      after.height != height())
    throw DomainError("popping: frame dimensions do not match the display");
  if (before.band_count() != band_count() || after.band_count() != band_count())
    throw DomainError("popping: band sets were built with a different band spec");
}

std::vector<double> PerceptualModel::popping_with(const std::vector<double>& incl, const BandSet& before,
                                                  const BandSet& after) const {
  check_pair(before, after);
  const int n = band_count();
  std::vector<double> out(pixel_count());
  std::vector<double> cb(n), ca(n);
  for (size_t p = 0; p < out.size(); ++p) {
    for (int b = 0; b < n; ++b) {
      cb[b] = contrast_ratio(before.bands[b][p], before.lowpass[p], contrast_);
      ca[b] = contrast_ratio(after.bands[b][p], after.lowpass[p], contrast_);
    }
    out[p] = popping_from_contrast(cb.data(), ca.data(), &incl[p * n]);
  }
  return out;
}

double PerceptualModel::popping_intensity(Vec2 gaze, const BandSet& before, const BandSet& after, int x,
                                          int y) const {
  check_pair(before, after);
  if (x < 0 || y < 0 || x >= width() || y >= height()) throw DomainError("popping_intensity: pixel out of bounds");
  const int n = band_count();
  const size_t p = size_t(y) * width() + x;
  const int k = bands_at_or_below(bank_.frequencies(),
                                  clamped_band(retina_, gaze, display_.pixel_to_degrees(x, y), display_));
  std::vector<double> cb(n), ca(n), incl(n, 0.0);
  for (int b = 0; b < n; ++b) {
    cb[b] = contrast_ratio(before.bands[b][p], before.lowpass[p], contrast_);
    ca[b] = contrast_ratio(after.bands[b][p], after.lowpass[p], contrast_);
    incl[b] = b < k ? 1.0 : 0.0;
  }
  return popping_from_contrast(cb.data(), ca.data(), incl.data());
}

std::vector<double> PerceptualModel::popping_field(Vec2 gaze, const BandSet& before, const BandSet& after) const {
  return popping_with(inclusion(gaze, GazeMode::fixation), before, after);
}

std::vector<double> PerceptualModel::saccade_popping_field(const BandSet& before, const BandSet& after) const {
  return popping_with(saccade_inclusion(), before, after);
}

ImportanceField PerceptualModel::adaptive_importance(Vec2 gaze, GazeState state, const BandSet& before,
                                                     const BandSet& after) const {
  ImportanceField f{width(), height(), state.mode, {}};
  if (state.mode == GazeMode::saccade) {
    f.values = saccade_popping_field(before, after);
    return f;
  }
  f.values = static_field(gaze);
  const auto p = popping_field(gaze, before, after);
  for (size_t i = 0; i < p.size(); ++i) f.values[i] -= params_.lambda * p[i];
  return f;
}

ImportanceField PerceptualModel::progressive_importance(Vec2 gaze, GazeState state,
                                                        std::span<const BandSet> frames) const {
  if (frames.size() < 2) throw DomainError("progressive_importance needs at least 2 frames");
  ImportanceField total = adaptive_importance(gaze, state, frames[0], frames[1]);
  for (size_t l = 1; l + 1 < frames.size(); ++l) {
    const auto step = adaptive_importance(gaze, state, frames[l], frames[l + 1]);
    for (size_t i = 0; i < step.values.size(); ++i) total.values[i] += step.values[i];
  }
  return total;
}

ImportanceBounds PerceptualModel::bounds() const {
  ImportanceBounds b;
  const double cmax = contrast_.contrast_ceiling;
  b.weber_max = 2.0 * cmax / (cmax + params_.omega);
  double wsum = 0.0;
  for (double w : weights_) wsum += w;
  b.popping_max = b.weber_max * wsum;
  b.static_max = acuity_importance(retina_, {0.0, 0.0}) + params_.pedestal;
  b.fixation_lo = -params_.lambda * b.popping_max;
  b.fixation_hi = b.static_max;
  b.norm_lo = b.fixation_lo;
  b.norm_hi = std::max(b.static_max, b.popping_max);
  return b;
}

}  // namespace fovstream
