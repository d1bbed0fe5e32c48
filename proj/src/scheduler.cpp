#include "fovstream/scheduler.hpp"

#include <cmath>
#include <ostream>
#include <queue>
#include <string>

#include "fovstream/errors.hpp"

namespace fovstream {

double per_bit_weight(double sensitivity, double bytes_delta) {
  if (!(bytes_delta > 0.0)) throw DomainError("per_bit_weight: byte delta must be > 0");
  return sensitivity / bytes_delta;
}

// --- greedy -----------------------------------------------------------------------------

namespace {

struct Candidate {
  double weight;
  int unit;
  int level;
  uint64_t bytes;
  double sensitivity;
};

struct WorseThan {
  bool operator()(const Candidate& a, const Candidate& b) const {
    if (a.weight != b.weight) return a.weight < b.weight;
    if (a.unit != b.unit) return a.unit > b.unit;
    return a.level > b.level;
  }
};

}  // namespace

UpdatePlan plan_update(StepScorer& scorer, const SceneAsset& asset, const LoDState& state, uint64_t budget) {
  validate_state(asset, state);
  UpdatePlan plan;
  std::priority_queue<Candidate, std::vector<Candidate>, WorseThan> queue;
  auto offer = [&](int unit, int level) {
    if (level >= asset.units[unit].max_level()) return;
    const uint64_t bytes = asset.units[unit].step_bytes(level);
    const double s = scorer.step_sensitivity(unit, level);
    queue.push({scorer.step_weight(unit, level, bytes), unit, level, bytes, s});
  };
  if (budget == 0) return plan;
  for (size_t u = 0; u < state.size(); ++u) offer(int(u), state[u]);

  std::vector<int> entry_of(state.size(), -1);
  uint64_t remaining = budget;
  while (!queue.empty()) {
    const Candidate c = queue.top();
    queue.pop();
    if (c.bytes > remaining) continue;  // the unit cannot go further this round
    remaining -= c.bytes;
    plan.total_bytes += c.bytes;
    plan.steps.push_back({c.unit, c.level, c.level + 1, c.bytes, c.sensitivity, c.weight});
    int& e = entry_of[c.unit];
    if (e < 0) {
      e = int(plan.entries.size());
      plan.entries.push_back(plan.steps.back());
    } else {
      PlanStep& merged = plan.entries[e];
      merged.to_level = c.level + 1;
      merged.bytes += c.bytes;
      merged.sensitivity += c.sensitivity;
      merged.weight = merged.sensitivity / double(merged.bytes);
    }
    offer(c.unit, c.level + 1);
  }
  return plan;
}

LoDState apply_plan(const LoDState& state, const UpdatePlan& plan) {
  LoDState out = state;
  for (const auto& e : plan.entries) {
    if (e.unit < 0 || size_t(e.unit) >= out.size()) throw StalePlanError("plan references unknown unit");
    int& lvl = out[e.unit];
    if (lvl == e.from_level)
      lvl = e.to_level;
    else if (lvl != e.to_level)
      throw StalePlanError("plan for unit " + std::to_string(e.unit) + " expects level " +
                           std::to_string(e.from_level) + " but state has " + std::to_string(lvl));
  }
  return out;
}

void write_plan_log_header(std::ostream& out) { out << "tick,unit,from,to,bytes,weight\n"; }

void append_plan_log(std::ostream& out, int64_t tick, const UpdatePlan& plan) {
  char buf[64];
  for (const auto& s : plan.steps) {
    std::snprintf(buf, sizeof buf, "%.17g", s.weight);
    out << tick << ',' << s.unit << ',' << s.from_level << ',' << s.to_level << ',' << s.bytes << ',' << buf << '\n';
  }
}

// --- baselines ---------------------------------------------------------------------------

double UniformScorer::step_sensitivity(int unit, int) { return counts_.at(unit) > 0 ? 1.0 : 0.0; }

double UniformScorer::step_weight(int unit, int level, uint64_t bytes) {
  if (bytes == 0) throw DomainError("per_bit_weight: byte delta must be > 0");
  return counts_.at(unit) > 0 ? std::ldexp(1.0, -level) : 0.0;
}

// --- SensitivityEvaluator -------------------------------------------------------------------

SensitivityEvaluator::SensitivityEvaluator(const PerceptualModel& model, const SceneRenderer& renderer,
                                           const LoDState& state, Vec2 gaze, GazeState gaze_state)
    : model_(model), renderer_(renderer), state_(state), gaze_(gaze), gaze_state_(gaze_state) {
  if (renderer.display().width != model.width() || renderer.display().height != model.height())
    throw DomainError("evaluator: renderer and perceptual model disagree on the display size");
  before_ = renderer.render(state);
  const size_t units = renderer.asset().units.size();
  footprints_.resize(units);
  for (size_t p = 0; p < before_.unit_ids.size(); ++p)
    if (before_.unit_ids[p] >= 0) footprints_[before_.unit_ids[p]].push_back(uint32_t(p));
  contrast_cache_.resize(units);
  if (gaze_state.mode == GazeMode::fixation) static_ = model.static_field(gaze);
  if (needs_popping()) {
    inclusion_ = model.inclusion(gaze, gaze_state.mode);
    scratch_ = before_;
  }
}

bool SensitivityEvaluator::needs_popping() const {
  return !(gaze_state_.mode == GazeMode::fixation && model_.params().lambda == 0.0);
}

const BandSet& SensitivityEvaluator::before_bands() const {
  if (!bands_ready_) {
    bands_ = model_.decompose(before_.luminance);
    bands_ready_ = true;
  }
  return bands_;
}

const std::vector<double>& SensitivityEvaluator::contrasts(int unit, int level) {
  auto& cache = contrast_cache_[unit];
  if (auto it = cache.find(level); it != cache.end()) return it->second;

  const int n = model_.band_count();
  const auto& fp = footprints_[unit];
  const BandSet& base = before_bands();
  const ContrastParams& cp = model_.contrast_params();
  std::vector<double> out(fp.size() * n);
  if (level == state_[unit]) {
    for (size_t i = 0; i < fp.size(); ++i)
      for (int b = 0; b < n; ++b) out[i * n + b] = contrast_ratio(base.bands[b][fp[i]], base.lowpass[fp[i]], cp);
    return cache[level] = std::move(out);
  }

  const int W = model_.width(), H = model_.height();
  const PixelRect rect = renderer_.unit_bounds(unit, state_[unit]).united(renderer_.unit_bounds(unit, level));
  struct Delta {
    int x, y;
    double d;
  };
  std::vector<Delta> deltas;
  if (!rect.empty()) {
    renderer_.render_region(state_, rect, scratch_, unit, level);
    for (int y = rect.y0; y < rect.y1; ++y)
      for (int x = rect.x0; x < rect.x1; ++x) {
        const size_t p = size_t(y) * W + x;
        const double d = scratch_.luminance.samples[p] - before_.luminance.samples[p];
        if (d != 0.0) deltas.push_back({x, y, d});
        scratch_.luminance.samples[p] = before_.luminance.samples[p];
        scratch_.unit_ids[p] = before_.unit_ids[p];
      }
  }
  const auto& kern = model_.filters().kernels();
  const int stride = model_.filters().kernel_stride();
  std::vector<double> acc(n + 1);
  for (size_t i = 0; i < fp.size(); ++i) {
    const int px = int(fp[i] % W), py = int(fp[i] / W);
    for (int b = 0; b < n; ++b) acc[b] = base.bands[b][fp[i]];
    acc[n] = base.lowpass[fp[i]];
    for (const auto& dl : deltas) {
      int ox = px - dl.x, oy = py - dl.y;
      if (ox < 0) ox += W;
      if (oy < 0) oy += H;
      const double* k = &kern[(size_t(oy) * W + ox) * stride];
      for (int b = 0; b <= n; ++b) acc[b] += dl.d * k[b];
    }
    for (int b = 0; b < n; ++b) out[i * n + b] = contrast_ratio(acc[b], acc[n], cp);
  }
  return cache[level] = std::move(out);
}

double SensitivityEvaluator::step_sensitivity(int unit, int level) {
  const auto& units = renderer_.asset().units;
  if (unit < 0 || size_t(unit) >= units.size() || level < 0 || level >= units[unit].max_level())
    throw DomainError("step_sensitivity: unit/level out of range");
  if (auto it = step_cache_.find({unit, level}); it != step_cache_.end()) return it->second;
  const auto& fp = footprints_[unit];
  double s = 0.0;
  if (!fp.empty()) {
    if (!needs_popping()) {
      for (uint32_t p : fp) s += static_[p];
    } else {
      const int n = model_.band_count();
      const double lambda = model_.params().lambda;
      const auto& cb = contrasts(unit, level);
      const auto& ca = contrasts(unit, level + 1);
      for (size_t i = 0; i < fp.size(); ++i) {
        const double pop = model_.popping_from_contrast(&cb[i * n], &ca[i * n], &inclusion_[size_t(fp[i]) * n]);
        s += gaze_state_.mode == GazeMode::fixation ? static_[fp[i]] - lambda * pop : pop;
      }
    }
  }
  step_cache_[{unit, level}] = s;
  return s;
}

double SensitivityEvaluator::sensitivity(int unit, int candidate_level) {
  const int current = state_.at(unit);
  if (candidate_level <= current) throw DomainError("sensitivity: candidate level must exceed the current level");
  double s = 0.0;
  for (int l = current; l < candidate_level; ++l) s += step_sensitivity(unit, l);
  return s;
}

double SensitivityEvaluator::step_sensitivity_reference(int unit, int level) const {
  LoDState lo = state_, hi = state_;
  lo[unit] = level;
  hi[unit] = level + 1;
  const BandSet b0 = model_.decompose(renderer_.render(lo).luminance);
  const BandSet b1 = model_.decompose(renderer_.render(hi).luminance);
  const ImportanceField f = model_.adaptive_importance(gaze_, gaze_state_, b0, b1);
  double s = 0.0;
  for (uint32_t p : footprints_.at(unit)) s += f.values[p];
  return s;
}

}  // namespace fovstream
