#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <vector>

#include "fovstream/perception.hpp"
#include "fovstream/scene.hpp"

namespace fovstream {

/// w = S / bytes. Throws DomainError for bytes <= 0.
double per_bit_weight(double sensitivity, double bytes_delta);

/// Scores single-level upgrade steps for the greedy planner.
class StepScorer {
 public:
  virtual ~StepScorer() = default;
  /// Sensitivity of moving `unit` from `level` to `level + 1`.
  virtual double step_sensitivity(int unit, int level) = 0;
  virtual double step_weight(int unit, int level, uint64_t bytes) {
    return per_bit_weight(step_sensitivity(unit, level), double(bytes));
  }
};

struct PlanStep {
  int unit = 0;
  int from_level = 0;
  int to_level = 0;
  uint64_t bytes = 0;
  double sensitivity = 0.0;
  double weight = 0.0;

  friend bool operator==(const PlanStep&, const PlanStep&) = default;
};

/// `entries` holds one upgrade per unit (in first-selection order, weight = cumulative
/// sensitivity / cumulative bytes); `steps` is the single-level selection sequence.
struct UpdatePlan {
  std::vector<PlanStep> entries;
  std::vector<PlanStep> steps;
  uint64_t total_bytes = 0;

  bool empty() const { return entries.empty(); }
  friend bool operator==(const UpdatePlan&, const UpdatePlan&) = default;
};

/// Greedy budget-constrained selection: repeatedly take the feasible step with the largest
/// weight (ties: unit id asc, level asc), then offer that unit's next step. A step that does
/// not fit retires its unit for this round.
UpdatePlan plan_update(StepScorer& scorer, const SceneAsset& asset, const LoDState& state, uint64_t budget);

/// Advances units to plan targets. Entries already at their target are skipped; any other
/// mismatch throws StalePlanError.
LoDState apply_plan(const LoDState& state, const UpdatePlan& plan);

/// Appends "tick,unit,from,to,bytes,weight" rows for each selected step.
void write_plan_log_header(std::ostream& out);
void append_plan_log(std::ostream& out, int64_t tick, const UpdatePlan& plan);

/// Per-unit sensitivities against one before-frame (the footprint is
/// taken from the before-frame id buffer). Hypothetical frames are rendered only inside the
/// unit's screen bounds and their band responses are updated through the filter kernels, so
/// every query costs O(footprint x changed pixels) instead of a full decomposition.
class SensitivityEvaluator : public StepScorer {
 public:
  SensitivityEvaluator(const PerceptualModel& model, const SceneRenderer& renderer, const LoDState& state,
                       Vec2 gaze, GazeState gaze_state);

  const Frame& before() const { return before_; }
  const BandSet& before_bands() const;
  const LoDState& state() const { return state_; }
  GazeState gaze_state() const { return gaze_state_; }
  const std::vector<uint32_t>& footprint(int unit) const { return footprints_.at(unit); }
  uint32_t pixel_count(int unit) const { return uint32_t(footprints_.at(unit).size()); }

  double step_sensitivity(int unit, int level) override;

  /// Telescoping sum of single steps from the unit's current level up to candidate_level.
  double sensitivity(int unit, int candidate_level);

  /// Same quantity through full renders and full decompositions (test oracle path).
  double step_sensitivity_reference(int unit, int level) const;

 private:
  bool needs_popping() const;
  const std::vector<double>& contrasts(int unit, int level);

  const PerceptualModel& model_;
  const SceneRenderer& renderer_;
  LoDState state_;
  Vec2 gaze_;
  GazeState gaze_state_;
  Frame before_;
  mutable BandSet bands_;
  mutable bool bands_ready_ = false;
  Frame scratch_;
  std::vector<std::vector<uint32_t>> footprints_;
  std::vector<double> static_;
  std::vector<double> inclusion_;
  // [unit] -> level -> contrast at footprint pixels, [pixel * bands + band]
  std::vector<std::map<int, std::vector<double>>> contrast_cache_;
  std::map<std::pair<int, int>, double> step_cache_;
};

/// Uniform baseline: every visible step scores 2^-level, so refinement proceeds level by
/// level across the visible scene regardless of gaze.
class UniformScorer : public StepScorer {
 public:
  explicit UniformScorer(std::vector<uint32_t> pixel_counts) : counts_(std::move(pixel_counts)) {}
  double step_sensitivity(int unit, int level) override;
  double step_weight(int unit, int level, uint64_t bytes) override;

 private:
  std::vector<uint32_t> counts_;
};

/// Scores from precomputed per-slot sensitivities (slot = unit * (levels - 1) + level).
class TableScorer : public StepScorer {
 public:
  TableScorer(std::vector<double> slot_sensitivity, int level_count)
      : table_(std::move(slot_sensitivity)), steps_(level_count - 1) {}
  double step_sensitivity(int unit, int level) override { return table_.at(size_t(unit) * steps_ + level); }

 private:
  std::vector<double> table_;
  int steps_;
};

}  // namespace fovstream
