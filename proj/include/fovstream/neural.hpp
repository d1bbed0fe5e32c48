#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "fovstream/perception.hpp"
#include "fovstream/scene.hpp"

namespace fovstream {

inline constexpr int kFeatureDim = 12;

/// camera position (3), forward (3), up (3), gaze in [0,1]^2 screen units (2), saccade flag.
using FeatureVector = std::array<double, kFeatureDim>;

/// Gaze in screen units: (0,0) top-left, (1,1) bottom-right, clamped to the viewport.
Vec2 normalized_gaze(Vec2 gaze_deg, const DisplayParams& display);

FeatureVector featurize(const GazeSample& sample, GazeState state, const DisplayParams& display);

/// Per-slot affine normalization of S / pixel_count by the analytic bounds. Slots without a
/// footprint map to 0 both ways.
struct SlotNormalizer {
  double lo = 0.0;
  double hi = 1.0;

  double normalize(double sensitivity, uint32_t pixel_count) const {
    if (pixel_count == 0) return 0.0;
    return (sensitivity / pixel_count - lo) / (hi - lo);
  }
  double denormalize(double value, uint32_t pixel_count) const {
    if (pixel_count == 0) return 0.0;
    return (lo + value * (hi - lo)) * pixel_count;
  }
};

SlotNormalizer slot_normalizer(const PerceptualModel& model);

inline size_t slot_index(int unit, int level, int level_count) { return size_t(unit) * (level_count - 1) + level; }

/// Fully connected network with ReLU hidden layers and a logistic output layer. Column-major
/// batches: one sample per column.
template <typename Scalar>
class BasicMlp {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  BasicMlp() = default;
  /// Weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  BasicMlp(std::vector<int> sizes, uint64_t seed);

  const std::vector<int>& sizes() const { return sizes_; }
  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  size_t parameter_count() const;

  std::vector<Matrix>& weights() { return w_; }
  std::vector<Vector>& biases() { return b_; }
  const std::vector<Matrix>& weights() const { return w_; }
  const std::vector<Vector>& biases() const { return b_; }

  Matrix forward(const Matrix& x) const;

  struct Gradients {
    std::vector<Matrix> w;
    std::vector<Vector> b;
  };
  /// L1 loss sum_ij m_ij |f(x)_ij - y_ij| / scale and its gradient; m is all ones without a mask.
  Scalar loss_and_gradient(const Matrix& x, const Matrix& y, Scalar scale, Gradients& grad,
                           const Matrix* mask = nullptr) const;
  Scalar loss(const Matrix& x, const Matrix& y, Scalar scale, const Matrix* mask = nullptr) const;

  /// Flat parameter access (weights row-major per layer, then biases) for probes.
  Scalar& parameter(size_t index);
  Scalar gradient_entry(const Gradients& g, size_t index) const;

 private:
  std::vector<int> sizes_;
  std::vector<Matrix> w_;
  std::vector<Vector> b_;
};

extern template class BasicMlp<float>;
extern template class BasicMlp<double>;

inline constexpr uint32_t kModelFileVersion = 1;

/// Trained surrogate bound to one scene.
class MlpModel {
 public:
  BasicMlp<float> net;
  uint64_t scene_hash = 0;
  SlotNormalizer normalizer;
  int level_count = 0;

  int slot_count() const { return net.output_dim(); }
  /// Normalized per-slot predictions in (0,1). Throws ModelError on a dimension mismatch.
  std::vector<float> predict(const FeatureVector& features) const;
  Eigen::MatrixXf predict_batch(const Eigen::MatrixXf& features) const;

  void save(const std::filesystem::path& path) const;
  static MlpModel load(const std::filesystem::path& path);
};

// --- datasets ---------------------------------------------------------------------------

inline constexpr uint32_t kDatasetVersion = 1;

struct Dataset {
  uint64_t scene_hash = 0;
  int slot_count = 0;
  int level_count = 0;
  SlotNormalizer normalizer;
  std::vector<float> features;         // [sample][kFeatureDim]
  std::vector<float> targets;          // [sample][slot], normalized
  std::vector<uint32_t> pixel_counts;  // [sample][slot]
  std::vector<double> sensitivities;   // [sample][slot], raw S
  std::vector<int> sequence;           // per sample
  std::vector<double> timestamps;      // per sample
  std::vector<uint8_t> saccade;        // per sample

  size_t size() const { return sequence.size(); }
  /// Rows whose sequence id is (or is not) `held_out`.
  std::vector<size_t> rows(int held_out, bool take_held_out) const;
};

struct DatasetParams {
  double sample_rate = 4.0;  // Hz
};

/// Targets of one sample: for every level l, all units at l form the before frame and slot
/// (u, l) is the step l -> l + 1 of unit u.
struct SlotSweep {
  std::vector<double> sensitivities;
  std::vector<uint32_t> pixel_counts;
};
SlotSweep analytic_slot_sweep(const PerceptualModel& model, const SceneAsset& asset, const RenderOptions& render,
                              const GazeSample& sample, GazeState state);

Dataset generate_dataset(const SceneAsset& asset, const std::vector<GazeTrace>& traces, const PerceptualModel& model,
                         const RenderOptions& render, const DatasetParams& params = {});

void save_dataset(const std::filesystem::path& dir, const Dataset& data);
Dataset load_dataset(const std::filesystem::path& dir);

// --- training -----------------------------------------------------------------------------

/// How the summed L1 error of a batch is scaled: not at all, by the number of rows, or by
/// rows x slots (the element-wise mean).
enum class LossReduction { sum, per_row, per_element };

struct TrainParams {
  std::vector<int> hidden{100, 1000, 1000};
  LossReduction reduction = LossReduction::sum;
  bool mask_empty_slots = true;   // slots with no footprint in a sample carry no loss
  bool init_output_bias = true;   // output bias starts at logit(mean target) of each slot
  int epochs = 100;
  int batch_size = 128;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  uint64_t seed = 1;
  int held_out_sequence = -1;  // -1: the last sequence id
};

struct TrainReport {
  std::vector<double> epoch_loss;  // mean training L1 per epoch (per sample, summed over slots)
  double test_mae = 0.0;           // normalized, over held-out slots with a footprint
  double test_relative_mse = 0.0;  // on denormalized sensitivities
  size_t train_rows = 0;
  size_t test_rows = 0;
  double seconds = 0.0;
};

MlpModel train_model(const Dataset& data, const TrainParams& params, TrainReport* report = nullptr);

struct EvalReport {
  double mae = 0.0;
  double relative_mse = 0.0;
  size_t rows = 0;
};

EvalReport evaluate_model(const MlpModel& model, const Dataset& data, const std::vector<size_t>& rows);

}  // namespace fovstream
