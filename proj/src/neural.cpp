#include "fovstream/neural.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include <nlohmann/json.hpp>

#include "fovstream/errors.hpp"
#include "fovstream/scheduler.hpp"

namespace fovstream {

// --- features ------------------------------------------------------------------------

Vec2 normalized_gaze(Vec2 gaze_deg, const DisplayParams& display) {
  double u, v;
  if (display.angle_mapping == AngleMapping::linear) {
    u = 0.5 * display.width + gaze_deg.x * display.pixels_per_degree;
    v = 0.5 * display.height - gaze_deg.y * display.pixels_per_degree;
  } else {
    const double focal = 0.5 * display.height / std::tan(display.vertical_fov * std::numbers::pi / 360.0);
    u = 0.5 * display.width + focal * std::tan(gaze_deg.x * std::numbers::pi / 180.0);
    v = 0.5 * display.height - focal * std::tan(gaze_deg.y * std::numbers::pi / 180.0);
  }
  return {std::clamp(u / display.width, 0.0, 1.0), std::clamp(v / display.height, 0.0, 1.0)};
}

FeatureVector featurize(const GazeSample& sample, GazeState state, const DisplayParams& display) {
  const Camera& c = sample.camera;
  const Vec2 g = normalized_gaze(sample.gaze, display);
  return {c.position.x, c.position.y, c.position.z, c.forward.x, c.forward.y, c.forward.z,
          c.up.x,       c.up.y,       c.up.z,       g.x,         g.y,         state.mode == GazeMode::saccade ? 1.0 : 0.0};
}

SlotNormalizer slot_normalizer(const PerceptualModel& model) {
  const ImportanceBounds b = model.bounds();
  return {b.norm_lo, b.norm_hi};
}

// --- MLP -----------------------------------------------------------------------------

template <typename Scalar>
BasicMlp<Scalar>::BasicMlp(std::vector<int> sizes, uint64_t seed) : sizes_(std::move(sizes)) {
  if (sizes_.size() < 2) throw ModelError("MLP needs at least an input and an output layer");
  for (int s : sizes_)
    if (s <= 0) throw ModelError("MLP layer sizes must be positive");
  std::mt19937_64 rng(seed);
  for (size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const double bound = 1.0 / std::sqrt(double(sizes_[l]));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix w(sizes_[l + 1], sizes_[l]);
    for (int r = 0; r < w.rows(); ++r)
      for (int c = 0; c < w.cols(); ++c) w(r, c) = Scalar(dist(rng));
    Vector b(sizes_[l + 1]);
    for (int r = 0; r < b.size(); ++r) b(r) = Scalar(dist(rng));
    w_.push_back(std::move(w));
    b_.push_back(std::move(b));
  }
}

template <typename Scalar>
size_t BasicMlp<Scalar>::parameter_count() const {
  size_t n = 0;
  for (size_t l = 0; l < w_.size(); ++l) n += size_t(w_[l].size()) + size_t(b_[l].size());
  return n;
}

namespace {

template <typename M>
void relu(M& m) {
  m = m.cwiseMax(typename M::Scalar(0));
}

template <typename M>
void logistic(M& m) {
  using S = typename M::Scalar;
  m = m.unaryExpr([](S z) { return S(1) / (S(1) + std::exp(-z)); });
}

}  // namespace

template <typename Scalar>
typename BasicMlp<Scalar>::Matrix BasicMlp<Scalar>::forward(const Matrix& x) const {
  if (x.rows() != input_dim()) throw ModelError("feature dimension does not match the model");
  Matrix a = x;
  for (size_t l = 0; l < w_.size(); ++l) {
    Matrix z = w_[l] * a;
    z.colwise() += b_[l];
    if (l + 1 < w_.size())
      relu(z);
    else
      logistic(z);
    a = std::move(z);
  }
  return a;
}

template <typename Scalar>
Scalar BasicMlp<Scalar>::loss(const Matrix& x, const Matrix& y, Scalar scale, const Matrix* mask) const {
  const Matrix diff = forward(x) - y;
  if (mask) return diff.cwiseAbs().cwiseProduct(*mask).sum() / scale;
  return diff.cwiseAbs().sum() / scale;
}

template <typename Scalar>
Scalar BasicMlp<Scalar>::loss_and_gradient(const Matrix& x, const Matrix& y, Scalar scale, Gradients& grad,
                                           const Matrix* mask) const {
  if (x.rows() != input_dim() || y.rows() != output_dim() || x.cols() != y.cols())
    throw ModelError("batch shape does not match the model");
  if (mask && (mask->rows() != y.rows() || mask->cols() != y.cols())) throw ModelError("mask shape does not match");
  const size_t n = w_.size();
  std::vector<Matrix> acts(n + 1);
  acts[0] = x;
  for (size_t l = 0; l < n; ++l) {
    Matrix z = w_[l] * acts[l];
    z.colwise() += b_[l];
    if (l + 1 < n)
      relu(z);
    else
      logistic(z);
    acts[l + 1] = std::move(z);
  }
  Matrix diff = acts[n] - y;
  if (mask) diff.array() *= mask->array();
  const Scalar value = diff.cwiseAbs().sum() / scale;

  grad.w.resize(n);
  grad.b.resize(n);
  const Scalar inv = Scalar(1) / scale;
  Matrix delta = diff.unaryExpr([inv](Scalar d) { return d > 0 ? inv : (d < 0 ? -inv : Scalar(0)); });
  delta.array() *= acts[n].array() * (Scalar(1) - acts[n].array());
  for (size_t l = n; l-- > 0;) {
    grad.w[l].noalias() = delta * acts[l].transpose();
    grad.b[l] = delta.rowwise().sum();
    if (l == 0) break;
    Matrix back = w_[l].transpose() * delta;
    back.array() *= (acts[l].array() > Scalar(0)).template cast<Scalar>();
    delta = std::move(back);
  }
  return value;
}

template <typename Scalar>
Scalar& BasicMlp<Scalar>::parameter(size_t index) {
  for (auto& w : w_) {
    if (index < size_t(w.size())) return w(index / w.cols(), index % w.cols());
    index -= w.size();
  }
  for (auto& b : b_) {
    if (index < size_t(b.size())) return b(index);
    index -= b.size();
  }
  throw DomainError("parameter index out of range");
}

template <typename Scalar>
Scalar BasicMlp<Scalar>::gradient_entry(const Gradients& g, size_t index) const {
  for (const auto& w : g.w) {
    if (index < size_t(w.size())) return w(index / w.cols(), index % w.cols());
    index -= w.size();
  }
  for (const auto& b : g.b) {
    if (index < size_t(b.size())) return b(index);
    index -= b.size();
  }
  throw DomainError("parameter index out of range");
}

template class BasicMlp<float>;
template class BasicMlp<double>;

// --- model file ------------------------------------------------------------------------

namespace {

constexpr char kModelMagic[4] = {'F', 'V', 'N', 'N'};

class Writer {
 public:
  template <typename T>
  void put(const T& v) {
    const auto* p = reinterpret_cast<const uint8_t*>(&v);
    bytes.insert(bytes.end(), p, p + sizeof(T));
  }
  template <typename T>
  void put_array(const T* data, size_t n) {
    const auto* p = reinterpret_cast<const uint8_t*>(data);
    bytes.insert(bytes.end(), p, p + sizeof(T) * n);
  }
  std::vector<uint8_t> bytes;
};

class Reader {
 public:
  Reader(const std::vector<uint8_t>& b, std::string what) : bytes_(b), what_(std::move(what)) {}
  template <typename T>
  T get() {
    T v;
    get_array(&v, 1);
    return v;
  }
  template <typename T>
  void get_array(T* out, size_t n) {
    if (pos_ + sizeof(T) * n > bytes_.size()) throw ModelError(what_ + ": truncated file");
    std::memcpy(static_cast<void*>(out), bytes_.data() + pos_, sizeof(T) * n);
    pos_ += sizeof(T) * n;
  }
  size_t position() const { return pos_; }

 private:
  const std::vector<uint8_t>& bytes_;
  std::string what_;
  size_t pos_ = 0;
};

std::vector<uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::filesystem::path& path, const std::vector<uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

std::vector<float> MlpModel::predict(const FeatureVector& features) const {
  Eigen::MatrixXf x(kFeatureDim, 1);
  for (int i = 0; i < kFeatureDim; ++i) x(i, 0) = float(features[i]);
  const Eigen::MatrixXf y = predict_batch(x);
  return std::vector<float>(y.data(), y.data() + y.size());
}

Eigen::MatrixXf MlpModel::predict_batch(const Eigen::MatrixXf& features) const {
  if (net.sizes().empty()) throw ModelError("model has no layers");
  if (features.rows() != net.input_dim())
    throw ModelError("feature dimension " + std::to_string(features.rows()) + " does not match the model input " +
                     std::to_string(net.input_dim()));
  return net.forward(features);
}

void MlpModel::save(const std::filesystem::path& path) const {
  Writer w;
  w.put_array(kModelMagic, 4);
  w.put(kModelFileVersion);
  w.put(scene_hash);
  w.put(normalizer.lo);
  w.put(normalizer.hi);
  w.put(uint32_t(level_count));
  w.put(uint32_t(net.sizes().size()));
  for (int s : net.sizes()) w.put(uint32_t(s));
  for (size_t l = 0; l < net.weights().size(); ++l) {
    const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = net.weights()[l];
    w.put_array(rm.data(), size_t(rm.size()));
    w.put_array(net.biases()[l].data(), size_t(net.biases()[l].size()));
  }
  w.put(fnv1a64(w.bytes.data(), w.bytes.size()));
  write_file(path, w.bytes);
}

MlpModel MlpModel::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ModelError("model file not found: " + path.string());
  const auto bytes = read_file(path);
  const std::string what = path.string();
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kModelMagic, 4) != 0) throw ModelError(what + ": not a model file");
  uint64_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - 8, 8);
  if (stored != fnv1a64(bytes.data(), bytes.size() - 8)) throw ModelError(what + ": checksum mismatch");
  Reader r(bytes, what);
  char magic[4];
  r.get_array(magic, 4);
  if (r.get<uint32_t>() != kModelFileVersion) throw ModelError(what + ": unsupported model version");
  MlpModel m;
  m.scene_hash = r.get<uint64_t>();
  m.normalizer.lo = r.get<double>();
  m.normalizer.hi = r.get<double>();
  m.level_count = int(r.get<uint32_t>());
  const uint32_t layers = r.get<uint32_t>();
  if (layers < 2 || layers > 64) throw ModelError(what + ": bad layer count");
  std::vector<int> sizes(layers);
  for (auto& s : sizes) {
    s = int(r.get<uint32_t>());
    if (s <= 0 || s > (1 << 24)) throw ModelError(what + ": bad layer size");
  }
  m.net = BasicMlp<float>(sizes, 0);
  for (size_t l = 0; l + 1 < sizes.size(); ++l) {
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(sizes[l + 1], sizes[l]);
    r.get_array(rm.data(), size_t(rm.size()));
    m.net.weights()[l] = rm;
    r.get_array(m.net.biases()[l].data(), size_t(sizes[l + 1]));
  }
  if (r.position() + 8 != bytes.size()) throw ModelError(what + ": trailing bytes");
  if (m.net.input_dim() != kFeatureDim) throw ModelError(what + ": model input is not the feature vector");
  return m;
}

// --- datasets ---------------------------------------------------------------------------

std::vector<size_t> Dataset::rows(int held_out, bool take_held_out) const {
  std::vector<size_t> out;
  for (size_t i = 0; i < sequence.size(); ++i)
    if ((sequence[i] == held_out) == take_held_out) out.push_back(i);
  return out;
}

SlotSweep analytic_slot_sweep(const PerceptualModel& model, const SceneAsset& asset, const RenderOptions& render,
                              const GazeSample& sample, GazeState state) {
  const int steps = asset.level_count - 1;
  SlotSweep out;
  out.sensitivities.assign(asset.slot_count(), 0.0);
  out.pixel_counts.assign(asset.slot_count(), 0);
  const SceneRenderer renderer(asset, model.display(), sample.camera, render);
  for (int l = 0; l < steps; ++l) {
    SensitivityEvaluator ev(model, renderer, uniform_state(asset, l), sample.gaze, state);
    for (size_t u = 0; u < asset.units.size(); ++u) {
      const uint32_t n = ev.pixel_count(int(u));
      if (n == 0) continue;
      const size_t s = slot_index(int(u), l, asset.level_count);
      out.pixel_counts[s] = n;
      out.sensitivities[s] = ev.step_sensitivity(int(u), l);
    }
  }
  return out;
}

Dataset generate_dataset(const SceneAsset& asset, const std::vector<GazeTrace>& traces, const PerceptualModel& model,
                         const RenderOptions& render, const DatasetParams& params) {
  if (traces.empty()) throw DatasetError("dataset needs at least one trace");
  if (!(params.sample_rate > 0.0)) throw DatasetError("sample rate must be > 0");
  if (asset.level_count < 2) throw DatasetError("scene needs at least two levels");
  Dataset d;
  d.scene_hash = scene_hash(asset);
  d.slot_count = int(asset.slot_count());
  d.level_count = asset.level_count;
  d.normalizer = slot_normalizer(model);
  const double threshold = model.params().saccade_threshold;

  for (size_t seq = 0; seq < traces.size(); ++seq) {
    const GazeTrace& trace = traces[seq];
    try {
      validate_trace(trace);
    } catch (const TraceError& e) {
      throw DatasetError("trace " + std::to_string(seq) + ": " + e.what());
    }
    if (trace.size() < 2) throw DatasetError("trace " + std::to_string(seq) + " has fewer than two samples");
    const double t0 = trace.front().timestamp, t1 = trace.back().timestamp;
    const double rate = double(trace.size() - 1) / (t1 - t0);
    if (rate < params.sample_rate * (1.0 - 1e-9))
      throw DatasetError("trace " + std::to_string(seq) + " is sampled below the dataset rate");
    const auto labels = classify_gaze(trace, threshold);
    bool any_visible = false;
    for (int64_t k = 0;; ++k) {
      const double t = t0 + double(k) / params.sample_rate;
      if (t > t1 + 1e-9) break;
      const size_t i = sample_index_at(trace, t + 1e-9);
      const GazeSample& s = trace[i];
      const SlotSweep sweep = analytic_slot_sweep(model, asset, render, s, labels[i]);
      const FeatureVector f = featurize(s, labels[i], model.display());
      for (double v : f) d.features.push_back(float(v));
      for (size_t j = 0; j < sweep.sensitivities.size(); ++j) {
        const double n = d.normalizer.normalize(sweep.sensitivities[j], sweep.pixel_counts[j]);
        if (!(n >= 0.0 && n <= 1.0))
          throw DatasetError("normalized target " + std::to_string(n) + " outside [0,1] (slot " + std::to_string(j) +
                             ")");
        d.targets.push_back(float(n));
        if (sweep.pixel_counts[j] > 0) any_visible = true;
      }
      d.pixel_counts.insert(d.pixel_counts.end(), sweep.pixel_counts.begin(), sweep.pixel_counts.end());
      d.sensitivities.insert(d.sensitivities.end(), sweep.sensitivities.begin(), sweep.sensitivities.end());
      d.sequence.push_back(int(seq));
      d.timestamps.push_back(s.timestamp);
      d.saccade.push_back(labels[i].mode == GazeMode::saccade ? 1 : 0);
    }
    if (!any_visible) throw DatasetError("trace " + std::to_string(seq) + " never looks at the scene");
  }
  return d;
}

namespace {

template <typename T>
void write_tensor(const std::filesystem::path& path, const std::vector<T>& v) {
  std::vector<uint8_t> bytes(sizeof(T) * v.size());
  if (!v.empty()) std::memcpy(bytes.data(), v.data(), bytes.size());
  write_file(path, bytes);
}

template <typename T>
std::vector<T> read_tensor(const std::filesystem::path& path, size_t expected) {
  const auto bytes = read_file(path);
  if (bytes.size() != sizeof(T) * expected) throw DatasetError(path.string() + ": unexpected tensor size");
  std::vector<T> v(expected);
  if (expected) std::memcpy(static_cast<void*>(v.data()), bytes.data(), bytes.size());
  return v;
}

}  // namespace

void save_dataset(const std::filesystem::path& dir, const Dataset& d) {
  std::filesystem::create_directories(dir);
  const size_t n = d.size();
  nlohmann::json m{{"format", "fovstream-dataset"},
                   {"version", kDatasetVersion},
                   {"scene_hash", d.scene_hash},
                   {"samples", n},
                   {"feature_dim", kFeatureDim},
                   {"slot_count", d.slot_count},
                   {"level_count", d.level_count},
                   {"norm_lo", d.normalizer.lo},
                   {"norm_hi", d.normalizer.hi},
                   {"tensors",
                    {{"features", {{"file", "features.f32"}, {"dtype", "float32"}, {"shape", {n, kFeatureDim}}}},
                     {"targets", {{"file", "targets.f32"}, {"dtype", "float32"}, {"shape", {n, d.slot_count}}}},
                     {"pixel_counts", {{"file", "pixel_counts.u32"}, {"dtype", "uint32"}, {"shape", {n, d.slot_count}}}},
                     {"sensitivities", {{"file", "sensitivities.f64"}, {"dtype", "float64"}, {"shape", {n, d.slot_count}}}},
                     {"sequence", {{"file", "sequence.i32"}, {"dtype", "int32"}, {"shape", {n}}}},
                     {"timestamps", {{"file", "timestamps.f64"}, {"dtype", "float64"}, {"shape", {n}}}},
                     {"saccade", {{"file", "saccade.u8"}, {"dtype", "uint8"}, {"shape", {n}}}}}}};
  std::ofstream(dir / "manifest.json") << m.dump(2) << '\n';
  write_tensor(dir / "features.f32", d.features);
  write_tensor(dir / "targets.f32", d.targets);
  write_tensor(dir / "pixel_counts.u32", d.pixel_counts);
  write_tensor(dir / "sensitivities.f64", d.sensitivities);
  write_tensor(dir / "sequence.i32", d.sequence);
  write_tensor(dir / "timestamps.f64", d.timestamps);
  write_tensor(dir / "saccade.u8", d.saccade);
}

Dataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw DatasetError("no dataset manifest in " + dir.string());
  Dataset d;
  size_t n = 0;
  try {
    nlohmann::json m;
    in >> m;
    if (m.at("format") != "fovstream-dataset" || m.at("version").get<uint32_t>() != kDatasetVersion)
      throw DatasetError(dir.string() + ": unsupported dataset format");
    if (m.at("feature_dim").get<int>() != kFeatureDim) throw DatasetError(dir.string() + ": feature size mismatch");
    d.scene_hash = m.at("scene_hash").get<uint64_t>();
    n = m.at("samples").get<size_t>();
    d.slot_count = m.at("slot_count").get<int>();
    d.level_count = m.at("level_count").get<int>();
    d.normalizer = {m.at("norm_lo").get<double>(), m.at("norm_hi").get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw DatasetError(dir.string() + ": " + e.what());
  }
  const size_t slots = size_t(n) * d.slot_count;
  d.features = read_tensor<float>(dir / "features.f32", n * kFeatureDim);
  d.targets = read_tensor<float>(dir / "targets.f32", slots);
  d.pixel_counts = read_tensor<uint32_t>(dir / "pixel_counts.u32", slots);
  d.sensitivities = read_tensor<double>(dir / "sensitivities.f64", slots);
  d.sequence = read_tensor<int>(dir / "sequence.i32", n);
  d.timestamps = read_tensor<double>(dir / "timestamps.f64", n);
  d.saccade = read_tensor<uint8_t>(dir / "saccade.u8", n);
  return d;
}

// --- training ----------------------------------------------------------------------------

namespace {

Eigen::MatrixXf gather(const std::vector<float>& flat, size_t width, const std::vector<size_t>& rows, size_t begin,
                       size_t end) {
  Eigen::MatrixXf m(width, end - begin);
  for (size_t c = begin; c < end; ++c)
    std::memcpy(m.col(Eigen::Index(c - begin)).data(), flat.data() + rows[c] * width, sizeof(float) * width);
  return m;
}

}  // namespace

MlpModel train_model(const Dataset& data, const TrainParams& params, TrainReport* report) {
  const auto clock0 = std::chrono::steady_clock::now();
  if (data.size() == 0) throw TrainingError("cannot train on an empty dataset");
  if (params.epochs < 0 || params.batch_size <= 0 || !(params.learning_rate > 0.0))
    throw TrainingError("bad training hyperparameters");
  const int held = params.held_out_sequence >= 0 ? params.held_out_sequence
                                                 : *std::max_element(data.sequence.begin(), data.sequence.end());
  std::vector<size_t> train = data.rows(held, false);
  const std::vector<size_t> test = data.rows(held, true);
  if (train.empty()) throw TrainingError("no training rows outside the held-out sequence");
  const size_t slots = size_t(data.slot_count);

  // Inputs are standardized with training statistics; the affine map is folded into the first
  // layer afterwards so the saved model takes raw features.
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(kFeatureDim), sd = Eigen::VectorXd::Zero(kFeatureDim);
  for (size_t r : train)
    for (int i = 0; i < kFeatureDim; ++i) mean(i) += data.features[r * kFeatureDim + i];
  mean /= double(train.size());
  for (size_t r : train)
    for (int i = 0; i < kFeatureDim; ++i) sd(i) += std::pow(data.features[r * kFeatureDim + i] - mean(i), 2);
  for (int i = 0; i < kFeatureDim; ++i) {
    sd(i) = std::sqrt(sd(i) / double(train.size()));
    if (sd(i) < 1e-6) sd(i) = 1.0;
  }
  std::vector<float> features(data.features.size());
  for (size_t r = 0; r < data.size(); ++r)
    for (int i = 0; i < kFeatureDim; ++i)
      features[r * kFeatureDim + i] = float((data.features[r * kFeatureDim + i] - mean(i)) / sd(i));

  std::vector<int> sizes{kFeatureDim};
  sizes.insert(sizes.end(), params.hidden.begin(), params.hidden.end());
  sizes.push_back(data.slot_count);
  BasicMlp<float> net(sizes, params.seed);
  if (params.init_output_bias) {
    std::vector<double> sum(slots, 0.0);
    std::vector<size_t> seen(slots, 0);
    for (size_t r : train)
      for (size_t s = 0; s < slots; ++s)
        if (data.pixel_counts[r * slots + s] > 0) {
          sum[s] += data.targets[r * slots + s];
          ++seen[s];
        }
    Eigen::VectorXf& out = net.biases().back();
    for (size_t s = 0; s < slots; ++s) {
      const double m = seen[s] ? std::clamp(sum[s] / double(seen[s]), 1e-4, 1.0 - 1e-4) : 0.5;
      out(Eigen::Index(s)) = float(std::log(m / (1.0 - m)));
    }
  }
  std::vector<float> mask_values;
  if (params.mask_empty_slots) {
    mask_values.resize(data.pixel_counts.size());
    for (size_t i = 0; i < mask_values.size(); ++i) mask_values[i] = data.pixel_counts[i] > 0 ? 1.0f : 0.0f;
  }
  BasicMlp<float>::Gradients grad, velocity;
  for (size_t l = 0; l < net.weights().size(); ++l) {
    velocity.w.push_back(Eigen::MatrixXf::Zero(net.weights()[l].rows(), net.weights()[l].cols()));
    velocity.b.push_back(Eigen::VectorXf::Zero(net.biases()[l].size()));
  }

  std::mt19937_64 rng(params.seed ^ 0x9e3779b97f4a7c15ULL);
  const float lr = float(params.learning_rate), mu = float(params.momentum);
  std::vector<double> epoch_loss;
  for (int e = 0; e < params.epochs; ++e) {
    std::shuffle(train.begin(), train.end(), rng);
    double total = 0.0;
    for (size_t b = 0; b < train.size(); b += size_t(params.batch_size)) {
      const size_t end = std::min(train.size(), b + size_t(params.batch_size));
      const Eigen::MatrixXf x = gather(features, kFeatureDim, train, b, end);
      const Eigen::MatrixXf y = gather(data.targets, slots, train, b, end);
      const float rows = float(end - b);
      const float scale = params.reduction == LossReduction::sum       ? 1.0f
                          : params.reduction == LossReduction::per_row ? rows
                                                                       : rows * float(slots);
      Eigen::MatrixXf mask;
      if (params.mask_empty_slots) mask = gather(mask_values, slots, train, b, end);
      total += double(net.loss_and_gradient(x, y, scale, grad, params.mask_empty_slots ? &mask : nullptr)) * scale;
      for (size_t l = 0; l < grad.w.size(); ++l) {
        velocity.w[l] = mu * velocity.w[l] + grad.w[l];
        velocity.b[l] = mu * velocity.b[l] + grad.b[l];
        net.weights()[l] -= lr * velocity.w[l];
        net.biases()[l] -= lr * velocity.b[l];
      }
    }
    epoch_loss.push_back(total / double(train.size()));
    if (!std::isfinite(epoch_loss.back())) throw TrainingError("training diverged at epoch " + std::to_string(e));
  }

  Eigen::MatrixXf& w0 = net.weights()[0];
  Eigen::VectorXf& b0 = net.biases()[0];
  for (int i = 0; i < kFeatureDim; ++i) {
    b0 -= w0.col(i) * float(mean(i) / sd(i));
    w0.col(i) /= float(sd(i));
  }

  MlpModel model;
  model.net = std::move(net);
  model.scene_hash = data.scene_hash;
  model.normalizer = data.normalizer;
  model.level_count = data.level_count;
  if (report) {
    report->epoch_loss = epoch_loss;
    report->train_rows = train.size();
    report->test_rows = test.size();
    if (!test.empty()) {
      const EvalReport ev = evaluate_model(model, data, test);
      report->test_mae = ev.mae;
      report->test_relative_mse = ev.relative_mse;
    }
    report->seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock0).count();
  }
  return model;
}

EvalReport evaluate_model(const MlpModel& model, const Dataset& data, const std::vector<size_t>& rows) {
  if (model.scene_hash != data.scene_hash) throw ModelError("model and dataset belong to different scenes");
  if (model.slot_count() != data.slot_count) throw ModelError("model and dataset slot counts differ");
  EvalReport rep;
  rep.rows = rows.size();
  if (rows.empty()) return rep;
  const size_t slots = size_t(data.slot_count);
  double abs_err = 0.0, sq_err = 0.0, sq_ref = 0.0;
  size_t visible = 0;
  constexpr size_t kChunk = 256;
  for (size_t b = 0; b < rows.size(); b += kChunk) {
    const size_t end = std::min(rows.size(), b + kChunk);
    const Eigen::MatrixXf pred = model.predict_batch(gather(data.features, kFeatureDim, rows, b, end));
    for (size_t c = b; c < end; ++c) {
      const size_t r = rows[c];
      for (size_t s = 0; s < slots; ++s) {
        const float p = pred(Eigen::Index(s), Eigen::Index(c - b));
        const uint32_t n = data.pixel_counts[r * slots + s];
        if (n > 0) {
          abs_err += std::abs(double(p) - data.targets[r * slots + s]);
          ++visible;
        }
        const double ref = data.sensitivities[r * slots + s];
        const double est = model.normalizer.denormalize(p, n);
        sq_err += (est - ref) * (est - ref);
        sq_ref += ref * ref;
      }
    }
  }
  rep.mae = visible ? abs_err / double(visible) : 0.0;
  rep.relative_mse = sq_ref > 0.0 ? sq_err / sq_ref : (sq_err > 0.0 ? INFINITY : 0.0);
  return rep;
}

}  // namespace fovstream
