#include <cmath>
#include <fstream>
#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "fovstream/errors.hpp"
#include "fovstream/neural.hpp"

using namespace fovstream;
using doctest::Approx;

namespace {

struct Small {
  SceneAsset asset = fixtures::terrain_scene(6, 3);
  PerceptualModel model{RetinaParams{}, DisplayParams{}, PerceptionParams{}};
  std::vector<GazeTrace> traces;
  Dataset data;

  Small() {
    TraceParams tp;
    tp.duration = 1.5;
    tp.orbit_radius = 25;
    tp.orbit_height = 35;
    for (uint64_t s = 1; s <= 2; ++s) {
      tp.seed = s;
      traces.push_back(generate_trace(tp, model.display()));
    }
    data = generate_dataset(asset, traces, model, RenderOptions{});
  }
};

const Small& small() {
  static const Small s;
  return s;
}

using Net = BasicMlp<double>;

Net::Matrix random_matrix(int r, int c, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Net::Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

}  // namespace

TEST_CASE("gaze in screen units") {
  const DisplayParams d;
  const Vec2 c = normalized_gaze({0, 0}, d);
  CHECK(c.x == Approx(0.5));
  CHECK(c.y == Approx(0.5));
  const Vec2 up = normalized_gaze({0, 1}, d);
  CHECK(up.y < 0.5);
  const Vec2 far = normalized_gaze({500, -500}, d);
  CHECK(far.x == 1.0);
  CHECK(far.y == 1.0);
}

TEST_CASE("feature layout") {
  GazeSample s;
  s.camera = fixtures::orbit_camera(30, 10, 20);
  s.gaze = {0, 0};
  const FeatureVector f = featurize(s, {GazeMode::saccade}, DisplayParams{});
  CHECK(f[0] == s.camera.position.x);
  CHECK(f[4] == s.camera.forward.y);
  CHECK(f[8] == s.camera.up.z);
  CHECK(f[9] == Approx(0.5));
  CHECK(f[11] == 1.0);
  CHECK(featurize(s, {GazeMode::fixation}, DisplayParams{})[11] == 0.0);
}

TEST_CASE("slot normalizer") {
  const SlotNormalizer n{-20.0, 30.0};
  CHECK(n.normalize(-200.0, 10) == Approx(0.0));
  CHECK(n.normalize(300.0, 10) == Approx(1.0));
  CHECK(n.denormalize(n.normalize(123.0, 7), 7) == Approx(123.0));
  CHECK(n.normalize(5.0, 0) == 0.0);
  CHECK(n.denormalize(0.7, 0) == 0.0);
  CHECK(slot_index(3, 1, 4) == 10);
  const SlotNormalizer m = slot_normalizer(small().model);
  CHECK(m.lo == Approx(fixtures::kNormLo));
  CHECK(m.hi > 0.0);
}

TEST_CASE("network shapes and determinism") {
  const Net a({12, 7, 5, 3}, 4), b({12, 7, 5, 3}, 4), c({12, 7, 5, 3}, 5);
  CHECK(a.parameter_count() == 12 * 7 + 7 + 7 * 5 + 5 + 5 * 3 + 3);
  std::mt19937_64 rng(1);
  const Net::Matrix x = random_matrix(12, 9, rng, -2, 2);
  const Net::Matrix y = a.forward(x);
  CHECK(y.rows() == 3);
  CHECK(y.cols() == 9);
  CHECK(y == b.forward(x));
  CHECK(y != c.forward(x));
  CHECK(y.minCoeff() > 0.0);
  CHECK(y.maxCoeff() < 1.0);
  const double bound = 1.0 / std::sqrt(12.0);
  CHECK(a.weights()[0].cwiseAbs().maxCoeff() <= bound);
}

TEST_CASE("backprop agrees with finite differences") {
  std::mt19937_64 rng(11);
  for (bool masked : {false, true}) {
    Net net({5, 8, 6, 4}, 2);
    const Net::Matrix x = random_matrix(5, 7, rng, -1, 1);
    const Net::Matrix y = random_matrix(4, 7, rng, 0, 1);
    Net::Matrix mask = random_matrix(4, 7, rng, 0, 1).unaryExpr([](double v) { return v < 0.3 ? 0.0 : 1.0; });
    const Net::Matrix* m = masked ? &mask : nullptr;
    Net::Gradients g;
    const double l0 = net.loss_and_gradient(x, y, 3.0, g, m);
    CHECK(l0 == Approx(net.loss(x, y, 3.0, m)).epsilon(1e-14));
    std::uniform_int_distribution<size_t> pick(0, net.parameter_count() - 1);
    for (int k = 0; k < 10; ++k) {
      const size_t i = pick(rng);
      const double h = 1e-6, keep = net.parameter(i);
      net.parameter(i) = keep + h;
      const double up = net.loss(x, y, 3.0, m);
      net.parameter(i) = keep - h;
      const double down = net.loss(x, y, 3.0, m);
      net.parameter(i) = keep;
      const double fd = (up - down) / (2 * h), an = net.gradient_entry(g, i);
      CHECK(std::abs(fd - an) <= 1e-4 * std::max(std::abs(fd), 1e-6));
    }
  }
}

TEST_CASE("masked slots carry no loss") {
  std::mt19937_64 rng(3);
  const Net net({3, 4, 2}, 1);
  const Net::Matrix x = random_matrix(3, 5, rng, -1, 1);
  Net::Matrix y = random_matrix(2, 5, rng, 0, 1);
  Net::Matrix mask = Net::Matrix::Ones(2, 5);
  mask.row(1).setZero();
  const double before = net.loss(x, y, 1.0, &mask);
  y.row(1).setConstant(0.9);
  CHECK(net.loss(x, y, 1.0, &mask) == before);
}

TEST_CASE("training fits a constant target and the model round-trips") {
  Dataset d;
  d.slot_count = 3;
  d.level_count = 2;
  d.scene_hash = 42;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int r = 0; r < 200; ++r) {
    for (int i = 0; i < kFeatureDim; ++i) d.features.push_back(float(u(rng)));
    for (float t : {0.2f, 0.5f, 0.7f}) d.targets.push_back(t);
    for (int s = 0; s < 3; ++s) d.pixel_counts.push_back(10);
    d.sensitivities.insert(d.sensitivities.end(), 3, 0.0);
    d.sequence.push_back(r < 160 ? 0 : 1);
    d.timestamps.push_back(r);
    d.saccade.push_back(0);
  }
  for (size_t i = 0; i < d.size(); ++i)
    for (int s = 0; s < 3; ++s) d.sensitivities[i * 3 + s] = d.normalizer.denormalize(d.targets[i * 3 + s], 10);
  TrainParams p;
  p.hidden = {16, 16};
  p.epochs = 40;
  p.batch_size = 32;
  p.init_output_bias = false;
  p.reduction = LossReduction::per_row;
  p.learning_rate = 1e-2;
  TrainReport rep;
  const MlpModel m = train_model(d, p, &rep);
  CHECK(rep.train_rows == 160);
  CHECK(rep.test_rows == 40);
  CHECK(rep.epoch_loss.size() == 40);
  CHECK(rep.epoch_loss.back() < rep.epoch_loss.front());
  CHECK(rep.test_mae < 0.05);
  CHECK(train_model(d, p).net.weights()[1] == m.net.weights()[1]);

  p.epochs = 0;
  train_model(d, p, &rep);
  const double untrained = rep.test_mae;
  p.init_output_bias = true;
  train_model(d, p, &rep);
  CHECK(rep.test_mae < 0.5 * untrained);

  const auto dir = fixtures::scratch_dir("neural_model");
  m.save(dir / "m.bin");
  const MlpModel back = MlpModel::load(dir / "m.bin");
  CHECK(back.scene_hash == 42);
  CHECK(back.level_count == 2);
  FeatureVector f{};
  f[3] = 0.25;
  CHECK(back.predict(f) == m.predict(f));

  std::string bytes = fixtures::slurp(dir / "m.bin");
  bytes[bytes.size() / 2] ^= 0x10;
  std::ofstream(dir / "bad.bin", std::ios::binary) << bytes;
  CHECK_THROWS_AS(MlpModel::load(dir / "bad.bin"), ModelError);
  std::ofstream(dir / "junk.bin") << "not a model";
  CHECK_THROWS_AS(MlpModel::load(dir / "junk.bin"), ModelError);
  CHECK_THROWS_AS(MlpModel::load(dir / "missing.bin"), ModelError);
  CHECK_THROWS_AS(m.predict_batch(Eigen::MatrixXf::Zero(5, 1)), ModelError);

  Dataset other = d;
  other.scene_hash = 7;
  CHECK_THROWS_AS(evaluate_model(m, other, other.rows(1, true)), ModelError);
}

TEST_CASE("dataset targets come from the analytic sweep") {
  const Small& s = small();
  const Dataset& d = s.data;
  REQUIRE(d.size() == 14);  // 7 samples at 4 Hz per 1.5 s trace
  CHECK(d.slot_count == int(s.asset.slot_count()));
  CHECK(d.scene_hash == scene_hash(s.asset));
  CHECK(d.rows(1, true).size() == 7);
  for (float t : d.targets) {
    CHECK(t >= 0.0f);
    CHECK(t <= 1.0f);
  }
  const GazeTrace& tr = s.traces[1];
  const auto labels = classify_gaze(tr, s.model.params().saccade_threshold);
  const size_t i = sample_index_at(tr, 0.5 + 1e-9);
  const SlotSweep sw = analytic_slot_sweep(s.model, s.asset, RenderOptions{}, tr[i], labels[i]);
  const size_t row = 7 + 2, slots = size_t(d.slot_count);
  int visible = 0;
  for (size_t j = 0; j < slots; ++j) {
    CHECK(d.sensitivities[row * slots + j] == sw.sensitivities[j]);
    CHECK(d.pixel_counts[row * slots + j] == sw.pixel_counts[j]);
    visible += sw.pixel_counts[j] > 0;
  }
  CHECK(visible > 0);
  const FeatureVector f = featurize(tr[i], labels[i], s.model.display());
  for (int k = 0; k < kFeatureDim; ++k) CHECK(d.features[row * kFeatureDim + k] == float(f[k]));
}

TEST_CASE("dataset files round-trip") {
  const Dataset& d = small().data;
  const auto dir = fixtures::scratch_dir("neural_dataset");
  save_dataset(dir, d);
  const Dataset back = load_dataset(dir);
  CHECK(back.scene_hash == d.scene_hash);
  CHECK(back.normalizer.lo == d.normalizer.lo);
  CHECK(back.features == d.features);
  CHECK(back.targets == d.targets);
  CHECK(back.pixel_counts == d.pixel_counts);
  CHECK(back.sensitivities == d.sensitivities);
  CHECK(back.sequence == d.sequence);
  CHECK(back.saccade == d.saccade);
  std::filesystem::resize_file(dir / "targets.f32", 8);
  CHECK_THROWS_AS(load_dataset(dir), DatasetError);
  CHECK_THROWS_AS(load_dataset(dir / "nowhere"), DatasetError);
}

TEST_CASE("dataset and training errors") {
  const Small& s = small();
  CHECK_THROWS_AS(generate_dataset(s.asset, {}, s.model, RenderOptions{}), DatasetError);
  GazeTrace backwards = s.traces[0];
  std::swap(backwards[1].timestamp, backwards[2].timestamp);
  CHECK_THROWS_AS(generate_dataset(s.asset, {backwards}, s.model, RenderOptions{}), DatasetError);
  DatasetParams fast;
  fast.sample_rate = 1000;
  CHECK_THROWS_AS(generate_dataset(s.asset, s.traces, s.model, RenderOptions{}, fast), DatasetError);
  CHECK_THROWS_AS(train_model(Dataset{}, TrainParams{}), TrainingError);
  TrainParams bad;
  bad.learning_rate = 0;
  CHECK_THROWS_AS(train_model(s.data, bad), TrainingError);
  TrainParams only;
  only.held_out_sequence = 0;
  Dataset one = s.data;
  for (int& q : one.sequence) q = 0;
  CHECK_THROWS_AS(train_model(one, only), TrainingError);
}
