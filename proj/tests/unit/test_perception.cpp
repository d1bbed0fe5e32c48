#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "fixtures.hpp"
#include "fovstream/errors.hpp"
#include "fovstream/perception.hpp"

using namespace fovstream;
using doctest::Approx;

namespace {

GazeTrace line_trace(double speed_deg_s, int n = 91, double rate = 90.0) {
  GazeTrace t;
  for (int i = 0; i < n; ++i) {
    GazeSample s;
    s.timestamp = i / rate;
    s.gaze = {speed_deg_s * s.timestamp - 2.0, 0.5};
    t.push_back(s);
  }
  return t;
}

const PerceptualModel& model() {
  static const PerceptualModel m(RetinaParams{}, DisplayParams{}, PerceptionParams{});
  return m;
}

size_t argmax(const std::vector<double>& v) { return size_t(std::max_element(v.begin(), v.end()) - v.begin()); }

}  // namespace

TEST_CASE("gaze classification by speed") {
  for (const auto& s : classify_gaze(line_trace(0.0))) CHECK(s.mode == GazeMode::fixation);
  for (const auto& s : classify_gaze(line_trace(150.0))) {
    CHECK(s.mode == GazeMode::fixation);
    CHECK(s.speed == Approx(150.0));
  }
  GazeTrace jump = line_trace(0.0, 5);
  for (size_t i = 3; i < jump.size(); ++i) jump[i].gaze.x += 20.0;
  const auto states = classify_gaze(jump);
  CHECK(states[2].mode == GazeMode::saccade);  // central difference straddles the jump
  CHECK(states[0].mode == GazeMode::fixation);
  CHECK(classify_causal(jump[2], jump[3]).mode == GazeMode::saccade);
  CHECK(classify_causal(jump[2], jump[3]).speed == Approx(1800.0));
  CHECK(classify_causal(jump[3], jump[4]).mode == GazeMode::fixation);
  CHECK(classify_speed(180.0, 180.0).mode == GazeMode::fixation);
  CHECK(classify_speed(180.001, 180.0).mode == GazeMode::saccade);
}

TEST_CASE("classification rejects degenerate traces") {
  GazeTrace t = line_trace(10.0, 4);
  t[2].timestamp = t[1].timestamp;
  CHECK_THROWS_AS(classify_gaze(t), TraceError);
  CHECK_THROWS_AS(validate_trace(t), TraceError);
  CHECK_THROWS_AS(classify_gaze(line_trace(1.0, 1)), TraceError);
  GazeTrace bad_cam = line_trace(1.0, 3);
  bad_cam[1].camera.up = {1, 0, 0};
  bad_cam[1].camera.forward = {1, 0, 0};
  CHECK_THROWS_AS(validate_trace(bad_cam), TraceError);
}

TEST_CASE("sample lookup by time") {
  const GazeTrace t = line_trace(1.0, 10, 10.0);
  CHECK(sample_index_at(t, -1.0) == 0);
  CHECK(sample_index_at(t, 0.0) == 0);
  CHECK(sample_index_at(t, 0.35) == 3);
  CHECK(sample_index_at(t, 0.4) == 4);
  CHECK(sample_index_at(t, 99.0) == 9);
}

TEST_CASE("static importance") {
  const RetinaParams r;
  CHECK(static_importance(r, {1, 1}, {1, 1}, 2.0) == Approx(fixtures::kFovealAcuity + 2.0).epsilon(1e-12));
  CHECK(static_importance(r, {0, 0}, {30, 0}, 2.0) > 2.0);
  const auto e = model().static_field({0.5, -0.3});
  const size_t p = argmax(e);
  const Vec2 at = model().display().pixel_to_degrees(int(p % 128), int(p / 128));
  CHECK(std::abs(at.x - 0.5) <= 0.5 / 14 + 1e-12);
  CHECK(std::abs(at.y + 0.3) <= 0.5 / 14 + 1e-12);
}

TEST_CASE("popping of identical frames is exactly zero") {
  const BandSet bs = model().decompose(fixtures::noise_image(128, 128, 1));
  for (double v : model().popping_field({0, 0}, bs, bs)) CHECK(v == 0.0);
  for (double v : model().saccade_popping_field(bs, bs)) CHECK(v == 0.0);
  CHECK(model().popping_intensity({0, 0}, bs, bs, 5, 9) == 0.0);
}

TEST_CASE("popping follows a local change and uses the before frame as reference") {
  LuminanceImage before(128, 128, 0.5), after = before;
  const double ppd = 14.0;
  for (int y = 40; y < 72; ++y)
    for (int x = 40; x < 72; ++x) after.at(x, y) = 0.5 * (1.0 + 0.5 * std::cos(2 * 3.14159265358979 * 3.5 * x / ppd));
  const BandSet b0 = model().decompose(before), b1 = model().decompose(after);
  const auto p = model().popping_field({0, 0}, b0, b1);
  double inside = 0.0, far = 0.0;
  for (int y = 0; y < 128; ++y)
    for (int x = 0; x < 128; ++x) {
      const double v = p[size_t(y) * 128 + x];
      CHECK(v >= 0.0);
      if (x >= 44 && x < 68 && y >= 44 && y < 68) inside = std::max(inside, v);
      if (x < 16 || x >= 112 || y < 16 || y >= 112) far = std::max(far, v);
    }
  CHECK(inside > 0.1);
  CHECK(far < 1e-2 * inside);  // low-band kernels span the whole image
  // per-pixel evaluation agrees with the field
  CHECK(model().popping_intensity({0, 0}, b0, b1, 50, 60) == Approx(p[60 * 128 + 50]).epsilon(1e-12));
  // swapping the frames changes the Weber denominator
  const auto q = model().popping_field({0, 0}, b1, b0);
  CHECK(q[56 * 128 + 56] != Approx(p[56 * 128 + 56]).epsilon(1e-6));
}

TEST_CASE("large omega drives popping to zero") {
  PerceptionParams pp;
  pp.omega = 1e12;
  const PerceptualModel m(RetinaParams{}, DisplayParams{}, pp);
  const BandSet b0 = m.decompose(fixtures::noise_image(128, 128, 1)), b1 = m.decompose(fixtures::noise_image(128, 128, 2));
  for (double v : m.popping_field({0, 0}, b0, b1)) CHECK(v < 1e-8);
}

TEST_CASE("fixation importance of identical frames equals the static field") {
  const BandSet bs = model().decompose(fixtures::noise_image(128, 128, 3));
  const auto f = model().adaptive_importance({1, 2}, {GazeMode::fixation, 0.0}, bs, bs);
  CHECK(f.values == model().static_field({1, 2}));
  const size_t p = argmax(f.values);
  const Vec2 at = model().display().pixel_to_degrees(int(p % 128), int(p / 128));
  CHECK(length(at - Vec2{1, 2}) <= std::sqrt(0.5) / 14 + 1e-12);
}

TEST_CASE("saccade importance ignores the gaze") {
  const BandSet b0 = model().decompose(fixtures::noise_image(128, 128, 1)), b1 = model().decompose(fixtures::noise_image(128, 128, 2));
  const GazeState sac{GazeMode::saccade, 400.0};
  const auto a = model().adaptive_importance({0, 0}, sac, b0, b1);
  const auto b = model().adaptive_importance({-3, 4}, sac, b0, b1);
  CHECK(a.values == b.values);
  CHECK(a.mode == GazeMode::saccade);
}

TEST_CASE("popping-heavy patches rank low in fixation and high in saccade") {
  // two patches at equal eccentricity; only the left one changes
  LuminanceImage before = fixtures::noise_image(128, 128, 11, 0.45, 0.55), after = before;
  for (int y = 56; y < 72; ++y)
    for (int x = 16; x < 32; ++x) after.at(x, y) = y % 2 ? 0.9 : 0.1;
  const BandSet b0 = model().decompose(before), b1 = model().decompose(after);
  auto patch = [](const std::vector<double>& v, int x0) {
    double s = 0.0;
    for (int y = 56; y < 72; ++y)
      for (int x = x0; x < x0 + 16; ++x) s += v[size_t(y) * 128 + x];
    return s;
  };
  const Vec2 gaze = model().display().screen_to_degrees(64, 64);
  const auto fix = model().adaptive_importance(gaze, {GazeMode::fixation, 0.0}, b0, b1);
  const auto sac = model().adaptive_importance(gaze, {GazeMode::saccade, 500.0}, b0, b1);
  CHECK(patch(fix.values, 16) < patch(fix.values, 96));
  CHECK(patch(sac.values, 16) > patch(sac.values, 96));
}

TEST_CASE("progressive importance telescopes") {
  std::vector<BandSet> frames;
  for (uint64_t s : {1, 2, 3}) frames.push_back(model().decompose(fixtures::noise_image(128, 128, s)));
  const GazeState fix{GazeMode::fixation, 0.0};
  const auto two = model().progressive_importance({0, 0}, fix, std::span(frames.data(), 2));
  CHECK(two.values == model().adaptive_importance({0, 0}, fix, frames[0], frames[1]).values);
  const auto three = model().progressive_importance({0, 0}, fix, frames);
  const auto s0 = model().adaptive_importance({0, 0}, fix, frames[0], frames[1]);
  const auto s1 = model().adaptive_importance({0, 0}, fix, frames[1], frames[2]);
  for (size_t i = 0; i < three.values.size(); ++i) CHECK(three.values[i] == Approx(s0.values[i] + s1.values[i]).epsilon(1e-12));

  const std::vector<BandSet> same(3, frames[0]);
  const auto e = model().static_field({0, 0});
  const auto twice = model().progressive_importance({0, 0}, fix, same);
  for (size_t i = 0; i < e.size(); ++i) CHECK(twice.values[i] == 2.0 * e[i]);
  CHECK_THROWS_AS(model().progressive_importance({0, 0}, fix, std::span(frames.data(), 1)), DomainError);
}

TEST_CASE("analytic bounds") {
  const ImportanceBounds b = model().bounds();
  CHECK(b.popping_max == Approx(fixtures::kPoppingMax).epsilon(1e-12));
  CHECK(b.norm_lo == Approx(fixtures::kNormLo).epsilon(1e-12));
  CHECK(b.norm_hi == Approx(fixtures::kPoppingMax).epsilon(1e-12));
  CHECK(b.static_max == Approx(fixtures::kFovealAcuity + 2.0).epsilon(1e-12));
  // saturated opposite-sign contrasts hit the bound
  for (uint64_t s = 1; s <= 3; ++s) {
    const BandSet b0 = model().decompose(fixtures::noise_image(128, 128, s, 0.0, 1.0));
    const BandSet b1 = model().decompose(fixtures::noise_image(128, 128, s + 10, 0.0, 1.0));
    for (double v : model().adaptive_importance({0, 0}, {GazeMode::fixation, 0.0}, b0, b1).values) {
      CHECK(v >= b.fixation_lo);
      CHECK(v <= b.fixation_hi);
    }
    for (double v : model().saccade_popping_field(b0, b1)) CHECK(v <= b.popping_max);
  }
}

TEST_CASE("saccade grid and inclusion") {
  const auto grid = model().saccade_grid();
  CHECK(grid.size() == 64);
  const auto& incl = model().saccade_inclusion();
  for (double v : incl) CHECK((v >= 0.0 && v <= 1.0));
  const auto fix = model().inclusion({0, 0}, GazeMode::fixation);
  // the default display is narrow enough that every band survives clamping
  for (double v : fix) CHECK(v == 1.0);
}

TEST_CASE("perception params validate and round trip") {
  PerceptionParams p;
  p.omega = 0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = {};
  p.lambda = -1;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = {};
  p.lambda = 1.5;
  p.saccade_grid_rows = 4;
  nlohmann::json j = p;
  const auto q = j.get<PerceptionParams>();
  CHECK(q.lambda == 1.5);
  CHECK(q.saccade_grid_rows == 4);
  CHECK(q.omega == 10.0);
}
