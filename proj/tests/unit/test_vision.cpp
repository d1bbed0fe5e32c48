#include <cmath>
#include <fstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "fovstream/errors.hpp"
#include "fovstream/vision.hpp"

using namespace fovstream;
using doctest::Approx;

TEST_CASE("ganglion density at the fovea is twice the cone peak") {
  const RetinaParams r;
  for (Meridian m : {Meridian::temporal, Meridian::superior, Meridian::nasal, Meridian::inferior})
    CHECK(ganglion_density(r, 0.0, m) == Approx(29609.2).epsilon(1e-12));
}

TEST_CASE("ganglion density matches the scalar oracle per meridian") {
  const RetinaParams r;
  for (int m = 0; m < 4; ++m) {
    const auto& f = r.meridians[m];
    for (double ecc : {0.5, 1.0, 5.0, 20.0, 60.0})
      CHECK(ganglion_density(r, ecc, Meridian(m)) == Approx(fixtures::density_oracle(ecc, f.a, f.r2, f.re)).epsilon(1e-12));
  }
}

TEST_CASE("ganglion density is non-increasing out to 90 deg") {
  const RetinaParams r;
  for (int m = 0; m < 4; ++m) {
    double prev = ganglion_density(r, 0.0, Meridian(m));
    for (int i = 1; i <= 900; ++i) {
      const double d = ganglion_density(r, i * 0.1, Meridian(m));
      CHECK(d <= prev);
      prev = d;
    }
  }
}

TEST_CASE("negative or non-finite eccentricity is a domain error") {
  const RetinaParams r;
  CHECK_THROWS_AS(ganglion_density(r, -1.0, Meridian::nasal), DomainError);
  CHECK_THROWS_AS(ganglion_density(r, NAN, Meridian::nasal), DomainError);
  CHECK_THROWS_AS(receptor_spacing(r, INFINITY, 0.0), DomainError);
}

TEST_CASE("receptor spacing at the origin is the analytic limit") {
  const RetinaParams r;
  CHECK(receptor_spacing(r, 0.0, 0.0) == Approx(fixtures::kFovealSpacing).epsilon(1e-12));
  CHECK(receptor_spacing(r, 1e-6, 0.0) == Approx(receptor_spacing(r, 0.0, 0.0)).epsilon(1e-6));
  CHECK(receptor_spacing(r, 0.0, 1e-6) == Approx(receptor_spacing(r, 0.0, 0.0)).epsilon(1e-6));
}

TEST_CASE("acuity importance frozen values") {
  const RetinaParams r;
  CHECK(acuity_importance(r, {0, 0}) == Approx(fixtures::kFovealAcuity).epsilon(1e-12));
  CHECK(acuity_importance(r, {0, 0}) == Approx(80.06).epsilon(0.01));
  CHECK(acuity_importance(r, {10, 0}) == Approx(fixtures::kAcuity10x).epsilon(1e-12));
  CHECK(acuity_importance(r, {0, 10}) == Approx(fixtures::kAcuity10y).epsilon(1e-12));
  CHECK(acuity_importance(r, {3, 4}) == Approx(fixtures::kAcuity34).epsilon(1e-12));
  CHECK(acuity_importance(r, {40, 0}) == Approx(fixtures::kAcuity40x).epsilon(1e-12));
}

TEST_CASE("acuity falls off with eccentricity") {
  const RetinaParams r;
  CHECK(acuity_importance(r, {0, 0}) > acuity_importance(r, {10, 0}));
  CHECK(acuity_importance(r, {10, 0}) > acuity_importance(r, {30, 0}));
  CHECK(acuity_importance(r, {0, 0}) > 5.0 * acuity_importance(r, {20, 0}));
}

TEST_CASE("meridian mapping symmetry") {
  RetinaParams r;
  // symmetric averaging makes opposite offsets agree
  CHECK(acuity_importance(r, {7, -3}) == acuity_importance(r, {-7, 3}));
  r.mapping = MeridianMapping::per_quadrant;
  CHECK(acuity_importance(r, {7, -3}) != Approx(acuity_importance(r, {-7, 3})).epsilon(1e-6));
  // per-quadrant on the temporal axis uses the temporal fit alone
  const double kHex = 2.0 / std::sqrt(3.0);
  const double rho_t = ganglion_density(r, 10.0, Meridian::temporal);
  CHECK(acuity_importance(r, {10, 0}) == Approx(0.5 / std::sqrt(kHex / rho_t)).epsilon(1e-12));
}

TEST_CASE("csf frozen values and oracle") {
  CHECK(csf(0.0, 100.0) == 0.0);
  CHECK(csf(0.0, 3.0) == 0.0);
  CHECK(csf(4.0, 100.0) == Approx(fixtures::kCsf4At100).epsilon(1e-12));
  CHECK(csf(1.0, 100.0) == Approx(fixtures::kCsf1At100).epsilon(1e-12));
  for (double f : {0.1, 0.7, 2.0, 9.0, 33.0})
    for (double lum : {1.0, 10.0, 100.0, 1000.0}) CHECK(csf(f, lum) == Approx(fixtures::csf_oracle(f, lum)).epsilon(1e-12));
}

TEST_CASE("csf is unimodal with its peak near 3.86 cycles/deg at 100 cd/m2") {
  const double peak = fixtures::csf_peak_oracle(100.0);
  CHECK(peak == Approx(fixtures::kCsfPeakAt100).epsilon(1e-6));
  CHECK(csf(peak / 4, 100.0) < csf(peak, 100.0));
  CHECK(csf(4 * peak, 100.0) < csf(peak, 100.0));
  int maxima = 0;
  std::vector<double> v;
  for (int i = 0; i < 256; ++i) v.push_back(csf(std::pow(10.0, -2.0 + 4.0 * i / 255.0), 100.0));
  for (int i = 1; i + 1 < 256; ++i)
    if (v[i] > v[i - 1] && v[i] > v[i + 1]) ++maxima;
  CHECK(maxima == 1);
}

TEST_CASE("csf is positive on (0, 60] and grows with luminance at 4 cycles/deg") {
  for (int i = 1; i <= 600; ++i) CHECK(csf(i * 0.1, 100.0) > 0.0);
  CHECK(csf(4.0, 10.0) < csf(4.0, 1000.0));
}

TEST_CASE("csf rejects bad arguments") {
  CHECK_THROWS_AS(csf(-1.0, 100.0), DomainError);
  CHECK_THROWS_AS(csf(1.0, 0.0), DomainError);
  CHECK_THROWS_AS(csf(1.0, -5.0), DomainError);
}

TEST_CASE("clamped band") {
  const RetinaParams r;
  const DisplayParams d;
  CHECK(d.band_cpd() == 7.0);
  CHECK(clamped_band(r, {0, 0}, {0, 0}, d) == 7.0);
  CHECK(clamped_band(r, {0, 0}, {40, 0}, d) == Approx(fixtures::kAcuity40x).epsilon(1e-12));
  for (double x = -45; x <= 45; x += 2.5)
    for (double y = -45; y <= 45; y += 2.5) {
      const double b = clamped_band(r, {1, -2}, {x, y}, d);
      CHECK(b <= d.band_cpd());
      CHECK(b <= acuity_importance(r, Vec2{1, -2} - Vec2{x, y}));
      CHECK(b > 0.0);
    }
}

TEST_CASE("screen to degree mappings") {
  DisplayParams d;
  const Vec2 c = d.screen_to_degrees(64, 64);
  CHECK(c.x == 0.0);
  CHECK(c.y == 0.0);
  const Vec2 corner = d.screen_to_degrees(128, 0);
  CHECK(corner.x == Approx(64.0 / 14.0));
  CHECK(corner.y == Approx(64.0 / 14.0));
  d.angle_mapping = AngleMapping::tangent;
  // the top edge sits at half the vertical field of view
  CHECK(d.screen_to_degrees(64, 0).y == Approx(d.vertical_fov / 2).epsilon(1e-12));
}

TEST_CASE("parameter validation and file round trip") {
  RetinaParams r;
  r.rho_cone = 0;
  CHECK_THROWS_AS(r.validate(), ConfigError);
  DisplayParams d;
  d.display_band = 0.7;
  CHECK_THROWS_AS(d.validate(), ConfigError);

  const auto dir = fixtures::scratch_dir("vision");
  {
    std::ofstream out(dir / "p.json");
    out << R"({"retina": {"mapping": "per_quadrant", "falloff_scale": 40.0}, "display": {"luminance": 50}})";
  }
  RetinaParams r2;
  DisplayParams d2;
  load_vision_params(dir / "p.json", r2, d2);
  CHECK(r2.mapping == MeridianMapping::per_quadrant);
  CHECK(r2.falloff_scale == 40.0);
  CHECK(r2.rho_cone == RetinaParams{}.rho_cone);
  CHECK(d2.luminance == 50.0);
  CHECK(d2.pixels_per_degree == 14.0);
  {
    std::ofstream out(dir / "bad.json");
    out << R"({"retina": {"mapping": "diagonal"}})";
  }
  CHECK_THROWS_AS(load_vision_params(dir / "bad.json", r2, d2), ConfigError);
  CHECK_THROWS_AS(load_vision_params(dir / "missing.json", r2, d2), IoError);
}
