#include <cmath>

#include "doctest.h"
#include "fixtures.hpp"
#include "fovstream/contrast.hpp"
#include "fovstream/errors.hpp"

using namespace fovstream;
using doctest::Approx;

namespace {

DisplayParams display_of(int size) {
  DisplayParams d;
  d.width = d.height = size;
  d.vertical_fov = size / d.pixels_per_degree;
  return d;
}

}  // namespace

TEST_CASE("band layout is octave spaced up to the display band") {
  const DisplayParams d;
  const FilterBank bank(128, 128, d, {});
  REQUIRE(bank.band_count() == 6);
  CHECK(bank.frequencies().back() == 7.0);
  for (int i = 1; i < 6; ++i) CHECK(bank.frequencies()[i] == 2.0 * bank.frequencies()[i - 1]);
  BandSpec too_high{6, 8.0};
  CHECK_THROWS_AS(FilterBank(128, 128, d, too_high), ConfigError);
  CHECK_THROWS_AS(FilterBank(128, 128, d, BandSpec{1, 0.0}), ConfigError);
}

TEST_CASE("filters form a partition of unity") {
  const DisplayParams d;
  const FilterBank bank(64, 64, d, {});
  for (double rho = 0.0; rho <= 10.0; rho += 0.01) {
    double s = 0.0;
    for (int b = 0; b <= bank.band_count(); ++b) s += bank.response(b, rho);
    CHECK(s == Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("constant image has no band energy") {
  const DisplayParams d;
  const FilterBank bank(64, 48, d, {});
  const BandSet bs = bank.decompose(LuminanceImage(64, 48, 0.37));
  for (const auto& band : bs.bands)
    for (double v : band) CHECK(std::abs(v) < 1e-12);
  for (double v : bs.lowpass) CHECK(v == Approx(0.37).epsilon(1e-12));
  for (int b = 0; b < bs.band_count(); ++b) CHECK(std::abs(point_contrast(bs, 10, 20, b)) < 1e-9);
  for (double v : local_sensitivity({0, 0}, LuminanceImage(64, 48, 0.37), RetinaParams{}, d)) CHECK(std::abs(v) < 1e-6);
}

TEST_CASE("decomposition reconstructs the input") {
  const DisplayParams d;
  const FilterBank bank(96, 64, d, {});
  const LuminanceImage img = fixtures::noise_image(96, 64, 3);
  const BandSet bs = bank.decompose(img);
  for (size_t p = 0; p < img.size(); ++p) {
    double s = bs.lowpass[p];
    for (const auto& band : bs.bands) s += band[p];
    CHECK(s == Approx(img.samples[p]).epsilon(1e-9));
  }
}

TEST_CASE("decomposition is linear") {
  const DisplayParams d;
  const FilterBank bank(64, 64, d, {});
  const LuminanceImage a = fixtures::noise_image(64, 64, 1), b = fixtures::noise_image(64, 64, 2);
  LuminanceImage mix(64, 64);
  for (size_t p = 0; p < mix.size(); ++p) mix.samples[p] = 0.3 * a.samples[p] + 1.7 * b.samples[p];
  const BandSet da = bank.decompose(a), db = bank.decompose(b), dm = bank.decompose(mix);
  for (int k = 0; k < dm.band_count(); ++k)
    for (size_t p = 0; p < mix.size(); ++p) CHECK(std::abs(dm.bands[k][p] - (0.3 * da.bands[k][p] + 1.7 * db.bands[k][p])) < 1e-6);
}

TEST_CASE("a grating at a band center lands in that band") {
  const DisplayParams d = display_of(128);
  const FilterBank bank(128, 128, d, {});
  for (int k = 0; k < bank.band_count(); ++k) {
    const BandSet bs = bank.decompose(fixtures::grating(128, 128, bank.frequencies()[k], d.pixels_per_degree));
    const double own = fixtures::rms(bs.bands[k]);
    for (int j = 0; j < bank.band_count(); ++j)
      if (j != k) CHECK(own >= 4.0 * fixtures::rms(bs.bands[j]));
  }
}

TEST_CASE("Michelson 0.5 grating gives point contrast 0.5 at its peaks") {
  const DisplayParams d = display_of(128);
  const FilterBank bank(128, 128, d, {});
  const int k = 3;
  const BandSet bs = bank.decompose(fixtures::grating(128, 128, bank.frequencies()[k], d.pixels_per_degree));
  CHECK(point_contrast(bs, 0, 5, k) == Approx(0.5).epsilon(1e-6));
  CHECK(std::abs(point_contrast(bs, 0, 5, k + 1)) < 1e-6);
  CHECK_THROWS_AS(point_contrast(bs, 128, 0, k), DomainError);
  CHECK_THROWS_AS(point_contrast(bs, 0, 0, 6), DomainError);
}

TEST_CASE("point contrast is invariant to luminance scaling") {
  const DisplayParams d;
  const FilterBank bank(64, 64, d, {});
  const LuminanceImage img = fixtures::noise_image(64, 64, 9, 0.3, 0.7);
  const ContrastField base = contrast_field(bank.decompose(img));
  for (double s : {0.5, 2.0, 10.0}) {
    LuminanceImage scaled = img;
    for (double& v : scaled.samples) v *= s;
    const ContrastField f = contrast_field(bank.decompose(scaled));
    for (int b = 0; b < 6; ++b)
      for (size_t p = 0; p < img.size(); ++p) CHECK(std::abs(f.values[b][p] - base.values[b][p]) < 1e-9);
  }
}

TEST_CASE("dark pixels use the dc floor and contrast saturates") {
  const ContrastParams p;
  CHECK(contrast_ratio(1e-3, 0.0, p) == 1.0);
  CHECK(contrast_ratio(-1e-5, 0.0, p) == Approx(-0.1));
  CHECK(contrast_ratio(0.2, 0.5, p) == Approx(0.4));
}

TEST_CASE("local sensitivity drops bands above the clamped band") {
  const DisplayParams d = display_of(512);
  const RetinaParams r;
  const FilterBank bank(512, 512, d, {});
  const BandSet bs = bank.decompose(fixtures::noise_image(512, 512, 4));
  const std::vector<double> field = local_sensitivity({0, 0}, bs, r, d);
  std::vector<double> w;
  for (double f : bs.frequencies) w.push_back(csf(f, d.luminance));
  int clamped = 0;
  for (int y = 0; y < 512; y += 7)
    for (int x = 0; x < 512; x += 7) {
      const size_t p = size_t(y) * 512 + x;
      const double band = clamped_band(r, {0, 0}, d.pixel_to_degrees(x, y), d);
      double kept = 0.0, all = 0.0;
      for (int b = 0; b < 6; ++b) {
        const double term = w[b] * std::abs(point_contrast(bs, x, y, b));
        all += term;
        if (bs.frequencies[b] <= band) kept += term;
      }
      CHECK(field[p] == Approx(kept).epsilon(1e-12));
      CHECK(field[p] >= 0.0);
      if (band < bs.frequencies.back()) {
        ++clamped;
        CHECK(field[p] < all);
      }
    }
  CHECK(clamped > 0);
}

TEST_CASE("local sensitivity is monotone in the band set") {
  const DisplayParams d = display_of(64);
  RetinaParams r;
  const FilterBank bank(64, 64, d, {});
  const BandSet bs = bank.decompose(fixtures::noise_image(64, 64, 5));
  // a sharper retina widens every pixel's band set
  const auto narrow = local_sensitivity({3, 0}, bs, r, d);
  r.rho_cone *= 4;
  r.falloff_scale *= 4;
  const auto wide = local_sensitivity({3, 0}, bs, r, d);
  for (size_t p = 0; p < narrow.size(); ++p) CHECK(wide[p] >= narrow[p]);
}

TEST_CASE("the clamping pattern follows the gaze") {
  const DisplayParams d = display_of(256);
  const RetinaParams r;
  const FilterBank bank(256, 256, d, {});
  // period 16 px along x, so a 16 px gaze shift maps the image onto itself
  const BandSet bs = bank.decompose(fixtures::grating(256, 256, 0.875, d.pixels_per_degree));
  const auto a = local_sensitivity({0, 0}, bs, r, d);
  const auto b = local_sensitivity({16.0 / 14.0, 0}, bs, r, d);
  for (int y = 0; y < 256; y += 5)
    for (int x = 0; x + 16 < 256; x += 3) CHECK(b[size_t(y) * 256 + x + 16] == Approx(a[size_t(y) * 256 + x]).epsilon(1e-9));
}

TEST_CASE("kernels reproduce the decomposition by circular convolution") {
  const DisplayParams d;
  const FilterBank bank(32, 32, d, {});
  const LuminanceImage img = fixtures::noise_image(32, 32, 6);
  const BandSet bs = bank.decompose(img);
  const auto& k = bank.kernels();
  const int stride = bank.kernel_stride();
  for (int b = 0; b <= 6; ++b) {
    const int x = 5, y = 17;
    double s = 0.0;
    for (int sy = 0; sy < 32; ++sy)
      for (int sx = 0; sx < 32; ++sx) {
        const int dx = ((x - sx) % 32 + 32) % 32, dy = ((y - sy) % 32 + 32) % 32;
        s += img.at(sx, sy) * k[size_t(dy * 32 + dx) * stride + b];
      }
    const double ref = b == 6 ? bs.lowpass[size_t(y) * 32 + x] : bs.bands[b][size_t(y) * 32 + x];
    CHECK(s == Approx(ref).epsilon(1e-9));
  }
}

TEST_CASE("image validation") {
  LuminanceImage img(4, 4, 0.5);
  img.at(1, 1) = -0.1;
  CHECK_THROWS_AS(img.validate(), DomainError);
  img.at(1, 1) = NAN;
  CHECK_THROWS_AS(img.validate(), DomainError);
  CHECK_THROWS_AS(LuminanceImage(0, 3).validate(), DomainError);
  const FilterBank bank(8, 8, DisplayParams{}, {});
  CHECK_THROWS_AS(bank.decompose(LuminanceImage(4, 8, 0.1)), DomainError);
}
