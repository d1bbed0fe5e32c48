#pragma once

// Shared fixtures and independent oracles for the unit and acceptance tests.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "fovstream/contrast.hpp"
#include "fovstream/netsim.hpp"
#include "fovstream/perception.hpp"
#include "fovstream/scene.hpp"
#include "fovstream/scheduler.hpp"
#include "fovstream/vision.hpp"

namespace fixtures {

using namespace fovstream;

// --- scalar oracles, written straight from the published formulas -------------------

inline double density_oracle(double r, double a, double r2, double re) {
  const double rc = 14804.6, rm = 41.03;
  return 2.0 * rc * std::pow(1.0 + r / rm, -1.0) * (a * std::pow(1.0 + r / r2, -2.0) + (1.0 - a) * std::exp(-r / re));
}

inline double csf_oracle(double f, double lum) {
  if (f == 0.0) return 0.0;
  const double a = 540.0 * std::pow(1.0 + 0.7 / lum, -0.2) / (1.0 + 1.0 / (1.0 + f / 3.0));
  const double b = 0.3 * std::pow(1.0 + 100.0 / lum, 0.15);
  return a * f * std::exp(-b * f) * std::sqrt(1.0 + 0.06 * std::exp(b * f));
}

// Golden-section peak of csf(., lum) on [lo, hi].
inline double csf_peak_oracle(double lum, double lo = 0.1, double hi = 60.0) {
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int i = 0; i < 200; ++i) {
    const double a = hi - g * (hi - lo), b = lo + g * (hi - lo);
    if (csf_oracle(a, lum) < csf_oracle(b, lum))
      lo = a;
    else
      hi = b;
  }
  return 0.5 * (lo + hi);
}

// Frozen values from an independent double-precision evaluation.
inline constexpr double kFovealSpacing = 0.00624484045541437;  // deg
inline constexpr double kFovealAcuity = 80.06609673534454;     // cycles/deg
inline constexpr double kAcuity10x = 9.51359405337309;         // at (10, 0), symmetric mapping
inline constexpr double kAcuity10y = 7.5553812309942305;       // at (0, 10)
inline constexpr double kAcuity34 = 14.214136577618515;        // at (3, 4)
inline constexpr double kAcuity40x = 2.5228411539587867;       // at (40, 0)
inline constexpr double kCsf4At100 = 441.72052601396194;
inline constexpr double kCsf1At100 = 229.95348121465997;
inline constexpr double kCsfPeakAt100 = 3.8629971697467145;  // cycles/deg
inline constexpr double kPoppingMax = 275.7627687207855;      // default display, 6 bands, omega 10
inline constexpr double kNormLo = -827.2883061623565;

// --- images ----------------------------------------------------------------------------

/// Vertical-bar sinusoid: mean * (1 + michelson * cos(2 pi f x / ppd)).
inline LuminanceImage grating(int w, int h, double cycles_per_deg, double ppd, double mean = 0.5,
                              double michelson = 0.5) {
  LuminanceImage img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      img.at(x, y) = mean * (1.0 + michelson * std::cos(2.0 * std::numbers::pi * cycles_per_deg * x / ppd));
  return img;
}

/// Seeded white-ish texture in [lo, hi].
inline LuminanceImage noise_image(int w, int h, uint64_t seed, double lo = 0.2, double hi = 0.8) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  LuminanceImage img(w, h);
  for (double& s : img.samples) s = u(rng);
  return img;
}

inline double rms(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s / double(v.size()));
}

// --- cameras and scenes ------------------------------------------------------------------

/// Camera at (r cos a, h, r sin a) looking at the origin.
inline Camera orbit_camera(double azimuth_deg, double radius, double height) {
  const double a = azimuth_deg * std::numbers::pi / 180.0;
  Camera cam;
  cam.position = {radius * std::cos(a), height, radius * std::sin(a)};
  cam.forward = normalized(Vec3{} - cam.position);
  const Vec3 side = normalized(cross(cam.forward, Vec3{0.0, 1.0, 0.0}));
  cam.up = cross(side, cam.forward);
  return cam;
}

/// Straight down onto the xz plane, screen-up along -z.
inline Camera top_down_camera(double height) {
  Camera cam;
  cam.position = {0.0, height, 0.0};
  cam.forward = {0.0, -1.0, 0.0};
  cam.up = {0.0, 0.0, -1.0};
  return cam;
}

inline SceneAsset terrain_scene(int coarse_cells = 19, int levels = 4, uint64_t seed = 7) {
  TerrainParams p;
  p.coarse_cells = coarse_cells;
  p.levels = levels;
  p.seed = seed;
  return build_lod_ladder(generate_terrain(p), levels);
}

/// One coarse cell split into two triangle units; vertex grays are hashed from the grid
/// position so every finer level adds detail the coarser one cannot interpolate.
inline SceneAsset two_unit_scene(int levels = 3, double size = 8.0) {
  Heightfield f;
  f.nx = f.nz = (1 << (levels - 1)) + 1;
  f.spacing = size / (f.nx - 1);
  f.heights.assign(size_t(f.nx) * f.nz, 0.0);
  f.colors.resize(f.heights.size());
  for (int j = 0; j < f.nz; ++j)
    for (int i = 0; i < f.nx; ++i) {
      const uint8_t c = uint8_t(40 + (i * 37 + j * 91 + i * j * 53) % 171);
      f.colors[size_t(j) * f.nx + i] = {c, c, c};
    }
  return build_lod_ladder(f, levels);
}

/// Byte-only ladder for planner tests; unit u level k costs a strictly increasing payload.
inline SceneAsset random_ladder(std::mt19937_64& rng, int units, int levels) {
  SceneAsset a;
  a.level_count = levels;
  std::uniform_int_distribution<uint64_t> base(50, 400);
  for (int u = 0; u < units; ++u) {
    Unit unit;
    unit.id = uint32_t(u);
    uint64_t b = base(rng);
    for (int k = 0; k < levels; ++k) {
      UnitLevel lvl;
      lvl.bytes = b;
      unit.levels.push_back(lvl);
      b = b * 2 + base(rng);
    }
    a.units.push_back(unit);
  }
  return a;
}

/// Best total sensitivity over every level assignment that fits the budget (levels reached
/// from `state`; each unit's gain is the sum of its step sensitivities).
inline double exhaustive_best(const SceneAsset& asset, const LoDState& state, const std::vector<double>& table,
                              uint64_t budget) {
  const int n = int(asset.units.size());
  const int steps = asset.level_count - 1;
  std::vector<int> target(state.begin(), state.end());
  double best = 0.0;
  // Odometer over targets in [state[u], max].
  while (true) {
    uint64_t bytes = 0;
    double gain = 0.0;
    for (int u = 0; u < n; ++u)
      for (int l = state[u]; l < target[u]; ++l) {
        bytes += asset.units[u].step_bytes(l);
        gain += table[size_t(u) * steps + l];
      }
    if (bytes <= budget) best = std::max(best, gain);
    int u = 0;
    while (u < n && target[u] == asset.units[u].max_level()) {
      target[u] = state[u];
      ++u;
    }
    if (u == n) break;
    ++target[u];
  }
  return best;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("fovstream_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fixtures
