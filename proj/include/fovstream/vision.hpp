#pragma once

#include <array>
#include <filesystem>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "fovstream/geometry.hpp"

namespace fovstream {

/// The four visual-field meridians of the retinal density model.
enum class Meridian : int { temporal = 0, superior = 1, nasal = 2, inferior = 3 };

struct MeridianFit {
  double a = 0.0;   // unitless fraction
  double r2 = 0.0;  // deg
  double re = 0.0;  // deg
};

/// How the horizontal/vertical density terms of the spacing formula pick meridians.
///  - symmetric: horizontal = mean(temporal, nasal) density, vertical = mean(superior, inferior)
///  - per_quadrant: x >= 0 -> temporal, x < 0 -> nasal, y >= 0 -> superior, y < 0 -> inferior
enum class MeridianMapping { symmetric, per_quadrant };

/// Midget ganglion cell density parameters. Defaults are Watson's (2014) fitted values.
struct RetinaParams {
  double rho_cone = 14804.6;  // deg^-2
  std::array<MeridianFit, 4> meridians{{
      {0.9851, 1.058, 22.14},  // temporal
      {0.9935, 1.035, 16.35},  // superior
      {0.9729, 1.084, 7.633},  // nasal
      {0.9960, 0.9932, 12.13},  // inferior
  }};
  double falloff_scale = 41.03;  // deg
  MeridianMapping mapping = MeridianMapping::symmetric;

  void validate() const;
};

/// Linear uses pixels_per_degree everywhere (small-angle); tangent projects through
/// the pinhole implied by vertical_fov.
enum class AngleMapping { linear, tangent };

struct DisplayParams {
  double luminance = 100.0;          // cd/m^2, constant display luminance
  double display_band = 0.5;         // cycles per pixel
  double pixels_per_degree = 14.0;   // px/deg
  int width = 128;                   // px
  int height = 128;                  // px
  double vertical_fov = 128.0 / 14.0;  // deg
  AngleMapping angle_mapping = AngleMapping::linear;

  void validate() const;

  /// Display band expressed in cycles per degree.
  double band_cpd() const { return display_band * pixels_per_degree; }

  /// Visual angle (deg) of a continuous screen position; (0,0) is the top-left corner,
  /// +x right and +y up in the returned angles, origin at the screen center.
  Vec2 screen_to_degrees(double u, double v) const;

  /// Angle of a pixel center.
  Vec2 pixel_to_degrees(int px, int py) const { return screen_to_degrees(px + 0.5, py + 0.5); }
};

/// Midget ganglion cell density rho(r, m) in deg^-2. Throws DomainError for r < 0.
double ganglion_density(const RetinaParams& retina, double r, Meridian m);

/// Receptor spacing sigma(x, y) in degrees; the analytic limit at the origin.
double receptor_spacing(const RetinaParams& retina, double x, double y);

/// Retinal acuity band M(offset) = 0.5 / sigma(offset), cycles/deg.
double acuity_importance(const RetinaParams& retina, Vec2 offset);

/// Barten contrast sensitivity. Throws DomainError for freq < 0 or luminance <= 0.
double csf(double freq, double luminance);

/// min(display band, retinal band at gaze - pixel), cycles/deg.
double clamped_band(const RetinaParams& retina, Vec2 gaze, Vec2 pixel, const DisplayParams& display);

void to_json(nlohmann::json& j, const RetinaParams& p);
void from_json(const nlohmann::json& j, RetinaParams& p);
void to_json(nlohmann::json& j, const DisplayParams& p);
void from_json(const nlohmann::json& j, DisplayParams& p);

/// Reads a parameter file holding optional "retina" and "display" objects. Missing keys
/// keep their defaults. Throws ConfigError / IoError.
void load_vision_params(const std::filesystem::path& path, RetinaParams& retina, DisplayParams& display);

}  // namespace fovstream
