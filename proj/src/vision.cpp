#include "fovstream/vision.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include <nlohmann/json.hpp>

#include "fovstream/errors.hpp"

namespace fovstream {

namespace {

double rad_to_deg(double r) { return r * 180.0 / std::numbers::pi; }

double horizontal_density(const RetinaParams& retina, double r, double x) {
  if (retina.mapping == MeridianMapping::per_quadrant)
    return ganglion_density(retina, r, x >= 0.0 ? Meridian::temporal : Meridian::nasal);
  return 0.5 * (ganglion_density(retina, r, Meridian::temporal) +
                ganglion_density(retina, r, Meridian::nasal));
}

double vertical_density(const RetinaParams& retina, double r, double y) {
  if (retina.mapping == MeridianMapping::per_quadrant)
    return ganglion_density(retina, r, y >= 0.0 ? Meridian::superior : Meridian::inferior);
  return 0.5 * (ganglion_density(retina, r, Meridian::superior) +
                ganglion_density(retina, r, Meridian::inferior));
}

}  // namespace

void RetinaParams::validate() const {
  if (!(rho_cone > 0.0)) throw ConfigError("retina: rho_cone must be > 0");
  if (!(falloff_scale > 0.0)) throw ConfigError("retina: falloff_scale must be > 0");
  for (const auto& fit : meridians) {
    if (!(fit.a > 0.0 && fit.a <= 1.0)) throw ConfigError("retina: meridian a must lie in (0,1]");
    if (!(fit.r2 > 0.0) || !(fit.re > 0.0)) throw ConfigError("retina: meridian r2/re must be > 0");
  }
}

void DisplayParams::validate() const {
  if (!(display_band > 0.0 && display_band <= 0.5))
    throw ConfigError("display: display_band must lie in (0, 0.5] cycles/pixel");
  if (!(pixels_per_degree > 0.0)) throw ConfigError("display: pixels_per_degree must be > 0");
  if (!(luminance > 0.0)) throw ConfigError("display: luminance must be > 0");
  if (width <= 0 || height <= 0) throw ConfigError("display: resolution must be positive");
  if (!(vertical_fov > 0.0 && vertical_fov < 180.0))
    throw ConfigError("display: vertical_fov must lie in (0, 180) deg");
}

Vec2 DisplayParams::screen_to_degrees(double u, double v) const {
  const double dx = u - 0.5 * width;
  const double dy = 0.5 * height - v;
  if (angle_mapping == AngleMapping::linear) return {dx / pixels_per_degree, dy / pixels_per_degree};
  const double focal = 0.5 * height / std::tan(vertical_fov * std::numbers::pi / 360.0);
  return {rad_to_deg(std::atan(dx / focal)), rad_to_deg(std::atan(dy / focal))};
}

double ganglion_density(const RetinaParams& retina, double r, Meridian m) {
  if (!(r >= 0.0) || !std::isfinite(r)) throw DomainError("ganglion_density: eccentricity must be finite and >= 0");
  const MeridianFit& fit = retina.meridians[static_cast<int>(m)];
  const double outer = 2.0 * retina.rho_cone / (1.0 + r / retina.falloff_scale);
  const double near = fit.a / ((1.0 + r / fit.r2) * (1.0 + r / fit.r2));
  const double far = (1.0 - fit.a) * std::exp(-r / fit.re);
  return outer * (near + far);
}

double receptor_spacing(const RetinaParams& retina, double x, double y) {
  if (!std::isfinite(x) || !std::isfinite(y)) throw DomainError("receptor_spacing: non-finite offset");
  static const double kHex = 2.0 / std::sqrt(3.0);
  const double r = std::hypot(x, y);
  if (r == 0.0) return std::sqrt(kHex / (2.0 * retina.rho_cone));
  const double sum = x * x / horizontal_density(retina, r, x) + y * y / vertical_density(retina, r, y);
  return std::sqrt(kHex * sum) / r;
}

double acuity_importance(const RetinaParams& retina, Vec2 offset) {
  return 0.5 / receptor_spacing(retina, offset.x, offset.y);
}

double csf(double freq, double luminance) {
  if (!(freq >= 0.0) || !std::isfinite(freq)) throw DomainError("csf: frequency must be finite and >= 0");
  if (!(luminance > 0.0)) throw DomainError("csf: luminance must be > 0");
  if (freq == 0.0) return 0.0;
  const double a = 540.0 * std::pow(1.0 + 0.7 / luminance, -0.2) / (1.0 + 1.0 / (1.0 + freq / 3.0));
  const double b = 0.3 * std::pow(1.0 + 100.0 / luminance, 0.15);
  const double c = 0.06;
  return a * freq * std::exp(-b * freq) * std::sqrt(1.0 + c * std::exp(b * freq));
}

double clamped_band(const RetinaParams& retina, Vec2 gaze, Vec2 pixel, const DisplayParams& display) {
  return std::min(display.band_cpd(), acuity_importance(retina, gaze - pixel));
}

// --- serialization ---------------------------------------------------------

namespace {

const char* kMeridianNames[4] = {"temporal", "superior", "nasal", "inferior"};

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) it->get_to(out);
}

}  // namespace

void to_json(nlohmann::json& j, const RetinaParams& p) {
  j = nlohmann::json{{"rho_cone", p.rho_cone},
                     {"falloff_scale", p.falloff_scale},
                     {"mapping", p.mapping == MeridianMapping::symmetric ? "symmetric" : "per_quadrant"}};
  for (int m = 0; m < 4; ++m)
    j["meridians"][kMeridianNames[m]] = {
        {"a", p.meridians[m].a}, {"r2", p.meridians[m].r2}, {"re", p.meridians[m].re}};
}

void from_json(const nlohmann::json& j, RetinaParams& p) {
  read_opt(j, "rho_cone", p.rho_cone);
  read_opt(j, "falloff_scale", p.falloff_scale);
  if (auto it = j.find("mapping"); it != j.end()) {
    const auto s = it->get<std::string>();
    if (s == "symmetric")
      p.mapping = MeridianMapping::symmetric;
    else if (s == "per_quadrant")
      p.mapping = MeridianMapping::per_quadrant;
    else
      throw ConfigError("retina: unknown meridian mapping '" + s + "'");
  }
  if (auto it = j.find("meridians"); it != j.end()) {
    if (!it->is_object() || it->size() != 4)
      throw ConfigError("retina: 'meridians' must hold exactly temporal, superior, nasal, inferior");
    for (int m = 0; m < 4; ++m) {
      const auto& e = it->at(kMeridianNames[m]);
      p.meridians[m] = {e.at("a").get<double>(), e.at("r2").get<double>(), e.at("re").get<double>()};
    }
  }
}

void to_json(nlohmann::json& j, const DisplayParams& p) {
  j = nlohmann::json{{"luminance", p.luminance},
                     {"display_band", p.display_band},
                     {"pixels_per_degree", p.pixels_per_degree},
                     {"width", p.width},
                     {"height", p.height},
                     {"vertical_fov", p.vertical_fov},
                     {"angle_mapping", p.angle_mapping == AngleMapping::linear ? "linear" : "tangent"}};
}

void from_json(const nlohmann::json& j, DisplayParams& p) {
  read_opt(j, "luminance", p.luminance);
  read_opt(j, "display_band", p.display_band);
  read_opt(j, "pixels_per_degree", p.pixels_per_degree);
  read_opt(j, "width", p.width);
  read_opt(j, "height", p.height);
  read_opt(j, "vertical_fov", p.vertical_fov);
  if (auto it = j.find("angle_mapping"); it != j.end()) {
    const auto s = it->get<std::string>();
    if (s == "linear")
      p.angle_mapping = AngleMapping::linear;
    else if (s == "tangent")
      p.angle_mapping = AngleMapping::tangent;
    else
      throw ConfigError("display: unknown angle_mapping '" + s + "'");
  }
}

void load_vision_params(const std::filesystem::path& path, RetinaParams& retina, DisplayParams& display) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open parameter file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    if (auto it = j.find("retina"); it != j.end()) it->get_to(retina);
    if (auto it = j.find("display"); it != j.end()) it->get_to(display);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  retina.validate();
  display.validate();
}

}  // namespace fovstream
