#pragma once

#include <algorithm>
#include <complex>
#include <memory>
#include <span>
#include <vector>

#include "fovstream/geometry.hpp"
#include "fovstream/vision.hpp"

namespace fovstream {

/// Row-major luminance, normalized so 1.0 is the display's peak (DisplayParams::luminance).
struct LuminanceImage {
  int width = 0;
  int height = 0;
  std::vector<double> samples;

  LuminanceImage() = default;
  LuminanceImage(int w, int h, double fill = 0.0) : width(w), height(h), samples(size_t(w) * h, fill) {}

  double& at(int x, int y) { return samples[size_t(y) * width + x]; }
  double at(int x, int y) const { return samples[size_t(y) * width + x]; }
  size_t size() const { return samples.size(); }

  /// Throws DomainError on empty dimensions or negative/non-finite samples.
  void validate() const;

  friend bool operator==(const LuminanceImage&, const LuminanceImage&) = default;
};

/// Octave band layout: `count` bands whose centers sit at top_frequency / 2^(count-1-i).
struct BandSpec {
  int count = 6;
  double top_frequency = 0.0;  // cycles/deg; <= 0 selects the display band
};

struct ContrastParams {
  double dc_floor = 1e-4;         // lower guard on the local mean, fraction of peak luminance
  double contrast_ceiling = 1.0;  // |point contrast| saturates here
};

/// Per-band responses G_i plus the residual low-pass G_0 of one image.
struct BandSet {
  int width = 0;
  int height = 0;
  std::vector<double> frequencies;           // band centers, cycles/deg, ascending
  std::vector<std::vector<double>> bands;    // [band][pixel]
  std::vector<double> lowpass;               // [pixel]

  int band_count() const { return static_cast<int>(bands.size()); }
};

/// Real-to-complex 2-D DFT of a fixed size (thin RAII wrapper over FFTW plans).
class Fft2d {
 public:
  Fft2d(int width, int height);
  ~Fft2d();
  Fft2d(const Fft2d&) = delete;
  Fft2d& operator=(const Fft2d&) = delete;

  int spectrum_width() const { return width_ / 2 + 1; }
  size_t spectrum_size() const { return size_t(height_) * spectrum_width(); }

  void forward(std::span<const double> image, std::vector<std::complex<double>>& spectrum);
  /// Unnormalized inverse; the caller divides by width*height.
  void inverse(std::span<const std::complex<double>> spectrum, std::vector<double>& image);

 private:
  struct Impl;
  int width_;
  int height_;
  std::unique_ptr<Impl> impl_;
};

/// Bank of cosine-log octave filters for one image size and display. The top band is a
/// high-pass residual so low-pass + all bands reconstructs the input exactly.
class FilterBank {
 public:
  FilterBank(int width, int height, const DisplayParams& display, const BandSpec& spec);

  int width() const { return width_; }
  int height() const { return height_; }
  int band_count() const { return static_cast<int>(frequencies_.size()); }
  const std::vector<double>& frequencies() const { return frequencies_; }

  /// Frequency response of band `b` at radial frequency rho (cycles/deg). b == band_count()
  /// selects the low-pass.
  double response(int b, double rho) const;

  BandSet decompose(const LuminanceImage& image) const;

  /// Spatial kernels of every band plus the low-pass, interleaved as
  /// kernels()[offset * kernel_stride() + b]; offset = dy * width + dx (circular).
  const std::vector<double>& kernels() const;
  int kernel_stride() const { return kernel_stride_; }

 private:
  int width_;
  int height_;
  double pixels_per_degree_;
  std::vector<double> frequencies_;
  std::vector<std::vector<double>> responses_;  // [band | lowpass][spectrum bin]
  int kernel_stride_;
  mutable std::unique_ptr<Fft2d> fft_;
  mutable std::vector<double> kernels_;
};

/// G_band(x) / max(G_0(x), dc_floor), saturated at +-contrast_ceiling.
double point_contrast(const BandSet& bands, int x, int y, int band, const ContrastParams& params = {});

/// Same quantity from raw responses; shared by every contrast consumer.
inline double contrast_ratio(double band_response, double lowpass, const ContrastParams& params) {
  const double c = band_response / std::max(lowpass, params.dc_floor);
  return std::clamp(c, -params.contrast_ceiling, params.contrast_ceiling);
}

/// Per-pixel, per-band contrast values, laid out [band][pixel].
struct ContrastField {
  int width = 0;
  int height = 0;
  std::vector<std::vector<double>> values;
};

ContrastField contrast_field(const BandSet& bands, const ContrastParams& params = {});

/// Number of bands (a prefix of the ascending band list) at or below `band_limit`.
int bands_at_or_below(std::span<const double> frequencies, double band_limit);

/// Gaze- and content-aware sensitivity: sum over bands at or below the clamped band of
/// csf(nu_i, L) * |c(x, nu_i)|. Non-negative.
std::vector<double> local_sensitivity(Vec2 gaze, const BandSet& bands, const RetinaParams& retina,
                                      const DisplayParams& display, const ContrastParams& params = {});

std::vector<double> local_sensitivity(Vec2 gaze, const LuminanceImage& image, const RetinaParams& retina,
                                      const DisplayParams& display, const BandSpec& spec = {},
                                      const ContrastParams& params = {});

}  // namespace fovstream
