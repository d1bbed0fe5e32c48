#include "fovstream/contrast.hpp"

#include <cmath>
#include <cstring>
#include <mutex>
#include <numbers>

#include <fftw3.h>

#include "fovstream/errors.hpp"

namespace fovstream {

void LuminanceImage::validate() const {
  if (width <= 0 || height <= 0) throw DomainError("luminance image has empty dimensions");
  if (samples.size() != size_t(width) * height) throw DomainError("luminance image size mismatch");
  for (double s : samples)
    if (!std::isfinite(s) || s < 0.0) throw DomainError("luminance samples must be finite and >= 0");
}

// --- Fft2d -------------------------------------------------------------------

namespace {
// FFTW's planner is not re-entrant.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

struct Fft2d::Impl {
  double* real = nullptr;
  fftw_complex* spec = nullptr;
  fftw_plan fwd = nullptr;
  fftw_plan inv = nullptr;

  ~Impl() {
    std::lock_guard lock(planner_mutex());
    if (fwd) fftw_destroy_plan(fwd);
    if (inv) fftw_destroy_plan(inv);
    fftw_free(real);
    fftw_free(spec);
  }
};

Fft2d::Fft2d(int width, int height) : width_(width), height_(height), impl_(std::make_unique<Impl>()) {
  if (width <= 0 || height <= 0) throw DomainError("Fft2d: empty size");
  std::lock_guard lock(planner_mutex());
  impl_->real = fftw_alloc_real(size_t(width) * height);
  impl_->spec = fftw_alloc_complex(spectrum_size());
  impl_->fwd = fftw_plan_dft_r2c_2d(height, width, impl_->real, impl_->spec, FFTW_ESTIMATE);
  impl_->inv = fftw_plan_dft_c2r_2d(height, width, impl_->spec, impl_->real, FFTW_ESTIMATE);
  if (!impl_->fwd || !impl_->inv) throw std::runtime_error("FFTW planning failed");
}

Fft2d::~Fft2d() = default;

void Fft2d::forward(std::span<const double> image, std::vector<std::complex<double>>& spectrum) {
  std::memcpy(impl_->real, image.data(), sizeof(double) * image.size());
  fftw_execute(impl_->fwd);
  spectrum.resize(spectrum_size());
  std::memcpy(static_cast<void*>(spectrum.data()), impl_->spec, sizeof(fftw_complex) * spectrum_size());
}

void Fft2d::inverse(std::span<const std::complex<double>> spectrum, std::vector<double>& image) {
  std::memcpy(impl_->spec, spectrum.data(), sizeof(fftw_complex) * spectrum_size());
  fftw_execute(impl_->inv);
  image.resize(size_t(width_) * height_);
  std::memcpy(image.data(), impl_->real, sizeof(double) * image.size());
}

// --- FilterBank ----------------------------------------------------------------

namespace {

double band_shape(double rho, double center, bool highpass_tail) {
  if (rho <= 0.0) return 0.0;
  const double t = std::log2(rho / center);
  if (highpass_tail && t >= 0.0) return 1.0;
  if (t <= -1.0 || t >= 1.0) return 0.0;
  return 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

double lowpass_shape(double rho, double first_center) {
  if (rho <= 0.5 * first_center) return 1.0;
  if (rho >= first_center) return 0.0;
  return 0.5 * (1.0 - std::cos(std::numbers::pi * std::log2(rho / first_center)));
}

}  // namespace

FilterBank::FilterBank(int width, int height, const DisplayParams& display, const BandSpec& spec)
    : width_(width), height_(height), pixels_per_degree_(display.pixels_per_degree) {
  if (width <= 0 || height <= 0) throw DomainError("FilterBank: empty image size");
  if (spec.count < 2) throw ConfigError("band spec needs at least 2 bands");
  const double nyquist = 0.5 * display.pixels_per_degree;
  const double top = spec.top_frequency > 0.0 ? spec.top_frequency : display.band_cpd();
  if (top > nyquist * (1.0 + 1e-12))
    throw ConfigError("band frequency " + std::to_string(top) + " cycles/deg is above the Nyquist limit " +
                      std::to_string(nyquist));
  for (int i = 0; i < spec.count; ++i) frequencies_.push_back(top / std::exp2(spec.count - 1 - i));

  const int sw = width / 2 + 1;
  responses_.assign(spec.count + 1, std::vector<double>(size_t(height) * sw));
  for (int ky = 0; ky < height; ++ky) {
    const double fy = double(ky <= height / 2 ? ky : ky - height) / height;
    for (int kx = 0; kx < sw; ++kx) {
      const double fx = double(kx) / width;
      const double rho = pixels_per_degree_ * std::hypot(fx, fy);
      const size_t bin = size_t(ky) * sw + kx;
      for (int b = 0; b <= spec.count; ++b) responses_[b][bin] = response(b, rho);
    }
  }
  kernel_stride_ = (spec.count + 1 + 3) / 4 * 4;
  fft_ = std::make_unique<Fft2d>(width, height);
}

double FilterBank::response(int b, double rho) const {
  const int n = band_count();
  if (b == n) return lowpass_shape(rho, frequencies_.front());
  return band_shape(rho, frequencies_[b], b == n - 1);
}

BandSet FilterBank::decompose(const LuminanceImage& image) const {
  if (image.width != width_ || image.height != height_)
    throw DomainError("decompose: image size does not match the filter bank");
  std::vector<std::complex<double>> spectrum;
  std::vector<std::complex<double>> filtered(fft_->spectrum_size());
  fft_->forward(image.samples, spectrum);

  const double scale = 1.0 / (double(width_) * height_);
  BandSet out;
  out.width = width_;
  out.height = height_;
  out.frequencies = frequencies_;
  out.bands.resize(band_count());
  for (int b = 0; b <= band_count(); ++b) {
    const auto& h = responses_[b];
    for (size_t k = 0; k < filtered.size(); ++k) filtered[k] = spectrum[k] * h[k];
    std::vector<double>& dst = b == band_count() ? out.lowpass : out.bands[b];
    fft_->inverse(filtered, dst);
    for (double& v : dst) v *= scale;
  }
  return out;
}

const std::vector<double>& FilterBank::kernels() const {
  if (!kernels_.empty()) return kernels_;
  const size_t npix = size_t(width_) * height_;
  const double scale = 1.0 / double(npix);
  std::vector<double> kernels(npix * kernel_stride_, 0.0);
  std::vector<std::complex<double>> spec(fft_->spectrum_size());
  std::vector<double> spatial;
  for (int b = 0; b <= band_count(); ++b) {
    for (size_t k = 0; k < spec.size(); ++k) spec[k] = responses_[b][k];
    fft_->inverse(spec, spatial);
    for (size_t p = 0; p < npix; ++p) kernels[p * kernel_stride_ + b] = spatial[p] * scale;
  }
  kernels_ = std::move(kernels);
  return kernels_;
}

// --- contrast ------------------------------------------------------------------

double point_contrast(const BandSet& bands, int x, int y, int band, const ContrastParams& params) {
  if (band < 0 || band >= bands.band_count()) throw DomainError("point_contrast: band index out of range");
  if (x < 0 || y < 0 || x >= bands.width || y >= bands.height)
    throw DomainError("point_contrast: pixel out of bounds");
  const size_t p = size_t(y) * bands.width + x;
  return contrast_ratio(bands.bands[band][p], bands.lowpass[p], params);
}

ContrastField contrast_field(const BandSet& bands, const ContrastParams& params) {
  ContrastField f{bands.width, bands.height, {}};
  f.values.resize(bands.band_count());
  for (int b = 0; b < bands.band_count(); ++b) {
    auto& dst = f.values[b];
    dst.resize(bands.lowpass.size());
    for (size_t p = 0; p < dst.size(); ++p) dst[p] = contrast_ratio(bands.bands[b][p], bands.lowpass[p], params);
  }
  return f;
}

int bands_at_or_below(std::span<const double> frequencies, double band_limit) {
  int n = 0;
  while (n < int(frequencies.size()) && frequencies[n] <= band_limit) ++n;
  return n;
}

std::vector<double> local_sensitivity(Vec2 gaze, const BandSet& bands, const RetinaParams& retina,
                                      const DisplayParams& display, const ContrastParams& params) {
  std::vector<double> weights;
  for (double f : bands.frequencies) weights.push_back(csf(f, display.luminance));
  std::vector<double> out(size_t(bands.width) * bands.height, 0.0);
  for (int y = 0; y < bands.height; ++y)
    for (int x = 0; x < bands.width; ++x) {
      const size_t p = size_t(y) * bands.width + x;
      const int n = bands_at_or_below(bands.frequencies,
                                      clamped_band(retina, gaze, display.pixel_to_degrees(x, y), display));
      double s = 0.0;
      for (int b = 0; b < n; ++b) s += weights[b] * std::abs(contrast_ratio(bands.bands[b][p], bands.lowpass[p], params));
      out[p] = s;
    }
  return out;
}

std::vector<double> local_sensitivity(Vec2 gaze, const LuminanceImage& image, const RetinaParams& retina,
                                      const DisplayParams& display, const BandSpec& spec,
                                      const ContrastParams& params) {
  image.validate();
  FilterBank bank(image.width, image.height, display, spec);
  return local_sensitivity(gaze, bank.decompose(image), retina, display, params);
}

}  // namespace fovstream
