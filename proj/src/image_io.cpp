#include "fovstream/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "fovstream/errors.hpp"

namespace fovstream {

void write_pgm(const std::filesystem::path& path, std::span<const double> values, int width, int height,
               double lo, double hi) {
  if (values.size() != size_t(width) * height) throw DomainError("write_pgm: size mismatch");
  if (lo == hi && !values.empty()) {
    auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    lo = *mn;
    hi = *mx;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P5\n" << width << ' ' << height << "\n255\n";
  const double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;
  std::string row(size_t(width), '\0');
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double v = std::clamp((values[size_t(y) * width + x] - lo) * scale, 0.0, 255.0);
      row[x] = static_cast<char>(static_cast<unsigned char>(std::lround(v)));
    }
    out.write(row.data(), width);
  }
  if (!out) throw IoError("write failed: " + path.string());
}

namespace {

void skip_ws_and_comments(std::istream& in) {
  while (in) {
    const int c = in.peek();
    if (c == '#') {
      std::string discard;
      std::getline(in, discard);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
}

}  // namespace

LuminanceImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "P5") throw IoError(path.string() + ": not a binary PGM");
  int w = 0, h = 0, maxval = 0;
  skip_ws_and_comments(in);
  in >> w;
  skip_ws_and_comments(in);
  in >> h;
  skip_ws_and_comments(in);
  in >> maxval;
  in.get();
  if (!in || w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) throw IoError(path.string() + ": bad PGM header");
  LuminanceImage img(w, h);
  const int bytes = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> buf(size_t(w) * h * bytes);
  in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size()));
  if (!in) throw IoError(path.string() + ": truncated PGM");
  for (size_t i = 0; i < img.size(); ++i) {
    const int v = bytes == 1 ? buf[i] : (buf[2 * i] << 8) | buf[2 * i + 1];
    img.samples[i] = double(v) / maxval;
  }
  return img;
}

}  // namespace fovstream
