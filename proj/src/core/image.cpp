#include "rgbtvg/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace rgbtvg {

Image::Image(int channels, int height, int width, double fill)
    : channels_(channels), height_(height), width_(width),
      data_(static_cast<std::size_t>(channels) * height * width, fill) {
  if (channels <= 0 || height <= 0 || width <= 0) throw std::invalid_argument("Image: non-positive shape");
}

namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& in) {
  std::string tok;
  char c;
  while (in.get(c)) {
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok += c;
  }
  return tok;
}

}  // namespace

Image read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open image " + path.string());
  const std::string magic = header_token(in);
  int channels = 0;
  if (magic == "P6") channels = 3;
  else if (magic == "P5") channels = 1;
  else throw std::runtime_error(path.string() + ": unsupported image format (need binary PPM/PGM)");
  const int width = std::stoi(header_token(in));
  const int height = std::stoi(header_token(in));
  const int maxval = std::stoi(header_token(in));
  if (maxval <= 0 || maxval > 255) throw std::runtime_error(path.string() + ": only 8-bit images are supported");
  std::vector<unsigned char> raw(static_cast<std::size_t>(width) * height * channels);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) throw std::runtime_error(path.string() + ": truncated pixel data");
  Image img(channels, height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < channels; ++c)
        img.at(c, y, x) = raw[(static_cast<std::size_t>(y) * width + x) * channels + c] / static_cast<double>(maxval);
  return img;
}

std::string encode_pnm(const Image& img) {
  if (img.channels() != 1 && img.channels() != 3) throw std::invalid_argument("encode_pnm: need 1 or 3 channels");
  std::ostringstream os;
  os << (img.channels() == 3 ? "P6" : "P5") << "\n" << img.width() << " " << img.height() << "\n255\n";
  std::string out = os.str();
  out.reserve(out.size() + img.data().size());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c) {
        const double v = std::clamp(img.at(c, y, x), 0.0, 1.0);
        out += static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
      }
  return out;
}

void write_pnm(const Image& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write image " + path.string());
  out << encode_pnm(img);
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

Image to_three_channels(const Image& img) {
  if (img.channels() == 3) return img;
  if (img.channels() != 1) throw std::invalid_argument("to_three_channels: need 1 or 3 channels");
  Image out(3, img.height(), img.width());
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) out.at(c, y, x) = img.at(0, y, x);
  return out;
}

Image resize_bilinear(const Image& img, int height, int width) {
  if (img.height() == height && img.width() == width) return img;
  Image out(img.channels(), height, width);
  const double sy = static_cast<double>(img.height()) / height;
  const double sx = static_cast<double>(img.width()) / width;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height() - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height() - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width() - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width() - 1);
      const double wx = fx - x0;
      for (int c = 0; c < img.channels(); ++c) {
        const double top = img.at(c, y0, x0) * (1 - wx) + img.at(c, y0, x1) * wx;
        const double bot = img.at(c, y1, x0) * (1 - wx) + img.at(c, y1, x1) * wx;
        out.at(c, y, x) = top * (1 - wy) + bot * wy;
      }
    }
  }
  return out;
}

Image flip_horizontal(const Image& img) {
  Image out(img.channels(), img.height(), img.width());
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) out.at(c, y, x) = img.at(c, y, img.width() - 1 - x);
  return out;
}

}  // namespace rgbtvg
