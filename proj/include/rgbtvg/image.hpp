#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace rgbtvg {

/// Planar float image, values in [0, 1], layout [channel][row][col].
class Image {
 public:
  Image() = default;
  Image(int channels, int height, int width, double fill = 0.0);

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  double& at(int c, int y, int x) { return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x]; }
  double at(int c, int y, int x) const { return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x]; }
  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }
  bool operator==(const Image&) const = default;

 private:
  int channels_ = 0, height_ = 0, width_ = 0;
  std::vector<double> data_;
};

// Binary PPM (P6, 3 channels) / PGM (P5, 1 channel), 8-bit.
Image read_pnm(const std::filesystem::path& path);
void write_pnm(const Image& img, const std::filesystem::path& path);
std::string encode_pnm(const Image& img);

/// Single-channel thermal images are replicated so both modalities feed one
/// three-channel vision tower.
Image to_three_channels(const Image& img);
Image resize_bilinear(const Image& img, int height, int width);
Image flip_horizontal(const Image& img);

}  // namespace rgbtvg
