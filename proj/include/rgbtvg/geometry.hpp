#pragma once

// Box geometry and the Acc@threshold metric.

#include <optional>
#include <span>
#include <stdexcept>
#include <string>

namespace rgbtvg {

class GeometryError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ImageDims {
  int width = 0;
  int height = 0;

  ImageDims() = default;
  ImageDims(int w, int h);
  double area() const { return static_cast<double>(width) * static_cast<double>(height); }
  bool operator==(const ImageDims&) const = default;
};

/// Pixel box, top-left corner plus extent. Width and height are strictly positive.
class PixelBox {
 public:
  PixelBox(double x, double y, double w, double h);
  static PixelBox from_corners(double x1, double y1, double x2, double y2);

  double x() const { return x_; }
  double y() const { return y_; }
  double w() const { return w_; }
  double h() const { return h_; }
  double x2() const { return x_ + w_; }
  double y2() const { return y_ + h_; }
  double area() const { return w_ * h_; }
  bool fits(const ImageDims& dims) const;
  std::string to_string() const;

  bool operator==(const PixelBox&) const = default;

 private:
  double x_, y_, w_, h_;
};

/// Normalized center-form box. Components lie in [0, 1].
struct NormBox {
  double cx, cy, w, h;

  NormBox(double cx, double cy, double w, double h);
  // Corner extents stay inside [-eps, 1 + eps].
  bool within_frame(double eps = 1e-6) const;
  bool operator==(const NormBox&) const = default;
};

double iou(const PixelBox& a, const PixelBox& b);
// Generalized IoU: IoU - (enclosing - union) / enclosing.
double giou(const PixelBox& a, const PixelBox& b);

/// Fraction of pairs whose IoU strictly exceeds `threshold`.
double acc_at_threshold(std::span<const PixelBox> preds, std::span<const PixelBox> gts, double threshold = 0.5);
inline bool is_hit(double iou_value, double threshold = 0.5) { return iou_value > threshold; }

NormBox to_norm(const PixelBox& b, const ImageDims& dims);
PixelBox to_pixel(const NormBox& n, const ImageDims& dims);
// Predicted boxes may extend past the frame; clip to the image and return
// nullopt when nothing of positive area remains.
std::optional<PixelBox> to_pixel_clipped(const NormBox& n, const ImageDims& dims);

}  // namespace rgbtvg
