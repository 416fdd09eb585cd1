#include "rgbtvg/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace rgbtvg {

ImageDims::ImageDims(int w, int h) : width(w), height(h) {
  if (w <= 0 || h <= 0) throw GeometryError("image dims must be positive, got " + std::to_string(w) + "x" + std::to_string(h));
}

PixelBox::PixelBox(double x, double y, double w, double h) : x_(x), y_(y), w_(w), h_(h) {
  if (!(std::isfinite(x) && std::isfinite(y) && std::isfinite(w) && std::isfinite(h)))
    throw GeometryError("box has non-finite component");
  if (!(w > 0.0) || !(h > 0.0)) throw GeometryError("box width and height must be positive: " + to_string());
  if (x < 0.0 || y < 0.0) throw GeometryError("box origin must be non-negative: " + to_string());
}

PixelBox PixelBox::from_corners(double x1, double y1, double x2, double y2) { return {x1, y1, x2 - x1, y2 - y1}; }

bool PixelBox::fits(const ImageDims& dims) const { return x2() <= dims.width && y2() <= dims.height; }

std::string PixelBox::to_string() const {
  std::ostringstream os;
  os << "[" << x_ << ", " << y_ << ", " << w_ << ", " << h_ << "]";
  return os.str();
}

NormBox::NormBox(double cx_, double cy_, double w_, double h_) : cx(cx_), cy(cy_), w(w_), h(h_) {
  for (double v : {cx, cy, w, h})
    if (!(v >= 0.0 && v <= 1.0)) throw GeometryError("normalized box component outside [0, 1]");
}

bool NormBox::within_frame(double eps) const {
  return cx - w / 2 >= -eps && cx + w / 2 <= 1 + eps && cy - h / 2 >= -eps && cy + h / 2 <= 1 + eps;
}

double iou(const PixelBox& a, const PixelBox& b) {
  const double iw = std::min(a.x2(), b.x2()) - std::max(a.x(), b.x());
  const double ih = std::min(a.y2(), b.y2()) - std::max(a.y(), b.y());
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  // Areas from the same corner differences as the overlap, so iou(a, a) is exactly 1.
  const double area_a = (a.x2() - a.x()) * (a.y2() - a.y());
  const double area_b = (b.x2() - b.x()) * (b.y2() - b.y());
  const double inter = iw * ih;
  return inter / (area_a + area_b - inter);
}

double giou(const PixelBox& a, const PixelBox& b) {
  const double iw = std::max(0.0, std::min(a.x2(), b.x2()) - std::max(a.x(), b.x()));
  const double ih = std::max(0.0, std::min(a.y2(), b.y2()) - std::max(a.y(), b.y()));
  const double inter = iw * ih;
  const double uni = (a.x2() - a.x()) * (a.y2() - a.y()) + (b.x2() - b.x()) * (b.y2() - b.y()) - inter;
  const double enclosing =
      (std::max(a.x2(), b.x2()) - std::min(a.x(), b.x())) * (std::max(a.y2(), b.y2()) - std::min(a.y(), b.y()));
  return inter / uni - (enclosing - uni) / enclosing;
}

double acc_at_threshold(std::span<const PixelBox> preds, std::span<const PixelBox> gts, double threshold) {
  if (preds.size() != gts.size())
    throw GeometryError("acc_at_threshold: " + std::to_string(preds.size()) + " predictions vs " +
                        std::to_string(gts.size()) + " ground truths");
  if (preds.empty()) throw GeometryError("acc_at_threshold: empty input");
  if (!(threshold > 0.0 && threshold < 1.0)) throw GeometryError("acc_at_threshold: threshold must be in (0, 1)");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i)
    if (is_hit(iou(preds[i], gts[i]), threshold)) ++hits;
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

NormBox to_norm(const PixelBox& b, const ImageDims& dims) {
  if (dims.width <= 0 || dims.height <= 0) throw GeometryError("to_norm: zero-dimension image");
  const double W = dims.width, H = dims.height;
  return {(b.x() + b.w() / 2) / W, (b.y() + b.h() / 2) / H, b.w() / W, b.h() / H};
}

PixelBox to_pixel(const NormBox& n, const ImageDims& dims) {
  if (dims.width <= 0 || dims.height <= 0) throw GeometryError("to_pixel: zero-dimension image");
  const double W = dims.width, H = dims.height;
  const double w = n.w * W, h = n.h * H;
  return {std::max(0.0, n.cx * W - w / 2), std::max(0.0, n.cy * H - h / 2), w, h};
}

std::optional<PixelBox> to_pixel_clipped(const NormBox& n, const ImageDims& dims) {
  if (dims.width <= 0 || dims.height <= 0) throw GeometryError("to_pixel: zero-dimension image");
  const double W = dims.width, H = dims.height;
  const double x1 = std::clamp((n.cx - n.w / 2) * W, 0.0, W);
  const double y1 = std::clamp((n.cy - n.h / 2) * H, 0.0, H);
  const double x2 = std::clamp((n.cx + n.w / 2) * W, 0.0, W);
  const double y2 = std::clamp((n.cy + n.h / 2) * H, 0.0, H);
  if (!(x2 > x1) || !(y2 > y1)) return std::nullopt;
  return PixelBox::from_corners(x1, y1, x2, y2);
}

}  // namespace rgbtvg
