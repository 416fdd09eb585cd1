#include <random>
#include <vector>

#include "doctest.h"
#include "rgbtvg/geometry.hpp"
#include "rgbtvg/oracles.hpp"

using namespace rgbtvg;

namespace {

PixelBox random_box(std::mt19937_64& rng, double frame = 640) {
  std::uniform_real_distribution<double> u(0, 1);
  const double x = u(rng) * (frame - 2), y = u(rng) * (frame - 2);
  return PixelBox(x, y, 1 + u(rng) * (frame - x - 1), 1 + u(rng) * (frame - y - 1));
}

}  // namespace

TEST_CASE("iou worked values") {
  CHECK(iou(PixelBox(0, 0, 10, 10), PixelBox(0, 0, 10, 10)) == 1.0);
  CHECK(iou(PixelBox(0, 0, 1, 1), PixelBox(5, 5, 1, 1)) == 0.0);
  CHECK(iou(PixelBox(0, 0, 2, 2), PixelBox(1, 1, 2, 2)) == doctest::Approx(1.0 / 7.0).epsilon(1e-15));
  // Touching edges share no area.
  CHECK(iou(PixelBox(0, 0, 2, 2), PixelBox(2, 0, 2, 2)) == 0.0);
}

TEST_CASE("iou against the rasterized oracle") {
  const double r = oracle::iou_rasterized(PixelBox(0, 0, 2, 2), PixelBox(1, 1, 2, 2), 100);
  CHECK(std::abs(r - 1.0 / 7.0) < 1e-3);
  CHECK(oracle::iou_rasterized(PixelBox(3, 4, 5, 6), PixelBox(3, 4, 5, 6), 1) == 1.0);
  CHECK(oracle::iou_rasterized(PixelBox(3, 4, 5, 6), PixelBox(3, 4, 5, 6), 7) == 1.0);

  std::mt19937_64 rng(3);
  for (int i = 0; i < 1000; ++i) {
    const int x1 = static_cast<int>(rng() % 60), y1 = static_cast<int>(rng() % 60);
    const int x2 = static_cast<int>(rng() % 60), y2 = static_cast<int>(rng() % 60);
    const PixelBox a(x1, y1, 1 + static_cast<int>(rng() % (64 - x1)), 1 + static_cast<int>(rng() % (64 - y1)));
    const PixelBox b(x2, y2, 1 + static_cast<int>(rng() % (64 - x2)), 1 + static_cast<int>(rng() % (64 - y2)));
    const auto c = oracle::raster_counts(a, b, 1);
    CHECK(std::abs(iou(a, b) - static_cast<double>(c.inter) / static_cast<double>(c.uni)) <= 2.0 / static_cast<double>(c.uni));
  }
}

TEST_CASE("rasterized iou converges off the lattice") {
  const PixelBox a(0.33, 0.71, 2.05, 1.4), b(1.1, 0.2, 1.9, 2.3);
  const double exact = iou(a, b);
  double prev = 1.0;
  for (int scale : {10, 100, 1000}) {
    const double err = std::abs(oracle::iou_rasterized(a, b, scale) - exact);
    CHECK(err <= prev);
    prev = err;
  }
  CHECK(prev < 2e-3);
}

TEST_CASE("iou symmetry and self identity") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 1000; ++i) {
    const PixelBox a = random_box(rng), b = random_box(rng);
    CHECK(iou(a, b) == iou(b, a));
    CHECK(iou(a, a) == 1.0);
    const double v = iou(a, b);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("giou bounds") {
  CHECK(giou(PixelBox(0, 0, 2, 2), PixelBox(0, 0, 2, 2)) == 1.0);
  // Far apart boxes approach -1.
  CHECK(giou(PixelBox(0, 0, 1, 1), PixelBox(99, 99, 1, 1)) < -0.99);
  std::mt19937_64 rng(6);
  for (int i = 0; i < 200; ++i) {
    const PixelBox a = random_box(rng), b = random_box(rng);
    CHECK(giou(a, b) <= iou(a, b) + 1e-15);
    CHECK(giou(a, b) >= -1.0);
  }
}

TEST_CASE("boxes with non-positive extent are rejected") {
  CHECK_THROWS_AS(PixelBox(0, 0, 0, 1), GeometryError);
  CHECK_THROWS_AS(PixelBox(0, 0, 1, -1), GeometryError);
  CHECK_THROWS_AS(PixelBox::from_corners(5, 5, 5, 9), GeometryError);
  CHECK_THROWS_AS(ImageDims(0, 10), GeometryError);
  CHECK_THROWS_AS(NormBox(0.5, 0.5, 1.2, 0.5), GeometryError);
}

TEST_CASE("acc_at_threshold") {
  const std::vector<PixelBox> same = {PixelBox(0, 0, 4, 4), PixelBox(1, 1, 2, 2)};
  CHECK(acc_at_threshold(same, same) == 1.0);
  const std::vector<PixelBox> p1 = {PixelBox(0, 0, 2, 2)}, g1 = {PixelBox(1, 1, 2, 2)};
  CHECK(acc_at_threshold(p1, g1, 0.5) == 0.0);

  // IoUs 1.0, 0.6 and 0.4 against a 10x10 ground truth.
  const PixelBox gt(0, 0, 10, 10);
  const std::vector<PixelBox> preds = {gt, PixelBox(0, 0, 10, 6), PixelBox(0, 0, 10, 4)};
  const std::vector<PixelBox> gts = {gt, gt, gt};
  CHECK(iou(preds[1], gt) == doctest::Approx(0.6));
  CHECK(iou(preds[2], gt) == doctest::Approx(0.4));
  CHECK(acc_at_threshold(preds, gts, 0.5) == doctest::Approx(2.0 / 3.0));

  SUBCASE("exactly 0.5 is a miss") {
    const std::vector<PixelBox> half = {PixelBox(0, 0, 10, 5)};
    const std::vector<PixelBox> g = {gt};
    CHECK(iou(half[0], gt) == 0.5);
    CHECK(acc_at_threshold(half, g, 0.5) == 0.0);
    CHECK_FALSE(is_hit(0.5));
  }
  SUBCASE("monotone in threshold") {
    std::mt19937_64 rng(8);
    std::vector<PixelBox> p, g;
    for (int i = 0; i < 200; ++i) {
      p.push_back(random_box(rng, 64));
      g.push_back(random_box(rng, 64));
    }
    double prev = 1.0;
    for (double th = 0.05; th < 1.0; th += 0.05) {
      const double a = acc_at_threshold(p, g, th);
      CHECK(a <= prev);
      prev = a;
    }
  }
  SUBCASE("errors") {
    const std::vector<PixelBox> none;
    CHECK_THROWS(acc_at_threshold(none, none));
    CHECK_THROWS(acc_at_threshold(preds, g1));
  }
}

TEST_CASE("normalized conversions") {
  const ImageDims d(640, 512);
  const NormBox full = to_norm(PixelBox(0, 0, 640, 512), d);
  CHECK(full == NormBox(0.5, 0.5, 1, 1));
  const NormBox q = to_norm(PixelBox(160, 128, 320, 256), d);
  CHECK(q == NormBox(0.5, 0.5, 0.5, 0.5));

  std::mt19937_64 rng(9);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    const PixelBox b = random_box(rng, 512);
    const PixelBox back = to_pixel(to_norm(b, d), d);
    for (auto [u, v] : {std::pair{b.x(), back.x()}, {b.y(), back.y()}, {b.w(), back.w()}, {b.h(), back.h()}})
      worst = std::max(worst, std::abs(u - v) / std::max(std::abs(u), 1e-300));
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("clipping predictions to the frame") {
  const ImageDims d(100, 100);
  const auto inside = to_pixel_clipped(NormBox(0.5, 0.5, 0.2, 0.2), d);
  REQUIRE(inside);
  CHECK(*inside == PixelBox(40, 40, 20, 20));
  const auto edge = to_pixel_clipped(NormBox(0.0, 0.5, 0.4, 0.2), d);
  REQUIRE(edge);
  CHECK(edge->x() == 0.0);
  CHECK(edge->w() == doctest::Approx(20.0));
  CHECK_FALSE(to_pixel_clipped(NormBox(0.0, 0.0, 0.0, 0.5), d));
}
