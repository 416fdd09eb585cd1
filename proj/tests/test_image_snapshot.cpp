#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "rgbtvg/image.hpp"
#include "rgbtvg/snapshot.hpp"

using namespace rgbtvg;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("rgbtvg-test-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
}

}  // namespace

TEST_CASE("pnm round trip keeps 8-bit values") {
  const auto dir = scratch_dir("pnm");
  Image rgb(3, 5, 7);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 5; ++y)
      for (int x = 0; x < 7; ++x) rgb.at(c, y, x) = ((c * 31 + y * 7 + x * 3) % 256) / 255.0;
  write_pnm(rgb, dir / "a.ppm");
  const Image back = read_pnm(dir / "a.ppm");
  CHECK(back.channels() == 3);
  CHECK(back.height() == 5);
  CHECK(back.width() == 7);
  for (std::size_t i = 0; i < rgb.data().size(); ++i) CHECK(back.data()[i] == doctest::Approx(rgb.data()[i]).epsilon(1e-12));

  Image gray(1, 2, 3, 0.5);
  write_pnm(gray, dir / "g.pgm");
  const Image g = read_pnm(dir / "g.pgm");
  CHECK(g.channels() == 1);
  CHECK(g.at(0, 1, 2) == doctest::Approx(128.0 / 255.0));
}

TEST_CASE("pnm header comments and error cases") {
  const auto dir = scratch_dir("pnm-err");
  write_bytes(dir / "c.pgm", std::string("P5\n# a comment\n2 1\n# another\n255\n") + '\x00' + '\xff');
  const Image img = read_pnm(dir / "c.pgm");
  CHECK(img.at(0, 0, 0) == 0.0);
  CHECK(img.at(0, 0, 1) == 1.0);

  write_bytes(dir / "t.pgm", std::string("P5\n2 2\n255\n") + "ab");
  CHECK_THROWS_WITH_AS(read_pnm(dir / "t.pgm"), doctest::Contains("truncated"), std::runtime_error);
  write_bytes(dir / "ascii.pgm", "P2\n1 1\n255\n0\n");
  CHECK_THROWS_WITH_AS(read_pnm(dir / "ascii.pgm"), doctest::Contains("unsupported"), std::runtime_error);
  write_bytes(dir / "deep.pgm", "P5\n1 1\n65535\n\x00\x00");
  CHECK_THROWS_WITH_AS(read_pnm(dir / "deep.pgm"), doctest::Contains("8-bit"), std::runtime_error);
  CHECK_THROWS_AS(read_pnm(dir / "missing.ppm"), std::runtime_error);
}

TEST_CASE("image transforms") {
  Image img(1, 2, 3);
  for (int x = 0; x < 3; ++x) {
    img.at(0, 0, x) = x;
    img.at(0, 1, x) = 10 + x;
  }
  const Image f = flip_horizontal(img);
  CHECK(f.at(0, 0, 0) == 2);
  CHECK(f.at(0, 1, 2) == 10);
  CHECK(flip_horizontal(f) == img);

  const Image three = to_three_channels(img);
  CHECK(three.channels() == 3);
  for (int c = 0; c < 3; ++c) CHECK(three.at(c, 1, 1) == 11);
  CHECK(to_three_channels(three) == three);
  CHECK_THROWS_AS(to_three_channels(Image(2, 1, 1)), std::invalid_argument);

  CHECK(resize_bilinear(img, 2, 3) == img);
  Image flat(3, 4, 4, 0.25);
  const Image small = resize_bilinear(flat, 2, 2);
  for (double v : small.data()) CHECK(v == doctest::Approx(0.25));
  // Halving a horizontal ramp averages neighbouring pairs.
  Image ramp(1, 1, 4);
  for (int x = 0; x < 4; ++x) ramp.at(0, 0, x) = x;
  const Image half = resize_bilinear(ramp, 1, 2);
  CHECK(half.at(0, 0, 0) == doctest::Approx(0.5));
  CHECK(half.at(0, 0, 1) == doctest::Approx(2.5));
  CHECK_THROWS_AS(Image(0, 1, 1), std::invalid_argument);
}

TEST_CASE("snapshot encoding") {
  WeightMap w;
  w["b.weight"] = Matrix{{1.5, -2.0}, {0.0, 3.25}};
  w["a.bias"] = Matrix{{-0.0, 1e-300, 7.0}};
  const std::string bytes = encode_snapshot(w);
  CHECK(bytes.substr(0, 8) == "RGBTVGCK");
  CHECK(decode_snapshot(bytes) == w);

  SUBCASE("layout is little-endian with sorted names") {
    // magic, version, count, then "a.bias" first.
    CHECK(static_cast<unsigned char>(bytes[8]) == 1);
    CHECK(static_cast<unsigned char>(bytes[12]) == 2);
    CHECK(static_cast<unsigned char>(bytes[20]) == 6);
    CHECK(bytes.substr(24, 6) == "a.bias");
    CHECK(bytes.size() == 8 + 4 + 8 + (4 + 6 + 8 + 3 * 8) + (4 + 8 + 8 + 4 * 8));
  }
  SUBCASE("file round trip") {
    const auto dir = scratch_dir("snap");
    write_snapshot(w, dir / "w.bin");
    CHECK(read_snapshot(dir / "w.bin") == w);
    CHECK_FALSE(fs::exists(dir / "w.bin.tmp"));
  }
  SUBCASE("corrupt inputs are rejected") {
    CHECK_THROWS_WITH_AS(decode_snapshot(bytes.substr(0, bytes.size() - 1)), doctest::Contains("truncated"), SnapshotError);
    CHECK_THROWS_WITH_AS(decode_snapshot(bytes + "x"), doctest::Contains("trailing"), SnapshotError);
    std::string bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_WITH_AS(decode_snapshot(bad), doctest::Contains("not a weight snapshot"), SnapshotError);
    std::string v2 = bytes;
    v2[8] = 2;
    CHECK_THROWS_WITH_AS(decode_snapshot(v2), doctest::Contains("version"), SnapshotError);
    // Same entry written twice, count bumped to match.
    WeightMap one{{"x", Matrix{{1.0}}}};
    std::string dup = encode_snapshot(one);
    const std::string entry = dup.substr(20);
    dup += entry;
    dup[12] = 2;
    CHECK_THROWS_WITH_AS(decode_snapshot(dup), doctest::Contains("duplicate"), SnapshotError);
    CHECK_THROWS_AS(read_snapshot("/nonexistent/dir/w.bin"), SnapshotError);
  }
}

TEST_CASE("weights checksum") {
  WeightMap a{{"x", Matrix{{1.0, 2.0}}}, {"y", Matrix{{3.0}}}};
  WeightMap b;
  b.emplace("y", Matrix{{3.0}});
  b.emplace("x", Matrix{{1.0, 2.0}});
  CHECK(weights_checksum(a) == weights_checksum(b));
  WeightMap c = a;
  c["x"](0, 1) = std::nextafter(2.0, 3.0);
  CHECK(weights_checksum(c) != weights_checksum(a));
  WeightMap d{{"x", Matrix(2, 1, std::vector<double>{1.0, 2.0})}, {"y", Matrix{{3.0}}}};
  CHECK(weights_checksum(d) != weights_checksum(a));
  WeightMap e{{"z", Matrix{{1.0, 2.0}}}, {"y", Matrix{{3.0}}}};
  CHECK(weights_checksum(e) != weights_checksum(a));
}
