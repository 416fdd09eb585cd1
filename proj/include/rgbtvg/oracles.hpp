#pragma once

// Brute-force reference routines. They deliberately avoid the library code
// they verify: boxes are rasterized, subsets and cells are recomputed from
// raw predicates, and gradients come from finite differences.

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "rgbtvg/autograd.hpp"
#include "rgbtvg/dataset.hpp"

namespace rgbtvg::oracle {

struct RasterCounts {
  std::uint64_t inter = 0;
  std::uint64_t uni = 0;
};

/// Counts cells of side 1/grid_scale whose centers fall inside each box.
RasterCounts raster_counts(const PixelBox& a, const PixelBox& b, int grid_scale);
double iou_rasterized(const PixelBox& a, const PixelBox& b, int grid_scale);

/// Plain triple loop.
Matrix matmul(const Matrix& a, const Matrix& b);

/// Subsets by direct predicate evaluation over split == test.
std::map<std::string, std::set<std::string>> eval_subsets(const std::vector<GroundingRecord>& records);

/// Groups by scanning every record once per candidate value.
std::map<std::string, std::set<std::string>> group_by(const std::vector<GroundingRecord>& records, Axis axis);

struct Tally {
  std::size_t count = 0;
  std::size_t hits = 0;
  bool operator==(const Tally&) const = default;
};

struct DumpScores {
  std::map<std::string, Tally> splits;                      // val, test, testA, testB, testC
  std::map<std::pair<std::string, std::string>, Tally> cells;  // (axis, value) over test
};

/// Rescores a prediction dump: IoU from the corner boxes, hit when IoU > 0.5.
/// Throws when a dump id is unknown or its gt disagrees with the manifest.
DumpScores score_dump(const std::vector<GroundingRecord>& records, const std::string& dump_text);

/// count/total in percent, rounded half-up at two decimals, by integer arithmetic.
double percent_2dp(std::uint64_t count, std::uint64_t total);

/// Closed-form trainable adapter parameters: sum over modalities of
/// layers * targets * 2 * dim * rank.
std::size_t adapter_parameters(std::size_t dim, std::size_t layers, std::size_t targets, std::size_t rank_v,
                               std::size_t rank_t, bool rgb, bool tir);

/// Whether `hits` out of `n` is within 3 sigma of the binomial mean n*p.
bool within_3_sigma(std::size_t hits, std::size_t n, double p);

struct GradCheckEntry {
  std::string name;
  std::size_t index = 0;
  double analytic = 0;
  double numeric = 0;
  double rel_error = 0;
};

struct GradCheckReport {
  std::map<std::string, double> worst_by_param;
  GradCheckEntry worst;
  std::size_t checked = 0;
};

struct GradCheckOptions {
  double step = 1e-3;
  // Gradients that are exactly zero in theory (a key bias under softmax, say)
  // come back from the stencil as rounding noise near 1e-12; the floor keeps
  // that noise from reading as a large relative error.
  double floor = 1e-6;
  std::size_t samples_per_param = 24;
};

/// Analytic gradients from one recorded pass of `loss`, compared with the
/// fourth-order central difference (-f(x+2h) + 8f(x+h) - 8f(x-h) + f(x-2h)) / 12h
/// on up to samples_per_param entries of each parameter. Relative error is
/// |a - n| / max(|a|, |n|, floor).
GradCheckReport check_gradients(const std::vector<ag::Parameter*>& params,
                                const std::function<ag::Var(ag::Tape&)>& loss, const GradCheckOptions& opt = {});

}  // namespace rgbtvg::oracle
