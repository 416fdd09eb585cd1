#pragma once

// Deterministic training: seeded per-epoch order, seeded per-sample
// augmentation, AdamW on the trainable parameters only.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "rgbtvg/dataset.hpp"
#include "rgbtvg/vgnet.hpp"

namespace rgbtvg {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AugmentConfig {
  bool flip = true;          // mirrors both images, the box and left/right words
  bool color_jitter = true;  // RGB only
  double flip_prob = 0.5;
  double jitter_strength = 0.2;
};

struct TrainConfig {
  int batch_size = 8;
  double learning_rate = 1e-4;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int epochs = 120;
  std::optional<int> steps;  // overrides epochs when set
  int eval_every = 0;        // in steps; 0 evaluates at every epoch end
  std::uint64_t seed = 0;
  AugmentConfig augment;

  void validate() const;
};

struct AdamWConfig {
  double lr = 1e-4, beta1 = 0.9, beta2 = 0.999, eps = 1e-8, weight_decay = 1e-4;
};

/// Adam moments with weight decay applied directly to the parameters.
class AdamW {
 public:
  AdamW(std::vector<ag::Parameter*> params, AdamWConfig cfg);
  void zero_grad();
  void step();
  int steps() const { return t_; }

 private:
  std::vector<ag::Parameter*> params_;
  AdamWConfig cfg_;
  std::vector<Matrix> m_, v_;
  int t_ = 0;
};

/// One record with its images at encoder resolution (three channels).
struct Sample {
  const GroundingRecord* record = nullptr;
  std::optional<Image> rgb;
  std::optional<Image> tir;
  NormBox target{0.5, 0.5, 0.5, 0.5};
};

/// Loads only the modalities the mode uses, so an unused stream is never read.
std::vector<Sample> load_samples(const DatasetManifest& m, std::span<const GroundingRecord* const> records,
                                 const EncoderConfig& enc, ModalityMode mode);

/// Frozen text features keyed by expression. Thread-safe.
class TextFeatureCache {
 public:
  explicit TextFeatureCache(const FrozenEncoder& encoder) : encoder_(encoder) {}
  const Matrix& get(const std::string& expression);

 private:
  const FrozenEncoder& encoder_;
  std::mutex mu_;
  std::map<std::string, std::unique_ptr<Matrix>> cache_;
};

/// Swaps the words "left" and "right".
std::string mirror_expression(const std::string& expression);
Image jitter_colors(const Image& img, double brightness, double contrast);

struct AugmentedSample {
  Image rgb, tir;
  std::string expression;
  NormBox target{0.5, 0.5, 0.5, 0.5};
  bool flipped = false;
};
AugmentedSample augment_sample(const Sample& s, const AugmentConfig& cfg, std::uint64_t seed, ModalityMode mode);

/// Fisher-Yates with a portable index draw, so orders match across standard libraries.
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

struct StepLog {
  int step;
  int epoch;
  double loss;
};

struct ValLog {
  int step;
  double accuracy;
};

struct TrainResult {
  std::vector<StepLog> curve;
  std::vector<ValLog> validation;
  int steps = 0;
  std::optional<double> best_val;
  int best_step = 0;
  std::uint64_t frozen_before = 0;
  std::uint64_t frozen_after = 0;
};

struct TrainHooks {
  std::function<void(const StepLog&)> on_step;
  std::function<void(const ValLog&)> on_validation;
};

/// Trains in place. With a non-empty val split the best-val parameters are
/// restored at the end; otherwise the final parameters stay.
TrainResult train(VgNet& net, const TrainConfig& cfg, const DatasetManifest& m, const TrainHooks& hooks = {});

/// IoU in pixel space after clipping to the frame; a prediction with nothing
/// left inside the image scores 0.
double prediction_iou(const NormBox& pred, const GroundingRecord& r);
NormBox predict_sample(const VgNet& net, const Sample& s, TextFeatureCache& text);

/// Acc@0.5 of the model on preloaded samples, in pixel space.
double sample_accuracy(const VgNet& net, const std::vector<Sample>& samples, TextFeatureCache& text, int workers = 1);

std::string loss_curve_csv(const TrainResult& r);

}  // namespace rgbtvg
