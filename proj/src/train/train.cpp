#include "rgbtvg/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <thread>

namespace rgbtvg {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(learning_rate > 0) || !std::isfinite(learning_rate)) throw ConfigError("train.learning_rate must be positive");
  if (!(weight_decay >= 0)) throw ConfigError("train.weight_decay must be >= 0");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw ConfigError("train.beta1/beta2 must lie in [0, 1)");
  if (!(epsilon > 0)) throw ConfigError("train.epsilon must be positive");
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (steps && *steps < 1) throw ConfigError("train.steps must be >= 1");
  if (eval_every < 0) throw ConfigError("train.eval_every must be >= 0");
  if (!(augment.flip_prob >= 0 && augment.flip_prob <= 1)) throw ConfigError("augment.flip_prob must lie in [0, 1]");
  if (!(augment.jitter_strength >= 0 && augment.jitter_strength < 1))
    throw ConfigError("augment.jitter_strength must lie in [0, 1)");
}

// ---- optimizer --------------------------------------------------------------

AdamW::AdamW(std::vector<ag::Parameter*> params, AdamWConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (auto* p : params_) {
    m_.emplace_back(p->value().rows(), p->value().cols());
    v_.emplace_back(p->value().rows(), p->value().cols());
  }
}

void AdamW::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

void AdamW::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, t_);
  const double c2 = 1.0 - std::pow(cfg_.beta2, t_);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Matrix& w = params_[k]->value();
    const Matrix& g = params_[k]->grad();
    Matrix& m = m_[k];
    Matrix& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1 - cfg_.beta2) * g[i] * g[i];
      const double update = (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps);
      w[i] -= cfg_.lr * (update + cfg_.weight_decay * w[i]);
    }
  }
}

// ---- data -------------------------------------------------------------------

namespace {

Image load_for_encoder(const DatasetManifest& m, const std::string& path, const GroundingRecord& r, int size) {
  Image img = read_pnm(m.resolve(path));
  if (img.width() != r.dims.width || img.height() != r.dims.height)
    throw std::runtime_error("record " + r.id + ": image " + path + " is " + std::to_string(img.width()) + "x" +
                             std::to_string(img.height()) + " but the manifest says " + std::to_string(r.dims.width) +
                             "x" + std::to_string(r.dims.height));
  return to_three_channels(resize_bilinear(img, size, size));
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

std::vector<Sample> load_samples(const DatasetManifest& m, std::span<const GroundingRecord* const> records,
                                 const EncoderConfig& enc, ModalityMode mode) {
  std::vector<Sample> out;
  out.reserve(records.size());
  for (const auto* r : records) {
    Sample s;
    s.record = r;
    if (mode != ModalityMode::TIR) s.rgb = load_for_encoder(m, r->rgb_path, *r, enc.image_size);
    if (mode != ModalityMode::RGB) s.tir = load_for_encoder(m, r->tir_path, *r, enc.image_size);
    s.target = to_norm(r->box, r->dims);
    out.push_back(std::move(s));
  }
  return out;
}

const Matrix& TextFeatureCache::get(const std::string& expression) {
  std::lock_guard lock(mu_);
  auto& slot = cache_[expression];
  if (!slot) slot = std::make_unique<Matrix>(encoder_.encode_text_features(expression));
  return *slot;
}

std::string mirror_expression(const std::string& expression) {
  std::string out;
  std::size_t i = 0;
  while (i < expression.size()) {
    if (!std::isalpha(static_cast<unsigned char>(expression[i]))) {
      out += expression[i++];
      continue;
    }
    std::size_t j = i;
    while (j < expression.size() && std::isalpha(static_cast<unsigned char>(expression[j]))) ++j;
    std::string word = expression.substr(i, j - i);
    std::string lower = word;
    for (char& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    std::string swapped = lower == "left" ? "right" : lower == "right" ? "left" : "";
    if (!swapped.empty() && std::isupper(static_cast<unsigned char>(word[0])))
      swapped[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(swapped[0])));
    out += swapped.empty() ? word : swapped;
    i = j;
  }
  return out;
}

Image jitter_colors(const Image& img, double brightness, double contrast) {
  Image out = img;
  for (double& v : out.data()) v = std::clamp(((v - 0.5) * contrast + 0.5) * brightness, 0.0, 1.0);
  return out;
}

AugmentedSample augment_sample(const Sample& s, const AugmentConfig& cfg, std::uint64_t seed, ModalityMode mode) {
  std::mt19937_64 rng(seed);
  AugmentedSample a;
  a.expression = s.record->expression;
  a.target = s.target;
  if (mode != ModalityMode::TIR) a.rgb = *s.rgb;
  if (mode != ModalityMode::RGB) a.tir = *s.tir;
  // Draws happen unconditionally so toggling one augmentation does not shift the other's stream.
  const double u_flip = uniform01(rng);
  const double u_b = uniform01(rng);
  const double u_c = uniform01(rng);
  if (cfg.flip && u_flip < cfg.flip_prob) {
    a.flipped = true;
    if (mode != ModalityMode::TIR) a.rgb = flip_horizontal(a.rgb);
    if (mode != ModalityMode::RGB) a.tir = flip_horizontal(a.tir);
    a.target = NormBox(1.0 - a.target.cx, a.target.cy, a.target.w, a.target.h);
    a.expression = mirror_expression(a.expression);
  }
  if (cfg.color_jitter && mode != ModalityMode::TIR && cfg.jitter_strength > 0) {
    const double s_ = cfg.jitter_strength;
    a.rgb = jitter_colors(a.rgb, 1.0 + s_ * (2 * u_b - 1), 1.0 + s_ * (2 * u_c - 1));
  }
  return a;
}

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
    std::swap(idx[i - 1], idx[std::min(j, i - 1)]);
  }
  return idx;
}

// ---- evaluation helpers -----------------------------------------------------

double prediction_iou(const NormBox& pred, const GroundingRecord& r) {
  const auto box = to_pixel_clipped(pred, r.dims);
  return box ? iou(*box, r.box) : 0.0;
}

NormBox predict_sample(const VgNet& net, const Sample& s, TextFeatureCache& text) {
  ag::Tape t(false);
  const Image* rgb = s.rgb ? &*s.rgb : nullptr;
  const Image* tir = s.tir ? &*s.tir : nullptr;
  return to_norm_box(net.forward(t, rgb, tir, text.get(s.record->expression)).box.value());
}

double sample_accuracy(const VgNet& net, const std::vector<Sample>& samples, TextFeatureCache& text, int workers) {
  if (samples.empty()) throw std::invalid_argument("sample_accuracy: no samples");
  std::vector<char> hit(samples.size(), 0);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < samples.size(); i = next++)
      hit[i] = is_hit(prediction_iou(predict_sample(net, samples[i], text), *samples[i].record));
  };
  const auto n = static_cast<std::size_t>(std::max(1, workers));
  if (n == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < n; ++w) pool.emplace_back(work);
  }
  return static_cast<double>(std::count(hit.begin(), hit.end(), 1)) / static_cast<double>(samples.size());
}

// ---- loop -------------------------------------------------------------------

TrainResult train(VgNet& net, const TrainConfig& cfg, const DatasetManifest& m, const TrainHooks& hooks) {
  cfg.validate();
  const ModelConfig& mc = net.config();
  const auto train_records = m.split(Split::train);
  if (train_records.empty()) throw TrainingError("manifest has no train records");
  const auto samples = load_samples(m, train_records, mc.encoder, mc.mode);
  const auto val_samples = load_samples(m, m.split(Split::val), mc.encoder, mc.mode);
  TextFeatureCache text(net.encoder());

  AdamW opt(net.trainable_parameters(),
            {cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon, cfg.weight_decay});
  TrainResult res;
  res.frozen_before = net.frozen_checksum();

  const std::size_t n = samples.size();
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  const int per_epoch = static_cast<int>((n + bs - 1) / bs);
  const int total = cfg.steps.value_or(cfg.epochs * per_epoch);
  WeightMap best_state;
  int last_validated = -1;

  auto validate = [&](int step) {
    if (val_samples.empty() || step == last_validated) return;
    last_validated = step;
    const double acc = sample_accuracy(net, val_samples, text);
    res.validation.push_back({step, acc});
    if (hooks.on_validation) hooks.on_validation(res.validation.back());
    if (!res.best_val || acc > *res.best_val) {
      res.best_val = acc;
      res.best_step = step;
      best_state = net.state();
    }
  };

  int step = 0;
  for (int epoch = 0; step < total; ++epoch) {
    const auto order = seeded_permutation(n, mix_seed(cfg.seed, "epoch:" + std::to_string(epoch)));
    for (int b = 0; b < per_epoch && step < total; ++b) {
      opt.zero_grad();
      const std::size_t lo = static_cast<std::size_t>(b) * bs;
      const std::size_t hi = std::min(n, lo + bs);
      const double inv = 1.0 / static_cast<double>(hi - lo);
      double batch_loss = 0;
      for (std::size_t k = lo; k < hi; ++k) {
        const Sample& s = samples[order[k]];
        const auto aug = augment_sample(
            s, cfg.augment, mix_seed(cfg.seed, "aug:" + std::to_string(step) + ":" + std::to_string(k)), mc.mode);
        ag::Tape t;
        const ForwardResult r = net.forward(t, mc.uses_rgb() ? &aug.rgb : nullptr, mc.uses_tir() ? &aug.tir : nullptr,
                                            text.get(aug.expression));
        ag::Var loss = grounding_loss(r.box, aug.target, mc.loss);
        const double lv = loss.value()[0];
        if (!std::isfinite(lv)) {
          std::ostringstream msg;
          msg << "non-finite loss at step " << step << " (record " << s.record->id << ", predicted box "
              << r.box.value()[0] << "," << r.box.value()[1] << "," << r.box.value()[2] << "," << r.box.value()[3]
              << "); lower train.learning_rate";
          throw TrainingError(msg.str());
        }
        batch_loss += lv;
        t.backward(ag::scale(loss, inv));
      }
      opt.step();
      ++step;
      res.curve.push_back({step, epoch, batch_loss * inv});
      if (hooks.on_step) hooks.on_step(res.curve.back());
      if (cfg.eval_every > 0 && step % cfg.eval_every == 0) validate(step);
    }
    if (cfg.eval_every == 0) validate(step);
  }
  validate(step);
  res.steps = step;
  if (!best_state.empty()) net.load_state(best_state);
  res.frozen_after = net.frozen_checksum();
  return res;
}

std::string loss_curve_csv(const TrainResult& r) {
  std::ostringstream os;
  os.precision(17);
  os << "step,epoch,loss\n";
  for (const auto& s : r.curve) os << s.step << "," << s.epoch << "," << s.loss << "\n";
  return os.str();
}

}  // namespace rgbtvg
