#include "rgbtvg/config.hpp"

#include <fstream>
#include <limits>
#include <sstream>

namespace rgbtvg {

void RunConfig::validate() const {
  model.validate();
  train.validate();
  filter.validate();
  if (annotation.max_retries < 0) throw ConfigError("annotation.max_retries must be >= 0");
  if (annotation.workers < 1) throw ConfigError("annotation.workers must be >= 1");
  if (eval.workers < 1) throw ConfigError("eval.workers must be >= 1");
  if (ablation_modes.empty()) throw ConfigError("ablation.modes must not be empty");
}

RunConfig toy_run_config() {
  RunConfig c;
  c.model.seed = 7;
  c.model.encoder.seed = 1;
  c.train.learning_rate = 1e-3;
  c.train.seed = 7;
  return c;
}

RunConfig full_run_config() {
  RunConfig c;
  auto& e = c.model.encoder;
  e.num_layers = 12;
  e.dim = 768;
  e.num_heads = 12;
  e.patch_size = 16;
  e.image_size = 224;
  e.text_max_len = 77;
  e.seed = 1;
  c.model.vl = {6, 8, 256, 4};
  c.model.head_hidden = {256, 256};
  c.model.seed = 7;
  c.model.lavs.heads = 8;
  c.train.learning_rate = 1e-4;
  c.train.epochs = 120;
  c.train.seed = 7;
  return c;
}

namespace {

class Reader {
 public:
  explicit Reader(const TomlDocument& doc) : doc_(doc) {}

  const TomlValue* take(const std::string& key) {
    const TomlValue* v = doc_.find(key);
    if (v) used_.insert(key);
    return v;
  }
  void get(const std::string& key, int& out) {
    if (auto* v = take(key)) {
      const auto i = v->as_int(key);
      if (i < std::numeric_limits<int>::min() || i > std::numeric_limits<int>::max())
        throw TomlError("line " + std::to_string(v->line) + ": '" + key + "' out of range");
      out = static_cast<int>(i);
    }
  }
  void get(const std::string& key, std::uint64_t& out) {
    if (auto* v = take(key)) {
      const auto i = v->as_int(key);
      if (i < 0) throw TomlError("line " + std::to_string(v->line) + ": '" + key + "' must be >= 0");
      out = static_cast<std::uint64_t>(i);
    }
  }
  void get(const std::string& key, double& out) {
    if (auto* v = take(key)) out = v->as_double(key);
  }
  void get(const std::string& key, std::optional<double>& out) {
    if (auto* v = take(key)) out = v->as_double(key);
  }
  void get(const std::string& key, std::optional<int>& out) {
    if (auto* v = take(key)) out = static_cast<int>(v->as_int(key));
  }
  void get(const std::string& key, bool& out) {
    if (auto* v = take(key)) out = v->as_bool(key);
  }
  void get(const std::string& key, std::vector<int>& out) {
    if (auto* v = take(key)) {
      out.clear();
      for (const auto& e : v->as_array(key)) out.push_back(static_cast<int>(e.as_int(key)));
    }
  }
  bool get_strings(const std::string& key, std::vector<std::string>& out) {
    if (auto* v = take(key)) {
      out.clear();
      for (const auto& e : v->as_array(key)) out.push_back(e.as_string(key));
      return true;
    }
    return false;
  }
  bool get_string(const std::string& key, std::string& out) {
    if (auto* v = take(key)) {
      out = v->as_string(key);
      return true;
    }
    return false;
  }

  void reject_unknown(const std::set<std::string>& known_tables) const {
    for (const auto& [key, v] : doc_.values())
      if (!used_.contains(key)) throw TomlError("line " + std::to_string(v.line) + ": unknown key '" + key + "'");
    for (const auto& t : doc_.tables())
      if (!known_tables.contains(t)) throw TomlError("unknown table [" + t + "]");
  }

 private:
  const TomlDocument& doc_;
  std::set<std::string> used_;
};

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  const TomlDocument doc = TomlDocument::parse(text);
  RunConfig c = toy_run_config();
  Reader r(doc);
  std::set<std::string> tables = {"encoder", "model", "ama", "lavs", "vl", "loss", "train", "augment",
                                  "eval",    "filter", "annotation", "ablation"};

  auto& e = c.model.encoder;
  r.get("encoder.num_layers", e.num_layers);
  r.get("encoder.dim", e.dim);
  r.get("encoder.num_heads", e.num_heads);
  r.get("encoder.patch_size", e.patch_size);
  r.get("encoder.image_size", e.image_size);
  r.get("encoder.text_max_len", e.text_max_len);
  r.get("encoder.mlp_ratio", e.mlp_ratio);
  r.get("encoder.seed", e.seed);

  std::string s;
  if (r.get_string("model.mode", s)) c.model.mode = modality_mode_from_name(s);
  r.get("model.use_ama", c.model.use_ama);
  r.get("model.head_hidden", c.model.head_hidden);
  r.get("model.seed", c.model.seed);

  auto& a = c.model.ama;
  r.get("ama.r_v", a.r_v);
  r.get("ama.r_t", a.r_t);
  r.get("ama.alpha_v", a.alpha_v);
  r.get("ama.alpha_t", a.alpha_t);
  r.get("ama.init_std", a.init_std);
  r.get("ama.layers", a.layers);
  std::vector<std::string> names;
  if (r.get_strings("ama.targets", names)) {
    a.targets.clear();
    for (const auto& n : names) a.targets.insert(projection_from_name(n));
  }
  // Hierarchical groups: [ama.group.0], [ama.group.1], ... numbered from 0 without gaps.
  a.groups.clear();
  for (int g = 0;; ++g) {
    const std::string p = "ama.group." + std::to_string(g);
    if (!doc.tables().contains(p)) break;
    tables.insert(p);
    AmaGroup grp;
    grp.r_v = a.r_v;
    grp.r_t = a.r_t;
    r.get(p + ".layers", grp.layers);
    r.get(p + ".r_v", grp.r_v);
    r.get(p + ".r_t", grp.r_t);
    r.get(p + ".alpha_v", grp.alpha_v);
    r.get(p + ".alpha_t", grp.alpha_t);
    a.groups.push_back(std::move(grp));
  }

  r.get("lavs.enabled", c.model.use_lavs);
  r.get("lavs.layers", c.model.lavs.layers);
  r.get("lavs.heads", c.model.lavs.heads);
  r.get("lavs.compute_t_every_layer", c.model.lavs.compute_t_every_layer);

  r.get("vl.layers", c.model.vl.layers);
  r.get("vl.heads", c.model.vl.heads);
  r.get("vl.dim", c.model.vl.dim);
  r.get("vl.mlp_ratio", c.model.vl.mlp_ratio);

  r.get("loss.w_l1", c.model.loss.l1);
  r.get("loss.w_giou", c.model.loss.giou);

  auto& t = c.train;
  r.get("train.batch_size", t.batch_size);
  r.get("train.learning_rate", t.learning_rate);
  r.get("train.weight_decay", t.weight_decay);
  r.get("train.beta1", t.beta1);
  r.get("train.beta2", t.beta2);
  r.get("train.epsilon", t.epsilon);
  r.get("train.epochs", t.epochs);
  r.get("train.steps", t.steps);
  r.get("train.eval_every", t.eval_every);
  r.get("train.seed", t.seed);
  r.get("augment.flip", t.augment.flip);
  r.get("augment.color_jitter", t.augment.color_jitter);
  r.get("augment.flip_prob", t.augment.flip_prob);
  r.get("augment.jitter_strength", t.augment.jitter_strength);

  r.get("eval.workers", c.eval.workers);

  auto& f = c.filter;
  r.get("filter.min_area_ratio", f.min_area_ratio);
  r.get("filter.min_side_px", f.min_side_px);
  r.get("filter.max_alignment_offset_px", f.max_alignment_offset_px);
  r.get("filter.min_category_share", f.min_category_share);
  if (r.get_strings("filter.excluded_categories", names)) f.excluded_categories = {names.begin(), names.end()};

  r.get("annotation.max_retries", c.annotation.max_retries);
  r.get("annotation.workers", c.annotation.workers);

  if (r.get_strings("ablation.modes", names)) {
    c.ablation_modes.clear();
    for (const auto& n : names) c.ablation_modes.push_back(modality_mode_from_name(n));
  }

  r.reject_unknown(tables);
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_run_config(ss.str());
  } catch (const std::exception& ex) {
    throw ConfigError(path.string() + ": " + ex.what());
  }
}

namespace {

std::string int_list(const std::vector<int>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
  return s + "]";
}

template <typename Range, typename F>
std::string string_list(const Range& r, F&& to_string) {
  std::string s = "[";
  bool first = true;
  for (const auto& x : r) {
    s += (first ? "" : ", ") + toml_quote(std::string(to_string(x)));
    first = false;
  }
  return s + "]";
}

}  // namespace

std::string run_config_to_toml(const RunConfig& c) {
  std::ostringstream o;
  const auto& e = c.model.encoder;
  o << "[encoder]\n"
    << "num_layers = " << e.num_layers << "\ndim = " << e.dim << "\nnum_heads = " << e.num_heads
    << "\npatch_size = " << e.patch_size << "\nimage_size = " << e.image_size << "\ntext_max_len = " << e.text_max_len
    << "\nmlp_ratio = " << e.mlp_ratio << "\nseed = " << e.seed << "\n\n";
  o << "[model]\n"
    << "mode = " << toml_quote(std::string(modality_mode_name(c.model.mode)))
    << "\nuse_ama = " << (c.model.use_ama ? "true" : "false") << "\nhead_hidden = " << int_list(c.model.head_hidden)
    << "\nseed = " << c.model.seed << "\n\n";
  const auto& a = c.model.ama;
  o << "[ama]\n"
    << "r_v = " << a.r_v << "\nr_t = " << a.r_t << "\n";
  if (a.alpha_v) o << "alpha_v = " << toml_double(*a.alpha_v) << "\n";
  if (a.alpha_t) o << "alpha_t = " << toml_double(*a.alpha_t) << "\n";
  o << "targets = " << string_list(a.targets, projection_name) << "\nlayers = " << int_list(a.layers)
    << "\ninit_std = " << toml_double(a.init_std) << "\n\n";
  for (std::size_t g = 0; g < a.groups.size(); ++g) {
    const auto& grp = a.groups[g];
    o << "[ama.group." << g << "]\nlayers = " << int_list(grp.layers) << "\nr_v = " << grp.r_v
      << "\nr_t = " << grp.r_t << "\n";
    if (grp.alpha_v) o << "alpha_v = " << toml_double(*grp.alpha_v) << "\n";
    if (grp.alpha_t) o << "alpha_t = " << toml_double(*grp.alpha_t) << "\n";
    o << "\n";
  }
  o << "[lavs]\n"
    << "enabled = " << (c.model.use_lavs ? "true" : "false") << "\nlayers = " << int_list(c.model.lavs.layers)
    << "\nheads = " << c.model.lavs.heads
    << "\ncompute_t_every_layer = " << (c.model.lavs.compute_t_every_layer ? "true" : "false") << "\n\n";
  o << "[vl]\nlayers = " << c.model.vl.layers << "\nheads = " << c.model.vl.heads << "\ndim = " << c.model.vl.dim
    << "\nmlp_ratio = " << c.model.vl.mlp_ratio << "\n\n";
  o << "[loss]\nw_l1 = " << toml_double(c.model.loss.l1) << "\nw_giou = " << toml_double(c.model.loss.giou) << "\n\n";
  const auto& t = c.train;
  o << "[train]\n"
    << "batch_size = " << t.batch_size << "\nlearning_rate = " << toml_double(t.learning_rate)
    << "\nweight_decay = " << toml_double(t.weight_decay) << "\nbeta1 = " << toml_double(t.beta1)
    << "\nbeta2 = " << toml_double(t.beta2) << "\nepsilon = " << toml_double(t.epsilon) << "\nepochs = " << t.epochs
    << "\n";
  if (t.steps) o << "steps = " << *t.steps << "\n";
  o << "eval_every = " << t.eval_every << "\nseed = " << t.seed << "\n\n";
  o << "[augment]\nflip = " << (t.augment.flip ? "true" : "false")
    << "\ncolor_jitter = " << (t.augment.color_jitter ? "true" : "false")
    << "\nflip_prob = " << toml_double(t.augment.flip_prob)
    << "\njitter_strength = " << toml_double(t.augment.jitter_strength) << "\n\n";
  o << "[eval]\nworkers = " << c.eval.workers << "\n\n";
  const auto& f = c.filter;
  o << "[filter]\nmin_area_ratio = " << toml_double(f.min_area_ratio)
    << "\nmin_side_px = " << toml_double(f.min_side_px)
    << "\nmax_alignment_offset_px = " << toml_double(f.max_alignment_offset_px)
    << "\nmin_category_share = " << toml_double(f.min_category_share)
    << "\nexcluded_categories = " << string_list(f.excluded_categories, [](const std::string& x) { return x; })
    << "\n\n";
  o << "[annotation]\nmax_retries = " << c.annotation.max_retries << "\nworkers = " << c.annotation.workers << "\n\n";
  o << "[ablation]\nmodes = " << string_list(c.ablation_modes, modality_mode_name) << "\n";
  return o.str();
}

}  // namespace rgbtvg
