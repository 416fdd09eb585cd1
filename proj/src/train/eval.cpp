#include "rgbtvg/eval.hpp"

#include <atomic>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace rgbtvg {

using ojson = nlohmann::ordered_json;

std::optional<double> Cell::accuracy() const {
  if (count == 0) return std::nullopt;
  return static_cast<double>(hits) / static_cast<double>(count);
}

const Cell& EvalReport::split(const std::string& name) const {
  for (const auto& [n, c] : splits)
    if (n == name) return c;
  throw std::out_of_range("report has no split " + name);
}

const Cell& EvalReport::cell(Axis axis, const std::string& value) const {
  for (const auto& a : axes)
    if (a.axis == axis)
      for (const auto& [v, c] : a.cells)
        if (v == value) return c;
  throw std::out_of_range("report has no cell " + std::string(axis_name(axis)) + "=" + value);
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ---- predictions --------------------------------------------------------------

namespace {

std::vector<const GroundingRecord*> eval_records(const DatasetManifest& m) {
  std::vector<const GroundingRecord*> out;
  for (const auto& r : m.records())
    if (r.split != Split::train) out.push_back(&r);
  return out;
}

PredictionRow make_row(const GroundingRecord& r, const NormBox& pred) {
  PredictionRow row;
  row.id = r.id;
  row.pred = to_pixel_clipped(pred, r.dims);
  row.gt = r.box;
  row.iou = row.pred ? iou(*row.pred, r.box) : 0.0;
  return row;
}

}  // namespace

std::vector<PredictionRow> predict_records(const DatasetManifest& m, const Predictor& predictor) {
  std::vector<PredictionRow> rows;
  for (const auto* r : eval_records(m)) rows.push_back(make_row(*r, predictor(*r)));
  return rows;
}

std::vector<PredictionRow> predict_records(const VgNet& net, const DatasetManifest& m, int workers) {
  const auto records = eval_records(m);
  const auto samples = load_samples(m, records, net.config().encoder, net.config().mode);
  TextFeatureCache text(net.encoder());
  for (const auto& s : samples) text.get(s.record->expression);
  std::vector<PredictionRow> rows(samples.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < samples.size(); i = next++)
      rows[i] = make_row(*samples[i].record, predict_sample(net, samples[i], text));
  };
  const auto n = static_cast<std::size_t>(std::max(1, workers));
  if (n == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < n; ++w) pool.emplace_back(work);
  }
  return rows;
}

EvalReport score_predictions(const DatasetManifest& m, const std::vector<PredictionRow>& rows,
                             std::vector<std::pair<std::string, std::string>> metadata) {
  std::map<std::string, const PredictionRow*> by_id;
  for (const auto& r : rows)
    if (!by_id.emplace(r.id, &r).second) throw std::invalid_argument("duplicate prediction for " + r.id);
  auto score = [&](const IdSet& ids) {
    Cell c;
    for (const auto& id : ids) {
      auto it = by_id.find(id);
      if (it == by_id.end()) throw std::invalid_argument("no prediction for record " + id);
      ++c.count;
      c.hits += is_hit(it->second->iou) ? 1 : 0;
    }
    return c;
  };

  EvalReport rep;
  rep.metadata = std::move(metadata);
  IdSet val;
  for (const auto* r : m.split(Split::val)) val.insert(r->id);
  const auto subsets = assign_eval_subsets(m);
  rep.splits.emplace_back("val", score(val));
  for (const auto& name : kEvalSubsets) rep.splits.emplace_back(name, score(subsets.at(name)));

  const auto test = m.split(Split::test);
  for (Axis axis : kAllAxes) {
    AxisBreakdown b{axis, {}};
    const auto groups = group_by_attribute(test, axis);
    for (const auto& value : axis_values(axis)) b.cells.emplace_back(value, score(groups.at(value)));
    rep.axes.push_back(std::move(b));
  }
  return rep;
}

EvalResult evaluate(const VgNet& net, const DatasetManifest& m, int workers,
                    std::vector<std::pair<std::string, std::string>> metadata) {
  EvalResult out;
  out.predictions = predict_records(net, m, workers);
  out.report = score_predictions(m, out.predictions, std::move(metadata));
  return out;
}

// ---- dump -----------------------------------------------------------------------

std::string prediction_dump(const std::vector<PredictionRow>& rows) {
  std::string out;
  for (const auto& r : rows) {
    ojson j;
    j["id"] = r.id;
    j["pred_bbox"] = r.pred ? ojson::array({r.pred->x(), r.pred->y(), r.pred->x2(), r.pred->y2()}) : ojson(nullptr);
    j["gt_bbox"] = ojson::array({r.gt.x(), r.gt.y(), r.gt.x2(), r.gt.y2()});
    j["iou"] = r.iou;
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<PredictionRow> parse_prediction_dump(const std::string& text) {
  std::vector<PredictionRow> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      PredictionRow r;
      r.id = j.at("id").get<std::string>();
      const auto& g = j.at("gt_bbox");
      r.gt = PixelBox::from_corners(g.at(0), g.at(1), g.at(2), g.at(3));
      if (const auto& p = j.at("pred_bbox"); !p.is_null()) r.pred = PixelBox::from_corners(p.at(0), p.at(1), p.at(2), p.at(3));
      r.iou = j.at("iou").get<double>();
      rows.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw std::invalid_argument("prediction dump line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

// ---- report formats -------------------------------------------------------------

ReportFormat report_format_from_name(std::string_view s) {
  if (s == "markdown" || s == "md") return ReportFormat::markdown;
  if (s == "csv") return ReportFormat::csv;
  if (s == "json") return ReportFormat::json;
  throw std::invalid_argument("unknown report format '" + std::string(s) + "' (markdown, csv, json)");
}

namespace {

std::string shortest(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

std::string percent(const Cell& c) {
  const auto a = c.accuracy();
  if (!a) return "/";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", *a * 100.0);
  return buf;
}

ojson cell_json(const Cell& c) {
  ojson j;
  j["count"] = c.count;
  j["hits"] = c.hits;
  const auto a = c.accuracy();
  j["accuracy"] = a ? ojson(*a) : ojson(nullptr);
  return j;
}

Cell cell_from_json(const nlohmann::json& j) {
  Cell c{j.at("count").get<std::size_t>(), j.at("hits").get<std::size_t>()};
  if (c.hits > c.count) throw std::invalid_argument("cell has more hits than records");
  return c;
}

ojson report_json(const EvalReport& r) {
  ojson j;
  j["metadata"] = ojson::object();
  for (const auto& [k, v] : r.metadata) j["metadata"][k] = v;
  j["splits"] = ojson::object();
  for (const auto& [name, c] : r.splits) j["splits"][name] = cell_json(c);
  j["axes"] = ojson::object();
  for (const auto& a : r.axes) {
    ojson cells = ojson::object();
    for (const auto& [v, c] : a.cells) cells[v] = cell_json(c);
    j["axes"][std::string(axis_name(a.axis))] = cells;
  }
  return j;
}

EvalReport report_from(const nlohmann::ordered_json& j) {
  EvalReport r;
  for (const auto& [k, v] : j.at("metadata").items()) r.metadata.emplace_back(k, v.get<std::string>());
  for (const auto& name : kReportSplits) r.splits.emplace_back(name, cell_from_json(j.at("splits").at(name)));
  for (Axis axis : kAllAxes) {
    AxisBreakdown b{axis, {}};
    const auto& cells = j.at("axes").at(std::string(axis_name(axis)));
    for (const auto& v : axis_values(axis)) b.cells.emplace_back(v, cell_from_json(cells.at(v)));
    r.axes.push_back(std::move(b));
  }
  return r;
}

std::string split_header() {
  std::string s = "|";
  for (const auto& n : kReportSplits) s += " " + n + " |";
  s += "\n|";
  for (std::size_t i = 0; i < kReportSplits.size(); ++i) s += "---:|";
  return s + "\n";
}

}  // namespace

std::string emit_report(const EvalReport& r, ReportFormat format) {
  switch (format) {
    case ReportFormat::json: return report_json(r).dump(2) + "\n";
    case ReportFormat::csv: {
      std::string out = "section,key,count,hits,accuracy\n";
      auto line = [&](std::string_view section, const std::string& key, const Cell& c) {
        const auto a = c.accuracy();
        out += std::string(section) + "," + key + "," + std::to_string(c.count) + "," + std::to_string(c.hits) + "," +
               (a ? shortest(*a) : "") + "\n";
      };
      for (const auto& [name, c] : r.splits) line("split", name, c);
      for (const auto& a : r.axes)
        for (const auto& [v, c] : a.cells) line(axis_name(a.axis), v, c);
      return out;
    }
    case ReportFormat::markdown: {
      std::ostringstream o;
      o << "# Evaluation report\n\n";
      if (!r.metadata.empty()) {
        o << "| field | value |\n|---|---|\n";
        for (const auto& [k, v] : r.metadata) o << "| " << k << " | " << v << " |\n";
        o << "\n";
      }
      o << "## Acc@0.5 (%)\n\n" << split_header() << "|";
      for (const auto& [n, c] : r.splits) o << " " << percent(c) << " |";
      o << "\n|";
      for (const auto& [n, c] : r.splits) o << " n=" << c.count << " |";
      o << "\n";
      for (const auto& a : r.axes) {
        o << "\n## Test split by " << axis_name(a.axis) << "\n\n| |";
        for (const auto& [v, c] : a.cells) o << " " << v << " |";
        o << "\n|---|";
        for (std::size_t i = 0; i < a.cells.size(); ++i) o << "---:|";
        o << "\n| Acc@0.5 (%) |";
        for (const auto& [v, c] : a.cells) o << " " << percent(c) << " |";
        o << "\n| count |";
        for (const auto& [v, c] : a.cells) o << " " << c.count << " |";
        o << "\n";
      }
      return o.str();
    }
  }
  throw std::invalid_argument("unknown report format");
}

EvalReport report_from_json(const std::string& text) {
  try {
    return report_from(nlohmann::ordered_json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed report: ") + e.what());
  }
}

// ---- checkpoints ----------------------------------------------------------------

namespace {

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << s;
  if (!out) throw std::runtime_error("write failed for " + p.string());
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::uint64_t parse_hex(const std::string& s) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, 16);
  if (ec != std::errc() || p != s.data() + s.size()) throw std::invalid_argument("bad checksum '" + s + "'");
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const RunConfig& cfg, const VgNet& net,
                     const TrainResult& result) {
  std::filesystem::create_directories(dir);
  write_snapshot(net.state(), dir / "model.bin");
  write_text(dir / "run.toml", run_config_to_toml(cfg));
  ojson meta;
  meta["frozen_checksum"] = hex64(net.frozen_checksum());
  meta["state_checksum"] = hex64(net.state_checksum());
  meta["steps"] = result.steps;
  meta["best_val"] = result.best_val ? ojson(*result.best_val) : ojson(nullptr);
  meta["best_step"] = result.best_step;
  write_text(dir / "meta.json", meta.dump(2) + "\n");
  write_text(dir / "loss_curve.csv", loss_curve_csv(result));
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  Checkpoint ck;
  ck.config = load_run_config(dir / "run.toml");
  const auto meta = nlohmann::json::parse(read_text(dir / "meta.json"));
  ck.meta.frozen_checksum = parse_hex(meta.at("frozen_checksum").get<std::string>());
  ck.meta.state_checksum = parse_hex(meta.at("state_checksum").get<std::string>());
  ck.meta.steps = meta.at("steps").get<int>();
  if (!meta.at("best_val").is_null()) ck.meta.best_val = meta.at("best_val").get<double>();
  ck.meta.best_step = meta.at("best_step").get<int>();

  ck.model = std::make_unique<VgNet>(ck.config.model);
  if (ck.model->frozen_checksum() != ck.meta.frozen_checksum)
    throw std::runtime_error("checkpoint/config mismatch: frozen tower checksum " + hex64(ck.model->frozen_checksum()) +
                             " differs from recorded " + hex64(ck.meta.frozen_checksum));
  try {
    ck.model->load_state(read_snapshot(dir / "model.bin"));
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("checkpoint/config mismatch: ") + e.what());
  }
  if (ck.model->state_checksum() != ck.meta.state_checksum)
    throw std::runtime_error("checkpoint/config mismatch: model.bin checksum differs from meta.json");
  return ck;
}

std::vector<std::pair<std::string, std::string>> report_metadata(const RunConfig& cfg, const VgNet& net) {
  const auto& m = cfg.model;
  return {{"mode", std::string(modality_mode_name(m.mode))},
          {"use_ama", m.use_ama ? "true" : "false"},
          {"use_lavs", m.use_lavs ? "true" : "false"},
          {"r_v", std::to_string(m.ama.r_v)},
          {"r_t", std::to_string(m.ama.r_t)},
          {"model_seed", std::to_string(m.seed)},
          {"train_seed", std::to_string(cfg.train.seed)},
          {"trainable_parameters", std::to_string(net.trainable_parameter_count())},
          {"frozen_checksum", hex64(net.frozen_checksum())},
          {"state_checksum", hex64(net.state_checksum())}};
}

// ---- ablation -------------------------------------------------------------------

std::vector<AblationRowSpec> ablation_rows(const AblationSpec& spec) {
  std::vector<AblationRowSpec> rows;
  for (ModalityMode mode : spec.modes) {
    const std::string m(modality_mode_name(mode));
    for (bool ama : {false, true})
      for (bool lavs : {false, true}) {
        if (lavs && (!ama || mode != ModalityMode::RGBT)) continue;
        const std::string label = m + (ama ? (lavs ? "+AMA+LAVS" : "+AMA") : "-baseline");
        rows.push_back({label, mode, ama, lavs});
      }
  }
  return rows;
}

AblationTable run_ablation(const AblationSpec& spec, const RunConfig& base, const DatasetManifest& m,
                           const std::optional<std::filesystem::path>& out_dir) {
  AblationTable table;
  for (const auto& row : ablation_rows(spec)) {
    RunConfig cfg = base;
    cfg.model.mode = row.mode;
    cfg.model.use_ama = row.use_ama;
    cfg.model.use_lavs = row.use_lavs;
    cfg.validate();
    VgNet net(cfg.model);
    const TrainResult tr = train(net, cfg.train, m);
    if (out_dir) save_checkpoint(*out_dir / row.label, cfg, net, tr);
    auto result = evaluate(net, m, cfg.eval.workers, report_metadata(cfg, net));
    table.rows.push_back({row, std::move(result.report)});
  }
  return table;
}

std::string emit_ablation(const AblationTable& table, ReportFormat format) {
  switch (format) {
    case ReportFormat::json: {
      ojson j;
      j["rows"] = ojson::array();
      for (const auto& r : table.rows) {
        ojson row;
        row["label"] = r.spec.label;
        row["mode"] = std::string(modality_mode_name(r.spec.mode));
        row["use_ama"] = r.spec.use_ama;
        row["use_lavs"] = r.spec.use_lavs;
        row["report"] = report_json(r.report);
        j["rows"].push_back(row);
      }
      return j.dump(2) + "\n";
    }
    case ReportFormat::csv: {
      std::string out = "label,mode,use_ama,use_lavs,split,count,hits,accuracy\n";
      for (const auto& r : table.rows)
        for (const auto& [name, c] : r.report.splits) {
          const auto a = c.accuracy();
          out += r.spec.label + "," + std::string(modality_mode_name(r.spec.mode)) + "," +
                 (r.spec.use_ama ? "true" : "false") + "," + (r.spec.use_lavs ? "true" : "false") + "," + name + "," +
                 std::to_string(c.count) + "," + std::to_string(c.hits) + "," + (a ? shortest(*a) : "") + "\n";
        }
      return out;
    }
    case ReportFormat::markdown: {
      std::ostringstream o;
      o << "# Ablation of AMA and LAVS\n\n| Mode | AMA | LAVS |";
      for (const auto& n : kReportSplits) o << " " << n << " |";
      o << "\n|---|:---:|:---:|";
      for (std::size_t i = 0; i < kReportSplits.size(); ++i) o << "---:|";
      o << "\n";
      for (const auto& r : table.rows) {
        o << "| " << modality_mode_name(r.spec.mode) << " | " << (r.spec.use_ama ? "✓" : "") << " | "
          << (r.spec.use_lavs ? "✓" : "") << " |";
        for (const auto& [n, c] : r.report.splits) o << " " << percent(c) << " |";
        o << "\n";
      }
      return o.str();
    }
  }
  throw std::invalid_argument("unknown report format");
}

AblationTable ablation_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::ordered_json::parse(text);
    AblationTable t;
    for (const auto& row : j.at("rows")) {
      AblationRowSpec s{row.at("label").get<std::string>(), modality_mode_from_name(row.at("mode").get<std::string>()),
                        row.at("use_ama").get<bool>(), row.at("use_lavs").get<bool>()};
      t.rows.push_back({s, report_from(row.at("report"))});
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed ablation table: ") + e.what());
  }
}

}  // namespace rgbtvg
