#pragma once

// Evaluation reports, prediction dumps, checkpoints and the ablation runner.

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rgbtvg/config.hpp"
#include "rgbtvg/dataset.hpp"
#include "rgbtvg/train.hpp"
#include "rgbtvg/vgnet.hpp"

namespace rgbtvg {

struct Cell {
  std::size_t count = 0;
  std::size_t hits = 0;
  // Undefined (nullopt) for an empty cell, never 0.
  std::optional<double> accuracy() const;
  bool operator==(const Cell&) const = default;
};

struct AxisBreakdown {
  Axis axis;
  std::vector<std::pair<std::string, Cell>> cells;  // code order
  bool operator==(const AxisBreakdown&) const = default;
};

inline const std::vector<std::string> kReportSplits = {"val", "test", "testA", "testB", "testC"};

struct EvalReport {
  std::vector<std::pair<std::string, std::string>> metadata;
  std::vector<std::pair<std::string, Cell>> splits;  // kReportSplits order
  std::vector<AxisBreakdown> axes;                   // over the test split, kAllAxes order
  bool operator==(const EvalReport&) const = default;

  const Cell& split(const std::string& name) const;
  const Cell& cell(Axis axis, const std::string& value) const;
};

struct PredictionRow {
  std::string id;
  std::optional<PixelBox> pred;  // clipped to the frame; nullopt when nothing remains
  PixelBox gt{0, 0, 1, 1};
  double iou = 0.0;
};

using Predictor = std::function<NormBox(const GroundingRecord&)>;

/// Predictions for every val and test record, in manifest order.
std::vector<PredictionRow> predict_records(const DatasetManifest& m, const Predictor& predictor);
std::vector<PredictionRow> predict_records(const VgNet& net, const DatasetManifest& m, int workers = 1);

/// Counts hits per split and per attribute cell from prediction rows.
EvalReport score_predictions(const DatasetManifest& m, const std::vector<PredictionRow>& rows,
                             std::vector<std::pair<std::string, std::string>> metadata = {});

struct EvalResult {
  EvalReport report;
  std::vector<PredictionRow> predictions;
};
EvalResult evaluate(const VgNet& net, const DatasetManifest& m, int workers = 1,
                    std::vector<std::pair<std::string, std::string>> metadata = {});

// Line-delimited {id, pred_bbox, gt_bbox, iou}; boxes in pixel corner form.
std::string prediction_dump(const std::vector<PredictionRow>& rows);
std::vector<PredictionRow> parse_prediction_dump(const std::string& text);

enum class ReportFormat { markdown, csv, json };
ReportFormat report_format_from_name(std::string_view s);
std::string emit_report(const EvalReport& report, ReportFormat format);
EvalReport report_from_json(const std::string& text);

// ---- checkpoints --------------------------------------------------------------

struct CheckpointMeta {
  std::uint64_t frozen_checksum = 0;
  std::uint64_t state_checksum = 0;
  int steps = 0;
  std::optional<double> best_val;
  int best_step = 0;
};

/// <dir>/model.bin, run.toml, meta.json, loss_curve.csv
void save_checkpoint(const std::filesystem::path& dir, const RunConfig& cfg, const VgNet& net,
                     const TrainResult& result);

struct Checkpoint {
  RunConfig config;
  std::unique_ptr<VgNet> model;
  CheckpointMeta meta;
};
/// Rebuilds the model from run.toml and verifies the frozen and trained checksums.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

std::vector<std::pair<std::string, std::string>> report_metadata(const RunConfig& cfg, const VgNet& net);

// ---- ablation -----------------------------------------------------------------

struct AblationSpec {
  std::vector<ModalityMode> modes = {ModalityMode::RGBT};
};

struct AblationRowSpec {
  std::string label;
  ModalityMode mode;
  bool use_ama;
  bool use_lavs;
};

/// Only combinations the model accepts: no LAVS without AMA, LAVS only for RGBT.
std::vector<AblationRowSpec> ablation_rows(const AblationSpec& spec);

struct AblationRow {
  AblationRowSpec spec;
  EvalReport report;
};

struct AblationTable {
  std::vector<AblationRow> rows;
};

/// Trains and evaluates each row from `base`; checkpoints land in <out_dir>/<label> when out_dir is set.
AblationTable run_ablation(const AblationSpec& spec, const RunConfig& base, const DatasetManifest& m,
                           const std::optional<std::filesystem::path>& out_dir = std::nullopt);
std::string emit_ablation(const AblationTable& table, ReportFormat format);
AblationTable ablation_from_json(const std::string& text);

std::string hex64(std::uint64_t v);

}  // namespace rgbtvg
