#pragma once

// Run configuration: one TOML-style file fully determines a run. Unknown keys
// and invalid cross-field combinations are rejected before any work starts.

#include <filesystem>
#include <string>
#include <vector>

#include "rgbtvg/pipeline.hpp"
#include "rgbtvg/toml.hpp"
#include "rgbtvg/train.hpp"
#include "rgbtvg/vgnet.hpp"

namespace rgbtvg {

struct AnnotationSettings {
  int max_retries = 2;
  int workers = 1;
};

struct EvalConfig {
  int workers = 1;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  FilterConfig filter;
  AnnotationSettings annotation;
  EvalConfig eval;
  std::vector<ModalityMode> ablation_modes = {ModalityMode::RGBT};

  void validate() const;
};

/// Desk-scale profile (n=2, d=32, 64x64 input) used by tests and the self-check.
RunConfig toy_run_config();
/// Dimensions of the full-size model (224x224 input, 12-layer towers).
RunConfig full_run_config();

/// Keys absent from `text` keep the toy-profile defaults.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
/// Canonical text; parse_run_config(run_config_to_toml(c)) reproduces c.
std::string run_config_to_toml(const RunConfig& cfg);

}  // namespace rgbtvg
