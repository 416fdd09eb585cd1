#pragma once

// The acceptance suite A1-A10. Shared by the `selfcheck` subcommand and the
// acceptance test binary so both exercise the same code.

#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <vector>

namespace rgbtvg {

struct CheckOptions {
  // Fewer random draws for a quicker pass; tolerances are unchanged.
  bool fast = false;
  // Scratch space for generated corpora and checkpoints.
  std::filesystem::path work_dir = std::filesystem::temp_directory_path() / "rgbtvg-checks";
  // Directory holding the prompt golden files.
  std::filesystem::path golden_dir;
  // Empty runs everything.
  std::set<std::string> only;
};

struct CheckResult {
  std::string id;
  std::string title;
  bool passed = false;
  std::string detail;
  double seconds = 0;
};

const std::vector<std::string>& check_ids();
CheckResult run_check(const std::string& id, const CheckOptions& opt);
std::vector<CheckResult> run_checks(const CheckOptions& opt,
                                    const std::function<void(const CheckResult&)>& on_result = {});

/// "PASS A1 identity at init (0.8s): ..." on one line.
std::string format_check(const CheckResult& r);

/// Default golden directory, baked in at build time.
std::filesystem::path default_golden_dir();

}  // namespace rgbtvg
