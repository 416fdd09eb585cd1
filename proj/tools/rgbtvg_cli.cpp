// rgbtvg: dataset construction, training, evaluation and self-checks.

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "rgbtvg/annotation_client.hpp"
#include "rgbtvg/checks.hpp"
#include "rgbtvg/config.hpp"
#include "rgbtvg/eval.hpp"
#include "rgbtvg/pipeline.hpp"
#include "rgbtvg/synthetic.hpp"
#include "rgbtvg/train.hpp"

namespace fs = std::filesystem;
using namespace rgbtvg;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << text;
    if (!out) throw std::runtime_error("write failed for " + p.string());
  }
  fs::rename(tmp, p);
}

// Format from an explicit name, else from the output extension.
ReportFormat pick_format(const std::string& name, const fs::path& out) {
  if (!name.empty()) return report_format_from_name(name);
  const std::string ext = out.extension().string();
  if (ext == ".csv") return ReportFormat::csv;
  if (ext == ".json") return ReportFormat::json;
  return ReportFormat::markdown;
}

RunConfig config_or_toy(const std::string& path) { return path.empty() ? toy_run_config() : load_run_config(path); }

struct BuildArgs {
  std::string raw, out, config, stub;
  int workers = 0, retries = -1;
};

int cmd_build_dataset(const BuildArgs& a) {
  RunConfig rc = config_or_toy(a.config);
  BuildConfig bc;
  bc.filter = rc.filter;
  bc.max_retries = a.retries >= 0 ? a.retries : rc.annotation.max_retries;
  bc.workers = a.workers > 0 ? a.workers : rc.annotation.workers;
  bc.generated_at = reproducible_timestamp();
  const auto raw = load_raw_corpus(a.raw);

  auto run = [&](AnnotationClient& client) {
    BuildResult res = build_manifest(raw, bc, client);
    // Image paths in the manifest are stored relative to the manifest's directory when possible.
    std::vector<GroundingRecord> records = res.manifest.records();
    const fs::path base = fs::absolute(fs::path(a.out)).parent_path();
    for (auto& r : records)
      for (std::string* p : {&r.rgb_path, &r.tir_path}) {
        const fs::path rel = fs::absolute(*p).lexically_relative(base);
        if (!rel.empty() && *rel.begin() != "..") *p = rel.generic_string();
      }
    save_manifest(DatasetManifest(std::move(records), res.manifest.provenance()), a.out);
    const auto& s = res.stats;
    std::cerr << "input " << s.input << ", kept after filter " << s.kept_after_filter << ", annotated " << s.annotated
              << ", dropped " << s.dropped << ", calls " << s.calls << ", retries " << s.retries << "\n";
    for (const auto& [rule, n] : s.rejected) std::cerr << "  rejected by " << filter_rule_name(rule) << ": " << n << "\n";
    for (const auto& [kind, n] : s.failures_by_kind) std::cerr << "  failed " << kind << ": " << n << "\n";
  };
  if (!a.stub.empty()) {
    StubAnnotationClient client = StubAnnotationClient::from_file(a.stub);
    run(client);
  } else {
    HttpAnnotationClient client(HttpClientConfig::from_env());
    run(client);
  }
  return 0;
}

struct GenArgs {
  std::string out;
  std::uint64_t seed = 7;
  std::size_t records = 64;
  int image_size = 64;
};

int cmd_gen_synthetic(const GenArgs& a) {
  SyntheticCorpusSpec spec;
  spec.seed = a.seed;
  spec.num_records = a.records;
  spec.image_size = a.image_size;
  const DatasetManifest m = generate_synthetic_corpus(spec, a.out);
  std::cerr << "wrote " << m.size() << " records to " << (fs::path(a.out) / "manifest.jsonl").string() << "\n";
  return 0;
}

struct TrainArgs {
  std::string config, manifest, out;
  int steps = 0;
};

int cmd_train(const TrainArgs& a) {
  RunConfig rc = config_or_toy(a.config);
  if (a.steps > 0) rc.train.steps = a.steps;
  rc.validate();
  const DatasetManifest m = load_manifest(a.manifest);
  VgNet net(rc.model);
  TrainHooks hooks;
  int last_epoch = -1;
  hooks.on_step = [&](const StepLog& s) {
    if (s.epoch != last_epoch) {
      last_epoch = s.epoch;
      std::cerr << "epoch " << s.epoch << " step " << s.step << " loss " << s.loss << "\n";
    }
  };
  hooks.on_validation = [](const ValLog& v) { std::cerr << "step " << v.step << " val Acc@0.5 " << v.accuracy << "\n"; };
  const TrainResult res = train(net, rc.train, m, hooks);
  save_checkpoint(a.out, rc, net, res);
  std::cerr << "trained " << res.steps << " steps";
  if (res.best_val) std::cerr << ", best val Acc@0.5 " << *res.best_val << " at step " << res.best_step;
  std::cerr << "; checkpoint in " << a.out << "\n";
  return 0;
}

struct EvalArgs {
  std::string ckpt, manifest, report, format, dump;
  int workers = 0;
};

int cmd_eval(const EvalArgs& a) {
  const Checkpoint ck = load_checkpoint(a.ckpt);
  const DatasetManifest m = load_manifest(a.manifest);
  const int workers = a.workers > 0 ? a.workers : ck.config.eval.workers;
  const EvalResult ev = evaluate(*ck.model, m, workers, report_metadata(ck.config, *ck.model));
  const ReportFormat fmt = pick_format(a.format, a.report);
  write_file(a.report, emit_report(ev.report, fmt));
  if (fmt != ReportFormat::json) {
    fs::path js = a.report;
    js.replace_extension(".json");
    write_file(js, emit_report(ev.report, ReportFormat::json));
  }
  if (!a.dump.empty()) write_file(a.dump, prediction_dump(ev.predictions));
  for (const auto& [name, cell] : ev.report.splits) {
    std::cerr << name << ": ";
    if (auto acc = cell.accuracy()) std::cerr << *acc << " (" << cell.hits << "/" << cell.count << ")\n";
    else std::cerr << "undefined (no records)\n";
  }
  return 0;
}

struct AblateArgs {
  std::string spec, manifest, out, report, format;
};

int cmd_ablate(const AblateArgs& a) {
  const RunConfig rc = load_run_config(a.spec);
  const DatasetManifest m = load_manifest(a.manifest);
  const AblationSpec spec{rc.ablation_modes};
  for (const auto& row : ablation_rows(spec)) std::cerr << "row " << row.label << "\n";
  std::optional<fs::path> out;
  if (!a.out.empty()) out = fs::path(a.out);
  const AblationTable table = run_ablation(spec, rc, m, out);
  if (out) write_file(*out / "ablation.json", emit_ablation(table, ReportFormat::json));
  if (!a.report.empty()) write_file(a.report, emit_ablation(table, pick_format(a.format, a.report)));
  else std::cout << emit_ablation(table, a.format.empty() ? ReportFormat::markdown : report_format_from_name(a.format));
  return 0;
}

struct ReportArgs {
  std::string in, format, out;
};

int cmd_report(const ReportArgs& a) {
  const std::string text = read_file(a.in);
  const ReportFormat fmt = a.format.empty() ? pick_format("", a.out) : report_format_from_name(a.format);
  const auto j = nlohmann::json::parse(text);
  const std::string out = j.contains("rows") ? emit_ablation(ablation_from_json(text), fmt)
                                             : emit_report(report_from_json(text), fmt);
  if (a.out.empty()) std::cout << out;
  else write_file(a.out, out);
  return 0;
}

struct SelfcheckArgs {
  bool full = false;
  std::vector<std::string> only;
  std::string work_dir, golden_dir;
};

int cmd_selfcheck(const SelfcheckArgs& a) {
  CheckOptions opt;
  opt.fast = !a.full;
  if (!a.work_dir.empty()) opt.work_dir = a.work_dir;
  if (!a.golden_dir.empty()) opt.golden_dir = a.golden_dir;
  opt.only.insert(a.only.begin(), a.only.end());
  const auto results = run_checks(opt, [](const CheckResult& r) { std::cout << format_check(r) << std::endl; });
  const auto failed = std::count_if(results.begin(), results.end(), [](const auto& r) { return !r.passed; });
  std::cout << (failed == 0 ? "selfcheck passed" : "selfcheck FAILED") << " (" << results.size() - failed << "/"
            << results.size() << ")\n";
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RGB-thermal visual grounding: dataset construction, training, evaluation and self-checks", "rgbtvg"};
  app.require_subcommand(1);

  BuildArgs build;
  auto* b = app.add_subcommand("build-dataset", "filter a raw detection corpus, annotate it and write a manifest");
  b->add_option("--raw", build.raw, "directory holding raw.jsonl and the images")->required();
  b->add_option("--out", build.out, "manifest path to write")->required();
  b->add_option("--config", build.config, "run config (filter and annotation sections)");
  b->add_option("--stub", build.stub, "canned responses (JSON) instead of the HTTP annotation service");
  b->add_option("--workers", build.workers, "concurrent annotation requests");
  b->add_option("--max-retries", build.retries, "retries per prompt");

  GenArgs gen;
  auto* g = app.add_subcommand("gen-synthetic", "generate a synthetic paired RGB/TIR corpus");
  g->add_option("--out", gen.out, "output directory")->required();
  g->add_option("--seed", gen.seed, "corpus seed")->capture_default_str();
  g->add_option("--records", gen.records, "number of records")->capture_default_str();
  g->add_option("--image-size", gen.image_size, "square image side in pixels")->capture_default_str();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train a model and write a checkpoint directory");
  t->add_option("--config", tr.config, "run config (toy profile when omitted)");
  t->add_option("--manifest", tr.manifest, "dataset manifest")->required();
  t->add_option("--out", tr.out, "checkpoint directory")->required();
  t->add_option("--steps", tr.steps, "override the number of optimizer steps");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "evaluate a checkpoint on the val and test splits");
  e->add_option("--ckpt", ev.ckpt, "checkpoint directory")->required();
  e->add_option("--manifest", ev.manifest, "dataset manifest")->required();
  e->add_option("--report", ev.report, "report path (.md, .csv or .json)")->required();
  e->add_option("--format", ev.format, "markdown, csv or json (default: from the extension)");
  e->add_option("--dump", ev.dump, "write per-record predictions as JSON lines");
  e->add_option("--workers", ev.workers, "evaluation threads");

  AblateArgs ab;
  auto* a = app.add_subcommand("ablate", "train and evaluate the AMA/LAVS ablation rows");
  a->add_option("--spec", ab.spec, "run config; [ablation] modes selects the modality modes")->required();
  a->add_option("--manifest", ab.manifest, "dataset manifest")->required();
  a->add_option("--out", ab.out, "directory for per-row checkpoints and ablation.json");
  a->add_option("--report", ab.report, "table path (stdout when omitted)");
  a->add_option("--format", ab.format, "markdown, csv or json");

  ReportArgs rp;
  auto* r = app.add_subcommand("report", "re-emit a JSON report or ablation table in another format");
  r->add_option("--in", rp.in, "report.json or ablation.json")->required();
  r->add_option("--format", rp.format, "markdown, csv or json");
  r->add_option("--out", rp.out, "output path (stdout when omitted)");

  SelfcheckArgs sc;
  auto* s = app.add_subcommand("selfcheck", "run the acceptance suite");
  s->add_flag("--full", sc.full, "use the full random-draw counts");
  s->add_option("--only", sc.only, "check ids, e.g. A1 A5")->delimiter(',');
  s->add_option("--work-dir", sc.work_dir, "scratch directory");
  s->add_option("--golden-dir", sc.golden_dir, "prompt golden files");

  if (argc < 2) {
    std::cerr << app.help();
    return 2;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    std::cerr << app.help();
    return 2;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    if (name == "build-dataset") return cmd_build_dataset(build);
    if (name == "gen-synthetic") return cmd_gen_synthetic(gen);
    if (name == "train") return cmd_train(tr);
    if (name == "eval") return cmd_eval(ev);
    if (name == "ablate") return cmd_ablate(ab);
    if (name == "report") return cmd_report(rp);
    if (name == "selfcheck") return cmd_selfcheck(sc);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << name << ": " << ex.what() << "\n";
    return 1;
  }
  return 2;
}
