#include "doctest.h"
#include "rgbtvg/config.hpp"

using namespace rgbtvg;

TEST_CASE("toml subset") {
  const auto doc = TomlDocument::parse(R"(# leading comment
top = 1
[a.b]
name = "x \"quoted\"\tz"  # trailing comment
ratio = 2.5
neg = -3
flag = true
list = [1, 2,
        3]  # spans lines
words = ["p", "q"]
empty = []
)");
  CHECK(doc.find("top")->as_int("top") == 1);
  CHECK(doc.find("a.b.name")->as_string("n") == "x \"quoted\"\tz");
  CHECK(doc.find("a.b.ratio")->as_double("r") == 2.5);
  CHECK(doc.find("a.b.neg")->as_double("n") == -3.0);
  CHECK(doc.find("a.b.flag")->as_bool("f"));
  CHECK(doc.find("a.b.list")->as_array("l").size() == 3);
  CHECK(doc.find("a.b.list")->line == 8);
  CHECK(doc.find("a.b.words")->as_array("w")[1].as_string("w") == "q");
  CHECK(doc.find("a.b.empty")->as_array("e").empty());
  CHECK(doc.tables().contains("a.b"));
  CHECK(doc.find("missing") == nullptr);
}

TEST_CASE("toml errors carry line numbers") {
  CHECK_THROWS_WITH_AS(TomlDocument::parse("a = 1\na = 2\n"), doctest::Contains("line 2: key 'a' defined twice"), TomlError);
  CHECK_THROWS_WITH_AS(TomlDocument::parse("[t]\n[t]\n"), doctest::Contains("defined twice"), TomlError);
  CHECK_THROWS_WITH_AS(TomlDocument::parse("\n\nx = \"open\n"), doctest::Contains("line 3: unterminated string"), TomlError);
  CHECK_THROWS_WITH_AS(TomlDocument::parse("x = 1 2\n"), doctest::Contains("trailing"), TomlError);
  CHECK_THROWS_WITH_AS(TomlDocument::parse("x = 1.2.3\n"), doctest::Contains("invalid"), TomlError);
  CHECK_THROWS_AS(TomlDocument::parse("x = [1, 2\n"), TomlError);
  const auto doc = TomlDocument::parse("\nx = \"s\"\n");
  CHECK_THROWS_WITH_AS(doc.find("x")->as_int("x"), doctest::Contains("line 2: 'x' must be"), TomlError);
}

TEST_CASE("toml number formatting round trips") {
  for (double v : {0.0, 1.0, 1e-4, 0.1, 123456.789, 1e300, -2.5}) {
    const auto doc = TomlDocument::parse("v = " + toml_double(v) + "\n");
    CHECK(doc.find("v")->as_double("v") == v);
    CHECK(std::holds_alternative<double>(doc.find("v")->v));
  }
  CHECK(toml_quote("a\"b\\c") == "\"a\\\"b\\\\c\"");
}

TEST_CASE("run config round trip") {
  for (const RunConfig& c : {toy_run_config(), full_run_config()}) {
    const std::string text = run_config_to_toml(c);
    const RunConfig back = parse_run_config(text);
    CHECK(run_config_to_toml(back) == text);
  }
  RunConfig c = toy_run_config();
  c.model.mode = ModalityMode::RGB;
  c.model.use_lavs = false;
  c.model.ama.alpha_v = 2.0;
  c.model.ama.layers = {2};
  c.model.ama.groups.push_back({{2}, 4, 16, {}, 3.0});
  c.model.ama.targets = {Projection::key, Projection::output};
  c.train.steps = 40;
  c.filter.excluded_categories = {"dog"};
  c.ablation_modes = {ModalityMode::TIR, ModalityMode::RGB};
  const RunConfig back = parse_run_config(run_config_to_toml(c));
  CHECK(back.model.mode == ModalityMode::RGB);
  CHECK(back.model.ama.alpha_v == 2.0);
  CHECK(back.model.ama.groups.size() == 1);
  CHECK(back.model.ama.groups[0].alpha_t == 3.0);
  CHECK(back.model.ama.targets == c.model.ama.targets);
  CHECK(back.train.steps == 40);
  CHECK(back.filter.excluded_categories == std::set<std::string>{"dog"});
  CHECK(back.ablation_modes == c.ablation_modes);
  CHECK(run_config_to_toml(back) == run_config_to_toml(c));
}

TEST_CASE("absent keys keep the toy defaults") {
  const RunConfig c = parse_run_config("[train]\nsteps = 5\n");
  CHECK(c.train.steps == 5);
  CHECK(c.model.encoder.dim == 32);
  CHECK(c.model.ama.r_v == 8);
  CHECK(c.model.ama.r_t == 32);
  CHECK(c.train.learning_rate == 1e-3);
}

TEST_CASE("unknown keys and tables are rejected") {
  CHECK_THROWS_WITH_AS(parse_run_config("[train]\nsteps = 5\nlr = 0.1\n"), doctest::Contains("line 3: unknown key 'train.lr'"),
                       TomlError);
  CHECK_THROWS_WITH_AS(parse_run_config("[optimizer]\n"), doctest::Contains("unknown table [optimizer]"), TomlError);
  CHECK_THROWS_WITH_AS(parse_run_config("[encoder]\ndim = \"wide\"\n"), doctest::Contains("'encoder.dim' must be"), TomlError);
}

TEST_CASE("cross-field rules are enforced at parse time") {
  CHECK_THROWS_WITH_AS(parse_run_config("[ama]\nr_v = 16\nr_t = 8\n"), doctest::Contains("r_v"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_run_config("[model]\nuse_ama = false\n"), doctest::Contains("use_lavs requires use_ama"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(parse_run_config("[model]\nmode = \"TIR\"\n"),
                       doctest::Contains("use_lavs requires modality mode RGBT"), ConfigError);
  CHECK_NOTHROW(parse_run_config("[model]\nmode = \"TIR\"\n[lavs]\nenabled = false\n"));
  CHECK_THROWS_AS(parse_run_config("[encoder]\nnum_heads = 5\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[train]\nlearning_rate = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[filter]\nmin_category_share = 1.5\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_run_config("[ablation]\nmodes = []\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[ablation]\nmodes = [\"RGBD\"]\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[ama]\ntargets = [\"gate\"]\n"), std::invalid_argument);
}

TEST_CASE("config files") {
  CHECK_THROWS_AS(load_run_config("/nonexistent/run.toml"), std::runtime_error);
  const auto path = std::filesystem::path(RGBTVG_TEST_DATA) / ".." / "configs";
  for (const char* name : {"toy.toml", "full.toml"}) {
    CAPTURE(name);
    CHECK_NOTHROW(load_run_config(path / name));
  }
  const RunConfig full = load_run_config(path / "full.toml");
  CHECK(full.model.encoder.dim == 768);
  CHECK(full.model.encoder.num_layers == 12);
  CHECK(full.model.encoder.num_visual_tokens() == 197);
  CHECK(full.model.ama.r_v == 8);
  CHECK(full.model.ama.r_t == 32);
  CHECK(full.train.learning_rate == 1e-4);
  CHECK(full.train.epochs == 120);
  CHECK(full.model.loss.l1 == 5.0);
  CHECK(full.model.loss.giou == 2.0);
  const RunConfig toy = load_run_config(path / "toy.toml");
  CHECK(run_config_to_toml(toy) == run_config_to_toml(toy_run_config()));
}
