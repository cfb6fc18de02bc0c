#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "polyprobe/commands.hpp"

using namespace polyprobe;
namespace fs = std::filesystem;

namespace {

const fs::path kToy = fs::path(POLYPROBE_FIXTURE_DIR) / "toy";

class TempDir {
 public:
  explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / ("polyprobe_cli_" + name)) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run(const std::string& args) {
  const std::string cmd = std::string(POLYPROBE_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

cli::RunConfig toy_config(const fs::path& output) {
  auto c = cli::load_config(kToy / "config.json");
  c.output = output;
  return c;
}

/// Minimal splitter; the metrics tables never quote fields.
std::vector<std::map<std::string, std::string>> read_rows(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::vector<std::string> header;
  std::vector<std::map<std::string, std::string>> rows;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string f;
    while (std::getline(ss, f, ',')) out.push_back(f);
    if (!s.empty() && s.back() == ',') out.emplace_back();
    return out;
  };
  std::getline(in, line);
  header = split(line);
  while (std::getline(in, line)) {
    auto fields = split(line);
    std::map<std::string, std::string> row;
    for (std::size_t i = 0; i < header.size(); ++i) row[header[i]] = fields.at(i);
    rows.push_back(row);
  }
  return rows;
}

double num(const std::string& s) { return s == "NA" ? std::nan("") : std::stod(s); }

struct Acc {
  std::vector<double> v;
  double mean() const {
    double s = 0;
    for (double x : v) s += x;
    return s / v.size();
  }
  double se() const {
    if (v.size() < 2) return std::nan("");
    double m = mean(), ss = 0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / (v.size() - 1) / v.size());
  }
};

void expect_close(const std::string& text, double expected) {
  if (std::isnan(expected)) {
    EXPECT_EQ(text, "NA");
  } else {
    EXPECT_NEAR(num(text), expected, 1e-12);
  }
}

}  // namespace

TEST(CliValidate, ExitCodes) {
  EXPECT_EQ(run("validate " + (kToy / "traces").string()), 0);
  EXPECT_EQ(run("validate " + (kToy / "traces" / "multi_small__toy_es").string() + " --strict"), 0);

  TempDir tmp("validate");
  fs::copy(kToy / "traces" / "multi_small__toy_es", tmp.path() / "bad", fs::copy_options::recursive);
  const fs::path payload = tmp.path() / "bad" / "sentences" / "toy_es-1#a.bin";
  ASSERT_TRUE(fs::exists(payload));
  fs::resize_file(payload, fs::file_size(payload) - 4);
  EXPECT_EQ(run("validate " + (tmp.path() / "bad").string()), 1);
  EXPECT_EQ(run("validate " + (tmp.path() / "nowhere").string()), 3);
}

TEST(CliMetrics, TwoModelRunWritesBothTables) {
  TempDir tmp("two_model");
  fs::create_directories(tmp.path() / "traces");
  for (const char* d : {"mono_en_small__toy_en", "multi_small__toy_en"}) {
    fs::copy(kToy / "traces" / d, tmp.path() / "traces" / d, fs::copy_options::recursive);
  }
  const std::string args = "--dataset " + (kToy / "datasets" / "toy_en.json").string() + " --trace-root " +
                           (tmp.path() / "traces").string() + " --output " + (tmp.path() / "out").string();
  ASSERT_EQ(run("metrics " + args), 0);
  EXPECT_TRUE(fs::exists(tmp.path() / "out" / "metrics.csv"));
  EXPECT_TRUE(fs::exists(tmp.path() / "out" / "sentence_metrics.csv"));
  EXPECT_EQ(read_rows(tmp.path() / "out" / "metrics.csv").size(), 2u * 5u);

  // Two models cannot support the model-mix analyses: exit 0 with explicit diagnostics.
  ASSERT_EQ(run("analyze --output " + (tmp.path() / "out").string()), 0);
  auto diag = nlohmann::json::parse(slurp(tmp.path() / "out" / "analysis" / "diagnostics.json"));
  std::set<std::string> emitted;
  for (const auto& e : fs::directory_iterator(tmp.path() / "out" / "analysis")) emitted.insert(e.path().filename());
  for (const char* name : {"penalty", "isotropy", "attention", "tokens_target", "max_r2", "ladder"}) {
    bool diagnosed = false;
    for (const auto& d : diag) diagnosed = diagnosed || std::string(name).starts_with(d.at("analysis").get<std::string>());
    EXPECT_TRUE(emitted.contains(std::string(name) + ".json") || diagnosed) << name;
  }
}

TEST(CliMetrics, MissingInputsMapToExitCodes) {
  TempDir tmp("missing");
  const std::string out = " --output " + (tmp.path() / "out").string();
  EXPECT_EQ(run("metrics --dataset " + (tmp.path() / "nope.json").string() + " --trace-root " +
                (kToy / "traces").string() + out),
            exit_code_for(ErrorKind::MissingTrace));
  EXPECT_EQ(run("metrics --dataset " + (kToy / "datasets" / "toy_en.json").string() + " --trace-root " +
                (tmp.path() / "none").string() + out),
            exit_code_for(ErrorKind::MissingTrace));
  EXPECT_FALSE(fs::exists(tmp.path() / "out"));
  EXPECT_EQ(run("analyze" + out), exit_code_for(ErrorKind::MissingAnalysis));
  EXPECT_EQ(run("report" + out), exit_code_for(ErrorKind::MissingAnalysis));
  EXPECT_EQ(run("simulate --scenario bogus" + out), exit_code_for(ErrorKind::InvalidConfig));
  EXPECT_EQ(run("metrics --config " + (kToy / "config.json").string() + " --grain layer" + out), 1);
  EXPECT_EQ(run("metrics --config " + (kToy / "config.json").string() + out), 0);
  EXPECT_EQ(run("analyze --grain sideways" + out), 1);
  EXPECT_FALSE(fs::exists(tmp.path() / "out" / "analysis"));
  EXPECT_NE(run("frobnicate"), 0);
}

TEST(CliMetrics, ErrorReportIsJson) {
  std::ostringstream err;
  const int code = cli::run_guarded("analyze", err, [&]() -> int { fail(ErrorKind::MissingAnalysis, "gone"); });
  EXPECT_EQ(code, 3);
  auto j = nlohmann::json::parse(err.str());
  EXPECT_EQ(j.at("error"), "MissingAnalysis");
  EXPECT_EQ(j.at("exit_code"), 3);
}

TEST(CliMetrics, FlagsOverrideConfig) {
  TempDir tmp("override");
  auto c = toy_config(tmp.path());
  c.include_embedding_layer = false;
  cli::cmd_metrics(c);
  for (const auto& row : read_rows(tmp.path() / "metrics.csv")) EXPECT_NE(row.at("layer"), "0");
}

TEST(CliPipeline, RerunIsByteIdentical) {
  TempDir a("rerun_a"), b("rerun_b");
  for (const auto* dir : {&a, &b}) {
    auto c = toy_config(dir->path());
    cli::cmd_metrics(c);
    cli::cmd_analyze(c);
    cli::cmd_report(c);
  }
  std::size_t compared = 0;
  for (const auto& e : fs::recursive_directory_iterator(a.path())) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a.path());
    EXPECT_EQ(slurp(e.path()), slurp(b.path() / rel)) << rel;
    ++compared;
  }
  EXPECT_GE(compared, 3u + 15u + 10u);
}

TEST(CliReport, FigureTablesMatchIndependentAggregation) {
  TempDir tmp("report");
  auto c = toy_config(tmp.path());
  cli::cmd_metrics(c);
  auto bundle = cli::cmd_analyze(c);
  EXPECT_TRUE(bundle.diagnostics.empty());
  cli::cmd_report(c);
  const fs::path figs = tmp.path() / "figures";
  for (const char* f : {"fig1_max_r2_by_size", "fig2a_isotropy_by_depth", "fig2b_attention_by_depth",
                        "fig3_aic_ladder", "fig4_token_fertility"}) {
    EXPECT_TRUE(fs::exists(figs / (std::string(f) + ".csv"))) << f;
    EXPECT_TRUE(slurp(figs / (std::string(f) + ".svg")).starts_with("<svg")) << f;
  }

  const auto metrics = read_rows(tmp.path() / "metrics.csv");

  // fig3: baseline row is zero
  bool saw_baseline = false;
  for (const auto& row : read_rows(figs / "fig3_aic_ladder.csv")) {
    if (row.at("label") == "Baseline") {
      saw_baseline = true;
      EXPECT_EQ(num(row.at("delta_aic")), 0.0);
    }
  }
  EXPECT_TRUE(saw_baseline);

  // fig2: one row per (multilingual, bin) and values from a fresh aggregation
  for (auto [file, column] : {std::pair{"fig2a_isotropy_by_depth.csv", "mean_ci"},
                              std::pair{"fig2b_attention_by_depth.csv", "max_attn"}}) {
    std::map<std::pair<std::string, int>, Acc> cells;
    for (const auto& row : metrics) {
      const double v = num(row.at(column));
      if (std::isnan(v)) continue;
      const int bin = std::min(9, static_cast<int>(std::floor(num(row.at("depth")) * 10 + 1e-9)));
      cells[{row.at("multilingual"), bin}].v.push_back(v);
    }
    const auto fig = read_rows(figs / file);
    ASSERT_EQ(fig.size(), cells.size()) << file;
    std::set<std::pair<std::string, std::string>> keys;
    for (const auto& row : fig) {
      EXPECT_TRUE(keys.insert({row.at("multilingual"), row.at("depth_bin")}).second);
      const auto& acc = cells.at({row.at("multilingual"), std::stoi(row.at("depth_bin"))});
      expect_close(row.at("mean"), acc.mean());
      expect_close(row.at("se"), acc.se());
      EXPECT_EQ(std::stoul(row.at("n")), acc.v.size());
    }
  }

  // fig1: best layer per (model, dataset)
  std::map<std::pair<std::string, std::string>, double> best;
  for (const auto& row : metrics) {
    const double r2 = num(row.at("r2"));
    auto [it, fresh] = best.try_emplace({row.at("model_id"), row.at("dataset_id")}, r2);
    if (!fresh) it->second = std::max(it->second, r2);
  }
  const auto fig1 = read_rows(figs / "fig1_max_r2_by_size.csv");
  ASSERT_EQ(fig1.size(), best.size());
  for (const auto& row : fig1) EXPECT_EQ(num(row.at("max_r2")), best.at({row.at("model"), row.at("dataset")}));

  // fig4: layer-0 token counts per model, summarised by (multilingual, language)
  std::map<std::pair<std::string, std::string>, Acc> target, cue;
  for (const auto& row : metrics) {
    if (row.at("layer") != "0") continue;
    target[{row.at("multilingual"), row.at("language")}].v.push_back(num(row.at("mean_target_tokens")));
    cue[{row.at("multilingual"), row.at("language")}].v.push_back(num(row.at("mean_cue_tokens")));
  }
  const auto fig4 = read_rows(figs / "fig4_token_fertility.csv");
  ASSERT_EQ(fig4.size(), target.size());
  for (const auto& row : fig4) {
    const auto key = std::pair{row.at("multilingual"), row.at("language")};
    expect_close(row.at("target_tokens_mean"), target.at(key).mean());
    expect_close(row.at("target_tokens_se"), target.at(key).se());
    expect_close(row.at("cue_tokens_mean"), cue.at(key).mean());
  }
}

TEST(CliReport, AgreementCeilingOnlyWhenSupplied) {
  TempDir tmp("ceiling");
  auto c = toy_config(tmp.path());
  cli::cmd_metrics(c);
  cli::cmd_analyze(c);
  cli::cmd_report(c);
  EXPECT_FALSE(fs::exists(tmp.path() / "figures" / "agreement_ceilings.csv"));
  EXPECT_EQ(slurp(tmp.path() / "figures" / "fig1_max_r2_by_size.svg").find("agreement"), std::string::npos);

  auto manifest = nlohmann::json::parse(slurp(kToy / "datasets" / "toy_en.json"));
  manifest["csv_path"] = (kToy / "datasets" / "toy_en.csv").string();
  manifest["agreement_ceiling"] = 0.79;
  const fs::path edited = tmp.path() / "toy_en_ceiling.json";
  std::ofstream(edited) << manifest.dump();
  c.datasets = {edited, kToy / "datasets" / "toy_es.json"};
  cli::cmd_report(c);
  const auto rows = read_rows(tmp.path() / "figures" / "agreement_ceilings.csv");
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].at("dataset"), "toy_en");
  expect_close(rows[0].at("agreement_ceiling"), 0.79);
  EXPECT_NE(slurp(tmp.path() / "figures" / "fig1_max_r2_by_size.svg").find("toy_en agreement"), std::string::npos);
}

TEST(CliSimulate, SeedDeterminesOutput) {
  TempDir tmp("simulate");
  auto sim = [&](const std::string& name, int seed) {
    EXPECT_EQ(run("simulate --scenario penalty --seed " + std::to_string(seed) + " --output " +
                  (tmp.path() / name).string()),
              0);
    return slurp(tmp.path() / name / "metrics.csv");
  };
  const auto a = sim("a", 5);
  EXPECT_EQ(a, sim("b", 5));
  EXPECT_NE(a, sim("c", 6));
  const auto j = nlohmann::json::parse(slurp(tmp.path() / "a" / "simulation.json"));
  EXPECT_EQ(j.at("seed"), 5);
  EXPECT_EQ(j.at("effects").at("r2_multilingual"), -0.1);
  EXPECT_EQ(run("analyze --output " + (tmp.path() / "a").string()), 0);
}

TEST(ToyFixture, GeneratorReproducesCommittedFixture) {
  TempDir tmp("fixture");
  const std::string cmd = std::string(MAKE_TOY_FIXTURE) + " " + (tmp.path() / "toy").string();
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(kToy)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), kToy);
    EXPECT_EQ(slurp(e.path()), slurp(tmp.path() / "toy" / rel)) << rel;
    ++files;
  }
  std::size_t regenerated = 0;
  for (const auto& e : fs::recursive_directory_iterator(tmp.path() / "toy")) regenerated += e.is_regular_file();
  EXPECT_EQ(files, regenerated);
}
