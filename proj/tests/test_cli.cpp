// End-to-end checks of the vdtlab binary: exit codes, emitted files, and
// agreement with the library the binary links. The binary path comes from the
// VDTLAB_BIN compile definition.
#include <doctest.h>
#include <json.hpp>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "vdtlab/manifest.hpp"
#include "vdtlab/model.hpp"
#include "vdtlab/reports.hpp"
#include "vdtlab/schedule.hpp"
#include "vdtlab/serialize.hpp"
#include "vdtlab/sparsity_lab.hpp"

namespace fs = std::filesystem;
using namespace vdtlab;
using vdtlab::testing::small_config;

namespace {

// Fresh per-case scratch directory under the system temp root.
fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "vdtlab_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Runs the tool with stdout and stderr captured into `log`.
int run_tool(const std::string& args, const fs::path& log) {
  const std::string cmd =
      std::string("\"") + VDTLAB_BIN + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void spit(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  REQUIRE(out.good());
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::istringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) fields.push_back(cell);
    if (!line.empty() && line.back() == ',') fields.push_back("");
    rows.push_back(std::move(fields));
  }
  return rows;
}

// Writes small_config() as JSON and returns the quoted --config argument.
std::string write_config(const fs::path& dir) {
  const fs::path path = dir / "config.json";
  spit(path, config_to_json(small_config()));
  return "--config \"" + path.string() + "\"";
}

bool same_bytes(const fs::path& a, const fs::path& b) { return slurp(a) == slurp(b); }

}  // namespace

TEST_SUITE_BEGIN("cli");

TEST_CASE("argument errors exit 2 and runtime errors exit 1") {
  const fs::path dir = scratch("exit_codes");
  const std::string cfg = write_config(dir);
  const fs::path log = dir / "log.txt";

  CHECK(run_tool("--help", log) == 0);
  CHECK(run_tool("generate --no-such-flag", log) == 2);
  CHECK(run_tool("generate " + cfg, log) == 2);  // missing required --out

  // Unparseable config file: config error, diagnostic on stderr.
  spit(dir / "bad.json", "{ not json");
  CHECK(run_tool("generate --config \"" + (dir / "bad.json").string() + "\" --out \"" +
                     (dir / "out").string() + "\"",
                 log) == 2);
  CHECK(slurp(log).find("config error") != std::string::npos);

  // Missing input file at run time.
  CHECK(run_tool("transfer " + cfg + " --trace \"" + (dir / "absent.atrc").string() +
                     "\" --out \"" + (dir / "out2").string() + "\"",
                 log) == 1);
}

TEST_CASE("generate writes deterministic artifacts") {
  const fs::path dir = scratch("generate_determinism");
  const std::string cfg = write_config(dir);
  const fs::path log = dir / "log.txt";
  const std::string seeds = " --seed 5 --noise-seed 6 --capture all";

  REQUIRE(run_tool("generate " + cfg + " --out \"" + (dir / "a").string() + "\"" + seeds,
                   log) == 0);
  REQUIRE(run_tool("generate " + cfg + " --out \"" + (dir / "b").string() + "\"" + seeds,
                   log) == 0);
  for (const char* name : {"manifest.json", "latents.tvlt", "trace.atrc"}) {
    CHECK(fs::exists(dir / "a" / name));
    CHECK(fs::exists(dir / "b" / name));
  }
  CHECK(same_bytes(dir / "a" / "latents.tvlt", dir / "b" / "latents.tvlt"));

  // The embedded manifests differ by --out, so compare traces record by record.
  const AttentionTrace ta = load_trace((dir / "a" / "trace.atrc").string());
  const AttentionTrace tb = load_trace((dir / "b" / "trace.atrc").string());
  REQUIRE(ta.records.size() == tb.records.size());
  CHECK(ta.filter_bitmap == tb.filter_bitmap);
  for (std::size_t i = 0; i < ta.records.size(); ++i) {
    const AttentionRecord& ra = ta.records[i];
    const AttentionRecord& rb = tb.records[i];
    CHECK(ra.layer == rb.layer);
    CHECK(ra.head == rb.head);
    CHECK(ra.step == rb.step);
    CHECK(bits_equal(ra.map, rb.map));
  }

  // The run the binary performed matches the library on the same seeds.
  const ModelConfig mc = small_config();
  const Model model = Model::build(mc);
  const DenoiseResult lib = denoise(model, make_noise(6, mc), make_prompt_embedding(5, mc),
                                    DenoiseSchedule::linear(mc.default_steps));
  const LoadedLatents got = load_latents((dir / "a" / "latents.tvlt").string());
  CHECK(bits_equal(got.data, lib.latents));
}

TEST_CASE("zero-step generate emits the initial noise") {
  const fs::path dir = scratch("generate_steps0");
  const std::string cfg = write_config(dir);
  REQUIRE(run_tool("generate " + cfg + " --out \"" + (dir / "out").string() +
                       "\" --seed 5 --noise-seed 6 --steps 0",
                   dir / "log.txt") == 0);

  const ModelConfig mc = small_config();
  const MatD noise = make_noise(6, mc);
  const LoadedLatents got = load_latents((dir / "out" / "latents.tvlt").string());
  CHECK(got.frames == mc.frames);
  CHECK(got.height == mc.height);
  CHECK(got.width == mc.width);
  CHECK(bits_equal(got.data, noise));
}

TEST_CASE("capture filter controls trace cardinality") {
  const fs::path dir = scratch("generate_capture");
  const std::string cfg = write_config(dir);
  REQUIRE(run_tool("generate " + cfg + " --out \"" + (dir / "out").string() +
                       "\" --seed 5 --noise-seed 6 --capture layer=0",
                   dir / "log.txt") == 0);

  const ModelConfig mc = small_config();
  const AttentionTrace trace = load_trace((dir / "out" / "trace.atrc").string());
  CHECK(trace.records.size() ==
        static_cast<std::size_t>(mc.heads) * static_cast<std::size_t>(mc.default_steps));
  CHECK(trace.traced_layers() == std::set<int>{0});
  CHECK(trace.has_record(0, 0, 0));
  CHECK_FALSE(trace.has_record(1, 0, 0));
}

TEST_CASE("sparsity sweep CSV matches the library") {
  const fs::path dir = scratch("sweep_sparsity");
  const std::string cfg = write_config(dir);
  REQUIRE(run_tool("sweep-sparsity " + cfg + " --out \"" + (dir / "out").string() +
                       "\" --seed 5 --noise-seed 6 --k 0.1,0.3",
                   dir / "log.txt") == 0);

  const auto rows = parse_csv(slurp(dir / "out" / "sparsity.csv"));
  REQUIRE(rows.size() == 3);
  CHECK(rows[0] == std::vector<std::string>{"k", "included_layers", "excluded_layers",
                                            "layer", "mse", "psnr", "realized_fraction"});

  const ModelConfig mc = small_config();
  const Model model = Model::build(mc);
  const auto reports = exclusion_sweep(model, 5, 6, DenoiseSchedule::linear(mc.default_steps),
                                       {0.1, 0.3}, {});
  REQUIRE(reports.size() == 2);
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& row = rows[i + 1];
    REQUIRE(row.size() == 7);
    CHECK(row[0] == format_double(reports[i].k));
    CHECK(row[4] == format_double(reports[i].mse));
    CHECK(row[5] == format_double(reports[i].psnr));
    CHECK(row[6] == format_double(reports[i].mean_source_fraction));
  }

  // Worker count must not change the result.
  REQUIRE(run_tool("sweep-sparsity " + cfg + " --out \"" + (dir / "out2").string() +
                       "\" --seed 5 --noise-seed 6 --k 0.1,0.3 --jobs 2",
                   dir / "log.txt") == 0);
  CHECK(same_bytes(dir / "out" / "sparsity.csv", dir / "out2" / "sparsity.csv"));
}

TEST_CASE("temperature CSV matches the library") {
  const fs::path dir = scratch("temperature");
  const std::string cfg = write_config(dir);
  REQUIRE(run_tool("temperature " + cfg + " --out \"" + (dir / "out").string() +
                       "\" --seed 5 --noise-seed 6 --layers 0 --temperature 0.2,1.0,1.2",
                   dir / "log.txt") == 0);

  const auto rows = parse_csv(slurp(dir / "out" / "temperature.csv"));
  REQUIRE(rows.size() == 4);
  CHECK(rows[0] == std::vector<std::string>{"temperature", "mean_entropy", "mse", "psnr"});

  const ModelConfig mc = small_config();
  const Model model = Model::build(mc);
  const auto points = temperature_sweep(model, 5, 6, DenoiseSchedule::linear(mc.default_steps),
                                        0, {0.2, 1.0, 1.2});
  REQUIRE(points.size() == 3);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& row = rows[i + 1];
    REQUIRE(row.size() == 4);
    CHECK(row[0] == format_double(points[i].temperature));
    CHECK(row[1] == format_double(points[i].mean_entropy));
    CHECK(row[2] == format_double(points[i].mse));
  }
  // The identity temperature leaves the run untouched.
  CHECK(rows[2][2] == "0");
  CHECK(rows[2][3] == "inf");
}

TEST_CASE("layer sensitivity emits one row per layer") {
  const fs::path dir = scratch("sensitivity");
  const std::string cfg = write_config(dir);
  REQUIRE(run_tool("layer-sensitivity " + cfg + " --out \"" + (dir / "out").string() +
                       "\" --seed 5 --noise-seed 6 --k 0.5",
                   dir / "log.txt") == 0);

  const ModelConfig mc = small_config();
  const auto rows = parse_csv(slurp(dir / "out" / "sensitivity.csv"));
  REQUIRE(rows.size() == static_cast<std::size_t>(mc.layers) + 1);

  const Model model = Model::build(mc);
  const auto reports = layer_sensitivity_sweep(model, 5, 6,
                                               DenoiseSchedule::linear(mc.default_steps), 0.5);
  REQUIRE(reports.size() == rows.size() - 1);
  std::set<std::string> seen;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    CHECK(rows[i + 1][3] == std::to_string(reports[i].layer));
    CHECK(rows[i + 1][4] == format_double(reports[i].mse));
    seen.insert(rows[i + 1][3]);
  }
  CHECK(seen == std::set<std::string>{"0", "1"});
}

TEST_CASE("transfer onto the source run reproduces it exactly") {
  const fs::path dir = scratch("transfer_identity");
  const std::string cfg = write_config(dir);
  const fs::path log = dir / "log.txt";
  REQUIRE(run_tool("generate " + cfg + " --out \"" + (dir / "src").string() +
                       "\" --seed 5 --noise-seed 6 --capture all",
                   log) == 0);
  REQUIRE(run_tool("transfer " + cfg + " --out \"" + (dir / "out").string() + "\" --trace \"" +
                       (dir / "src" / "trace.atrc").string() +
                       "\" --layers all --same-prompt --same-seed",
                   log) == 0);

  const nlohmann::json report =
      nlohmann::json::parse(slurp(dir / "out" / "transfer.json"));
  CHECK(report.at("mse_to_source").get<double>() == 0.0);
  CHECK(same_bytes(dir / "src" / "latents.tvlt", dir / "out" / "transfer.tvlt"));
}

TEST_CASE("layerwise transfer study covers every traced layer") {
  const fs::path dir = scratch("transfer_study");
  const std::string cfg = write_config(dir);
  const fs::path log = dir / "log.txt";
  REQUIRE(run_tool("generate " + cfg + " --out \"" + (dir / "src").string() +
                       "\" --seed 5 --noise-seed 6 --capture all",
                   log) == 0);
  REQUIRE(run_tool("transfer " + cfg + " --out \"" + (dir / "out").string() + "\" --trace \"" +
                       (dir / "src" / "trace.atrc").string() + "\"",
                   log) == 0);

  const auto rows = parse_csv(slurp(dir / "out" / "transfer.csv"));
  REQUIRE(rows.size() == 3);
  CHECK(rows[0] ==
        std::vector<std::string>{"layer", "mse_to_source", "mse_to_target_baseline"});
  CHECK(rows[1][0] == "0");
  CHECK(rows[2][0] == "1");
}

TEST_CASE("zero-step retrain round-trips the checkpoint") {
  const fs::path dir = scratch("retrain_zero");
  const std::string cfg = write_config(dir);
  const fs::path in = dir / "in.tvdt";
  save_checkpoint(in.string(), Model::build(small_config()));

  REQUIRE(run_tool("retrain " + cfg + " --out \"" + (dir / "out").string() +
                       "\" --checkpoint \"" + in.string() + "\" --train-steps 0",
                   dir / "log.txt") == 0);
  CHECK(same_bytes(in, dir / "out" / "model.tvdt"));
  CHECK(same_bytes(in, dir / "out" / "model_ema.tvdt"));
  const auto rows = parse_csv(slurp(dir / "out" / "loss.csv"));
  REQUIRE(rows.size() == 1);  // header only
  CHECK(rows[0] == std::vector<std::string>{"step", "loss", "lr"});
}

TEST_CASE("retrain with reinit changes only the requested blocks") {
  const fs::path dir = scratch("retrain_reinit");
  const std::string cfg = write_config(dir);
  REQUIRE(run_tool("retrain " + cfg + " --out \"" + (dir / "out").string() +
                       "\" --train-steps 4 --reinit-last 1 --data-count 8 --batch 2",
                   dir / "log.txt") == 0);
  const Model trained = load_checkpoint((dir / "out" / "model.tvdt").string());
  const Model base = Model::build(small_config());
  REQUIRE(trained.param_count() == base.param_count());

  // Only block 1 was reinitialized and trained; everything else is untouched.
  for (const Tensor& t : trained.tensors()) {
    const bool block1 = t.block == 1;
    bool same = true;
    for (std::size_t i = t.offset; i < t.offset + t.size(); ++i)
      same = same && trained.params()[i] == base.params()[i];
    CHECK(same == !block1);
  }
  const auto rows = parse_csv(slurp(dir / "out" / "loss.csv"));
  CHECK(rows.size() == 5);
}

TEST_CASE("sink scan with unreachable thresholds reports cleanly") {
  const fs::path dir = scratch("sinks_empty");
  const std::string cfg = write_config(dir);
  REQUIRE(run_tool("sinks " + cfg + " --out \"" + (dir / "out").string() +
                       "\" --seed 5 --noise-seed 6 --tau-w 1.0 --tau-q 1.0 --prompts 2",
                   dir / "log.txt") == 0);

  const nlohmann::json report = nlohmann::json::parse(slurp(dir / "out" / "sinks.json"));
  CHECK(report.at("total_flags").get<int>() == 0);
  CHECK(report.at("flags").empty());
  CHECK(report.at("prompts").get<int>() == 2);

  const ModelConfig mc = small_config();
  const auto rows = parse_csv(slurp(dir / "out" / "sinks.csv"));
  CHECK(rows.size() == static_cast<std::size_t>(mc.layers) * mc.heads + 1);
}

TEST_CASE("first token ablation changes the generated video") {
  const fs::path dir = scratch("first_token");
  const std::string cfg = write_config(dir);
  const fs::path log = dir / "log.txt";
  const std::string seeds = " --seed 5 --noise-seed 6";
  REQUIRE(run_tool("generate " + cfg + " --out \"" + (dir / "plain").string() + "\"" + seeds,
                   log) == 0);
  REQUIRE(run_tool("generate " + cfg + " --out \"" + (dir / "ablated").string() + "\"" + seeds +
                       " --first-token-only",
                   log) == 0);
  CHECK_FALSE(same_bytes(dir / "plain" / "latents.tvlt", dir / "ablated" / "latents.tvlt"));

  // The ablated run matches the library on an ablated text embedding.
  const ModelConfig mc = small_config();
  const Model model = Model::build(mc);
  const DenoiseResult lib =
      denoise(model, make_noise(6, mc), first_token_only(make_prompt_embedding(5, mc)),
              DenoiseSchedule::linear(mc.default_steps));
  const LoadedLatents got = load_latents((dir / "ablated" / "latents.tvlt").string());
  CHECK(bits_equal(got.data, lib.latents));
}

TEST_CASE("heatmaps are emitted only on request") {
  const fs::path dir = scratch("heatmaps");
  const std::string cfg = write_config(dir);
  const fs::path log = dir / "log.txt";
  const std::string base = " --seed 5 --noise-seed 6 --capture \"layer=0,step=0\"";
  REQUIRE(run_tool("generate " + cfg + " --out \"" + (dir / "off").string() + "\"" + base,
                   log) == 0);
  REQUIRE(run_tool("generate " + cfg + " --out \"" + (dir / "on").string() + "\"" + base +
                       " --emit-heatmaps",
                   log) == 0);

  auto count_ppm = [](const fs::path& d) {
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(d))
      if (e.path().extension() == ".ppm") ++n;
    return n;
  };
  CHECK(count_ppm(dir / "off") == 0);
  CHECK(count_ppm(dir / "on") == static_cast<std::size_t>(small_config().heads));
}

TEST_SUITE_END();
