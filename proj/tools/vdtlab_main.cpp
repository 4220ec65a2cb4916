#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <vdtlab/dataset.hpp>
#include <vdtlab/image.hpp>
#include <vdtlab/manifest.hpp>
#include <vdtlab/model.hpp>
#include <vdtlab/reports.hpp>
#include <vdtlab/serialize.hpp>
#include <vdtlab/sink_lab.hpp>
#include <vdtlab/sparsity_lab.hpp>
#include <vdtlab/train.hpp>
#include <vdtlab/transfer_lab.hpp>

namespace fs = std::filesystem;
using namespace vdtlab;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::uint64_t prompt_seed = 1;
  std::uint64_t noise_seed = 1;
  int steps = -1;  // -1 means the config default
  int jobs = 0;    // 0 means hardware concurrency
  bool emit_heatmaps = false;
  std::string command_line;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "model config JSON file");
  cmd->add_option("--out", args.out_dir, "output directory")->required();
  cmd->add_option("--seed", args.prompt_seed, "prompt seed");
  cmd->add_option("--noise-seed", args.noise_seed, "noise seed");
  cmd->add_option("--steps", args.steps, "denoising step count");
  cmd->add_option("--jobs", args.jobs, "worker count (0 = logical cores)");
  cmd->add_flag("--emit-heatmaps", args.emit_heatmaps, "write PPM heatmaps");
}

ModelConfig load_config(const CommonArgs& args) {
  if (args.config_path.empty()) {
    ModelConfig cfg;
    cfg.validate();
    return cfg;
  }
  std::ifstream in(args.config_path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + args.config_path);
  std::stringstream buf;
  buf << in.rdbuf();
  const ModelConfig cfg = config_from_json(buf.str());
  cfg.validate();
  return cfg;
}

DenoiseSchedule schedule_for(const CommonArgs& args, const ModelConfig& cfg) {
  return DenoiseSchedule::linear(args.steps >= 0 ? args.steps : cfg.default_steps);
}

int effective_jobs(const CommonArgs& args) {
  if (args.jobs > 0) return args.jobs;
  const unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? static_cast<int>(hc) : 1;
}

fs::path prepare_out(const CommonArgs& args) {
  const fs::path dir(args.out_dir);
  fs::create_directories(dir);
  return dir;
}

void write_manifest(const fs::path& dir, RunManifest manifest, const CommonArgs& args) {
  manifest.command = args.command_line;
  write_text_file((dir / "manifest.json").string(), manifest_to_json(manifest));
}

// "all" or a list like "0;2;5" (commas also accepted).
std::set<int> parse_layer_set(const std::string& text) {
  std::set<int> layers;
  if (text.empty() || text == "all") return layers;
  std::string token;
  std::stringstream ss(text);
  std::string normalized = text;
  for (char& c : normalized)
    if (c == ',') c = ';';
  std::stringstream parts(normalized);
  while (std::getline(parts, token, ';')) {
    if (token.empty()) continue;
    try {
      layers.insert(std::stoi(token));
    } catch (const std::exception&) {
      throw ConfigError("cannot parse layer index '" + token + "'");
    }
  }
  return layers;
}

std::vector<double> parse_double_list(const std::string& text, const char* what) {
  std::vector<double> values;
  std::string normalized = text;
  for (char& c : normalized)
    if (c == ';') c = ',';
  std::stringstream parts(normalized);
  std::string token;
  while (std::getline(parts, token, ',')) {
    if (token.empty()) continue;
    try {
      values.push_back(std::stod(token));
    } catch (const std::exception&) {
      throw ConfigError(std::string("cannot parse ") + what + " '" + token + "'");
    }
  }
  if (values.empty()) throw ConfigError(std::string("empty ") + what + " list");
  return values;
}

// "all" or comma-separated layer=/head=/step= entries, each a ;-list.
CaptureFilter parse_capture(const std::string& text) {
  CaptureFilter filter;
  filter.enabled = true;
  if (text == "all") return filter;
  std::stringstream parts(text);
  std::string entry;
  while (std::getline(parts, entry, ',')) {
    if (entry.empty()) continue;
    const auto eq = entry.find('=');
    if (eq == std::string::npos)
      throw ConfigError("capture entries look like layer=0, head=1;2, step=3: '" + entry + "'");
    const std::string key = entry.substr(0, eq);
    const std::set<int> values = parse_layer_set(entry.substr(eq + 1));
    if (values.empty()) throw ConfigError("empty capture value in '" + entry + "'");
    if (key == "layer" || key == "layers")
      filter.layers = values;
    else if (key == "head" || key == "heads")
      filter.heads = values;
    else if (key == "step" || key == "steps")
      filter.steps = values;
    else
      throw ConfigError("unknown capture key '" + key + "'");
  }
  return filter;
}

void emit_capture_heatmaps(const fs::path& dir, const std::vector<AttentionRecord>& records) {
  for (const auto& rec : records) {
    if (rec.skipped) continue;
    const std::string name = "heatmap_s" + std::to_string(rec.step) + "_l" +
                             std::to_string(rec.layer) + "_h" + std::to_string(rec.head) +
                             ".ppm";
    write_ppm((dir / name).string(), render_heatmap(rec.map, 1));
  }
}

AttentionTrace build_trace(const ModelConfig& cfg, const DenoiseSchedule& schedule,
                           const CaptureFilter& filter, const RunManifest& manifest,
                           std::vector<AttentionRecord> records) {
  AttentionTrace trace;
  trace.layout = cfg.attention_layout();
  trace.layers = cfg.layers;
  trace.heads = cfg.heads;
  trace.steps = schedule.steps();
  const std::size_t bits =
      static_cast<std::size_t>(cfg.layers) * cfg.heads * schedule.steps();
  trace.filter_bitmap.assign((bits + 7) / 8, 0);
  for (int l = 0; l < cfg.layers; ++l)
    for (int h = 0; h < cfg.heads; ++h)
      for (int s = 0; s < schedule.steps(); ++s)
        if (filter.matches(l, h, s)) {
          const std::size_t b = trace.bit_index(l, h, s);
          trace.filter_bitmap[b / 8] |= static_cast<std::uint8_t>(1u << (b % 8));
        }
  trace.manifest_json = manifest_to_json(manifest);
  trace.records = std::move(records);
  trace.validate();
  return trace;
}

int cmd_generate(const CommonArgs& args, const std::string& capture_spec,
                 bool first_token) {
  const ModelConfig cfg = load_config(args);
  const DenoiseSchedule schedule = schedule_for(args, cfg);
  const fs::path dir = prepare_out(args);

  DenoiseOptions options;
  if (!capture_spec.empty()) {
    options.capture = parse_capture(capture_spec);
    options.capture.validate(cfg, schedule.steps());
  }

  const RunManifest manifest =
      make_manifest(cfg, args.prompt_seed, args.noise_seed, schedule, "none", first_token);
  write_manifest(dir, manifest, args);

  MatD text = make_prompt_embedding(args.prompt_seed, cfg);
  if (first_token) text = first_token_only(text);
  const DenoiseResult result =
      denoise(Model::build(cfg), make_noise(args.noise_seed, cfg), text, schedule, options);

  save_latents((dir / "latents.tvlt").string(), result.latents, cfg.frames, cfg.height,
               cfg.width, cfg.latent_dim);
  if (!capture_spec.empty()) {
    const AttentionTrace trace =
        build_trace(cfg, schedule, options.capture, manifest, result.captures);
    save_trace((dir / "trace.atrc").string(), trace);
    if (args.emit_heatmaps) emit_capture_heatmaps(dir, trace.records);
  }
  return 0;
}

int cmd_sweep_sparsity(const CommonArgs& args, const std::string& k_list,
                       const std::string& exclude) {
  const ModelConfig cfg = load_config(args);
  const DenoiseSchedule schedule = schedule_for(args, cfg);
  const fs::path dir = prepare_out(args);
  const std::vector<double> ks = parse_double_list(k_list, "k");
  const std::set<int> excluded = parse_layer_set(exclude);

  std::string summary = "oracle sparsity mask, k in {" + k_list + "}";
  if (!excluded.empty()) summary += ", excluding layers " + format_layer_set(excluded);
  write_manifest(dir, make_manifest(cfg, args.prompt_seed, args.noise_seed, schedule, summary),
                 args);

  const auto reports = exclusion_sweep(Model::build(cfg), args.prompt_seed, args.noise_seed,
                                       schedule, ks, excluded, effective_jobs(args));
  write_text_file((dir / "sparsity.csv").string(), sparsity_csv(reports));
  write_text_file((dir / "sparsity.json").string(), sparsity_json(reports));
  return 0;
}

int cmd_layer_sensitivity(const CommonArgs& args, double k) {
  const ModelConfig cfg = load_config(args);
  const DenoiseSchedule schedule = schedule_for(args, cfg);
  const fs::path dir = prepare_out(args);

  write_manifest(dir,
                 make_manifest(cfg, args.prompt_seed, args.noise_seed, schedule,
                               "per-layer sparsity mask, k = " + format_double(k)),
                 args);
  const auto reports = layer_sensitivity_sweep(Model::build(cfg), args.prompt_seed,
                                               args.noise_seed, schedule, k,
                                               effective_jobs(args));
  write_text_file((dir / "sensitivity.csv").string(), sparsity_csv(reports));
  write_text_file((dir / "sensitivity.json").string(), sparsity_json(reports));
  return 0;
}

int cmd_temperature(const CommonArgs& args, const std::string& t_list,
                    const std::string& layer_spec) {
  const ModelConfig cfg = load_config(args);
  const DenoiseSchedule schedule = schedule_for(args, cfg);
  const fs::path dir = prepare_out(args);
  const std::vector<double> temps = parse_double_list(t_list, "temperature");
  const std::set<int> layers = parse_layer_set(layer_spec);
  if (layers.size() != 1)
    throw ConfigError("temperature sweeps intervene on exactly one layer (--layers N)");
  const int layer = *layers.begin();

  write_manifest(dir,
                 make_manifest(cfg, args.prompt_seed, args.noise_seed, schedule,
                               "layer " + std::to_string(layer) + " temperature in {" +
                                   t_list + "}"),
                 args);
  const auto points = temperature_sweep(Model::build(cfg), args.prompt_seed, args.noise_seed,
                                        schedule, layer, temps, effective_jobs(args));
  write_text_file((dir / "temperature.csv").string(), temperature_csv(points));
  write_text_file((dir / "temperature.json").string(), temperature_json(points));
  return 0;
}

int cmd_sinks(const CommonArgs& args, double tau_w, double tau_q, int prompt_count) {
  const ModelConfig cfg = load_config(args);
  const DenoiseSchedule schedule = schedule_for(args, cfg);
  const fs::path dir = prepare_out(args);
  if (prompt_count < 1) throw ConfigError("--prompts must be at least 1");
  SinkCriterion criterion;
  criterion.tau_w = tau_w;
  criterion.tau_q = tau_q;
  criterion.validate();

  std::vector<std::uint64_t> prompt_seeds;
  for (int p = 0; p < prompt_count; ++p)
    prompt_seeds.push_back(args.prompt_seed + static_cast<std::uint64_t>(p));

  write_manifest(dir,
                 make_manifest(cfg, args.prompt_seed, args.noise_seed, schedule,
                               "sink detection, tau_w = " + format_double(tau_w) +
                                   ", tau_q = " + format_double(tau_q) + ", prompts = " +
                                   std::to_string(prompt_count)),
                 args);
  const SinkReport report =
      sink_statistics_over_prompts(Model::build(cfg), prompt_seeds, args.noise_seed,
                                   schedule, criterion, effective_jobs(args));
  write_text_file((dir / "sinks.csv").string(), sink_frequency_csv(report));
  write_text_file((dir / "sinks.json").string(), sink_report_json(report));
  return 0;
}

int cmd_skip_heads(const CommonArgs& args, double tau_w, double tau_q,
                   const std::string& mode) {
  const ModelConfig cfg = load_config(args);
  const DenoiseSchedule schedule = schedule_for(args, cfg);
  const fs::path dir = prepare_out(args);
  SinkCriterion criterion;
  criterion.tau_w = tau_w;
  criterion.tau_q = tau_q;
  criterion.validate();
  if (mode != "detected" && mode != "random" && mode != "both")
    throw ConfigError("--mode must be detected, random, or both");

  write_manifest(dir,
                 make_manifest(cfg, args.prompt_seed, args.noise_seed, schedule,
                               "skip sink heads (" + mode + "), tau_w = " +
                                   format_double(tau_w) + ", tau_q = " + format_double(tau_q)),
                 args);
  const Model model = Model::build(cfg);
  if (mode == "detected" || mode == "both") {
    const SkipHeadsResult r = skip_heads_run(model, args.prompt_seed, args.noise_seed,
                                             schedule, criterion, SkipMode::kDetected);
    write_text_file((dir / "skip_detected.json").string(), skip_heads_json(r, "detected"));
    save_latents((dir / "skip_detected.tvlt").string(), r.latents, cfg.frames, cfg.height,
                 cfg.width, cfg.latent_dim);
  }
  if (mode == "random" || mode == "both") {
    const SkipHeadsResult r = skip_heads_run(model, args.prompt_seed, args.noise_seed,
                                             schedule, criterion, SkipMode::kRandomMatched);
    write_text_file((dir / "skip_random.json").string(),
                    skip_heads_json(r, "random_matched"));
    save_latents((dir / "skip_random.tvlt").string(), r.latents, cfg.frames, cfg.height,
                 cfg.width, cfg.latent_dim);
  }
  return 0;
}

int cmd_transfer(const CommonArgs& args, const std::string& trace_path,
                 const std::string& layer_spec, bool same_prompt, bool same_seed) {
  if (trace_path.empty()) throw ConfigError("--trace is required");
  const AttentionTrace trace = load_trace(trace_path);
  const RunManifest source = manifest_from_json(trace.manifest_json);
  const ModelConfig cfg = source.config;
  DenoiseSchedule schedule;
  schedule.sigmas = source.sigmas;
  schedule.validate();
  const fs::path dir = prepare_out(args);

  RecordedTrace recorded;
  recorded.trace = trace;
  const std::uint64_t target_prompt = same_prompt ? source.prompt_seed : args.prompt_seed;
  const std::uint64_t target_noise = same_seed ? source.noise_seed : args.noise_seed;
  // Re-derive the source run for MSE-to-source comparisons.
  recorded.source_latents = rerun_from_manifest(source).latents;

  write_manifest(dir,
                 make_manifest(cfg, target_prompt, target_noise, schedule,
                               "attention transfer from trace, layers " + layer_spec),
                 args);
  const Model model = Model::build(cfg);
  if (layer_spec.empty()) {
    const auto points = layerwise_transfer_study(model, recorded, target_prompt,
                                                 target_noise, schedule,
                                                 effective_jobs(args));
    write_text_file((dir / "transfer.csv").string(), transfer_csv(points));
    write_text_file((dir / "transfer.json").string(), transfer_json(points));
  } else {
    std::set<int> subset = parse_layer_set(layer_spec);
    if (subset.empty())
      for (int l = 0; l < cfg.layers; ++l) subset.insert(l);
    const TransferResult r =
        replay_with_transfer(model, target_prompt, target_noise, schedule, recorded, subset);
    std::string json = "{\n  \"layers\": \"" + format_layer_set(subset) +
                       "\",\n  \"mse_to_source\": " + format_double(r.mse_to_source) +
                       ",\n  \"mse_to_target_baseline\": " +
                       format_double(r.mse_to_target_baseline) +
                       ",\n  \"baseline_mse_to_source\": " +
                       format_double(r.baseline_mse_to_source) + "\n}\n";
    write_text_file((dir / "transfer.json").string(), json);
    save_latents((dir / "transfer.tvlt").string(), r.latents, cfg.frames, cfg.height,
                 cfg.width, cfg.latent_dim);
  }
  return 0;
}

int cmd_retrain(const CommonArgs& args, const std::string& checkpoint,
                const std::string& layer_spec, bool train_io, int train_steps, int warmup,
                double ema_beta, double lr, int batch, int reinit_last,
                std::uint64_t reinit_seed, std::uint64_t train_seed,
                std::uint64_t data_seed, int data_count) {
  const fs::path dir = prepare_out(args);
  Model model = checkpoint.empty() ? Model::build(load_config(args))
                                   : load_checkpoint(checkpoint);
  const ModelConfig cfg = model.config();

  if (reinit_last < 0 || reinit_last > cfg.layers)
    throw ConfigError("--reinit-last must lie in [0, layers]");
  std::set<int> reinit;
  for (int l = cfg.layers - reinit_last; l < cfg.layers; ++l) reinit.insert(l);

  TrainingConfig tc;
  tc.trainable_layers = parse_layer_set(layer_spec);
  if (tc.trainable_layers.empty() && layer_spec == "all")
    for (int l = 0; l < cfg.layers; ++l) tc.trainable_layers.insert(l);
  if (tc.trainable_layers.empty() && !layer_spec.empty() && layer_spec != "all")
    throw ConfigError("cannot parse --layers '" + layer_spec + "'");
  if (tc.trainable_layers.empty() && reinit_last > 0) tc.trainable_layers = reinit;
  if (tc.trainable_layers.empty() && layer_spec.empty())  // no spec, no reinit: train all
    for (int l = 0; l < cfg.layers; ++l) tc.trainable_layers.insert(l);
  tc.train_io = train_io;
  tc.total_steps = train_steps;
  tc.warmup_steps = warmup;
  tc.ema_beta = ema_beta;
  tc.lr = lr;
  tc.batch_size = batch;
  tc.seed = train_seed;
  tc.validate(cfg);

  if (reinit_last > 0) model = reinit_layers(model, reinit, reinit_seed);

  write_manifest(dir,
                 make_manifest(cfg, args.prompt_seed, args.noise_seed,
                               schedule_for(args, cfg),
                               "retrain layers " + format_layer_set(tc.trainable_layers) +
                                   " for " + std::to_string(train_steps) + " steps" +
                                   (reinit_last > 0 ? ", reinit last " +
                                                          std::to_string(reinit_last)
                                                    : "")),
                 args);

  if (data_count < 1) throw ConfigError("--data-count must be at least 1");
  const SynthDataset data(data_seed, static_cast<std::size_t>(data_count), cfg);
  const TrainingResult result = retrain(model, tc, data);

  save_checkpoint((dir / "model.tvdt").string(), result.model);
  save_checkpoint((dir / "model_ema.tvdt").string(), result.ema_model);
  write_text_file((dir / "loss.csv").string(), loss_csv(result.loss_trace, result.lr_trace));
  return 0;
}

std::string join_args(int argc, char** argv) {
  std::string line;
  for (int i = 0; i < argc; ++i) {
    if (i) line += ' ';
    line += argv[i];
  }
  return line;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"instrumented toy video diffusion transformer lab"};
  app.require_subcommand(1);

  CommonArgs args;
  args.command_line = join_args(argc, argv);

  std::string capture_spec;
  bool first_token = false;
  CLI::App* generate = app.add_subcommand("generate", "run the denoiser and save latents");
  add_common(generate, args);
  generate->add_option("--capture", capture_spec,
                       "attention capture filter: 'all' or layer=/head=/step= lists");
  generate->add_flag("--first-token-only", first_token,
                     "zero every text token except the first");

  std::string k_list = "0.1,0.3,0.5,0.7";
  std::string exclude;
  CLI::App* sweep = app.add_subcommand("sweep-sparsity", "oracle bottom-k masking sweep");
  add_common(sweep, args);
  sweep->add_option("--k", k_list, "comma-separated mask fractions");
  sweep->add_option("--exclude-layers", exclude, "layers to leave unmasked");

  double k_single = 0.5;
  CLI::App* sensitivity =
      app.add_subcommand("layer-sensitivity", "single-layer masking, every layer in turn");
  add_common(sensitivity, args);
  sensitivity->add_option("--k", k_single, "mask fraction");

  std::string t_list = "0.2,1.0,1.2";
  std::string temp_layers;
  CLI::App* temperature =
      app.add_subcommand("temperature", "single-layer softmax temperature sweep");
  add_common(temperature, args);
  temperature->add_option("--temperature", t_list, "comma-separated temperatures");
  temperature->add_option("--layers", temp_layers, "the single layer to intervene on")
      ->required();

  double tau_w = 0.3;
  double tau_q = 0.5;
  int prompt_count = 1;
  CLI::App* sinks = app.add_subcommand("sinks", "attention sink detection statistics");
  add_common(sinks, args);
  sinks->add_option("--tau-w", tau_w, "sink weight threshold");
  sinks->add_option("--tau-q", tau_q, "sink row-fraction threshold");
  sinks->add_option("--prompts", prompt_count, "number of consecutive prompt seeds");

  std::string skip_mode = "both";
  CLI::App* skip = app.add_subcommand("skip-heads", "zero sink heads vs a random control");
  add_common(skip, args);
  skip->add_option("--tau-w", tau_w, "sink weight threshold");
  skip->add_option("--tau-q", tau_q, "sink row-fraction threshold");
  skip->add_option("--mode", skip_mode, "detected, random, or both");

  std::string trace_path;
  std::string transfer_layers;
  bool same_prompt = false;
  bool same_seed = false;
  CLI::App* transfer = app.add_subcommand("transfer", "replay with transplanted maps");
  add_common(transfer, args);
  transfer->add_option("--trace", trace_path, "source trace file (.atrc)")->required();
  transfer->add_option("--layers", transfer_layers,
                       "layers to transplant ('all' or a list); omit for a per-layer study");
  transfer->add_flag("--same-prompt", same_prompt, "reuse the source prompt seed");
  transfer->add_flag("--same-seed", same_seed, "reuse the source noise seed");

  std::string checkpoint;
  std::string train_layers;
  bool train_io = false;
  int train_steps = 500;
  int warmup = 10;
  double ema_beta = 0.99;
  double lr = 1e-3;
  int batch = 1;
  int reinit_last = 0;
  std::uint64_t reinit_seed = 1;
  std::uint64_t train_seed = 1;
  std::uint64_t data_seed = 1;
  int data_count = 64;
  CLI::App* retrain_cmd =
      app.add_subcommand("retrain", "freeze-and-retrain on the synthetic motion task");
  add_common(retrain_cmd, args);
  retrain_cmd->add_option("--checkpoint", checkpoint, "starting checkpoint (.tvdt)");
  retrain_cmd->add_option("--layers", train_layers, "trainable blocks ('all' or a list)");
  retrain_cmd->add_flag("--train-io", train_io, "also train the shared io tensors");
  retrain_cmd->add_option("--train-steps", train_steps, "optimizer steps");
  retrain_cmd->add_option("--warmup", warmup, "linear warmup steps");
  retrain_cmd->add_option("--ema-beta", ema_beta, "EMA decay");
  retrain_cmd->add_option("--lr", lr, "learning rate after warmup");
  retrain_cmd->add_option("--batch", batch, "samples per step");
  retrain_cmd->add_option("--reinit-last", reinit_last, "redraw the last N blocks first");
  retrain_cmd->add_option("--reinit-seed", reinit_seed, "seed for the redraw");
  retrain_cmd->add_option("--train-seed", train_seed, "optimizer sampling seed");
  retrain_cmd->add_option("--data-seed", data_seed, "synthetic dataset seed");
  retrain_cmd->add_option("--data-count", data_count, "synthetic dataset size");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*generate) return cmd_generate(args, capture_spec, first_token);
    if (*sweep) return cmd_sweep_sparsity(args, k_list, exclude);
    if (*sensitivity) return cmd_layer_sensitivity(args, k_single);
    if (*temperature) return cmd_temperature(args, t_list, temp_layers);
    if (*sinks) return cmd_sinks(args, tau_w, tau_q, prompt_count);
    if (*skip) return cmd_skip_heads(args, tau_w, tau_q, skip_mode);
    if (*transfer)
      return cmd_transfer(args, trace_path, transfer_layers, same_prompt, same_seed);
    if (*retrain_cmd)
      return cmd_retrain(args, checkpoint, train_layers, train_io, train_steps, warmup,
                         ema_beta, lr, batch, reinit_last, reinit_seed, train_seed,
                         data_seed, data_count);
    std::cerr << "no subcommand selected\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
