#include <doctest.h>

#include <cmath>
#include <vdtlab/model.hpp>
#include <vdtlab/reports.hpp>
#include <vdtlab/transfer_lab.hpp>

#include "helpers.hpp"

using namespace vdtlab;
using testing::small_config;

TEST_SUITE_BEGIN("transfer");

TEST_CASE("recording a trace twice is identical and complete") {
  const ModelConfig cfg = small_config();
  const Model m = Model::build(cfg);
  const DenoiseSchedule sched = DenoiseSchedule::linear(3);
  const RecordedTrace a = record_trace(m, 1, 2, sched, CaptureFilter::all());
  const RecordedTrace b = record_trace(m, 1, 2, sched, CaptureFilter::all());
  REQUIRE(a.trace.records.size() ==
          static_cast<std::size_t>(cfg.layers) * cfg.heads * sched.steps());
  REQUIRE(a.trace.records.size() == b.trace.records.size());
  for (std::size_t i = 0; i < a.trace.records.size(); ++i)
    REQUIRE(bits_equal(a.trace.records[i].map, b.trace.records[i].map));
  CHECK(bits_equal(a.source_latents, b.source_latents));
  CHECK(a.trace.manifest_json == b.trace.manifest_json);
  CHECK_NOTHROW(a.trace.validate());
  CHECK(a.trace.traced_layers() == std::set<int>{0, 1});

  // The recording pass does not disturb the run.
  const DenoiseResult plain = denoise(m, make_noise(2, cfg),
                                      make_prompt_embedding(1, cfg), sched);
  CHECK(bits_equal(a.source_latents, plain.latents));

  CHECK_THROWS_AS(record_trace(m, 1, 2, sched, CaptureFilter::none()), ConfigError);
  CHECK_THROWS_AS(record_trace(m, 1, 2, sched, CaptureFilter::all(), 64), ResourceError);
}

TEST_CASE("transferring a run onto itself reproduces it bitwise") {
  const ModelConfig cfg = small_config();
  const Model m = Model::build(cfg);
  const DenoiseSchedule sched = DenoiseSchedule::linear(cfg.default_steps);
  const RecordedTrace rec = record_trace(m, 5, 6, sched, CaptureFilter::all());
  std::set<int> all_layers;
  for (int l = 0; l < cfg.layers; ++l) all_layers.insert(l);
  const TransferResult r = replay_with_transfer(m, 5, 6, sched, rec, all_layers);
  CHECK(bits_equal(r.latents, rec.source_latents));
  CHECK(bits_equal(r.target_baseline, rec.source_latents));
  CHECK(r.mse_to_source == 0.0);
  CHECK(r.mse_to_target_baseline == 0.0);
  CHECK(r.baseline_mse_to_source == 0.0);
}

TEST_CASE("empty subset leaves the target run bitwise untouched") {
  const ModelConfig cfg = small_config();
  const Model m = Model::build(cfg);
  const DenoiseSchedule sched = DenoiseSchedule::linear(3);
  const RecordedTrace rec = record_trace(m, 5, 6, sched, CaptureFilter::all());
  const TransferResult r = replay_with_transfer(m, 7, 6, sched, rec, {});
  const DenoiseResult target = denoise(m, make_noise(6, cfg),
                                       make_prompt_embedding(7, cfg), sched);
  CHECK(bits_equal(r.latents, target.latents));
  CHECK(bits_equal(r.target_baseline, target.latents));
  CHECK(r.mse_to_target_baseline == 0.0);
  CHECK(r.mse_to_source == r.baseline_mse_to_source);
  CHECK(r.mse_to_source > 0.0);
}

TEST_CASE("transferred maps appear verbatim in the edited run") {
  const ModelConfig cfg = small_config();
  const Model m = Model::build(cfg);
  const DenoiseSchedule sched = DenoiseSchedule::linear(2);
  const RecordedTrace rec = record_trace(m, 5, 6, sched, CaptureFilter::all());

  // Replay by hand with a capture to compare the maps the target actually used.
  InterventionPlan plan;
  for (const auto& r : rec.trace.records) {
    if (r.layer != 1) continue;
    AttentionIntervention iv;
    iv.map_override = std::shared_ptr<const MatF>(std::shared_ptr<void>(), &r.map);
    plan.set(r.layer, r.step, r.head, iv);
  }
  DenoiseOptions options;
  options.plan = plan;
  options.capture = CaptureFilter::all();
  const DenoiseResult replay = denoise(m, make_noise(6, cfg),
                                       make_prompt_embedding(7, cfg), sched, options);
  for (const auto& got : replay.captures) {
    if (got.layer == 1) {
      const AttentionRecord* want = rec.trace.find(got.layer, got.head, got.step);
      REQUIRE(want != nullptr);
      REQUIRE(bits_equal(got.map, want->map));
    }
  }
  // And the library path computes the same latents.
  const TransferResult r = replay_with_transfer(m, 7, 6, sched, rec, {1});
  CHECK(bits_equal(r.latents, replay.latents));
}

TEST_CASE("transfer moves the target toward the source") {
  const ModelConfig cfg = small_config();
  const Model m = Model::build(cfg);
  const DenoiseSchedule sched = DenoiseSchedule::linear(cfg.default_steps);
  const RecordedTrace rec = record_trace(m, 5, 6, sched, CaptureFilter::all());
  std::set<int> all_layers;
  for (int l = 0; l < cfg.layers; ++l) all_layers.insert(l);
  const TransferResult r = replay_with_transfer(m, 9, 6, sched, rec, all_layers);
  CHECK(r.mse_to_source < r.baseline_mse_to_source);
  CHECK(r.mse_to_target_baseline > 0.0);
}

TEST_CASE("layerwise study covers traced layers and sorts by source distance") {
  const ModelConfig cfg = small_config();
  const Model m = Model::build(cfg);
  const DenoiseSchedule sched = DenoiseSchedule::linear(3);
  const RecordedTrace rec = record_trace(m, 5, 6, sched, CaptureFilter::all());
  const auto points = layerwise_transfer_study(m, rec, 7, 6, sched);
  REQUIRE(points.size() == static_cast<std::size_t>(cfg.layers));
  std::set<int> seen;
  for (std::size_t i = 0; i < points.size(); ++i) {
    seen.insert(points[i].layer);
    if (i > 0) REQUIRE(points[i - 1].mse_to_source <= points[i].mse_to_source);
    // Each row is the corresponding single-layer replay.
    const TransferResult redo =
        replay_with_transfer(m, 7, 6, sched, rec, {points[i].layer});
    REQUIRE(points[i].mse_to_source == redo.mse_to_source);
    REQUIRE(points[i].mse_to_target_baseline == redo.mse_to_target_baseline);
  }
  CHECK(seen.size() == points.size());

  const auto parallel = layerwise_transfer_study(m, rec, 7, 6, sched, 2);
  REQUIRE(parallel.size() == points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    CHECK(parallel[i].layer == points[i].layer);
    CHECK(parallel[i].mse_to_source == points[i].mse_to_source);
  }
}

TEST_CASE("partial traces only admit covered subsets") {
  const ModelConfig cfg = small_config();
  const Model m = Model::build(cfg);
  const DenoiseSchedule sched = DenoiseSchedule::linear(2);
  CaptureFilter layer0;
  layer0.enabled = true;
  layer0.layers = {{0}};
  const RecordedTrace rec = record_trace(m, 5, 6, sched, layer0);
  CHECK_NOTHROW(replay_with_transfer(m, 7, 6, sched, rec, {0}));
  CHECK_THROWS_AS(replay_with_transfer(m, 7, 6, sched, rec, {1}),
                  IncompatibilityError);
  CHECK_THROWS_AS(replay_with_transfer(m, 7, 6, sched, rec, {-1}),
                  IncompatibilityError);
  const auto points = layerwise_transfer_study(m, rec, 7, 6, sched);
  REQUIRE(points.size() == 1);
  CHECK(points[0].layer == 0);
}

TEST_CASE("incompatible replays name the failing field") {
  const ModelConfig cfg = small_config();
  const Model m = Model::build(cfg);
  const DenoiseSchedule sched = DenoiseSchedule::linear(2);
  const RecordedTrace rec = record_trace(m, 5, 6, sched, CaptureFilter::all());

  ModelConfig other_cfg = cfg;
  other_cfg.param_seed += 1;
  const Model other = Model::build(other_cfg);
  try {
    replay_with_transfer(other, 7, 6, sched, rec, {0});
    FAIL("expected IncompatibilityError");
  } catch (const IncompatibilityError& e) {
    CHECK(e.field() == "config");
  }

  try {
    replay_with_transfer(m, 7, 6, DenoiseSchedule::linear(3), rec, {0});
    FAIL("expected IncompatibilityError");
  } catch (const IncompatibilityError& e) {
    CHECK(e.field() == "schedule");
  }

  ModelConfig bigger = cfg;
  bigger.height += 1;
  const Model big = Model::build(bigger);
  try {
    replay_with_transfer(big, 7, 6, sched, rec, {0});
    FAIL("expected IncompatibilityError");
  } catch (const IncompatibilityError& e) {
    CHECK((e.field() == "layout" || e.field() == "config"));
  }
}

TEST_CASE("report formatting round trips the numbers") {
  CHECK(format_double(0.5) == "0.5");
  CHECK(format_double(std::numeric_limits<double>::infinity()) == "inf");
  CHECK(format_double(-std::numeric_limits<double>::infinity()) == "-inf");
  const double v = 0.1 + 0.2;
  CHECK(std::stod(format_double(v)) == v);
  CHECK(format_layer_set({}) == "all");
  CHECK(format_layer_set({2, 0}) == "0;2");

  std::vector<LayerTransferPoint> points(2);
  points[0] = {3, 0.25, 0.5};
  points[1] = {1, 0.75, 1.5};
  const std::string csv = transfer_csv(points);
  CHECK(csv == "layer,mse_to_source,mse_to_target_baseline\n3,0.25,0.5\n1,0.75,1.5\n");

  CHECK(loss_csv({0.5, 0.25}, {1e-3, 1e-3}) ==
        "step,loss,lr\n0,0.5,0.001\n1,0.25,0.001\n");
  CHECK_THROWS_AS(loss_csv({0.5}, {1e-3, 1e-3}), ContractError);
}

TEST_SUITE_END();
