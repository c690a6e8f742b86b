#include <doctest.h>

#include <fstream>

#include <json.hpp>

#include "fer4d/error.hpp"
#include "fer4d/pipeline.hpp"
#include "oracles.hpp"

using namespace fer4d;

namespace {

PipelineConfig tiny(const std::filesystem::path& out) {
  PipelineConfig c;
  c.synthetic.subjects = 4;
  c.synthetic.frames_per_clip = 16;
  c.synthetic.noise_sigma = 0.01;
  c.synthetic.grid_cols = 24;
  c.synthetic.grid_rows = 32;
  c.image_size = 32;
  c.feature_side = 8;
  c.folds = 2;
  c.preset = AugmentationPreset::Original;
  c.augmentation = preset_plan(c.preset);
  c.hyper.epochs = 30;
  c.hyper.learning_rate = 0.5;
  c.exports.models = false;
  c.output_dir = out;
  c.threads = 1;
  return c;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::Io;
}

}  // namespace

TEST_CASE("config JSON: round trip, unknown keys, validation") {
  PipelineConfig c = tiny("somewhere");
  c.views = {-30.0, 0.0};
  c.hyper.feature_map = FeatureMap::SignedMagnitude;
  c.fusion_weights = {1.0, 2.0, 0.5};
  const auto text = config_to_json(c);
  const auto back = config_from_json(text);
  CHECK(config_to_json(back) == text);
  CHECK(back.views == c.views);
  CHECK(back.output_dir == c.output_dir);
  CHECK(back.hyper.feature_map == FeatureMap::SignedMagnitude);
  CHECK(config_to_json(c, false).find("somewhere") == std::string::npos);

  auto j = nlohmann::json::parse(text);
  j["surprise_key"] = 1;
  CHECK(code_of([&] { config_from_json(j.dump()); }) == ErrorCode::Config);
  CHECK(code_of([] { config_from_json("{not json"); }) == ErrorCode::Parse);

  auto bad = tiny("x");
  bad.views = {0.0, 0.0};
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::Config);
  bad = tiny("x");
  bad.folds = 1;
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::Config);
  bad = tiny("x");
  bad.fusion_weights = {0.0, 0.0, 0.0};
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::Config);
  CHECK(code_of([] { parse_preset("everything"); }) == ErrorCode::Config);
}

TEST_CASE("pipeline smoke run: artifacts, shapes and determinism") {
  oracle::TempDir dir("pipe");
  auto cfg = tiny(dir.path() / "a");
  cfg.synthetic.subjects = 6;
  cfg.image_size = 64;
  cfg.folds = 3;
  const auto a = run_pipeline(cfg);
  CHECK(a.result.predicted.size() == 36);
  CHECK(a.result.fold_results.size() == 3);
  CHECK(a.result.report.total == 36);
  for (const char* f : {"report.json", "confusion.csv", "folds.csv", "predictions.csv", "manifest.json", "timings.json"}) {
    CHECK(std::filesystem::exists(cfg.output_dir / f));
  }
  const auto csv = oracle::read_file(cfg.output_dir / "confusion.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);
  const auto report = nlohmann::json::parse(oracle::read_file(cfg.output_dir / "report.json"));
  CHECK(report["view_count"] == 3);
  CHECK(report["confusion"].size() == 6);

  auto again = cfg;
  again.output_dir = dir.path() / "b";
  const auto b = run_pipeline(again);
  CHECK(b.result.predicted == a.result.predicted);
  CHECK(oracle::read_file(again.output_dir / "manifest.json") == oracle::read_file(cfg.output_dir / "manifest.json"));
  CHECK(oracle::read_file(again.output_dir / "report.json") == oracle::read_file(cfg.output_dir / "report.json"));
}

TEST_CASE("pipeline: single frontal view and separate domain streams") {
  oracle::TempDir dir("pipe1");
  auto cfg = tiny(dir.path() / "one");
  cfg.views = {0.0};
  cfg.cross_domain = false;
  const auto r = run_pipeline(cfg);
  CHECK(r.result.fold_results.front().models.size() == 3);
  const auto report = nlohmann::json::parse(oracle::read_file(cfg.output_dir / "report.json"));
  CHECK(report["view_count"] == 1);
  CHECK(report["streams"].size() == 3);
}

TEST_CASE("render cache: a warm run reuses entries and yields identical bytes") {
  oracle::TempDir dir("cache");
  auto cfg = tiny(dir.path() / "out");
  cfg.views = {0.0};
  const Dataset ds = load_dataset(cfg);
  RenderStats cold, warm;
  const auto first = render_dataset(ds, cfg, &cold);
  const auto second = render_dataset(ds, cfg, &warm);
  CHECK(cold.rendered == ds.size());
  CHECK(warm.cache_hits == ds.size());
  CHECK(warm.rendered == 0);
  for (std::size_t n = 0; n < ds.size(); ++n) {
    CHECK(first[n].at(0.0).texture == second[n].at(0.0).texture);
    CHECK(first[n].at(0.0).edepth == second[n].at(0.0).edepth);
  }
}

TEST_CASE("ablation shares folds and reports deltas against the first setting") {
  oracle::TempDir dir("abl");
  auto cfg = tiny(dir.path() / "abl");
  cfg.views = {0.0};
  AblationToggles toggles;
  toggles.presets = {AugmentationPreset::Original};
  const auto out = run_ablation(cfg, toggles);
  REQUIRE(out.entries.size() == 2);
  CHECK(out.entries[0].setting.cross_domain);
  CHECK_FALSE(out.entries[1].setting.cross_domain);
  for (std::size_t f = 0; f < out.entries[0].result.folds.size(); ++f) {
    CHECK(out.entries[0].result.folds[f].test == out.entries[1].result.folds[f].test);
  }
  const auto summary = nlohmann::json::parse(oracle::read_file(cfg.output_dir / "ablation.json"));
  CHECK(summary["baseline"] == out.entries[0].setting.name());
  const auto csv = oracle::read_file(cfg.output_dir / "ablation.csv");
  CHECK(csv.find("delta_vs_baseline") != std::string::npos);
}

TEST_CASE("manifest replay reproduces every artifact") {
  oracle::TempDir dir("replay");
  auto cfg = tiny(dir.path() / "orig");
  cfg.views = {0.0, 15.0};
  run_pipeline(cfg);
  const auto check = replay_manifest(cfg.output_dir / "manifest.json", dir.path() / "again");
  for (const auto& m : check.mismatched) MESSAGE("mismatch " << m);
  for (const auto& m : check.missing) MESSAGE("missing " << m);
  CHECK(check.ok());
  const auto manifest = RunManifest::from_json(oracle::read_file(cfg.output_dir / "manifest.json"));
  CHECK(manifest.kind == "run");
  CHECK(RunManifest::from_json(manifest.to_json()).to_json() == manifest.to_json());
}

TEST_CASE("pipeline errors name the failing stage") {
  oracle::TempDir dir("err");
  auto cfg = tiny(dir.path() / "out");
  cfg.corpus = dir.path() / "no-such-corpus";
  try {
    run_pipeline(cfg);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("stage ingest") != std::string::npos);
  }
}
