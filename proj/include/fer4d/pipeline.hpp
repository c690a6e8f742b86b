#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fer4d/augmentation.hpp"
#include "fer4d/classifier.hpp"
#include "fer4d/collaboration.hpp"
#include "fer4d/image_ops.hpp"
#include "fer4d/mesh.hpp"
#include "fer4d/synthetic.hpp"

namespace fer4d {

enum class AugmentationPreset { Original, MagnifiedVariants, OriginalVariants, All, Custom };

std::string_view to_string(AugmentationPreset p);
AugmentationPreset parse_preset(std::string_view name);
AugmentationPlan preset_plan(AugmentationPreset p);

struct ExportOptions {
  bool cdi_png = true;  // display-normalized whole-sequence CDI per (sequence, view)
  bool cdi_raw = true;  // signed float32 CDI per (sequence, view)
  bool models = true;   // classifier checkpoints per fold and stream
};

struct PipelineConfig {
  // Empty corpus path means "generate from `synthetic`".
  std::filesystem::path corpus;
  SyntheticSpec synthetic{};
  std::vector<double> views{-15.0, 0.0, 15.0};
  int image_size = 224;
  CropParams crop{};
  ClaheParams clahe{};
  std::vector<double> fusion_weights{1.0, 1.0, 1.0};  // texture, depth, enhanced depth
  bool cross_domain = true;
  AugmentationPreset preset = AugmentationPreset::All;
  AugmentationPlan augmentation = AugmentationPlan::all();
  // Reversed clips flip the display polarity, so the pipeline trains on signed-magnitude features.
  TrainingHyper hyper{.learning_rate = 2.0, .epochs = 300, .l2 = 1e-3, .seed = 0, .feature_map = FeatureMap::SignedMagnitude};
  int feature_side = kDefaultFeatureSide;
  int folds = 10;
  std::uint64_t seed = 0;
  ExportOptions exports{};
  // Run location; excluded from the manifest snapshot.
  std::filesystem::path output_dir = "fer4d-out";
  std::filesystem::path cache_dir;  // empty: <output_dir>/cache
  int threads = 0;                  // 0: all hardware threads
  bool use_cache = true;

  void validate() const;
  std::filesystem::path effective_cache_dir() const;
};

// JSON round trip. Unknown keys are configuration errors; absent keys keep their defaults.
std::string config_to_json(const PipelineConfig& cfg, bool include_location = true);
PipelineConfig config_from_json(const std::string& text);
PipelineConfig load_config(const std::filesystem::path& path);

// Per (sequence, view) renderings, quantized to 8 bits like their PNG exports.
struct RenderedStack {
  ImageSequence texture;
  ImageSequence depth;
  ImageSequence edepth;
};

// Domain streams fed to the classifiers: {cross-domain} or {texture, depth, enhanced depth}.
DomainStack domain_streams(const RenderedStack& rendered, bool cross_domain, std::span<const double> weights);
std::vector<std::string> stream_names(bool cross_domain);

Dataset load_dataset(const PipelineConfig& cfg);
std::string dataset_hash(const Dataset& ds);

using Progress = std::function<void(const std::string&)>;

// rendered[n] maps each view to its stack.
using RenderedDataset = std::vector<ViewMap<RenderedStack>>;

struct RenderStats {
  std::size_t cache_hits = 0;
  std::size_t rendered = 0;
};

RenderedStack render_unit(const ScanSequence& seq, double view, const PipelineConfig& cfg);
RenderedDataset render_dataset(const Dataset& ds, const PipelineConfig& cfg, RenderStats* stats = nullptr,
                               const Progress& progress = {});

// Test clips are the windows of the untouched sequence under the plan's windowing passes.
AugmentationPlan test_plan(const AugmentationPlan& plan);

struct FeatureBlock {
  std::size_t dim = 0;
  std::size_t rows = 0;
  std::vector<float> data;
};

// features[n][v][s]: stacked clip features of sequence n, view index v, stream s.
struct UnitFeatures {
  std::vector<FeatureBlock> train;
  std::vector<FeatureBlock> test;
};
using FeatureSet = std::vector<std::vector<UnitFeatures>>;

FeatureSet extract_features(const RenderedDataset& rendered, const PipelineConfig& cfg, bool cross_domain,
                            const AugmentationPlan& plan, const Progress& progress = {});

struct FoldResult {
  std::vector<std::size_t> test;        // sequence indices
  std::vector<int> predicted;           // parallel to test
  std::vector<Probabilities> collaborated;
  double accuracy = 0.0;
  std::vector<ClassifierModel> models;  // one per stream
};

struct RunResult {
  std::vector<Fold> folds;
  std::vector<FoldResult> fold_results;
  EvaluationReport report;             // pooled over every test example
  double mean_fold_accuracy = 0.0;
  std::vector<int> predicted;          // per sequence
};

RunResult evaluate_features(const Dataset& ds, const FeatureSet& features, const std::vector<Fold>& folds,
                            const PipelineConfig& cfg, bool cross_domain, const Progress& progress = {});

struct ArtifactRecord {
  std::string path;  // relative to the output directory
  std::string sha256;
  std::uintmax_t bytes = 0;
};

struct StageRecord {
  std::string name;
  std::string input_hash;
  std::vector<ArtifactRecord> artifacts;
};

struct RunManifest {
  std::string kind;  // "run" or "ablation"
  std::string config_json;
  std::string toggles_json;  // ablation only
  std::vector<StageRecord> stages;

  std::string to_json() const;
  static RunManifest from_json(const std::string& text);
};

struct PipelineOutcome {
  RunResult result;
  RunManifest manifest;
};

// Full run: ingest, render, pool, train, collaborate, report. Writes report.json, confusion.csv,
// folds.csv, predictions.csv, CDIs, checkpoints and manifest.json under cfg.output_dir; stage
// timings go to timings.json, which the manifest does not cover.
PipelineOutcome run_pipeline(const PipelineConfig& cfg, const Progress& progress = {});

struct AblationSetting {
  bool cross_domain = true;
  AugmentationPreset preset = AugmentationPreset::All;
  std::string name() const;
};

struct AblationToggles {
  std::vector<bool> cross_domain{true, false};
  std::vector<AugmentationPreset> presets{AugmentationPreset::All};

  std::vector<AblationSetting> settings() const;
};

struct AblationEntry {
  AblationSetting setting;
  RunResult result;
};

struct AblationOutcome {
  std::vector<AblationEntry> entries;
  RunManifest manifest;
};

// Every setting shares the rendered data, fold assignment and classifier seed.
AblationOutcome run_ablation(const PipelineConfig& cfg, const AblationToggles& toggles, const Progress& progress = {});

struct ReplayCheck {
  std::vector<std::string> mismatched;
  std::vector<std::string> missing;
  bool ok() const { return mismatched.empty() && missing.empty(); }
};

// Re-runs the manifest's configuration into `output_dir` and compares artifact hashes.
ReplayCheck replay_manifest(const std::filesystem::path& manifest_path, const std::filesystem::path& output_dir,
                            bool use_cache = false, const Progress& progress = {});

}  // namespace fer4d
