#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fer4d/augmentation.hpp"
#include "fer4d/classifier.hpp"
#include "fer4d/dynamic_image.hpp"
#include "fer4d/error.hpp"
#include "fer4d/image_io.hpp"
#include "fer4d/mesh.hpp"
#include "fer4d/mesh_io.hpp"
#include "fer4d/pipeline.hpp"

namespace fs = std::filesystem;
using namespace fer4d;

namespace {

// Command-line overrides applied on top of the config file (or the defaults).
struct Overrides {
  std::string config;
  std::optional<std::string> corpus, out, cache, preset, feature_map;
  std::optional<int> subjects, size, folds, threads, epochs, feature_side, grid_cols, grid_rows;
  std::optional<std::size_t> frames;
  std::optional<double> noise, lr, l2, alpha;
  std::optional<std::uint64_t> seed;
  std::vector<double> views;
  std::optional<bool> cross_domain;
  bool no_cache = false;
  bool quiet = false;

  PipelineConfig build() const {
    PipelineConfig c = config.empty() ? PipelineConfig{} : load_config(config);
    if (corpus) c.corpus = *corpus;
    if (out) c.output_dir = *out;
    if (cache) c.cache_dir = *cache;
    if (subjects) c.synthetic.subjects = *subjects;
    if (frames) c.synthetic.frames_per_clip = *frames;
    if (noise) c.synthetic.noise_sigma = *noise;
    if (grid_cols) c.synthetic.grid_cols = *grid_cols;
    if (grid_rows) c.synthetic.grid_rows = *grid_rows;
    if (seed) c.seed = c.synthetic.seed = c.hyper.seed = *seed;
    if (!views.empty()) c.views = views;
    if (size) c.image_size = *size;
    if (preset) {
      const auto keep = c.augmentation;
      c.preset = parse_preset(*preset);
      c.augmentation = preset_plan(c.preset);
      c.augmentation.magnification_alpha = keep.magnification_alpha;
      c.augmentation.passband = keep.passband;
      c.augmentation.fps = keep.fps;
    }
    if (alpha) c.augmentation.magnification_alpha = *alpha;
    if (cross_domain) c.cross_domain = *cross_domain;
    if (folds) c.folds = *folds;
    if (epochs) c.hyper.epochs = *epochs;
    if (lr) c.hyper.learning_rate = *lr;
    if (l2) c.hyper.l2 = *l2;
    if (feature_map) c.hyper.feature_map = parse_feature_map(*feature_map);
    if (feature_side) c.feature_side = *feature_side;
    if (threads) c.threads = *threads;
    if (no_cache) c.use_cache = false;
    c.validate();
    return c;
  }

  Progress progress() const {
    if (quiet) return {};
    return [](const std::string& line) { std::cerr << line << '\n'; };
  }
};

void add_common(CLI::App& app, Overrides& o) {
  app.add_option("-c,--config", o.config, "JSON config file (fields absent there keep their defaults)");
  app.add_option("--corpus", o.corpus, "Corpus directory; omit to generate synthetic data");
  app.add_option("-o,--out", o.out, "Output directory");
  app.add_option("--cache", o.cache, "Render cache directory (default <out>/cache)");
  app.add_option("--subjects", o.subjects, "Synthetic subjects");
  app.add_option("--frames", o.frames, "Synthetic frames per sequence");
  app.add_option("--noise", o.noise, "Synthetic per-vertex noise sigma");
  app.add_option("--grid-cols", o.grid_cols, "Synthetic face grid columns");
  app.add_option("--grid-rows", o.grid_rows, "Synthetic face grid rows");
  app.add_option("--seed", o.seed, "Seed for data, folds and training");
  app.add_option("--views", o.views, "Yaw angles in degrees")->delimiter(',');
  app.add_option("-k,--size", o.size, "Render size K");
  app.add_option("--preset", o.preset, "Augmentation: original, magnified-variants, original-variants, all");
  app.add_option("--alpha", o.alpha, "EVM magnification factor");
  app.add_flag("--cross-domain,!--no-cross-domain", o.cross_domain, "Fuse domains before pooling");
  app.add_option("--folds", o.folds, "Cross-validation folds");
  app.add_option("--epochs", o.epochs, "Training epochs");
  app.add_option("--lr", o.lr, "Learning rate");
  app.add_option("--l2", o.l2, "L2 penalty");
  app.add_option("--feature-map", o.feature_map, "identity, magnitude or signed-magnitude");
  app.add_option("--feature-side", o.feature_side, "Side of the downsampled CDI feature grid");
  app.add_option("--threads", o.threads, "Worker threads (0: all)");
  app.add_flag("--no-cache", o.no_cache, "Ignore and do not write the render cache");
  app.add_flag("-q,--quiet", o.quiet, "No progress output");
}

// Tags errors escaping `body` with the stage name, as the pipeline does.
template <typename F>
auto staged(const std::string& name, F&& body) {
  try {
    return body();
  } catch (const Error& e) {
    throw e.with_context("stage " + name);
  }
}

std::string unit_stem(const ScanSequence& s, double view) {
  const auto png = image_filename(s.subject_id, s.expression_label, view, -1, "x");
  return png.substr(0, png.size() - std::string("_x.png").size());
}

int cmd_synth(const Overrides& o) {
  const auto cfg = o.build();
  const Dataset ds = staged("ingest", [&] { return generate_dataset(cfg.synthetic); });
  staged("export", [&] { save_corpus(ds, cfg.output_dir / "corpus"); });
  std::cout << "wrote " << ds.size() << " sequences to " << (cfg.output_dir / "corpus").string() << '\n';
  return 0;
}

int cmd_preprocess(const Overrides& o) {
  const auto cfg = o.build();
  const Dataset ds = staged("ingest", [&] { return load_dataset(cfg); });
  const fs::path dir = cfg.output_dir / "preprocess";
  std::size_t written = 0;
  staged("preprocess", [&] {
    for (std::size_t n = 0; n < ds.size(); ++n) {
      const auto& seq = ds.sequences[n];
      for (double view : cfg.views) {
        ScanSequence v;
        try {
          v = preprocess_scan(seq, view, cfg.crop);
        } catch (const Error& e) {
          throw e.with_context("sequence n=" + std::to_string(n) + ", view theta=" + std::to_string(view));
        }
        const fs::path unit = dir / unit_stem(seq, view);
        fs::create_directories(unit);
        for (std::size_t t = 0; t < v.length(); ++t) {
          char name[32];
          std::snprintf(name, sizeof name, "frame_%04zu.obj", t);
          save_obj(v.frames[t].mesh, unit / name);
          ++written;
        }
      }
    }
  });
  std::cout << "wrote " << written << " cropped meshes under " << dir.string() << '\n';
  return 0;
}

int cmd_render(const Overrides& o) {
  const auto cfg = o.build();
  const Dataset ds = staged("ingest", [&] { return load_dataset(cfg); });
  const auto rendered = staged("render", [&] { return render_dataset(ds, cfg, nullptr, o.progress()); });
  const fs::path dir = cfg.output_dir / "render";
  fs::create_directories(dir);
  std::size_t written = 0;
  staged("export", [&] {
    for (std::size_t n = 0; n < ds.size(); ++n) {
      const auto& s = ds.sequences[n];
      for (const auto& [view, stack] : rendered[n]) {
        for (std::size_t t = 0; t < stack.texture.length(); ++t) {
          const int frame = static_cast<int>(t);
          write_png(stack.texture.frames[t], dir / image_filename(s.subject_id, s.expression_label, view, frame, "texture"));
          write_png(stack.depth.frames[t], dir / image_filename(s.subject_id, s.expression_label, view, frame, "depth"));
          write_png(stack.edepth.frames[t], dir / image_filename(s.subject_id, s.expression_label, view, frame, "edepth"));
          written += 3;
        }
      }
    }
  });
  std::cout << "wrote " << written << " images to " << dir.string() << '\n';
  return 0;
}

int cmd_cdi(const Overrides& o) {
  const auto cfg = o.build();
  const Dataset ds = staged("ingest", [&] { return load_dataset(cfg); });
  const auto rendered = staged("render", [&] { return render_dataset(ds, cfg, nullptr, o.progress()); });
  const fs::path dir = cfg.output_dir / "cdi";
  fs::create_directories(dir);
  const auto names = stream_names(cfg.cross_domain);
  std::size_t written = 0;
  staged("pool", [&] {
    for (std::size_t n = 0; n < ds.size(); ++n) {
      const auto& s = ds.sequences[n];
      for (const auto& [view, stack] : rendered[n]) {
        const auto streams = domain_streams(stack, cfg.cross_domain, cfg.fusion_weights);
        for (std::size_t k = 0; k < streams.size(); ++k) {
          const auto di = compute_dynamic_image(streams[k]);
          const std::string suffix = cfg.cross_domain ? "cdi" : names[k] + "_di";
          write_png(normalize_for_display(di), dir / image_filename(s.subject_id, s.expression_label, view, -1, suffix));
          write_dynamic_image(di, dir / (unit_stem(s, view) + "_" + suffix + ".bin"));
          ++written;
        }
      }
    }
  });
  std::cout << "wrote " << written << " dynamic images to " << dir.string() << '\n';
  return 0;
}

int cmd_augment(const Overrides& o) {
  const auto cfg = o.build();
  const Dataset ds = staged("ingest", [&] { return load_dataset(cfg); });
  fs::create_directories(cfg.output_dir);
  const fs::path path = cfg.output_dir / "clips.csv";
  std::ofstream csv(path);
  if (!csv) fail(ErrorCode::Io, "cannot write " + path.string());
  csv << "source,subject,label,view,magnified,reversed,spatial,pass,offset,length\n";
  std::size_t clips = 0;
  staged("augment", [&] {
    for (std::size_t n = 0; n < ds.size(); ++n) {
      const auto& s = ds.sequences[n];
      for (double view : cfg.views) {
        for (const auto& p : enumerate_clips(n, view, s.length(), cfg.augmentation)) {
          csv << p.source << ',' << s.subject_id << ',' << kExpressionNames[s.expression_label - 1] << ',' << p.view
              << ',' << p.magnified << ',' << p.reversed << ',' << p.spatial.label() << ',' << p.pass << ','
              << p.offset << ',' << p.length << '\n';
          ++clips;
        }
      }
    }
  });
  std::cout << "listed " << clips << " clips in " << path.string() << '\n';
  return 0;
}

// Fits one classifier per stream on every sequence and view of the corpus.
int cmd_train(const Overrides& o) {
  const auto cfg = o.build();
  const Dataset ds = staged("ingest", [&] { return load_dataset(cfg); });
  const auto rendered = staged("render", [&] { return render_dataset(ds, cfg, nullptr, o.progress()); });
  const auto features = staged("pool", [&] {
    return extract_features(rendered, cfg, cfg.cross_domain, cfg.augmentation, o.progress());
  });
  const auto names = stream_names(cfg.cross_domain);
  const fs::path dir = cfg.output_dir / "models";
  fs::create_directories(dir);
  staged("train", [&] {
    for (std::size_t s = 0; s < names.size(); ++s) {
      FeatureMatrix x;
      std::vector<int> labels;
      for (std::size_t n = 0; n < ds.size(); ++n) {
        for (const auto& unit : features[n]) {
          const auto& block = unit.train[s];
          x.dim = block.dim;
          for (std::size_t r = 0; r < block.rows; ++r) {
            const float* row = block.data.data() + r * block.dim;
            x.append(std::vector<double>(row, row + block.dim));
            labels.push_back(ds.sequences[n].expression_label);
          }
        }
      }
      const auto model = train(x, labels, cfg.hyper);
      save_model(model, dir / (names[s] + ".model"));
      std::cout << names[s] << ": " << x.rows() << " clips, final loss " << model.loss_trace.back() << '\n';
    }
  });
  return 0;
}

int cmd_eval(const Overrides& o) {
  const auto cfg = o.build();
  const auto out = run_pipeline(cfg, o.progress());
  std::cout << "accuracy " << out.result.report.accuracy << ", mean fold accuracy " << out.result.mean_fold_accuracy
            << '\n'
            << confusion_csv(out.result.report);
  return 0;
}

int cmd_ablate(const Overrides& o, const std::vector<std::string>& presets, const std::string& cd) {
  const auto cfg = o.build();
  AblationToggles toggles;
  toggles.presets.clear();
  for (const auto& p : presets) toggles.presets.push_back(parse_preset(p));
  if (cd == "on") toggles.cross_domain = {true};
  else if (cd == "off") toggles.cross_domain = {false};
  else if (cd != "both") fail(ErrorCode::Config, "--cd must be on, off or both");
  const auto out = run_ablation(cfg, toggles, o.progress());
  const double base = out.entries.front().result.mean_fold_accuracy;
  for (const auto& e : out.entries) {
    std::printf("%-28s %.4f (%+.4f)\n", e.setting.name().c_str(), e.result.mean_fold_accuracy,
                e.result.mean_fold_accuracy - base);
  }
  return 0;
}

int cmd_replay(const Overrides& o, const std::string& manifest, const std::string& out_dir, bool use_cache) {
  const auto check = replay_manifest(manifest, out_dir, use_cache, o.progress());
  for (const auto& m : check.mismatched) std::cout << "mismatch " << m << '\n';
  for (const auto& m : check.missing) std::cout << "missing " << m << '\n';
  std::cout << (check.ok() ? "replay matches\n" : "replay differs\n");
  return check.ok() ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"4D facial expression recognition from cross-domain dynamic images"};
  app.require_subcommand(1);
  Overrides o;

  auto sub = [&](const char* name, const char* help) {
    auto* s = app.add_subcommand(name, help);
    add_common(*s, o);
    return s;
  };
  auto* synth = sub("synth", "Generate a synthetic corpus");
  auto* preprocess = sub("preprocess", "Rotate and crop every frame for each view");
  auto* render = sub("render", "Render texture, depth and enhanced depth images");
  auto* cdi = sub("cdi", "Compute whole-sequence dynamic images");
  auto* augment = sub("augment", "List the augmented clips");
  auto* trainc = sub("train", "Fit one classifier per stream on the whole corpus");
  auto* eval = sub("eval", "Cross-validated run with report and manifest");
  auto* ablate = sub("ablate", "Compare augmentation presets and domain fusion under shared folds");
  std::vector<std::string> presets{"original", "magnified-variants", "original-variants", "all"};
  std::string cd = "on";
  ablate->add_option("--presets", presets, "Presets to compare")->delimiter(',');
  ablate->add_option("--cd", cd, "Cross-domain setting: on, off or both");
  auto* replay = app.add_subcommand("replay", "Re-run a manifest and compare artifact hashes");
  std::string manifest, replay_out = "fer4d-replay";
  replay->add_option("manifest", manifest, "manifest.json to replay")->required();
  replay->add_option("-o,--out", replay_out, "Output directory for the re-run");
  bool replay_cache = false;
  replay->add_flag("--use-cache", replay_cache, "Reuse cached renders");
  replay->add_flag("-q,--quiet", o.quiet, "No progress output");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth(o);
    if (preprocess->parsed()) return cmd_preprocess(o);
    if (render->parsed()) return cmd_render(o);
    if (cdi->parsed()) return cmd_cdi(o);
    if (augment->parsed()) return cmd_augment(o);
    if (trainc->parsed()) return cmd_train(o);
    if (eval->parsed()) return cmd_eval(o);
    if (ablate->parsed()) return cmd_ablate(o, presets, cd);
    if (replay->parsed()) return cmd_replay(o, manifest, replay_out, replay_cache);
  } catch (const Error& e) {
    std::cerr << "fer4d: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "fer4d: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
