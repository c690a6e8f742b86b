#include "fer4d/pipeline.hpp"

#include <png.h>
#include <tbb/parallel_for.h>
#include <tbb/task_arena.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "fer4d/dynamic_image.hpp"
#include "fer4d/error.hpp"
#include "fer4d/hashing.hpp"
#include "fer4d/image_io.hpp"
#include "fer4d/mesh_io.hpp"
#include "fer4d/renderer.hpp"

namespace fer4d {

using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------------------------
// Presets and configuration

std::string_view to_string(AugmentationPreset p) {
  switch (p) {
    case AugmentationPreset::Original: return "original";
    case AugmentationPreset::MagnifiedVariants: return "evm_variants";
    case AugmentationPreset::OriginalVariants: return "original_variants";
    case AugmentationPreset::All: return "all";
    case AugmentationPreset::Custom: return "custom";
  }
  return "?";
}

AugmentationPreset parse_preset(std::string_view name) {
  for (auto p : {AugmentationPreset::Original, AugmentationPreset::MagnifiedVariants,
                 AugmentationPreset::OriginalVariants, AugmentationPreset::All, AugmentationPreset::Custom}) {
    if (name == to_string(p)) return p;
  }
  fail(ErrorCode::Config, "unknown augmentation preset '" + std::string(name) +
                              "' (expected original, evm_variants, original_variants, all or custom)");
}

AugmentationPlan preset_plan(AugmentationPreset p) {
  switch (p) {
    case AugmentationPreset::Original: return AugmentationPlan::original();
    case AugmentationPreset::MagnifiedVariants: return AugmentationPlan::magnified_variants();
    case AugmentationPreset::OriginalVariants: return AugmentationPlan::original_variants();
    case AugmentationPreset::All:
    case AugmentationPreset::Custom: return AugmentationPlan::all();
  }
  return AugmentationPlan::all();
}

void PipelineConfig::validate() const {
  if (corpus.empty()) synthetic.validate();
  if (views.empty()) fail(ErrorCode::Config, "view set is empty");
  std::set<double> distinct;
  for (double v : views) {
    if (!std::isfinite(v)) fail(ErrorCode::Config, "view angles must be finite");
    if (!distinct.insert(v).second) fail(ErrorCode::Config, "duplicate view angle " + std::to_string(v));
  }
  if (image_size < 4) fail(ErrorCode::Config, "image_size must be >= 4");
  if (!(crop.forehead_fraction > 0.0 && crop.forehead_fraction <= 2.0)) {
    fail(ErrorCode::Config, "forehead_fraction must lie in (0, 2]");
  }
  if (!(crop.depth_margin_factor >= 0.0)) fail(ErrorCode::Config, "depth_margin_factor must be >= 0");
  if (clahe.tiles < 1 || !(clahe.clip_limit > 0.0) || clahe.bins < 2) fail(ErrorCode::Config, "invalid CLAHE parameters");
  if (fusion_weights.size() != 3) fail(ErrorCode::Config, "fusion_weights needs three entries (texture, depth, edepth)");
  double wsum = 0.0;
  for (double w : fusion_weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) fail(ErrorCode::Config, "fusion weights must be finite and >= 0");
    wsum += w;
  }
  if (!(wsum > 0.0)) fail(ErrorCode::Config, "fusion weights must not all be zero");
  augmentation.validate();
  if (!(hyper.learning_rate > 0.0) || hyper.epochs < 1 || !(hyper.l2 >= 0.0)) {
    fail(ErrorCode::Config, "invalid classifier hyperparameters");
  }
  if (feature_side < 1 || feature_side > image_size) fail(ErrorCode::Config, "feature_side must lie in [1, image_size]");
  if (folds < 2) fail(ErrorCode::Config, "folds must be >= 2");
  if (threads < 0) fail(ErrorCode::Config, "threads must be >= 0");
  if (output_dir.empty()) fail(ErrorCode::Config, "output_dir is empty");
}

fs::path PipelineConfig::effective_cache_dir() const { return cache_dir.empty() ? output_dir / "cache" : cache_dir; }

namespace {

ojson plan_to_json(const AugmentationPlan& p) {
  auto pass = [](const std::optional<WindowPass>& w) -> ojson {
    if (!w) return nullptr;
    return ojson{{"window", w->window}, {"stride", w->stride}};
  };
  ojson j;
  j["magnification_alpha"] = p.magnification_alpha;
  j["passband_hz"] = {p.passband.low_hz, p.passband.high_hz};
  j["fps"] = p.fps;
  j["include_original"] = p.include_original;
  j["include_magnified"] = p.include_magnified;
  j["include_reversal"] = p.include_reversal;
  j["include_flip"] = p.include_flip;
  j["inplane_rotations_deg"] = p.inplane_rotations_deg;
  j["pass1"] = pass(p.pass1);
  j["pass2"] = pass(p.pass2);
  return j;
}

ojson synthetic_to_json(const SyntheticSpec& s) {
  ojson j;
  j["subjects"] = s.subjects;
  j["frames_per_clip"] = s.frames_per_clip;
  j["fps"] = s.fps;
  j["noise_sigma"] = s.noise_sigma;
  j["seed"] = s.seed;
  j["semi_axes_mm"] = {s.semi_x, s.semi_y, s.semi_z};
  j["grid"] = {s.grid_cols, s.grid_rows};
  ojson profiles = ojson::array();
  for (const auto& p : s.profiles) {
    ojson bumps = ojson::array();
    for (const auto& b : p.bumps) {
      bumps.push_back({{"center", {b.cx, b.cy}}, {"sigma", b.sigma}, {"displacement", {b.dx, b.dy, b.dz}},
                       {"mirror", b.mirror}});
    }
    profiles.push_back(std::move(bumps));
  }
  j["profiles"] = std::move(profiles);
  return j;
}

ojson config_json(const PipelineConfig& c, bool include_location) {
  ojson j;
  j["format"] = "fer4d-config";
  j["version"] = 1;
  j["input"] = {{"corpus", c.corpus.generic_string()}, {"synthetic", synthetic_to_json(c.synthetic)}};
  j["views_deg"] = c.views;
  j["image_size"] = c.image_size;
  j["crop"] = {{"forehead_fraction", c.crop.forehead_fraction}, {"depth_margin_factor", c.crop.depth_margin_factor}};
  j["clahe"] = {{"tiles", c.clahe.tiles}, {"clip_limit", c.clahe.clip_limit}, {"bins", c.clahe.bins}};
  j["fusion_weights"] = c.fusion_weights;
  j["cross_domain"] = c.cross_domain;
  ojson aug = {{"preset", std::string(to_string(c.preset))}};
  aug.update(plan_to_json(c.augmentation));
  j["augmentation"] = std::move(aug);
  j["classifier"] = {{"learning_rate", c.hyper.learning_rate},
                     {"epochs", c.hyper.epochs},
                     {"l2", c.hyper.l2},
                     {"seed", c.hyper.seed},
                     {"feature_map", std::string(to_string(c.hyper.feature_map))},
                     {"feature_side", c.feature_side}};
  j["folds"] = c.folds;
  j["seed"] = c.seed;
  j["export"] = {{"cdi_png", c.exports.cdi_png}, {"cdi_raw", c.exports.cdi_raw}, {"models", c.exports.models}};
  if (include_location) {
    j["output_dir"] = c.output_dir.generic_string();
    j["cache_dir"] = c.cache_dir.generic_string();
    j["use_cache"] = c.use_cache;
    j["threads"] = c.threads;
  }
  return j;
}

// Reads keys from one JSON object and rejects the ones nobody asked for.
class Fields {
 public:
  Fields(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) fail(ErrorCode::Config, where_ + ": expected an object");
  }
  ~Fields() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) fail(ErrorCode::Config, where_ + ": unknown key '" + key + "'");
    }
  }

  const nlohmann::json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  template <typename T>
  bool get(const std::string& key, T& out) {
    const auto* v = find(key);
    if (!v) return false;
    try {
      out = v->get<T>();
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::Config, where_ + "." + key + ": " + e.what());
    }
    return true;
  }

  std::string path(const std::string& key) const { return where_ + "." + key; }

 private:
  const nlohmann::json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

void read_pair(Fields& f, const std::string& key, double& a, double& b) {
  std::vector<double> v;
  if (!f.get(key, v)) return;
  if (v.size() != 2) fail(ErrorCode::Config, f.path(key) + ": expected two numbers");
  a = v[0];
  b = v[1];
}

void read_pass(Fields& f, const std::string& key, std::optional<WindowPass>& out) {
  const auto* v = f.find(key);
  if (!v) return;
  if (v->is_null()) {
    out.reset();
    return;
  }
  Fields p(*v, f.path(key));
  WindowPass w = out.value_or(WindowPass{});
  p.get("window", w.window);
  p.get("stride", w.stride);
  out = w;
}

void read_synthetic(const nlohmann::json& j, SyntheticSpec& s) {
  Fields f(j, "input.synthetic");
  f.get("subjects", s.subjects);
  f.get("frames_per_clip", s.frames_per_clip);
  f.get("fps", s.fps);
  f.get("noise_sigma", s.noise_sigma);
  f.get("seed", s.seed);
  std::vector<double> axes;
  if (f.get("semi_axes_mm", axes)) {
    if (axes.size() != 3) fail(ErrorCode::Config, "input.synthetic.semi_axes_mm: expected three numbers");
    s.semi_x = axes[0], s.semi_y = axes[1], s.semi_z = axes[2];
  }
  std::vector<int> grid;
  if (f.get("grid", grid)) {
    if (grid.size() != 2) fail(ErrorCode::Config, "input.synthetic.grid: expected [cols, rows]");
    s.grid_cols = grid[0], s.grid_rows = grid[1];
  }
  if (const auto* p = f.find("profiles")) {
    if (!p->is_array() || p->size() != kNumClasses) {
      fail(ErrorCode::Config, "input.synthetic.profiles: expected six per-class bump lists");
    }
    for (int l = 0; l < kNumClasses; ++l) {
      s.profiles[l].bumps.clear();
      for (const auto& bj : (*p)[l]) {
        Fields bf(bj, "input.synthetic.profiles[" + std::to_string(l) + "]");
        DeformationBump b;
        read_pair(bf, "center", b.cx, b.cy);
        bf.get("sigma", b.sigma);
        std::vector<double> d;
        if (bf.get("displacement", d)) {
          if (d.size() != 3) fail(ErrorCode::Config, "bump displacement needs three numbers");
          b.dx = d[0], b.dy = d[1], b.dz = d[2];
        }
        bf.get("mirror", b.mirror);
        s.profiles[l].bumps.push_back(b);
      }
    }
  }
}

}  // namespace

std::string config_to_json(const PipelineConfig& cfg, bool include_location) {
  return config_json(cfg, include_location).dump(2) + "\n";
}

PipelineConfig config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::Parse, std::string("config: ") + e.what());
  }
  PipelineConfig c;
  Fields f(j, "config");
  std::string format;
  if (f.get("format", format) && format != "fer4d-config") fail(ErrorCode::Format, "config: format is not fer4d-config");
  int version = 1;
  if (f.get("version", version) && version != 1) fail(ErrorCode::Format, "config: unsupported version");
  if (const auto* in = f.find("input")) {
    Fields inf(*in, "input");
    std::string corpus;
    if (inf.get("corpus", corpus)) c.corpus = corpus;
    if (const auto* s = inf.find("synthetic")) read_synthetic(*s, c.synthetic);
  }
  f.get("views_deg", c.views);
  f.get("image_size", c.image_size);
  if (const auto* cj = f.find("crop")) {
    Fields cf(*cj, "crop");
    cf.get("forehead_fraction", c.crop.forehead_fraction);
    cf.get("depth_margin_factor", c.crop.depth_margin_factor);
  }
  if (const auto* cj = f.find("clahe")) {
    Fields cf(*cj, "clahe");
    cf.get("tiles", c.clahe.tiles);
    cf.get("clip_limit", c.clahe.clip_limit);
    cf.get("bins", c.clahe.bins);
  }
  f.get("fusion_weights", c.fusion_weights);
  f.get("cross_domain", c.cross_domain);
  if (const auto* aj = f.find("augmentation")) {
    Fields af(*aj, "augmentation");
    std::string preset = "all";
    af.get("preset", preset);
    c.preset = parse_preset(preset);
    const AugmentationPlan base = preset_plan(c.preset);
    AugmentationPlan& p = c.augmentation;
    p = base;
    af.get("magnification_alpha", p.magnification_alpha);
    read_pair(af, "passband_hz", p.passband.low_hz, p.passband.high_hz);
    af.get("fps", p.fps);
    af.get("include_original", p.include_original);
    af.get("include_magnified", p.include_magnified);
    af.get("include_reversal", p.include_reversal);
    af.get("include_flip", p.include_flip);
    af.get("inplane_rotations_deg", p.inplane_rotations_deg);
    read_pass(af, "pass1", p.pass1);
    read_pass(af, "pass2", p.pass2);
    if (c.preset != AugmentationPreset::Custom && plan_to_json(p) != plan_to_json(base)) {
      c.preset = AugmentationPreset::Custom;
    }
  }
  if (const auto* cj = f.find("classifier")) {
    Fields cf(*cj, "classifier");
    cf.get("learning_rate", c.hyper.learning_rate);
    cf.get("epochs", c.hyper.epochs);
    cf.get("l2", c.hyper.l2);
    cf.get("seed", c.hyper.seed);
    std::string map;
    if (cf.get("feature_map", map)) c.hyper.feature_map = parse_feature_map(map);
    cf.get("feature_side", c.feature_side);
  }
  f.get("folds", c.folds);
  f.get("seed", c.seed);
  if (const auto* ej = f.find("export")) {
    Fields ef(*ej, "export");
    ef.get("cdi_png", c.exports.cdi_png);
    ef.get("cdi_raw", c.exports.cdi_raw);
    ef.get("models", c.exports.models);
  }
  std::string dir;
  if (f.get("output_dir", dir)) c.output_dir = dir;
  if (f.get("cache_dir", dir)) c.cache_dir = dir;
  f.get("use_cache", c.use_cache);
  f.get("threads", c.threads);
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  try {
    return config_from_json(text.str());
  } catch (const Error& e) {
    throw e.with_context(path.string());
  }
}

// ---------------------------------------------------------------------------------------------
// Ingest and render

Dataset load_dataset(const PipelineConfig& cfg) {
  Dataset ds = cfg.corpus.empty() ? generate_dataset(cfg.synthetic) : load_corpus(cfg.corpus);
  ds.validate();
  if (ds.sequences.empty()) fail(ErrorCode::Config, "dataset has no sequences");
  return ds;
}

namespace {

void hash_sequence(Sha256& h, const ScanSequence& seq) {
  h.update(seq.subject_id);
  h.update_value(static_cast<std::int32_t>(seq.expression_label));
  h.update_value(static_cast<std::uint64_t>(seq.frames.size()));
  for (const auto& f : seq.frames) {
    h.update_value(static_cast<std::uint64_t>(f.mesh.vertices.size()));
    h.update(f.mesh.vertices.data(), f.mesh.vertices.size() * sizeof(Vertex3));
    h.update_value(static_cast<std::uint64_t>(f.mesh.faces.size()));
    h.update(f.mesh.faces.data(), f.mesh.faces.size() * sizeof(Face));
    h.update_value(static_cast<std::uint64_t>(f.mesh.colors.size()));
    h.update(f.mesh.colors.data(), f.mesh.colors.size() * sizeof(Rgb));
    for (const auto* a : f.landmarks.anchors()) h.update_value(*a);
  }
}

std::string sequence_hash(const ScanSequence& seq) {
  Sha256 h;
  hash_sequence(h, seq);
  return h.hex();
}

double quantize8(double v) { return static_cast<double>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)) / 255.0; }

void quantize(ImageSequence& seq) {
  for (auto& f : seq.frames) {
    for (auto& p : f.pixels) p = quantize8(p);
  }
}

std::string render_key(const std::string& seq_hash, double view, const PipelineConfig& cfg) {
  ojson j;
  j["stage"] = "render";
  j["revision"] = 1;
  j["sequence"] = seq_hash;
  j["view_deg"] = view;
  j["image_size"] = cfg.image_size;
  j["crop"] = {cfg.crop.forehead_fraction, cfg.crop.depth_margin_factor};
  j["clahe"] = {cfg.clahe.tiles, cfg.clahe.clip_limit, cfg.clahe.bins};
  return sha256_hex(j.dump());
}

// Cache entry: one 8-bit grayscale PNG strip of texture, depth and enhanced-depth frames stacked
// vertically (K wide, 3*T*K tall).
void write_strip(const fs::path& path, const RenderedStack& s) {
  const int k = s.texture.size();
  const std::size_t t = s.texture.length();
  std::vector<png_byte> buf;
  buf.reserve(3 * t * static_cast<std::size_t>(k) * k);
  for (const auto* seq : {&s.texture, &s.depth, &s.edepth}) {
    for (const auto& f : seq->frames) {
      for (double p : f.pixels) buf.push_back(static_cast<png_byte>(std::lround(p * 255.0)));
    }
  }
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(k);
  image.height = static_cast<png_uint_32>(3 * t * k);
  image.format = PNG_FORMAT_GRAY;
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  if (!png_image_write_to_file(&image, tmp.c_str(), 0, buf.data(), 0, nullptr)) {
    fail(ErrorCode::Io, "cannot write cache entry " + tmp.string() + ": " + image.message);
  }
  fs::rename(tmp, path);
}

bool read_strip(const fs::path& path, int k, std::size_t t, RenderedStack& out) {
  if (!fs::exists(path)) return false;
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) return false;
  image.format = PNG_FORMAT_GRAY;
  if (image.width != static_cast<png_uint_32>(k) || image.height != static_cast<png_uint_32>(3 * t * k)) {
    png_image_free(&image);
    return false;
  }
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) return false;
  std::size_t pos = 0;
  const std::pair<ImageSequence*, Domain> parts[] = {
      {&out.texture, Domain::Texture}, {&out.depth, Domain::Depth}, {&out.edepth, Domain::EnhancedDepth}};
  for (const auto& [seq, domain] : parts) {
    seq->frames.clear();
    for (std::size_t i = 0; i < t; ++i) {
      DomainImage img(domain, k);
      for (auto& p : img.pixels) p = buf[pos++] / 255.0;
      seq->frames.push_back(std::move(img));
    }
  }
  return true;
}

template <typename F>
void run_parallel(int threads, std::size_t n, F&& body) {
  tbb::task_arena arena(threads > 0 ? threads : tbb::task_arena::automatic);
  arena.execute([&] {
    tbb::parallel_for(std::size_t{0}, n, [&](std::size_t i) { body(i); });
  });
}

std::string unit_label(const ScanSequence& seq, std::size_t n, double view) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "sequence n=%zu (%s, %s), view theta=%g", n, seq.subject_id.c_str(),
                std::string(kExpressionNames.at(seq.expression_label - 1)).c_str(), view);
  return buf;
}

}  // namespace

std::string dataset_hash(const Dataset& ds) {
  Sha256 h;
  h.update_value(static_cast<std::uint64_t>(ds.sequences.size()));
  for (const auto& s : ds.sequences) hash_sequence(h, s);
  return h.hex();
}

RenderedStack render_unit(const ScanSequence& seq, double view, const PipelineConfig& cfg) {
  const ScanSequence pre = preprocess_scan(seq, view, cfg.crop);
  // One camera per view, fitted to the first frame, so motion stays visible across frames.
  const CameraSpec cam = CameraSpec::fit(pre.frames.front().mesh);
  RenderedView rv = render_sequence(pre, cam, cfg.image_size);
  RenderedStack out;
  out.texture = std::move(rv.texture);
  out.depth = std::move(rv.depth);
  quantize(out.texture);
  quantize(out.depth);
  out.edepth = clahe_sequence(out.depth, cfg.clahe);
  quantize(out.edepth);
  return out;
}

RenderedDataset render_dataset(const Dataset& ds, const PipelineConfig& cfg, RenderStats* stats,
                               const Progress& progress) {
  const std::size_t nv = cfg.views.size();
  const std::size_t units = ds.sequences.size() * nv;
  std::vector<RenderedStack> flat(units);
  std::vector<unsigned char> hit(units, 0);
  std::vector<std::string> seq_hashes(ds.sequences.size());
  if (cfg.use_cache) {
    run_parallel(cfg.threads, ds.sequences.size(), [&](std::size_t n) { seq_hashes[n] = sequence_hash(ds.sequences[n]); });
  }
  const fs::path cache = cfg.effective_cache_dir() / "render";

  run_parallel(cfg.threads, units, [&](std::size_t u) {
    const std::size_t n = u / nv;
    const double view = cfg.views[u % nv];
    const auto& seq = ds.sequences[n];
    try {
      fs::path entry;
      if (cfg.use_cache) {
        entry = cache / (render_key(seq_hashes[n], view, cfg) + ".png");
        if (read_strip(entry, cfg.image_size, seq.length(), flat[u])) {
          hit[u] = 1;
          return;
        }
      }
      flat[u] = render_unit(seq, view, cfg);
      if (cfg.use_cache) write_strip(entry, flat[u]);
    } catch (const Error& e) {
      throw e.with_context(unit_label(seq, n, view));
    }
  });

  RenderedDataset out(ds.sequences.size());
  std::size_t hits = 0;
  for (std::size_t u = 0; u < units; ++u) {
    out[u / nv].emplace(cfg.views[u % nv], std::move(flat[u]));
    hits += hit[u];
  }
  if (stats) {
    stats->cache_hits = hits;
    stats->rendered = units - hits;
  }
  if (progress) {
    progress("render: " + std::to_string(units) + " (sequence, view) units, " + std::to_string(hits) + " from cache");
  }
  return out;
}

DomainStack domain_streams(const RenderedStack& r, bool cross_domain, std::span<const double> weights) {
  if (cross_domain) return {fuse_sequence(r.texture, r.depth, r.edepth, weights)};
  return {r.texture, r.depth, r.edepth};
}

std::vector<std::string> stream_names(bool cross_domain) {
  if (cross_domain) return {"cd"};
  return {"texture", "depth", "edepth"};
}

// ---------------------------------------------------------------------------------------------
// Pooling and features

AugmentationPlan test_plan(const AugmentationPlan& plan) {
  AugmentationPlan p = plan;
  p.include_original = true;
  p.include_magnified = false;
  p.include_reversal = false;
  p.include_flip = false;
  p.inplane_rotations_deg.clear();
  return p;
}

namespace {

void pool_clips(const DomainStack& stack, std::size_t n, double view, const AugmentationPlan& plan, int side,
                std::vector<FeatureBlock>& blocks) {
  blocks.assign(stack.size(), FeatureBlock{});
  for (auto& b : blocks) b.dim = static_cast<std::size_t>(side) * side;
  for_each_clip(stack, n, view, plan, [&](const ClipProvenance&, const std::vector<std::span<const DomainImage>>& spans) {
    for (std::size_t s = 0; s < spans.size(); ++s) {
      const auto f = featurize(compute_dynamic_image(spans[s]), side);
      blocks[s].data.insert(blocks[s].data.end(), f.begin(), f.end());
      ++blocks[s].rows;
    }
  });
}

}  // namespace

FeatureSet extract_features(const RenderedDataset& rendered, const PipelineConfig& cfg, bool cross_domain,
                            const AugmentationPlan& plan, const Progress& progress) {
  plan.validate();
  const AugmentationPlan tplan = test_plan(plan);
  const std::size_t nv = cfg.views.size();
  const std::size_t units = rendered.size() * nv;
  FeatureSet out(rendered.size(), std::vector<UnitFeatures>(nv));
  run_parallel(cfg.threads, units, [&](std::size_t u) {
    const std::size_t n = u / nv, v = u % nv;
    const double view = cfg.views[v];
    try {
      const DomainStack stack = domain_streams(rendered[n].at(view), cross_domain, cfg.fusion_weights);
      pool_clips(stack, n, view, plan, cfg.feature_side, out[n][v].train);
      pool_clips(stack, n, view, tplan, cfg.feature_side, out[n][v].test);
    } catch (const Error& e) {
      throw e.with_context("sequence n=" + std::to_string(n) + ", view theta=" + std::to_string(view));
    }
  });
  if (progress) {
    const auto& u0 = out.front().front();
    progress("pool: " + std::to_string(u0.train.front().rows) + " training and " +
             std::to_string(u0.test.front().rows) + " test clips per (sequence, view, stream), " +
             std::to_string(u0.train.size()) + " stream(s)");
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// Training and collaboration

namespace {

// Checkpoints store float32, so in-memory models are rounded the same way; a model reloaded from
// disk then predicts exactly like the one that was trained.
void round_to_float(ClassifierModel& m) {
  for (auto& w : m.weights) w = static_cast<float>(w);
  for (auto& b : m.biases) b = static_cast<float>(b);
  for (auto& l : m.loss_trace) l = static_cast<float>(l);
}

}  // namespace

RunResult evaluate_features(const Dataset& ds, const FeatureSet& features, const std::vector<Fold>& folds,
                            const PipelineConfig& cfg, bool cross_domain, const Progress& progress) {
  const std::size_t nv = cfg.views.size();
  const std::size_t streams = stream_names(cross_domain).size();
  RunResult run;
  run.folds = folds;
  run.predicted.assign(ds.sequences.size(), 0);

  for (std::size_t f = 0; f < folds.size(); ++f) {
    const Fold& fold = folds[f];
    FoldResult fr;
    fr.test = fold.test;
    ScoreTensor tensor(fold.test.size(), nv * streams);
    for (std::size_t s = 0; s < streams; ++s) {
      FeatureMatrix x;
      std::vector<int> labels;
      for (auto n : fold.train) {
        for (std::size_t v = 0; v < nv; ++v) {
          const auto& block = features[n][v].train[s];
          x.dim = block.dim;
          x.data.insert(x.data.end(), block.data.begin(), block.data.end());
          labels.insert(labels.end(), block.rows, ds.sequences[n].expression_label);
        }
      }
      ClassifierModel model;
      try {
        model = train(x, labels, cfg.hyper);
      } catch (const Error& e) {
        throw e.with_context("fold " + std::to_string(f + 1) + ", stream " + stream_names(cross_domain)[s]);
      }
      round_to_float(model);

      for (std::size_t i = 0; i < fold.test.size(); ++i) {
        for (std::size_t v = 0; v < nv; ++v) {
          const auto& block = features[fold.test[i]][v].test[s];
          Probabilities mean{};
          std::vector<double> row(block.dim);
          for (std::size_t r = 0; r < block.rows; ++r) {
            std::copy_n(block.data.begin() + static_cast<std::ptrdiff_t>(r * block.dim), block.dim, row.begin());
            const auto p = predict_proba(model, row);
            for (int l = 0; l < kNumClasses; ++l) mean[l] += p[l];
          }
          for (auto& p : mean) p /= static_cast<double>(block.rows);
          tensor.at(i, v * streams + s) = mean;
        }
      }
      if (progress) {
        progress("fold " + std::to_string(f + 1) + "/" + std::to_string(folds.size()) + " stream " +
                 stream_names(cross_domain)[s] + ": trained on " + std::to_string(labels.size()) + " clips");
      }
      fr.models.push_back(std::move(model));
    }
    fr.collaborated = collaborate(tensor);
    fr.predicted = final_prediction(fr.collaborated);
    std::vector<int> truth;
    for (auto n : fold.test) truth.push_back(ds.sequences[n].expression_label);
    fr.accuracy = evaluate(fr.predicted, truth).accuracy;
    for (std::size_t i = 0; i < fold.test.size(); ++i) run.predicted[fold.test[i]] = fr.predicted[i];
    run.fold_results.push_back(std::move(fr));
  }

  std::vector<int> truth;
  for (const auto& s : ds.sequences) truth.push_back(s.expression_label);
  run.report = evaluate(run.predicted, truth);
  double sum = 0.0;
  for (const auto& fr : run.fold_results) sum += fr.accuracy;
  run.mean_fold_accuracy = sum / static_cast<double>(run.fold_results.size());
  return run;
}

// ---------------------------------------------------------------------------------------------
// Manifest

std::string RunManifest::to_json() const {
  ojson j;
  j["format"] = "fer4d-manifest";
  j["version"] = 1;
  j["kind"] = kind;
  j["config"] = ojson::parse(config_json);
  if (!toggles_json.empty()) j["toggles"] = ojson::parse(toggles_json);
  ojson st = ojson::array();
  for (const auto& s : stages) {
    ojson arts = ojson::array();
    for (const auto& a : s.artifacts) arts.push_back({{"path", a.path}, {"sha256", a.sha256}, {"bytes", a.bytes}});
    st.push_back({{"name", s.name}, {"input_sha256", s.input_hash}, {"artifacts", std::move(arts)}});
  }
  j["stages"] = std::move(st);
  return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json(const std::string& text) {
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, std::string("manifest: ") + e.what());
  }
  if (!j.is_object() || j.value("format", "") != "fer4d-manifest") fail(ErrorCode::Format, "not a fer4d manifest");
  if (!j.contains("version")) fail(ErrorCode::Format, "manifest lacks a version field");
  if (j["version"] != 1) fail(ErrorCode::Format, "unsupported manifest version");
  RunManifest m;
  try {
    m.kind = j.at("kind").get<std::string>();
    m.config_json = j.at("config").dump(2) + "\n";
    if (j.contains("toggles")) m.toggles_json = j["toggles"].dump();
    for (const auto& s : j.at("stages")) {
      StageRecord r;
      r.name = s.at("name").get<std::string>();
      r.input_hash = s.at("input_sha256").get<std::string>();
      for (const auto& a : s.at("artifacts")) {
        r.artifacts.push_back({a.at("path").get<std::string>(), a.at("sha256").get<std::string>(),
                               a.at("bytes").get<std::uintmax_t>()});
      }
      m.stages.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, std::string("manifest: ") + e.what());
  }
  return m;
}

namespace {

class OutputWriter {
 public:
  explicit OutputWriter(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

  const fs::path& root() const { return root_; }

  ArtifactRecord text(const std::string& rel, const std::string& content) {
    const fs::path p = root_ / rel;
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    out << content;
    if (!out) fail(ErrorCode::Io, "cannot write " + p.string());
    out.close();
    return record(rel);
  }

  ArtifactRecord record(const std::string& rel) const {
    const fs::path p = root_ / rel;
    return {rel, sha256_file(p), fs::file_size(p)};
  }

 private:
  fs::path root_;
};

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

ojson report_json(const Dataset& ds, const PipelineConfig& cfg, bool cross_domain, AugmentationPreset preset,
                  const RunResult& r) {
  ojson j;
  j["examples"] = ds.sequences.size();
  j["views_deg"] = cfg.views;
  j["view_count"] = cfg.views.size();
  j["cross_domain"] = cross_domain;
  j["streams"] = stream_names(cross_domain);
  j["augmentation"] = std::string(to_string(preset));
  j["folds"] = r.folds.size();
  j["accuracy"] = r.report.accuracy;
  j["mean_fold_accuracy"] = r.mean_fold_accuracy;
  ojson fa = ojson::array();
  for (const auto& f : r.fold_results) fa.push_back(f.accuracy);
  j["fold_accuracies"] = std::move(fa);
  ojson recall;
  for (int l = 0; l < kNumClasses; ++l) recall[std::string(kExpressionNames[l])] = r.report.recall[l];
  j["recall"] = std::move(recall);
  ojson conf = ojson::array();
  for (const auto& row : r.report.confusion) conf.push_back(row);
  j["confusion"] = std::move(conf);
  return j;
}

std::string folds_csv(const RunResult& r) {
  std::ostringstream out;
  out << "fold,accuracy,test_examples,test_subjects\n";
  for (std::size_t f = 0; f < r.folds.size(); ++f) {
    out << f + 1 << ',' << fmt_double(r.fold_results[f].accuracy) << ',' << r.folds[f].test.size() << ',';
    for (std::size_t i = 0; i < r.folds[f].test_subjects.size(); ++i) out << (i ? ";" : "") << r.folds[f].test_subjects[i];
    out << '\n';
  }
  return out.str();
}

std::string predictions_csv(const Dataset& ds, const RunResult& r) {
  std::ostringstream out;
  out << "example,subject,fold,truth,predicted";
  for (auto name : kExpressionNames) out << ",p_" << name;
  out << '\n';
  for (std::size_t f = 0; f < r.fold_results.size(); ++f) {
    const auto& fr = r.fold_results[f];
    for (std::size_t i = 0; i < fr.test.size(); ++i) {
      const auto& s = ds.sequences[fr.test[i]];
      out << fr.test[i] << ',' << s.subject_id << ',' << f + 1 << ',' << kExpressionNames[s.expression_label - 1] << ','
          << kExpressionNames[fr.predicted[i] - 1];
      for (double p : fr.collaborated[i]) out << ',' << fmt_double(p);
      out << '\n';
    }
  }
  return out.str();
}

// Report, CSVs and checkpoints of one evaluated setting under `prefix`.
StageRecord write_evaluation(OutputWriter& w, const std::string& prefix, const Dataset& ds, const PipelineConfig& cfg,
                             bool cross_domain, AugmentationPreset preset, const RunResult& r,
                             std::vector<ArtifactRecord>& model_records) {
  StageRecord st;
  st.name = "evaluate";
  st.artifacts.push_back(w.text(prefix + "report.json", report_json(ds, cfg, cross_domain, preset, r).dump(2) + "\n"));
  st.artifacts.push_back(w.text(prefix + "confusion.csv", confusion_csv(r.report)));
  st.artifacts.push_back(w.text(prefix + "folds.csv", folds_csv(r)));
  st.artifacts.push_back(w.text(prefix + "predictions.csv", predictions_csv(ds, r)));
  if (cfg.exports.models) {
    const auto names = stream_names(cross_domain);
    for (std::size_t f = 0; f < r.fold_results.size(); ++f) {
      for (std::size_t s = 0; s < names.size(); ++s) {
        char rel[64];
        std::snprintf(rel, sizeof rel, "models/fold%02zu_%s.model", f + 1, names[s].c_str());
        save_model(r.fold_results[f].models[s], w.root() / (prefix + rel));
        model_records.push_back(w.record(prefix + rel));
      }
    }
  }
  return st;
}

StageRecord write_cdis(OutputWriter& w, const Dataset& ds, const RenderedDataset& rendered, const PipelineConfig& cfg,
                       bool cross_domain) {
  StageRecord st;
  st.name = "cdi";
  if (!cfg.exports.cdi_png && !cfg.exports.cdi_raw) return st;
  const auto names = stream_names(cross_domain);
  std::vector<std::string> rels;
  for (std::size_t n = 0; n < ds.sequences.size(); ++n) {
    const auto& seq = ds.sequences[n];
    for (double view : cfg.views) {
      const DomainStack stack = domain_streams(rendered[n].at(view), cross_domain, cfg.fusion_weights);
      for (std::size_t s = 0; s < stack.size(); ++s) {
        const DynamicImage di = compute_dynamic_image(stack[s]);
        const std::string suffix = cross_domain ? "cdi" : names[s] + "_di";
        const std::string png = "cdi/" + image_filename(seq.subject_id, seq.expression_label, view, -1, suffix);
        if (cfg.exports.cdi_png) {
          write_png(normalize_for_display(di), w.root() / png);
          rels.push_back(png);
        }
        if (cfg.exports.cdi_raw) {
          const std::string raw = png.substr(0, png.size() - 4) + ".bin";
          write_dynamic_image(di, w.root() / raw);
          rels.push_back(raw);
        }
      }
    }
  }
  for (const auto& r : rels) st.artifacts.push_back(w.record(r));
  return st;
}

class StageClock {
 public:
  void start(const std::string& name) {
    name_ = name;
    t0_ = std::chrono::steady_clock::now();
  }
  void stop() { times_.emplace_back(name_, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count()); }
  std::string json() const {
    ojson j;
    for (const auto& [n, s] : times_) j[n] = s;
    return j.dump(2) + "\n";
  }

 private:
  std::string name_;
  std::chrono::steady_clock::time_point t0_;
  std::vector<std::pair<std::string, double>> times_;
};

// Runs `body` and tags any library error with the stage name.
template <typename F>
auto stage(StageClock& clock, const std::string& name, F&& body) {
  clock.start(name);
  try {
    if constexpr (std::is_void_v<decltype(body())>) {
      body();
      clock.stop();
    } else {
      auto r = body();
      clock.stop();
      return r;
    }
  } catch (const Error& e) {
    throw e.with_context("stage " + name);
  }
}

std::string render_input_hash(const Dataset& ds, const PipelineConfig& cfg) {
  Sha256 h;
  h.update(dataset_hash(ds));
  for (double v : cfg.views) h.update_value(v);
  h.update_value(cfg.image_size);
  h.update_value(cfg.crop.forehead_fraction);
  h.update_value(cfg.crop.depth_margin_factor);
  h.update_value(cfg.clahe.tiles);
  h.update_value(cfg.clahe.clip_limit);
  h.update_value(cfg.clahe.bins);
  return h.hex();
}

}  // namespace

PipelineOutcome run_pipeline(const PipelineConfig& cfg, const Progress& progress) {
  cfg.validate();
  StageClock clock;
  OutputWriter w(cfg.output_dir);
  PipelineOutcome out;
  out.manifest.kind = "run";
  out.manifest.config_json = config_to_json(cfg, false);
  const std::string config_hash = sha256_hex(out.manifest.config_json);

  const Dataset ds = stage(clock, "ingest", [&] { return load_dataset(cfg); });
  const std::string data_hash = dataset_hash(ds);
  out.manifest.stages.push_back({"ingest", data_hash, {}});
  if (progress) progress("ingest: " + std::to_string(ds.size()) + " sequences");

  const auto folds = stage(clock, "split", [&] {
    auto f = kfold_split(ds, cfg.folds, cfg.seed);
    check_subject_independence(ds, f);
    return f;
  });

  const RenderedDataset rendered = stage(clock, "render", [&] { return render_dataset(ds, cfg, nullptr, progress); });
  out.manifest.stages.push_back({"render", render_input_hash(ds, cfg), {}});

  StageRecord cdi = stage(clock, "cdi", [&] { return write_cdis(w, ds, rendered, cfg, cfg.cross_domain); });
  cdi.input_hash = config_hash;
  out.manifest.stages.push_back(std::move(cdi));

  const FeatureSet features =
      stage(clock, "augment", [&] { return extract_features(rendered, cfg, cfg.cross_domain, cfg.augmentation, progress); });
  out.result = stage(clock, "train", [&] { return evaluate_features(ds, features, folds, cfg, cfg.cross_domain, progress); });

  std::vector<ArtifactRecord> models;
  StageRecord ev = stage(clock, "report", [&] {
    return write_evaluation(w, "", ds, cfg, cfg.cross_domain, cfg.preset, out.result, models);
  });
  out.manifest.stages.push_back({"train", config_hash, std::move(models)});
  ev.input_hash = config_hash;
  out.manifest.stages.push_back(std::move(ev));

  w.text("manifest.json", out.manifest.to_json());
  w.text("timings.json", clock.json());
  if (progress) {
    progress("accuracy " + fmt_double(out.result.report.accuracy) + ", mean fold accuracy " +
             fmt_double(out.result.mean_fold_accuracy));
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// Ablation

std::string AblationSetting::name() const {
  return std::string(cross_domain ? "cd" : "nocd") + "-" + std::string(to_string(preset));
}

std::vector<AblationSetting> AblationToggles::settings() const {
  std::vector<AblationSetting> out;
  for (bool cd : cross_domain) {
    for (auto p : presets) out.push_back({cd, p});
  }
  return out;
}

namespace {

std::string toggles_to_json(const AblationToggles& t) {
  ojson j;
  j["cross_domain"] = t.cross_domain;
  ojson presets = ojson::array();
  for (auto p : t.presets) presets.push_back(std::string(to_string(p)));
  j["presets"] = std::move(presets);
  return j.dump();
}

AblationToggles toggles_from_json(const std::string& text) {
  AblationToggles t;
  const auto j = nlohmann::json::parse(text);
  t.cross_domain = j.at("cross_domain").get<std::vector<bool>>();
  t.presets.clear();
  for (const auto& p : j.at("presets")) t.presets.push_back(parse_preset(p.get<std::string>()));
  return t;
}

}  // namespace

AblationOutcome run_ablation(const PipelineConfig& cfg, const AblationToggles& toggles, const Progress& progress) {
  cfg.validate();
  const auto settings = toggles.settings();
  if (settings.empty()) fail(ErrorCode::Config, "ablation needs at least one setting");
  for (const auto& s : settings) {
    if (s.preset == AugmentationPreset::Custom) fail(ErrorCode::Config, "ablation presets must be named levels");
  }
  StageClock clock;
  OutputWriter w(cfg.output_dir);
  AblationOutcome out;
  out.manifest.kind = "ablation";
  out.manifest.config_json = config_to_json(cfg, false);
  out.manifest.toggles_json = toggles_to_json(toggles);
  const std::string config_hash = sha256_hex(out.manifest.config_json + out.manifest.toggles_json);

  const Dataset ds = stage(clock, "ingest", [&] { return load_dataset(cfg); });
  out.manifest.stages.push_back({"ingest", dataset_hash(ds), {}});
  const auto folds = stage(clock, "split", [&] {
    auto f = kfold_split(ds, cfg.folds, cfg.seed);
    check_subject_independence(ds, f);
    return f;
  });
  const RenderedDataset rendered = stage(clock, "render", [&] { return render_dataset(ds, cfg, nullptr, progress); });
  out.manifest.stages.push_back({"render", render_input_hash(ds, cfg), {}});

  std::vector<ArtifactRecord> models;
  StageRecord ev;
  ev.name = "evaluate";
  ev.input_hash = config_hash;
  for (const auto& s : settings) {
    if (progress) progress("setting " + s.name());
    PipelineConfig scfg = cfg;
    scfg.cross_domain = s.cross_domain;
    scfg.preset = s.preset;
    scfg.augmentation = preset_plan(s.preset);
    // Keep any non-default temporal parameters of the base configuration.
    scfg.augmentation.magnification_alpha = cfg.augmentation.magnification_alpha;
    scfg.augmentation.passband = cfg.augmentation.passband;
    scfg.augmentation.fps = cfg.augmentation.fps;
    RunResult r = stage(clock, "setting " + s.name(), [&] {
      const FeatureSet features = extract_features(rendered, scfg, s.cross_domain, scfg.augmentation, progress);
      return evaluate_features(ds, features, folds, scfg, s.cross_domain, progress);
    });
    const StageRecord st = write_evaluation(w, s.name() + "/", ds, scfg, s.cross_domain, s.preset, r, models);
    ev.artifacts.insert(ev.artifacts.end(), st.artifacts.begin(), st.artifacts.end());
    out.entries.push_back({s, std::move(r)});
  }

  ojson summary;
  summary["baseline"] = out.entries.front().setting.name();
  ojson rows = ojson::array();
  std::ostringstream csv;
  csv << "setting,cross_domain,augmentation,accuracy,mean_fold_accuracy,delta_vs_baseline\n";
  const double base = out.entries.front().result.mean_fold_accuracy;
  for (const auto& e : out.entries) {
    const double delta = e.result.mean_fold_accuracy - base;
    ojson fa = ojson::array();
    for (const auto& f : e.result.fold_results) fa.push_back(f.accuracy);
    rows.push_back({{"setting", e.setting.name()},
                    {"cross_domain", e.setting.cross_domain},
                    {"augmentation", std::string(to_string(e.setting.preset))},
                    {"accuracy", e.result.report.accuracy},
                    {"mean_fold_accuracy", e.result.mean_fold_accuracy},
                    {"fold_accuracies", std::move(fa)},
                    {"delta_vs_baseline", delta}});
    csv << e.setting.name() << ',' << (e.setting.cross_domain ? "on" : "off") << ',' << to_string(e.setting.preset) << ','
        << fmt_double(e.result.report.accuracy) << ',' << fmt_double(e.result.mean_fold_accuracy) << ','
        << fmt_double(delta) << '\n';
  }
  summary["settings"] = std::move(rows);
  ev.artifacts.push_back(w.text("ablation.json", summary.dump(2) + "\n"));
  ev.artifacts.push_back(w.text("ablation.csv", csv.str()));

  out.manifest.stages.push_back({"train", config_hash, std::move(models)});
  out.manifest.stages.push_back(std::move(ev));
  w.text("manifest.json", out.manifest.to_json());
  w.text("timings.json", clock.json());
  return out;
}

// ---------------------------------------------------------------------------------------------
// Replay

ReplayCheck replay_manifest(const fs::path& manifest_path, const fs::path& output_dir, bool use_cache,
                            const Progress& progress) {
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open manifest " + manifest_path.string());
  std::ostringstream text;
  text << in.rdbuf();
  const RunManifest recorded = RunManifest::from_json(text.str());

  PipelineConfig cfg = config_from_json(recorded.config_json);
  cfg.output_dir = output_dir;
  cfg.use_cache = use_cache;
  RunManifest fresh;
  if (recorded.kind == "run") {
    fresh = run_pipeline(cfg, progress).manifest;
  } else if (recorded.kind == "ablation") {
    fresh = run_ablation(cfg, toggles_from_json(recorded.toggles_json), progress).manifest;
  } else {
    fail(ErrorCode::Format, "unknown manifest kind '" + recorded.kind + "'");
  }

  std::map<std::string, std::string> produced;
  for (const auto& s : fresh.stages) {
    for (const auto& a : s.artifacts) produced[a.path] = a.sha256;
  }
  ReplayCheck check;
  for (const auto& s : recorded.stages) {
    for (const auto& a : s.artifacts) {
      auto it = produced.find(a.path);
      if (it == produced.end()) {
        check.missing.push_back(a.path);
      } else if (it->second != a.sha256) {
        check.mismatched.push_back(a.path);
      }
    }
  }
  if (fresh.to_json() != recorded.to_json()) check.mismatched.push_back("manifest.json");
  return check;
}

}  // namespace fer4d
