#include "fer4d/image_ops.hpp"

#include <algorithm>
#include <cmath>

#include "fer4d/error.hpp"

namespace fer4d {

namespace {

// Per-tile lookup: either identity (flat tile) or a CDF table indexed by bin.
struct TileMap {
  bool identity = false;
  std::vector<double> cdf;
};

int reflect(int i, int k) {
  if (i < k) return i;
  return std::max(0, 2 * k - 1 - i);
}

}  // namespace

DomainImage clahe_enhance(const DomainImage& img, const ClaheParams& params) {
  if (img.domain != Domain::Depth) fail(ErrorCode::Domain, "CLAHE expects a depth image");
  if (params.tiles < 1) fail(ErrorCode::Config, "CLAHE tiles must be >= 1");
  if (!(params.clip_limit > 0.0)) fail(ErrorCode::Config, "CLAHE clip limit must be > 0");
  if (params.bins < 2) fail(ErrorCode::Config, "CLAHE needs at least 2 bins");

  const int k = img.size;
  const int tiles = params.tiles;
  const int ts = (k + tiles - 1) / tiles;
  const int bins = params.bins;
  const double n = static_cast<double>(ts) * ts;

  auto bin_of = [&](double v) {
    return static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * (bins - 1)));
  };

  std::vector<TileMap> maps(static_cast<std::size_t>(tiles) * tiles);
  std::vector<double> hist(bins);
  for (int ty = 0; ty < tiles; ++ty) {
    for (int tx = 0; tx < tiles; ++tx) {
      std::fill(hist.begin(), hist.end(), 0.0);
      for (int r = ty * ts; r < (ty + 1) * ts; ++r) {
        for (int c = tx * ts; c < (tx + 1) * ts; ++c) {
          hist[bin_of(img.at(reflect(r, k), reflect(c, k)))] += 1.0;
        }
      }
      auto& map = maps[static_cast<std::size_t>(ty) * tiles + tx];
      if (std::count_if(hist.begin(), hist.end(), [](double h) { return h > 0.0; }) <= 1) {
        map.identity = true;
        continue;
      }
      if (std::isfinite(params.clip_limit)) {
        const double limit = params.clip_limit * n / bins;
        double excess = 0.0;
        for (double& h : hist) {
          if (h > limit) {
            excess += h - limit;
            h = limit;
          }
        }
        const double share = excess / bins;
        for (double& h : hist) h += share;
      }
      map.cdf.resize(bins);
      double acc = 0.0;
      for (int b = 0; b < bins; ++b) {
        acc += hist[b];
        map.cdf[b] = std::min(1.0, acc / n);
      }
    }
  }

  // Tile-centre interpolation coordinates, clamped to the outermost centres.
  auto locate = [&](int p, int& i0, int& i1, double& w) {
    const double f = (p + 0.5) / ts - 0.5;
    i0 = static_cast<int>(std::floor(f));
    w = f - i0;
    if (i0 < 0) {
      i0 = 0;
      w = 0.0;
    }
    if (i0 >= tiles - 1) {
      i0 = tiles - 1;
      w = 0.0;
    }
    i1 = std::min(i0 + 1, tiles - 1);
  };

  DomainImage out(Domain::EnhancedDepth, k);
  for (int r = 0; r < k; ++r) {
    int y0, y1;
    double wy;
    locate(r, y0, y1, wy);
    for (int c = 0; c < k; ++c) {
      int x0, x1;
      double wx;
      locate(c, x0, x1, wx);
      const double v = img.at(r, c);
      const int b = bin_of(v);
      auto mapped = [&](int ty, int tx) {
        const auto& m = maps[static_cast<std::size_t>(ty) * tiles + tx];
        return m.identity ? v : m.cdf[b];
      };
      const double top = (1.0 - wx) * mapped(y0, x0) + wx * mapped(y0, x1);
      const double bottom = (1.0 - wx) * mapped(y1, x0) + wx * mapped(y1, x1);
      out.at(r, c) = std::clamp((1.0 - wy) * top + wy * bottom, 0.0, 1.0);
    }
  }
  return out;
}

ImageSequence clahe_sequence(const ImageSequence& seq, const ClaheParams& params) {
  ImageSequence out;
  out.frames.reserve(seq.frames.size());
  for (const auto& f : seq.frames) out.frames.push_back(clahe_enhance(f, params));
  return out;
}

namespace {

DomainImage fuse_images(std::span<const DomainImage* const> images, std::span<const double> weights) {
  if (images.size() < 2) fail(ErrorCode::Shape, "cross-domain fusion needs at least two images");
  const int k = images.front()->size;
  for (const auto* img : images) {
    if (img->size != k || img->pixels.size() != images.front()->pixels.size()) {
      fail(ErrorCode::Shape, "cross-domain fusion inputs differ in size");
    }
  }
  std::vector<double> w(images.size(), 1.0);
  if (!weights.empty()) {
    if (weights.size() != images.size()) fail(ErrorCode::Config, "one fusion weight per image required");
    w.assign(weights.begin(), weights.end());
  }
  double total = 0.0;
  for (double x : w) {
    if (!(x >= 0.0) || !std::isfinite(x)) fail(ErrorCode::Config, "fusion weights must be finite and >= 0");
    total += x;
  }
  if (!(total > 0.0)) fail(ErrorCode::Config, "fusion weights must not all be zero");

  DomainImage out(Domain::CrossDomain, k);
  for (std::size_t p = 0; p < out.pixels.size(); ++p) {
    double acc = 0.0;
    for (std::size_t i = 0; i < images.size(); ++i) acc += w[i] * images[i]->pixels[p];
    out.pixels[p] = std::clamp(acc / total, 0.0, 1.0);
  }
  return out;
}

}  // namespace

DomainImage cross_domain_fuse(std::span<const DomainImage> images, std::span<const double> weights) {
  std::vector<const DomainImage*> ptrs;
  for (const auto& img : images) ptrs.push_back(&img);
  return fuse_images(ptrs, weights);
}

ImageSequence fuse_sequence(const ImageSequence& texture, const ImageSequence& depth,
                            const ImageSequence& edepth, std::span<const double> weights) {
  if (texture.length() != depth.length() || texture.length() != edepth.length()) {
    fail(ErrorCode::Shape, "fusion inputs have lengths " + std::to_string(texture.length()) + ", " +
                               std::to_string(depth.length()) + ", " + std::to_string(edepth.length()));
  }
  ImageSequence out;
  out.frames.reserve(texture.length());
  for (std::size_t t = 0; t < texture.length(); ++t) {
    const DomainImage* triple[] = {&texture.frames[t], &depth.frames[t], &edepth.frames[t]};
    out.frames.push_back(fuse_images(triple, weights));
  }
  return out;
}

}  // namespace fer4d
