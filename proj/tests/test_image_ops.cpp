#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "fer4d/error.hpp"
#include "fer4d/image_io.hpp"
#include "fer4d/image_ops.hpp"
#include "oracles.hpp"

using namespace fer4d;

namespace {

DomainImage random_image(std::mt19937_64& rng, Domain d, int k) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  DomainImage img(d, k);
  for (auto& p : img.pixels) p = unit(rng);
  return img;
}

}  // namespace

TEST_CASE("CLAHE: constant images are fixed points") {
  for (double v : {0.0, 0.2, 0.5, 0.93, 1.0}) {
    for (int k : {8, 13, 64}) {
      const DomainImage img(Domain::Depth, k, v);
      const auto out = clahe_enhance(img);
      CHECK(out.domain == Domain::EnhancedDepth);
      for (double p : out.pixels) CHECK(std::abs(p - v) <= 1.0 / 255.0);
    }
  }
}

TEST_CASE("CLAHE: two gray levels equalize to their CDF values") {
  DomainImage img(Domain::Depth, 8, 0.25);
  for (int i = 0; i < 16; ++i) img.pixels[i] = 0.75;
  ClaheParams p;
  p.tiles = 1;
  p.clip_limit = INFINITY;
  const auto out = clahe_enhance(img, p);
  for (int i = 0; i < 64; ++i) CHECK(out.pixels[i] == doctest::Approx(i < 16 ? 1.0 : 0.75));
}

TEST_CASE("CLAHE: output stays in [0, 1] for random inputs and odd sizes") {
  std::mt19937_64 rng(5);
  for (int k : {7, 16, 30, 33}) {
    const auto out = clahe_enhance(random_image(rng, Domain::Depth, k));
    CHECK(out.size == k);
    CHECK_NOTHROW(out.validate());
  }
}

TEST_CASE("CLAHE: clip limit bounds the contrast gain") {
  std::mt19937_64 rng(9);
  DomainImage img(Domain::Depth, 32);
  std::normal_distribution<double> n(0.5, 0.02);
  for (auto& p : img.pixels) p = std::clamp(n(rng), 0.0, 1.0);
  ClaheParams tight;
  tight.clip_limit = 1.0;
  ClaheParams loose;
  loose.clip_limit = INFINITY;
  auto spread = [](const DomainImage& d) {
    const auto [lo, hi] = std::minmax_element(d.pixels.begin(), d.pixels.end());
    return *hi - *lo;
  };
  CHECK(spread(clahe_enhance(img, tight)) < spread(clahe_enhance(img, loose)));
}

TEST_CASE("CLAHE: rejects non-depth input and bad parameters") {
  CHECK_THROWS_AS(clahe_enhance(DomainImage(Domain::Texture, 8)), Error);
  ClaheParams p;
  p.tiles = 0;
  CHECK_THROWS_AS(clahe_enhance(DomainImage(Domain::Depth, 8), p), Error);
  p = {};
  p.clip_limit = 0.0;
  CHECK_THROWS_AS(clahe_enhance(DomainImage(Domain::Depth, 8), p), Error);
}

TEST_CASE("fusion: identical inputs, hand triple, permutation") {
  std::mt19937_64 rng(1);
  const auto a = random_image(rng, Domain::Texture, 6);
  const std::vector<DomainImage> same{a, a, a};
  const auto fused = cross_domain_fuse(same);
  CHECK(fused.domain == Domain::CrossDomain);
  for (std::size_t i = 0; i < a.pixels.size(); ++i) CHECK(fused.pixels[i] == doctest::Approx(a.pixels[i]));

  const std::vector<DomainImage> triple{DomainImage(Domain::Texture, 1, 0.2), DomainImage(Domain::Depth, 1, 0.4),
                                        DomainImage(Domain::EnhancedDepth, 1, 0.6)};
  CHECK(cross_domain_fuse(triple).pixels[0] == doctest::Approx(0.4));

  const auto b = random_image(rng, Domain::Depth, 6), c = random_image(rng, Domain::EnhancedDepth, 6);
  const std::vector<DomainImage> abc{a, b, c}, cab{c, a, b};
  const auto x = cross_domain_fuse(abc), y = cross_domain_fuse(cab);
  for (std::size_t i = 0; i < x.pixels.size(); ++i) CHECK(x.pixels[i] == doctest::Approx(y.pixels[i]).epsilon(1e-15));
}

TEST_CASE("fusion: convexity and linearity") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<DomainImage> xs, ys, mix;
    const double a = unit(rng), b = 1.0 - a;
    for (int d = 0; d < 3; ++d) {
      xs.push_back(random_image(rng, Domain::Texture, 5));
      ys.push_back(random_image(rng, Domain::Texture, 5));
      DomainImage m(Domain::Texture, 5);
      for (std::size_t i = 0; i < m.pixels.size(); ++i) m.pixels[i] = a * xs[d].pixels[i] + b * ys[d].pixels[i];
      mix.push_back(m);
    }
    const auto fx = cross_domain_fuse(xs), fy = cross_domain_fuse(ys), fm = cross_domain_fuse(mix);
    for (std::size_t i = 0; i < fx.pixels.size(); ++i) {
      const double lo = std::min({xs[0].pixels[i], xs[1].pixels[i], xs[2].pixels[i]});
      const double hi = std::max({xs[0].pixels[i], xs[1].pixels[i], xs[2].pixels[i]});
      CHECK((fx.pixels[i] >= lo && fx.pixels[i] <= hi));
      CHECK(fm.pixels[i] == doctest::Approx(a * fx.pixels[i] + b * fy.pixels[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("fusion: weights, size mismatch and bad weights") {
  const std::vector<DomainImage> two{DomainImage(Domain::Texture, 2, 0.0), DomainImage(Domain::Depth, 2, 1.0)};
  const std::vector<double> w{3.0, 1.0};
  CHECK(cross_domain_fuse(two, w).pixels[0] == doctest::Approx(0.25));
  const std::vector<DomainImage> mismatched{DomainImage(Domain::Texture, 2), DomainImage(Domain::Depth, 3)};
  try {
    cross_domain_fuse(mismatched);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Shape);
  }
  const std::vector<double> zeros{0.0, 0.0};
  CHECK_THROWS_AS(cross_domain_fuse(two, zeros), Error);
  const std::vector<DomainImage> one{DomainImage(Domain::Texture, 2)};
  CHECK_THROWS_AS(cross_domain_fuse(one), Error);
}

TEST_CASE("fuse_sequence: frame-wise, length preserving, length checked") {
  std::mt19937_64 rng(4);
  ImageSequence t, d, e;
  for (int i = 0; i < 3; ++i) {
    t.frames.push_back(random_image(rng, Domain::Texture, 4));
    d.frames.push_back(random_image(rng, Domain::Depth, 4));
    e.frames.push_back(random_image(rng, Domain::EnhancedDepth, 4));
  }
  const auto cd = fuse_sequence(t, d, e);
  REQUIRE(cd.length() == 3);
  // Frame 2 recomputed by hand.
  for (std::size_t i = 0; i < 16; ++i) {
    const double want = (t.frames[2].pixels[i] + d.frames[2].pixels[i] + e.frames[2].pixels[i]) / 3.0;
    CHECK(cd.frames[2].pixels[i] == doctest::Approx(want).epsilon(1e-15));
  }
  ImageSequence t1{{t.frames[0]}}, d1{{d.frames[0]}}, e1{{e.frames[0]}};
  CHECK(fuse_sequence(t1, d1, e1).length() == 1);
  ImageSequence d4 = d;
  d4.frames.push_back(d.frames[0]);
  try {
    fuse_sequence(t, d4, e);
    FAIL("expected an error");
  } catch (const Error& err) {
    CHECK(err.code() == ErrorCode::Shape);
  }
}

TEST_CASE("PNG export: 8-bit round trip and filenames") {
  oracle::TempDir dir("png");
  std::mt19937_64 rng(8);
  const auto img = random_image(rng, Domain::Depth, 11);
  write_png(img, dir.path() / "x.png");
  const auto back = read_png(dir.path() / "x.png", Domain::Depth);
  REQUIRE(back.size == 11);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    CHECK(back.pixels[i] == std::round(img.pixels[i] * 255.0) / 255.0);
  }
  const auto bytes = encode_png(img);
  CHECK(std::string(bytes.begin(), bytes.end()) == oracle::read_file(dir.path() / "x.png"));
  CHECK(image_filename("S01", 4, -15.0, 7, "depth") == "S01_happiness_v-015_t0007_depth.png");
  CHECK(image_filename("S02", 6, 0.0, -1, "cdi") == "S02_surprise_v+000_cdi.png");
}
