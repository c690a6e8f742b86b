#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "fer4d/dynamic_image.hpp"
#include "fer4d/error.hpp"
#include "oracles.hpp"
#include "properties.hpp"

using namespace fer4d;

TEST_CASE("rank pooling coefficients: hand values") {
  CHECK(rank_pool_coefficients(1).alphas == std::vector<double>{0.0});
  const auto two = rank_pool_coefficients(2).alphas;
  CHECK(two == std::vector<double>{-0.5, 0.5});
  const auto three = rank_pool_coefficients(3).alphas;
  CHECK(three[0] == doctest::Approx(-4.0 / 3.0).epsilon(1e-15));
  CHECK(three[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(three[2] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("rank pooling coefficients: exact fractions for small T") {
  const auto three = oracle::rank_pool_alphas(3);
  CHECK(three[0] == oracle::Fraction(-4, 3));
  CHECK(three[1] == oracle::Fraction(2, 3));
  CHECK(three[2] == oracle::Fraction(2, 3));
  const auto r = props::rank_pool_coefficients(1000);
  INFO(r.detail);
  CHECK(r.ok);
}

TEST_CASE("rank pooling coefficients: zero sum up to T = 10^4, T = 0 rejected") {
  for (std::size_t t : {1500u, 4096u, 9999u, 10000u}) {
    // Summed in extended precision so the check sees the stored doubles, not summation noise.
    long double s = 0.0L;
    for (double a : rank_pool_coefficients(t).alphas) s += a;
    CHECK(std::abs(static_cast<double>(s)) <= 1e-9);
  }
  try {
    rank_pool_coefficients(0);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Domain);
  }
}

TEST_CASE("dynamic image: T = 2 is half the frame difference") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  DomainImage a(Domain::CrossDomain, 5), b(Domain::CrossDomain, 5);
  for (auto& p : a.pixels) p = unit(rng);
  for (auto& p : b.pixels) p = unit(rng);
  const auto di = compute_dynamic_image(ImageSequence{{a, b}});
  CHECK(di.source_length == 2);
  CHECK(di.size == 5);
  for (std::size_t i = 0; i < a.pixels.size(); ++i) CHECK(di.pixels[i] == 0.5 * (b.pixels[i] - a.pixels[i]));
}

TEST_CASE("dynamic image: shape checks") {
  const ImageSequence mixed{{DomainImage(Domain::CrossDomain, 3), DomainImage(Domain::CrossDomain, 4)}};
  try {
    compute_dynamic_image(mixed);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Shape);
  }
  CHECK_THROWS_AS(compute_dynamic_image(ImageSequence{}), Error);
}

TEST_CASE("dynamic image laws: constants, linearity, sign agreement") {
  const auto r = props::dynamic_image_laws(21);
  INFO(r.detail);
  CHECK(r.ok);
}

TEST_CASE("exact rank pooling: a ramp pools to a positive multiple of its pattern") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> unit(0.1, 1.0);
  DomainImage pattern(Domain::CrossDomain, 3);
  for (auto& p : pattern.pixels) p = unit(rng);
  ImageSequence seq;
  for (int t = 1; t <= 6; ++t) {
    DomainImage f = pattern;
    for (auto& p : f.pixels) p *= t / 6.0;
    seq.frames.push_back(f);
  }
  const auto u = rank_pool_exact(seq, 1e-4);
  const double ratio = u.pixels[0] / pattern.pixels[0];
  CHECK(ratio > 0.0);
  for (std::size_t i = 0; i < u.pixels.size(); ++i) {
    CHECK(u.pixels[i] == doctest::Approx(ratio * pattern.pixels[i]).epsilon(1e-9));
  }
  // The closed form agrees in direction.
  const auto di = compute_dynamic_image(seq);
  for (std::size_t i = 0; i < di.pixels.size(); ++i) CHECK(di.pixels[i] > 0.0);
}

TEST_CASE("exact rank pooling: constants, singular systems, short input") {
  const ImageSequence constant{std::vector<DomainImage>(4, DomainImage(Domain::CrossDomain, 2, 0.3))};
  for (double p : rank_pool_exact(constant, 0.5).pixels) CHECK(p == 0.0);
  try {
    rank_pool_exact(constant, 0.0);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::RankDeficiency);
  }
  try {
    rank_pool_exact(ImageSequence{{DomainImage(Domain::CrossDomain, 2)}}, 1.0);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TooShort);
  }
}

TEST_CASE("exact rank pooling: primal and dual branches agree with the scalar oracle") {
  // One pixel (primal system) and many identical pixels (dual system) give the same slope.
  const std::vector<double> values{0.1, 0.5, 0.2, 0.9, 0.7};
  ImageSequence one, wide;
  for (double v : values) {
    one.frames.push_back(DomainImage(Domain::CrossDomain, 1, v));
    wide.frames.push_back(DomainImage(Domain::CrossDomain, 3, v));
  }
  const double want = oracle::single_pixel_ranking_slope(values, 0.2);
  CHECK(rank_pool_exact(one, 0.2).pixels[0] == doctest::Approx(want).epsilon(1e-10));
  // Nine copies of the pixel share the weight: u_i = sum(v c) / (9 sum v^2 + lambda).
  const auto u = rank_pool_exact(wide, 0.2);
  double num = 0.0, den = 0.0;
  {
    std::vector<double> smooth;
    double run = 0.0;
    for (std::size_t t = 0; t < values.size(); ++t) smooth.push_back((run += values[t]) / double(t + 1));
    double mean = 0.0;
    for (double s : smooth) mean += s / smooth.size();
    for (std::size_t t = 0; t < smooth.size(); ++t) {
      num += (smooth[t] - mean) * (t + 1.0 - 3.0);
      den += (smooth[t] - mean) * (smooth[t] - mean);
    }
  }
  for (double p : u.pixels) CHECK(p == doctest::Approx(num / (9.0 * den + 0.2)).epsilon(1e-10));
}

TEST_CASE("display normalization") {
  DynamicImage zero{Domain::CrossDomain, 2, 3, std::vector<double>(4, 0.0)};
  for (double p : normalize_for_display(zero).pixels) CHECK(p == 0.5);
  DynamicImage three{Domain::CrossDomain, 1, 3, {-1.0}};
  three.size = 2;
  three.pixels = {-1.0, 0.0, 1.0, 0.0};
  CHECK(normalize_for_display(three).pixels == std::vector<double>{0.0, 0.5, 1.0, 0.5});
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 5.0);
  DynamicImage r{Domain::CrossDomain, 6, 9, std::vector<double>(36)};
  for (auto& p : r.pixels) p = n(rng);
  const auto img = normalize_for_display(r);
  CHECK(*std::min_element(img.pixels.begin(), img.pixels.end()) == 0.0);
  CHECK(*std::max_element(img.pixels.begin(), img.pixels.end()) == 1.0);
}

TEST_CASE("dynamic image binary file: header and float32 body") {
  oracle::TempDir dir("di");
  DynamicImage di{Domain::CrossDomain, 2, 7, {-1.5, 0.25, 3.0, 1e-3}};
  write_dynamic_image(di, dir.path() / "a.bin");
  const auto bytes = oracle::read_file(dir.path() / "a.bin");
  REQUIRE(bytes.size() == 8 + 4 * 4);
  std::uint32_t k, t;
  std::memcpy(&k, bytes.data(), 4);
  std::memcpy(&t, bytes.data() + 4, 4);
  CHECK(k == 2);
  CHECK(t == 7);
  float first;
  std::memcpy(&first, bytes.data() + 8, 4);
  CHECK(first == -1.5f);
  const auto back = read_dynamic_image(dir.path() / "a.bin");
  CHECK(back.size == 2);
  CHECK(back.source_length == 7);
  for (std::size_t i = 0; i < 4; ++i) CHECK(back.pixels[i] == static_cast<float>(di.pixels[i]));
}
