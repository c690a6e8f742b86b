#include "fer4d/dynamic_image.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "binary_io.hpp"
#include "fer4d/error.hpp"

namespace fer4d {

RankPoolCoefficients rank_pool_coefficients(std::size_t length) {
  if (length == 0) fail(ErrorCode::Domain, "rank pooling needs at least one frame");
  const auto big_t = static_cast<long double>(length);

  // tail[t] = H_T - H_{t-1} = sum_{i=t..T} 1/i, accumulated from the small end.
  std::vector<long double> tail(length + 2, 0.0L);
  for (std::size_t i = length; i >= 1; --i) tail[i] = tail[i + 1] + 1.0L / static_cast<long double>(i);

  std::vector<long double> exact(length);
  long double sum = 0.0L;
  for (std::size_t t = 1; t <= length; ++t) {
    exact[t - 1] = 2.0L * (big_t - static_cast<long double>(t) + 1.0L) - (big_t + 1.0L) * tail[t];
    sum += exact[t - 1];
  }
  // The analytic sum is zero; spread the rounding residue so the doubles honour it too.
  const long double residue = sum / big_t;

  RankPoolCoefficients out;
  out.alphas.reserve(length);
  for (auto a : exact) out.alphas.push_back(static_cast<double>(a - residue));
  return out;
}

DynamicImage compute_dynamic_image(std::span<const DomainImage> frames) {
  if (frames.empty()) fail(ErrorCode::Domain, "cannot pool an empty sequence");
  const int k = frames.front().size;
  for (const auto& f : frames) {
    if (f.size != k || f.pixels.size() != frames.front().pixels.size()) {
      fail(ErrorCode::Shape, "dynamic image frames differ in size");
    }
  }
  const auto coeffs = rank_pool_coefficients(frames.size());

  DynamicImage di;
  di.domain = frames.front().domain;
  di.size = k;
  di.source_length = frames.size();
  di.pixels.assign(frames.front().pixels.size(), 0.0);
  // Pooling differences from frame 1 is the same functional (the weights sum to zero) and makes
  // constant sequences pool to exactly zero in floating point.
  const auto& first = frames.front().pixels;
  for (std::size_t t = 1; t < frames.size(); ++t) {
    const double a = coeffs.alphas[t];
    const auto& src = frames[t].pixels;
    for (std::size_t p = 0; p < di.pixels.size(); ++p) di.pixels[p] += a * (src[p] - first[p]);
  }
  return di;
}

DynamicImage compute_dynamic_image(const ImageSequence& seq) { return compute_dynamic_image(seq.frames); }

DynamicImage rank_pool_exact(const ImageSequence& seq, double regularizer) {
  if (seq.length() < 2) fail(ErrorCode::TooShort, "exact rank pooling needs T >= 2");
  if (!(regularizer >= 0.0) || !std::isfinite(regularizer)) {
    fail(ErrorCode::Domain, "regularizer must be finite and >= 0");
  }
  seq.validate();

  const auto t_len = static_cast<Eigen::Index>(seq.length());
  const auto dim = static_cast<Eigen::Index>(seq.frames.front().pixels.size());

  // Running-mean smoothing, then centring over time.
  Eigen::MatrixXd v(t_len, dim);
  Eigen::RowVectorXd running = Eigen::RowVectorXd::Zero(dim);
  for (Eigen::Index t = 0; t < t_len; ++t) {
    running += Eigen::Map<const Eigen::RowVectorXd>(seq.frames[t].pixels.data(), dim);
    v.row(t) = running / static_cast<double>(t + 1);
  }
  v.rowwise() -= v.colwise().mean();

  Eigen::VectorXd ranks(t_len);
  for (Eigen::Index t = 0; t < t_len; ++t) ranks[t] = static_cast<double>(t + 1) - 0.5 * (t_len + 1);

  auto solve = [&](const Eigen::MatrixXd& gram, const Eigen::VectorXd& rhs) -> Eigen::VectorXd {
    Eigen::MatrixXd system = gram;
    system.diagonal().array() += regularizer;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(system);
    const auto& ev = eig.eigenvalues();
    const double scale = std::max(1.0, std::abs(ev.maxCoeff()));
    if (ev.minCoeff() <= 1e-12 * scale) fail(ErrorCode::RankDeficiency, "ranking regression normal system is singular");
    return eig.eigenvectors() * ((eig.eigenvectors().transpose() * rhs).array() / ev.array()).matrix();
  };

  Eigen::VectorXd u;
  if (dim <= t_len) {
    u = solve(v.transpose() * v, v.transpose() * ranks);
  } else {
    u = v.transpose() * solve(v * v.transpose(), ranks);
  }

  DynamicImage di;
  di.domain = seq.domain();
  di.size = seq.size();
  di.source_length = seq.length();
  di.pixels.assign(u.data(), u.data() + u.size());
  return di;
}

DomainImage normalize_for_display(const DynamicImage& di) {
  DomainImage out(Domain::CrossDomain, di.size, 0.5);
  if (di.pixels.empty()) return out;
  const auto [lo, hi] = std::minmax_element(di.pixels.begin(), di.pixels.end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) return out;
  for (std::size_t p = 0; p < di.pixels.size(); ++p) {
    out.pixels[p] = std::clamp((di.pixels[p] - *lo) / range, 0.0, 1.0);
  }
  return out;
}

void write_dynamic_image(const DynamicImage& di, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(di.size));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(di.source_length));
  for (double p : di.pixels) detail::put_le<float>(out, static_cast<float>(p));
  if (!out) fail(ErrorCode::Io, "failed writing " + path.string());
}

DynamicImage read_dynamic_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  DynamicImage di;
  di.size = static_cast<int>(detail::get_le<std::uint32_t>(in));
  di.source_length = detail::get_le<std::uint32_t>(in);
  if (di.size < 1) fail(ErrorCode::Parse, path.string() + ": image size must be >= 1");
  di.pixels.resize(static_cast<std::size_t>(di.size) * di.size);
  for (auto& p : di.pixels) p = detail::get_le<float>(in);
  if (in.peek() != std::char_traits<char>::eof()) fail(ErrorCode::Parse, path.string() + ": trailing bytes");
  return di;
}

}  // namespace fer4d
