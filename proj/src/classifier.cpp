#include "fer4d/classifier.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "binary_io.hpp"
#include "fer4d/error.hpp"

namespace fer4d {

void FeatureMatrix::append(std::span<const double> x) {
  if (dim == 0) dim = x.size();
  if (x.size() != dim) fail(ErrorCode::Shape, "feature dimension mismatch");
  data.insert(data.end(), x.begin(), x.end());
}

namespace {

// weights[j][i]: share of input pixel i falling into output cell j.
std::vector<double> overlap_matrix(int k, int side) {
  std::vector<double> w(static_cast<std::size_t>(side) * k, 0.0);
  const double cell = static_cast<double>(k) / side;
  for (int j = 0; j < side; ++j) {
    const double lo = j * cell, hi = (j + 1) * cell;
    for (int i = static_cast<int>(std::floor(lo)); i < k && i < hi; ++i) {
      const double ov = std::min(hi, i + 1.0) - std::max(lo, static_cast<double>(i));
      if (ov > 0.0) w[static_cast<std::size_t>(j) * k + i] = ov / cell;
    }
  }
  return w;
}

void check_labels(std::span<const int> labels, std::size_t rows) {
  if (labels.size() != rows) fail(ErrorCode::Shape, "label count does not match feature rows");
  for (int y : labels) {
    if (y < 1 || y > kNumClasses) fail(ErrorCode::Domain, "label " + std::to_string(y) + " outside 1..6");
  }
}

}  // namespace

std::vector<double> area_downsample(const DomainImage& img, int side) {
  if (side < 1) fail(ErrorCode::Config, "downsample side must be >= 1");
  const int k = img.size;
  const auto w = overlap_matrix(k, side);
  // Rows first, then columns.
  std::vector<double> tmp(static_cast<std::size_t>(side) * k, 0.0);
  for (int j = 0; j < side; ++j) {
    for (int i = 0; i < k; ++i) {
      const double wij = w[static_cast<std::size_t>(j) * k + i];
      if (wij == 0.0) continue;
      for (int c = 0; c < k; ++c) tmp[static_cast<std::size_t>(j) * k + c] += wij * img.at(i, c);
    }
  }
  std::vector<double> out(static_cast<std::size_t>(side) * side, 0.0);
  for (int r = 0; r < side; ++r) {
    for (int j = 0; j < side; ++j) {
      double acc = 0.0;
      for (int c = 0; c < k; ++c) acc += w[static_cast<std::size_t>(j) * k + c] * tmp[static_cast<std::size_t>(r) * k + c];
      out[static_cast<std::size_t>(r) * side + j] = acc;
    }
  }
  return out;
}

std::vector<double> featurize(const DynamicImage& di, int side) {
  return area_downsample(normalize_for_display(di), side);
}

std::string_view to_string(FeatureMap m) {
  switch (m) {
    case FeatureMap::Identity: return "identity";
    case FeatureMap::Magnitude: return "magnitude";
    case FeatureMap::SignedMagnitude: return "signed_magnitude";
  }
  return "?";
}

FeatureMap parse_feature_map(std::string_view name) {
  for (auto m : {FeatureMap::Identity, FeatureMap::Magnitude, FeatureMap::SignedMagnitude}) {
    if (name == to_string(m)) return m;
  }
  fail(ErrorCode::Config,
       "unknown feature map '" + std::string(name) + "' (expected identity, magnitude or signed_magnitude)");
}

std::size_t expanded_dim(std::size_t dim, FeatureMap map) { return map == FeatureMap::SignedMagnitude ? 2 * dim : dim; }

std::vector<double> expand_features(std::span<const double> x, FeatureMap map) {
  if (map == FeatureMap::Identity) return {x.begin(), x.end()};
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(std::max<std::size_t>(x.size(), 1));
  std::vector<double> out;
  out.reserve(expanded_dim(x.size(), map));
  if (map == FeatureMap::SignedMagnitude) out.assign(x.begin(), x.end());
  for (double v : x) out.push_back(2.0 * std::abs(v - mean));
  return out;
}

std::size_t ClassifierModel::input_dim() const {
  return hyper.feature_map == FeatureMap::SignedMagnitude ? dim / 2 : dim;
}

ClassifierModel ClassifierModel::zeros(std::size_t dim) {
  ClassifierModel m;
  m.dim = dim;
  m.weights.assign(kNumClasses * dim, 0.0);
  return m;
}

std::array<double, kNumClasses> ClassifierModel::logits(std::span<const double> x) const {
  if (x.size() != dim) {
    fail(ErrorCode::Shape, "feature has dimension " + std::to_string(x.size()) + ", model expects " +
                               std::to_string(dim));
  }
  std::array<double, kNumClasses> z{};
  for (int l = 0; l < kNumClasses; ++l) {
    const double* w = weights.data() + static_cast<std::size_t>(l) * dim;
    double acc = biases[l];
    for (std::size_t i = 0; i < dim; ++i) acc += w[i] * x[i];
    z[l] = acc;
  }
  return z;
}

Probabilities softmax(const std::array<double, kNumClasses>& logits) {
  const double top = *std::max_element(logits.begin(), logits.end());
  Probabilities p{};
  double sum = 0.0;
  for (int l = 0; l < kNumClasses; ++l) {
    p[l] = std::exp(logits[l] - top);
    sum += p[l];
  }
  for (auto& v : p) v /= sum;
  return p;
}

Probabilities predict_proba(const ClassifierModel& model, std::span<const double> x) {
  if (model.hyper.feature_map == FeatureMap::Identity) return softmax(model.logits(x));
  if (x.size() != model.input_dim()) {
    fail(ErrorCode::Shape, "feature has dimension " + std::to_string(x.size()) + ", model expects " +
                               std::to_string(model.input_dim()));
  }
  return softmax(model.logits(expand_features(x, model.hyper.feature_map)));
}

LossGradient loss_and_gradient(const ClassifierModel& model, const FeatureMatrix& x, std::span<const int> labels,
                               double l2) {
  const std::size_t n = x.rows();
  check_labels(labels, n);
  if (n == 0) fail(ErrorCode::Shape, "no training rows");

  LossGradient out;
  out.grad_weights.assign(model.weights.size(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto xi = x.row(i);
    const auto z = model.logits(xi);
    const double top = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - top);
    const double log_norm = top + std::log(sum);
    const int y = labels[i] - 1;
    out.loss -= z[y] - log_norm;
    for (int l = 0; l < kNumClasses; ++l) {
      const double g = std::exp(z[l] - log_norm) - (l == y ? 1.0 : 0.0);
      out.grad_biases[l] += g;
      double* gw = out.grad_weights.data() + static_cast<std::size_t>(l) * model.dim;
      for (std::size_t d = 0; d < model.dim; ++d) gw[d] += g * xi[d];
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  out.loss *= inv_n;
  double sq = 0.0;
  for (std::size_t j = 0; j < model.weights.size(); ++j) {
    out.grad_weights[j] = out.grad_weights[j] * inv_n + l2 * model.weights[j];
    sq += model.weights[j] * model.weights[j];
  }
  for (auto& g : out.grad_biases) g *= inv_n;
  out.loss += 0.5 * l2 * sq;
  return out;
}

ClassifierModel train(const FeatureMatrix& x, std::span<const int> labels, const TrainingHyper& hyper) {
  const std::size_t n = x.rows();
  check_labels(labels, n);
  if (n == 0 || x.dim == 0) fail(ErrorCode::Shape, "no training data");
  std::array<bool, kNumClasses> present{};
  for (int y : labels) present[y - 1] = true;
  for (int l = 0; l < kNumClasses; ++l) {
    if (!present[l]) fail(ErrorCode::Coverage, "no training example for class " + std::to_string(l + 1));
  }
  if (!(hyper.learning_rate > 0.0) || hyper.epochs < 0 || !(hyper.l2 >= 0.0)) {
    fail(ErrorCode::Config, "invalid training hyperparameters");
  }

  using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const auto rows = static_cast<Eigen::Index>(n);
  const auto dim = static_cast<Eigen::Index>(expanded_dim(x.dim, hyper.feature_map));
  RowMatrix raw(rows, dim);
  if (hyper.feature_map == FeatureMap::Identity) {
    raw = Eigen::Map<const RowMatrix>(x.data.data(), rows, dim);
  } else {
    for (Eigen::Index i = 0; i < rows; ++i) {
      const auto e = expand_features(x.row(static_cast<std::size_t>(i)), hyper.feature_map);
      raw.row(i) = Eigen::Map<const Eigen::RowVectorXd>(e.data(), dim);
    }
  }
  const Eigen::RowVectorXd mean = raw.colwise().mean();
  raw.rowwise() -= mean;
  const RowMatrix& centred = raw;

  RowMatrix onehot = RowMatrix::Zero(rows, kNumClasses);
  for (Eigen::Index i = 0; i < rows; ++i) onehot(i, labels[i] - 1) = 1.0;

  std::mt19937_64 rng(hyper.seed);
  std::normal_distribution<double> init(0.0, 0.01);
  RowMatrix w(kNumClasses, dim);
  for (Eigen::Index j = 0; j < w.size(); ++j) w.data()[j] = init(rng);
  Eigen::RowVectorXd b = Eigen::RowVectorXd::Zero(kNumClasses);

  ClassifierModel model;
  model.dim = static_cast<std::size_t>(dim);
  model.hyper = hyper;
  model.loss_trace.reserve(static_cast<std::size_t>(hyper.epochs));
  const double inv_n = 1.0 / static_cast<double>(n);

  RowMatrix probs(rows, kNumClasses);
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    probs.noalias() = centred * w.transpose();
    probs.rowwise() += b;
    double loss = 0.0;
    for (Eigen::Index i = 0; i < rows; ++i) {
      const double top = probs.row(i).maxCoeff();
      probs.row(i).array() = (probs.row(i).array() - top).exp();
      const double sum = probs.row(i).sum();
      probs.row(i) /= sum;
      loss -= std::log(std::max(probs(i, labels[i] - 1), 1e-300));
    }
    loss = loss * inv_n + 0.5 * hyper.l2 * w.squaredNorm();
    model.loss_trace.push_back(loss);

    probs -= onehot;
    const RowMatrix grad_w = (probs.transpose() * centred) * inv_n + hyper.l2 * w;
    const Eigen::RowVectorXd grad_b = probs.colwise().sum() * inv_n;
    w -= hyper.learning_rate * grad_w;
    b -= hyper.learning_rate * grad_b;
  }

  // Fold the centring into the biases: W (x - mu) + b = W x + (b - W mu).
  const Eigen::VectorXd shift = w * mean.transpose();
  model.weights.assign(w.data(), w.data() + w.size());
  for (int l = 0; l < kNumClasses; ++l) model.biases[l] = b[l] - shift[l];
  return model;
}

namespace {
constexpr const char* kModelMagic = "fer4d-classifier";
constexpr int kModelVersion = 1;
}  // namespace

void save_model(const ClassifierModel& model, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  std::ostringstream header;
  header.precision(17);
  header << kModelMagic << '\n'
         << "version " << kModelVersion << '\n'
         << "classes " << kNumClasses << '\n'
         << "dim " << model.dim << '\n'
         << "seed " << model.hyper.seed << '\n'
         << "epochs " << model.hyper.epochs << '\n'
         << "learning_rate " << model.hyper.learning_rate << '\n'
         << "l2 " << model.hyper.l2 << '\n'
         << "feature_map " << to_string(model.hyper.feature_map) << '\n'
         << "loss_trace " << model.loss_trace.size() << '\n'
         << "data\n";
  out << header.str();
  for (double w : model.weights) detail::put_le<float>(out, static_cast<float>(w));
  for (double b : model.biases) detail::put_le<float>(out, static_cast<float>(b));
  for (double l : model.loss_trace) detail::put_le<float>(out, static_cast<float>(l));
  if (!out) fail(ErrorCode::Io, "failed writing " + path.string());
}

ClassifierModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kModelMagic) fail(ErrorCode::Format, path.string() + ": not a model checkpoint");

  ClassifierModel model;
  int version = -1, classes = -1;
  std::size_t trace_len = 0;
  while (std::getline(in, line) && line != "data") {
    std::istringstream fields(line);
    std::string key;
    fields >> key;
    if (key == "version") fields >> version;
    else if (key == "classes") fields >> classes;
    else if (key == "dim") fields >> model.dim;
    else if (key == "seed") fields >> model.hyper.seed;
    else if (key == "epochs") fields >> model.hyper.epochs;
    else if (key == "learning_rate") fields >> model.hyper.learning_rate;
    else if (key == "l2") fields >> model.hyper.l2;
    else if (key == "loss_trace") fields >> trace_len;
    else if (key == "feature_map") {
      std::string name;
      fields >> name;
      model.hyper.feature_map = parse_feature_map(name);
    }
    else fail(ErrorCode::Parse, path.string() + ": unknown header field '" + key + "'");
    if (fields.fail()) fail(ErrorCode::Parse, path.string() + ": malformed header field '" + key + "'");
  }
  if (line != "data") fail(ErrorCode::Parse, path.string() + ": header not terminated");
  if (version < 0) fail(ErrorCode::Format, path.string() + ": checkpoint lacks a version field");
  if (version != kModelVersion) fail(ErrorCode::Format, path.string() + ": unsupported version " + std::to_string(version));
  if (classes != kNumClasses) fail(ErrorCode::Format, path.string() + ": expected 6 classes");

  model.weights.resize(kNumClasses * model.dim);
  for (auto& w : model.weights) w = detail::get_le<float>(in);
  for (auto& b : model.biases) b = detail::get_le<float>(in);
  model.loss_trace.resize(trace_len);
  for (auto& l : model.loss_trace) l = detail::get_le<float>(in);
  return model;
}

}  // namespace fer4d
