#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fer4d/dynamic_image.hpp"
#include "fer4d/mesh.hpp"

namespace fer4d {

using Probabilities = std::array<double, kNumClasses>;

inline constexpr int kDefaultFeatureSide = 28;

// Row-major n x dim design matrix.
struct FeatureMatrix {
  std::size_t dim = 0;
  std::vector<double> data;

  std::size_t rows() const { return dim == 0 ? 0 : data.size() / dim; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * dim, dim}; }
  void append(std::span<const double> x);
};

// Area-weighted resampling of a KxK image to side x side (fractional pixel overlaps allowed).
std::vector<double> area_downsample(const DomainImage& img, int side);

// normalize_for_display -> area_downsample -> flatten.
std::vector<double> featurize(const DynamicImage& di, int side = kDefaultFeatureSide);

// Fixed expansion applied to features before the linear layer.
//   Identity:        phi(x) = x
//   Magnitude:       phi(x) = 2 |x - mean(x)|
//   SignedMagnitude: phi(x) = [x, 2 |x - mean(x)|]
// A reversed clip pools to roughly the negated dynamic image, i.e. x -> 1 - x after display
// normalization. The magnitude part is invariant to that; no linear scorer on x alone can be.
enum class FeatureMap { Identity, Magnitude, SignedMagnitude };

std::string_view to_string(FeatureMap m);
FeatureMap parse_feature_map(std::string_view name);
std::vector<double> expand_features(std::span<const double> x, FeatureMap map);
std::size_t expanded_dim(std::size_t dim, FeatureMap map);

struct TrainingHyper {
  double learning_rate = 0.1;
  int epochs = 300;
  double l2 = 1e-3;
  std::uint64_t seed = 0;
  FeatureMap feature_map = FeatureMap::Identity;
};

// Weights act on the expanded features; `input_dim` is the raw feature dimension.
struct ClassifierModel {
  std::size_t dim = 0;
  std::vector<double> weights;  // kNumClasses x dim, row-major
  Probabilities biases{};
  TrainingHyper hyper{};
  std::vector<double> loss_trace;

  static ClassifierModel zeros(std::size_t dim);
  // x has the expanded dimension.
  std::array<double, kNumClasses> logits(std::span<const double> x) const;
  std::size_t input_dim() const;
};

struct LossGradient {
  double loss = 0.0;
  std::vector<double> grad_weights;
  Probabilities grad_biases{};
};

// Mean softmax cross-entropy plus (l2 / 2) |W|^2 and its exact gradient. Labels are 1..6.
LossGradient loss_and_gradient(const ClassifierModel& model, const FeatureMatrix& x, std::span<const int> labels,
                               double l2);

// Full-batch gradient descent from a seeded small random start, on hyper.feature_map applied to x.
// Features are centred internally and the centring folded back into the biases.
ClassifierModel train(const FeatureMatrix& x, std::span<const int> labels, const TrainingHyper& hyper);

Probabilities softmax(const std::array<double, kNumClasses>& logits);
// x is a raw feature vector; the model's feature map is applied first.
Probabilities predict_proba(const ClassifierModel& model, std::span<const double> x);

// Structured-text header followed by little-endian float32 weights, biases and loss trace.
void save_model(const ClassifierModel& model, const std::filesystem::path& path);
ClassifierModel load_model(const std::filesystem::path& path);

// Boundary the pipeline trains and queries through; the softmax baseline is the shipped backend.
class ExpressionClassifier {
 public:
  virtual ~ExpressionClassifier() = default;
  virtual void fit(const FeatureMatrix& x, std::span<const int> labels) = 0;
  virtual Probabilities predict(std::span<const double> x) const = 0;
  virtual std::string name() const = 0;
};

class SoftmaxBaseline final : public ExpressionClassifier {
 public:
  explicit SoftmaxBaseline(TrainingHyper hyper) : hyper_(hyper) {}

  void fit(const FeatureMatrix& x, std::span<const int> labels) override { model_ = train(x, labels, hyper_); }
  Probabilities predict(std::span<const double> x) const override { return predict_proba(model_, x); }
  std::string name() const override {
    return "softmax-" + std::string(to_string(hyper_.feature_map));
  }

  const ClassifierModel& model() const { return model_; }

 private:
  TrainingHyper hyper_;
  ClassifierModel model_;
};

}  // namespace fer4d
