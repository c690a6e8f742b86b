#include "fer4d/collaboration.hpp"

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "fer4d/error.hpp"

namespace fer4d {

std::vector<Probabilities> collaborate(const ScoreTensor& tensor) {
  if (tensor.views == 0) fail(ErrorCode::Domain, "collaboration needs at least one view");
  if (tensor.scores.size() != tensor.examples * tensor.views) fail(ErrorCode::Shape, "score tensor size mismatch");
  std::vector<Probabilities> out(tensor.examples, Probabilities{});
  const double inv = 1.0 / static_cast<double>(tensor.views);
  for (std::size_t n = 0; n < tensor.examples; ++n) {
    for (std::size_t v = 0; v < tensor.views; ++v) {
      const auto& row = tensor.at(n, v);
      for (int l = 0; l < kNumClasses; ++l) out[n][l] += row[l];
    }
    for (auto& p : out[n]) p *= inv;
  }
  return out;
}

int argmax_label(const Probabilities& row) {
  int best = 0;
  for (int l = 1; l < kNumClasses; ++l) {
    if (row[l] > row[best]) best = l;
  }
  return best + 1;
}

std::vector<int> final_prediction(std::span<const Probabilities> rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(argmax_label(r));
  return out;
}

EvaluationReport evaluate(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) {
    fail(ErrorCode::Shape, "prediction count " + std::to_string(predicted.size()) + " != truth count " +
                               std::to_string(truth.size()));
  }
  EvaluationReport r;
  r.total = truth.size();
  std::uint64_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int p = predicted[i], t = truth[i];
    if (p < 1 || p > kNumClasses || t < 1 || t > kNumClasses) fail(ErrorCode::Domain, "label outside 1..6");
    ++r.confusion[t - 1][p - 1];
    if (p == t) ++hits;
  }
  r.accuracy = r.total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(r.total);
  for (int l = 0; l < kNumClasses; ++l) {
    std::uint64_t row = 0;
    for (auto c : r.confusion[l]) row += c;
    r.recall[l] = row == 0 ? 0.0 : static_cast<double>(r.confusion[l][l]) / static_cast<double>(row);
  }
  return r;
}

std::vector<Fold> kfold_split(const Dataset& ds, int k, std::uint64_t seed) {
  if (k < 2) fail(ErrorCode::Config, "k-fold needs k >= 2");
  std::vector<std::string> subjects;
  {
    std::set<std::string> seen;
    for (const auto& s : ds.sequences) seen.insert(s.subject_id);
    subjects.assign(seen.begin(), seen.end());
  }
  if (subjects.size() < static_cast<std::size_t>(k)) {
    fail(ErrorCode::Config, std::to_string(subjects.size()) + " subjects cannot fill " + std::to_string(k) + " folds");
  }
  // Explicit Fisher-Yates so the split does not depend on the standard library's shuffle.
  std::mt19937_64 rng(seed);
  for (std::size_t i = subjects.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(subjects[i - 1], subjects[pick(rng)]);
  }
  std::map<std::string, int> fold_of;
  std::vector<Fold> folds(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    const int f = static_cast<int>(i % static_cast<std::size_t>(k));
    fold_of[subjects[i]] = f;
    folds[f].test_subjects.push_back(subjects[i]);
  }
  for (auto& f : folds) std::sort(f.test_subjects.begin(), f.test_subjects.end());
  for (std::size_t n = 0; n < ds.sequences.size(); ++n) {
    const int home = fold_of.at(ds.sequences[n].subject_id);
    for (int f = 0; f < k; ++f) (f == home ? folds[f].test : folds[f].train).push_back(n);
  }
  return folds;
}

void check_subject_independence(const Dataset& ds, std::span<const Fold> folds) {
  std::vector<int> tested(ds.sequences.size(), 0);
  for (std::size_t f = 0; f < folds.size(); ++f) {
    std::set<std::string> train_subjects;
    for (auto i : folds[f].train) train_subjects.insert(ds.sequences.at(i).subject_id);
    for (auto i : folds[f].test) {
      ++tested.at(i);
      if (train_subjects.count(ds.sequences[i].subject_id)) {
        fail(ErrorCode::Config, "fold " + std::to_string(f) + ": subject " + ds.sequences[i].subject_id +
                                    " appears in train and test");
      }
    }
    if (folds[f].train.size() + folds[f].test.size() != ds.sequences.size()) {
      fail(ErrorCode::Config, "fold " + std::to_string(f) + " does not cover every sequence");
    }
  }
  for (std::size_t i = 0; i < tested.size(); ++i) {
    if (tested[i] != 1) fail(ErrorCode::Config, "sequence " + std::to_string(i) + " tested " + std::to_string(tested[i]) + " times");
  }
}

std::string confusion_csv(const EvaluationReport& report) {
  std::ostringstream out;
  out << "truth\\predicted";
  for (auto name : kExpressionNames) out << ',' << name;
  out << '\n';
  for (int t = 0; t < kNumClasses; ++t) {
    out << kExpressionNames[t];
    for (int p = 0; p < kNumClasses; ++p) out << ',' << report.confusion[t][p];
    out << '\n';
  }
  return out.str();
}

std::string fold_accuracy_csv(std::span<const double> accuracies) {
  std::ostringstream out;
  out.precision(17);
  out << "fold,accuracy\n";
  for (std::size_t f = 0; f < accuracies.size(); ++f) out << f << ',' << accuracies[f] << '\n';
  return out.str();
}

}  // namespace fer4d
