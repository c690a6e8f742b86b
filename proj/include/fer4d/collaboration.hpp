#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fer4d/classifier.hpp"
#include "fer4d/mesh.hpp"

namespace fer4d {

// scores[n][v] is the class distribution of example n seen from view v.
struct ScoreTensor {
  std::size_t examples = 0;
  std::size_t views = 0;
  std::vector<Probabilities> scores;  // examples x views, row-major

  ScoreTensor() = default;
  ScoreTensor(std::size_t n, std::size_t v) : examples(n), views(v), scores(n * v, Probabilities{}) {}

  Probabilities& at(std::size_t n, std::size_t v) { return scores[n * views + v]; }
  const Probabilities& at(std::size_t n, std::size_t v) const { return scores[n * views + v]; }
};

// Per-class mean over views.
std::vector<Probabilities> collaborate(const ScoreTensor& tensor);

// 1-based argmax per row; ties go to the lowest label.
int argmax_label(const Probabilities& row);
std::vector<int> final_prediction(std::span<const Probabilities> rows);

struct EvaluationReport {
  std::size_t total = 0;
  double accuracy = 0.0;
  std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses> confusion{};  // [truth-1][pred-1]
  std::array<double, kNumClasses> recall{};  // 0 for classes absent from truth
};

EvaluationReport evaluate(std::span<const int> predicted, std::span<const int> truth);

struct Fold {
  std::vector<std::size_t> train;  // sequence indices, ascending
  std::vector<std::size_t> test;
  std::vector<std::string> test_subjects;
};

// Subjects shuffled with the seed, then dealt round-robin into k folds.
std::vector<Fold> kfold_split(const Dataset& ds, int k, std::uint64_t seed);

// Throws Config when a subject lands on both sides of a fold or the test sides do not partition ds.
void check_subject_independence(const Dataset& ds, std::span<const Fold> folds);

std::string confusion_csv(const EvaluationReport& report);
std::string fold_accuracy_csv(std::span<const double> accuracies);

}  // namespace fer4d
