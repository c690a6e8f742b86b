#pragma once

// Randomized law checks shared by the unit tests and the acceptance runner.

#include <cstdint>
#include <string>

namespace props {

struct Outcome {
  bool ok = true;
  std::string detail;  // first failure, or a short summary when everything held

  void require(bool condition, const std::string& what);
};

// Sum to zero for T = 1..max_length; T <= 20 against exact fractions.
Outcome rank_pool_coefficients(int max_length);

// Zero on constants, linearity and sign agreement with the ranking-regression oracle.
Outcome dynamic_image_laws(std::uint64_t seed);

// Random two-triangle scenes against the per-pixel brute force.
Outcome rasterizer_oracle(int scenes, int k, std::uint64_t seed);

// Crop subset and idempotence, yaw rigidity, rotate-then-crop composition.
Outcome geometry_laws(int meshes, std::uint64_t seed);

// Clip counts of random plans, EVM fixed points, reversal and flip involutions.
Outcome augmentation_laws(int plans, std::uint64_t seed);

// Analytic vs central-difference gradients on random (d, n) problems plus simplex outputs.
Outcome gradient_check(int problems, int dim, int rows, std::uint64_t seed);

// Mean-of-views examples, simplex and bound laws, argmax agreement, fold partitions.
Outcome collaboration_laws(int rows, std::uint64_t seed);

}  // namespace props
