#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pivotcap {

struct GradCheckRow {
  std::string name;
  std::string kind;  // "op" or "loss"
  double max_error = 0.0;
  bool passed = false;
  std::string note;
};

inline constexpr double kGradCheckTolerance = 1e-4;

// Finite-difference checks of every primitive op on random inputs and of
// the six training losses on a small randomly initialized model.
std::vector<GradCheckRow> run_grad_check_suite(std::uint64_t seed, double tolerance = kGradCheckTolerance);

}  // namespace pivotcap
