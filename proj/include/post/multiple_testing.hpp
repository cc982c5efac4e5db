#pragma once

#include <span>
#include <string>
#include <vector>

#include "post/sequential.hpp"

namespace post {

/// Sequential p-values of m experiments at a common stopping time, ready
/// for a multiplicity correction.
struct MultipleTestInput {
  std::vector<double> p_values;
  double alpha = 0.05;
  std::vector<std::string> labels;  // empty -> "1", "2", ...

  void validate() const;
};

/// Rejection sets as original indices. Ties are broken by stable label
/// order before ranking.
std::vector<int> bonferroni(const MultipleTestInput& input);
std::vector<int> benjamini_hochberg(const MultipleTestInput& input);
std::vector<int> benjamini_yekutieli(const MultipleTestInput& input);

enum class MtProcedure { BC, BH, BY };

std::vector<int> reject_set(const MultipleTestInput& input, MtProcedure proc);

/// Collects each experiment's current sequential p-value (1.0 when no
/// statistic exists yet) at a common horizon and applies the selected
/// procedure (BY by default). Returns one 0/1 decision per experiment.
std::vector<int> run_multiple_post(std::span<const ExperimentState> experiments,
                                   double alpha,
                                   MtProcedure proc = MtProcedure::BY);

}  // namespace post
