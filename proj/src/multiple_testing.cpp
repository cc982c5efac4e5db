#include "post/multiple_testing.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace post {

namespace {

struct RankedP {
  double p;
  std::string label;
  int index;
};

std::vector<RankedP> ranked(const MultipleTestInput& input) {
  const auto m = input.p_values.size();
  std::vector<RankedP> v(m);
  for (size_t i = 0; i < m; ++i) {
    v[i].p = input.p_values[i];
    v[i].label = input.labels.empty() ? std::to_string(i + 1)
                                      : input.labels[i];
    v[i].index = static_cast<int>(i);
  }
  std::sort(v.begin(), v.end(), [](const RankedP& a, const RankedP& b) {
    if (a.p != b.p) return a.p < b.p;
    if (a.label != b.label) return a.label < b.label;
    return a.index < b.index;
  });
  return v;
}

// Step-up over sorted p-values with per-rank thresholds t(j), j = 1..m.
template <typename Threshold>
std::vector<int> step_up(const MultipleTestInput& input, Threshold t) {
  const auto v = ranked(input);
  const auto m = v.size();
  size_t jstar = 0;  // number of rejections
  for (size_t j = m; j >= 1; --j) {
    if (v[j - 1].p <= t(j)) {
      jstar = j;
      break;
    }
  }
  std::vector<int> out;
  for (size_t j = 0; j < jstar; ++j) out.push_back(v[j].index);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

void MultipleTestInput::validate() const {
  if (p_values.empty())
    throw std::invalid_argument("multiple testing: need at least one p-value");
  if (!labels.empty() && labels.size() != p_values.size())
    throw std::invalid_argument("multiple testing: label count mismatch");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("multiple testing: alpha must lie in (0,1)");
  for (double p : p_values)
    if (!(p >= 0.0 && p <= 1.0))
      throw std::invalid_argument(
          "multiple testing: p-values must lie in [0,1]");
}

std::vector<int> bonferroni(const MultipleTestInput& input) {
  input.validate();
  // The threshold alpha/m is constant in rank, so the step-up form collapses
  // to the classical per-test rule; tests assert the equality.
  const double cut = input.alpha / static_cast<double>(input.p_values.size());
  std::vector<int> out;
  for (size_t i = 0; i < input.p_values.size(); ++i)
    if (input.p_values[i] <= cut) out.push_back(static_cast<int>(i));
  return out;
}

std::vector<int> benjamini_hochberg(const MultipleTestInput& input) {
  input.validate();
  const double m = static_cast<double>(input.p_values.size());
  return step_up(input, [&](size_t j) {
    return input.alpha * static_cast<double>(j) / m;
  });
}

std::vector<int> benjamini_yekutieli(const MultipleTestInput& input) {
  input.validate();
  const double m = static_cast<double>(input.p_values.size());
  double harmonic = 0.0;
  for (size_t r = 1; r <= input.p_values.size(); ++r)
    harmonic += 1.0 / static_cast<double>(r);
  return step_up(input, [&](size_t j) {
    return input.alpha * static_cast<double>(j) / (m * harmonic);
  });
}

std::vector<int> reject_set(const MultipleTestInput& input, MtProcedure proc) {
  switch (proc) {
    case MtProcedure::BC: return bonferroni(input);
    case MtProcedure::BH: return benjamini_hochberg(input);
    case MtProcedure::BY: return benjamini_yekutieli(input);
  }
  throw std::logic_error("unknown procedure");
}

std::vector<int> run_multiple_post(std::span<const ExperimentState> experiments,
                                   double alpha, MtProcedure proc) {
  if (experiments.empty())
    throw std::invalid_argument("run_multiple_post: no experiments");
  const long horizon = experiments[0].max_horizon;
  const int seq = experiments[0].last_sequence;
  MultipleTestInput input;
  input.alpha = alpha;
  for (const ExperimentState& e : experiments) {
    if (e.max_horizon != horizon || e.last_sequence != seq)
      throw std::invalid_argument(
          "run_multiple_post: experiments must share the batch schedule and "
          "horizon");
    input.p_values.push_back(e.stat_history.empty() ? 1.0
                                                    : e.running_min_p);
    input.labels.push_back(e.experiment_id);
  }
  const std::vector<int> rejected = reject_set(input, proc);
  std::vector<int> decisions(experiments.size(), 0);
  for (int idx : rejected) decisions[static_cast<size_t>(idx)] = 1;
  return decisions;
}

}  // namespace post
