#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "post/score_test.hpp"

namespace post {

enum class ExperimentStatus { Running, Rejected, AcceptedAtHorizon };

/// Control-arm refit policy for penalized configs. PaperFixed applies the
/// penalty exactly as printed, i.e. on the summed likelihood with an inert
/// tuning parameter, which on the per-observation objective is a fixed
/// lambda of 1/n_control. BicPath reselects lambda by BIC on every refit.
enum class RefitRule { PaperFixed, BicPath };

/// One row of the statistic history: both arm counts are recorded because
/// batches need not be balanced.
struct StatRecord {
  int sequence_number = 0;
  long n_control = 0;
  long n_treat = 0;
  double lambda_stat = 0.0;
  double p_pointwise = 1.0;
  double p_running_min = 1.0;
  bool regularized = false;
};

struct Batch {
  std::vector<Observation> observations;  // mixed arms
  int sequence_number = 0;
};

/// Full state of one sequential experiment. running_min_p is the
/// always-valid p-value process: the running minimum of the pointwise
/// survival probabilities, non-increasing as batches arrive.
struct ExperimentState {
  std::string experiment_id;
  GlmFamily family;
  PenaltyConfig penalty;
  Eigen::VectorXd beta0;
  double alpha = 0.05;
  long max_horizon = 0;        // per-arm sample-size cap N
  long batch_size_nominal = 0; // n per arm per batch
  /// When false the experiment keeps monitoring past the alpha crossing;
  /// multiple-testing drivers need the p-value process at a common horizon
  /// rather than a self-stopped one.
  bool self_stop = true;
  RefitRule refit_rule = RefitRule::PaperFixed;
  std::uint64_t rng_seed = 0;

  std::vector<Observation> control_data;
  std::vector<Observation> treat_data;
  std::vector<StatRecord> stat_history;
  double running_min_p = 1.0;
  ExperimentStatus status = ExperimentStatus::Running;
  long rejected_at = -1;  // treatment-arm cumulative n at rejection
  int last_sequence = 0;
  long skipped_fits = 0;  // batches where the control fit failed
  std::optional<FittedModel> last_fit;
};

ExperimentState make_experiment(std::string id, const GlmFamily& family,
                                const PenaltyConfig& penalty,
                                Eigen::VectorXd beta0, double alpha,
                                long max_horizon, long batch_size_nominal,
                                bool self_stop = true,
                                std::uint64_t rng_seed = 0);

/// Appends a batch, refits theta on the full accumulated control arm,
/// recomputes the statistic on the full accumulated treatment arm, and
/// advances the decision state. Until both arms hold at least p+2
/// observations (or while the control fit fails) batches accumulate
/// silently. Throws on out-of-order batches or after a terminal status.
void ingest_batch(ExperimentState& state, const Batch& batch);

/// The current always-valid p-value (running minimum). Requires at least
/// one recorded statistic.
double current_p_value(const ExperimentState& state);

/// Flips a still-running experiment to AcceptedAtHorizon; drivers call this
/// once the batch schedule is exhausted.
void finalize_at_horizon(ExperimentState& state);

/// Versioned, checksummed, human-readable serialization.
std::string checkpoint(const ExperimentState& state);
ExperimentState restore(const std::string& bytes);

}  // namespace post
