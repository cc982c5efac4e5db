#pragma once

#include "post/multiple_testing.hpp"
#include "post/random.hpp"

namespace post {

enum class CovariateSetting { NU, MVN };
enum class Method { PostMcp, PostScad, PostAdaLasso, SstMle };

/// Study design. Defaults reproduce the reference design: p = 30,
/// theta0 = (0,1,1,1,-1,-1,-1,0,...,0), treatment effects b on covariates
/// 1 and 4 (a normal and a uniform one), batches of 100 per arm up to a
/// horizon of 1000, 100 replications at alpha 0.05.
struct SimulationConfig {
  CovariateSetting covariate_setting = CovariateSetting::NU;
  GlmFamily family = GlmFamily::gaussian();
  double b = 0.0;
  Eigen::VectorXd theta0;  // empty -> default_theta0(p)
  std::vector<std::pair<int, double>> beta_treat_pattern;  // empty -> {{1,b},{4,b}}
  int p = 30;
  long batch_n = 100;
  long horizon_N = 1000;
  int replications = 100;
  double alpha = 0.05;
  Method method = Method::PostAdaLasso;
  std::uint64_t seed = 0;
  int threads = 0;  // 0 -> hardware concurrency
  bool collect_trajectories = false;

  void validate() const;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
  long n = 0;
};

struct StudyMetrics {
  MeanStd rejection_rate;
  MeanStd coverage_ratio;
  MeanStd filter_ratio;
  MeanStd fdr;  // multiple studies only
  MeanStd tpr;  // multiple studies only (absent when no alternatives)
  bool has_fdr = false;
  bool has_tpr = false;
  double stopping_time_median = 0.0;
  double stopping_time_p90 = 0.0;
  long replications_done = 0;
  long replications_failed = 0;
};

struct SingleStudyResult {
  StudyMetrics metrics;
  std::vector<int> rejected;          // per replication
  std::vector<long> stopping_time;    // per replication (treatment-arm n)
  std::vector<std::vector<StatRecord>> trajectories;  // when collected
};

struct MultipleStudyResult {
  StudyMetrics metrics;
  std::vector<double> fdr_by_batch;  // mean over replications per batch
  std::vector<double> tpr_by_batch;
  std::vector<double> fdr_per_rep;
  std::vector<double> tpr_per_rep;
};

Eigen::VectorXd default_theta0(int p);
std::vector<double> default_alt_effects(const GlmFamily& family);
PenaltyConfig penalty_for_method(Method method);
const char* method_name(Method method);

/// n x (p+1) covariate draw: column 0 is the intercept; columns 1-6 follow
/// the NU mixture or the equicorrelated MVN; columns 7..p are iid N(0,1).
Eigen::MatrixXd gen_covariates(CovariateSetting setting, long n, int p,
                               Rng& rng);

/// Responses under eta = X theta0 + (X beta) .* A for the family's link.
Eigen::VectorXd gen_response(const GlmFamily& family,
                             const Eigen::VectorXd& theta0,
                             const Eigen::VectorXd& beta,
                             const Eigen::MatrixXd& X,
                             const std::vector<int>& A, Rng& rng);

/// One sequential experiment per replication, run to its decision;
/// aggregates rejection rate, selection ratios from the final control fit,
/// and stopping-time quantiles.
SingleStudyResult run_single_study(const SimulationConfig& config);

/// m simultaneous experiments per replication (null_count true nulls, the
/// rest alternating over alt_effects), advanced on a common batch schedule
/// and decided by the selected procedure at the horizon.
MultipleStudyResult run_multiple_study(const SimulationConfig& config,
                                       int m = 32, int null_count = 24,
                                       std::vector<double> alt_effects = {},
                                       MtProcedure proc = MtProcedure::BY);

}  // namespace post
