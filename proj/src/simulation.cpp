#include "post/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

namespace post {

namespace {

MeanStd summarize(const std::vector<double>& xs) {
  MeanStd s;
  s.n = static_cast<long>(xs.size());
  if (xs.empty()) return s;
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  s.mean = mean;
  s.std = xs.size() > 1 ? std::sqrt(ss / static_cast<double>(xs.size() - 1))
                        : 0.0;
  return s;
}

double quantile(std::vector<double> xs, double q) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  const auto idx = static_cast<size_t>(
      std::min<double>(std::ceil(q * static_cast<double>(xs.size())) - 1.0,
                       static_cast<double>(xs.size() - 1)));
  return xs[std::max<size_t>(idx, 0)];
}

Eigen::VectorXd pattern_beta(const SimulationConfig& cfg) {
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(cfg.p + 1);
  if (cfg.beta_treat_pattern.empty()) {
    beta(1) = cfg.b;
    beta(4) = cfg.b;
  } else {
    for (const auto& [idx, val] : cfg.beta_treat_pattern) {
      if (idx < 0 || idx > cfg.p)
        throw std::invalid_argument("beta_treat_pattern index out of range");
      beta(idx) = val;
    }
  }
  return beta;
}

Batch gen_batch(const SimulationConfig& cfg, const Eigen::VectorXd& theta0,
                const Eigen::VectorXd& beta, int sequence, Rng& rng) {
  const long n = 2 * cfg.batch_n;  // arms assigned by a fair coin
  const Eigen::MatrixXd X = gen_covariates(cfg.covariate_setting, n, cfg.p, rng);
  std::vector<int> arm(static_cast<size_t>(n));
  for (long i = 0; i < n; ++i)
    arm[static_cast<size_t>(i)] = rng.bernoulli(0.5);
  const Eigen::VectorXd y =
      gen_response(cfg.family, theta0, beta, X, arm, rng);
  Batch batch;
  batch.sequence_number = sequence;
  batch.observations.resize(static_cast<size_t>(n));
  for (long i = 0; i < n; ++i) {
    Observation& obs = batch.observations[static_cast<size_t>(i)];
    obs.y = y(i);
    obs.x = X.row(i).transpose();
    obs.arm = arm[static_cast<size_t>(i)];
  }
  return batch;
}

long scheduled_batches(const SimulationConfig& cfg) {
  return (cfg.horizon_N + cfg.batch_n - 1) / cfg.batch_n;
}

// Selection ratios against the design truth: covariates 1..6 are useful,
// 7..p are noise; the intercept is excluded from the filter ratio.
std::pair<double, double> selection_ratios(const Eigen::VectorXd& theta,
                                           int p) {
  int covered = 0;
  for (int j = 1; j <= 6; ++j)
    if (theta(j) != 0.0) ++covered;
  int filtered = 0;
  for (int j = 7; j <= p; ++j)
    if (theta(j) == 0.0) ++filtered;
  return {covered / 6.0, p > 6 ? filtered / static_cast<double>(p - 6) : 0.0};
}

// Deterministic parallel map over replication indices.
template <typename Fn>
void parallel_replications(int replications, int threads, Fn&& fn) {
  int hw = threads > 0 ? threads
                       : static_cast<int>(std::thread::hardware_concurrency());
  if (hw < 1) hw = 1;
  hw = std::min(hw, replications);
  if (hw <= 1) {
    for (int r = 0; r < replications; ++r) fn(r);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<int> next{0};
  for (int t = 0; t < hw; ++t) {
    pool.emplace_back([&]() {
      for (;;) {
        const int r = next.fetch_add(1);
        if (r >= replications) return;
        fn(r);
      }
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace

void SimulationConfig::validate() const {
  if (p < 7)
    throw std::invalid_argument("simulation: p must be at least 7");
  if (batch_n < 1 || horizon_N < 1 || replications < 1)
    throw std::invalid_argument("simulation: counts must be positive");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("simulation: alpha must lie in (0,1)");
  if (theta0.size() != 0 && theta0.size() != p + 1)
    throw std::invalid_argument("simulation: theta0 must have length p+1");
  if (!std::isfinite(b))
    throw std::invalid_argument("simulation: effect size must be finite");
}

Eigen::VectorXd default_theta0(int p) {
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(p + 1);
  theta(1) = theta(2) = theta(3) = 1.0;
  theta(4) = theta(5) = theta(6) = -1.0;
  return theta;
}

std::vector<double> default_alt_effects(const GlmFamily& family) {
  switch (family.kind) {
    case FamilyKind::GaussianIdentity: return {0.2, 0.4, 0.6, 0.8};
    case FamilyKind::BernoulliLogit: return {1.0, 2.0, 3.0, 4.0};
    case FamilyKind::PoissonLog: return {0.1, 0.2, 0.3, 0.4};
  }
  throw std::logic_error("unknown family");
}

PenaltyConfig penalty_for_method(Method method) {
  switch (method) {
    case Method::PostMcp: return PenaltyConfig::mcp();
    case Method::PostScad: return PenaltyConfig::scad();
    case Method::PostAdaLasso: return PenaltyConfig::adalasso();
    case Method::SstMle: return PenaltyConfig::none();
  }
  throw std::logic_error("unknown method");
}

const char* method_name(Method method) {
  switch (method) {
    case Method::PostMcp: return "mcp";
    case Method::PostScad: return "scad";
    case Method::PostAdaLasso: return "adalasso";
    case Method::SstMle: return "mle";
  }
  return "?";
}

Eigen::MatrixXd gen_covariates(CovariateSetting setting, long n, int p,
                               Rng& rng) {
  if (p < 7)
    throw std::invalid_argument("gen_covariates: p must be at least 7");
  if (n < 1) throw std::invalid_argument("gen_covariates: n must be positive");
  Eigen::MatrixXd X(n, p + 1);
  Eigen::MatrixXd corr_chol;
  if (setting == CovariateSetting::MVN) {
    Eigen::MatrixXd corr = Eigen::MatrixXd::Constant(6, 6, 0.5);
    corr.diagonal().setOnes();
    corr_chol = cholesky_factor(corr);
  }
  Eigen::VectorXd z(6);
  for (long i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    if (setting == CovariateSetting::NU) {
      X(i, 1) = rng.normal(0.0, 1.0);
      X(i, 2) = rng.normal(1.0, 1.0);
      X(i, 3) = rng.normal(2.0, 1.0);
      X(i, 4) = rng.uniform(-1.0, 1.0);
      X(i, 5) = rng.uniform(0.0, 2.0);
      X(i, 6) = rng.uniform(1.0, 3.0);
    } else {
      for (int k = 0; k < 6; ++k) z(k) = rng.normal();
      X.row(i).segment(1, 6) = (corr_chol * z).transpose();
    }
    for (int j = 7; j <= p; ++j) X(i, j) = rng.normal();
  }
  return X;
}

Eigen::VectorXd gen_response(const GlmFamily& family,
                             const Eigen::VectorXd& theta0,
                             const Eigen::VectorXd& beta,
                             const Eigen::MatrixXd& X,
                             const std::vector<int>& A, Rng& rng) {
  const long n = X.rows();
  if (theta0.size() != X.cols() || beta.size() != X.cols())
    throw std::invalid_argument("gen_response: coefficient length mismatch");
  if (static_cast<long>(A.size()) != n)
    throw std::invalid_argument("gen_response: arm vector length mismatch");
  Eigen::VectorXd y(n);
  for (long i = 0; i < n; ++i) {
    const double eta = X.row(i).dot(theta0) +
                       (A[static_cast<size_t>(i)] == 1 ? X.row(i).dot(beta)
                                                       : 0.0);
    switch (family.kind) {
      case FamilyKind::GaussianIdentity:
        y(i) = rng.normal(eta, std::sqrt(family.dispersion));
        break;
      case FamilyKind::BernoulliLogit:
        y(i) = rng.bernoulli(inverse_link(family, eta));
        break;
      case FamilyKind::PoissonLog:
        y(i) = static_cast<double>(
            rng.poisson(inverse_link(family, eta)));
        break;
    }
  }
  return y;
}

SingleStudyResult run_single_study(const SimulationConfig& config) {
  config.validate();
  const Eigen::VectorXd theta0 =
      config.theta0.size() ? config.theta0 : default_theta0(config.p);
  const Eigen::VectorXd beta = pattern_beta(config);
  const PenaltyConfig penalty = penalty_for_method(config.method);
  const long batches = scheduled_batches(config);

  struct RepOutcome {
    bool ok = false;
    bool rejected = false;
    long stop_time = 0;
    double coverage = 0.0;
    double filter = 0.0;
    bool have_fit = false;
    std::vector<StatRecord> trajectory;
  };
  std::vector<RepOutcome> outcomes(static_cast<size_t>(config.replications));

  parallel_replications(config.replications, config.threads, [&](int r) {
    RepOutcome& out = outcomes[static_cast<size_t>(r)];
    try {
      const std::uint64_t stream = split_seed(config.seed, static_cast<std::uint64_t>(r));
      Rng rng(stream);
      ExperimentState exp = make_experiment(
          "rep" + std::to_string(r), config.family, penalty,
          Eigen::VectorXd::Zero(config.p + 1), config.alpha, config.horizon_N,
          config.batch_n, /*self_stop=*/true, stream);
      for (int k = 1; k <= batches; ++k) {
        ingest_batch(exp, gen_batch(config, theta0, beta, k, rng));
        if (exp.status != ExperimentStatus::Running) break;
      }
      finalize_at_horizon(exp);
      out.rejected = exp.status == ExperimentStatus::Rejected;
      out.stop_time = out.rejected ? exp.rejected_at
                                   : static_cast<long>(exp.treat_data.size());
      if (exp.last_fit) {
        std::tie(out.coverage, out.filter) =
            selection_ratios(exp.last_fit->theta_hat, config.p);
        out.have_fit = true;
      }
      if (config.collect_trajectories) out.trajectory = exp.stat_history;
      out.ok = true;
    } catch (const PostError&) {
      out.ok = false;
    }
  });

  SingleStudyResult result;
  std::vector<double> rej, cov, fil, stop;
  for (const RepOutcome& out : outcomes) {
    if (!out.ok) {
      result.metrics.replications_failed++;
      continue;
    }
    result.metrics.replications_done++;
    rej.push_back(out.rejected ? 1.0 : 0.0);
    stop.push_back(static_cast<double>(out.stop_time));
    if (out.have_fit) {
      cov.push_back(out.coverage);
      fil.push_back(out.filter);
    }
    result.rejected.push_back(out.rejected ? 1 : 0);
    result.stopping_time.push_back(out.stop_time);
    if (config.collect_trajectories)
      result.trajectories.push_back(out.trajectory);
  }
  result.metrics.rejection_rate = summarize(rej);
  result.metrics.coverage_ratio = summarize(cov);
  result.metrics.filter_ratio = summarize(fil);
  result.metrics.stopping_time_median = quantile(stop, 0.5);
  result.metrics.stopping_time_p90 = quantile(stop, 0.9);
  return result;
}

MultipleStudyResult run_multiple_study(const SimulationConfig& config, int m,
                                       int null_count,
                                       std::vector<double> alt_effects,
                                       MtProcedure proc) {
  config.validate();
  if (m < 1 || null_count < 0 || null_count > m)
    throw std::invalid_argument("run_multiple_study: bad m / null_count");
  if (alt_effects.empty()) alt_effects = default_alt_effects(config.family);
  const int alt_count = m - null_count;
  const Eigen::VectorXd theta0 =
      config.theta0.size() ? config.theta0 : default_theta0(config.p);
  const PenaltyConfig penalty = penalty_for_method(config.method);
  const long batches = scheduled_batches(config);

  struct RepOutcome {
    bool ok = false;
    double fdr = 0.0;
    double tpr = 0.0;
    std::vector<double> fdr_by_batch;
    std::vector<double> tpr_by_batch;
  };
  std::vector<RepOutcome> outcomes(static_cast<size_t>(config.replications));

  parallel_replications(config.replications, config.threads, [&](int r) {
    RepOutcome& out = outcomes[static_cast<size_t>(r)];
    try {
      std::vector<ExperimentState> experiments;
      std::vector<Rng> rngs;
      std::vector<Eigen::VectorXd> betas;
      experiments.reserve(static_cast<size_t>(m));
      for (int i = 0; i < m; ++i) {
        const std::uint64_t stream =
            split_seed(config.seed,
                       static_cast<std::uint64_t>(r) * 1024ULL +
                           static_cast<std::uint64_t>(i));
        rngs.emplace_back(stream);
        SimulationConfig ecfg = config;
        ecfg.b = i < null_count
                     ? 0.0
                     : alt_effects[static_cast<size_t>(i - null_count) %
                                   alt_effects.size()];
        betas.push_back(pattern_beta(ecfg));
        experiments.push_back(make_experiment(
            "exp" + std::to_string(i + 1), config.family, penalty,
            Eigen::VectorXd::Zero(config.p + 1), config.alpha,
            config.horizon_N, config.batch_n, /*self_stop=*/false, stream));
      }
      const auto evaluate = [&](const std::vector<int>& decisions) {
        int false_rej = 0, true_rej = 0, total_rej = 0;
        for (int i = 0; i < m; ++i) {
          if (decisions[static_cast<size_t>(i)] == 1) {
            ++total_rej;
            if (i < null_count)
              ++false_rej;
            else
              ++true_rej;
          }
        }
        const double fdr =
            total_rej == 0 ? 0.0
                           : static_cast<double>(false_rej) / total_rej;
        const double tpr =
            alt_count == 0 ? 0.0
                           : static_cast<double>(true_rej) / alt_count;
        return std::pair<double, double>(fdr, tpr);
      };
      for (int k = 1; k <= batches; ++k) {
        for (int i = 0; i < m; ++i) {
          ingest_batch(experiments[static_cast<size_t>(i)],
                       gen_batch(config, theta0, betas[static_cast<size_t>(i)],
                                 k, rngs[static_cast<size_t>(i)]));
        }
        const auto [fdr_k, tpr_k] =
            evaluate(run_multiple_post(experiments, config.alpha, proc));
        out.fdr_by_batch.push_back(fdr_k);
        out.tpr_by_batch.push_back(tpr_k);
      }
      std::tie(out.fdr, out.tpr) =
          evaluate(run_multiple_post(experiments, config.alpha, proc));
      out.ok = true;
    } catch (const PostError&) {
      out.ok = false;
    }
  });

  MultipleStudyResult result;
  std::vector<double> fdrs, tprs;
  std::vector<std::vector<double>> fdr_traj, tpr_traj;
  for (const RepOutcome& out : outcomes) {
    if (!out.ok) {
      result.metrics.replications_failed++;
      continue;
    }
    result.metrics.replications_done++;
    fdrs.push_back(out.fdr);
    if (alt_count > 0) tprs.push_back(out.tpr);
    fdr_traj.push_back(out.fdr_by_batch);
    tpr_traj.push_back(out.tpr_by_batch);
  }
  result.metrics.fdr = summarize(fdrs);
  result.metrics.has_fdr = !fdrs.empty();
  result.metrics.tpr = summarize(tprs);
  result.metrics.has_tpr = alt_count > 0 && !tprs.empty();
  result.fdr_per_rep = fdrs;
  result.tpr_per_rep = tprs;
  for (long k = 0; k < batches; ++k) {
    double fsum = 0.0, tsum = 0.0;
    long cnt = 0;
    for (size_t rr = 0; rr < fdr_traj.size(); ++rr) {
      if (static_cast<size_t>(k) < fdr_traj[rr].size()) {
        fsum += fdr_traj[rr][static_cast<size_t>(k)];
        tsum += tpr_traj[rr][static_cast<size_t>(k)];
        ++cnt;
      }
    }
    result.fdr_by_batch.push_back(cnt ? fsum / cnt : 0.0);
    result.tpr_by_batch.push_back(cnt ? tsum / cnt : 0.0);
  }
  return result;
}

}  // namespace post
