#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "post/io.hpp"

namespace py = pybind11;
using namespace post;

namespace {

GlmFamily family_from_name(const std::string& name, double dispersion) {
  if (name == "gaussian" || name == "identity")
    return GlmFamily::gaussian(dispersion);
  if (name == "bernoulli" || name == "logit") return GlmFamily::bernoulli();
  if (name == "poisson" || name == "log") return GlmFamily::poisson();
  throw std::invalid_argument("unknown family '" + name + "'");
}

PenaltyConfig penalty_from_name(const std::string& name, double gamma,
                                bool penalize_intercept) {
  PenaltyConfig cfg;
  if (name == "adalasso") {
    cfg = PenaltyConfig::adalasso();
  } else if (name == "scad") {
    cfg = gamma > 0 ? PenaltyConfig::scad(gamma) : PenaltyConfig::scad();
  } else if (name == "mcp") {
    cfg = gamma > 0 ? PenaltyConfig::mcp(gamma) : PenaltyConfig::mcp();
  } else if (name == "none") {
    cfg = PenaltyConfig::none();
  } else {
    throw std::invalid_argument("unknown penalty '" + name + "'");
  }
  cfg.penalize_intercept = penalize_intercept;
  return cfg;
}

/// Owned sample: rows of (y, arm, covariates-without-intercept).
struct Dataset {
  std::vector<Observation> observations;

  Dataset() = default;
  Dataset(const Eigen::VectorXd& y, const std::vector<int>& arm,
          const Eigen::MatrixXd& covariates) {
    if (y.size() != covariates.rows() ||
        static_cast<long>(arm.size()) != y.size())
      throw std::invalid_argument("dataset: length mismatch");
    observations.reserve(static_cast<size_t>(y.size()));
    for (long i = 0; i < y.size(); ++i) {
      Observation obs;
      obs.y = y(i);
      obs.arm = arm[static_cast<size_t>(i)];
      obs.x.resize(covariates.cols() + 1);
      obs.x(0) = 1.0;
      obs.x.tail(covariates.cols()) = covariates.row(i).transpose();
      observations.push_back(std::move(obs));
    }
  }

  Dataset control() const {
    Dataset out;
    for (const auto& o : observations)
      if (o.arm == 0) out.observations.push_back(o);
    return out;
  }
  Dataset treatment() const {
    Dataset out;
    for (const auto& o : observations)
      if (o.arm == 1) out.observations.push_back(o);
    return out;
  }
  size_t size() const { return observations.size(); }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Penalized online sequential testing for heterogeneous "
            "treatment effects in GLMs";

  // ---- distributions -----------------------------------------------------
  m.def(
      "noncentral_chi2_survival",
      [](double x, double df, double nc) {
        return noncentral_chi2_survival(x, NoncentralChiSq(df, nc));
      },
      py::arg("x"), py::arg("df"), py::arg("nc") = 0.0);
  m.def(
      "noncentral_chi2_quantile",
      [](double p, double df, double nc) {
        return noncentral_chi2_quantile(p, NoncentralChiSq(df, nc));
      },
      py::arg("p"), py::arg("df"), py::arg("nc") = 0.0);
  m.def("mvn_log_density", &mvn_log_density, py::arg("x"), py::arg("mean"),
        py::arg("cov"));
  m.def("cholesky_factor", &cholesky_factor, py::arg("cov"));

  // ---- glm core ------------------------------------------------------
  m.def(
      "inverse_link",
      [](const std::string& family, double eta, double dispersion) {
        return inverse_link(family_from_name(family, dispersion), eta);
      },
      py::arg("family"), py::arg("eta"), py::arg("dispersion") = 1.0);
  m.def(
      "variance_function",
      [](const std::string& family, double mu) {
        return variance_function(family_from_name(family, 1.0), mu);
      },
      py::arg("family"), py::arg("mu"));

  py::class_<Dataset>(m, "Dataset")
      .def(py::init<const Eigen::VectorXd&, const std::vector<int>&,
                    const Eigen::MatrixXd&>(),
           py::arg("y"), py::arg("arm"), py::arg("covariates"),
           "Rows of (response, arm, covariates); the intercept is implicit.")
      .def("control", &Dataset::control)
      .def("treatment", &Dataset::treatment)
      .def("__len__", &Dataset::size);

  m.def(
      "log_likelihood",
      [](const std::string& family, const Dataset& data,
         const Eigen::VectorXd& theta, const Eigen::VectorXd& beta,
         double dispersion) {
        return log_likelihood(family_from_name(family, dispersion),
                              data.observations, theta, beta);
      },
      py::arg("family"), py::arg("data"), py::arg("theta"), py::arg("beta"),
      py::arg("dispersion") = 1.0);

  // ---- penalties ---------------------------------------------------------
  m.def(
      "penalty_value",
      [](double theta_j, double lam, const std::string& kind, double gamma,
         int j) {
        return penalty_value(theta_j, lam,
                             penalty_from_name(kind, gamma, true), j);
      },
      py::arg("theta_j"), py::arg("lam"), py::arg("kind"),
      py::arg("gamma") = 0.0, py::arg("j") = 1);
  m.def(
      "threshold_update",
      [](double z, double v, double lam, const std::string& kind, double gamma,
         int j) {
        return threshold_update(z, v, lam,
                                penalty_from_name(kind, gamma, true), j);
      },
      py::arg("z"), py::arg("v"), py::arg("lam"), py::arg("kind"),
      py::arg("gamma") = 0.0, py::arg("j") = 1);
  m.def("soft_threshold", &soft_threshold, py::arg("z"), py::arg("t"));

  // ---- fitting -------------------------------------------------------
  py::class_<FittedModel>(m, "FittedModel")
      .def_readonly("theta_hat", &FittedModel::theta_hat)
      .def_readonly("active_set", &FittedModel::active_set)
      .def_readonly("lam", &FittedModel::lambda)
      .def_readonly("sigma_hat", &FittedModel::sigma_hat)
      .def_readonly("converged", &FittedModel::converged)
      .def_readonly("iterations", &FittedModel::iterations);

  m.def(
      "fit_ridge",
      [](const Dataset& data, const std::string& family, double lambda_ridge,
         double dispersion) {
        return fit_ridge(data.observations,
                         family_from_name(family, dispersion), lambda_ridge);
      },
      py::arg("data"), py::arg("family"), py::arg("lambda_ridge"),
      py::arg("dispersion") = 1.0);
  m.def(
      "fit_penalized",
      [](const Dataset& data, const std::string& family,
         const std::string& penalty, double lam, double gamma,
         bool penalize_intercept, double dispersion) {
        return fit_penalized(
            data.observations, family_from_name(family, dispersion),
            penalty_from_name(penalty, gamma, penalize_intercept), lam);
      },
      py::arg("data"), py::arg("family"), py::arg("penalty"), py::arg("lam"),
      py::arg("gamma") = 0.0, py::arg("penalize_intercept") = true,
      py::arg("dispersion") = 1.0);
  m.def(
      "select_lambda",
      [](const Dataset& data, const std::string& family,
         const std::string& penalty, double gamma, bool penalize_intercept,
         double dispersion) {
        return select_lambda(
            data.observations, family_from_name(family, dispersion),
            penalty_from_name(penalty, gamma, penalize_intercept));
      },
      py::arg("data"), py::arg("family"), py::arg("penalty"),
      py::arg("gamma") = 0.0, py::arg("penalize_intercept") = true,
      py::arg("dispersion") = 1.0);
  m.def(
      "fit_mle",
      [](const Dataset& data, const std::string& family, double dispersion) {
        return fit_mle(data.observations,
                       family_from_name(family, dispersion));
      },
      py::arg("data"), py::arg("family"), py::arg("dispersion") = 1.0);

  // ---- score test ----------------------------------------------------
  py::class_<TestResult>(m, "TestResult")
      .def_readonly("lambda_stat", &TestResult::lambda_stat)
      .def_readonly("u0", &TestResult::u0)
      .def_readonly("dof", &TestResult::dof)
      .def_readonly("p_value_pointwise", &TestResult::p_value_pointwise)
      .def_readonly("v_condition", &TestResult::v_condition)
      .def_readonly("regularized", &TestResult::regularized);

  py::class_<PostDecision>(m, "PostDecision")
      .def_readonly("result", &PostDecision::result)
      .def_readonly("reject", &PostDecision::reject)
      .def_readonly("model", &PostDecision::model);

  m.def(
      "run_single_post",
      [](const Dataset& data, const std::string& family,
         const std::string& penalty, const Eigen::VectorXd& beta0,
         double alpha, double gamma, double dispersion) {
        const Dataset ctrl = data.control();
        const Dataset treat = data.treatment();
        return run_single_post(ctrl.observations, treat.observations,
                               family_from_name(family, dispersion),
                               penalty_from_name(penalty, gamma, true), beta0,
                               alpha);
      },
      py::arg("data"), py::arg("family"), py::arg("penalty"), py::arg("beta0"),
      py::arg("alpha") = 0.05, py::arg("gamma") = 0.0,
      py::arg("dispersion") = 1.0);

  // ---- sequential ------------------------------------------------------
  py::enum_<ExperimentStatus>(m, "ExperimentStatus")
      .value("Running", ExperimentStatus::Running)
      .value("Rejected", ExperimentStatus::Rejected)
      .value("AcceptedAtHorizon", ExperimentStatus::AcceptedAtHorizon);

  py::class_<StatRecord>(m, "StatRecord")
      .def_readonly("sequence_number", &StatRecord::sequence_number)
      .def_readonly("n_control", &StatRecord::n_control)
      .def_readonly("n_treat", &StatRecord::n_treat)
      .def_readonly("lambda_stat", &StatRecord::lambda_stat)
      .def_readonly("p_pointwise", &StatRecord::p_pointwise)
      .def_readonly("p_running_min", &StatRecord::p_running_min);

  py::class_<ExperimentState>(m, "ExperimentState")
      .def_readonly("experiment_id", &ExperimentState::experiment_id)
      .def_readonly("status", &ExperimentState::status)
      .def_readonly("stat_history", &ExperimentState::stat_history)
      .def_readonly("running_min_p", &ExperimentState::running_min_p)
      .def_readonly("rejected_at", &ExperimentState::rejected_at)
      .def_readonly("skipped_fits", &ExperimentState::skipped_fits)
      .def_property_readonly(
          "n_control",
          [](const ExperimentState& s) { return s.control_data.size(); })
      .def_property_readonly("n_treat", [](const ExperimentState& s) {
        return s.treat_data.size();
      });

  m.def(
      "make_experiment",
      [](const std::string& id, const std::string& family,
         const std::string& penalty, const Eigen::VectorXd& beta0,
         double alpha, long max_horizon, long batch_size, bool self_stop,
         double gamma, double dispersion, const std::string& refit_rule) {
        ExperimentState st = make_experiment(
            id, family_from_name(family, dispersion),
            penalty_from_name(penalty, gamma, true), beta0, alpha, max_horizon,
            batch_size, self_stop);
        if (refit_rule == "bic")
          st.refit_rule = RefitRule::BicPath;
        else if (refit_rule != "paper")
          throw std::invalid_argument("refit_rule must be 'paper' or 'bic'");
        return st;
      },
      py::arg("id"), py::arg("family"), py::arg("penalty"), py::arg("beta0"),
      py::arg("alpha") = 0.05, py::arg("max_horizon") = 1000,
      py::arg("batch_size") = 100, py::arg("self_stop") = true,
      py::arg("gamma") = 0.0, py::arg("dispersion") = 1.0,
      py::arg("refit_rule") = "paper");
  m.def(
      "ingest_batch",
      [](ExperimentState& state, const Dataset& data, int sequence_number) {
        Batch batch;
        batch.observations = data.observations;
        batch.sequence_number = sequence_number;
        ingest_batch(state, batch);
      },
      py::arg("state"), py::arg("data"), py::arg("sequence_number"));
  m.def("current_p_value", &current_p_value, py::arg("state"));
  m.def("finalize_at_horizon", &finalize_at_horizon, py::arg("state"));
  m.def("checkpoint", &checkpoint, py::arg("state"));
  m.def("restore", &restore, py::arg("bytes"));

  // ---- multiple testing ----------------------------------------------
  const auto to_input = [](const std::vector<double>& ps, double alpha) {
    MultipleTestInput in;
    in.p_values = ps;
    in.alpha = alpha;
    return in;
  };
  m.def(
      "bonferroni",
      [to_input](const std::vector<double>& ps, double alpha) {
        return bonferroni(to_input(ps, alpha));
      },
      py::arg("p_values"), py::arg("alpha") = 0.05);
  m.def(
      "benjamini_hochberg",
      [to_input](const std::vector<double>& ps, double alpha) {
        return benjamini_hochberg(to_input(ps, alpha));
      },
      py::arg("p_values"), py::arg("alpha") = 0.05);
  m.def(
      "benjamini_yekutieli",
      [to_input](const std::vector<double>& ps, double alpha) {
        return benjamini_yekutieli(to_input(ps, alpha));
      },
      py::arg("p_values"), py::arg("alpha") = 0.05);
  m.def(
      "run_multiple_post",
      [](const std::vector<ExperimentState>& experiments, double alpha,
         const std::string& procedure) {
        MtProcedure proc = MtProcedure::BY;
        if (procedure == "bc")
          proc = MtProcedure::BC;
        else if (procedure == "bh")
          proc = MtProcedure::BH;
        else if (procedure != "by")
          throw std::invalid_argument("procedure must be bc, bh or by");
        return run_multiple_post(experiments, alpha, proc);
      },
      py::arg("experiments"), py::arg("alpha") = 0.05,
      py::arg("procedure") = "by");

  // ---- simulation ------------------------------------------------------
  py::class_<MeanStd>(m, "MeanStd")
      .def_readonly("mean", &MeanStd::mean)
      .def_readonly("std", &MeanStd::std)
      .def_readonly("n", &MeanStd::n);

  py::class_<StudyMetrics>(m, "StudyMetrics")
      .def_readonly("rejection_rate", &StudyMetrics::rejection_rate)
      .def_readonly("coverage_ratio", &StudyMetrics::coverage_ratio)
      .def_readonly("filter_ratio", &StudyMetrics::filter_ratio)
      .def_readonly("fdr", &StudyMetrics::fdr)
      .def_readonly("tpr", &StudyMetrics::tpr)
      .def_readonly("has_fdr", &StudyMetrics::has_fdr)
      .def_readonly("has_tpr", &StudyMetrics::has_tpr)
      .def_readonly("stopping_time_median",
                    &StudyMetrics::stopping_time_median)
      .def_readonly("stopping_time_p90", &StudyMetrics::stopping_time_p90)
      .def_readonly("replications_done", &StudyMetrics::replications_done)
      .def_readonly("replications_failed",
                    &StudyMetrics::replications_failed);

  py::class_<SingleStudyResult>(m, "SingleStudyResult")
      .def_readonly("metrics", &SingleStudyResult::metrics)
      .def_readonly("rejected", &SingleStudyResult::rejected)
      .def_readonly("stopping_time", &SingleStudyResult::stopping_time);

  py::class_<MultipleStudyResult>(m, "MultipleStudyResult")
      .def_readonly("metrics", &MultipleStudyResult::metrics)
      .def_readonly("fdr_by_batch", &MultipleStudyResult::fdr_by_batch)
      .def_readonly("tpr_by_batch", &MultipleStudyResult::tpr_by_batch);

  const auto build_config =
      [](const std::string& link, const std::string& setting,
         const std::string& method, double b, int p, long batch_n,
         long horizon, int replications, double alpha, std::uint64_t seed,
         int threads) {
        SimulationConfig cfg;
        cfg.family = family_from_name(link, 1.0);
        cfg.covariate_setting =
            setting == "mvn" ? CovariateSetting::MVN : CovariateSetting::NU;
        if (method == "mcp")
          cfg.method = Method::PostMcp;
        else if (method == "scad")
          cfg.method = Method::PostScad;
        else if (method == "adalasso")
          cfg.method = Method::PostAdaLasso;
        else if (method == "mle" || method == "sst")
          cfg.method = Method::SstMle;
        else
          throw std::invalid_argument("unknown method '" + method + "'");
        cfg.b = b;
        cfg.p = p;
        cfg.batch_n = batch_n;
        cfg.horizon_N = horizon;
        cfg.replications = replications;
        cfg.alpha = alpha;
        cfg.seed = seed;
        cfg.threads = threads;
        return cfg;
      };
  m.def(
      "run_single_study",
      [build_config](const std::string& link, const std::string& setting,
                     const std::string& method, double b, int p, long batch_n,
                     long horizon, int replications, double alpha,
                     std::uint64_t seed, int threads) {
        return run_single_study(build_config(link, setting, method, b, p,
                                             batch_n, horizon, replications,
                                             alpha, seed, threads));
      },
      py::arg("link") = "identity", py::arg("setting") = "nu",
      py::arg("method") = "adalasso", py::arg("b") = 0.0, py::arg("p") = 30,
      py::arg("batch_n") = 100, py::arg("horizon") = 1000,
      py::arg("replications") = 100, py::arg("alpha") = 0.05,
      py::arg("seed") = 1, py::arg("threads") = 0);
  m.def(
      "run_multiple_study",
      [build_config](const std::string& link, const std::string& setting,
                     const std::string& method, int m_hypotheses,
                     int null_count, int p, long batch_n, long horizon,
                     int replications, double alpha, std::uint64_t seed,
                     int threads, const std::string& procedure) {
        MtProcedure proc = MtProcedure::BY;
        if (procedure == "bc")
          proc = MtProcedure::BC;
        else if (procedure == "bh")
          proc = MtProcedure::BH;
        return run_multiple_study(
            build_config(link, setting, method, 0.0, p, batch_n, horizon,
                         replications, alpha, seed, threads),
            m_hypotheses, null_count, {}, proc);
      },
      py::arg("link") = "identity", py::arg("setting") = "nu",
      py::arg("method") = "adalasso", py::arg("m") = 32,
      py::arg("null_count") = 24, py::arg("p") = 30, py::arg("batch_n") = 100,
      py::arg("horizon") = 1000, py::arg("replications") = 100,
      py::arg("alpha") = 0.05, py::arg("seed") = 1, py::arg("threads") = 0,
      py::arg("procedure") = "by");
  m.def(
      "gen_covariates",
      [](const std::string& setting, long n, int p, std::uint64_t seed) {
        Rng rng(seed);
        return gen_covariates(
            setting == "mvn" ? CovariateSetting::MVN : CovariateSetting::NU,
            n, p, rng);
      },
      py::arg("setting"), py::arg("n"), py::arg("p"), py::arg("seed"));

  m.attr("__version__") = "0.1.0";
}
