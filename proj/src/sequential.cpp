#include "post/sequential.hpp"

#include <cmath>

#include "json.hpp"

namespace post {

namespace {

using nlohmann::json;

constexpr int kCheckpointVersion = 1;
constexpr const char* kCheckpointFormat = "post-checkpoint";

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Eigen::VectorXd vector_from_json(const json& a) {
  Eigen::VectorXd v(a.size());
  for (size_t i = 0; i < a.size(); ++i)
    v(static_cast<Eigen::Index>(i)) = a[i].get<double>();
  return v;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& rows) {
  const auto nr = rows.size();
  const auto nc = nr == 0 ? 0 : rows[0].size();
  Eigen::MatrixXd m(nr, nc);
  for (size_t r = 0; r < nr; ++r)
    for (size_t c = 0; c < nc; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          rows[r][c].get<double>();
  return m;
}

std::string family_kind_name(FamilyKind kind) {
  switch (kind) {
    case FamilyKind::GaussianIdentity: return "gaussian";
    case FamilyKind::BernoulliLogit: return "bernoulli";
    case FamilyKind::PoissonLog: return "poisson";
  }
  throw std::logic_error("unknown family kind");
}

FamilyKind family_kind_from_name(const std::string& name) {
  if (name == "gaussian") return FamilyKind::GaussianIdentity;
  if (name == "bernoulli") return FamilyKind::BernoulliLogit;
  if (name == "poisson") return FamilyKind::PoissonLog;
  throw DataFormatError("unknown family kind '" + name + "'");
}

std::string penalty_kind_name(PenaltyKind kind) {
  switch (kind) {
    case PenaltyKind::AdaLasso: return "adalasso";
    case PenaltyKind::Scad: return "scad";
    case PenaltyKind::Mcp: return "mcp";
    case PenaltyKind::None: return "none";
  }
  throw std::logic_error("unknown penalty kind");
}

PenaltyKind penalty_kind_from_name(const std::string& name) {
  if (name == "adalasso") return PenaltyKind::AdaLasso;
  if (name == "scad") return PenaltyKind::Scad;
  if (name == "mcp") return PenaltyKind::Mcp;
  if (name == "none") return PenaltyKind::None;
  throw DataFormatError("unknown penalty kind '" + name + "'");
}

json observations_to_json(const std::vector<Observation>& data) {
  json arr = json::array();
  for (const Observation& obs : data) {
    arr.push_back(
        json{{"y", obs.y}, {"a", obs.arm}, {"x", vector_to_json(obs.x)}});
  }
  return arr;
}

std::vector<Observation> observations_from_json(const json& arr) {
  std::vector<Observation> data;
  data.reserve(arr.size());
  for (const auto& o : arr) {
    Observation obs;
    obs.y = o.at("y").get<double>();
    obs.arm = o.at("a").get<int>();
    obs.x = vector_from_json(o.at("x"));
    data.push_back(std::move(obs));
  }
  return data;
}

std::string status_name(ExperimentStatus s) {
  switch (s) {
    case ExperimentStatus::Running: return "running";
    case ExperimentStatus::Rejected: return "rejected";
    case ExperimentStatus::AcceptedAtHorizon: return "accepted_at_horizon";
  }
  throw std::logic_error("unknown status");
}

ExperimentStatus status_from_name(const std::string& name) {
  if (name == "running") return ExperimentStatus::Running;
  if (name == "rejected") return ExperimentStatus::Rejected;
  if (name == "accepted_at_horizon") return ExperimentStatus::AcceptedAtHorizon;
  throw DataFormatError("unknown experiment status '" + name + "'");
}

FittedModel refit_control(const ExperimentState& state) {
  ObservationSpan control(state.control_data);
  if (state.penalty.kind == PenaltyKind::None)
    return fit_mle(control, state.family);
  if (state.refit_rule == RefitRule::BicPath)
    return select_lambda(control, state.family, state.penalty).second;
  const double lam = 1.0 / static_cast<double>(state.control_data.size());
  return fit_penalized_warm(control, state.family, state.penalty, lam);
}

}  // namespace

ExperimentState make_experiment(std::string id, const GlmFamily& family,
                                const PenaltyConfig& penalty,
                                Eigen::VectorXd beta0, double alpha,
                                long max_horizon, long batch_size_nominal,
                                bool self_stop, std::uint64_t rng_seed) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("make_experiment: alpha must lie in (0,1)");
  if (beta0.size() < 1)
    throw std::invalid_argument("make_experiment: empty beta0");
  if (max_horizon < 1)
    throw std::invalid_argument("make_experiment: max_horizon must be >= 1");
  penalty.validate();
  ExperimentState st;
  st.experiment_id = std::move(id);
  st.family = family;
  st.penalty = penalty;
  st.beta0 = std::move(beta0);
  st.alpha = alpha;
  st.max_horizon = max_horizon;
  st.batch_size_nominal = batch_size_nominal;
  st.self_stop = self_stop;
  st.rng_seed = rng_seed;
  return st;
}

void ingest_batch(ExperimentState& state, const Batch& batch) {
  if (state.status != ExperimentStatus::Running)
    throw SequentialError("ingest_batch: experiment '" + state.experiment_id +
                          "' already reached a terminal decision");
  if (batch.sequence_number != state.last_sequence + 1)
    throw SequentialError(
        "ingest_batch: out-of-order batch " +
        std::to_string(batch.sequence_number) + " (expected " +
        std::to_string(state.last_sequence + 1) + ")");
  if (batch.observations.empty())
    throw std::invalid_argument("ingest_batch: empty batch");

  const auto dim = state.beta0.size();
  for (const Observation& obs : batch.observations) {
    if (obs.x.size() != dim)
      throw std::invalid_argument("ingest_batch: covariate length mismatch");
    if (obs.x(0) != 1.0)
      throw std::invalid_argument("ingest_batch: x[0] must be 1");
    if (obs.arm != 0 && obs.arm != 1)
      throw std::invalid_argument("ingest_batch: arm must be 0 or 1");
    validate_response(state.family, obs.y);
  }
  for (const Observation& obs : batch.observations) {
    (obs.arm == 1 ? state.treat_data : state.control_data).push_back(obs);
  }
  state.last_sequence = batch.sequence_number;

  const long n_control = static_cast<long>(state.control_data.size());
  const long n_treat = static_cast<long>(state.treat_data.size());
  const long gate = dim + 1;  // p + 2 observations per arm

  if (n_control >= gate && n_treat >= gate) {
    bool fitted = false;
    FittedModel model;
    try {
      model = refit_control(state);
      fitted = true;
    } catch (const PostError&) {
      // Degenerate accumulation (separation, rank deficiency, divergence):
      // keep collecting data and try again next batch.
      state.skipped_fits++;
    }
    if (fitted) {
      const ScoreComponents comp =
          build_score_components(model.theta_hat, state.beta0,
                                 state.treat_data, state.family,
                                 model.sigma_hat);
      const TestResult res = test_statistic(comp, state.beta0);
      state.last_fit = std::move(model);
      StatRecord rec;
      rec.sequence_number = batch.sequence_number;
      rec.n_control = n_control;
      rec.n_treat = n_treat;
      rec.lambda_stat = res.lambda_stat;
      rec.p_pointwise = res.p_value_pointwise;
      state.running_min_p = std::min(state.running_min_p,
                                     res.p_value_pointwise);
      rec.p_running_min = state.running_min_p;
      rec.regularized = res.regularized;
      state.stat_history.push_back(rec);

      if (state.self_stop && state.running_min_p <= state.alpha) {
        state.status = ExperimentStatus::Rejected;
        state.rejected_at = n_treat;
        return;
      }
    }
  }
  if (std::min(n_control, n_treat) >= state.max_horizon)
    state.status = ExperimentStatus::AcceptedAtHorizon;
}

double current_p_value(const ExperimentState& state) {
  if (state.stat_history.empty())
    throw SequentialError(
        "current_p_value: no statistic has been computed yet");
  return state.running_min_p;
}

void finalize_at_horizon(ExperimentState& state) {
  if (state.status == ExperimentStatus::Running)
    state.status = ExperimentStatus::AcceptedAtHorizon;
}

std::string checkpoint(const ExperimentState& state) {
  json payload;
  payload["experiment_id"] = state.experiment_id;
  payload["family"] = {{"kind", family_kind_name(state.family.kind)},
                       {"dispersion", state.family.dispersion}};
  json pen{{"kind", penalty_kind_name(state.penalty.kind)},
           {"gamma", state.penalty.gamma},
           {"penalize_intercept", state.penalty.penalize_intercept}};
  pen["weights"] = state.penalty.weights
                       ? vector_to_json(*state.penalty.weights)
                       : json(nullptr);
  payload["penalty"] = std::move(pen);
  payload["beta0"] = vector_to_json(state.beta0);
  payload["alpha"] = state.alpha;
  payload["max_horizon"] = state.max_horizon;
  payload["batch_size_nominal"] = state.batch_size_nominal;
  payload["self_stop"] = state.self_stop;
  payload["rng_seed"] = state.rng_seed;
  payload["control_data"] = observations_to_json(state.control_data);
  payload["treat_data"] = observations_to_json(state.treat_data);
  json hist = json::array();
  for (const StatRecord& r : state.stat_history) {
    hist.push_back(json{{"seq", r.sequence_number},
                        {"n_control", r.n_control},
                        {"n_treat", r.n_treat},
                        {"lambda", r.lambda_stat},
                        {"p", r.p_pointwise},
                        {"p_min", r.p_running_min},
                        {"regularized", r.regularized}});
  }
  payload["stat_history"] = std::move(hist);
  payload["running_min_p"] = state.running_min_p;
  payload["status"] = status_name(state.status);
  payload["rejected_at"] = state.rejected_at;
  payload["last_sequence"] = state.last_sequence;
  payload["skipped_fits"] = state.skipped_fits;
  if (state.last_fit) {
    const FittedModel& m = *state.last_fit;
    payload["last_fit"] = json{{"theta_hat", vector_to_json(m.theta_hat)},
                               {"active_set", m.active_set},
                               {"lambda", m.lambda},
                               {"sigma_hat", matrix_to_json(m.sigma_hat)},
                               {"converged", m.converged},
                               {"iterations", m.iterations}};
  } else {
    payload["last_fit"] = nullptr;
  }

  const std::string body = payload.dump();
  json envelope;
  envelope["format"] = kCheckpointFormat;
  envelope["version"] = kCheckpointVersion;
  envelope["checksum"] = fnv1a64(body);
  envelope["payload"] = std::move(payload);
  return envelope.dump(2);
}

ExperimentState restore(const std::string& bytes) {
  json envelope;
  try {
    envelope = json::parse(bytes);
  } catch (const json::exception& e) {
    throw DataFormatError(std::string("restore: malformed checkpoint (") +
                          e.what() + ")");
  }
  try {
    if (envelope.at("format").get<std::string>() != kCheckpointFormat)
      throw DataFormatError("restore: not a checkpoint file");
    if (envelope.at("version").get<int>() != kCheckpointVersion)
      throw DataFormatError(
          "restore: unsupported checkpoint version " +
          std::to_string(envelope.at("version").get<int>()));
    const json& payload = envelope.at("payload");
    if (envelope.at("checksum").get<std::uint64_t>() !=
        fnv1a64(payload.dump()))
      throw DataFormatError("restore: checksum mismatch, file corrupted");

    ExperimentState st;
    st.experiment_id = payload.at("experiment_id").get<std::string>();
    st.family.kind =
        family_kind_from_name(payload.at("family").at("kind"));
    st.family.dispersion = payload.at("family").at("dispersion").get<double>();
    const json& pen = payload.at("penalty");
    st.penalty.kind = penalty_kind_from_name(pen.at("kind"));
    st.penalty.gamma = pen.at("gamma").get<double>();
    st.penalty.penalize_intercept = pen.at("penalize_intercept").get<bool>();
    if (!pen.at("weights").is_null())
      st.penalty.weights = vector_from_json(pen.at("weights"));
    st.beta0 = vector_from_json(payload.at("beta0"));
    st.alpha = payload.at("alpha").get<double>();
    st.max_horizon = payload.at("max_horizon").get<long>();
    st.batch_size_nominal = payload.at("batch_size_nominal").get<long>();
    st.self_stop = payload.at("self_stop").get<bool>();
    st.rng_seed = payload.at("rng_seed").get<std::uint64_t>();
    st.control_data = observations_from_json(payload.at("control_data"));
    st.treat_data = observations_from_json(payload.at("treat_data"));
    for (const auto& r : payload.at("stat_history")) {
      StatRecord rec;
      rec.sequence_number = r.at("seq").get<int>();
      rec.n_control = r.at("n_control").get<long>();
      rec.n_treat = r.at("n_treat").get<long>();
      rec.lambda_stat = r.at("lambda").get<double>();
      rec.p_pointwise = r.at("p").get<double>();
      rec.p_running_min = r.at("p_min").get<double>();
      rec.regularized = r.at("regularized").get<bool>();
      st.stat_history.push_back(rec);
    }
    st.running_min_p = payload.at("running_min_p").get<double>();
    st.status = status_from_name(payload.at("status"));
    st.rejected_at = payload.at("rejected_at").get<long>();
    st.last_sequence = payload.at("last_sequence").get<int>();
    st.skipped_fits = payload.at("skipped_fits").get<long>();
    if (!payload.at("last_fit").is_null()) {
      const json& mf = payload.at("last_fit");
      FittedModel m;
      m.theta_hat = vector_from_json(mf.at("theta_hat"));
      m.active_set = mf.at("active_set").get<std::vector<int>>();
      m.lambda = mf.at("lambda").get<double>();
      m.sigma_hat = matrix_from_json(mf.at("sigma_hat"));
      m.converged = mf.at("converged").get<bool>();
      m.iterations = mf.at("iterations").get<int>();
      m.family = st.family;
      m.penalty = st.penalty;
      st.last_fit = std::move(m);
    }
    return st;
  } catch (const json::exception& e) {
    throw DataFormatError(std::string("restore: invalid checkpoint field (") +
                          e.what() + ")");
  }
}

}  // namespace post
