#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "post/io.hpp"

namespace fs = std::filesystem;
using namespace post;

namespace {

// Stable exit-code contract (documented in the README).
constexpr int kExitReject = 0;           // decision reached: null rejected
constexpr int kExitAcceptAtHorizon = 10; // decision reached: accepted at horizon
constexpr int kExitStillRunning = 11;    // data exhausted before the horizon
constexpr int kExitUsage = 64;
constexpr int kExitData = 65;
constexpr int kExitNumerical = 70;

fs::path default_out_dir() {
  const char* env = std::getenv("POST_OUT_DIR");
  return env != nullptr && *env != '\0' ? fs::path(env) : fs::path(".");
}

ReportFormat parse_format(const std::string& name) {
  if (name == "csv" || name == "delimited") return ReportFormat::Delimited;
  if (name == "json" || name == "records")
    return ReportFormat::StructuredRecords;
  throw CLI::ValidationError("--format", "unknown report format " + name);
}

GlmFamily parse_link(const std::string& name, double dispersion) {
  if (name == "identity") return GlmFamily::gaussian(dispersion);
  if (name == "logit") return GlmFamily::bernoulli();
  if (name == "log") return GlmFamily::poisson();
  throw CLI::ValidationError("--link", "unknown link " + name);
}

PenaltyConfig parse_penalty(const std::string& name, double gamma,
                            bool exempt_intercept) {
  PenaltyConfig cfg;
  if (name == "adalasso") {
    cfg = PenaltyConfig::adalasso();
  } else if (name == "scad") {
    cfg = gamma > 0 ? PenaltyConfig::scad(gamma) : PenaltyConfig::scad();
  } else if (name == "mcp") {
    cfg = gamma > 0 ? PenaltyConfig::mcp(gamma) : PenaltyConfig::mcp();
  } else if (name == "none" || name == "mle") {
    cfg = PenaltyConfig::none();
  } else {
    throw CLI::ValidationError("--penalty", "unknown penalty " + name);
  }
  cfg.penalize_intercept = !exempt_intercept;
  return cfg;
}

Method parse_method(const std::string& name) {
  if (name == "mcp") return Method::PostMcp;
  if (name == "scad") return Method::PostScad;
  if (name == "adalasso") return Method::PostAdaLasso;
  if (name == "mle" || name == "sst") return Method::SstMle;
  throw CLI::ValidationError("--method", "unknown method " + name);
}

MtProcedure parse_procedure(const std::string& name) {
  if (name == "bc") return MtProcedure::BC;
  if (name == "bh") return MtProcedure::BH;
  if (name == "by") return MtProcedure::BY;
  throw CLI::ValidationError("--procedure", "unknown procedure " + name);
}

Eigen::VectorXd parse_beta0(const std::string& spec, int dim) {
  if (spec.empty() || spec == "zero") return Eigen::VectorXd::Zero(dim);
  std::vector<double> values;
  std::stringstream ss(spec);
  std::string cell;
  while (std::getline(ss, cell, ',')) values.push_back(std::stod(cell));
  if (static_cast<int>(values.size()) != dim)
    throw CLI::ValidationError(
        "--beta0", "expected " + std::to_string(dim) + " components");
  Eigen::VectorXd beta0(dim);
  for (size_t i = 0; i < values.size(); ++i)
    beta0(static_cast<Eigen::Index>(i)) = values[i];
  return beta0;
}

/// Streams one experiment directory through the sequential layer.
ExperimentState run_experiment_dir(const fs::path& dir,
                                   const fs::path& manifest_path,
                                   const std::string& id,
                                   const PenaltyConfig& penalty,
                                   const std::string& beta0_spec, double alpha,
                                   long horizon, bool self_stop,
                                   const std::string& resume) {
  const auto files = list_batch_files(dir);
  if (files.empty())
    throw std::invalid_argument("no batch files (*.csv) in " + dir.string());
  const Manifest manifest = load_manifest(manifest_path);

  ExperimentState state;
  if (!resume.empty()) {
    std::ifstream in(resume);
    if (!in) throw DataFormatError("cannot open checkpoint " + resume);
    std::stringstream buf;
    buf << in.rdbuf();
    state = restore(buf.str());
  } else {
    state = make_experiment(id, manifest.family, penalty,
                            parse_beta0(beta0_spec, manifest.p + 1), alpha,
                            horizon, 0);
    state.self_stop = self_stop;
  }

  int seq = state.last_sequence;
  for (size_t i = static_cast<size_t>(seq); i < files.size(); ++i) {
    if (state.status != ExperimentStatus::Running) break;
    Batch batch = load_batch_file(files[i], manifest, ++seq);
    ingest_batch(state, batch);
  }
  return state;
}

int status_exit_code(const ExperimentState& state) {
  switch (state.status) {
    case ExperimentStatus::Rejected: return kExitReject;
    case ExperimentStatus::AcceptedAtHorizon: return kExitAcceptAtHorizon;
    case ExperimentStatus::Running: return kExitStillRunning;
  }
  return kExitNumerical;
}

std::string link_name(const GlmFamily& family) {
  switch (family.kind) {
    case FamilyKind::GaussianIdentity: return "identity";
    case FamilyKind::BernoulliLogit: return "logit";
    case FamilyKind::PoissonLog: return "log";
  }
  return "?";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "post - penalized online sequential testing for heterogeneous "
      "treatment effects in GLMs"};
  app.require_subcommand(1);

  // ---- test-run ------------------------------------------------------
  auto* run = app.add_subcommand(
      "test-run", "Run one sequential experiment over a batch directory");
  std::string run_input, run_manifest, run_out, run_format = "csv";
  std::string run_penalty = "adalasso", run_beta0 = "zero", run_id = "exp1";
  std::string run_checkpoint_out, run_resume;
  double run_alpha = 0.05, run_gamma = 0.0;
  long run_horizon = 1000;
  bool run_exempt_intercept = false;
  run->add_option("--input", run_input, "Directory of batch files")
      ->required();
  run->add_option("--manifest", run_manifest,
                  "Manifest path (default <input>/manifest.json)");
  run->add_option("--out", run_out, "Output directory (default $POST_OUT_DIR)");
  run->add_option("--format", run_format, "Report format: csv|json");
  run->add_option("--penalty", run_penalty,
                  "Penalty: adalasso|scad|mcp|none");
  run->add_option("--gamma", run_gamma, "Concavity for scad/mcp");
  run->add_flag("--exempt-intercept", run_exempt_intercept,
                "Do not penalize the intercept");
  run->add_option("--beta0", run_beta0,
                  "Null HTE vector: 'zero' or comma-separated values");
  run->add_option("--alpha", run_alpha, "Significance level");
  run->add_option("--horizon", run_horizon, "Per-arm sample-size cap N");
  run->add_option("--id", run_id, "Experiment identifier");
  run->add_option("--checkpoint-out", run_checkpoint_out,
                  "Write the final state to this checkpoint file");
  run->add_option("--resume", run_resume, "Resume from a checkpoint file");

  // ---- test-multi ----------------------------------------------------
  auto* multi = app.add_subcommand(
      "test-multi",
      "Run m experiments over batch directories and apply a multiplicity "
      "procedure");
  std::vector<std::string> multi_inputs;
  std::string multi_out, multi_format = "csv", multi_procedure = "by";
  std::string multi_penalty = "adalasso", multi_beta0 = "zero";
  double multi_alpha = 0.05, multi_gamma = 0.0;
  long multi_horizon = 1000;
  bool multi_exempt_intercept = false;
  multi->add_option("--inputs", multi_inputs,
                    "Experiment directories (each with manifest.json)")
      ->required()
      ->expected(-1);
  multi->add_option("--out", multi_out, "Output directory");
  multi->add_option("--format", multi_format, "Report format: csv|json");
  multi->add_option("--procedure", multi_procedure, "bc|bh|by");
  multi->add_option("--penalty", multi_penalty, "adalasso|scad|mcp|none");
  multi->add_option("--gamma", multi_gamma, "Concavity for scad/mcp");
  multi->add_flag("--exempt-intercept", multi_exempt_intercept,
                  "Do not penalize the intercept");
  multi->add_option("--beta0", multi_beta0, "Null HTE vector");
  multi->add_option("--alpha", multi_alpha, "Significance level");
  multi->add_option("--horizon", multi_horizon, "Per-arm sample-size cap N");

  // ---- simulate ------------------------------------------------------
  auto* sim = app.add_subcommand("simulate", "Run a simulation study");
  std::string sim_design = "single", sim_method = "adalasso";
  std::string sim_link = "identity", sim_setting = "nu", sim_out;
  std::string sim_format = "csv", sim_procedure = "by";
  double sim_b = 0.0, sim_alpha = 0.05, sim_dispersion = 1.0;
  long sim_batch_n = 100, sim_horizon = 1000;
  int sim_reps = 100, sim_threads = 0, sim_m = 32, sim_nulls = 24, sim_p = 30;
  std::uint64_t sim_seed = 1;
  bool sim_traj = false;
  sim->add_option("--design", sim_design,
                  "single|multiple|table2|table3|table4|table5");
  sim->add_option("--method", sim_method, "mcp|scad|adalasso|mle");
  sim->add_option("--link", sim_link, "identity|logit|log");
  sim->add_option("--setting", sim_setting, "nu|mvn");
  sim->add_option("--b", sim_b, "Effect size (single designs)");
  sim->add_option("--p", sim_p, "Number of covariates");
  sim->add_option("--reps", sim_reps, "Replications");
  sim->add_option("--seed", sim_seed, "Master seed");
  sim->add_option("--alpha", sim_alpha, "Significance level");
  sim->add_option("--batch-n", sim_batch_n, "Per-arm batch size n");
  sim->add_option("--horizon", sim_horizon, "Per-arm horizon N");
  sim->add_option("--threads", sim_threads, "Worker threads (0 = auto)");
  sim->add_option("--m", sim_m, "Hypotheses per replication (multiple)");
  sim->add_option("--null-count", sim_nulls, "True nulls (multiple)");
  sim->add_option("--procedure", sim_procedure, "bc|bh|by (multiple)");
  sim->add_option("--dispersion", sim_dispersion, "Gaussian dispersion");
  sim->add_option("--out", sim_out, "Output directory");
  sim->add_option("--format", sim_format, "Report format: csv|json");
  sim->add_flag("--trajectories", sim_traj,
                "Also write per-batch trajectory files");

  // ---- gen-data ------------------------------------------------------
  auto* gen = app.add_subcommand(
      "gen-data", "Emit manifest plus batch files from the study design");
  std::string gen_link = "identity", gen_setting = "nu", gen_out;
  double gen_b = 0.0, gen_dispersion = 1.0;
  long gen_batch_n = 100;
  int gen_batches = 10, gen_p = 30;
  std::uint64_t gen_seed = 1;
  gen->add_option("--link", gen_link, "identity|logit|log");
  gen->add_option("--setting", gen_setting, "nu|mvn");
  gen->add_option("--b", gen_b, "Effect size");
  gen->add_option("--p", gen_p, "Number of covariates");
  gen->add_option("--batch-n", gen_batch_n, "Per-arm batch size");
  gen->add_option("--batches", gen_batches, "Number of batch files");
  gen->add_option("--seed", gen_seed, "Seed");
  gen->add_option("--out", gen_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (run->parsed()) {
      const fs::path input(run_input);
      const fs::path manifest_path =
          run_manifest.empty() ? input / "manifest.json"
                               : fs::path(run_manifest);
      const fs::path out_dir =
          run_out.empty() ? default_out_dir() : fs::path(run_out);
      fs::create_directories(out_dir);
      const ReportFormat format = parse_format(run_format);
      const PenaltyConfig penalty =
          parse_penalty(run_penalty, run_gamma, run_exempt_intercept);
      ExperimentState state = run_experiment_dir(
          input, manifest_path, run_id, penalty, run_beta0, run_alpha,
          run_horizon, /*self_stop=*/true, run_resume);
      const std::string ext = format == ReportFormat::Delimited ? ".csv"
                                                                : ".json";
      write_trajectory(state, out_dir / (run_id + "_trajectory" + ext),
                       format);
      write_decision(state, out_dir / (run_id + "_decision" + ext), format);
      if (!run_checkpoint_out.empty()) {
        std::ofstream cp(run_checkpoint_out);
        if (!cp)
          throw DataFormatError("cannot write checkpoint " +
                                run_checkpoint_out);
        cp << checkpoint(state);
      }
      std::cout << run_id << ": " << status_string(state.status);
      if (!state.stat_history.empty())
        std::cout << " (p = " << current_p_value(state) << ")";
      std::cout << "\n";
      return status_exit_code(state);
    }

    if (multi->parsed()) {
      const fs::path out_dir =
          multi_out.empty() ? default_out_dir() : fs::path(multi_out);
      fs::create_directories(out_dir);
      const ReportFormat format = parse_format(multi_format);
      const PenaltyConfig penalty =
          parse_penalty(multi_penalty, multi_gamma, multi_exempt_intercept);
      const MtProcedure proc = parse_procedure(multi_procedure);

      std::vector<ExperimentState> experiments;
      for (size_t i = 0; i < multi_inputs.size(); ++i) {
        const fs::path dir(multi_inputs[i]);
        experiments.push_back(run_experiment_dir(
            dir, dir / "manifest.json", dir.filename().string(), penalty,
            multi_beta0, multi_alpha, multi_horizon, /*self_stop=*/false,
            ""));
      }
      // A common schedule is required; run_multiple_post enforces it.
      const std::vector<int> decisions =
          run_multiple_post(experiments, multi_alpha, proc);

      const fs::path out_path =
          out_dir / (format == ReportFormat::Delimited ? "decisions.csv"
                                                       : "decisions.json");
      std::ofstream out(out_path);
      out.precision(17);
      if (format == ReportFormat::Delimited) {
        out << "experiment_id,p_value,decision,status\n";
        for (size_t i = 0; i < experiments.size(); ++i) {
          const auto& e = experiments[i];
          out << e.experiment_id << ','
              << (e.stat_history.empty() ? 1.0 : e.running_min_p) << ','
              << decisions[i] << ',' << status_string(e.status) << "\n";
        }
      } else {
        nlohmann::json arr = nlohmann::json::array();
        for (size_t i = 0; i < experiments.size(); ++i) {
          const auto& e = experiments[i];
          arr.push_back(
              {{"experiment_id", e.experiment_id},
               {"p_value", e.stat_history.empty() ? 1.0 : e.running_min_p},
               {"decision", decisions[i]},
               {"status", status_string(e.status)}});
        }
        out << nlohmann::json{{"format", "post-decisions"},
                              {"version", 1},
                              {"rows", arr}}
                   .dump(2)
            << "\n";
      }
      for (int d : decisions)
        if (d == 1) return kExitReject;
      return kExitAcceptAtHorizon;
    }

    if (sim->parsed()) {
      const fs::path out_dir =
          sim_out.empty() ? default_out_dir() : fs::path(sim_out);
      fs::create_directories(out_dir);
      const ReportFormat format = parse_format(sim_format);

      SimulationConfig cfg;
      cfg.family = parse_link(sim_link, sim_dispersion);
      cfg.covariate_setting = sim_setting == "mvn" ? CovariateSetting::MVN
                                                   : CovariateSetting::NU;
      cfg.method = parse_method(sim_method);
      cfg.b = sim_b;
      cfg.p = sim_p;
      cfg.batch_n = sim_batch_n;
      cfg.horizon_N = sim_horizon;
      cfg.replications = sim_reps;
      cfg.alpha = sim_alpha;
      cfg.seed = sim_seed;
      cfg.threads = sim_threads;
      cfg.collect_trajectories = sim_traj;

      const bool multiple =
          sim_design == "multiple" || sim_design == "table5";
      std::vector<StudyReportRow> rows;
      if (multiple) {
        const MultipleStudyResult res = run_multiple_study(
            cfg, sim_m, sim_nulls, {}, parse_procedure(sim_procedure));
        StudyReportRow row;
        row.design = sim_design;
        row.method = method_name(cfg.method);
        row.link = link_name(cfg.family);
        row.setting = sim_setting;
        row.b = 0.0;
        row.metrics = res.metrics;
        rows.push_back(row);
        if (sim_traj)
          write_multiple_trajectory(
              res,
              out_dir / (format == ReportFormat::Delimited
                             ? "fdr_tpr_by_batch.csv"
                             : "fdr_tpr_by_batch.json"),
              format);
      } else {
        if (sim_design == "table2" || sim_design == "table3") cfg.b = 0.0;
        const SingleStudyResult res = run_single_study(cfg);
        StudyReportRow row;
        row.design = sim_design;
        row.method = method_name(cfg.method);
        row.link = link_name(cfg.family);
        row.setting = sim_setting;
        row.b = cfg.b;
        row.metrics = res.metrics;
        rows.push_back(row);
        if (sim_traj) {
          for (size_t rr = 0; rr < res.trajectories.size(); ++rr) {
            ExperimentState tmp;
            tmp.experiment_id = "rep" + std::to_string(rr);
            tmp.stat_history = res.trajectories[rr];
            tmp.status = res.rejected[rr] == 1
                             ? ExperimentStatus::Rejected
                             : ExperimentStatus::AcceptedAtHorizon;
            write_trajectory(tmp,
                             out_dir / ("rep" + std::to_string(rr) +
                                        "_trajectory" +
                                        (format == ReportFormat::Delimited
                                             ? ".csv"
                                             : ".json")),
                             format);
          }
        }
      }
      const fs::path report =
          out_dir / (format == ReportFormat::Delimited ? "study_report.csv"
                                                       : "study_report.json");
      write_study_report(rows, report, format);
      std::cout << "report written to " << report.string() << "\n";
      return 0;
    }

    if (gen->parsed()) {
      const fs::path out_dir(gen_out);
      fs::create_directories(out_dir);
      SimulationConfig cfg;
      cfg.family = parse_link(gen_link, gen_dispersion);
      cfg.covariate_setting = gen_setting == "mvn" ? CovariateSetting::MVN
                                                   : CovariateSetting::NU;
      cfg.b = gen_b;
      cfg.p = gen_p;
      cfg.batch_n = gen_batch_n;
      cfg.horizon_N = gen_batch_n * gen_batches;
      const Manifest manifest = Manifest::make(cfg.family, cfg.p);
      save_manifest(manifest, out_dir / "manifest.json");
      Rng rng(split_seed(gen_seed, 0));
      const Eigen::VectorXd theta0 = default_theta0(cfg.p);
      Eigen::VectorXd beta = Eigen::VectorXd::Zero(cfg.p + 1);
      beta(1) = cfg.b;
      beta(4) = cfg.b;
      for (int k = 1; k <= gen_batches; ++k) {
        const Eigen::MatrixXd X =
            gen_covariates(cfg.covariate_setting, 2 * cfg.batch_n, cfg.p, rng);
        std::vector<int> arm(static_cast<size_t>(2 * cfg.batch_n));
        for (auto& a : arm) a = rng.bernoulli(0.5);
        const Eigen::VectorXd y =
            gen_response(cfg.family, theta0, beta, X, arm, rng);
        Batch batch;
        batch.sequence_number = k;
        for (long i = 0; i < X.rows(); ++i) {
          Observation obs;
          obs.y = y(i);
          obs.x = X.row(i).transpose();
          obs.arm = arm[static_cast<size_t>(i)];
          batch.observations.push_back(std::move(obs));
        }
        char name[32];
        std::snprintf(name, sizeof(name), "batch_%04d.csv", k);
        save_batch_file(batch, manifest, out_dir / name);
      }
      std::cout << "wrote " << gen_batches << " batches to "
                << out_dir.string() << "\n";
      return 0;
    }
  } catch (const DataFormatError& e) {
    std::cerr << "data error: " << e.what();
    if (!e.file.empty()) {
      std::cerr << " [" << e.file;
      if (e.line >= 0) std::cerr << ":" << e.line;
      if (e.column >= 0) std::cerr << ":" << e.column;
      std::cerr << "]";
    }
    std::cerr << "\n";
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const PostError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitUsage;
}
