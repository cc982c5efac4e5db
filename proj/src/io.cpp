#include "post/io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace post {

namespace {

using nlohmann::json;

std::string family_name(const GlmFamily& family) {
  switch (family.kind) {
    case FamilyKind::GaussianIdentity: return "gaussian";
    case FamilyKind::BernoulliLogit: return "bernoulli";
    case FamilyKind::PoissonLog: return "poisson";
  }
  throw std::logic_error("unknown family");
}

GlmFamily family_from(const std::string& name, double dispersion) {
  if (name == "gaussian") return GlmFamily::gaussian(dispersion);
  if (name == "bernoulli") return GlmFamily::bernoulli();
  if (name == "poisson") return GlmFamily::poisson();
  throw DataFormatError("manifest: unknown family '" + name + "'");
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

double parse_number(const std::string& cell, const std::string& file,
                    long line, long column) {
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
  while (end > begin && (*(end - 1) == ' ' || *(end - 1) == '\t' ||
                         *(end - 1) == '\r'))
    --end;
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end)
    throw DataFormatError("non-numeric cell '" + cell + "'", file, line,
                          column);
  return value;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out)
    throw DataFormatError("cannot open output file " + path.string());
  return out;
}

}  // namespace

std::string status_string(ExperimentStatus status) {
  switch (status) {
    case ExperimentStatus::Running: return "running";
    case ExperimentStatus::Rejected: return "rejected";
    case ExperimentStatus::AcceptedAtHorizon: return "accepted_at_horizon";
  }
  return "?";
}

Manifest Manifest::make(const GlmFamily& family, int p) {
  Manifest m;
  m.family = family;
  m.p = p;
  m.columns = {"y", "a"};
  for (int j = 1; j <= p; ++j) m.columns.push_back("x" + std::to_string(j));
  return m;
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in)
    throw DataFormatError("cannot open manifest " + path.string(),
                          path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw DataFormatError(
        std::string("manifest: malformed JSON (") + e.what() + ")",
        path.string());
  }
  try {
    if (doc.at("format").get<std::string>() != "post-batch-manifest")
      throw DataFormatError("manifest: wrong format tag", path.string());
    if (doc.at("version").get<int>() != 1)
      throw DataFormatError("manifest: unsupported version", path.string());
    Manifest m;
    m.family = family_from(doc.at("family").get<std::string>(),
                           doc.value("dispersion", 1.0));
    m.p = doc.at("p").get<int>();
    m.columns = doc.at("columns").get<std::vector<std::string>>();
    const Manifest expected = Manifest::make(m.family, m.p);
    if (m.columns != expected.columns)
      throw DataFormatError("manifest: column list must be y,a,x1..xp",
                            path.string());
    return m;
  } catch (const json::exception& e) {
    throw DataFormatError(
        std::string("manifest: missing field (") + e.what() + ")",
        path.string());
  }
}

void save_manifest(const Manifest& manifest,
                   const std::filesystem::path& path) {
  json doc;
  doc["format"] = "post-batch-manifest";
  doc["version"] = 1;
  doc["family"] = family_name(manifest.family);
  doc["dispersion"] = manifest.family.dispersion;
  doc["p"] = manifest.p;
  doc["columns"] = manifest.columns;
  auto out = open_out(path);
  out << doc.dump(2) << "\n";
}

Batch load_batch_file(const std::filesystem::path& path,
                      const Manifest& manifest, int sequence_number) {
  std::ifstream in(path);
  if (!in)
    throw DataFormatError("cannot open batch file " + path.string(),
                          path.string());
  std::string line;
  if (!std::getline(in, line))
    throw DataFormatError("empty batch file", path.string(), 1, 1);
  {
    std::string header = line;
    if (!header.empty() && header.back() == '\r') header.pop_back();
    std::ostringstream expected;
    for (size_t c = 0; c < manifest.columns.size(); ++c) {
      if (c) expected << ',';
      expected << manifest.columns[c];
    }
    if (header != expected.str())
      throw DataFormatError("header mismatch: expected '" + expected.str() +
                                "', got '" + header + "'",
                            path.string(), 1, 1);
  }

  Batch batch;
  batch.sequence_number = sequence_number;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_line(line);
    if (cells.size() != manifest.columns.size())
      throw DataFormatError(
          "arity mismatch: expected " +
              std::to_string(manifest.columns.size()) + " cells, got " +
              std::to_string(cells.size()),
          path.string(), line_no, 1);
    Observation obs;
    obs.y = parse_number(cells[0], path.string(), line_no, 1);
    const double a = parse_number(cells[1], path.string(), line_no, 2);
    if (a != 0.0 && a != 1.0)
      throw DataFormatError("arm indicator must be 0 or 1", path.string(),
                            line_no, 2);
    obs.arm = static_cast<int>(a);
    obs.x.resize(manifest.p + 1);
    obs.x(0) = 1.0;  // implicit intercept
    for (int j = 1; j <= manifest.p; ++j)
      obs.x(j) = parse_number(cells[static_cast<size_t>(j) + 1],
                              path.string(), line_no, j + 2);
    try {
      validate_response(manifest.family, obs.y);
    } catch (const std::invalid_argument& e) {
      throw DataFormatError(e.what(), path.string(), line_no, 1);
    }
    batch.observations.push_back(std::move(obs));
  }
  if (batch.observations.empty())
    throw DataFormatError("batch file holds no observations", path.string(),
                          2, 1);
  return batch;
}

void save_batch_file(const Batch& batch, const Manifest& manifest,
                     const std::filesystem::path& path) {
  auto out = open_out(path);
  out.precision(17);
  for (size_t c = 0; c < manifest.columns.size(); ++c) {
    if (c) out << ',';
    out << manifest.columns[c];
  }
  out << "\n";
  for (const Observation& obs : batch.observations) {
    out << obs.y << ',' << obs.arm;
    for (int j = 1; j <= manifest.p; ++j) out << ',' << obs.x(j);
    out << "\n";
  }
}

std::vector<std::filesystem::path> list_batch_files(
    const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir))
    throw DataFormatError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    if (entry.path().extension() == ".csv")
      files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

void write_trajectory(const ExperimentState& state,
                      const std::filesystem::path& path,
                      ReportFormat format) {
  auto out = open_out(path);
  out.precision(17);
  if (format == ReportFormat::Delimited) {
    out << "sequence,n_control,n_treat,lambda_stat,p_pointwise,"
           "p_running_min,regularized,status\n";
    for (size_t i = 0; i < state.stat_history.size(); ++i) {
      const StatRecord& r = state.stat_history[i];
      const bool last = i + 1 == state.stat_history.size();
      out << r.sequence_number << ',' << r.n_control << ',' << r.n_treat
          << ',' << r.lambda_stat << ',' << r.p_pointwise << ','
          << r.p_running_min << ',' << (r.regularized ? 1 : 0) << ','
          << (last ? status_string(state.status) : "running") << "\n";
    }
  } else {
    json doc;
    doc["format"] = "post-trajectory";
    doc["version"] = 1;
    doc["experiment_id"] = state.experiment_id;
    doc["status"] = status_string(state.status);
    json records = json::array();
    for (const StatRecord& r : state.stat_history) {
      records.push_back(json{{"sequence", r.sequence_number},
                             {"n_control", r.n_control},
                             {"n_treat", r.n_treat},
                             {"lambda_stat", r.lambda_stat},
                             {"p_pointwise", r.p_pointwise},
                             {"p_running_min", r.p_running_min},
                             {"regularized", r.regularized}});
    }
    doc["records"] = std::move(records);
    out << doc.dump(2) << "\n";
  }
}

void write_decision(const ExperimentState& state,
                    const std::filesystem::path& path, ReportFormat format) {
  auto out = open_out(path);
  out.precision(17);
  const double p_final =
      state.stat_history.empty() ? 1.0 : state.running_min_p;
  const long stop = state.status == ExperimentStatus::Rejected
                        ? state.rejected_at
                        : static_cast<long>(state.treat_data.size());
  if (format == ReportFormat::Delimited) {
    out << "experiment_id,status,p_value,n_treat_at_decision,skipped_fits\n";
    out << state.experiment_id << ',' << status_string(state.status) << ','
        << p_final << ',' << stop << ',' << state.skipped_fits << "\n";
  } else {
    json doc;
    doc["format"] = "post-decision";
    doc["version"] = 1;
    doc["experiment_id"] = state.experiment_id;
    doc["status"] = status_string(state.status);
    doc["p_value"] = p_final;
    doc["n_treat_at_decision"] = stop;
    doc["skipped_fits"] = state.skipped_fits;
    out << doc.dump(2) << "\n";
  }
}

void write_study_report(const std::vector<StudyReportRow>& rows,
                        const std::filesystem::path& path,
                        ReportFormat format) {
  auto out = open_out(path);
  out.precision(10);
  if (format == ReportFormat::Delimited) {
    out << "design,method,link,setting,b,rejection_mean,rejection_std,"
           "coverage_mean,coverage_std,filter_mean,filter_std,"
           "fdr_mean,fdr_std,tpr_mean,tpr_std,stop_median,stop_p90,"
           "replications,failed\n";
    for (const StudyReportRow& r : rows) {
      const StudyMetrics& m = r.metrics;
      out << r.design << ',' << r.method << ',' << r.link << ',' << r.setting
          << ',' << r.b << ',' << m.rejection_rate.mean << ','
          << m.rejection_rate.std << ',' << m.coverage_ratio.mean << ','
          << m.coverage_ratio.std << ',' << m.filter_ratio.mean << ','
          << m.filter_ratio.std << ',';
      if (m.has_fdr)
        out << m.fdr.mean << ',' << m.fdr.std << ',';
      else
        out << ",,";
      if (m.has_tpr)
        out << m.tpr.mean << ',' << m.tpr.std << ',';
      else
        out << ",,";
      out << m.stopping_time_median << ',' << m.stopping_time_p90 << ','
          << m.replications_done << ',' << m.replications_failed << "\n";
    }
  } else {
    json arr = json::array();
    for (const StudyReportRow& r : rows) {
      const StudyMetrics& m = r.metrics;
      json row{{"design", r.design},
               {"method", r.method},
               {"link", r.link},
               {"setting", r.setting},
               {"b", r.b},
               {"rejection", {{"mean", m.rejection_rate.mean},
                              {"std", m.rejection_rate.std}}},
               {"coverage", {{"mean", m.coverage_ratio.mean},
                             {"std", m.coverage_ratio.std}}},
               {"filter", {{"mean", m.filter_ratio.mean},
                           {"std", m.filter_ratio.std}}},
               {"stopping_time",
                {{"median", m.stopping_time_median},
                 {"p90", m.stopping_time_p90}}},
               {"replications", m.replications_done},
               {"failed", m.replications_failed}};
      if (m.has_fdr)
        row["fdr"] = {{"mean", m.fdr.mean}, {"std", m.fdr.std}};
      if (m.has_tpr)
        row["tpr"] = {{"mean", m.tpr.mean}, {"std", m.tpr.std}};
      arr.push_back(std::move(row));
    }
    json doc;
    doc["format"] = "post-study-report";
    doc["version"] = 1;
    doc["rows"] = std::move(arr);
    out << doc.dump(2) << "\n";
  }
}

void write_multiple_trajectory(const MultipleStudyResult& result,
                               const std::filesystem::path& path,
                               ReportFormat format) {
  auto out = open_out(path);
  out.precision(10);
  if (format == ReportFormat::Delimited) {
    out << "batch,fdr_mean,tpr_mean\n";
    for (size_t k = 0; k < result.fdr_by_batch.size(); ++k)
      out << (k + 1) << ',' << result.fdr_by_batch[k] << ','
          << result.tpr_by_batch[k] << "\n";
  } else {
    json doc;
    doc["format"] = "post-multiple-trajectory";
    doc["version"] = 1;
    doc["fdr_by_batch"] = result.fdr_by_batch;
    doc["tpr_by_batch"] = result.tpr_by_batch;
    out << doc.dump(2) << "\n";
  }
}

}  // namespace post
