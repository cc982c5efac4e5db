#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "post/simulation.hpp"

namespace post {

/// Dataset manifest: fixes the family, the covariate count p, and the
/// column order of every batch file in a directory.
struct Manifest {
  GlmFamily family;
  int p = 0;
  std::vector<std::string> columns;  // "y", "a", "x1", ..., "xp"

  static Manifest make(const GlmFamily& family, int p);
};

Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const Manifest& manifest,
                   const std::filesystem::path& path);

/// Batch files are delimited text with header y,a,x1,...,xp; the intercept
/// is implicit and prepended as x[0] = 1 on load. Schema violations name
/// file, line, and column.
Batch load_batch_file(const std::filesystem::path& path,
                      const Manifest& manifest, int sequence_number);
void save_batch_file(const Batch& batch, const Manifest& manifest,
                     const std::filesystem::path& path);

/// Batch files of one experiment directory in filename-sorted order
/// (zero-padded names recommended). Only *.csv files are considered;
/// the manifest file itself is skipped.
std::vector<std::filesystem::path> list_batch_files(
    const std::filesystem::path& dir);

enum class ReportFormat { Delimited, StructuredRecords };

/// Per-batch trajectory plus the final decision of one experiment.
void write_trajectory(const ExperimentState& state,
                      const std::filesystem::path& path, ReportFormat format);

/// Decision record: status, stopping time, final p-value.
void write_decision(const ExperimentState& state,
                    const std::filesystem::path& path, ReportFormat format);

struct StudyReportRow {
  std::string design;
  std::string method;
  std::string link;
  std::string setting;
  double b = 0.0;
  StudyMetrics metrics;
};

void write_study_report(const std::vector<StudyReportRow>& rows,
                        const std::filesystem::path& path,
                        ReportFormat format);

/// Figure-style per-batch FDR/TPR trajectory of a multiple study.
void write_multiple_trajectory(const MultipleStudyResult& result,
                               const std::filesystem::path& path,
                               ReportFormat format);

std::string status_string(ExperimentStatus status);

}  // namespace post
