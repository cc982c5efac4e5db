#pragma once

#include <atomic>
#include <stdexcept>
#include <string>
#include <vector>

namespace post {

/// Base class for all library errors so callers can map them to exit codes.
class PostError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Cholesky (or similar) factorization failed; carries the failing pivot.
class FactorizationError : public PostError {
 public:
  FactorizationError(const std::string& msg, int pivot)
      : PostError(msg), pivot_index(pivot) {}
  int pivot_index;
};

/// Iterative fit diverged or failed; message embeds the iteration trace.
class FittingError : public PostError {
 public:
  FittingError(const std::string& msg, int iterations)
      : PostError(msg), iterations(iterations) {}
  int iterations = 0;
};

/// Logistic MLE does not exist (separated data).
class SeparationError : public FittingError {
 public:
  using FittingError::FittingError;
};

/// Weighted Gram matrix is singular; names the offending coordinates.
class RankDeficiencyError : public PostError {
 public:
  RankDeficiencyError(const std::string& msg, std::vector<int> cols)
      : PostError(msg), columns(std::move(cols)) {}
  std::vector<int> columns;
};

/// Non-finite statistic or unrecoverable numerical breakdown.
class NumericalError : public PostError {
 public:
  using PostError::PostError;
};

/// Batch/checkpoint file violates the documented schema.
class DataFormatError : public PostError {
 public:
  DataFormatError(const std::string& msg, std::string file = {}, long line = -1,
                  long column = -1)
      : PostError(msg), file(std::move(file)), line(line), column(column) {}
  std::string file;
  long line = -1;
  long column = -1;
};

/// Protocol misuse of the sequential layer (out-of-order batch, ingest after
/// a terminal decision, p-value before any statistic exists).
class SequentialError : public PostError {
 public:
  using PostError::PostError;
};

/// Counters for silent numeric guards. They never change results, only
/// record that a guard fired; tests reset and inspect them.
struct Diagnostics {
  std::atomic<long> link_saturations{0};
  std::atomic<long> variance_floors{0};
  std::atomic<long> threshold_fallbacks{0};
  std::atomic<long> path_skips{0};
  std::atomic<long> majorization_increases{0};

  void reset() {
    link_saturations = 0;
    variance_floors = 0;
    threshold_fallbacks = 0;
    path_skips = 0;
    majorization_increases = 0;
  }
};

Diagnostics& diagnostics();

}  // namespace post
