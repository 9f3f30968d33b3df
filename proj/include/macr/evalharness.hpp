#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "macr/backend.hpp"
#include "macr/config.hpp"
#include "macr/decider.hpp"
#include "macr/treemodel.hpp"

namespace macr {

using CountMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

// Rows are gold labels, columns predictions.
struct ConfusionMatrix {
  CountMatrix counts;

  explicit ConfusionMatrix(std::size_t labels = 0)
      : counts(CountMatrix::Zero(static_cast<Eigen::Index>(labels), static_cast<Eigen::Index>(labels))) {}
  explicit ConfusionMatrix(CountMatrix c) : counts(std::move(c)) {}

  void add(std::size_t gold, std::size_t predicted) {
    ++counts(static_cast<Eigen::Index>(gold), static_cast<Eigen::Index>(predicted));
  }
  std::int64_t total() const { return counts.sum(); }
  std::size_t labels() const { return static_cast<std::size_t>(counts.rows()); }
};

struct WeightedMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Support-weighted per-class precision, recall and F1. A class that is never
// predicted has precision 0; F1 is the weighted mean of per-class F1.
WeightedMetrics weighted_metrics(const ConfusionMatrix& cm);

struct FoldResult {
  int fold = 0;
  bool aborted = false;
  std::string error;
  std::vector<std::string> test_ids;
  ConfusionMatrix confusion;
  WeightedMetrics metrics;
  std::vector<Prediction> predictions;
};

struct MetricReport {
  std::string variant;
  std::string dataset;
  int k = 0;
  std::uint64_t fold_seed = 0;
  std::vector<FoldResult> folds;
  WeightedMetrics mean;
  WeightedMetrics stddev;  // population standard deviation over folds
  bool complete = true;
};

class LeakageError : public PipelineError {
 public:
  using PipelineError::PipelineError;
};

// Stratified k-fold evaluation; the pool of every fold is its training split.
MetricReport run_experiment(const Dataset& dataset, const PipelineConfig& cfg, int k, Backend& backend);

struct ComparisonRow {
  std::string variant;
  WeightedMetrics mean;
  WeightedMetrics stddev;
  WeightedMetrics delta_percent;  // relative to the first row
};

// Absolute values plus percentage change against the first report.
std::vector<ComparisonRow> compare_reports(const std::vector<MetricReport>& reports);
std::string format_comparison(const std::vector<ComparisonRow>& rows);

// <dir>/<variant>/fold<i>.predictions.jsonl, <dir>/<variant>/fold<i>.confusion.tsv,
// <dir>/<variant>/folds.tsv and <dir>/summary.tsv.
void write_report_dir(const std::filesystem::path& dir, const std::vector<MetricReport>& reports,
                      const RiskLabelSet& labels);

}  // namespace macr
