#include "macr/evalharness.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

namespace macr {

namespace fs = std::filesystem;

WeightedMetrics weighted_metrics(const ConfusionMatrix& cm) {
  const auto total = cm.total();
  if (cm.counts.rows() == 0 || total <= 0) throw ValidationError("weighted_metrics: empty confusion matrix");
  if ((cm.counts.array() < 0).any()) throw ValidationError("weighted_metrics: negative count");
  const Eigen::Matrix<std::int64_t, Eigen::Dynamic, 1> support = cm.counts.rowwise().sum();
  const Eigen::Matrix<std::int64_t, 1, Eigen::Dynamic> predicted = cm.counts.colwise().sum();
  WeightedMetrics out;
  for (Eigen::Index c = 0; c < cm.counts.rows(); ++c) {
    if (support[c] == 0) continue;
    const double tp = static_cast<double>(cm.counts(c, c));
    const double precision = predicted[c] > 0 ? tp / static_cast<double>(predicted[c]) : 0.0;
    const double recall = tp / static_cast<double>(support[c]);
    const double f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    const double w = static_cast<double>(support[c]) / static_cast<double>(total);
    out.precision += w * precision;
    out.recall += w * recall;
    out.f1 += w * f1;
  }
  return out;
}

namespace {

void aggregate(MetricReport& report) {
  std::vector<WeightedMetrics> done;
  for (const auto& f : report.folds)
    if (!f.aborted) done.push_back(f.metrics);
  report.complete = done.size() == report.folds.size();
  report.mean = report.stddev = {};
  if (done.empty()) return;
  const double n = static_cast<double>(done.size());
  for (const auto& m : done) {
    report.mean.precision += m.precision / n;
    report.mean.recall += m.recall / n;
    report.mean.f1 += m.f1 / n;
  }
  for (const auto& m : done) {
    report.stddev.precision += std::pow(m.precision - report.mean.precision, 2) / n;
    report.stddev.recall += std::pow(m.recall - report.mean.recall, 2) / n;
    report.stddev.f1 += std::pow(m.f1 - report.mean.f1, 2) / n;
  }
  report.stddev.precision = std::sqrt(report.stddev.precision);
  report.stddev.recall = std::sqrt(report.stddev.recall);
  report.stddev.f1 = std::sqrt(report.stddev.f1);
}

}  // namespace

MetricReport run_experiment(const Dataset& dataset, const PipelineConfig& cfg, int k, Backend& backend) {
  MetricReport report;
  report.variant = std::string(to_string(cfg.ablation));
  report.dataset = dataset.name;
  report.k = k;
  report.fold_seed = cfg.fold_seed;

  const auto folds = kfold_split(dataset, k, cfg.fold_seed);
  const Pipeline pipeline(cfg, backend);
  for (std::size_t f = 0; f < folds.size(); ++f) {
    FoldResult fr;
    fr.fold = static_cast<int>(f);
    fr.confusion = ConfusionMatrix(dataset.label_set.count());
    for (const auto& t : folds[f].test.trees) fr.test_ids.push_back(t.id);
    const std::set<std::string> test_ids(fr.test_ids.begin(), fr.test_ids.end());
    try {
      const DemonstrationPool pool = pipeline.make_pool(folds[f].train);
      for (const auto& tree : folds[f].test.trees) {
        Prediction p = pipeline.predict(tree, pool);
        for (const auto& id : p.provenance.demo_ids)
          if (test_ids.count(id))
            throw LeakageError("demonstration '" + id + "' for tree '" + tree.id + "' is in test fold " +
                               std::to_string(f));
        fr.confusion.add(*tree.gold_label, p.label);
        fr.predictions.push_back(std::move(p));
      }
      fr.metrics = weighted_metrics(fr.confusion);
    } catch (const LeakageError&) {
      throw;
    } catch (const std::exception& e) {
      fr.aborted = true;
      fr.error = e.what();
    }
    report.folds.push_back(std::move(fr));
  }
  aggregate(report);
  return report;
}

std::vector<ComparisonRow> compare_reports(const std::vector<MetricReport>& reports) {
  if (reports.size() < 2) throw ValidationError("compare_reports: need at least two reports");
  const auto& base = reports.front();
  for (const auto& r : reports) {
    bool same = r.dataset == base.dataset && r.k == base.k && r.fold_seed == base.fold_seed &&
                r.folds.size() == base.folds.size();
    for (std::size_t f = 0; same && f < r.folds.size(); ++f) same = r.folds[f].test_ids == base.folds[f].test_ids;
    if (!same)
      throw ValidationError("compare_reports: report '" + r.variant + "' was not evaluated on the same folds as '" +
                            base.variant + "'");
  }
  auto delta = [](double v, double b) {
    return b == 0.0 ? std::numeric_limits<double>::quiet_NaN() : (v - b) / b * 100.0;
  };
  std::vector<ComparisonRow> rows;
  for (const auto& r : reports)
    rows.push_back({r.variant, r.mean, r.stddev,
                    {delta(r.mean.precision, base.mean.precision), delta(r.mean.recall, base.mean.recall),
                     delta(r.mean.f1, base.mean.f1)}});
  return rows;
}

std::string format_comparison(const std::vector<ComparisonRow>& rows) {
  std::ostringstream out;
  out << "variant\tweighted_precision\tweighted_recall\tweighted_f1\tdelta_precision\tdelta_recall\tdelta_f1\n";
  auto cell = [](double mean, double sd) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(4) << mean << " ± " << sd;
    return s.str();
  };
  auto pct = [](double d) {
    if (std::isnan(d)) return std::string("n/a");
    std::ostringstream s;
    s << std::fixed << std::setprecision(1) << (d > 0 ? "+" : "") << d << "%";
    return s.str();
  };
  for (const auto& r : rows)
    out << r.variant << '\t' << cell(r.mean.precision, r.stddev.precision) << '\t'
        << cell(r.mean.recall, r.stddev.recall) << '\t' << cell(r.mean.f1, r.stddev.f1) << '\t'
        << pct(r.delta_percent.precision) << '\t' << pct(r.delta_percent.recall) << '\t' << pct(r.delta_percent.f1)
        << '\n';
  return out.str();
}

void write_report_dir(const fs::path& dir, const std::vector<MetricReport>& reports, const RiskLabelSet& labels) {
  fs::create_directories(dir);
  for (const auto& r : reports) {
    const fs::path vdir = dir / r.variant;
    fs::create_directories(vdir);
    std::ofstream folds(vdir / "folds.tsv");
    folds << "fold\tstatus\tweighted_precision\tweighted_recall\tweighted_f1\terror\n";
    for (const auto& f : r.folds) {
      const std::string stem = "fold" + std::to_string(f.fold);
      std::ofstream preds(vdir / (stem + ".predictions.jsonl"));
      for (const auto& p : f.predictions) preds << serialize_prediction(p, labels) << '\n';
      std::ofstream cm(vdir / (stem + ".confusion.tsv"));
      cm << "gold\\predicted";
      for (const auto& name : labels.names()) cm << '\t' << name;
      cm << '\n';
      for (Eigen::Index g = 0; g < f.confusion.counts.rows(); ++g) {
        cm << labels.name(static_cast<std::size_t>(g));
        for (Eigen::Index p = 0; p < f.confusion.counts.cols(); ++p) cm << '\t' << f.confusion.counts(g, p);
        cm << '\n';
      }
      folds << f.fold << '\t' << (f.aborted ? "aborted" : "ok") << '\t' << f.metrics.precision << '\t'
            << f.metrics.recall << '\t' << f.metrics.f1 << '\t' << f.error << '\n';
    }
  }
  std::vector<ComparisonRow> rows;
  if (reports.size() >= 2) {
    rows = compare_reports(reports);
  } else {
    for (const auto& r : reports) rows.push_back({r.variant, r.mean, r.stddev, {0.0, 0.0, 0.0}});
  }
  std::ofstream summary(dir / "summary.tsv");
  summary << format_comparison(rows);
  bool complete = true;
  for (const auto& r : reports) complete = complete && r.complete;
  if (!complete) summary << "# incomplete: at least one fold aborted\n";
}

}  // namespace macr
