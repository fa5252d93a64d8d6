#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace limg::eval {

// Rows are true classes, columns predicted classes.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int class_count = 0);

  int class_count() const { return classes_; }
  std::uint64_t at(int truth, int predicted) const { return counts_[index(truth, predicted)]; }
  void add(int truth, int predicted);

  std::uint64_t row_sum(int truth) const;
  std::uint64_t col_sum(int predicted) const;
  std::uint64_t total() const;
  std::uint64_t trace() const;

 private:
  std::size_t index(int truth, int predicted) const;

  int classes_;
  std::vector<std::uint64_t> counts_;
};

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> predicted, int class_count);

struct ClassMetrics {
  double accuracy = 0.0;  // per-class recall
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::uint64_t support = 0;
};

struct MetricsReport {
  std::vector<ClassMetrics> per_class;
  double overall_accuracy = 0.0;
  std::vector<std::string> warnings;  // zero-support classes
};

MetricsReport metrics_from_confusion(const ConfusionMatrix& cm);

struct RunAggregate {
  std::vector<double> values;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single run
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
};

// Quantiles interpolate linearly between order statistics at q*(n-1).
RunAggregate aggregate_runs(std::span<const double> values);

enum class ReportKind { SweepCurve, Breakdown, Boxplot };

struct SweepPoint {
  double value = 0.0;  // swept parameter (d, N, ...)
  double accuracy = 0.0;
};

struct SweepData {
  std::string parameter;
  std::vector<SweepPoint> points;
};

struct BreakdownData {
  std::vector<std::string> class_names;
  MetricsReport metrics;
};

struct BoxplotSeries {
  std::string label;
  RunAggregate stats;
};

struct BoxplotData {
  std::vector<BoxplotSeries> series;
};

using ReportData = std::variant<SweepData, BreakdownData, BoxplotData>;

// CSV headers:
//   SweepCurve: parameter,value,accuracy           (rows by value ascending)
//   Breakdown:  class,name,accuracy,precision,recall,f1,support
//   Boxplot:    series,runs,mean,std,min,q1,median,q3,max
// Floats use 6 significant digits.
void emit_report(ReportKind kind, const ReportData& data, const std::filesystem::path& path);

}  // namespace limg::eval
