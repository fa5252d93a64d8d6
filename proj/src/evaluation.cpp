#include "limg/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace limg::eval {

namespace {

std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

double quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

ConfusionMatrix::ConfusionMatrix(int class_count)
    : classes_(class_count), counts_(static_cast<std::size_t>(class_count) * class_count, 0) {
  if (class_count < 0) throw std::invalid_argument("negative class count");
}

std::size_t ConfusionMatrix::index(int truth, int predicted) const {
  if (truth < 0 || truth >= classes_ || predicted < 0 || predicted >= classes_) {
    throw std::out_of_range("label outside [0, " + std::to_string(classes_) + ")");
  }
  return static_cast<std::size_t>(truth) * classes_ + predicted;
}

void ConfusionMatrix::add(int truth, int predicted) { ++counts_[index(truth, predicted)]; }

std::uint64_t ConfusionMatrix::row_sum(int truth) const {
  std::uint64_t s = 0;
  for (int p = 0; p < classes_; ++p) s += at(truth, p);
  return s;
}

std::uint64_t ConfusionMatrix::col_sum(int predicted) const {
  std::uint64_t s = 0;
  for (int t = 0; t < classes_; ++t) s += at(t, predicted);
  return s;
}

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t s = 0;
  for (int k = 0; k < classes_; ++k) s += at(k, k);
  return s;
}

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> predicted, int class_count) {
  if (truth.size() != predicted.size()) throw std::invalid_argument("label lists differ in length");
  ConfusionMatrix cm(class_count);
  for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], predicted[i]);
  return cm;
}

MetricsReport metrics_from_confusion(const ConfusionMatrix& cm) {
  MetricsReport r;
  const int n = cm.class_count();
  r.per_class.resize(n);
  for (int k = 0; k < n; ++k) {
    auto& m = r.per_class[k];
    const double diag = static_cast<double>(cm.at(k, k));
    const auto row = cm.row_sum(k);
    const auto col = cm.col_sum(k);
    m.support = row;
    m.precision = col > 0 ? diag / static_cast<double>(col) : 0.0;
    m.recall = row > 0 ? diag / static_cast<double>(row) : 0.0;
    m.accuracy = m.recall;
    m.f1 = m.precision + m.recall > 0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    if (row == 0) r.warnings.push_back("class " + std::to_string(k) + " has no support");
  }
  const auto total = cm.total();
  r.overall_accuracy = total > 0 ? static_cast<double>(cm.trace()) / static_cast<double>(total) : 0.0;
  return r;
}

RunAggregate aggregate_runs(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("aggregate_runs needs at least one value");
  RunAggregate a;
  a.values.assign(values.begin(), values.end());
  std::vector<double> sorted = a.values;
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  a.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / n;
  if (sorted.size() > 1) {
    double ss = 0;
    for (double v : sorted) ss += (v - a.mean) * (v - a.mean);
    a.std = std::sqrt(ss / (n - 1));
  }
  a.min = sorted.front();
  a.max = sorted.back();
  a.q1 = quantile(sorted, 0.25);
  a.median = quantile(sorted, 0.5);
  a.q3 = quantile(sorted, 0.75);
  return a;
}

void emit_report(ReportKind kind, const ReportData& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  switch (kind) {
    case ReportKind::SweepCurve: {
      const auto* d = std::get_if<SweepData>(&data);
      if (d == nullptr) throw std::invalid_argument("SweepCurve needs SweepData");
      auto points = d->points;
      std::stable_sort(points.begin(), points.end(),
                       [](const SweepPoint& a, const SweepPoint& b) { return a.value < b.value; });
      out << "parameter,value,accuracy\n";
      for (const auto& p : points) out << csv_field(d->parameter) << ',' << fmt6(p.value) << ',' << fmt6(p.accuracy) << '\n';
      break;
    }
    case ReportKind::Breakdown: {
      const auto* d = std::get_if<BreakdownData>(&data);
      if (d == nullptr) throw std::invalid_argument("Breakdown needs BreakdownData");
      out << "class,name,accuracy,precision,recall,f1,support\n";
      for (std::size_t k = 0; k < d->metrics.per_class.size(); ++k) {
        const auto& m = d->metrics.per_class[k];
        const std::string name = k < d->class_names.size() ? d->class_names[k] : std::to_string(k);
        out << k << ',' << csv_field(name) << ',' << fmt6(m.accuracy) << ',' << fmt6(m.precision) << ','
            << fmt6(m.recall) << ',' << fmt6(m.f1) << ',' << m.support << '\n';
      }
      break;
    }
    case ReportKind::Boxplot: {
      const auto* d = std::get_if<BoxplotData>(&data);
      if (d == nullptr) throw std::invalid_argument("Boxplot needs BoxplotData");
      out << "series,runs,mean,std,min,q1,median,q3,max\n";
      for (const auto& s : d->series) {
        const auto& a = s.stats;
        out << csv_field(s.label) << ',' << a.values.size() << ',' << fmt6(a.mean) << ',' << fmt6(a.std) << ','
            << fmt6(a.min) << ',' << fmt6(a.q1) << ',' << fmt6(a.median) << ',' << fmt6(a.q3) << ','
            << fmt6(a.max) << '\n';
      }
      break;
    }
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace limg::eval
