#ifndef GAZELT_METRICS_HPP
#define GAZELT_METRICS_HPP

// Long-tail evaluation: confusion-matrix metrics, one-vs-rest AUC, Welch's
// t-test and the JSON report.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <json.hpp>

#include "gazelt/error.hpp"
#include "gazelt/gaze_ingest.hpp"

namespace gazelt::metrics {

using ingest::ClassGroup;
using ingest::ClassGrouping;

/// Rows are true classes, columns predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t k) : k_(k), cells_(k * k, 0) {
    if (k == 0) throw ContractError("confusion matrix needs at least one class");
  }

  static ConfusionMatrix from_rows(const std::vector<std::vector<std::uint64_t>>& rows) {
    ConfusionMatrix cm(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != rows.size()) throw ContractError("confusion matrix must be square");
      for (std::size_t j = 0; j < rows.size(); ++j) cm.cells_[i * cm.k_ + j] = rows[i][j];
    }
    return cm;
  }

  static ConfusionMatrix from_predictions(std::size_t k, const std::vector<std::size_t>& truth,
                                          const std::vector<std::size_t>& pred) {
    if (truth.size() != pred.size()) throw ContractError("truth and prediction lengths differ");
    ConfusionMatrix cm(k);
    for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], pred[i]);
    return cm;
  }

  void add(std::size_t truth, std::size_t pred) {
    if (truth >= k_ || pred >= k_) throw ContractError("class index out of range for confusion matrix");
    ++cells_[truth * k_ + pred];
  }

  std::size_t classes() const { return k_; }
  std::uint64_t at(std::size_t i, std::size_t j) const { return cells_[i * k_ + j]; }
  std::uint64_t row_sum(std::size_t i) const {
    return std::accumulate(cells_.begin() + i * k_, cells_.begin() + (i + 1) * k_, std::uint64_t{0});
  }
  std::uint64_t col_sum(std::size_t j) const {
    std::uint64_t s = 0;
    for (std::size_t i = 0; i < k_; ++i) s += at(i, j);
    return s;
  }
  std::uint64_t total() const { return std::accumulate(cells_.begin(), cells_.end(), std::uint64_t{0}); }

 private:
  std::size_t k_;
  std::vector<std::uint64_t> cells_;
};

/// Recall per class; classes without true samples are absent.
inline std::vector<std::optional<double>> per_class_accuracy(const ConfusionMatrix& cm) {
  std::vector<std::optional<double>> out(cm.classes());
  for (std::size_t y = 0; y < cm.classes(); ++y)
    if (auto n = cm.row_sum(y)) out[y] = static_cast<double>(cm.at(y, y)) / static_cast<double>(n);
  return out;
}

inline double balanced_accuracy(const ConfusionMatrix& cm) {
  double s = 0;
  for (std::size_t y = 0; y < cm.classes(); ++y) {
    const auto n = cm.row_sum(y);
    if (n == 0) throw MetricError("balanced accuracy: class " + std::to_string(y) + " has no true samples");
    s += static_cast<double>(cm.at(y, y)) / static_cast<double>(n);
  }
  return s / static_cast<double>(cm.classes());
}

/// Unweighted mean of the present per-class accuracies.
inline std::optional<double> mean_present(const std::vector<std::optional<double>>& v) {
  double s = 0;
  std::size_t n = 0;
  for (const auto& x : v)
    if (x) s += *x, ++n;
  if (n == 0) return std::nullopt;
  return s / static_cast<double>(n);
}

inline std::optional<double> average_accuracy(const ConfusionMatrix& cm) { return mean_present(per_class_accuracy(cm)); }

/// Mean accuracy of the classes in one group; absent when the group is empty
/// or none of its classes has test samples.
inline std::optional<double> group_average(const std::vector<std::optional<double>>& per_class,
                                           const ClassGrouping& grouping, ClassGroup g) {
  if (grouping.size() != per_class.size())
    throw ContractError("grouping covers " + std::to_string(grouping.size()) + " classes, expected " +
                        std::to_string(per_class.size()));
  std::vector<std::optional<double>> sel;
  for (std::size_t y = 0; y < per_class.size(); ++y)
    if (grouping[y] == g) sel.push_back(per_class[y]);
  return mean_present(sel);
}

/// Generalised (Gorodkin) MCC; 0 when the denominator vanishes.
inline double mcc_multiclass(const ConfusionMatrix& cm) {
  const double s = static_cast<double>(cm.total());
  double c = 0, sum_pt = 0, sum_p2 = 0, sum_t2 = 0;
  for (std::size_t k = 0; k < cm.classes(); ++k) {
    const double p = static_cast<double>(cm.col_sum(k)), t = static_cast<double>(cm.row_sum(k));
    c += static_cast<double>(cm.at(k, k));
    sum_pt += p * t;
    sum_p2 += p * p;
    sum_t2 += t * t;
  }
  const double den = (s * s - sum_p2) * (s * s - sum_t2);
  if (den <= 0) return 0.0;
  return (c * s - sum_pt) / std::sqrt(den);
}

inline double weighted_f1(const ConfusionMatrix& cm) {
  const double total = static_cast<double>(cm.total());
  if (total == 0) throw MetricError("weighted F1 of an empty confusion matrix");
  double s = 0;
  for (std::size_t k = 0; k < cm.classes(); ++k) {
    const double tp = static_cast<double>(cm.at(k, k));
    const double support = static_cast<double>(cm.row_sum(k));
    const double denom = support + static_cast<double>(cm.col_sum(k));  // 2tp + fp + fn
    if (denom > 0) s += support * (2 * tp / denom);
  }
  return s / total;
}

struct AucResult {
  std::optional<double> macro;
  std::vector<std::optional<double>> per_class;
  std::vector<std::size_t> excluded;  // classes lacking positives or negatives
};

/// Mann–Whitney AUC of column k against "label == k" using mid-ranks.
inline std::optional<double> auc_one_vs_rest(const std::vector<std::vector<double>>& scores,
                                             const std::vector<std::size_t>& labels, std::size_t k) {
  const std::size_t n = labels.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a][k] < scores[b][k]; });
  double rank_sum = 0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[idx[j]][k] == scores[idx[i]][k]) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t q = i; q < j; ++q)
      if (labels[idx[q]] == k) rank_sum += mid, ++n_pos;
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  const double np = static_cast<double>(n_pos);
  return (rank_sum - np * (np + 1) / 2) / (np * static_cast<double>(n_neg));
}

inline AucResult auc_macro_ovr(const std::vector<std::vector<double>>& scores, const std::vector<std::size_t>& labels,
                               std::size_t n_classes) {
  if (scores.size() != labels.size()) throw ContractError("scores and labels differ in length");
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i].size() != n_classes)
      throw ContractError("score vector " + std::to_string(i) + " has " + std::to_string(scores[i].size()) +
                          " entries, expected " + std::to_string(n_classes));
    if (labels[i] >= n_classes) throw ContractError("label out of range in AUC input");
  }
  AucResult r;
  for (std::size_t k = 0; k < n_classes; ++k) {
    r.per_class.push_back(auc_one_vs_rest(scores, labels, k));
    if (!r.per_class.back()) r.excluded.push_back(k);
  }
  r.macro = mean_present(r.per_class);
  return r;
}

struct WelchResult {
  double t = 0;
  double df = 0;
  double p = 1;
};

inline WelchResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2 || b.size() < 2) throw ContractError("Welch t-test needs at least two samples per group");
  auto moments = [](const std::vector<double>& x) {
    const double n = static_cast<double>(x.size());
    const double m = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double ss = 0;
    for (double v : x) ss += (v - m) * (v - m);
    return std::array<double, 3>{n, m, ss / (n - 1)};
  };
  const auto [na, ma, va] = moments(a);
  const auto [nb, mb, vb] = moments(b);
  if (va == 0 && vb == 0) throw DegenerateInputError("Welch t-test: both samples have zero variance");
  const double sa = va / na, sb = vb / nb;
  WelchResult r;
  r.t = (ma - mb) / std::sqrt(sa + sb);
  r.df = (sa + sb) * (sa + sb) / (sa * sa / (na - 1) + sb * sb / (nb - 1));
  boost::math::students_t dist(r.df);
  r.p = std::min(1.0, 2 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t))));
  return r;
}

// ---------------------------------------------------------------------------
// Report

struct MetricsReport {
  std::string split;
  std::uint64_t seed = 0;
  std::vector<std::optional<double>> per_class;
  std::optional<double> head, medium, tail;
  std::optional<double> avg_acc;
  std::optional<double> balanced_acc;  // absent when a class has no test samples
  double mcc = 0;
  std::optional<double> auc_macro_ovr;
  std::vector<std::size_t> auc_excluded;
  double weighted_f1 = 0;
  std::size_t n_samples = 0;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

/// Builds the report from per-sample class scores (higher = more likely).
/// Predictions are the argmax, lowest index on ties.
inline MetricsReport evaluate_scores(const std::vector<std::vector<double>>& scores,
                                     const std::vector<std::size_t>& labels, std::size_t n_classes,
                                     const ClassGrouping& grouping, const std::string& split, std::uint64_t seed) {
  if (labels.empty()) throw DataError("split '" + split + "' has no samples");
  std::vector<std::size_t> pred;
  for (const auto& s : scores) pred.push_back(static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin()));
  auto cm = ConfusionMatrix::from_predictions(n_classes, labels, pred);
  MetricsReport r;
  r.split = split;
  r.seed = seed;
  r.per_class = per_class_accuracy(cm);
  r.head = group_average(r.per_class, grouping, ClassGroup::head);
  r.medium = group_average(r.per_class, grouping, ClassGroup::medium);
  r.tail = group_average(r.per_class, grouping, ClassGroup::tail);
  r.avg_acc = mean_present(r.per_class);
  if (std::all_of(r.per_class.begin(), r.per_class.end(), [](const auto& x) { return x.has_value(); }))
    r.balanced_acc = balanced_accuracy(cm);
  r.mcc = mcc_multiclass(cm);
  auto auc = auc_macro_ovr(scores, labels, n_classes);
  r.auc_macro_ovr = auc.macro;
  r.auc_excluded = auc.excluded;
  r.weighted_f1 = weighted_f1(cm);
  r.n_samples = labels.size();
  return r;
}

namespace detail {

inline nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }
inline std::optional<double> opt_from(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace detail

inline nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["split"] = r.split;
  j["seed"] = r.seed;
  j["per_class"] = nlohmann::json::array();
  for (const auto& v : r.per_class) j["per_class"].push_back(detail::opt(v));
  j["groups"] = {{"head", detail::opt(r.head)}, {"medium", detail::opt(r.medium)}, {"tail", detail::opt(r.tail)}};
  j["avg_acc"] = detail::opt(r.avg_acc);
  j["balanced_acc"] = detail::opt(r.balanced_acc);
  j["mcc"] = r.mcc;
  j["auc_macro_ovr"] = detail::opt(r.auc_macro_ovr);
  j["auc_excluded_classes"] = r.auc_excluded;
  j["weighted_f1"] = r.weighted_f1;
  j["n_samples"] = r.n_samples;
  return j;
}

inline MetricsReport report_from_json(const nlohmann::json& j) {
  try {
    MetricsReport r;
    r.split = j.at("split").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& v : j.at("per_class")) r.per_class.push_back(detail::opt_from(v));
    const auto& g = j.at("groups");
    r.head = detail::opt_from(g.at("head"));
    r.medium = detail::opt_from(g.at("medium"));
    r.tail = detail::opt_from(g.at("tail"));
    r.avg_acc = detail::opt_from(j.at("avg_acc"));
    r.balanced_acc = detail::opt_from(j.at("balanced_acc"));
    r.mcc = j.at("mcc").get<double>();
    r.auc_macro_ovr = detail::opt_from(j.at("auc_macro_ovr"));
    r.auc_excluded = j.value("auc_excluded_classes", std::vector<std::size_t>{});
    r.weighted_f1 = j.at("weighted_f1").get<double>();
    r.n_samples = j.at("n_samples").get<std::size_t>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("metrics report: ") + e.what());
  }
}

}  // namespace gazelt::metrics

#endif  // GAZELT_METRICS_HPP
