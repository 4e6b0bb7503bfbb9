#pragma once

#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "ssbd/error.hpp"
#include "ssbd/tensor.hpp"

namespace ssbd {

struct MetricsReport {
  Index num_classes = 0;
  Eigen::MatrixXi confusion;  // rows are truth, columns are predictions
  double accuracy = 0;
  std::vector<double> precision, recall, f1;
  std::vector<Index> support;
  double macro_f1 = 0;          // mean F1 over every class
  double macro_f1_actions = 0;  // mean F1 over classes 1.., skipping class 0
};

inline MetricsReport compute_metrics(const std::vector<Index>& truth,
                                     const std::vector<Index>& pred, Index num_classes) {
  if (truth.size() != pred.size())
    throw LengthMismatch("truth and prediction lists differ in length");
  if (truth.empty()) throw EmptyInput("no examples to score");
  MetricsReport r;
  r.num_classes = num_classes;
  r.confusion = Eigen::MatrixXi::Zero(num_classes, num_classes);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const Index t = truth[i], p = pred[i];
    if (t < 0 || t >= num_classes || p < 0 || p >= num_classes)
      throw ShapeMismatch("class index out of range in metrics input");
    ++r.confusion(t, p);
  }
  r.accuracy = static_cast<double>(r.confusion.trace()) / static_cast<double>(truth.size());
  r.precision.resize(static_cast<std::size_t>(num_classes));
  r.recall.resize(static_cast<std::size_t>(num_classes));
  r.f1.resize(static_cast<std::size_t>(num_classes));
  r.support.resize(static_cast<std::size_t>(num_classes));
  for (Index c = 0; c < num_classes; ++c) {
    const auto tp = static_cast<double>(r.confusion(c, c));
    const auto fp = static_cast<double>(r.confusion.col(c).sum()) - tp;
    const auto fn = static_cast<double>(r.confusion.row(c).sum()) - tp;
    const double prec = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double rec = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    const auto ci = static_cast<std::size_t>(c);
    r.precision[ci] = prec;
    r.recall[ci] = rec;
    r.f1[ci] = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
    r.support[ci] = r.confusion.row(c).sum();
  }
  double sum = 0;
  for (double v : r.f1) sum += v;
  r.macro_f1 = sum / static_cast<double>(num_classes);
  if (num_classes > 1) {
    double asum = 0;
    for (std::size_t c = 1; c < r.f1.size(); ++c) asum += r.f1[c];
    r.macro_f1_actions = asum / static_cast<double>(num_classes - 1);
  }
  return r;
}

// F1 of the positive class in a binary task.
inline double binary_f1(const std::vector<Index>& truth, const std::vector<Index>& pred) {
  return compute_metrics(truth, pred, 2).f1[1];
}

inline nlohmann::json metrics_to_json(const MetricsReport& r) {
  nlohmann::json conf = nlohmann::json::array();
  for (Index i = 0; i < r.num_classes; ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Index j = 0; j < r.num_classes; ++j) row.push_back(r.confusion(i, j));
    conf.push_back(row);
  }
  return {{"num_classes", r.num_classes}, {"confusion", conf},
          {"accuracy", r.accuracy},       {"precision", r.precision},
          {"recall", r.recall},           {"f1", r.f1},
          {"support", r.support},         {"macro_f1", r.macro_f1},
          {"macro_f1_actions", r.macro_f1_actions}};
}

}  // namespace ssbd
