#include <algorithm>
#include <cmath>
#include <numeric>

#include "hm/errors.hpp"
#include "hm/selection.hpp"

namespace hm {

namespace {
inline double sigmoid(double m) { return 1.0 / (1.0 + std::exp(-m)); }
}  // namespace

void StumpBooster::fit(const Matrix& x, std::span<const int> y) {
  if (x.rows != y.size() || x.rows == 0) throw TrainError("training matrix and labels disagree in length");
  for (double v : x.data)
    if (std::isnan(v)) throw TrainError("training matrix contains missing values");
  const std::size_t n = x.rows;
  const auto positives = static_cast<std::size_t>(std::count(y.begin(), y.end(), 1));
  if (positives == 0 || positives == n) throw TrainError("training labels contain a single class");

  const double prior = static_cast<double>(positives) / static_cast<double>(n);
  base_ = std::log(prior / (1.0 - prior));
  stumps_.clear();

  std::vector<std::vector<std::size_t>> sorted(x.cols);
  for (std::size_t f = 0; f < x.cols; ++f) {
    auto& idx = sorted[f];
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x.at(a, f) < x.at(b, f); });
  }

  std::vector<double> margin(n, base_), g(n), h(n);
  const double lambda = params_.lambda;
  for (int round = 0; round < params_.rounds; ++round) {
    double gsum = 0, hsum = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(margin[i]);
      g[i] = p - static_cast<double>(y[i]);
      h[i] = p * (1.0 - p);
      gsum += g[i];
      hsum += h[i];
    }
    const double parent = gsum * gsum / (hsum + lambda);

    double best_gain = 1e-12;
    std::optional<Stump> best;
    double best_gl = 0, best_hl = 0;
    for (std::size_t f = 0; f < x.cols; ++f) {
      double gl = 0, hl = 0;
      const auto& idx = sorted[f];
      for (std::size_t k = 0; k + 1 < n; ++k) {
        gl += g[idx[k]];
        hl += h[idx[k]];
        const double a = x.at(idx[k], f), b = x.at(idx[k + 1], f);
        if (!(a < b)) continue;
        const double gr = gsum - gl, hr = hsum - hl;
        if (hl < params_.min_child_weight || hr < params_.min_child_weight) continue;
        const double gain = gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent;
        if (gain > best_gain) {
          best_gain = gain;
          double thr = a + 0.5 * (b - a);
          if (!(thr >= a && thr < b)) thr = a;
          best = Stump{f, thr, 0.0, 0.0};
          best_gl = gl;
          best_hl = hl;
        }
      }
    }
    if (!best) break;
    best->left = -params_.learning_rate * best_gl / (best_hl + lambda);
    best->right = -params_.learning_rate * (gsum - best_gl) / (hsum - best_hl + lambda);
    for (std::size_t i = 0; i < n; ++i) margin[i] += x.at(i, best->feature) <= best->threshold ? best->left : best->right;
    stumps_.push_back(*best);
  }
}

std::vector<double> StumpBooster::predict(const Matrix& x) const {
  std::vector<double> out(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) {
    double m = base_;
    for (const Stump& s : stumps_) m += x.at(i, s.feature) <= s.threshold ? s.left : s.right;
    out[i] = sigmoid(m);
  }
  return out;
}

double balanced_accuracy(std::span<const int> y, std::span<const int> predicted) {
  if (y.size() != predicted.size()) throw MetricError("label and prediction lengths differ");
  std::int64_t hit[2] = {0, 0}, total[2] = {0, 0};
  for (std::size_t i = 0; i < y.size(); ++i) {
    const int c = y[i] != 0 ? 1 : 0;
    ++total[c];
    if ((predicted[i] != 0 ? 1 : 0) == c) ++hit[c];
  }
  double sum = 0;
  int classes = 0;
  for (int c = 0; c < 2; ++c) {
    if (total[c] == 0) continue;
    sum += static_cast<double>(hit[c]) / static_cast<double>(total[c]);
    ++classes;
  }
  if (classes == 0) throw MetricError("balanced accuracy of an empty label set");
  return sum / classes;
}

std::vector<int> threshold_predictions(std::span<const double> scores, double threshold) {
  std::vector<int> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] >= threshold ? 1 : 0;
  return out;
}

double roc_auc(std::span<const int> y, std::span<const double> scores) {
  if (y.size() != scores.size()) throw MetricError("label and score lengths differ");
  std::vector<std::size_t> idx(y.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double pos = 0, neg = 0;
  for (int v : y) (v != 0 ? pos : neg) += 1.0;
  if (pos == 0 || neg == 0) throw MetricError("ROC AUC needs both classes");

  double tp = 0, fp = 0, area = 0;
  for (std::size_t k = 0; k < idx.size();) {
    double dtp = 0, dfp = 0;
    const double s = scores[idx[k]];
    for (; k < idx.size() && scores[idx[k]] == s; ++k) (y[idx[k]] != 0 ? dtp : dfp) += 1.0;
    area += dfp * (tp + 0.5 * dtp);
    tp += dtp;
    fp += dfp;
  }
  return area / (pos * neg);
}

}  // namespace hm
