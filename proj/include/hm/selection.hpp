#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hm {

// Row-major samples x features. NaN marks a missing value.
struct Matrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::vector<double> column(std::size_t c) const;
  Matrix select_rows(std::span<const std::size_t> idx) const;
  Matrix select_cols(std::span<const std::size_t> idx) const;
};

struct Cohort {
  std::vector<std::string> sample_ids;
  std::vector<std::string> feature_names;
  Matrix x;
  std::vector<int> y;  // 1 responder, 0 non-responder
};

// CSV with a header row; columns "sample_id" and "label" (0/1) are required,
// every other column is a feature. Empty, "NA", "nan" and "null" cells are missing.
Cohort parse_cohort_csv(std::string_view text);
std::string write_cohort_csv(const Cohort& cohort);

std::vector<double> column_medians(const Matrix& x);
void impute(Matrix& x, std::span<const double> medians);

// Greedy mRMR, F-statistic relevance over mean |Pearson| redundancy (quotient
// form). Returns the first n feature indices in selection order.
std::vector<std::size_t> mrmr_rank(const Matrix& x, std::span<const int> y, std::size_t n);
double f_statistic(std::span<const double> values, std::span<const int> y);
double pearson(std::span<const double> a, std::span<const double> b);

struct MannWhitney {
  double u = 0.0;  // statistic of the positive class: pairs (pos > neg) + 0.5 * ties
  double p = 1.0;  // two-sided
};
// Exact null distribution when both groups have <= 8 samples and there are no
// ties; otherwise the tie-corrected normal approximation with continuity correction.
MannWhitney mann_whitney(std::span<const double> values, std::span<const int> y);

struct RankedFeature {
  std::size_t feature = 0;
  double u = 0.0;
  double p = 1.0;
};
std::vector<RankedFeature> mannwhitney_rank(const Matrix& x, std::span<const int> y);

class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual void fit(const Matrix& x, std::span<const int> y) = 0;
  // Positive-class probabilities in [0, 1].
  virtual std::vector<double> predict(const Matrix& x) const = 0;
};
using ClassifierFactory = std::function<std::unique_ptr<Classifier>()>;

// Gradient-boosted decision stumps on logistic loss.
class StumpBooster : public Classifier {
 public:
  struct Params {
    int rounds = 100;
    double learning_rate = 0.3;
    double lambda = 1.0;            // L2 penalty on leaf weights
    double min_child_weight = 1.0;  // minimum hessian sum per leaf
    std::uint64_t seed = 0;
  };
  struct Stump {
    std::size_t feature = 0;
    double threshold = 0.0;  // x <= threshold goes left
    double left = 0.0, right = 0.0;
    friend bool operator==(const Stump&, const Stump&) = default;
  };

  StumpBooster() = default;
  explicit StumpBooster(Params p) : params_(p) {}
  void fit(const Matrix& x, std::span<const int> y) override;
  std::vector<double> predict(const Matrix& x) const override;

  double base_margin() const { return base_; }
  const std::vector<Stump>& stumps() const { return stumps_; }

 private:
  Params params_;
  double base_ = 0.0;
  std::vector<Stump> stumps_;
};

double balanced_accuracy(std::span<const int> y, std::span<const int> predicted);
std::vector<int> threshold_predictions(std::span<const double> scores, double threshold = 0.5);
// Trapezoidal ROC area; tied scores count one half. Throws MetricError unless both classes occur.
double roc_auc(std::span<const int> y, std::span<const double> scores);

enum class SelectionMethod { Mrmr, MannWhitney };

// Fold index per sample. Samples are ordered by id, each class is shuffled
// with the seed and dealt round-robin. Throws StratificationError when a class
// has fewer samples than folds.
std::vector<std::size_t> stratified_folds(const std::vector<std::string>& sample_ids, std::span<const int> y,
                                          std::size_t folds, std::uint64_t seed);

struct FoldSelection {
  std::size_t fold = 0;
  std::vector<std::string> ranked;                // full ranking on the training split
  std::vector<double> balanced_accuracy_curve;    // validation score for N = 1..F
  std::vector<double> auc_curve;
};

struct SweepResult {
  std::size_t n_best = 0;
  std::vector<double> mean_balanced_accuracy;  // index N - 1
  std::vector<FoldSelection> folds;
};

SweepResult cv_sweep(const Cohort& cohort, std::size_t folds, SelectionMethod method, std::uint64_t seed,
                     int workers = 0, ClassifierFactory factory = {});

struct FeatureScore {
  std::string name;
  std::int64_t c = 0;
  std::optional<double> s;
};

// Occurrence count and log10 of summed 10^(n_best - rank) across folds, sorted
// by (c desc, s desc, name asc). Names in `universe` never selected are
// appended with c = 0 and no score.
std::vector<FeatureScore> aggregate_scores(const std::vector<std::vector<std::string>>& fold_rankings,
                                           std::size_t n_best, const std::vector<std::string>& universe = {});

std::string write_selection_report(const SweepResult& sweep, const std::vector<FeatureScore>& scores,
                                   SelectionMethod method, std::size_t folds, std::uint64_t seed);

}  // namespace hm
