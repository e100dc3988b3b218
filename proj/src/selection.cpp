#include "hm/selection.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "hm/errors.hpp"
#include "hm/parallel.hpp"
#include "hm/rng.hpp"
#include "json.hpp"

namespace hm {

// --- matrix / cohort -------------------------------------------------------

std::vector<double> Matrix::column(std::size_t c) const {
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) out[r] = at(r, c);
  return out;
}

Matrix Matrix::select_rows(std::span<const std::size_t> idx) const {
  Matrix m(idx.size(), cols);
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(idx[i] * cols), cols,
                m.data.begin() + static_cast<std::ptrdiff_t>(i * cols));
  return m;
}

Matrix Matrix::select_cols(std::span<const std::size_t> idx) const {
  Matrix m(rows, idx.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < idx.size(); ++j) m.at(r, j) = at(r, idx[j]);
  return m;
}

namespace {

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    std::string_view field = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    while (!field.empty() && std::isspace(static_cast<unsigned char>(field.front()))) field.remove_prefix(1);
    while (!field.empty() && std::isspace(static_cast<unsigned char>(field.back()))) field.remove_suffix(1);
    if (field.size() >= 2 && field.front() == '"' && field.back() == '"') field = field.substr(1, field.size() - 2);
    out.emplace_back(field);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

bool is_missing(const std::string& s) {
  return s.empty() || s == "NA" || s == "na" || s == "nan" || s == "NaN" || s == "null";
}

}  // namespace

Cohort parse_cohort_csv(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) lines.push_back(line);
    pos = nl + 1;
  }
  if (lines.empty()) throw ParseError("empty cohort CSV");
  const auto header = split_csv_line(lines[0]);
  std::optional<std::size_t> id_col, label_col;
  std::vector<std::size_t> feature_cols;
  Cohort c;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "sample_id") {
      id_col = i;
    } else if (header[i] == "label") {
      label_col = i;
    } else {
      if (header[i].empty()) throw ParseError("empty feature name in cohort header");
      feature_cols.push_back(i);
      c.feature_names.push_back(header[i]);
    }
  }
  if (!id_col || !label_col) throw ParseError("cohort CSV needs 'sample_id' and 'label' columns");
  if (std::set<std::string>(c.feature_names.begin(), c.feature_names.end()).size() != c.feature_names.size())
    throw ParseError("duplicate feature column in cohort CSV");

  const std::size_t n = lines.size() - 1;
  c.x = Matrix(n, feature_cols.size());
  std::set<std::string> ids;
  for (std::size_t r = 0; r < n; ++r) {
    const auto fields = split_csv_line(lines[r + 1]);
    if (fields.size() != header.size())
      throw ParseError("cohort row " + std::to_string(r + 1) + " has " + std::to_string(fields.size()) +
                       " fields, header has " + std::to_string(header.size()));
    const std::string& id = fields[*id_col];
    if (id.empty() || !ids.insert(id).second) throw ParseError("missing or duplicate sample_id '" + id + "'");
    c.sample_ids.push_back(id);
    if (fields[*label_col] == "0")
      c.y.push_back(0);
    else if (fields[*label_col] == "1")
      c.y.push_back(1);
    else
      throw ParseError("label must be 0 or 1 (sample '" + id + "')");
    for (std::size_t j = 0; j < feature_cols.size(); ++j) {
      const std::string& f = fields[feature_cols[j]];
      if (is_missing(f)) {
        c.x.at(r, j) = std::nan("");
        continue;
      }
      char* end = nullptr;
      const double v = std::strtod(f.c_str(), &end);
      if (end != f.c_str() + f.size() || !std::isfinite(v))
        throw ParseError("non-numeric value '" + f + "' in column '" + c.feature_names[j] + "'");
      c.x.at(r, j) = v;
    }
  }
  return c;
}

std::string write_cohort_csv(const Cohort& c) {
  std::string out = "sample_id,label";
  for (const auto& f : c.feature_names) out += "," + f;
  out += "\n";
  for (std::size_t r = 0; r < c.x.rows; ++r) {
    out += c.sample_ids[r] + "," + std::to_string(c.y[r]);
    for (std::size_t j = 0; j < c.x.cols; ++j) {
      out += ",";
      const double v = c.x.at(r, j);
      if (!std::isnan(v)) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out += buf;
      }
    }
    out += "\n";
  }
  return out;
}

std::vector<double> column_medians(const Matrix& x) {
  std::vector<double> med(x.cols, 0.0);
  std::vector<double> vals;
  for (std::size_t c = 0; c < x.cols; ++c) {
    vals.clear();
    for (std::size_t r = 0; r < x.rows; ++r)
      if (!std::isnan(x.at(r, c))) vals.push_back(x.at(r, c));
    if (vals.empty()) continue;  // all missing: impute 0
    std::sort(vals.begin(), vals.end());
    const std::size_t m = vals.size() / 2;
    med[c] = vals.size() % 2 ? vals[m] : 0.5 * (vals[m - 1] + vals[m]);
  }
  return med;
}

void impute(Matrix& x, std::span<const double> medians) {
  for (std::size_t r = 0; r < x.rows; ++r)
    for (std::size_t c = 0; c < x.cols; ++c)
      if (std::isnan(x.at(r, c))) x.at(r, c) = medians[c];
}

// --- mRMR ------------------------------------------------------------------

double f_statistic(std::span<const double> v, std::span<const int> y) {
  double sum[2] = {0, 0}, cnt[2] = {0, 0};
  for (std::size_t i = 0; i < v.size(); ++i) {
    sum[y[i] ? 1 : 0] += v[i];
    cnt[y[i] ? 1 : 0] += 1;
  }
  if (cnt[0] == 0 || cnt[1] == 0) throw SelectionError("F statistic needs both classes");
  const double n = cnt[0] + cnt[1];
  const double mean = (sum[0] + sum[1]) / n;
  const double m0 = sum[0] / cnt[0], m1 = sum[1] / cnt[1];
  const double between = cnt[0] * (m0 - mean) * (m0 - mean) + cnt[1] * (m1 - mean) * (m1 - mean);
  double within = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double d = v[i] - (y[i] ? m1 : m0);
    within += d * d;
  }
  if (between <= 0.0) return 0.0;
  return between * std::max(n - 2.0, 1.0) / (within + 1e-12);
}

double pearson(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

std::vector<std::size_t> mrmr_rank(const Matrix& x, std::span<const int> y, std::size_t n) {
  constexpr double kDelta = 1e-12;
  if (x.rows != y.size()) throw SelectionError("matrix and labels disagree in length");
  if (n > x.cols) throw SelectionError("requested more features than available");
  for (double v : x.data)
    if (std::isnan(v)) throw SelectionError("mRMR input contains missing values; impute first");

  std::vector<std::vector<double>> cols(x.cols);
  std::vector<double> relevance(x.cols);
  bool any_varying = false;
  for (std::size_t f = 0; f < x.cols; ++f) {
    cols[f] = x.column(f);
    relevance[f] = f_statistic(cols[f], y);
    const auto [lo, hi] = std::minmax_element(cols[f].begin(), cols[f].end());
    any_varying = any_varying || (x.rows > 0 && *lo < *hi);
  }
  if (!any_varying) throw SelectionError("every feature is constant");

  std::vector<std::size_t> selected;
  std::vector<double> redundancy_sum(x.cols, 0.0);
  std::vector<bool> taken(x.cols, false);
  while (selected.size() < n) {
    std::size_t best = x.cols;
    double best_score = -1.0;
    for (std::size_t f = 0; f < x.cols; ++f) {
      if (taken[f]) continue;
      const double redundancy = selected.empty() ? 0.0 : redundancy_sum[f] / static_cast<double>(selected.size());
      const double score = relevance[f] / (redundancy + kDelta);
      if (score > best_score) {
        best_score = score;
        best = f;
      }
    }
    taken[best] = true;
    selected.push_back(best);
    for (std::size_t f = 0; f < x.cols; ++f)
      if (!taken[f]) redundancy_sum[f] += std::abs(pearson(cols[f], cols[best]));
  }
  return selected;
}

// --- Mann-Whitney ----------------------------------------------------------

namespace {

// Number of arrangements with each U value, for m positives and k negatives.
std::vector<double> u_distribution(std::size_t m, std::size_t k) {
  // counts[i][j] over U handled by iterating m with a rolling table over k.
  std::vector<std::vector<std::vector<double>>> t(m + 1, std::vector<std::vector<double>>(k + 1));
  for (std::size_t i = 0; i <= m; ++i)
    for (std::size_t j = 0; j <= k; ++j) {
      t[i][j].assign(i * j + 1, 0.0);
      if (i == 0 || j == 0) {
        t[i][j][0] = 1.0;
        continue;
      }
      // Largest element is a positive (adds j to U) or a negative.
      for (std::size_t u = 0; u < t[i - 1][j].size(); ++u) t[i][j][u + j] += t[i - 1][j][u];
      for (std::size_t u = 0; u < t[i][j - 1].size(); ++u) t[i][j][u] += t[i][j - 1][u];
    }
  return t[m][k];
}

double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

}  // namespace

MannWhitney mann_whitney(std::span<const double> values, std::span<const int> y) {
  const std::size_t n = values.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> rank(n);
  double tie_term = 0;
  bool ties = false;
  for (std::size_t k = 0; k < n;) {
    std::size_t e = k;
    while (e < n && values[idx[e]] == values[idx[k]]) ++e;
    const double mid = 0.5 * static_cast<double>(k + 1 + e);
    for (std::size_t q = k; q < e; ++q) rank[idx[q]] = mid;
    const double t = static_cast<double>(e - k);
    tie_term += t * t * t - t;
    ties = ties || e - k > 1;
    k = e;
  }
  std::size_t n1 = 0;
  double r1 = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (y[i]) {
      ++n1;
      r1 += rank[i];
    }
  const std::size_t n0 = n - n1;
  if (n1 == 0 || n0 == 0) throw SelectionError("Mann-Whitney test needs both classes");

  MannWhitney out;
  const double dn1 = static_cast<double>(n1), dn0 = static_cast<double>(n0);
  out.u = r1 - dn1 * (dn1 + 1.0) / 2.0;
  const double mu = dn1 * dn0 / 2.0;

  if (!ties && n1 <= 8 && n0 <= 8) {
    const auto dist = u_distribution(n1, n0);
    const double total = std::accumulate(dist.begin(), dist.end(), 0.0);
    const auto u = static_cast<std::size_t>(std::llround(out.u));
    double lower = 0, upper = 0;
    for (std::size_t k = 0; k < dist.size(); ++k) {
      if (k <= u) lower += dist[k];
      if (k >= u) upper += dist[k];
    }
    out.p = std::min(1.0, 2.0 * std::min(lower, upper) / total);
    return out;
  }

  const double dn = dn1 + dn0;
  const double var = dn1 * dn0 / 12.0 * ((dn + 1.0) - tie_term / (dn * (dn - 1.0)));
  if (var <= 0.0) {
    out.p = 1.0;
    return out;
  }
  const double z = std::max(std::abs(out.u - mu) - 0.5, 0.0) / std::sqrt(var);
  out.p = std::min(1.0, 2.0 * normal_sf(z));
  return out;
}

std::vector<RankedFeature> mannwhitney_rank(const Matrix& x, std::span<const int> y) {
  std::vector<RankedFeature> out;
  for (std::size_t f = 0; f < x.cols; ++f) {
    const auto col = x.column(f);
    for (double v : col)
      if (std::isnan(v)) throw SelectionError("Mann-Whitney input contains missing values; impute first");
    const MannWhitney mw = mann_whitney(col, y);
    out.push_back({f, mw.u, mw.p});
  }
  std::stable_sort(out.begin(), out.end(), [](const RankedFeature& a, const RankedFeature& b) { return a.p < b.p; });
  return out;
}

// --- cross-validation --------------------------------------------------------

std::vector<std::size_t> stratified_folds(const std::vector<std::string>& ids, std::span<const int> y, std::size_t folds,
                                          std::uint64_t seed) {
  if (folds < 2) throw StratificationError("need at least 2 folds");
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });

  std::vector<std::size_t> assignment(ids.size(), 0);
  Engine eng = make_engine(seed, 0xf01d);
  for (int cls = 0; cls < 2; ++cls) {
    std::vector<std::size_t> members;
    for (std::size_t i : order)
      if ((y[i] != 0) == (cls == 1)) members.push_back(i);
    if (members.size() < folds)
      throw StratificationError("class " + std::to_string(cls) + " has " + std::to_string(members.size()) +
                                " samples, fewer than " + std::to_string(folds) + " folds");
    for (std::size_t k = members.size(); k > 1; --k) std::swap(members[k - 1], members[uniform_index(eng, k)]);
    for (std::size_t k = 0; k < members.size(); ++k) assignment[members[k]] = k % folds;
  }
  return assignment;
}

SweepResult cv_sweep(const Cohort& cohort, std::size_t folds, SelectionMethod method, std::uint64_t seed, int workers,
                     ClassifierFactory factory) {
  if (!factory) factory = [seed] {
    StumpBooster::Params p;
    p.seed = seed;
    return std::make_unique<StumpBooster>(p);
  };
  const std::size_t nf = cohort.x.cols;
  if (nf == 0) throw SelectionError("cohort has no features");
  if (cohort.y.size() != cohort.x.rows || cohort.sample_ids.size() != cohort.x.rows)
    throw SelectionError("cohort columns disagree in length");

  // Canonical sample order, so results do not depend on input row order.
  std::vector<std::size_t> order(cohort.x.rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return cohort.sample_ids[a] < cohort.sample_ids[b]; });
  const Matrix x = cohort.x.select_rows(order);
  std::vector<int> y;
  std::vector<std::string> ids;
  for (std::size_t i : order) {
    y.push_back(cohort.y[i]);
    ids.push_back(cohort.sample_ids[i]);
  }
  const auto assignment = stratified_folds(ids, y, folds, seed);

  struct FoldData {
    Matrix train, val;
    std::vector<int> ytrain, yval;
    std::vector<std::size_t> ranking;
  };
  std::vector<FoldData> data(folds);
  for (std::size_t k = 0; k < folds; ++k) {
    std::vector<std::size_t> tr, va;
    for (std::size_t i = 0; i < x.rows; ++i) (assignment[i] == k ? va : tr).push_back(i);
    FoldData& d = data[k];
    d.train = x.select_rows(tr);
    d.val = x.select_rows(va);
    for (std::size_t i : tr) d.ytrain.push_back(y[i]);
    for (std::size_t i : va) d.yval.push_back(y[i]);
    const auto medians = column_medians(d.train);
    impute(d.train, medians);
    impute(d.val, medians);
    if (method == SelectionMethod::Mrmr) {
      d.ranking = mrmr_rank(d.train, d.ytrain, nf);
    } else {
      for (const auto& r : mannwhitney_rank(d.train, d.ytrain)) d.ranking.push_back(r.feature);
    }
  }

  SweepResult res;
  res.folds.resize(folds);
  for (std::size_t k = 0; k < folds; ++k) {
    res.folds[k].fold = k;
    for (std::size_t f : data[k].ranking) res.folds[k].ranked.push_back(cohort.feature_names[f]);
    res.folds[k].balanced_accuracy_curve.assign(nf, 0.0);
    res.folds[k].auc_curve.assign(nf, 0.0);
  }

  const auto jobs = static_cast<std::int64_t>(folds * nf);
  std::string failure;
#pragma omp parallel for num_threads(resolve_workers(workers)) schedule(dynamic, 1)
  for (std::int64_t job = 0; job < jobs; ++job) {
    const auto k = static_cast<std::size_t>(job) / nf;
    const auto count = static_cast<std::size_t>(job) % nf + 1;
    const FoldData& d = data[k];
    const std::span<const std::size_t> top(d.ranking.data(), count);
    try {
      auto model = factory();
      model->fit(d.train.select_cols(top), d.ytrain);
      const auto scores = model->predict(d.val.select_cols(top));
      res.folds[k].balanced_accuracy_curve[count - 1] = balanced_accuracy(d.yval, threshold_predictions(scores));
      res.folds[k].auc_curve[count - 1] = roc_auc(d.yval, scores);
    } catch (const std::exception& e) {
#pragma omp critical
      failure = e.what();
    }
  }
  if (!failure.empty()) throw TrainError(failure);

  res.mean_balanced_accuracy.assign(nf, 0.0);
  for (std::size_t n = 0; n < nf; ++n) {
    double s = 0;
    for (const auto& f : res.folds) s += f.balanced_accuracy_curve[n];
    res.mean_balanced_accuracy[n] = s / static_cast<double>(folds);
  }
  res.n_best = static_cast<std::size_t>(
                   std::max_element(res.mean_balanced_accuracy.begin(), res.mean_balanced_accuracy.end()) -
                   res.mean_balanced_accuracy.begin()) +
               1;
  return res;
}

std::vector<FeatureScore> aggregate_scores(const std::vector<std::vector<std::string>>& fold_rankings,
                                           std::size_t n_best, const std::vector<std::string>& universe) {
  std::map<std::string, std::vector<double>> exponents;
  for (const auto& ranking : fold_rankings) {
    const std::size_t upto = std::min(n_best, ranking.size());
    for (std::size_t r = 0; r < upto; ++r)
      exponents[ranking[r]].push_back(static_cast<double>(n_best) - static_cast<double>(r + 1));
  }
  std::vector<FeatureScore> out;
  for (auto& [name, ex] : exponents) {
    // log10(sum 10^e) around the largest exponent; summing in sorted order
    // keeps the result independent of fold order.
    std::sort(ex.begin(), ex.end());
    const double top = ex.back();
    double sum = 0;
    for (double e : ex) sum += std::pow(10.0, e - top);
    out.push_back({name, static_cast<std::int64_t>(ex.size()), top + std::log10(sum)});
  }
  std::sort(out.begin(), out.end(), [](const FeatureScore& a, const FeatureScore& b) {
    if (a.c != b.c) return a.c > b.c;
    if (*a.s != *b.s) return *a.s > *b.s;
    return a.name < b.name;
  });
  std::vector<std::string> unselected;
  for (const auto& name : universe)
    if (!exponents.contains(name)) unselected.push_back(name);
  std::sort(unselected.begin(), unselected.end());
  unselected.erase(std::unique(unselected.begin(), unselected.end()), unselected.end());
  for (auto& name : unselected) out.push_back({name, 0, std::nullopt});
  return out;
}

std::string write_selection_report(const SweepResult& sweep, const std::vector<FeatureScore>& scores,
                                   SelectionMethod method, std::size_t folds, std::uint64_t seed) {
  nlohmann::ordered_json doc;
  doc["method"] = method == SelectionMethod::Mrmr ? "mrmr" : "mannwhitney";
  doc["folds"] = folds;
  doc["seed"] = seed;
  doc["n_best"] = sweep.n_best;
  doc["mean_balanced_accuracy"] = sweep.mean_balanced_accuracy;
  doc["fold_selections"] = nlohmann::ordered_json::array();
  for (const auto& f : sweep.folds) {
    nlohmann::ordered_json e;
    e["fold"] = f.fold;
    e["selected"] = std::vector<std::string>(f.ranked.begin(), f.ranked.begin() + static_cast<std::ptrdiff_t>(sweep.n_best));
    e["balanced_accuracy_at_n_best"] = f.balanced_accuracy_curve[sweep.n_best - 1];
    e["auc_at_n_best"] = f.auc_curve[sweep.n_best - 1];
    e["balanced_accuracy"] = f.balanced_accuracy_curve;
    e["ranking"] = f.ranked;
    doc["fold_selections"].push_back(std::move(e));
  }
  doc["feature_scores"] = nlohmann::ordered_json::array();
  for (const auto& s : scores) {
    nlohmann::ordered_json e;
    e["name"] = s.name;
    e["c"] = s.c;
    e["s"] = s.s ? nlohmann::ordered_json(*s.s) : nlohmann::ordered_json(nullptr);
    doc["feature_scores"].push_back(std::move(e));
  }
  return doc.dump(1) + "\n";
}

}  // namespace hm
