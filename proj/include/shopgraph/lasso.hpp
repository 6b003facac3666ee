// Copyright 2026 The shopgraph Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Value-driven feature selection.
//
// The LASSO objective minimised here is
//
//   (1 / 2n) * ||y - b0 - X b||_2^2 + alpha * ||b||_1
//
// with an unpenalised intercept b0, solved by cyclic coordinate descent with
// exact soft-threshold updates. Alpha values are only comparable under this
// scaling and with standardised predictors (population standard deviation).

#ifndef SHOPGRAPH_LASSO_HPP
#define SHOPGRAPH_LASSO_HPP

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <span>

#include "shopgraph/ingest.hpp"

namespace shopgraph {

struct DesignMatrix {
  Eigen::MatrixXd x;              // n x p, standardised columns
  Eigen::VectorXd y;              // n responses
  Eigen::VectorXd column_means;   // of the raw columns that were kept
  Eigen::VectorXd column_scales;  // population standard deviations
  std::vector<std::string> col_ids;
  std::vector<std::string> row_ids;
  std::vector<std::string> dropped_constant;  // zero-variance columns removed

  Eigen::Index rows() const { return x.rows(); }
  Eigen::Index cols() const { return x.cols(); }

  /// Row subset, columns left as they are (not re-standardised).
  DesignMatrix subset_rows(std::span<const std::size_t> rows_to_keep) const {
    DesignMatrix d;
    const auto n = static_cast<Eigen::Index>(rows_to_keep.size());
    d.x.resize(n, x.cols());
    d.y.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto r = static_cast<Eigen::Index>(rows_to_keep[static_cast<std::size_t>(i)]);
      d.x.row(i) = x.row(r);
      d.y(i) = y(r);
      if (!row_ids.empty()) d.row_ids.push_back(row_ids[static_cast<std::size_t>(r)]);
    }
    d.column_means = column_means;
    d.column_scales = column_scales;
    d.col_ids = col_ids;
    return d;
  }
};

/// Centers and scales each column to mean 0 and population variance 1.
/// Zero-variance columns are removed and listed in `dropped_constant`.
inline DesignMatrix standardize(const Eigen::MatrixXd& raw, const Eigen::VectorXd& y,
                                std::vector<std::string> col_ids, std::vector<std::string> row_ids = {}) {
  if (raw.rows() < 2) throw Error("standardize: need at least 2 rows");
  if (raw.rows() != y.size()) throw Error("standardize: response length mismatch");
  if (static_cast<Eigen::Index>(col_ids.size()) != raw.cols())
    throw Error("standardize: column id count mismatch");
  const double n = static_cast<double>(raw.rows());
  DesignMatrix d;
  std::vector<Eigen::Index> keep;
  std::vector<double> means, scales;
  for (Eigen::Index j = 0; j < raw.cols(); ++j) {
    const double mean = raw.col(j).sum() / n;
    const double var = (raw.col(j).array() - mean).square().sum() / n;
    const double sd = std::sqrt(var);
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
      d.dropped_constant.push_back(col_ids[static_cast<std::size_t>(j)]);
      continue;
    }
    keep.push_back(j);
    means.push_back(mean);
    scales.push_back(sd);
  }
  const auto p = static_cast<Eigen::Index>(keep.size());
  d.x.resize(raw.rows(), p);
  d.column_means.resize(p);
  d.column_scales.resize(p);
  for (Eigen::Index k = 0; k < p; ++k) {
    const auto j = keep[static_cast<std::size_t>(k)];
    d.column_means(k) = means[static_cast<std::size_t>(k)];
    d.column_scales(k) = scales[static_cast<std::size_t>(k)];
    d.x.col(k) = (raw.col(j).array() - d.column_means(k)) / d.column_scales(k);
    d.col_ids.push_back(col_ids[static_cast<std::size_t>(j)]);
  }
  d.y = y;
  d.row_ids = std::move(row_ids);
  return d;
}

/// Design from the incidence matrix; `responses` maps customer id to its
/// transformed score and must cover every matrix row.
inline DesignMatrix standardize(const PurchaseMatrix& p, const std::map<std::string, double>& responses) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(p.rows()));
  for (std::size_t i = 0; i < p.rows(); ++i) {
    auto it = responses.find(p.row_ids()[i]);
    if (it == responses.end()) throw Error("standardize: no response for customer " + p.row_ids()[i]);
    y(static_cast<Eigen::Index>(i)) = it->second;
  }
  return standardize(p.to_dense(), y, p.col_ids(), p.row_ids());
}

struct SolverConfig {
  double tol = 1e-7;  // max absolute coefficient change per sweep
  int max_iter = 10000;
};

struct LassoModel {
  double alpha = 0.0;
  double intercept = 0.0;
  Eigen::VectorXd beta;
  int n_iter = 0;
  double max_coord_delta = 0.0;
  bool converged = false;
  std::vector<double> objective_trace;  // objective after each sweep (first entry: start)

  std::vector<Eigen::Index> support() const {
    std::vector<Eigen::Index> s;
    for (Eigen::Index j = 0; j < beta.size(); ++j)
      if (beta(j) != 0.0) s.push_back(j);
    return s;
  }
  std::size_t nonzeros() const { return support().size(); }

  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const {
    return (x * beta).array() + intercept;
  }
};

inline double soft_threshold(double z, double gamma) {
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return 0.0;
}

inline double lasso_objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double intercept,
                              const Eigen::VectorXd& beta, double alpha) {
  const double n = static_cast<double>(x.rows());
  const Eigen::VectorXd r = y - x * beta - Eigen::VectorXd::Constant(y.size(), intercept);
  return r.squaredNorm() / (2.0 * n) + alpha * beta.lpNorm<1>();
}

/// Smallest alpha with an all-zero solution: max_j |x_j' (y - mean(y))| / n on centred columns.
inline double alpha_max(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  const double n = static_cast<double>(x.rows());
  const Eigen::RowVectorXd xm = x.colwise().mean();
  const Eigen::MatrixXd xc = x.rowwise() - xm;
  const Eigen::VectorXd yc = y.array() - y.mean();
  // same per-column dot as the first solver sweep, so alpha == alpha_max gives exact zeros
  double top = 0.0;
  for (Eigen::Index j = 0; j < xc.cols(); ++j) top = std::max(top, std::abs(xc.col(j).dot(yc) / n));
  return top;
}

/// Cyclic coordinate descent. Columns are centred internally, so the intercept
/// is exact for any design and equals mean(y) when the columns are centred.
inline LassoModel fit_lasso(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double alpha,
                            const SolverConfig& cfg = {},
                            const std::optional<Eigen::VectorXd>& warm_start = std::nullopt) {
  if (!(alpha > 0.0)) throw Error("fit_lasso: alpha must be positive");
  if (x.rows() != y.size() || x.rows() == 0) throw Error("fit_lasso: shape mismatch");
  if (!x.allFinite() || !y.allFinite()) throw Error("fit_lasso: non-finite values in design");
  const double n = static_cast<double>(x.rows());
  const Eigen::Index p = x.cols();

  const Eigen::RowVectorXd xm = x.colwise().mean();
  const Eigen::MatrixXd xc = x.rowwise() - xm;
  const double ybar = y.mean();
  const Eigen::VectorXd yc = y.array() - ybar;
  const Eigen::VectorXd col_sq = xc.colwise().squaredNorm().transpose() / n;

  LassoModel m;
  m.alpha = alpha;
  m.beta = warm_start ? *warm_start : Eigen::VectorXd::Zero(p);
  if (m.beta.size() != p) throw Error("fit_lasso: warm start has wrong length");
  for (Eigen::Index j = 0; j < p; ++j)
    if (col_sq(j) == 0.0) m.beta(j) = 0.0;
  Eigen::VectorXd r = yc - xc * m.beta;
  auto objective = [&] { return r.squaredNorm() / (2.0 * n) + alpha * m.beta.lpNorm<1>(); };
  m.objective_trace.push_back(objective());

  for (int it = 0; it < cfg.max_iter; ++it) {
    double max_delta = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (col_sq(j) == 0.0) continue;
      const double old = m.beta(j);
      const double rho = xc.col(j).dot(r) / n + col_sq(j) * old;
      const double updated = soft_threshold(rho, alpha) / col_sq(j);
      const double delta = updated - old;
      if (delta != 0.0) {
        r.noalias() -= delta * xc.col(j);
        m.beta(j) = updated;
        max_delta = std::max(max_delta, std::abs(delta));
      }
    }
    m.n_iter = it + 1;
    m.max_coord_delta = max_delta;
    m.objective_trace.push_back(objective());
    if (max_delta < cfg.tol) {
      m.converged = true;
      break;
    }
  }
  m.intercept = ybar - xm.dot(m.beta);
  return m;
}

inline LassoModel fit_lasso(const DesignMatrix& d, double alpha, const SolverConfig& cfg = {}) {
  return fit_lasso(d.x, d.y, alpha, cfg);
}

/// `count` log-spaced values from alpha_max * ratio up to alpha_max, descending.
inline std::vector<double> alpha_grid(const DesignMatrix& d, std::size_t count = 100, double ratio = 1e-4) {
  const double top = alpha_max(d.x, d.y);
  if (!(top > 0.0)) throw Error("alpha_grid: response is uncorrelated with every column");
  std::vector<double> g(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double t = count == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(count - 1);
    g[i] = top * std::pow(ratio, t);
  }
  return g;
}

struct CvPoint {
  double alpha = 0.0;
  double mean_mse = 0.0;
  std::vector<double> fold_mse;
};

struct CvResult {
  double alpha_best = 0.0;
  std::vector<CvPoint> curve;  // in descending alpha order
};

/// Fold id per row: a seeded permutation dealt round-robin into k folds.
inline std::vector<int> assign_folds(std::size_t n, int k, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng(seed);
  rng.shuffle(perm);
  std::vector<int> fold(n);
  for (std::size_t i = 0; i < n; ++i) fold[perm[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
  return fold;
}

/// K-fold CV over `grid`. The best alpha minimises mean fold MSE; exact ties go
/// to the larger alpha.
inline CvResult cross_validate_alpha(const DesignMatrix& d, std::vector<double> grid, int k,
                                     std::uint64_t seed, const SolverConfig& cfg = {}) {
  if (k < 2) throw Error("cross_validate_alpha: need at least 2 folds");
  if (grid.empty()) throw Error("cross_validate_alpha: empty alpha grid");
  const auto n = static_cast<std::size_t>(d.rows());
  if (n < 2 * static_cast<std::size_t>(k))
    throw Error("cross_validate_alpha: a fold would have fewer than 2 rows (n=" + std::to_string(n) +
                ", k=" + std::to_string(k) + ")");
  std::sort(grid.begin(), grid.end(), std::greater<>());
  const auto fold = assign_folds(n, k, seed);

  CvResult res;
  res.curve.resize(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) res.curve[g].alpha = grid[g];
  for (int f = 0; f < k; ++f) {
    std::vector<std::size_t> train, test;
    for (std::size_t i = 0; i < n; ++i) (fold[i] == f ? test : train).push_back(i);
    const DesignMatrix tr = d.subset_rows(train);
    const DesignMatrix te = d.subset_rows(test);
    std::optional<Eigen::VectorXd> warm;
    for (std::size_t g = 0; g < grid.size(); ++g) {
      const LassoModel m = fit_lasso(tr.x, tr.y, grid[g], cfg, warm);
      warm = m.beta;
      const double mse = (te.y - m.predict(te.x)).squaredNorm() / static_cast<double>(test.size());
      res.curve[g].fold_mse.push_back(mse);
    }
  }
  double best = std::numeric_limits<double>::infinity();
  for (auto& pt : res.curve) {
    double s = 0.0;
    for (double v : pt.fold_mse) s += v;
    pt.mean_mse = s / static_cast<double>(k);
    if (pt.mean_mse < best) {  // descending alpha order: strict < keeps the larger alpha on ties
      best = pt.mean_mse;
      res.alpha_best = pt.alpha;
    }
  }
  return res;
}

/// Seeded holdout rows (sorted), round(n * fraction) of them, at least one.
inline std::vector<std::size_t> holdout_split(std::size_t n, double fraction, std::uint64_t seed) {
  if (n < 2) throw Error("holdout_split: need at least 2 rows");
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng(seed);
  rng.shuffle(perm);
  auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  count = std::clamp<std::size_t>(count, 1, n - 1);
  std::vector<std::size_t> h(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(count));
  std::sort(h.begin(), h.end());
  return h;
}

inline std::vector<std::size_t> complement_rows(std::size_t n, std::span<const std::size_t> rows) {
  std::vector<bool> in(n, false);
  for (auto r : rows) {
    if (r >= n) throw Error("row index out of range");
    if (in[r]) throw Error("duplicate row index in subset");
    in[r] = true;
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i)
    if (!in[i]) out.push_back(i);
  return out;
}

struct OlsFit {
  double intercept = 0.0;
  Eigen::VectorXd coef;
  bool ridge_fallback = false;
};

inline constexpr double kRidgeFallback = 1e-8;

/// Least squares with intercept on the given columns. Rank-deficient systems
/// are solved with a tiny ridge penalty and flagged.
inline OlsFit fit_ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  OlsFit f;
  const double ybar = y.mean();
  if (x.cols() == 0) {
    f.intercept = ybar;
    f.coef.resize(0);
    return f;
  }
  const Eigen::RowVectorXd xm = x.colwise().mean();
  const Eigen::MatrixXd xc = x.rowwise() - xm;
  const Eigen::VectorXd yc = y.array() - ybar;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xc);
  if (qr.rank() == xc.cols()) {
    f.coef = qr.solve(yc);
  } else {
    Eigen::MatrixXd gram = xc.transpose() * xc;
    gram.diagonal().array() += kRidgeFallback;
    f.coef = gram.ldlt().solve(xc.transpose() * yc);
    f.ridge_fallback = true;
  }
  f.intercept = ybar - xm.dot(f.coef);
  return f;
}

struct DropPoint {
  std::size_t n_features = 0;
  double holdout_mse = 0.0;
  double train_mse = 0.0;
  std::vector<std::string> features;  // surviving stock codes, design column order
  Eigen::VectorXd coefficients;       // OLS refit on `features`
  double intercept = 0.0;
  bool ridge_fallback = false;
};

struct DropExperimentCurve {
  std::vector<DropPoint> points;  // n_features strictly decreasing
};

/// Starting from the LASSO support, refit OLS on the training rows, record the
/// holdout MSE, drop the feature with the smallest |refit coefficient| (ties:
/// lexicographically larger stock code) and repeat down to zero features.
inline DropExperimentCurve drop_experiment(const DesignMatrix& d, const LassoModel& model,
                                           std::span<const std::size_t> holdout) {
  if (holdout.empty()) throw Error("drop_experiment: empty holdout");
  if (model.beta.size() != d.cols()) throw Error("drop_experiment: model does not match design");
  std::vector<Eigen::Index> active = model.support();
  if (active.empty()) throw Error("drop_experiment: model has no nonzero coefficient");
  const auto train = complement_rows(static_cast<std::size_t>(d.rows()), holdout);
  if (train.size() < 2) throw Error("drop_experiment: fewer than 2 training rows");
  const DesignMatrix tr = d.subset_rows(train);
  const DesignMatrix te = d.subset_rows(holdout);

  DropExperimentCurve curve;
  while (true) {
    Eigen::MatrixXd xtr(tr.rows(), static_cast<Eigen::Index>(active.size()));
    Eigen::MatrixXd xte(te.rows(), static_cast<Eigen::Index>(active.size()));
    for (std::size_t k = 0; k < active.size(); ++k) {
      xtr.col(static_cast<Eigen::Index>(k)) = tr.x.col(active[k]);
      xte.col(static_cast<Eigen::Index>(k)) = te.x.col(active[k]);
    }
    const OlsFit fit = fit_ols(xtr, tr.y);
    DropPoint pt;
    pt.n_features = active.size();
    pt.coefficients = fit.coef;
    pt.intercept = fit.intercept;
    pt.ridge_fallback = fit.ridge_fallback;
    for (auto j : active) pt.features.push_back(d.col_ids[static_cast<std::size_t>(j)]);
    const Eigen::VectorXd pred_te = (xte * fit.coef).array() + fit.intercept;
    const Eigen::VectorXd pred_tr = (xtr * fit.coef).array() + fit.intercept;
    pt.holdout_mse = (te.y - pred_te).squaredNorm() / static_cast<double>(te.rows());
    pt.train_mse = (tr.y - pred_tr).squaredNorm() / static_cast<double>(tr.rows());
    curve.points.push_back(std::move(pt));
    if (active.empty()) break;

    std::size_t drop = 0;
    for (std::size_t k = 1; k < active.size(); ++k) {
      const double a = std::abs(fit.coef(static_cast<Eigen::Index>(k)));
      const double b = std::abs(fit.coef(static_cast<Eigen::Index>(drop)));
      if (a < b || (a == b && d.col_ids[static_cast<std::size_t>(active[k])] >
                                  d.col_ids[static_cast<std::size_t>(active[drop])]))
        drop = k;
    }
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(drop));
  }
  return curve;
}

struct SelectionRule {
  double slack = 0.05;
};

struct RankedFeature {
  std::string stock_code;
  double beta = 0.0;  // refit coefficient on standardised purchases
  double importance = 0.0;
  std::size_t rank = 0;  // 1-based
};

struct FeatureRanking {
  std::vector<RankedFeature> features;  // descending importance
  std::size_t selected_count = 0;
  std::size_t selected_point = 0;  // index into the curve
};

/// Smallest feature count whose holdout MSE is within (1 + slack) of the best,
/// ranked by |coefficient| of that refit (ties: stock code ascending).
inline FeatureRanking select_features(const DropExperimentCurve& curve, const SelectionRule& rule = {}) {
  if (curve.points.empty()) throw Error("select_features: empty curve");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : curve.points) best = std::min(best, p.holdout_mse);
  const double limit = (1.0 + rule.slack) * best;
  std::size_t chosen = 0;
  bool found = false;
  for (std::size_t i = 0; i < curve.points.size(); ++i) {
    const auto& p = curve.points[i];
    if (p.holdout_mse <= limit && (!found || p.n_features < curve.points[chosen].n_features)) {
      chosen = i;
      found = true;
    }
  }
  const DropPoint& pt = curve.points[chosen];
  FeatureRanking r;
  r.selected_point = chosen;
  r.selected_count = pt.n_features;
  for (std::size_t k = 0; k < pt.features.size(); ++k) {
    const double b = pt.coefficients(static_cast<Eigen::Index>(k));
    r.features.push_back({pt.features[k], b, std::abs(b), 0});
  }
  std::sort(r.features.begin(), r.features.end(), [](const RankedFeature& a, const RankedFeature& b) {
    return a.importance != b.importance ? a.importance > b.importance : a.stock_code < b.stock_code;
  });
  for (std::size_t k = 0; k < r.features.size(); ++k) r.features[k].rank = k + 1;
  return r;
}

/// Where residuals are standardised from: their own moments, or a known scale.
struct ResidualScale {
  std::optional<double> mean;
  std::optional<double> sd;
};

struct DiagnosticsReport {
  std::vector<std::pair<double, double>> predicted_actual;
  std::vector<std::pair<double, double>> pp_points;  // (empirical CDF, normal CDF)
  double max_pp_deviation = 0.0;
  double mse = 0.0;
  double r2 = 0.0;
  bool degenerate = false;  // zero residual variance: no P-P plot
};

/// Predicted-vs-actual pairs and P-P coordinates of the standardised residuals,
/// with plotting positions (i - 0.5) / n.
inline DiagnosticsReport residual_diagnostics(const Eigen::VectorXd& predicted, const Eigen::VectorXd& actual,
                                              const ResidualScale& scale = {}) {
  if (predicted.size() == 0) throw Error("residual_diagnostics: empty holdout");
  if (predicted.size() != actual.size()) throw Error("residual_diagnostics: length mismatch");
  DiagnosticsReport rep;
  const auto n = static_cast<std::size_t>(predicted.size());
  for (std::size_t i = 0; i < n; ++i)
    rep.predicted_actual.emplace_back(predicted(static_cast<Eigen::Index>(i)), actual(static_cast<Eigen::Index>(i)));
  const Eigen::VectorXd resid = actual - predicted;
  rep.mse = resid.squaredNorm() / static_cast<double>(n);
  const double ss_tot = (actual.array() - actual.mean()).square().sum();
  rep.r2 = ss_tot > 0 ? 1.0 - resid.squaredNorm() / ss_tot : 0.0;

  const double mu = scale.mean.value_or(resid.mean());
  const double sd = scale.sd.value_or(std::sqrt((resid.array() - resid.mean()).square().sum() / static_cast<double>(n)));
  const double scale_ref = std::max({1.0, std::abs(mu), actual.cwiseAbs().maxCoeff()});
  if (!(sd > 1e-12 * scale_ref) || !std::isfinite(sd)) {
    rep.degenerate = true;
    return rep;
  }
  std::vector<double> z(n);
  for (std::size_t i = 0; i < n; ++i) z[i] = (resid(static_cast<Eigen::Index>(i)) - mu) / sd;
  std::sort(z.begin(), z.end());
  for (std::size_t i = 0; i < n; ++i) {
    const double emp = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    const double theo = normal_cdf(z[i]);
    rep.pp_points.emplace_back(emp, theo);
    rep.max_pp_deviation = std::max(rep.max_pp_deviation, std::abs(emp - theo));
  }
  return rep;
}

}  // namespace shopgraph

#endif  // SHOPGRAPH_LASSO_HPP
