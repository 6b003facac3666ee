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

// Regularised non-negative matrix factorisation P ~ W H.
//
// Objective (no dimension-dependent rescaling of the penalties):
//
//   1/2 ||M o (P - W H)||_F^2
//     + alpha_m * l1_ratio * (|W|_1 + |H|_1)
//     + 1/2 * alpha_m * (1 - l1_ratio) * (||W||_F^2 + ||H||_F^2)
//
// M is a 0/1 observation mask (all ones for an ordinary fit). Every entry of
// W and H is updated by exact coordinate minimisation (HALS), so the objective
// never increases between sweeps.

#ifndef SHOPGRAPH_NMF_HPP
#define SHOPGRAPH_NMF_HPP

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <atomic>
#include <thread>

#include "shopgraph/ingest.hpp"

namespace shopgraph {

enum class NmfInit { random_uniform, nndsvd };

struct NmfConfig {
  int k = 5;
  double alpha_m = 0.0;
  double l1_ratio = 0.0;
  double tol = 1e-6;  // relative objective decrease
  int max_iter = 500;
  std::uint64_t seed = 0;
  NmfInit init = NmfInit::random_uniform;
};

struct Factorization {
  Eigen::MatrixXd w;  // n x k affinities
  Eigen::MatrixXd h;  // k x m dictionary
  std::vector<double> objective_trace;  // initial value, then one per sweep
  bool converged = false;
  int n_iter = 0;
  std::vector<std::string> row_ids;
  std::vector<std::string> col_ids;

  Eigen::MatrixXd reconstruct() const { return w * h; }
};

/// Held-out (row, col) positions, sorted.
struct HoldoutMask {
  std::vector<std::pair<std::size_t, std::size_t>> held_out;
  double fraction = 0.0;

  Eigen::MatrixXd observed(Eigen::Index rows, Eigen::Index cols) const {
    Eigen::MatrixXd m = Eigen::MatrixXd::Ones(rows, cols);
    for (auto [r, c] : held_out) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = 0.0;
    return m;
  }
};

/// Uniform seeded sample of the stored (positive) entries.
inline HoldoutMask make_holdout_mask(const PurchaseMatrix& p, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw Error("make_holdout_mask: fraction must be in (0, 1)");
  std::vector<std::pair<std::size_t, std::size_t>> pos;
  for (const auto& e : p.entries()) pos.emplace_back(e.row, e.col);
  const auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(pos.size())));
  Rng rng(seed);
  // partial Fisher-Yates: the first `count` slots become the sample
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.index(pos.size() - i));
    std::swap(pos[i], pos[j]);
  }
  HoldoutMask mask;
  mask.held_out.assign(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(count));
  std::sort(mask.held_out.begin(), mask.held_out.end());
  mask.fraction = fraction;
  return mask;
}

namespace detail {

inline double nmf_penalty(const Eigen::MatrixXd& w, const Eigen::MatrixXd& h, double alpha_m, double l1_ratio) {
  const double l1 = alpha_m * l1_ratio;
  const double l2 = alpha_m * (1.0 - l1_ratio);
  return l1 * (w.sum() + h.sum()) + 0.5 * l2 * (w.squaredNorm() + h.squaredNorm());
}

inline void check_nonnegative(const Eigen::MatrixXd& p) {
  if (!p.allFinite()) throw Error("fit_nmf: non-finite input entry");
  if ((p.array() < 0.0).any()) throw Error("fit_nmf: negative input entry");
}

inline void nndsvd_init(const Eigen::MatrixXd& p, int k, Eigen::MatrixXd& w, Eigen::MatrixXd& h) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(p, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& u = svd.matrixU();
  const auto& v = svd.matrixV();
  const auto& s = svd.singularValues();
  w = Eigen::MatrixXd::Zero(p.rows(), k);
  h = Eigen::MatrixXd::Zero(k, p.cols());
  w.col(0) = std::sqrt(s(0)) * u.col(0).cwiseAbs();
  h.row(0) = std::sqrt(s(0)) * v.col(0).cwiseAbs().transpose();
  for (int j = 1; j < k && j < s.size(); ++j) {
    const Eigen::VectorXd x = u.col(j), y = v.col(j);
    const Eigen::VectorXd xp = x.cwiseMax(0.0), xn = (-x).cwiseMax(0.0);
    const Eigen::VectorXd yp = y.cwiseMax(0.0), yn = (-y).cwiseMax(0.0);
    const double xpn = xp.norm(), ypn = yp.norm(), xnn = xn.norm(), ynn = yn.norm();
    const double mp = xpn * ypn, mn = xnn * ynn;
    Eigen::VectorXd uu, vv;
    double sigma;
    if (mp > mn) {
      uu = xpn > 0 ? Eigen::VectorXd(xp / xpn) : xp;
      vv = ypn > 0 ? Eigen::VectorXd(yp / ypn) : yp;
      sigma = mp;
    } else {
      uu = xnn > 0 ? Eigen::VectorXd(xn / xnn) : xn;
      vv = ynn > 0 ? Eigen::VectorXd(yn / ynn) : yn;
      sigma = mn;
    }
    const double lbd = std::sqrt(s(j) * sigma);
    w.col(j) = lbd * uu;
    h.row(j) = lbd * vv.transpose();
  }
}

}  // namespace detail

/// Full objective against an unmasked matrix.
inline double objective_value(const Eigen::MatrixXd& p, const Eigen::MatrixXd& w, const Eigen::MatrixXd& h,
                              const NmfConfig& cfg) {
  if (w.rows() != p.rows() || h.cols() != p.cols() || w.cols() != h.rows())
    throw Error("objective_value: dimension mismatch");
  return 0.5 * (p - w * h).squaredNorm() + detail::nmf_penalty(w, h, cfg.alpha_m, cfg.l1_ratio);
}

inline double objective_value(const PurchaseMatrix& p, const Factorization& f, const NmfConfig& cfg) {
  return objective_value(p.to_dense(), f.w, f.h, cfg);
}

/// Objective with held-out entries excluded from the data term.
inline double masked_objective_value(const Eigen::MatrixXd& p, const Eigen::MatrixXd& observed,
                                     const Eigen::MatrixXd& w, const Eigen::MatrixXd& h, const NmfConfig& cfg) {
  return 0.5 * observed.cwiseProduct(p - w * h).squaredNorm() +
         detail::nmf_penalty(w, h, cfg.alpha_m, cfg.l1_ratio);
}

/// HALS fit. With `mask`, held-out entries are zeroed before anything else
/// reads the matrix, so their values cannot influence the result.
inline Factorization fit_nmf(const Eigen::MatrixXd& p_in, const NmfConfig& cfg,
                             const HoldoutMask* mask = nullptr) {
  detail::check_nonnegative(p_in);
  const Eigen::Index n = p_in.rows(), m = p_in.cols();
  if (cfg.k < 1) throw Error("fit_nmf: k must be at least 1");
  if (cfg.k > std::min(n, m))
    throw Error("fit_nmf: k=" + std::to_string(cfg.k) + " exceeds min(n, m)=" + std::to_string(std::min(n, m)));
  if (cfg.alpha_m < 0.0 || cfg.l1_ratio < 0.0 || cfg.l1_ratio > 1.0)
    throw Error("fit_nmf: alpha_m must be >= 0 and l1_ratio in [0, 1]");
  const int k = cfg.k;

  const Eigen::MatrixXd obs = mask ? mask->observed(n, m) : Eigen::MatrixXd::Ones(n, m);
  const Eigen::MatrixXd p = obs.cwiseProduct(p_in);
  const double l1 = cfg.alpha_m * cfg.l1_ratio;
  const double l2 = cfg.alpha_m * (1.0 - cfg.l1_ratio);

  Factorization f;
  if (cfg.init == NmfInit::nndsvd) {
    detail::nndsvd_init(p, k, f.w, f.h);
  } else {
    const double n_obs = obs.sum();
    const double mean = n_obs > 0 ? p.sum() / n_obs : 0.0;
    const double scale = std::sqrt(mean / k);
    Rng rng(cfg.seed);
    f.w.resize(n, k);
    f.h.resize(k, m);
    for (Eigen::Index i = 0; i < n; ++i)
      for (int c = 0; c < k; ++c) f.w(i, c) = scale * rng.uniform();
    for (int c = 0; c < k; ++c)
      for (Eigen::Index j = 0; j < m; ++j) f.h(c, j) = scale * rng.uniform();
  }

  Eigen::MatrixXd resid = obs.cwiseProduct(p - f.w * f.h);
  auto objective = [&] { return 0.5 * resid.squaredNorm() + detail::nmf_penalty(f.w, f.h, cfg.alpha_m, cfg.l1_ratio); };
  f.objective_trace.push_back(objective());

  Eigen::VectorXd num, den, fresh;
  Eigen::RowVectorXd num_r, den_r, fresh_r;
  for (int it = 0; it < cfg.max_iter; ++it) {
    for (int c = 0; c < k; ++c) {
      const Eigen::RowVectorXd hc = f.h.row(c);
      num = resid * hc.transpose() + f.w.col(c).cwiseProduct(obs * hc.cwiseAbs2().transpose());
      den = (obs * hc.cwiseAbs2().transpose()).array() + l2;
      fresh = ((num.array() - l1) / den.array()).max(0.0);
      fresh = (den.array() > 0.0).select(fresh, 0.0);
      const Eigen::VectorXd delta = fresh - f.w.col(c);
      resid.noalias() -= obs.cwiseProduct(delta * hc);
      f.w.col(c) = fresh;
    }
    for (int c = 0; c < k; ++c) {
      const Eigen::VectorXd wc = f.w.col(c);
      num_r = wc.transpose() * resid + f.h.row(c).cwiseProduct(wc.cwiseAbs2().transpose() * obs);
      den_r = (wc.cwiseAbs2().transpose() * obs).array() + l2;
      fresh_r = ((num_r.array() - l1) / den_r.array()).max(0.0);
      fresh_r = (den_r.array() > 0.0).select(fresh_r, 0.0);
      const Eigen::RowVectorXd delta = fresh_r - f.h.row(c);
      resid.noalias() -= obs.cwiseProduct(wc * delta);
      f.h.row(c) = fresh_r;
    }
    // the running residual drifts by rounding; refresh it every sweep
    resid = obs.cwiseProduct(p - f.w * f.h);
    const double prev = f.objective_trace.back();
    const double cur = objective();
    f.objective_trace.push_back(cur);
    f.n_iter = it + 1;
    if (cur == 0.0 || (prev - cur) / std::max(prev, std::numeric_limits<double>::min()) < cfg.tol) {
      f.converged = true;
      break;
    }
  }
  return f;
}

inline Factorization fit_nmf(const PurchaseMatrix& p, const NmfConfig& cfg, const HoldoutMask* mask = nullptr) {
  Factorization f = fit_nmf(p.to_dense(), cfg, mask);
  f.row_ids = p.row_ids();
  f.col_ids = p.col_ids();
  return f;
}

/// Mean squared error over the held-out positions.
inline double imputation_mse(const Eigen::MatrixXd& p, const Factorization& f, const HoldoutMask& mask) {
  if (mask.held_out.empty()) throw Error("imputation_mse: empty mask");
  double s = 0.0;
  for (auto [r, c] : mask.held_out) {
    const auto i = static_cast<Eigen::Index>(r), j = static_cast<Eigen::Index>(c);
    const double pred = f.w.row(i).dot(f.h.col(j));
    s += (p(i, j) - pred) * (p(i, j) - pred);
  }
  return s / static_cast<double>(mask.held_out.size());
}

inline double imputation_mse(const PurchaseMatrix& p, const Factorization& f, const HoldoutMask& mask) {
  return imputation_mse(p.to_dense(), f, mask);
}

struct GridCell {
  int k = 0;
  double alpha_m = 0.0;
  double l1_ratio = 0.0;
  double imputation_mse = 0.0;
  std::uint64_t seed = 0;  // init seed of the retained restart
  bool failed = false;
  std::string error;
};

struct GridSearchResult {
  std::vector<GridCell> table;  // k, then alpha_m, then l1_ratio, ascending grid order
  NmfConfig best;
  double best_mse = 0.0;
};

struct GridSpec {
  std::vector<int> k_range;
  std::vector<double> alpha_grid{0.0, 0.1, 0.5, 1.0, 2.0};
  std::vector<double> l1_grid{0.0, 0.1, 0.5, 0.9, 1.0};
  double holdout_fraction = 1.0 / 3.0;
  int restarts = 3;      // random inits per cell; the lowest training objective is kept
  unsigned threads = 0;  // 0: hardware concurrency

  static std::vector<int> k_between(int lo, int hi) {
    std::vector<int> ks;
    for (int k = lo; k <= hi; ++k) ks.push_back(k);
    return ks;
  }
};

/// Init seed of restart `r` in a grid search seeded with `seed`.
inline std::uint64_t restart_seed(std::uint64_t seed, int r) {
  return r == 0 ? derive_seed(seed, "nmf.init") : derive_seed(seed, "nmf.init." + std::to_string(r));
}

/// Imputation-error grid search with one shared holdout mask. A cell whose fit
/// throws is recorded as failed and skipped. Best: lowest MSE, then smaller k,
/// then larger alpha_m.
inline GridSearchResult grid_search(const PurchaseMatrix& p, const GridSpec& spec, std::uint64_t seed,
                                    const NmfConfig& base = {}) {
  if (spec.k_range.empty() || spec.alpha_grid.empty() || spec.l1_grid.empty())
    throw Error("grid_search: empty grid");
  const Eigen::MatrixXd dense = p.to_dense();
  const HoldoutMask mask = make_holdout_mask(p, spec.holdout_fraction, derive_seed(seed, "nmf.mask"));
  if (mask.held_out.empty()) throw Error("grid_search: holdout mask is empty");

  GridSearchResult res;
  for (int k : spec.k_range)
    for (double a : spec.alpha_grid)
      for (double l : spec.l1_grid) res.table.push_back({k, a, l, 0.0, 0, false, {}});

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < res.table.size(); i = next++) {
      GridCell& cell = res.table[i];
      NmfConfig cfg = base;
      cfg.k = cell.k;
      cfg.alpha_m = cell.alpha_m;
      cfg.l1_ratio = cell.l1_ratio;
      try {
        double best_obj = std::numeric_limits<double>::infinity();
        for (int r = 0; r < std::max(1, spec.restarts); ++r) {
          cfg.seed = restart_seed(seed, r);
          const Factorization f = fit_nmf(dense, cfg, &mask);
          if (f.objective_trace.back() < best_obj) {
            best_obj = f.objective_trace.back();
            cell.seed = cfg.seed;
            cell.imputation_mse = imputation_mse(dense, f, mask);
          }
        }
      } catch (const std::exception& e) {
        cell.failed = true;
        cell.error = e.what();
      }
    }
  };
  unsigned n_threads = spec.threads ? spec.threads : std::max(1u, std::thread::hardware_concurrency());
  n_threads = std::min<unsigned>(n_threads, static_cast<unsigned>(res.table.size()));
  std::vector<std::jthread> pool;
  for (unsigned t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  pool.clear();

  const GridCell* best = nullptr;
  for (const auto& c : res.table) {
    if (c.failed) continue;
    if (!best || c.imputation_mse < best->imputation_mse ||
        (c.imputation_mse == best->imputation_mse &&
         (c.k < best->k || (c.k == best->k && c.alpha_m > best->alpha_m))))
      best = &c;
  }
  if (!best) throw Error("grid_search: every grid cell failed");
  res.best = base;
  res.best.k = best->k;
  res.best.alpha_m = best->alpha_m;
  res.best.l1_ratio = best->l1_ratio;
  res.best.seed = best->seed;
  res.best_mse = best->imputation_mse;
  return res;
}

struct NormalizedDictionary {
  Eigen::MatrixXd h;         // unit-length rows (zero rows stay zero)
  Eigen::VectorXd scales;    // original row norms (1 for zero rows)
  Eigen::MatrixXd w;         // W with column c multiplied by scales(c): w * h == W H
  std::vector<int> zero_rows;
};

inline NormalizedDictionary normalize_dictionary(const Factorization& f) {
  NormalizedDictionary d;
  d.h = f.h;
  d.w = f.w;
  d.scales = Eigen::VectorXd::Ones(f.h.rows());
  for (Eigen::Index c = 0; c < f.h.rows(); ++c) {
    const double norm = f.h.row(c).norm();
    if (norm == 0.0) {
      d.zero_rows.push_back(static_cast<int>(c));
      continue;
    }
    d.scales(c) = norm;
    d.h.row(c) /= norm;
    d.w.col(c) *= norm;
  }
  return d;
}

/// Per dictionary row: (item index, weight) pairs, heaviest first, ties by index.
inline std::vector<std::vector<std::pair<std::size_t, double>>> top_items_per_element(const Eigen::MatrixXd& h,
                                                                                     std::size_t top_n) {
  if (top_n < 1) throw Error("top_items_per_element: top_n must be >= 1");
  std::vector<std::vector<std::pair<std::size_t, double>>> out;
  for (Eigen::Index c = 0; c < h.rows(); ++c) {
    std::vector<std::pair<std::size_t, double>> items;
    for (Eigen::Index j = 0; j < h.cols(); ++j) items.emplace_back(static_cast<std::size_t>(j), h(c, j));
    std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    items.resize(std::min(top_n, items.size()));
    out.push_back(std::move(items));
  }
  return out;
}

}  // namespace shopgraph

#endif  // SHOPGRAPH_NMF_HPP
