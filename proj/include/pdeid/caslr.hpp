#pragma once

#include "pdeid/features.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

namespace pdeid {

struct PursuitResult {
  std::vector<int> support;  // sorted ascending
  Matrix coefficients;       // J x |support|, physical units
  double global_error = 0.0;
  bool rank_deficient = false;
  int iterations = 0;
};

namespace detail {

/// Per-patch thin QR factors of the globally column-normalized systems.
/// Restricted least squares on a support S reduces to a small solve against
/// R[:, S] and z = Q^T y, so errors come out as plain residual norms with no
/// cancellation and the conditioning of F is never squared. Normalization is
/// transient: selection works on unit columns, reported coefficients are
/// scaled back to physical units.
struct PooledSystems {
  int K = 0;
  int J = 0;
  std::vector<Matrix> R;         // r x K triangular factors, r = min(m, K)
  std::vector<Vector> z;         // Q^T y
  std::vector<double> rho2;      // ||y||^2 - ||z||^2 >= 0
  std::vector<Vector> rhs;       // F^T y = R^T z
  std::vector<Vector> colnorm2;  // squared column norms of the normalized F
  std::vector<double> yty;
  Vector scale;                  // global column 2-norms (1 for zero columns)
  std::vector<bool> active;
  double error_floor = 0.0;      // tolerance scale for comparisons

  static PooledSystems build(const std::vector<PatchRegressionSystem>& systems) {
    if (systems.empty()) throw ConfigError("pursuit: no patch systems");
    PooledSystems p;
    p.K = systems[0].feature_count();
    p.J = static_cast<int>(systems.size());
    p.scale = Vector::Zero(p.K);
    for (const auto& s : systems) {
      if (s.feature_count() != p.K)
        throw ConfigError("pursuit: systems disagree on dictionary size");
      if (s.size() == 0) throw ConfigError("pursuit: empty patch system");
      if (!s.F.allFinite() || !s.target.allFinite())
        throw DataError("pursuit: non-finite entries in a patch system");
      for (int k = 0; k < p.K; ++k) p.scale[k] += s.F.col(k).squaredNorm();
    }
    p.active.resize(p.K);
    for (int k = 0; k < p.K; ++k) {
      p.scale[k] = std::sqrt(p.scale[k]);
      p.active[k] = p.scale[k] > 0.0;
      if (!p.active[k]) p.scale[k] = 1.0;
    }
    double y2 = 0.0;
    for (const auto& s : systems) {
      Matrix Fn = s.F * p.scale.cwiseInverse().asDiagonal();
      const long r = std::min(Fn.rows(), Fn.cols());
      Eigen::HouseholderQR<Matrix> qr(Fn);
      Matrix Rfull = qr.matrixQR().topRows(r).template triangularView<Eigen::Upper>();
      Vector zfull = (qr.householderQ().transpose() * s.target).head(r);
      const double y2j = s.target.squaredNorm();
      p.R.push_back(std::move(Rfull));
      p.z.push_back(std::move(zfull));
      p.rho2.push_back(std::max(0.0, y2j - p.z.back().squaredNorm()));
      p.rhs.push_back(p.R.back().transpose() * p.z.back());
      Vector cn(p.K);
      for (int k = 0; k < p.K; ++k) cn[k] = Fn.col(k).squaredNorm();
      p.colnorm2.push_back(std::move(cn));
      p.yty.push_back(y2j);
      y2 += y2j;
    }
    p.error_floor = 1e-13 * std::max(1.0, y2);
    return p;
  }

  double zero_model_error() const {
    return std::accumulate(yty.begin(), yty.end(), 0.0);
  }
};

/// Restricted least squares on the support for every patch; returns the
/// summed residual. Rank-deficient restrictions fall back to the min-norm
/// solution and set the flag.
inline double solve_restricted(const PooledSystems& p, const std::vector<int>& support,
                               Matrix& coeffs, bool& rank_deficient) {
  const int l = static_cast<int>(support.size());
  coeffs.resize(p.J, l);
  double err = 0.0;
  for (int j = 0; j < p.J; ++j) {
    Matrix A(p.R[j].rows(), l);
    for (int a = 0; a < l; ++a) A.col(a) = p.R[j].col(support[a]);
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(A);
    cod.setThreshold(1e-10);
    if (cod.rank() < l) rank_deficient = true;
    const Vector c = cod.solve(p.z[j]);
    coeffs.row(j) = c.transpose();
    err += p.rho2[j] + (p.z[j] - A * c).squaredNorm();
  }
  return err;
}

/// Residual-correlation score per group: sum over patches of
/// <r_j, F_j[:,k]>^2 / ||F_j[:,k]||^2, computed from the QR factors.
inline Vector correlation_scores(const PooledSystems& p, const std::vector<int>& support,
                                 const Matrix& coeffs) {
  Vector score = Vector::Zero(p.K);
  Vector v(p.K);
  for (int j = 0; j < p.J; ++j) {
    if (support.empty()) {
      v = p.rhs[j];
    } else {
      Vector rz = p.z[j];
      for (std::size_t a = 0; a < support.size(); ++a)
        rz -= coeffs(j, static_cast<int>(a)) * p.R[j].col(support[a]);
      v = p.R[j].transpose() * rz;
    }
    for (int k = 0; k < p.K; ++k) {
      const double n2 = p.colnorm2[j][k];
      if (n2 > 1e-300) score[k] += v[k] * v[k] / n2;
    }
  }
  for (int k = 0; k < p.K; ++k)
    if (!p.active[k]) score[k] = -1.0;
  return score;
}

/// Largest-score indices with ties broken toward the lowest dictionary index.
inline std::vector<int> top_indices(const Vector& score, int count,
                                    const std::vector<int>& exclude = {}) {
  std::vector<int> order(score.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (score[a] != score[b]) return score[a] > score[b];
    return a < b;
  });
  std::set<int> excl(exclude.begin(), exclude.end());
  std::vector<int> out;
  for (int k : order) {
    if (excl.count(k)) continue;
    out.push_back(k);
    if (static_cast<int>(out.size()) == count) break;
  }
  return out;
}

struct CoreResult {
  std::vector<int> support;
  Matrix coeffs;  // normalized units
  double error = 0.0;
  bool rank_deficient = false;
  int iterations = 0;
};

/// Expand-solve-prune subspace pursuit over dictionary groups at level l,
/// optionally warm-started from a smaller support.
inline CoreResult pursuit_core(const PooledSystems& p, int l,
                               std::vector<int> warm_start = {}, int max_iterations = 20) {
  CoreResult best;
  std::vector<int> S = std::move(warm_start);
  std::sort(S.begin(), S.end());
  S.erase(std::unique(S.begin(), S.end()), S.end());
  if (static_cast<int>(S.size()) > l) S.resize(l);

  Matrix coeffs;
  bool rd = false;
  if (static_cast<int>(S.size()) < l) {
    Matrix c0(p.J, S.size());
    if (!S.empty()) solve_restricted(p, S, c0, rd);
    else c0.resize(p.J, 0);
    const Vector score = correlation_scores(p, S, c0);
    for (int k : top_indices(score, l - static_cast<int>(S.size()), S)) S.push_back(k);
    std::sort(S.begin(), S.end());
  }

  rd = false;
  double err = solve_restricted(p, S, coeffs, rd);
  best = {S, coeffs, err, rd, 0};

  for (int iter = 1; iter <= max_iterations; ++iter) {
    // Expand: union of the incumbent support with the l best-correlated
    // groups (at most 2l candidates), then solve and prune by energy.
    const Vector score = correlation_scores(p, S, coeffs);
    std::vector<int> merged = S;
    for (int k : top_indices(score, l))
      if (std::find(S.begin(), S.end(), k) == S.end()) merged.push_back(k);
    std::sort(merged.begin(), merged.end());

    Matrix cm;
    bool rdm = false;
    solve_restricted(p, merged, cm, rdm);

    Vector energy = Vector::Zero(merged.size());
    for (std::size_t a = 0; a < merged.size(); ++a)
      for (int j = 0; j < p.J; ++j) {
        const double c = cm(j, static_cast<int>(a));
        energy[static_cast<int>(a)] += c * c * p.colnorm2[j][merged[a]];
      }
    std::vector<int> order(merged.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (energy[a] != energy[b]) return energy[a] > energy[b];
      return merged[a] < merged[b];
    });
    std::vector<int> S_new;
    for (int a = 0; a < l && a < static_cast<int>(order.size()); ++a)
      S_new.push_back(merged[order[a]]);
    std::sort(S_new.begin(), S_new.end());

    bool rdn = false;
    Matrix cn;
    const double err_new = solve_restricted(p, S_new, cn, rdn);
    if (err_new < best.error - p.error_floor) best = {S_new, cn, err_new, rdn, iter};
    if (S_new == S) {
      best.iterations = iter;
      break;
    }
    S = std::move(S_new);
    coeffs = std::move(cn);
    best.iterations = iter;
  }

  // Bounded local refinement: single-group swaps to a local optimum. Only
  // runs when the swap space is small, so large sweeps stay cheap.
  if (l * (p.K - l) <= 256) {
    for (int pass = 0; pass < 32; ++pass) {
      std::vector<int> swap_support;
      Matrix swap_coeffs;
      double swap_err = best.error;
      bool swap_rd = false;
      for (int pos = 0; pos < l; ++pos) {
        for (int k = 0; k < p.K; ++k) {
          if (!p.active[k]) continue;
          if (std::find(best.support.begin(), best.support.end(), k) != best.support.end())
            continue;
          std::vector<int> cand = best.support;
          cand[pos] = k;
          std::sort(cand.begin(), cand.end());
          Matrix cc;
          bool rdc = false;
          const double ec = solve_restricted(p, cand, cc, rdc);
          if (ec < swap_err - p.error_floor) {
            swap_support = std::move(cand);
            swap_coeffs = std::move(cc);
            swap_err = ec;
            swap_rd = rdc;
          }
        }
      }
      if (swap_support.empty()) break;
      best = {swap_support, swap_coeffs, swap_err, swap_rd, best.iterations};
    }
  }
  return best;
}

inline Matrix unscale_coefficients(const PooledSystems& p, const std::vector<int>& support,
                                   const Matrix& coeffs) {
  Matrix out = coeffs;
  for (std::size_t a = 0; a < support.size(); ++a)
    out.col(static_cast<int>(a)) /= p.scale[support[a]];
  return out;
}

}  // namespace detail

/// Group Subspace Pursuit: one global support of exactly l dictionary groups,
/// with per-patch least-squares coefficients and the pooled residual.
inline PursuitResult group_subspace_pursuit(const std::vector<PatchRegressionSystem>& systems,
                                            int l, int max_iterations = 20) {
  auto pooled = detail::PooledSystems::build(systems);
  if (l < 1 || l > pooled.K - 1)
    throw ConfigError("pursuit: sparsity level " + std::to_string(l) +
                      " out of range 1.." + std::to_string(pooled.K - 1));
  auto core = detail::pursuit_core(pooled, l, {}, max_iterations);
  PursuitResult r;
  r.support = core.support;
  r.coefficients = detail::unscale_coefficients(pooled, core.support, core.coeffs);
  r.global_error = core.error;
  r.rank_deficient = core.rank_deficient;
  r.iterations = core.iterations;
  return r;
}

struct LevelTrace {
  int level = 0;
  double error = 0.0;
  double score = 0.0;
};

enum class RhoRule {
  mean_with_zero,  // mean of the error trace including the zero model
  mean_levels,     // mean over the swept levels only
};

struct SweepOptions {
  RhoRule rho_rule = RhoRule::mean_with_zero;
  int max_level = 0;  // 0 = K-1
  int max_iterations = 20;
};

struct IdentificationResult {
  int chosen_level = 0;
  std::vector<int> support;
  Matrix coefficients;  // J x |support|, physical units, direct solves
  double rho = 0.0;
  std::vector<LevelTrace> trace;
  bool rank_deficient = false;
};

/// Per-patch unrestricted least squares on a fixed support, solved directly
/// on the feature columns (physical units at the patch centers).
inline Matrix reconstruct_coefficients(const std::vector<PatchRegressionSystem>& systems,
                                       const std::vector<int>& support,
                                       std::vector<unsigned char>* rank_flags = nullptr) {
  if (support.empty()) throw ConfigError("reconstruct: empty support");
  const int l = static_cast<int>(support.size());
  Matrix out(systems.size(), l);
  if (rank_flags) rank_flags->assign(systems.size(), 0);
  for (std::size_t j = 0; j < systems.size(); ++j) {
    Matrix A(systems[j].size(), l);
    for (int a = 0; a < l; ++a) A.col(a) = systems[j].F.col(support[a]);
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(A);
    cod.setThreshold(1e-10);
    if (cod.rank() < l && rank_flags) (*rank_flags)[j] = 1;
    out.row(j) = cod.solve(systems[j].target).transpose();
  }
  return out;
}

/// Runs G-SP for every level l = 1..K-1 (warm-started, so the error trace is
/// non-increasing), scores S^l = E(l) + rho * l / K, and returns the
/// minimizer with ties broken toward smaller l.
inline IdentificationResult sweep_and_score(const std::vector<PatchRegressionSystem>& systems,
                                            const SweepOptions& opt = {}) {
  auto pooled = detail::PooledSystems::build(systems);
  const int K = pooled.K;
  const int Lmax = opt.max_level > 0 ? std::min(opt.max_level, K - 1) : K - 1;
  if (Lmax < 1) throw ConfigError("sweep: dictionary too small to sweep");

  const double err0 = pooled.zero_model_error();
  std::vector<detail::CoreResult> levels;
  levels.reserve(Lmax);
  std::vector<int> warm;
  bool any_rank_deficient = false;
  for (int l = 1; l <= Lmax; ++l) {
    auto core = detail::pursuit_core(pooled, l, warm, opt.max_iterations);
    if (l > 1 && core.error > levels.back().error) {
      // Thresholded solves can degrade on degenerate supports; the previous
      // level's model padded with an idle group is always feasible at l.
      const auto& prev = levels.back();
      int extra = 0;
      while (std::find(prev.support.begin(), prev.support.end(), extra) !=
             prev.support.end())
        ++extra;
      core.support = prev.support;
      core.support.push_back(extra);
      std::sort(core.support.begin(), core.support.end());
      core.coeffs = Matrix::Zero(prev.coeffs.rows(), l);
      for (int a = 0; a < l; ++a) {
        const auto it = std::find(prev.support.begin(), prev.support.end(),
                                  core.support[a]);
        if (it != prev.support.end())
          core.coeffs.col(a) =
              prev.coeffs.col(static_cast<int>(it - prev.support.begin()));
      }
      core.error = prev.error;
      core.rank_deficient = prev.rank_deficient;
    }
    warm = core.support;
    any_rank_deficient |= core.rank_deficient;
    levels.push_back(std::move(core));
  }

  double rho = 0.0;
  for (const auto& lv : levels) rho += lv.error;
  if (opt.rho_rule == RhoRule::mean_with_zero)
    rho = (rho + err0) / (Lmax + 1.0);
  else
    rho /= Lmax;

  IdentificationResult res;
  res.rho = rho;
  res.rank_deficient = any_rank_deficient;
  int best_l = 1;
  double best_score = std::numeric_limits<double>::infinity();
  for (int l = 1; l <= Lmax; ++l) {
    const double score = levels[l - 1].error + rho * static_cast<double>(l) / K;
    res.trace.push_back({l, levels[l - 1].error, score});
    if (score < best_score) {
      best_score = score;
      best_l = l;
    }
  }
  res.chosen_level = best_l;
  res.support = levels[best_l - 1].support;
  std::vector<unsigned char> flags;
  res.coefficients = reconstruct_coefficients(systems, res.support, &flags);
  for (auto f : flags) res.rank_deficient |= (f != 0);
  return res;
}

/// |A intersect B| / |A union B|; the empty-vs-empty case is defined as 1.
inline double jaccard(const std::set<int>& a, const std::set<int>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t inter = 0;
  for (int v : a) inter += b.count(v);
  const std::size_t uni = a.size() + b.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

struct CoefficientError {
  double value = 0.0;
  bool absolute = false;  // true when the truth is identically zero
};

/// Relative l2 coefficient error over all patches and true-support features;
/// spurious features contribute their full magnitude to the numerator.
/// Falls back to the absolute error (flagged) for an identically zero truth.
inline CoefficientError coefficient_error(const std::vector<int>& found_support,
                                          const Matrix& found_coeffs,
                                          const std::vector<int>& true_support,
                                          const Matrix& true_values) {
  if (static_cast<int>(true_support.size()) != true_values.cols())
    throw ConfigError("coefficient_error: truth table shape mismatch");
  if (static_cast<int>(found_support.size()) != found_coeffs.cols())
    throw ConfigError("coefficient_error: found table shape mismatch");
  const Eigen::Index J = true_values.rows();
  if (found_coeffs.rows() != J)
    throw ConfigError("coefficient_error: patch counts disagree");

  auto find_col = [](const std::vector<int>& sup, int k) {
    for (std::size_t i = 0; i < sup.size(); ++i)
      if (sup[i] == k) return static_cast<int>(i);
    return -1;
  };

  double num2 = 0.0, den2 = 0.0;
  for (Eigen::Index j = 0; j < J; ++j) {
    for (std::size_t a = 0; a < true_support.size(); ++a) {
      const double truth = true_values(j, static_cast<int>(a));
      const int fc = find_col(found_support, true_support[a]);
      const double found = fc >= 0 ? found_coeffs(j, fc) : 0.0;
      num2 += (found - truth) * (found - truth);
      den2 += truth * truth;
    }
    for (std::size_t a = 0; a < found_support.size(); ++a) {
      if (find_col(true_support, found_support[a]) >= 0) continue;
      const double c = found_coeffs(j, static_cast<int>(a));
      num2 += c * c;
    }
  }
  CoefficientError e;
  if (den2 > 0.0) {
    e.value = std::sqrt(num2 / den2);
  } else {
    e.value = std::sqrt(num2);
    e.absolute = true;
  }
  return e;
}

}  // namespace pdeid
