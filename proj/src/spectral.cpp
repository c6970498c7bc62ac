#include "hclab/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <vector>

#include "hclab/rng.hpp"

namespace hclab {

namespace {

double pivot_tol(const SparseSymmetricOperator& op) {
  return kPivotRelTol * std::max(op.norm_inf, 1e-300);
}

}  // namespace

struct ShiftedFactorization::Impl {
  Eigen::SimplicialLDLT<SpMat> ldlt;
  std::unique_ptr<Eigen::SparseLU<SpMat>> lu;
  std::once_flag lu_once;
};

ShiftedFactorization::ShiftedFactorization(const SparseSymmetricOperator& op, double shift)
    : matrix_(op.mat), shift_(shift), norm_inf_(op.norm_inf), impl_(std::make_shared<Impl>()) {
  impl_->ldlt.setShift(-shift, 1.0);
  impl_->ldlt.compute(matrix_);
  const double tol = pivot_tol(op);
  if (impl_->ldlt.info() != Eigen::Success) {
    inertia_.n_zero = matrix_.rows();
    resolved_ = false;
    return;
  }
  const Eigen::VectorXd d = impl_->ldlt.vectorD();
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (d[i] > tol)
      ++inertia_.n_plus;
    else if (d[i] < -tol)
      ++inertia_.n_minus;
    else
      ++inertia_.n_zero;
  }
  resolved_ = inertia_.n_zero == 0;
}

Eigen::VectorXd ShiftedFactorization::apply_shifted(const Eigen::VectorXd& x) const {
  return matrix_ * x - shift_ * x;
}

Eigen::VectorXd ShiftedFactorization::solve(const Eigen::VectorXd& rhs) const {
  const double rhs_norm = rhs.norm();
  if (rhs_norm == 0.0) return Eigen::VectorXd::Zero(rhs.size());
  Eigen::VectorXd x = impl_->ldlt.solve(rhs);
  // one step of iterative refinement
  Eigen::VectorXd r = rhs - apply_shifted(x);
  if (r.norm() > 1e-10 * rhs_norm) {
    x += impl_->ldlt.solve(r);
    r = rhs - apply_shifted(x);
  }
  if (r.norm() <= 1e-10 * rhs_norm) return x;
  // refactor with stronger pivoting (sparse LU with partial pivoting)
  std::call_once(impl_->lu_once, [&] {
    SpMat shifted = matrix_;
    for (Eigen::Index i = 0; i < shifted.rows(); ++i) shifted.coeffRef(i, i) -= shift_;
    shifted.makeCompressed();
    impl_->lu = std::make_unique<Eigen::SparseLU<SpMat>>();
    impl_->lu->compute(shifted);
  });
  if (impl_->lu->info() != Eigen::Success)
    throw UnresolvedShiftError("LU refactorization failed at shift " + std::to_string(shift_));
  x = impl_->lu->solve(rhs);
  r = rhs - apply_shifted(x);
  if (r.norm() > 1e-10 * rhs_norm) {
    x += impl_->lu->solve(r);
    r = rhs - apply_shifted(x);
  }
  if (r.norm() > 1e-10 * rhs_norm)
    throw UnresolvedShiftError("solve residual " + std::to_string(r.norm() / rhs_norm) +
                               " at shift " + std::to_string(shift_));
  return x;
}

Eigen::VectorXd ShiftedFactorization::solve_unchecked(const Eigen::VectorXd& rhs) const {
  return impl_->ldlt.solve(rhs);
}

ShiftedFactorization factor(const SparseSymmetricOperator& op, double shift) {
  return ShiftedFactorization(op, shift);
}

namespace {

// factor with the +eta perturbation contract; throws after 3 failed nudges
ShiftedFactorization resolve_factor(const SparseSymmetricOperator& op, double shift,
                                    double* shift_used) {
  const double eta = kShiftNudgeRel * std::max(op.norm_inf, 1e-300);
  for (int attempt = 0; attempt <= 3; ++attempt) {
    const double s = shift + static_cast<double>(attempt) * eta;
    ShiftedFactorization f(op, s);
    if (f.resolved()) {
      if (shift_used) *shift_used = s;
      return f;
    }
  }
  std::ostringstream err;
  err << "shift " << shift << " unresolved after 3 perturbation attempts";
  throw UnresolvedShiftError(err.str());
}

}  // namespace

ResolvedCount count_below(const SparseSymmetricOperator& op, double energy) {
  ResolvedCount rc;
  ShiftedFactorization f = resolve_factor(op, energy, &rc.shift_used);
  rc.count = f.count_below();
  return rc;
}

Eigen::Index count_eigenvalues(const SparseSymmetricOperator& op, double a, double b) {
  if (!(a < b)) throw ConfigError("count_eigenvalues needs a < b");
  const ResolvedCount hi = count_below(op, b);
  const ResolvedCount lo = count_below(op, a);
  return hi.count - lo.count;
}

// ---------------------------------------------------------------------------
// shift-invert Lanczos with full reorthogonalization and deflation restarts
// ---------------------------------------------------------------------------

namespace {

struct Pair {
  double value;
  Eigen::VectorXd vec;
  double residual;
};

void orthogonalize_against(Eigen::VectorXd& w, const std::vector<Pair>& locked) {
  for (const auto& p : locked) w -= p.vec * p.vec.dot(w);
}

Eigen::VectorXd seeded_unit_vector(Eigen::Index n, std::uint64_t key,
                                   const std::vector<Pair>& locked) {
  rng::Stream stream(key);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = stream.next_normal();
  orthogonalize_against(v, locked);
  const double nrm = v.norm();
  if (nrm < 1e-300) throw CertifiedFailure("start vector vanished after deflation");
  return v / nrm;
}

// One step of inverse iteration with a shift just off the Rayleigh
// quotient. Rescues candidates whose accuracy is floored by the
// accumulated error of the deflation basis.
bool polish_candidate(const SparseSymmetricOperator& op, Eigen::VectorXd& x, double& lambda,
                      double& res, double abs_tol) {
  // One step of inverse iteration with a partial-pivoting LU: the
  // unpivoted LDL^T loses backward stability this close to an eigenvalue.
  // No re-orthogonalization afterwards; the iteration damps every
  // direction away from the target eigenspace, and projecting on the
  // (slightly inexact) locked vectors would reintroduce their errors.
  double offset = std::max(64.0 * res, 16.0 * kPivotRelTol * op.norm_inf);
  for (int attempt = 0; attempt < 2; ++attempt, offset *= 64.0) {
    SpMat shifted = op.mat;
    for (Eigen::Index i = 0; i < shifted.rows(); ++i)
      shifted.coeffRef(i, i) -= lambda + offset;
    shifted.makeCompressed();
    Eigen::SparseLU<SpMat> lu;
    lu.compute(shifted);
    if (lu.info() != Eigen::Success) continue;
    Eigen::VectorXd y = lu.solve(x);
    const double nrm = y.norm();
    if (!(nrm > 1e-300) || !std::isfinite(nrm)) continue;
    y /= nrm;
    const Eigen::VectorXd ay = op.mat * y;
    const double mu = y.dot(ay);
    const double r = (ay - mu * y).norm();
    if (r <= abs_tol) {
      x = std::move(y);
      lambda = mu;
      res = r;
      return true;
    }
  }
  return false;
}

// One Lanczos pass on (A - sigma)^{-1}; appends converged window pairs.
// Locking happens once, at the end of the pass (locking mid-pass would
// leave locked directions inside the existing basis and corrupt the
// tridiagonal recurrence); the cadence checks only peek at the Ritz data
// to decide when the pass has converged enough to stop. With `contiguous`
// set, locking stops at the first unconverged candidate in ascending
// order, so the locked set is always a prefix of the spectrum.
void lanczos_pass(const SparseSymmetricOperator& op, const ShiftedFactorization& fac,
                  double sigma, double lo, double hi, int want, double abs_tol, int jmax,
                  std::uint64_t seed_key, bool contiguous, std::vector<Pair>& locked) {
  const Eigen::Index n = op.mat.rows();
  jmax = static_cast<int>(std::min<Eigen::Index>(jmax, n - static_cast<Eigen::Index>(locked.size())));
  if (jmax <= 0) return;

  Eigen::MatrixXd basis(n, jmax);
  std::vector<double> alpha, beta;
  alpha.reserve(jmax);
  beta.reserve(jmax);
  Eigen::VectorXd v = seeded_unit_vector(n, seed_key, locked);

  const double window_halfwidth = std::isfinite(hi) ? 0.5 * (hi - lo) : 0.0;
  const double theta_floor =
      window_halfwidth > 0 ? 0.25 / window_halfwidth : 1e-3 / std::max(op.norm_inf, 1e-300);

  struct Candidate {
    double lambda_est;
    double bound;  // Lanczos residual estimate in the shift-invert space
    int col;
  };
  auto ritz_candidates = [&](int j, const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>& es) {
    const double beta_last = (static_cast<int>(beta.size()) >= j && j > 0)
                                 ? beta[static_cast<std::size_t>(j - 1)]
                                 : 0.0;
    std::vector<Candidate> cands;
    for (int i = 0; i < j; ++i) {
      const double theta = es.eigenvalues()[i];
      if (std::abs(theta) < theta_floor) continue;
      const double lambda_est = sigma + 1.0 / theta;
      if (!(lambda_est > lo && lambda_est <= hi)) continue;
      cands.push_back({lambda_est, std::abs(beta_last * es.eigenvectors()(j - 1, i)), i});
    }
    std::sort(cands.begin(), cands.end(),
              [](const Candidate& x, const Candidate& y) { return x.lambda_est < y.lambda_est; });
    return cands;
  };
  auto tridiagonal = [&](int j) {
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(j, j);
    for (int i = 0; i < j; ++i) {
      t(i, i) = alpha[static_cast<std::size_t>(i)];
      if (i + 1 < j) {
        t(i, i + 1) = beta[static_cast<std::size_t>(i)];
        t(i + 1, i) = beta[static_cast<std::size_t>(i)];
      }
    }
    return t;
  };

  // the true residual of a mapped Ritz pair is at most |A - sigma| bound / |theta|
  auto probably_converged = [&](const Candidate& cand) {
    const double theta = 1.0 / (cand.lambda_est - sigma);
    return cand.bound * (op.norm_inf + std::abs(sigma)) <= abs_tol * std::abs(theta);
  };

  auto peek = [&](int j) {
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(tridiagonal(j));
    int ready = 0;
    for (const Candidate& cand : ritz_candidates(j, es)) {
      if (!probably_converged(cand)) {
        if (contiguous) break;
        continue;
      }
      ++ready;
    }
    return static_cast<int>(locked.size()) + ready >= want;
  };

  auto lock = [&](int j) {
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(tridiagonal(j));
    std::vector<Pair> fresh;
    for (const Candidate& cand : ritz_candidates(j, es)) {
      if (static_cast<int>(locked.size() + fresh.size()) >= want) break;
      Eigen::VectorXd x = basis.leftCols(j) * es.eigenvectors().col(cand.col);
      orthogonalize_against(x, locked);
      for (const auto& p : fresh) x -= p.vec * p.vec.dot(x);
      const double nrm = x.norm();
      if (nrm < 1e-8) continue;  // direction already captured
      x /= nrm;
      const Eigen::VectorXd ax = op.mat * x;
      double lambda = x.dot(ax);
      double res = (ax - lambda * x).norm();
      if (res > abs_tol && res <= 1e6 * abs_tol)
        polish_candidate(op, x, lambda, res, abs_tol);
      if (res <= abs_tol && lambda > lo && lambda <= hi) {
        fresh.push_back({lambda, std::move(x), res});
      } else if (contiguous) {
        break;  // keep the locked set a prefix of the spectrum
      }
    }
    for (auto& p : fresh) locked.push_back(std::move(p));
  };

  for (int j = 0; j < jmax; ++j) {
    basis.col(j) = v;
    Eigen::VectorXd w = fac.solve(v);
    if (j > 0) w -= beta[static_cast<std::size_t>(j - 1)] * basis.col(j - 1);
    const double a = v.dot(w);
    alpha.push_back(a);
    w -= a * v;
    for (int pass = 0; pass < 2; ++pass) {
      w -= basis.leftCols(j + 1) * (basis.leftCols(j + 1).transpose() * w);
      orthogonalize_against(w, locked);
    }
    const double b = w.norm();
    double scale = std::abs(a);
    for (double bb : beta) scale = std::max(scale, bb);
    if (b <= 1e-13 * std::max(scale, 1.0)) {
      lock(j + 1);  // invariant subspace exhausted
      return;
    }
    beta.push_back(b);
    v = w / b;
    const bool cadence = (j + 1) % 8 == 0 && j + 1 >= 12;
    if (cadence && peek(j + 1)) {
      lock(j + 1);
      return;
    }
  }
  lock(jmax);
}

EigenSet finalize_set(const SparseSymmetricOperator& op, double lo, double hi,
                      std::vector<Pair> locked, Eigen::Index certified) {
  std::sort(locked.begin(), locked.end(),
            [](const Pair& x, const Pair& y) { return x.value < y.value; });
  EigenSet set;
  set.window_lo = lo;
  set.window_hi = hi;
  set.certified_count = certified;
  const auto m = static_cast<Eigen::Index>(locked.size());
  set.values.resize(m);
  set.residuals.resize(m);
  set.vectors.resize(op.mat.rows(), m);
  for (Eigen::Index i = 0; i < m; ++i) {
    set.vectors.col(i) = locked[static_cast<std::size_t>(i)].vec;
    // thresholded Gram-Schmidt: enforce the 1e-8 orthogonality contract
    // without perturbing vectors that are already orthogonal to working
    // precision (tiny projections would only inject the partners' errors)
    for (Eigen::Index k = 0; k < i; ++k) {
      const double overlap = set.vectors.col(k).dot(set.vectors.col(i));
      if (std::abs(overlap) > 1e-9)
        set.vectors.col(i) -= overlap * set.vectors.col(k);
    }
    set.vectors.col(i).normalize();
    const Eigen::VectorXd ax = op.mat * set.vectors.col(i);
    set.values[i] = set.vectors.col(i).dot(ax);
    set.residuals[i] = (ax - set.values[i] * set.vectors.col(i)).norm();
  }
  return set;
}

double effective_tol(const SparseSymmetricOperator& op, double tol_eig) {
  const double floor = 64.0 * std::numeric_limits<double>::epsilon() * op.norm_inf;
  return std::max(tol_eig * op.norm_inf, floor);
}

}  // namespace

EigenSet eigenpairs_in_window(const SparseSymmetricOperator& op, double a, double b,
                              const SolverOptions& opts) {
  if (!(a < b)) throw ConfigError("eigenpairs_in_window needs a < b");
  double a_res = a, b_res = b;
  const Eigen::Index below_b = [&] {
    ResolvedCount rc = count_below(op, b);
    b_res = rc.shift_used;
    return rc.count;
  }();
  const Eigen::Index below_a = [&] {
    ResolvedCount rc = count_below(op, a);
    a_res = rc.shift_used;
    return rc.count;
  }();
  const Eigen::Index m_expect = below_b - below_a;
  if (m_expect == 0) return finalize_set(op, a_res, b_res, {}, 0);
  if (m_expect > opts.max_pairs) {
    std::ostringstream err;
    err << "window (" << a << ", " << b << "] holds " << m_expect
        << " eigenvalues, above the configured maximum " << opts.max_pairs;
    throw ConfigError(err.str());
  }

  double sigma = 0.5 * (a_res + b_res);
  double sigma_used = sigma;
  ShiftedFactorization fac = resolve_factor(op, sigma, &sigma_used);
  const double abs_tol = effective_tol(op, opts.tol_eig);
  const int jmax = opts.max_iterations > 0
                       ? opts.max_iterations
                       : std::clamp(4 * static_cast<int>(m_expect) + 60, 80, 400);

  // restarts stay productive as long as deflation uncovers new pairs (one
  // per pass for each copy of a degenerate eigenvalue); only stalled passes
  // count against the budget
  std::vector<Pair> locked;
  int stalled = 0, restart = 0;
  while (static_cast<Eigen::Index>(locked.size()) < m_expect && stalled <= opts.max_restarts) {
    const std::size_t before = locked.size();
    const std::uint64_t key =
        rng::mix({0x517ec7a11ceULL, static_cast<std::uint64_t>(op.mat.rows()),
                  static_cast<std::uint64_t>(restart++), static_cast<std::uint64_t>(locked.size())});
    lanczos_pass(op, fac, sigma_used, a_res, b_res, static_cast<int>(m_expect), abs_tol, jmax,
                 key, /*contiguous=*/false, locked);
    stalled = locked.size() > before ? 0 : stalled + 1;
  }
  if (static_cast<Eigen::Index>(locked.size()) != m_expect) {
    std::ostringstream err;
    err << "window (" << a << ", " << b << "]: inertia certifies " << m_expect
        << " eigenvalues but " << locked.size() << " converged after " << opts.max_restarts
        << " restarts (tol " << abs_tol << ")";
    throw CertifiedFailure(err.str());
  }
  return finalize_set(op, a_res, b_res, std::move(locked), m_expect);
}

EigenSet lowest_eigenpairs(const SparseSymmetricOperator& op, int k, const SolverOptions& opts) {
  const Eigen::Index n = op.mat.rows();
  if (k <= 0) throw ConfigError("lowest_eigenpairs needs k >= 1");
  k = static_cast<int>(std::min<Eigen::Index>(k, n));
  const auto [glo, ghi] = gershgorin_interval(op);
  // shift strictly below the spectrum; for our positive-definite operators
  // the Gershgorin floor is at most 0
  const double sigma = glo - 1e-3 * std::max(ghi - glo, 1.0);
  double sigma_used = sigma;
  ShiftedFactorization fac = resolve_factor(op, sigma, &sigma_used);
  if (fac.count_below() != 0)
    throw UnresolvedShiftError("lowest_eigenpairs: shift below Gershgorin floor not below spectrum");
  const double abs_tol = effective_tol(op, opts.tol_eig);

  int want = k;
  for (int attempt = 0; attempt < 8; ++attempt) {
    std::vector<Pair> locked;
    const int jmax = opts.max_iterations > 0
                         ? opts.max_iterations
                         : std::clamp(4 * want + 80, 100, 450);
    int stalled = 0, restart = 0;
    while (static_cast<int>(locked.size()) < want + 1 && stalled <= opts.max_restarts) {
      const std::size_t before = locked.size();
      const std::uint64_t key =
          rng::mix({0x10e57ULL, static_cast<std::uint64_t>(n),
                    static_cast<std::uint64_t>(restart++), static_cast<std::uint64_t>(locked.size()),
                    static_cast<std::uint64_t>(attempt)});
      // window open above: collect smallest eigenvalues near sigma
      lanczos_pass(op, fac, sigma_used, sigma_used, std::numeric_limits<double>::infinity(),
                   want + 1, abs_tol, jmax, key, /*contiguous=*/true, locked);
      stalled = locked.size() > before ? 0 : stalled + 1;
    }
    if (static_cast<int>(locked.size()) < want) continue;
    std::sort(locked.begin(), locked.end(),
              [](const Pair& x, const Pair& y) { return x.value < y.value; });
    // certify at a gap above the k-th value
    double b_cert;
    if (static_cast<int>(locked.size()) > want) {
      const double gap = locked[static_cast<std::size_t>(want)].value -
                         locked[static_cast<std::size_t>(want - 1)].value;
      if (gap <= 4.0 * abs_tol) {
        ++want;  // near-degenerate boundary: widen the certified set
        continue;
      }
      b_cert = locked[static_cast<std::size_t>(want - 1)].value + 0.5 * gap;
    } else {
      b_cert = locked[static_cast<std::size_t>(want - 1)].value +
               std::max(4.0 * abs_tol, 1e-12 * op.norm_inf);
    }
    const ResolvedCount rc = count_below(op, b_cert);
    if (rc.count == want) {
      locked.resize(static_cast<std::size_t>(want));
      return finalize_set(op, sigma_used, rc.shift_used, std::move(locked), want);
    }
    if (rc.count > want && rc.count <= want + 8) {
      want = static_cast<int>(rc.count);
      continue;
    }
    std::ostringstream err;
    err << "lowest_eigenpairs: inertia counts " << rc.count << " below " << b_cert
        << " but " << want << " pairs converged";
    throw CertifiedFailure(err.str());
  }
  throw CertifiedFailure("lowest_eigenpairs: certification did not stabilize");
}

double block_resolvent_norm(const SparseSymmetricOperator& op, double energy,
                            const IndexMask& rows, const IndexMask& cols, double tol) {
  ShiftedFactorization fac(op, energy);
  if (!fac.resolved())
    throw UnresolvedShiftError("block_resolvent_norm: energy " + std::to_string(energy) +
                               " is within pivot tolerance of the spectrum");
  const Eigen::Index n = op.mat.rows();
  if (rows.indices.empty() || cols.indices.empty()) return 0.0;

  auto scatter = [n](const std::vector<int>& idx, const Eigen::VectorXd& v) {
    Eigen::VectorXd full = Eigen::VectorXd::Zero(n);
    for (std::size_t i = 0; i < idx.size(); ++i) full[idx[i]] = v[static_cast<Eigen::Index>(i)];
    return full;
  };
  auto gather = [](const std::vector<int>& idx, const Eigen::VectorXd& full) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) v[static_cast<Eigen::Index>(i)] = full[idx[i]];
    return v;
  };

  rng::Stream stream(rng::mix({0xb10c4e50ULL, static_cast<std::uint64_t>(cols.indices.size()),
                               static_cast<std::uint64_t>(rows.indices.size())}));
  Eigen::VectorXd v(static_cast<Eigen::Index>(cols.indices.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = stream.next_normal();
  v.normalize();

  double sigma_prev = 0.0;
  for (int it = 0; it < 500; ++it) {
    const Eigen::VectorXd w = gather(rows.indices, fac.solve(scatter(cols.indices, v)));
    const double s1 = w.norm();
    if (s1 == 0.0) return 0.0;
    const Eigen::VectorXd u = gather(cols.indices, fac.solve(scatter(rows.indices, w)));
    const double sigma = s1;  // |R v| with unit v converges to the top singular value
    const double u_norm = u.norm();
    if (u_norm == 0.0) return sigma;
    v = u / u_norm;
    if (it > 2 && std::abs(sigma - sigma_prev) <= tol * std::max(sigma, 1e-300)) return sigma;
    sigma_prev = sigma;
  }
  return sigma_prev;
}

void write_spectrum_csv(const EigenSet& set, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "index,eigenvalue,residual\n";
  char buf[96];
  for (Eigen::Index i = 0; i < set.values.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%ld,%.17g,%.17g\n", static_cast<long>(i + 1), set.values[i],
                  set.residuals[i]);
    out << buf;
  }
}

std::pair<double, double> gershgorin_interval(const SparseSymmetricOperator& op) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (int kcol = 0; kcol < op.mat.outerSize(); ++kcol) {
    double diag = 0.0, off = 0.0;
    for (SpMat::InnerIterator it(op.mat, kcol); it; ++it) {
      if (it.row() == it.col())
        diag = it.value();
      else
        off += std::abs(it.value());
    }
    lo = std::min(lo, diag - off);
    hi = std::max(hi, diag + off);
  }
  return {lo, hi};
}

namespace detail {

std::vector<double> bessel_j_sequence(double x, int k_max) {
  std::vector<double> out(static_cast<std::size_t>(k_max) + 1, 0.0);
  if (x == 0.0) {
    out[0] = 1.0;
    return out;
  }
  const double ax = std::abs(x);
  const int start = std::max(k_max, static_cast<int>(std::ceil(ax))) + 24 +
                    static_cast<int>(2.0 * std::sqrt(std::max(ax, static_cast<double>(k_max))));
  double f_next = 0.0;
  double f = 1e-300;
  double norm = 0.0;
  for (int m = start; m >= 1; --m) {
    const double f_prev = (2.0 * m / ax) * f - f_next;
    f_next = f;
    f = f_prev;  // f = J(m-1) up to normalization
    const int idx = m - 1;
    if (idx <= k_max) out[static_cast<std::size_t>(idx)] = f;
    if ((idx & 1) == 0) norm += (idx == 0) ? f : 2.0 * f;
    if (std::abs(f) > 1e250) {
      const double s = 1e-250;
      f *= s;
      f_next *= s;
      norm *= s;
      for (double& v : out) v *= s;
    }
  }
  for (double& v : out) v /= norm;
  if (x < 0.0)
    for (int k = 1; k <= k_max; k += 2) out[static_cast<std::size_t>(k)] = -out[static_cast<std::size_t>(k)];
  return out;
}

}  // namespace detail

Eigen::VectorXcd chebyshev_evolve(const SparseSymmetricOperator& op,
                                  const Eigen::VectorXcd& state, double t, double tol,
                                  int max_terms) {
  using Cplx = std::complex<double>;
  const auto [glo, ghi] = gershgorin_interval(op);
  const double center = 0.5 * (ghi + glo);
  const double radius = 0.5 * (ghi - glo);
  const Cplx phase = std::exp(Cplx(0.0, -t * center));
  if (radius * std::abs(t) < 1e-14) return phase * state;

  const double x = t * radius;
  // truncation index: first k > |x| where the Bessel coefficients stay below tol
  int k_hi = static_cast<int>(std::ceil(std::abs(x))) + 32 +
             static_cast<int>(14.0 * std::cbrt(std::abs(x) + 1.0));
  std::vector<double> bes;
  int cut = -1;
  for (int round = 0; round < 4 && cut < 0; ++round) {
    if (k_hi > max_terms) break;
    bes = detail::bessel_j_sequence(x, k_hi);
    for (int k = static_cast<int>(std::ceil(std::abs(x)));
         k <= k_hi; ++k) {
      if (std::abs(bes[static_cast<std::size_t>(k)]) < 0.1 * tol) {
        cut = k;
        break;
      }
    }
    if (cut < 0) k_hi *= 2;
  }
  if (cut < 0) {
    std::ostringstream err;
    err << "chebyshev_evolve: t*spread " << std::abs(x) << " needs more than " << max_terms
        << " terms";
    throw DegreeOverflowError(err.str());
  }

  const Eigen::Index n = state.size();
  auto apply_scaled = [&](const Eigen::VectorXcd& v) -> Eigen::VectorXcd {
    // (A v - center v) / radius on complex data, A is real
    Eigen::VectorXd re = op.mat * v.real().matrix();
    Eigen::VectorXd im = op.mat * v.imag().matrix();
    Eigen::VectorXcd out(n);
    out.real() = (re - center * v.real()) / radius;
    out.imag() = (im - center * v.imag()) / radius;
    return out;
  };

  // e^{-i x s} = sum_k (2 - delta_k0) (-i)^k J_k(x) T_k(s)
  const Cplx minus_i(0.0, -1.0);
  Eigen::VectorXcd t_prev = state;
  Eigen::VectorXcd t_cur = apply_scaled(state);
  Eigen::VectorXcd acc = bes[0] * t_prev + 2.0 * minus_i * bes[1] * t_cur;
  Cplx ik = minus_i;
  for (int k = 2; k <= cut; ++k) {
    Eigen::VectorXcd t_next = 2.0 * apply_scaled(t_cur) - t_prev;
    t_prev.swap(t_cur);
    t_cur.swap(t_next);
    ik *= minus_i;
    acc += 2.0 * ik * bes[static_cast<std::size_t>(k)] * t_cur;
  }
  acc *= phase;

  const double in_norm = state.norm();
  if (in_norm > 0.0 && std::abs(acc.norm() - in_norm) > 10.0 * tol * in_norm)
    throw InvariantViolation("chebyshev_evolve: norm drift " +
                             std::to_string(std::abs(acc.norm() - in_norm) / in_norm) +
                             " exceeds 10*tol");
  return acc;
}

}  // namespace hclab
