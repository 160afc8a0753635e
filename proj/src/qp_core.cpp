#include "cdm/qp_core.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include "cdm/errors.hpp"

namespace cdm::qp {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Constraints {
  const MatrixXd& A_eq;
  const VectorXd& b_eq;
  const MatrixXd& A_in;
  const VectorXd& b_in;
};

struct Outcome {
  VectorXd x;
  std::vector<int> working;
  VectorXd nu;
  VectorXd lambda;  // aligned with `working`
  int iterations = 0;
};

// Rows of A_eq followed by the working inequality rows.
MatrixXd active_rows(const Constraints& c, const std::vector<int>& working, Index n) {
  MatrixXd M(c.A_eq.rows() + static_cast<Index>(working.size()), n);
  if (c.A_eq.rows() > 0) M.topRows(c.A_eq.rows()) = c.A_eq;
  for (std::size_t i = 0; i < working.size(); ++i) {
    M.row(c.A_eq.rows() + static_cast<Index>(i)) = c.A_in.row(working[i]);
  }
  return M;
}

VectorXd active_rhs(const Constraints& c, const std::vector<int>& working) {
  VectorXd b(c.b_eq.size() + static_cast<Index>(working.size()));
  if (c.b_eq.size() > 0) b.head(c.b_eq.size()) = c.b_eq;
  for (std::size_t i = 0; i < working.size(); ++i) {
    b(c.b_eq.size() + static_cast<Index>(i)) = c.b_in(working[i]);
  }
  return b;
}

// Orthonormal basis of the null space of M (k x n, full row rank).
MatrixXd null_space(const MatrixXd& M, Index n) {
  const Index k = M.rows();
  if (k == 0) return MatrixXd::Identity(n, n);
  if (k >= n) return MatrixXd(n, 0);
  Eigen::HouseholderQR<MatrixXd> qr(M.transpose());
  MatrixXd Q = qr.householderQ() * MatrixXd::Identity(n, n);
  return Q.rightCols(n - k);
}

bool rows_independent(const MatrixXd& M) {
  if (M.rows() == 0) return true;
  if (M.rows() > M.cols()) return false;
  Eigen::ColPivHouseholderQR<MatrixXd> qr(M.transpose());
  qr.setThreshold(1e-10);
  return qr.rank() == M.rows();
}

// Cholesky with an explicit relative pivot threshold.
bool cholesky_ok(const MatrixXd& S, double pivot_tol) {
  const Index n = S.rows();
  double scale = 1.0;
  for (Index i = 0; i < n; ++i) scale = std::max(scale, std::abs(S(i, i)));
  MatrixXd L = MatrixXd::Zero(n, n);
  for (Index j = 0; j < n; ++j) {
    double d = S(j, j) - L.row(j).head(j).squaredNorm();
    if (!(d > pivot_tol * scale)) return false;
    L(j, j) = std::sqrt(d);
    for (Index i = j + 1; i < n; ++i) {
      L(i, j) = (S(i, j) - L.row(i).head(j).dot(L.row(j).head(j))) / L(j, j);
    }
  }
  return true;
}

// Primal active-set iterations from a feasible x. Handles positive
// semidefinite H (needed by phase 1): on a face where the reduced Hessian is
// singular and the reduced gradient has a component in its kernel, the step
// follows that zero-curvature descent direction until a constraint blocks.
Outcome active_set(const MatrixXd& H, const VectorXd& g, const Constraints& c, VectorXd x,
                   std::vector<int> working, int max_iterations, double pd_tol,
                   const std::function<bool(const VectorXd&)>& early_exit) {
  const Index n = H.rows();
  const Index m = c.A_in.rows();
  std::vector<char> in_working(static_cast<std::size_t>(m), 0);
  for (int i : working) in_working[static_cast<std::size_t>(i)] = 1;

  Outcome out;
  // Set after an unblocked full Newton step: x is then the minimizer on the
  // current face up to rounding, which on ill-conditioned faces can exceed
  // the step-length test below.
  bool face_minimum = false;
  for (int it = 0; it < max_iterations; ++it) {
    out.iterations = it + 1;
    const VectorXd q = H * x + g;
    const MatrixXd M = active_rows(c, working, n);
    const MatrixXd Z = null_space(M, n);

    VectorXd p = VectorXd::Zero(n);
    bool unbounded = false;
    if (Z.cols() > 0 && !face_minimum) {
      const MatrixXd reduced_h = Z.transpose() * H * Z;
      const VectorXd r = Z.transpose() * q;
      Eigen::SelfAdjointEigenSolver<MatrixXd> eig(reduced_h);
      const VectorXd& ev = eig.eigenvalues();
      const MatrixXd& V = eig.eigenvectors();
      const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
      VectorXd y = VectorXd::Zero(Z.cols());
      VectorXd r_kernel = VectorXd::Zero(Z.cols());
      for (Index j = 0; j < ev.size(); ++j) {
        const double coef = V.col(j).dot(r);
        if (ev(j) > pd_tol * scale) {
          y -= (coef / ev(j)) * V.col(j);
        } else {
          r_kernel += coef * V.col(j);
        }
      }
      if (r_kernel.norm() > 1e-12 * std::max(1.0, q.norm())) {
        p = -Z * r_kernel;
        unbounded = true;
      } else {
        p = Z * y;
      }
    }

    if (p.norm() <= 1e-13 * (1.0 + x.norm())) {
      // Stationary on the current face: check multiplier signs.
      VectorXd mu = VectorXd::Zero(M.rows());
      if (M.rows() > 0) {
        mu = M.transpose().colPivHouseholderQr().solve(-q);
      }
      const Index p_eq = c.A_eq.rows();
      const double mult_tol = 1e-11 * std::max(1.0, q.lpNorm<Eigen::Infinity>());
      int drop = -1;
      double most_negative = -mult_tol;
      for (std::size_t i = 0; i < working.size(); ++i) {
        const double lam = mu(p_eq + static_cast<Index>(i));
        if (lam < most_negative ||
            (lam == most_negative && drop >= 0 && working[i] < working[static_cast<std::size_t>(drop)])) {
          most_negative = lam;
          drop = static_cast<int>(i);
        }
      }
      if (drop < 0) {
        out.x = std::move(x);
        out.nu = mu.head(p_eq);
        out.lambda = mu.tail(static_cast<Index>(working.size()));
        out.working = std::move(working);
        return out;
      }
      face_minimum = false;
      in_working[static_cast<std::size_t>(working[static_cast<std::size_t>(drop)])] = 0;
      working.erase(working.begin() + drop);
      continue;
    }

    // Ratio test; the lowest row index wins ties.
    double alpha = unbounded ? kInf : 1.0;
    int blocking = -1;
    for (Index i = 0; i < m; ++i) {
      if (in_working[static_cast<std::size_t>(i)]) continue;
      const double ap = c.A_in.row(i).dot(p);
      if (ap <= 1e-14 * c.A_in.row(i).norm() * p.norm()) continue;
      const double slack = std::max(0.0, c.b_in(i) - c.A_in.row(i).dot(x));
      const double step = slack / ap;
      if (step < alpha) {
        alpha = step;
        blocking = static_cast<int>(i);
      }
    }
    if (!std::isfinite(alpha)) {
      throw Error(ErrorCode::kIllConditioned, "objective unbounded along a zero-curvature direction");
    }
    x += alpha * p;
    face_minimum = blocking < 0 && !unbounded;
    if (blocking >= 0) {
      working.push_back(blocking);
      in_working[static_cast<std::size_t>(blocking)] = 1;
    }
    if (early_exit && early_exit(x)) {
      out.x = std::move(x);
      out.working = std::move(working);
      return out;
    }
  }
  throw Error(ErrorCode::kMaxIterations,
              "active-set iteration cap of " + std::to_string(max_iterations) + " reached");
}

void validate(const Problem& pr, const Options& opt) {
  const Index n = pr.H.rows();
  auto bad = [](const std::string& what) { throw Error(ErrorCode::kInvalidArgument, what); };
  if (n == 0 || pr.H.cols() != n) bad("H must be square and non-empty");
  if (pr.g.size() != n) bad("g has wrong size");
  if (pr.A_eq.rows() > 0 && pr.A_eq.cols() != n) bad("A_eq has wrong column count");
  if (pr.b_eq.size() != pr.A_eq.rows()) bad("b_eq size does not match A_eq");
  if (pr.A_in.rows() > 0 && pr.A_in.cols() != n) bad("A_in has wrong column count");
  if (pr.b_in.size() != pr.A_in.rows()) bad("b_in size does not match A_in");
  if (pr.A_eq.rows() > n) bad("more equality constraints than variables");
  if (!pr.H.allFinite() || !pr.g.allFinite() || !pr.A_eq.allFinite() || !pr.b_eq.allFinite() ||
      !pr.A_in.allFinite() || !pr.b_in.allFinite()) {
    bad("non-finite problem data");
  }
  const double hscale = std::max(1.0, pr.H.cwiseAbs().maxCoeff());
  if ((pr.H - pr.H.transpose()).cwiseAbs().maxCoeff() > 1e-12 * hscale) bad("H is not symmetric");
  if (!cholesky_ok(pr.H, opt.pd_pivot_tol)) {
    throw Error(ErrorCode::kIllConditioned, "H is not positive definite");
  }
  if (pr.A_eq.rows() > 0 && !cholesky_ok(pr.A_eq * pr.A_eq.transpose(), opt.pd_pivot_tol)) {
    throw Error(ErrorCode::kRankDeficient, "equality constraints are not full row rank");
  }
}

int iteration_cap(const Problem& pr) {
  return std::max(10, 100 * static_cast<int>(pr.A_in.rows() + pr.A_eq.rows()));
}

// Phase 1: minimize 1/2 t^2 over (x, t) with A_eq x = b_eq, A_in x - t <= b_in.
// The start (least-norm equality solution, t = max violation) is feasible.
VectorXd find_feasible_point(const Problem& pr, const Options& opt) {
  const Index n = pr.num_vars();
  const Index m = pr.A_in.rows();
  VectorXd x0 = VectorXd::Zero(n);
  if (pr.A_eq.rows() > 0) x0 = least_norm_update(pr.A_eq, pr.b_eq, n);
  double t0 = 0.0;
  if (m > 0) t0 = std::max(0.0, (pr.A_in * x0 - pr.b_in).maxCoeff());
  if (t0 <= 0.5 * opt.feasibility_tol) return x0;

  MatrixXd H1 = MatrixXd::Zero(n + 1, n + 1);
  H1(n, n) = 1.0;
  const VectorXd g1 = VectorXd::Zero(n + 1);
  MatrixXd A_eq1 = MatrixXd::Zero(pr.A_eq.rows(), n + 1);
  if (pr.A_eq.rows() > 0) A_eq1.leftCols(n) = pr.A_eq;
  MatrixXd A_in1(m, n + 1);
  A_in1.leftCols(n) = pr.A_in;
  A_in1.col(n).setConstant(-1.0);
  const Constraints c1{A_eq1, pr.b_eq, A_in1, pr.b_in};

  VectorXd z0(n + 1);
  z0 << x0, t0;
  const double target = 0.5 * opt.feasibility_tol;
  Outcome res = active_set(H1, g1, c1, z0, {}, iteration_cap(pr), opt.pd_pivot_tol,
                           [&](const VectorXd& z) { return z(n) <= target; });
  if (res.x(n) > opt.feasibility_tol) {
    throw Error(ErrorCode::kInfeasible,
                "constraints cannot be satisfied; smallest max violation " + std::to_string(res.x(n)));
  }
  return res.x.head(n);
}

// Equality-constrained minimizer with the hinted inequalities held active.
bool try_warm_start(const Problem& pr, const Options& opt, VectorXd& x, std::vector<int>& working) {
  std::vector<int> hint;
  for (int i : opt.warm_start) {
    if (i >= 0 && i < pr.A_in.rows()) hint.push_back(i);
  }
  std::sort(hint.begin(), hint.end());
  hint.erase(std::unique(hint.begin(), hint.end()), hint.end());
  if (hint.empty()) return false;
  const Constraints c{pr.A_eq, pr.b_eq, pr.A_in, pr.b_in};
  const Index n = pr.num_vars();
  const MatrixXd M = active_rows(c, hint, n);
  if (!rows_independent(M)) return false;
  const VectorXd b = active_rhs(c, hint);
  const VectorXd xp = M.transpose() * (M * M.transpose()).ldlt().solve(b);
  const MatrixXd Z = null_space(M, n);
  VectorXd cand = xp;
  if (Z.cols() > 0) {
    const MatrixXd rh = Z.transpose() * pr.H * Z;
    cand += Z * rh.ldlt().solve(-Z.transpose() * (pr.H * xp + pr.g));
  }
  if (max_violation(pr, cand) > opt.feasibility_tol) return false;
  x = cand;
  working = hint;
  return true;
}

}  // namespace

Problem make_problem(const Eigen::MatrixXd& H, const Eigen::VectorXd& g) {
  Problem p;
  p.H = H;
  p.g = g;
  p.A_eq = MatrixXd(0, H.rows());
  p.b_eq = VectorXd(0);
  p.A_in = MatrixXd(0, H.rows());
  p.b_in = VectorXd(0);
  return p;
}

Solution solve(const Problem& problem, const Options& options) {
  validate(problem, options);
  const Index n = problem.num_vars();
  const Index m = problem.A_in.rows();

  VectorXd x;
  std::vector<int> working;
  if (!try_warm_start(problem, options, x, working)) {
    x = find_feasible_point(problem, options);
    working.clear();
  }

  const Constraints c{problem.A_eq, problem.b_eq, problem.A_in, problem.b_in};
  Outcome res = active_set(problem.H, problem.g, c, x, working, iteration_cap(problem),
                           options.pd_pivot_tol, nullptr);

  Solution sol;
  sol.x = res.x;
  sol.iterations = res.iterations;
  sol.eq_multipliers = res.nu;
  sol.in_multipliers = VectorXd::Zero(m);
  for (std::size_t i = 0; i < res.working.size(); ++i) {
    sol.in_multipliers(res.working[i]) = res.lambda(static_cast<Index>(i));
  }
  sol.active_set = res.working;
  std::sort(sol.active_set.begin(), sol.active_set.end());
  sol.objective_value = objective(problem, sol.x);
  (void)n;
  return sol;
}

Eigen::VectorXd least_norm_update(const Eigen::MatrixXd& A_eq, const Eigen::VectorXd& b_eq,
                                  Eigen::Index n) {
  if (A_eq.cols() != n || b_eq.size() != A_eq.rows()) {
    throw Error(ErrorCode::kInvalidArgument, "least_norm_update: dimension mismatch");
  }
  if (A_eq.rows() == 0) return VectorXd::Zero(n);
  const MatrixXd gram = A_eq * A_eq.transpose();
  if (!cholesky_ok(gram, 1e-12)) {
    throw Error(ErrorCode::kRankDeficient, "least_norm_update: A_eq is not full row rank");
  }
  return A_eq.transpose() * gram.llt().solve(b_eq);
}

double stationarity_residual(const Problem& problem, const Solution& solution) {
  VectorXd r = problem.H * solution.x + problem.g;
  if (problem.A_eq.rows() > 0) r += problem.A_eq.transpose() * solution.eq_multipliers;
  if (problem.A_in.rows() > 0) r += problem.A_in.transpose() * solution.in_multipliers;
  return r.lpNorm<Eigen::Infinity>();
}

double max_violation(const Problem& problem, const Eigen::VectorXd& x) {
  double v = 0.0;
  if (problem.A_eq.rows() > 0) {
    v = std::max(v, (problem.A_eq * x - problem.b_eq).cwiseAbs().maxCoeff());
  }
  if (problem.A_in.rows() > 0) {
    v = std::max(v, (problem.A_in * x - problem.b_in).maxCoeff());
  }
  return v;
}

double objective(const Problem& problem, const Eigen::VectorXd& x) {
  return 0.5 * x.dot(problem.H * x) + problem.g.dot(x);
}

}  // namespace cdm::qp
