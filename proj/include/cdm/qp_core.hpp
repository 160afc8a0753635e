#pragma once

// Small dense convex QP solver.
//
//   minimize    1/2 x' H x + g' x
//   subject to  A_eq x  = b_eq
//               A_in x <= b_in
//
// H must be symmetric positive definite. Solved with a primal active-set
// method; a feasible starting point is found by a phase-1 problem that
// minimizes the largest constraint violation, which is also how
// infeasibility is detected.

#include <vector>

#include <Eigen/Dense>

namespace cdm::qp {

struct Problem {
  Eigen::MatrixXd H;
  Eigen::VectorXd g;
  Eigen::MatrixXd A_eq;  // p x n, may have zero rows
  Eigen::VectorXd b_eq;
  Eigen::MatrixXd A_in;  // m x n, may have zero rows
  Eigen::VectorXd b_in;

  Eigen::Index num_vars() const { return H.rows(); }
};

// Builds a problem with no constraints; constraints are set afterwards.
Problem make_problem(const Eigen::MatrixXd& H, const Eigen::VectorXd& g);

struct Solution {
  Eigen::VectorXd x;
  std::vector<int> active_set;  // binding inequality rows, ascending
  double objective_value = 0.0;
  int iterations = 0;
  Eigen::VectorXd eq_multipliers;  // nu, size p
  Eigen::VectorXd in_multipliers;  // lambda, size m (zero off the active set)
};

struct Options {
  double feasibility_tol = 1e-9;
  double stationarity_tol = 1e-8;
  double pd_pivot_tol = 1e-12;
  // Previous active set. Used only if the equality-constrained minimizer on
  // that set is feasible; otherwise the solver starts from phase 1.
  std::vector<int> warm_start;
};

Solution solve(const Problem& problem, const Options& options = {});

// Minimum two-norm solution of A_eq x = b_eq, via the normal equations of
// the dual: x = A_eq' (A_eq A_eq')^-1 b_eq.
Eigen::VectorXd least_norm_update(const Eigen::MatrixXd& A_eq, const Eigen::VectorXd& b_eq,
                                  Eigen::Index n);

// Infinity norm of H x + g + A_eq' nu + A_in' lambda.
double stationarity_residual(const Problem& problem, const Solution& solution);

// Largest constraint violation (equalities in absolute value).
double max_violation(const Problem& problem, const Eigen::VectorXd& x);

double objective(const Problem& problem, const Eigen::VectorXd& x);

}  // namespace cdm::qp
