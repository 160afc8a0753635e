#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cdm::oracle {

std::optional<Eigen::VectorXd> brute_force_qp(const qp::Problem& pr, double feas_tol) {
  const Eigen::Index n = pr.H.rows(), p = pr.A_eq.rows(), m = pr.A_in.rows();
  std::optional<Eigen::VectorXd> best;
  double best_f = std::numeric_limits<double>::infinity();
  for (std::uint32_t mask = 0; mask < (1u << m); ++mask) {
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < m; ++i)
      if (mask & (1u << i)) rows.push_back(i);
    const Eigen::Index k = p + static_cast<Eigen::Index>(rows.size());
    if (k > n) continue;
    Eigen::MatrixXd C(k, n);
    Eigen::VectorXd d(k);
    if (p) {
      C.topRows(p) = pr.A_eq;
      d.head(p) = pr.b_eq;
    }
    for (std::size_t r = 0; r < rows.size(); ++r) {
      C.row(p + static_cast<Eigen::Index>(r)) = pr.A_in.row(rows[r]);
      d(p + static_cast<Eigen::Index>(r)) = pr.b_in(rows[r]);
    }
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + k, n + k);
    K.topLeftCorner(n, n) = pr.H;
    K.topRightCorner(n, k) = C.transpose();
    K.bottomLeftCorner(k, n) = C;
    Eigen::VectorXd rhs(n + k);
    rhs << -pr.g, d;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
    if (lu.rank() < n + k) continue;
    const Eigen::VectorXd x = lu.solve(rhs).head(n);
    if (p && (pr.A_eq * x - pr.b_eq).cwiseAbs().maxCoeff() > feas_tol) continue;
    if (m && (pr.A_in * x - pr.b_in).maxCoeff() > feas_tol) continue;
    const double f = 0.5 * x.dot(pr.H * x) + pr.g.dot(x);
    if (f < best_f) {
      best_f = f;
      best = x;
    }
  }
  return best;
}

qp::Problem random_qp(std::mt19937_64& rng, int n, int p, int m) {
  std::normal_distribution<double> N(0.0, 1.0);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  auto randn = [&](Eigen::Index r, Eigen::Index c) {
    Eigen::MatrixXd M(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) M(i, j) = N(rng);
    return M;
  };
  const Eigen::MatrixXd L = randn(n, n);
  Eigen::MatrixXd H = L * L.transpose() + 0.1 * Eigen::MatrixXd::Identity(n, n);
  H = 0.5 * (H + H.transpose());
  qp::Problem pr = qp::make_problem(H, 3.0 * randn(n, 1).col(0));
  const Eigen::VectorXd x0 = randn(n, 1).col(0);
  pr.A_eq = randn(p, n);
  pr.b_eq = pr.A_eq * x0;
  pr.A_in = randn(m, n);
  pr.b_in = pr.A_in * x0;
  for (Eigen::Index i = 0; i < m; ++i) pr.b_in(i) += U(rng);
  return pr;
}

Eigen::Vector2d arc_endpoint(double kappa_per_m, double L) {
  const double k = kappa_per_m * 1e-3;
  if (std::abs(k) < 1e-15) return {0.0, L};
  return {(1.0 - std::cos(k * L)) / k, std::sin(k * L) / k};
}

Eigen::Vector2d profile_endpoint(const std::array<double, 3>& k, const std::array<double, 3>& aa, double L) {
  auto kappa = [&](double s) {
    if (s <= aa[0]) return k[0];
    if (s >= aa[2]) return k[2];
    const int i = s < aa[1] ? 0 : 1;
    const double f = (s - aa[i]) / (aa[i + 1] - aa[i]);
    return (1 - f) * k[i] + f * k[i + 1];
  };
  // Trapezoid is exact on each linear piece.
  auto heading = [&](double s) {
    double phi = 0, a = 0;
    for (double b : {aa[0], aa[1], aa[2], L}) {
      const double e = std::min(b, s);
      if (e > a) phi += 0.5 * (kappa(a) + kappa(e)) * (e - a);
      a = std::max(a, b);
      if (b >= s) break;
    }
    return phi * 1e-3;
  };
  const int n = 20000;
  const double h = L / n;
  Eigen::Vector2d p = Eigen::Vector2d::Zero();
  for (int i = 0; i <= n; ++i) {
    const double w = (i == 0 || i == n) ? 1 : (i % 2 ? 4 : 2);
    const double phi = heading(i * h);
    p += w * Eigen::Vector2d(std::sin(phi), std::cos(phi));
  }
  return p * h / 3.0;
}

}  // namespace cdm::oracle
