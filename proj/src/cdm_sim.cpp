#include "cdm/cdm_sim.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cdm/errors.hpp"
#include "cdm/qp_core.hpp"

namespace cdm {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

Point2 perp(const Point2& v) { return {-v.y(), v.x()}; }

// Direction of a link with heading phi; positive heading turns toward -lateral.
Point2 heading_dir(double phi) { return {-std::sin(phi), std::cos(phi)}; }

double log_cosh(double x) {
  const double ax = std::abs(x);
  return ax + std::log1p(std::exp(-2.0 * ax)) - std::log(2.0);
}

struct JointLaw {
  double f;  // softening fraction
  double a;  // softening angle

  double energy(double k, double t) const {
    return k * ((1.0 - f) * 0.5 * t * t + f * a * a * log_cosh(t / a));
  }
  double torque(double k, double t) const { return k * ((1.0 - f) * t + f * a * std::tanh(t / a)); }
  double stiffness(double k, double t) const {
    const double s = 1.0 / std::cosh(std::min(std::abs(t / a), 350.0));
    return k * ((1.0 - f) + f * s * s);
  }

  // Angle t >= 0 with torque(k, t) = mu >= 0. The torque is bounded by
  // k t from above and k (1 - f) t from below, which brackets the root.
  double inverse(double k, double mu) const {
    if (mu <= 0.0) return 0.0;
    double lo = mu / k;
    double hi = mu / (k * (1.0 - f));
    double t = lo;
    for (int it = 0; it < 200; ++it) {
      const double r = torque(k, t) - mu;
      if (r > 0) hi = std::min(hi, t); else lo = std::max(lo, t);
      double next = t - r / stiffness(k, t);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (std::abs(next - t) <= 1e-17 + 1e-16 * std::abs(t)) return next;
      t = next;
    }
    return t;
  }
};

JointLaw law_of(const CdmConfig& c) { return {c.softening_fraction, c.softening_angle}; }

double total_bend(const CdmConfig& c, const Pull& pull) { return (pull(0) - pull(1)) / c.cable_offset; }
double preload(const Pull& pull) { return 0.5 * (pull(0) + pull(1)); }

// Puts theta on sum(theta) = bend inside |theta_i| <= cap by shifting along
// the compliance weights and water-filling any clipped excess.
VectorXd project_feasible(VectorXd theta, double bend, double cap, const VectorXd& weights) {
  const Eigen::Index n = theta.size();
  std::vector<char> clipped(static_cast<std::size_t>(n), 0);
  for (int pass = 0; pass <= n; ++pass) {
    double free_w = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!clipped[static_cast<std::size_t>(i)]) free_w += weights(i);
    }
    const double excess = bend - theta.sum();
    if (free_w <= 0.0) break;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!clipped[static_cast<std::size_t>(i)]) theta(i) += excess * weights(i) / free_w;
    }
    bool any = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (std::abs(theta(i)) > cap) {
        theta(i) = std::copysign(cap, theta(i));
        clipped[static_cast<std::size_t>(i)] = 1;
        any = true;
      }
    }
    if (!any) break;
  }
  return theta;
}

struct EnergyModel {
  const CdmConfig& config;
  const std::vector<Obstacle>& obstacles;
  VectorXd k;  // effective stiffness at the current preload
  JointLaw law;
  double h;

  double energy(const VectorXd& theta) const {
    double e = 0.0;
    for (Eigen::Index i = 0; i < theta.size(); ++i) e += law.energy(k(i), theta(i));
    if (obstacles.empty()) return e;
    const auto pts = contact_points(config, theta);
    for (const auto& ob : obstacles) {
      const double ks = ob.stiffness(config);
      for (const auto& q : pts) {
        const double d = -signed_distance(ob, q);
        if (d > 0) e += 0.5 * ks * d * d;
      }
    }
    return e;
  }

  // Gradient and Hessian of the energy.
  void derivatives(const VectorXd& theta, VectorXd& grad, MatrixXd& hess) const {
    const Eigen::Index n = theta.size();
    grad.resize(n);
    hess = MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      grad(i) = law.torque(k(i), theta(i));
      hess(i, i) = law.stiffness(k(i), theta(i));
    }
    if (obstacles.empty()) return;

    const auto P = link_points(config, theta);
    std::vector<Point2> dq(static_cast<std::size_t>(n));
    VectorXd a(n);
    double phi = 0.0;
    for (Eigen::Index l = 0; l < n; ++l) {
      const Point2 mid = P[static_cast<std::size_t>(l)] + 0.5 * h * heading_dir(phi);
      const Point2 end = P[static_cast<std::size_t>(l + 1)];
      phi += theta(l);
      for (const Point2& q : {mid, end}) {
        for (const auto& ob : obstacles) {
          const Point2 v = q - ob.center;
          const double rho = v.norm();
          const double d = ob.radius - rho;
          if (d <= 0.0 || rho < 1e-12) continue;
          const double ks = ob.stiffness(config);
          const Point2 u = v / rho;
          // Joints 0..l-1 move this point; joint i pivots about P[i+1].
          for (Eigen::Index i = 0; i < l; ++i) {
            dq[static_cast<std::size_t>(i)] = perp(q - P[static_cast<std::size_t>(i + 1)]);
            a(i) = -u.dot(dq[static_cast<std::size_t>(i)]);
            grad(i) += ks * d * a(i);
          }
          const Eigen::Matrix2d proj = Eigen::Matrix2d::Identity() - u * u.transpose();
          for (Eigen::Index i = 0; i < l; ++i) {
            for (Eigen::Index j = 0; j <= i; ++j) {
              // d2q/dti dtj = -(q - P[max(i,j)+1])
              const double curv = u.dot(q - P[static_cast<std::size_t>(i + 1)]) -
                                  dq[static_cast<std::size_t>(i)].dot(proj * dq[static_cast<std::size_t>(j)]) / rho;
              const double hij = ks * (a(i) * a(j) + d * curv);
              hess(i, j) += hij;
              if (i != j) hess(j, i) += hij;
            }
          }
        }
      }
    }
  }
};

// Infinity norm of the projected gradient (KKT residual of the bend
// constraint plus curvature bounds).
double projected_residual(const VectorXd& grad, const VectorXd& theta, double cap) {
  const Eigen::Index n = grad.size();
  const double at_bound = cap * (1.0 - 1e-12);
  double sum = 0.0;
  int count = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(theta(i)) < at_bound) {
      sum += grad(i);
      ++count;
    }
  }
  if (count == 0) return 0.0;
  const double nu = -sum / count;
  double r = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double gi = grad(i) + nu;
    if (theta(i) >= at_bound) {
      r = std::max(r, std::max(0.0, gi));
    } else if (theta(i) <= -at_bound) {
      r = std::max(r, std::max(0.0, -gi));
    } else {
      r = std::max(r, std::abs(gi));
    }
  }
  return r;
}

struct NewtonResult {
  VectorXd theta;
  int iterations = 0;
};

// Projected damped Newton at a fixed pull; theta must already be feasible.
// Largest multiple of delta that keeps every joint inside +-cap, at most 1e3.
double step_limit(const VectorXd& theta, const VectorXd& delta, double cap) {
  double alpha_max = 1e3;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    if (delta(i) > 0) alpha_max = std::min(alpha_max, (cap - theta(i)) / delta(i));
    if (delta(i) < 0) alpha_max = std::min(alpha_max, (-cap - theta(i)) / delta(i));
  }
  return std::max(alpha_max, 1.0);
}

NewtonResult newton_solve(const EnergyModel& model, VectorXd theta, double cap,
                          const EquilibriumOptions& opt) {
  const Eigen::Index n = theta.size();
  VectorXd grad;
  MatrixXd hess;
  double e = model.energy(theta);
  for (int it = 0; it < opt.max_iterations; ++it) {
    model.derivatives(theta, grad, hess);
    // Relative to the joint torque scale: contact forces make an absolute
    // 1e-9 unreachable in double precision.
    const double tol = opt.gradient_tol * std::max(1.0, grad.cwiseAbs().maxCoeff());
    const double res = projected_residual(grad, theta, cap);
    if (res < tol) return {theta, it};

    qp::Problem step = qp::make_problem(hess, grad);
    step.A_eq = MatrixXd::Ones(1, n);
    step.b_eq = VectorXd::Zero(1);
    step.A_in.resize(2 * n, n);
    step.A_in.setZero();
    step.b_in.resize(2 * n);
    for (Eigen::Index i = 0; i < n; ++i) {
      step.A_in(i, i) = 1.0;
      step.b_in(i) = std::max(0.0, cap - theta(i));
      step.A_in(n + i, i) = -1.0;
      step.b_in(n + i) = std::max(0.0, cap + theta(i));
    }
    VectorXd delta;
    double damping = 0.0;
    const double diag_scale = hess.diagonal().cwiseAbs().maxCoeff();
    for (int attempt = 0;; ++attempt) {
      try {
        delta = qp::solve(step).x;
        break;
      } catch (const Error& err) {
        if (err.code() != ErrorCode::kIllConditioned || attempt > 30) {
          throw Error(ErrorCode::kNoConvergence, std::string("Newton step failed: ") + err.what());
        }
        const double next = damping == 0.0 ? 1e-8 * std::max(1.0, diag_scale) : 10.0 * damping;
        step.H.diagonal().array() += next - damping;
        damping = next;
      }
    }

    // Trust region on body motion, only relevant with obstacles.
    double alpha_tr = 1e3;
    if (!model.obstacles.empty()) {
      const auto before = contact_points(model.config, theta);
      const auto after = contact_points(model.config, theta + delta);
      double disp = 0.0;
      for (std::size_t i = 0; i < before.size(); ++i) disp = std::max(disp, (after[i] - before[i]).norm());
      if (disp > 0.0) alpha_tr = opt.max_point_step / disp;
    }
    const double slope = grad.dot(delta);
    double alpha = std::min(1.0, alpha_tr);
    double e_new = e;
    VectorXd trial;
    bool accepted = false;
    // Below the rounding level of the energy the Armijo test is blind; the
    // Newton step is then taken as is.
    // The step length then follows the sign of the directional derivative,
    // which stays informative where energy differences do not.
    if (-slope < 1e-13 * std::max(1.0, std::abs(e))) {
      const double alpha_max = std::max(std::min(step_limit(theta, delta, cap), alpha_tr), 1e-12);
      VectorXd g2;
      MatrixXd h2;
      auto dphi = [&](double a) {
        model.derivatives(theta + a * delta, g2, h2);
        return g2.dot(delta);
      };
      double lo = std::min(1.0, alpha_max), hi = lo;
      if (dphi(lo) < 0.0) {
        while (hi < alpha_max) {
          lo = hi;
          hi = std::min(2.0 * hi, alpha_max);
          if (dphi(hi) >= 0.0) break;
        }
        if (dphi(hi) < 0.0) lo = hi;
        for (int b = 0; b < 40 && hi - lo > 1e-3 * lo; ++b) {
          const double mid = 0.5 * (lo + hi);
          (dphi(mid) < 0.0 ? lo : hi) = mid;
        }
      }
      theta = (theta + lo * delta).cwiseMax(-cap).cwiseMin(cap);
      e = model.energy(theta);
      continue;
    }
    for (int ls = 0; ls < 60; ++ls) {
      trial = theta + alpha * delta;
      // Keep the bend constraint exact and the bounds respected.
      trial = trial.cwiseMax(-cap).cwiseMin(cap);
      e_new = model.energy(trial);
      if (e_new <= e + 1e-4 * alpha * std::min(slope, 0.0)) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      // No decrease is representable: we are at the floating-point floor.
      if (res < 1e3 * tol) return {theta, it};
      throw Error(ErrorCode::kNoConvergence, "line search failed with projected gradient " + std::to_string(res));
    }
    // A contact point sitting at the edge of the penalty makes the Hessian
    // much stiffer than the energy along the step, and full steps then crawl.
    // Keep doubling while the energy still drops, inside the joint bounds.
    if (alpha == std::min(1.0, alpha_tr)) {
      const double alpha_max = std::min(step_limit(theta, delta, cap), alpha_tr);
      for (double a = 2.0 * alpha; a <= alpha_max; a *= 2.0) {
        const VectorXd longer = theta + a * delta;
        const double e_long = model.energy(longer);
        if (!(e_long < e_new)) break;
        trial = longer;
        e_new = e_long;
      }
    }
    theta = trial;
    e = e_new;
  }
  throw Error(ErrorCode::kNoConvergence,
              "equilibrium exceeded " + std::to_string(opt.max_iterations) + " iterations");
}

CdmState make_state(const CdmConfig& config, const Pull& pull, const VectorXd& theta,
                    const std::vector<Obstacle>& obstacles, int iterations) {
  CdmState s;
  s.joint_angles = theta;
  s.cable_pull = pull;
  s.tip = tip(config, theta);
  s.contact_active.assign(obstacles.size(), false);
  s.penetration.assign(obstacles.size(), 0.0);
  if (!obstacles.empty()) {
    const auto pts = contact_points(config, theta);
    for (std::size_t o = 0; o < obstacles.size(); ++o) {
      for (const auto& q : pts) {
        const double d = -signed_distance(obstacles[o], q);
        if (d > 0.0) {
          s.contact_active[o] = true;
          s.penetration[o] = std::max(s.penetration[o], d);
        }
      }
    }
  }
  s.energy = total_energy(config, pull, theta, obstacles);
  s.solver_iterations = iterations;
  return s;
}

void check_curvature_cap(const CdmConfig& config, const Pull& pull) {
  const VectorXd free = free_space_angles(config, pull);
  const double cap = config.max_joint_angle();
  if (free.cwiseAbs().maxCoeff() > cap * (1.0 + 1e-12)) {
    throw Error(ErrorCode::kPullExceedsCurvatureLimit,
                "pull (" + std::to_string(pull(0)) + ", " + std::to_string(pull(1)) +
                    ") needs curvature " + std::to_string(free.cwiseAbs().maxCoeff() / config.link_length() * 1e3) +
                    " 1/m > kappa_max " + std::to_string(config.kappa_max));
  }
}

}  // namespace

CdmConfig CdmConfig::defaults() {
  CdmConfig c;
  c.joint_stiffness = graded_stiffness(c.n_links, 4000.0, 2.0);
  return c;
}

std::vector<double> CdmConfig::graded_stiffness(int n_links, double base, double tip_ratio) {
  std::vector<double> k(static_cast<std::size_t>(n_links));
  for (int i = 0; i < n_links; ++i) {
    const double frac = n_links > 1 ? static_cast<double>(i) / (n_links - 1) : 0.0;
    k[static_cast<std::size_t>(i)] = base * (1.0 + (tip_ratio - 1.0) * frac);
  }
  return k;
}

void CdmConfig::validate() const {
  auto bad = [](const std::string& w) { throw Error(ErrorCode::kInvalidArgument, "CdmConfig: " + w); };
  if (n_links < 3) bad("n_links must be >= 3");
  if (!(active_length > 0)) bad("active_length must be > 0");
  if (!(cable_offset > 0)) bad("cable_offset must be > 0");
  if (joint_stiffness.size() != static_cast<std::size_t>(n_links)) bad("joint_stiffness needs n_links values");
  for (double k : joint_stiffness) {
    if (!(k > 0) || !std::isfinite(k)) bad("joint stiffness values must be > 0");
  }
  if (!(kappa_max > 0)) bad("kappa_max must be > 0");
  if (!(contact_stiffness_soft > 0)) bad("contact_stiffness_soft must be > 0");
  if (!(contact_stiffness_hard > contact_stiffness_soft)) bad("contact_stiffness_hard must exceed soft");
  if (!(softening_fraction >= 0 && softening_fraction < 1)) bad("softening_fraction must be in [0, 1)");
  if (!(softening_angle > 0)) bad("softening_angle must be > 0");
  if (!std::isfinite(preload_redistribution)) bad("preload_redistribution must be finite");
}

void Obstacle::validate(const CdmConfig& config) const {
  if (!(radius > 0) || !std::isfinite(radius) || !center.allFinite()) {
    throw Error(ErrorCode::kInvalidArgument, "obstacle radius must be > 0 and finite");
  }
  if (center.norm() - radius <= config.cable_offset) {
    throw Error(ErrorCode::kInvalidArgument, "obstacle overlaps the base mount");
  }
}

CdmState straight_state(const CdmConfig& config, std::size_t n_obstacles) {
  CdmState s;
  s.joint_angles = VectorXd::Zero(config.n_links);
  s.tip = Point2(0.0, config.active_length);
  s.contact_active.assign(n_obstacles, false);
  s.penetration.assign(n_obstacles, 0.0);
  return s;
}

Eigen::VectorXd effective_stiffness(const CdmConfig& config, double c) {
  const int n = config.n_links;
  VectorXd k(n);
  for (int i = 0; i < n; ++i) {
    const double sigma = (i + 0.5) / n;
    k(i) = config.joint_stiffness[static_cast<std::size_t>(i)] *
           std::exp(config.preload_redistribution * c * (sigma - 0.5));
  }
  return k;
}

Eigen::VectorXd free_space_angles(const CdmConfig& config, const Pull& pull) {
  const int n = config.n_links;
  const double bend = total_bend(config, pull);
  VectorXd theta = VectorXd::Zero(n);
  if (bend == 0.0) return theta;
  const VectorXd k = effective_stiffness(config, preload(pull));
  const JointLaw law = law_of(config);
  const double target = std::abs(bend);
  const double compliance = k.cwiseInverse().sum();

  // All joints carry the same torque mu; find mu with sum(theta_i(mu)) = |bend|.
  double lo = target * (1.0 - law.f) / compliance;
  double hi = target / compliance;
  double mu = hi;
  for (int it = 0; it < 200; ++it) {
    double sum = 0.0;
    double dsum = 0.0;
    for (int i = 0; i < n; ++i) {
      theta(i) = law.inverse(k(i), mu);
      sum += theta(i);
      dsum += 1.0 / law.stiffness(k(i), theta(i));
    }
    const double r = sum - target;
    if (r > 0) hi = std::min(hi, mu); else lo = std::max(lo, mu);
    double next = mu - r / dsum;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - mu) <= 1e-16 * mu) break;
    mu = next;
  }
  // Remove the last rounding residue along the compliance direction.
  VectorXd w(n);
  for (int i = 0; i < n; ++i) w(i) = 1.0 / law.stiffness(k(i), theta(i));
  theta += (target - theta.sum()) * w / w.sum();
  return bend < 0 ? VectorXd(-theta) : theta;
}

CdmState equilibrium(const CdmConfig& config, const Pull& pull, const std::vector<Obstacle>& obstacles,
                     const EquilibriumOptions& options) {
  return equilibrium_from(config, straight_state(config, obstacles.size()), pull, obstacles, options);
}

CdmState equilibrium_from(const CdmConfig& config, const CdmState& warm_start, const Pull& pull,
                          const std::vector<Obstacle>& obstacles, const EquilibriumOptions& options) {
  config.validate();
  for (const auto& ob : obstacles) ob.validate(config);
  if (!pull.allFinite()) throw Error(ErrorCode::kInvalidArgument, "pull must be finite");
  check_curvature_cap(config, pull);

  if (obstacles.empty()) {
    return make_state(config, pull, free_space_angles(config, pull), obstacles, 0);
  }

  const double cap = config.max_joint_angle();
  const Pull start = warm_start.cable_pull;
  VectorXd theta = warm_start.joint_angles;
  if (theta.size() != config.n_links) theta = VectorXd::Zero(config.n_links);

  const double d_bend = std::abs(total_bend(config, pull) - total_bend(config, start));
  const double d_pre = std::abs(preload(pull) - preload(start));
  const int substeps = std::max(1, static_cast<int>(std::ceil(std::max(
                                       d_bend / options.max_bend_substep, d_pre / options.max_preload_substep))));
  int iterations = 0;
  for (int s = 1; s <= substeps; ++s) {
    const Pull p = s == substeps ? pull : Pull(start + (pull - start) * (static_cast<double>(s) / substeps));
    EnergyModel model{config, obstacles, effective_stiffness(config, preload(p)), law_of(config),
                      config.link_length()};
    VectorXd w(config.n_links);
    for (int i = 0; i < config.n_links; ++i) w(i) = 1.0 / model.law.stiffness(model.k(i), theta(i));
    theta = project_feasible(theta, total_bend(config, p), cap, w);
    NewtonResult res = newton_solve(model, theta, cap, options);
    theta = res.theta;
    iterations += res.iterations;
  }
  return make_state(config, pull, theta, obstacles, iterations);
}

PullResult apply_pull_increment(const CdmConfig& config, const CdmState& state, const Pull& delta,
                                double rate, const std::vector<Obstacle>& obstacles,
                                const EquilibriumOptions& options) {
  if (!(rate > 0)) throw Error(ErrorCode::kInvalidArgument, "cable rate must be > 0");
  if (delta(0) == 0.0 && delta(1) == 0.0) return {state, 0.0};
  PullResult out;
  out.state = equilibrium_from(config, state, state.cable_pull + delta, obstacles, options);
  out.elapsed = delta.cwiseAbs().maxCoeff() / rate;
  return out;
}

Point2 tip(const CdmConfig& config, const Eigen::VectorXd& joint_angles) {
  const double h = config.link_length();
  Point2 p = Point2::Zero();
  double phi = 0.0;
  for (Eigen::Index l = 0; l < joint_angles.size(); ++l) {
    p += h * heading_dir(phi);
    phi += joint_angles(l);
  }
  return p;
}

std::vector<Point2> link_points(const CdmConfig& config, const Eigen::VectorXd& joint_angles) {
  const double h = config.link_length();
  std::vector<Point2> pts;
  pts.reserve(static_cast<std::size_t>(joint_angles.size() + 1));
  Point2 p = Point2::Zero();
  pts.push_back(p);
  double phi = 0.0;
  for (Eigen::Index l = 0; l < joint_angles.size(); ++l) {
    p += h * heading_dir(phi);
    pts.push_back(p);
    phi += joint_angles(l);
  }
  return pts;
}

std::vector<Point2> contact_points(const CdmConfig& config, const Eigen::VectorXd& joint_angles) {
  const double h = config.link_length();
  std::vector<Point2> pts;
  pts.reserve(static_cast<std::size_t>(2 * joint_angles.size()));
  Point2 p = Point2::Zero();
  double phi = 0.0;
  for (Eigen::Index l = 0; l < joint_angles.size(); ++l) {
    const Point2 dir = heading_dir(phi);
    pts.push_back(p + 0.5 * h * dir);
    p += h * dir;
    pts.push_back(p);
    phi += joint_angles(l);
  }
  return pts;
}

double curvature_at(const CdmConfig& config, const CdmState& state, double s) {
  const double L = config.active_length;
  if (!(s >= -1e-12 && s <= L + 1e-12)) {
    throw Error(ErrorCode::kArcLengthOutOfRange,
                "arc length " + std::to_string(s) + " outside [0, " + std::to_string(L) + "]");
  }
  // Joint i sits at arc length (i + 1) h; between joints the curvature is
  // interpolated linearly, which is what a grating of finite length reads
  // off a chain of short links.
  const double h = config.link_length();
  const double u = s / h - 1.0;
  const int n = config.n_links;
  if (u <= 0.0) return state.joint_angles(0) / h * 1e3;
  if (u >= n - 1) return state.joint_angles(n - 1) / h * 1e3;
  const int i = static_cast<int>(std::floor(u));
  const double f = u - i;
  return ((1.0 - f) * state.joint_angles(i) + f * state.joint_angles(i + 1)) / h * 1e3;
}

double total_energy(const CdmConfig& config, const Pull& pull, const Eigen::VectorXd& joint_angles,
                    const std::vector<Obstacle>& obstacles) {
  EnergyModel model{config, obstacles, effective_stiffness(config, preload(pull)), law_of(config),
                    config.link_length()};
  return model.energy(joint_angles);
}

double cable_tension(const CdmConfig& config, const CdmState& state, const std::vector<Obstacle>& obstacles) {
  EnergyModel model{config, obstacles, effective_stiffness(config, preload(state.cable_pull)), law_of(config),
                    config.link_length()};
  VectorXd grad;
  MatrixXd hess;
  model.derivatives(state.joint_angles, grad, hess);
  // The cable loads every joint with the same moment r T; joints held at the
  // cap carry an extra reaction, so average over the others.
  const double cap = config.max_joint_angle();
  double sum = 0.0;
  int count = 0;
  for (Eigen::Index i = 0; i < grad.size(); ++i) {
    if (std::abs(state.joint_angles(i)) < cap * (1.0 - 1e-9)) {
      sum += grad(i);
      ++count;
    }
  }
  const double moment = count ? sum / count : grad.cwiseAbs().maxCoeff();
  return std::abs(moment) / config.cable_offset;
}

double cap_reaction(const CdmConfig& config, const CdmState& state, const std::vector<Obstacle>& obstacles) {
  EnergyModel model{config, obstacles, effective_stiffness(config, preload(state.cable_pull)), law_of(config),
                    config.link_length()};
  VectorXd grad;
  MatrixXd hess;
  model.derivatives(state.joint_angles, grad, hess);
  const double cap = config.max_joint_angle();
  double sum = 0.0;
  int count = 0;
  for (Eigen::Index i = 0; i < grad.size(); ++i) {
    if (std::abs(state.joint_angles(i)) < cap * (1.0 - 1e-9)) {
      sum += grad(i);
      ++count;
    }
  }
  const double mu = count ? sum / count : 0.0;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < grad.size(); ++i) {
    if (std::abs(state.joint_angles(i)) >= cap * (1.0 - 1e-9)) worst = std::max(worst, std::abs(grad(i) - mu));
  }
  return worst;
}

double free_tension_at_cap(const CdmConfig& config, double preload_mm) {
  const VectorXd k = effective_stiffness(config, preload_mm);
  return law_of(config).torque(k.minCoeff(), config.max_joint_angle()) / config.cable_offset;
}

double signed_distance(const Obstacle& obstacle, const Point2& p) {
  return (p - obstacle.center).norm() - obstacle.radius;
}

}  // namespace cdm
