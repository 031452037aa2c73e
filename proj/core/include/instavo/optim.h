#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string_view>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

namespace instavo {

enum class LMTermination {
  kCostTolerance,
  kStepTolerance,
  kMaxIterations,
  kNumericalFailure,
};

std::string_view ToString(LMTermination reason);

struct LMConfig {
  int max_iterations = 50;
  double initial_damping = 1e-4;
  double damping_up = 10.0;
  double damping_down = 10.0;
  // Relative decrease of the cost below which an accepted step ends the solve.
  double cost_tolerance = 1e-12;
  // Tangent-space step norm below which the solve ends.
  double step_tolerance = 1e-12;

  // Throws std::invalid_argument unless every field is positive, the damping
  // factors exceed one and max_iterations >= 1.
  void Validate() const;
};

struct LMStatus {
  bool converged = false;
  // Step attempts, accepted or rejected.
  int iterations = 0;
  double initial_cost = 0.0;
  // Squared residual norm at the returned point.
  double final_cost = 0.0;
  LMTermination reason = LMTermination::kMaxIterations;
  // Cost after each accepted step, starting with the initial cost.
  std::vector<double> accepted_costs;
};

// Least-squares problem over a manifold point type. When `jacobian` is empty
// the solver uses central differences (step 1e-6) through `retract`.
template <typename Point>
struct LMProblem {
  int tangent_dim = 0;
  std::function<Eigen::VectorXd(const Point&)> residual;
  std::function<Eigen::MatrixXd(const Point&)> jacobian;
  std::function<Point(const Point&, const Eigen::VectorXd&)> retract;
};

template <typename Point>
struct LMResult {
  Point point;
  LMStatus status;
};

inline constexpr double kNumericJacobianStep = 1e-6;

template <typename Point>
Eigen::MatrixXd NumericJacobian(const LMProblem<Point>& problem, const Point& x,
                                double step = kNumericJacobianStep) {
  Eigen::VectorXd delta = Eigen::VectorXd::Zero(problem.tangent_dim);
  Eigen::MatrixXd jac;
  for (int j = 0; j < problem.tangent_dim; ++j) {
    delta[j] = step;
    const Eigen::VectorXd plus = problem.residual(problem.retract(x, delta));
    delta[j] = -step;
    const Eigen::VectorXd minus = problem.residual(problem.retract(x, delta));
    delta[j] = 0.0;
    if (j == 0) jac.resize(plus.size(), problem.tangent_dim);
    jac.col(j) = (plus - minus) / (2.0 * step);
  }
  return jac;
}

// Damped Gauss-Newton with Marquardt diagonal scaling:
//   (J^T J + lambda diag(J^T J)) delta = -J^T r.
// A step is kept only if it lowers the cost; otherwise lambda grows and the
// step is recomputed. Non-finite residuals end the solve with
// kNumericalFailure and the last accepted point.
class LevenbergMarquardt {
 public:
  explicit LevenbergMarquardt(const LMConfig& config) : config_(config) {
    config_.Validate();
  }

  const LMConfig& config() const { return config_; }

  template <typename Point>
  LMResult<Point> Minimize(const LMProblem<Point>& problem, const Point& x0) const;

 private:
  LMConfig config_;
};

template <typename Point>
LMResult<Point> LevenbergMarquardt::Minimize(const LMProblem<Point>& problem,
                                             const Point& x0) const {
  LMResult<Point> out{x0, {}};
  LMStatus& status = out.status;

  Eigen::VectorXd r = problem.residual(x0);
  double cost = r.squaredNorm();
  status.initial_cost = cost;
  status.final_cost = cost;
  if (!std::isfinite(cost)) {
    status.reason = LMTermination::kNumericalFailure;
    return out;
  }
  status.accepted_costs.push_back(cost);

  Point x = x0;
  double lambda = config_.initial_damping;
  bool need_jacobian = true;
  Eigen::MatrixXd jtj;
  Eigen::VectorXd jtr;

  while (status.iterations < config_.max_iterations) {
    if (need_jacobian) {
      const Eigen::MatrixXd jac =
          problem.jacobian ? problem.jacobian(x) : NumericJacobian(problem, x);
      if (!jac.allFinite()) {
        status.reason = LMTermination::kNumericalFailure;
        break;
      }
      jtj = jac.transpose() * jac;
      jtr = jac.transpose() * r;
      need_jacobian = false;
    }
    ++status.iterations;

    Eigen::MatrixXd damped = jtj;
    const double diag_floor = 1e-15 * (1.0 + jtj.diagonal().maxCoeff());
    for (int i = 0; i < damped.rows(); ++i) {
      damped(i, i) += lambda * std::max(jtj(i, i), diag_floor);
    }
    const Eigen::VectorXd delta = damped.ldlt().solve(-jtr);
    if (!delta.allFinite()) {
      status.reason = LMTermination::kNumericalFailure;
      break;
    }
    if (delta.norm() <= config_.step_tolerance) {
      status.converged = true;
      status.reason = LMTermination::kStepTolerance;
      break;
    }

    const Point candidate = problem.retract(x, delta);
    const Eigen::VectorXd r_new = problem.residual(candidate);
    const double new_cost = r_new.squaredNorm();
    if (!std::isfinite(new_cost)) {
      status.reason = LMTermination::kNumericalFailure;
      break;
    }

    if (new_cost < cost) {
      const double decrease = cost - new_cost;
      x = candidate;
      r = r_new;
      const double previous = cost;
      cost = new_cost;
      status.accepted_costs.push_back(cost);
      lambda = std::max(lambda / config_.damping_down, 1e-20);
      need_jacobian = true;
      if (decrease <= config_.cost_tolerance * previous) {
        status.converged = true;
        status.reason = LMTermination::kCostTolerance;
        break;
      }
    } else {
      lambda *= config_.damping_up;
      if (lambda > 1e32) {
        // No descent direction left at any damping: a stationary point.
        status.converged = true;
        status.reason = LMTermination::kStepTolerance;
        break;
      }
    }
  }

  out.point = x;
  status.final_cost = cost;
  return out;
}

template <typename Point>
LMResult<Point> LmMinimize(const LMProblem<Point>& problem, const Point& x0,
                           const LMConfig& config) {
  return LevenbergMarquardt(config).Minimize(problem, x0);
}

}  // namespace instavo
