#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <functional>

#include "coda/errors.hpp"

namespace coda::numerics {

struct ConvergenceSettings {
    double gradient_norm_tol = 1e-8;
    std::size_t max_iterations = 500;
};

/// Smooth unconstrained minimization problem with an analytic gradient.
struct OptimizerProblem {
    std::function<double(const Eigen::VectorXd&)> objective;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> gradient;
    Eigen::VectorXd initial_point;
    ConvergenceSettings convergence;
};

struct MinimizeResult {
    Eigen::VectorXd solution;
    double objective_value = 0.0;
    double gradient_norm = 0.0;
    bool converged = false;
    std::size_t iterations = 0;
};

/// Thrown when the line search cannot make progress; carries the last
/// valid iterate so callers can still inspect it.
class optimization_failure : public error {
public:
    optimization_failure(const std::string& msg, Eigen::VectorXd last_point,
                         double last_value, std::size_t iterations)
        : error(msg), last_point(std::move(last_point)), last_value(last_value),
          iterations(iterations) {}
    Eigen::VectorXd last_point;
    double last_value;
    std::size_t iterations;
};

/// BFGS quasi-Newton descent with backtracking (Armijo) line search.
/// Deterministic for identical inputs. Non-finite trial objectives are
/// treated as line-search rejections.
MinimizeResult minimize(const OptimizerProblem& problem);

/// Max relative disagreement between the analytic gradient and central
/// finite differences at `point`.
double check_gradient(const OptimizerProblem& problem, const Eigen::VectorXd& point,
                      double step = 1e-6);

} // namespace coda::numerics
