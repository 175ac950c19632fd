#include "coda/numerics/optimize.hpp"

#include <cmath>
#include <limits>

namespace coda::numerics {

MinimizeResult minimize(const OptimizerProblem& problem) {
    const Eigen::Index n = problem.initial_point.size();
    if (n == 0) throw parameter_error("minimize: empty initial point");

    Eigen::VectorXd x = problem.initial_point;
    double fx = problem.objective(x);
    Eigen::VectorXd gx = problem.gradient(x);
    if (gx.size() != n) {
        throw parameter_error("minimize: gradient dimension " + std::to_string(gx.size()) +
                              " does not match parameter dimension " + std::to_string(n));
    }
    if (!std::isfinite(fx) || !gx.allFinite()) {
        throw domain_error("minimize: objective or gradient not finite at the initial point");
    }

    const double tol = problem.convergence.gradient_norm_tol;
    const std::size_t max_iter = problem.convergence.max_iterations;
    constexpr double kArmijo = 1e-4;
    constexpr int kMaxBacktracks = 60;

    Eigen::MatrixXd inv_hessian = Eigen::MatrixXd::Identity(n, n);
    bool scaled = false;

    MinimizeResult result;
    for (std::size_t iter = 0; iter < max_iter; ++iter) {
        result.iterations = iter;
        if (gx.norm() <= tol) {
            result.solution = x;
            result.objective_value = fx;
            result.gradient_norm = gx.norm();
            result.converged = true;
            return result;
        }

        Eigen::VectorXd direction = -(inv_hessian * gx);
        double slope = gx.dot(direction);
        if (!(slope < 0.0)) {
            // Curvature information went stale; restart from steepest descent.
            inv_hessian.setIdentity();
            direction = -gx;
            slope = gx.dot(direction);
        }

        double step = 1.0;
        double f_new = fx;
        Eigen::VectorXd x_new = x;
        bool accepted = false;
        // near a minimum the true decrease drops below the resolution of the
        // objective itself; allow that much slack so rounding noise cannot
        // starve the search while gradients still gate convergence
        const double noise = 4.0 * std::numeric_limits<double>::epsilon() *
                             std::max(1.0, std::fabs(fx));
        for (int bt = 0; bt < kMaxBacktracks; ++bt) {
            x_new = x + step * direction;
            f_new = problem.objective(x_new);
            if (std::isfinite(f_new) && f_new <= fx + kArmijo * step * slope + noise) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            throw optimization_failure("minimize: line search failed to find descent", x, fx,
                                       iter);
        }

        Eigen::VectorXd g_new = problem.gradient(x_new);
        if (!g_new.allFinite()) {
            throw optimization_failure("minimize: gradient not finite at accepted step", x, fx,
                                       iter);
        }

        const Eigen::VectorXd s = x_new - x;
        const Eigen::VectorXd y = g_new - gx;
        const double ys = y.dot(s);
        if (ys > 1e-12 * y.norm() * s.norm()) {
            if (!scaled) {
                // match the identity to the objective's curvature before the
                // first update; a badly scaled start costs hundreds of steps
                inv_hessian *= ys / y.squaredNorm();
                scaled = true;
            }
            const double rho = 1.0 / ys;
            const Eigen::VectorXd hy = inv_hessian * y;
            // H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T
            inv_hessian.noalias() -= rho * (s * hy.transpose() + hy * s.transpose());
            inv_hessian.noalias() += (rho * rho * y.dot(hy) + rho) * (s * s.transpose());
        }

        x = std::move(x_new);
        fx = f_new;
        gx = std::move(g_new);
    }

    result.solution = x;
    result.objective_value = fx;
    result.gradient_norm = gx.norm();
    result.converged = gx.norm() <= tol;
    result.iterations = max_iter;
    return result;
}

double check_gradient(const OptimizerProblem& problem, const Eigen::VectorXd& point,
                      double step) {
    const Eigen::VectorXd analytic = problem.gradient(point);
    double worst = 0.0;
    Eigen::VectorXd probe = point;
    for (Eigen::Index i = 0; i < point.size(); ++i) {
        probe(i) = point(i) + step;
        const double up = problem.objective(probe);
        probe(i) = point(i) - step;
        const double down = problem.objective(probe);
        probe(i) = point(i);
        const double numeric = (up - down) / (2.0 * step);
        const double scale = std::max({std::fabs(numeric), std::fabs(analytic(i)), 1.0});
        worst = std::max(worst, std::fabs(numeric - analytic(i)) / scale);
    }
    return worst;
}

} // namespace coda::numerics
