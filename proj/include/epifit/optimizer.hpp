#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace epifit {

/// Objective for minimisation: returns f(x) and writes the gradient.
/// Throwing epifit::Error marks x as infeasible (treated as +inf).
using Objective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

struct OptimizerOptions {
    int max_iterations = 2000;
    /// Stop when max |gradient| falls below this.
    double gradient_tolerance = 1e-6;
    /// Stop when |f_new - f_old| / max(1, |f_new|) falls below this.
    double relative_tolerance = 1e-10;
};

struct OptimizerResult {
    Eigen::VectorXd x;
    double value = 0.0;
    Eigen::VectorXd gradient;
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
    /// "gradient", "relative_change", "max_iterations" or "line_search".
    std::string criterion;
    /// Objective value after each iteration.
    std::vector<double> trace;
};

/// BFGS on the inverse Hessian with a strong-Wolfe line search.
OptimizerResult minimize_bfgs(const Objective& objective, const Eigen::VectorXd& start,
                              const OptimizerOptions& options = {});

/// Central-difference Jacobian of a gradient function, symmetrised.
Eigen::MatrixXd numerical_hessian(const Objective& objective, const Eigen::VectorXd& x, double relative_step = 1e-5);

}  // namespace epifit
