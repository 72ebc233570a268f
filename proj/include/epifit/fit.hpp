#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "epifit/error.hpp"
#include "epifit/model.hpp"
#include "epifit/optimizer.hpp"

namespace epifit {

struct FitOptions {
    OptimizerOptions optimizer;
    /// Newton steps on the numerical observed information when the
    /// quasi-Newton loop stops on relative change with a large gradient.
    int max_newton_steps = 20;
    bool compute_covariance = true;
};

struct FitResult {
    std::string label;
    ModelSpec spec;
    ParameterLayout layout;
    Eigen::VectorXd estimates;
    /// Inverse observed information on the transformed scale.
    Eigen::MatrixXd covariance;
    bool covariance_available = false;
    double loglik = 0.0;
    double aic = 0.0;
    /// Number of free parameters (profiled kappa counts as one).
    std::size_t dim = 0;
    int iterations = 0;
    double gradient_max_norm = 0.0;
    bool converged = false;
    std::string criterion;
    /// Contact power used for power_fixed / power_profiled structures.
    std::optional<double> kappa;
    std::string data_fingerprint;
    std::size_t num_times = 0;

    Eigen::VectorXd standard_errors() const;
};

/// Fit failure that keeps the optimizer trace.
class FitError : public Error {
public:
    FitError(const std::string& message, std::vector<double> trace)
        : Error("no_convergence", message), trace_(std::move(trace)) {}
    const std::vector<double>& trace() const { return trace_; }

private:
    std::vector<double> trace_;
};

/// Maximum-likelihood fit. Starts from `init` when given, otherwise from
/// Model::default_start().
FitResult fit(const ModelSpec& spec, const Dataset& data, const std::optional<Eigen::VectorXd>& init = std::nullopt,
              const FitOptions& options = {});

struct Interval {
    double lower = 0.0;
    double upper = 0.0;
};

/// Wald interval on the transformed scale, back-transformed for log-scale
/// parameters.
Interval wald_ci(const FitResult& fit, const std::string& name, double level = 0.95);

struct ComparisonRow {
    std::string label;
    std::size_t dim = 0;
    double loglik = 0.0;
    double aic = 0.0;
    double delta_aic = 0.0;
};

/// AIC table relative to fits[reference]. All fits must share the data
/// fingerprint and time range.
std::vector<ComparisonRow> compare_models(const std::vector<FitResult>& fits, std::size_t reference = 0);

/// Two-sided standard normal quantile for the given coverage.
double normal_quantile(double level);

}  // namespace epifit
