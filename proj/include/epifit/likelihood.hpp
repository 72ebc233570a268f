#pragma once

#include <cstdint>

#include <Eigen/Dense>

#include "epifit/model.hpp"

namespace epifit {

/// log Gamma(theta + y) - log Gamma(theta), accurate also when theta >> y.
double log_rising_factorial(double theta, std::int64_t y);

/// digamma(theta + y) - digamma(theta).
double digamma_difference(double theta, std::int64_t y);

double poisson_log_pmf(std::int64_t y, double mu);

/// Negative binomial with mean mu and variance mu (1 + psi mu), i.e. size 1/psi.
double negbin_log_pmf(std::int64_t y, double mu, double psi);

struct LogPmfDerivatives {
    double value = 0.0;
    double d_mu = 0.0;
    double d_log_psi = 0.0;
};

LogPmfDerivatives negbin_log_pmf_derivatives(std::int64_t y, double mu, double psi);

/// Conditional log-likelihood of the model over t >= 1.
double log_likelihood(const ModelSpec& spec, const Eigen::VectorXd& theta, const Dataset& data);

/// Exact gradient of log_likelihood with respect to the flat parameter vector.
Eigen::VectorXd score(const ModelSpec& spec, const Eigen::VectorXd& theta, const Dataset& data);

}  // namespace epifit
