#include "epifit/likelihood.hpp"

#include <cmath>

#include <boost/math/special_functions/digamma.hpp>

namespace epifit {
namespace {

// Power sums sum_{k=0}^{y-1} k^j for j = 1, 2, 3.
struct PowerSums {
    double s1, s2, s3;
    explicit PowerSums(double y)
        : s1(y * (y - 1.0) / 2.0), s2((y - 1.0) * y * (2.0 * y - 1.0) / 6.0), s3(s1 * s1) {}
};

constexpr std::int64_t kDirectSumLimit = 64;
constexpr double kSeriesRatio = 1e4;

}  // namespace

double log_rising_factorial(double theta, std::int64_t y) {
    if (y <= 0) return 0.0;
    const double yd = static_cast<double>(y);
    if (y <= kDirectSumLimit) {
        double s = 0.0;
        for (std::int64_t k = 0; k < y; ++k) s += std::log(theta + static_cast<double>(k));
        return s;
    }
    if (theta > kSeriesRatio * yd) {
        // sum_k log(theta + k) = y log(theta) + sum_k log1p(k / theta)
        const PowerSums p(yd);
        return yd * std::log(theta) + p.s1 / theta - p.s2 / (2.0 * theta * theta) +
               p.s3 / (3.0 * theta * theta * theta);
    }
    return std::lgamma(theta + yd) - std::lgamma(theta);
}

double digamma_difference(double theta, std::int64_t y) {
    if (y <= 0) return 0.0;
    const double yd = static_cast<double>(y);
    if (y <= kDirectSumLimit) {
        double s = 0.0;
        for (std::int64_t k = 0; k < y; ++k) s += 1.0 / (theta + static_cast<double>(k));
        return s;
    }
    if (theta > kSeriesRatio * yd) {
        const PowerSums p(yd);
        return (yd - p.s1 / theta + p.s2 / (theta * theta) - p.s3 / (theta * theta * theta)) / theta;
    }
    return boost::math::digamma(theta + yd) - boost::math::digamma(theta);
}

double poisson_log_pmf(std::int64_t y, double mu) {
    const double yd = static_cast<double>(y);
    return (y == 0 ? 0.0 : yd * std::log(mu)) - mu - std::lgamma(yd + 1.0);
}

double negbin_log_pmf(std::int64_t y, double mu, double psi) {
    return negbin_log_pmf_derivatives(y, mu, psi).value;
}

LogPmfDerivatives negbin_log_pmf_derivatives(std::int64_t y, double mu, double psi) {
    const double size = 1.0 / psi;
    const double yd = static_cast<double>(y);
    const double l1p = std::log1p(mu / size);  // log((size + mu) / size)
    LogPmfDerivatives d;
    // y log(mu / (size + mu)) = y (log mu - log size - log1p(mu / size))
    const double y_term = y == 0 ? 0.0 : yd * (std::log(mu) - std::log(size) - l1p);
    d.value = log_rising_factorial(size, y) - std::lgamma(yd + 1.0) - size * l1p + y_term;
    d.d_mu = yd / mu - (yd + size) / (size + mu);
    const double d_size = digamma_difference(size, y) - l1p + (mu - yd) / (size + mu);
    d.d_log_psi = -size * d_size;
    return d;
}

double log_likelihood(const ModelSpec& spec, const Eigen::VectorXd& theta, const Dataset& data) {
    return Model(spec, data).log_likelihood(theta);
}

Eigen::VectorXd score(const ModelSpec& spec, const Eigen::VectorXd& theta, const Dataset& data) {
    Eigen::VectorXd g;
    Model(spec, data).log_likelihood(theta, g);
    return g;
}

}  // namespace epifit
