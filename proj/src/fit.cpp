#include "epifit/fit.hpp"

#include <cmath>
#include <limits>

#include <boost/math/distributions/normal.hpp>

#include "epifit/likelihood.hpp"

namespace epifit {
namespace {

// Negative log-likelihood with gradient, for the minimiser.
Objective negated(const Model& model) {
    return [&model](const Eigen::VectorXd& theta, Eigen::VectorXd& grad) {
        const double ll = model.log_likelihood(theta, grad);
        grad = -grad;
        return -ll;
    };
}

}  // namespace

Eigen::VectorXd FitResult::standard_errors() const {
    if (!covariance_available) {
        return Eigen::VectorXd::Constant(estimates.size(), std::numeric_limits<double>::quiet_NaN());
    }
    return covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
}

FitResult fit(const ModelSpec& spec, const Dataset& data, const std::optional<Eigen::VectorXd>& init,
              const FitOptions& options) {
    const Model model(spec, data);
    const Objective objective = negated(model);
    Eigen::VectorXd start = init ? *init : model.default_start();
    if (start.size() != static_cast<Eigen::Index>(model.num_params())) {
        throw Error("dimension_mismatch", "initial values do not match the model layout");
    }

    OptimizerResult opt = minimize_bfgs(objective, start, options.optimizer);
    if (!opt.converged && opt.criterion != "line_search") {
        throw FitError("optimizer stopped without convergence (" + opt.criterion + ") after " +
                           std::to_string(opt.iterations) + " iterations",
                       opt.trace);
    }

    const double tol = options.optimizer.gradient_tolerance;
    Eigen::MatrixXd info;
    bool have_info = false;
    // A difference step can leave the feasible region when a parameter has
    // drifted towards its boundary; the information is then unavailable.
    auto refresh_info = [&] {
        try {
            info = numerical_hessian(objective, opt.x);
            have_info = info.allFinite();
        } catch (const Error&) {
            have_info = false;
        }
        return have_info;
    };

    // Newton refinement on the observed information.
    for (int step = 0; step < options.max_newton_steps && opt.gradient.cwiseAbs().maxCoeff() >= tol; ++step) {
        if (!refresh_info()) break;
        Eigen::LLT<Eigen::MatrixXd> llt(info);
        if (llt.info() != Eigen::Success) break;
        const Eigen::VectorXd dir = -llt.solve(opt.gradient);
        bool improved = false;
        for (double a = 1.0; a > 1e-4; a *= 0.5) {
            Eigen::VectorXd g;
            double v;
            try {
                v = objective(opt.x + a * dir, g);
            } catch (const Error&) {
                continue;
            }
            if (std::isfinite(v) && v <= opt.value + 1e-12 * std::abs(opt.value)) {
                opt.x += a * dir;
                opt.value = v;
                opt.gradient = g;
                opt.trace.push_back(v);
                ++opt.iterations;
                improved = true;
                have_info = false;
                break;
            }
        }
        if (!improved) break;
    }

    const double grad_norm = opt.gradient.size() ? opt.gradient.cwiseAbs().maxCoeff() : 0.0;
    if (!opt.converged && grad_norm >= tol) {
        throw FitError("line search failed with gradient max-norm " + std::to_string(grad_norm) + " after " +
                           std::to_string(opt.iterations) + " iterations",
                       opt.trace);
    }

    FitResult res;
    res.spec = spec;
    res.layout = model.layout();
    res.estimates = opt.x;
    res.loglik = -opt.value;
    res.dim = model.dimension();
    res.aic = -2.0 * res.loglik + 2.0 * static_cast<double>(res.dim);
    res.iterations = opt.iterations;
    res.gradient_max_norm = grad_norm;
    res.converged = true;
    res.criterion = res.gradient_max_norm < tol ? "gradient" : opt.criterion;
    if (spec.has_epidemic() && (spec.epidemic.contacts == ContactStructure::power_fixed ||
                                spec.epidemic.contacts == ContactStructure::power_profiled)) {
        res.kappa = spec.epidemic.kappa;
    }
    res.data_fingerprint = data.counts.fingerprint();
    res.num_times = data.counts.num_times();

    if (options.compute_covariance) {
        if (!have_info) refresh_info();
        Eigen::LDLT<Eigen::MatrixXd> ldlt;
        if (have_info) ldlt.compute(info);
        if (have_info && ldlt.info() == Eigen::Success && ldlt.isPositive() && (ldlt.vectorD().array() > 0.0).all()) {
            Eigen::MatrixXd cov = ldlt.solve(Eigen::MatrixXd::Identity(info.rows(), info.cols()));
            cov = 0.5 * (cov + cov.transpose());
            if (cov.allFinite() && (cov.diagonal().array() >= 0.0).all()) {
                res.covariance = std::move(cov);
                res.covariance_available = true;
            }
        }
    }
    return res;
}

double normal_quantile(double level) {
    if (!(level > 0.0 && level < 1.0)) throw Error("bad_level", "confidence level must be in (0, 1)");
    return boost::math::quantile(boost::math::normal_distribution<>(), 0.5 + level / 2.0);
}

Interval wald_ci(const FitResult& fit, const std::string& name, double level) {
    const std::size_t i = fit.layout.index_of(name);
    if (!fit.covariance_available) throw Error("no_covariance", "covariance matrix is unavailable for this fit");
    const double z = normal_quantile(level);
    const auto k = static_cast<Eigen::Index>(i);
    const double est = fit.estimates(k);
    const double se = std::sqrt(std::max(0.0, fit.covariance(k, k)));
    Interval ci{est - z * se, est + z * se};
    if (fit.layout[i].transform == Transform::log) ci = {std::exp(ci.lower), std::exp(ci.upper)};
    return ci;
}

std::vector<ComparisonRow> compare_models(const std::vector<FitResult>& fits, std::size_t reference) {
    if (fits.empty()) return {};
    if (reference >= fits.size()) throw Error("bad_reference", "reference model index out of range");
    const auto& ref = fits[reference];
    std::vector<ComparisonRow> rows;
    for (const auto& f : fits) {
        if (f.data_fingerprint != ref.data_fingerprint || f.num_times != ref.num_times) {
            throw Error("data_mismatch", "model '" + f.label + "' was fitted to different data than '" + ref.label + "'");
        }
        rows.push_back({f.label, f.dim, f.loglik, f.aic, f.aic - ref.aic});
    }
    return rows;
}

}  // namespace epifit
