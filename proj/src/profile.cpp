#include "epifit/profile.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <boost/math/distributions/chi_squared.hpp>

namespace epifit {
namespace {

class Profiler {
public:
    Profiler(const ModelSpec& spec, const Dataset& data, const ProfileOptions& options)
        : spec_(spec), data_(data), options_(options) {
        inner_ = options.fit;
        inner_.compute_covariance = false;
    }

    const FitResult& at(double kappa) {
        if (const auto it = cache_.find(kappa); it != cache_.end()) return it->second;
        ModelSpec s = spec_;
        s.epidemic.kappa = kappa;
        std::optional<Eigen::VectorXd> warm;
        if (!cache_.empty()) {
            auto nearest = cache_.lower_bound(kappa);
            if (nearest == cache_.end() ||
                (nearest != cache_.begin() && kappa - std::prev(nearest)->first < nearest->first - kappa)) {
                nearest = std::prev(nearest);
            }
            warm = nearest->second.estimates;
        }
        FitResult result;
        try {
            result = fit(s, data_, warm, inner_);
        } catch (const Error&) {
            if (!warm) throw;
            result = fit(s, data_, std::nullopt, inner_);
        }
        return cache_.emplace(kappa, std::move(result)).first->second;
    }

    double loglik(double kappa) { return at(kappa).loglik; }

    const std::map<double, FitResult>& cache() const { return cache_; }

private:
    ModelSpec spec_;
    const Dataset& data_;
    ProfileOptions options_;
    FitOptions inner_;
    std::map<double, FitResult> cache_;
};

}  // namespace

ProfileResult profile_kappa(const ModelSpec& spec, const Dataset& data, const ProfileOptions& options) {
    if (!spec.kappa_profiled()) {
        throw Error("not_profiled", "profile_kappa needs the power_profiled contact structure");
    }
    if (!(options.lower >= 0.0) || !(options.upper > options.lower)) {
        throw Error("bad_range", "kappa range must satisfy 0 <= lower < upper");
    }
    if (options.grid_points < 3) throw Error("bad_range", "profile grid needs at least 3 points");

    Profiler profiler(spec, data, options);
    const int n = options.grid_points;
    std::vector<double> grid(n);
    for (int i = 0; i < n; ++i) {
        grid[i] = options.lower + (options.upper - options.lower) * static_cast<double>(i) / (n - 1);
    }
    // Evaluate from the middle outwards so warm starts follow a path.
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [n](int a, int b) { return std::abs(2 * a - (n - 1)) < std::abs(2 * b - (n - 1)); });
    for (int i : order) profiler.loglik(grid[i]);

    int best = 0;
    for (int i = 1; i < n; ++i) {
        if (profiler.loglik(grid[i]) > profiler.loglik(grid[best])) best = i;
    }
    if (best == 0 || best == n - 1) {
        throw Error("profile_boundary", "profile maximum at kappa = " + std::to_string(grid[best]) +
                                            " lies on the search boundary; widen the kappa range");
    }

    double kappa_hat = grid[best];
    if (options.search == ProfileSearch::golden_section) {
        const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
        double a = grid[best - 1], b = grid[best + 1];
        double c = b - phi * (b - a), d = a + phi * (b - a);
        double fc = profiler.loglik(c), fd = profiler.loglik(d);
        while (b - a > 0.1 * options.tolerance) {
            if (fc > fd) {
                b = d;
                d = c;
                fd = fc;
                c = b - phi * (b - a);
                fc = profiler.loglik(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + phi * (b - a);
                fd = profiler.loglik(d);
            }
        }
        for (const auto& [k, f] : profiler.cache()) {
            if (f.loglik > profiler.loglik(kappa_hat)) kappa_hat = k;
        }
    }

    ProfileResult res;
    res.kappa_hat = kappa_hat;
    res.loglik_max = profiler.loglik(kappa_hat);
    res.cutoff = boost::math::quantile(boost::math::chi_squared_distribution<>(1.0), options.level);

    auto deviance = [&](double k) { return 2.0 * (res.loglik_max - profiler.loglik(k)); };
    auto bisect = [&](double inside, double outside) {
        while (std::abs(outside - inside) > options.tolerance) {
            const double mid = 0.5 * (inside + outside);
            (deviance(mid) > res.cutoff ? outside : inside) = mid;
        }
        return 0.5 * (inside + outside);
    };
    auto endpoint = [&](bool upper, bool& open) {
        // Nearest evaluated kappa beyond the cutoff on the requested side.
        std::vector<double> side;
        for (const auto& [k, f] : profiler.cache()) {
            if (upper ? k > kappa_hat : k < kappa_hat) side.push_back(k);
        }
        if (!upper) std::reverse(side.begin(), side.end());
        double inside = kappa_hat;
        for (double k : side) {
            if ((upper && k > options.upper) || (!upper && k < options.lower)) break;
            if (deviance(k) > res.cutoff) return bisect(inside, k);
            inside = k;
        }
        open = true;
        return upper ? options.upper : options.lower;
    };
    res.ci.lower = endpoint(false, res.lower_open);
    res.ci.upper = endpoint(true, res.upper_open);

    // Curvature of the profile on the log-kappa scale.
    const double h = 0.05;
    const double lp = profiler.loglik(kappa_hat * std::exp(h));
    const double lm = profiler.loglik(kappa_hat * std::exp(-h));
    const double curvature = (lp - 2.0 * res.loglik_max + lm) / (h * h);
    const double z = normal_quantile(options.level);
    if (curvature < 0.0) {
        res.log_kappa_se = std::sqrt(-1.0 / curvature);
        res.wald = {kappa_hat * std::exp(-z * res.log_kappa_se), kappa_hat * std::exp(z * res.log_kappa_se)};
    } else {
        res.log_kappa_se = std::numeric_limits<double>::quiet_NaN();
        res.wald = {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    }

    for (const auto& [k, f] : profiler.cache()) res.trace.push_back({k, f.loglik});

    ModelSpec at_hat = spec;
    at_hat.epidemic.kappa = kappa_hat;
    res.fit = fit(at_hat, data, profiler.at(kappa_hat).estimates, options.fit);
    return res;
}

}  // namespace epifit
