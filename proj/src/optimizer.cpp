#include "epifit/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "epifit/error.hpp"

namespace epifit {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kArmijo = 1e-4;
constexpr double kCurvature = 0.9;

struct Probe {
    double alpha = 0.0;
    double value = kInf;
    double slope = 0.0;
    Eigen::VectorXd gradient;
};

class LineSearch {
public:
    LineSearch(const Objective& f, const Eigen::VectorXd& x, const Eigen::VectorXd& dir, double f0, double slope0,
               int& evaluations)
        : f_(f), x_(x), dir_(dir), f0_(f0), slope0_(slope0), evaluations_(evaluations) {}

    // Returns a probe satisfying the strong Wolfe conditions, or the best
    // sufficient-decrease point found; alpha == 0 signals failure.
    Probe run(double alpha) {
        Probe prev{0.0, f0_, slope0_, {}};
        for (int i = 0; i < 40; ++i) {
            Probe cur = probe(alpha);
            if (!std::isfinite(cur.value) || cur.value > f0_ + kArmijo * alpha * slope0_ ||
                (i > 0 && cur.value >= prev.value)) {
                return zoom(prev, cur);
            }
            if (std::abs(cur.slope) <= -kCurvature * slope0_) return cur;
            if (cur.slope >= 0.0) return zoom(cur, prev);
            prev = std::move(cur);
            alpha *= 2.0;
        }
        return prev;
    }

private:
    Probe probe(double alpha) {
        Probe p;
        p.alpha = alpha;
        ++evaluations_;
        try {
            p.value = f_(x_ + alpha * dir_, p.gradient);
            if (!std::isfinite(p.value) || !p.gradient.allFinite()) {
                p.value = kInf;
            } else {
                p.slope = p.gradient.dot(dir_);
            }
        } catch (const Error&) {
            p.value = kInf;
        }
        return p;
    }

    Probe zoom(Probe lo, Probe hi) {
        Probe best = lo;
        for (int i = 0; i < 40; ++i) {
            const double a_lo = lo.alpha, a_hi = hi.alpha;
            double alpha = 0.5 * (a_lo + a_hi);
            if (std::isfinite(hi.value) && std::isfinite(lo.value)) {
                // Quadratic interpolation from lo's value and slope, and hi's value.
                const double d = a_hi - a_lo;
                const double denom = 2.0 * (hi.value - lo.value - lo.slope * d);
                if (denom > 0.0) alpha = a_lo - lo.slope * d * d / denom;
            }
            const double lower = std::min(a_lo, a_hi), upper = std::max(a_lo, a_hi), width = upper - lower;
            alpha = std::clamp(alpha, lower + 0.1 * width, upper - 0.1 * width);
            if (width < 1e-16 * std::max(1.0, upper)) break;

            Probe cur = probe(alpha);
            if (!std::isfinite(cur.value) || cur.value > f0_ + kArmijo * alpha * slope0_ || cur.value >= lo.value) {
                hi = std::move(cur);
            } else {
                if (std::abs(cur.slope) <= -kCurvature * slope0_) return cur;
                if (cur.slope * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
                lo = std::move(cur);
                best = lo;
            }
        }
        return best;
    }

    const Objective& f_;
    const Eigen::VectorXd& x_;
    const Eigen::VectorXd& dir_;
    double f0_, slope0_;
    int& evaluations_;
};

}  // namespace

OptimizerResult minimize_bfgs(const Objective& objective, const Eigen::VectorXd& start,
                              const OptimizerOptions& options) {
    const Eigen::Index n = start.size();
    OptimizerResult res;
    res.x = start;
    res.evaluations = 1;
    res.value = objective(res.x, res.gradient);
    if (!std::isfinite(res.value) || !res.gradient.allFinite()) {
        throw Error("bad_start", "objective is not finite at the starting values");
    }

    Eigen::MatrixXd h_inv = Eigen::MatrixXd::Identity(n, n);
    bool scaled = false;
    int restarts = 0;

    for (int it = 0; it < options.max_iterations; ++it) {
        res.iterations = it;
        if (res.gradient.cwiseAbs().maxCoeff() < options.gradient_tolerance) {
            res.converged = true;
            res.criterion = "gradient";
            return res;
        }
        Eigen::VectorXd dir = -h_inv * res.gradient;
        double slope = res.gradient.dot(dir);
        if (!(slope < 0.0)) {
            h_inv.setIdentity();
            scaled = false;
            dir = -res.gradient;
            slope = res.gradient.dot(dir);
        }
        const double alpha0 = scaled ? 1.0 : std::min(1.0, 1.0 / dir.cwiseAbs().maxCoeff());

        LineSearch search(objective, res.x, dir, res.value, slope, res.evaluations);
        Probe step = search.run(alpha0);
        if (step.alpha == 0.0 || !std::isfinite(step.value)) {
            if (restarts++ < 2 && scaled) {
                h_inv.setIdentity();
                scaled = false;
                continue;
            }
            res.criterion = "line_search";
            return res;
        }
        const Eigen::VectorXd s = step.alpha * dir;
        const Eigen::VectorXd y = step.gradient - res.gradient;
        const double f_old = res.value;
        res.x += s;
        res.value = step.value;
        res.gradient = std::move(step.gradient);
        res.trace.push_back(res.value);

        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            if (!scaled) {
                h_inv = Eigen::MatrixXd::Identity(n, n) * (sy / y.squaredNorm());
                scaled = true;
            }
            const double rho = 1.0 / sy;
            const Eigen::VectorXd hy = h_inv * y;
            h_inv += (rho * rho * y.dot(hy) + rho) * (s * s.transpose()) - rho * (hy * s.transpose() + s * hy.transpose());
        }

        if (res.gradient.cwiseAbs().maxCoeff() < options.gradient_tolerance) {
            res.iterations = it + 1;
            res.converged = true;
            res.criterion = "gradient";
            return res;
        }
        if (std::abs(f_old - res.value) / std::max(1.0, std::abs(res.value)) < options.relative_tolerance) {
            res.iterations = it + 1;
            res.converged = true;
            res.criterion = "relative_change";
            return res;
        }
    }
    res.iterations = options.max_iterations;
    res.criterion = "max_iterations";
    return res;
}

Eigen::MatrixXd numerical_hessian(const Objective& objective, const Eigen::VectorXd& x, double relative_step) {
    const Eigen::Index n = x.size();
    Eigen::MatrixXd h(n, n);
    Eigen::VectorXd gp, gm;
    for (Eigen::Index j = 0; j < n; ++j) {
        const double step = relative_step * std::max(1.0, std::abs(x(j)));
        Eigen::VectorXd xp = x, xm = x;
        xp(j) += step;
        xm(j) -= step;
        objective(xp, gp);
        objective(xm, gm);
        h.col(j) = (gp - gm) / (2.0 * step);
    }
    return 0.5 * (h + h.transpose());
}

}  // namespace epifit
