#pragma once

#include <vector>

#include "epifit/fit.hpp"

namespace epifit {

enum class ProfileSearch { grid, golden_section };

struct ProfileOptions {
    double lower = 0.05;
    double upper = 2.0;
    ProfileSearch search = ProfileSearch::golden_section;
    /// Points of the initial grid (both search modes start from it).
    int grid_points = 11;
    double level = 0.95;
    /// Width at which golden-section search and CI bisection stop.
    double tolerance = 1e-3;
    FitOptions fit;
};

struct ProfilePoint {
    double kappa = 0.0;
    double loglik = 0.0;
};

struct ProfileResult {
    /// Every evaluated kappa, sorted by kappa.
    std::vector<ProfilePoint> trace;
    double kappa_hat = 0.0;
    double loglik_max = 0.0;
    /// {kappa : 2 (l(kappa_hat) - l(kappa)) <= chi2_1 quantile}.
    Interval ci;
    /// The CI reached the search range without crossing the cutoff.
    bool lower_open = false;
    bool upper_open = false;
    double cutoff = 0.0;
    /// Wald-type interval from the profile curvature on the log-kappa scale.
    double log_kappa_se = 0.0;
    Interval wald;
    /// Full fit at kappa_hat (dim counts kappa).
    FitResult fit;
};

/// Profile log-likelihood of the contact power kappa. The spec's contact
/// structure must be power_profiled; each evaluation is a full fit with
/// C^kappa fixed, warm-started from the nearest evaluated kappa.
ProfileResult profile_kappa(const ModelSpec& spec, const Dataset& data, const ProfileOptions& options = {});

}  // namespace epifit
