#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include <boost/math/distributions/negative_binomial.hpp>

#include "epifit/error.hpp"
#include "epifit/likelihood.hpp"
#include "support.hpp"

using namespace epifit;

namespace {

ModelSpec poisson_endemic() {
    ModelSpec s;
    s.epidemic.variant = EpidemicVariant::none;
    s.overdispersion = Overdispersion::poisson;
    return s;
}

ModelSpec epidemic(ContactStructure c, double kappa = 1.0) {
    ModelSpec s;
    s.epidemic.contacts = c;
    s.epidemic.kappa = kappa;
    return s;
}

// Gradient contract: |analytic - numeric| <= 1e-6 max(1, |numeric|).
void check_score(const ModelSpec& spec, const Dataset& d, std::uint64_t seed, int points) {
    const Model m(spec, d);
    std::mt19937_64 rng(seed);
    for (int k = 0; k < points; ++k) {
        const Eigen::VectorXd theta = support::random_theta(m, rng);
        Eigen::VectorXd grad;
        m.log_likelihood(theta, grad);
        const Eigen::VectorXd fd = support::oracle_score(spec, theta, d);
        for (Eigen::Index i = 0; i < theta.size(); ++i) {
            INFO(m.layout()[static_cast<std::size_t>(i)].name);
            CHECK(std::abs(grad(i) - fd(i)) <= 1e-6 * std::max(1.0, std::abs(fd(i))));
        }
    }
}

}  // namespace

TEST_CASE("Poisson log pmf closed form") {
    CHECK(poisson_log_pmf(3, 2.0) == doctest::Approx(3.0 * std::log(2.0) - 2.0 - std::log(6.0)).epsilon(1e-14));
    CHECK(poisson_log_pmf(0, 0.5) == doctest::Approx(-0.5).epsilon(1e-15));
}

TEST_CASE("negative binomial log pmf agrees with independent implementations") {
    CHECK(negbin_log_pmf(3, 2.0, 0.5) == doctest::Approx(support::oracle_negbin(3, 2.0, 0.5)).epsilon(1e-13));
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> mu(0.01, 200.0), lpsi(-6.0, 2.0);
    std::uniform_int_distribution<int> y(0, 400);
    for (int i = 0; i < 500; ++i) {
        const double m = mu(rng), psi = std::exp(lpsi(rng));
        const int k = y(rng);
        const double size = 1.0 / psi;
        const double pdf =
            boost::math::pdf(boost::math::negative_binomial(size, size / (size + m)), static_cast<double>(k));
        // Boost's pdf underflows in the far tail; the lgamma oracle covers it.
        if (pdf > 1e-280) CHECK(negbin_log_pmf(k, m, psi) == doctest::Approx(std::log(pdf)).epsilon(1e-10));
        CHECK(negbin_log_pmf(k, m, psi) == doctest::Approx(support::oracle_negbin(k, m, psi)).epsilon(1e-9));
    }
}

TEST_CASE("rising factorial and digamma difference stay accurate for huge size") {
    for (double theta : {1e-3, 0.7, 50.0, 1e6, 1e10, 1e14}) {
        for (std::int64_t y : {0, 1, 5, 63, 64, 65, 300}) {
            double direct = 0.0, dg = 0.0;
            for (std::int64_t j = 0; j < y; ++j) {
                direct += std::log(theta + static_cast<double>(j));
                dg += 1.0 / (theta + static_cast<double>(j));
            }
            CHECK(log_rising_factorial(theta, y) == doctest::Approx(direct).epsilon(1e-12));
            CHECK(digamma_difference(theta, y) == doctest::Approx(dg).epsilon(1e-12));
        }
    }
}

TEST_CASE("pmf derivatives match finite differences") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> mu(0.1, 50.0), lpsi(-4.0, 1.0);
    std::uniform_int_distribution<int> y(0, 80);
    for (int i = 0; i < 200; ++i) {
        const double m = mu(rng), lp = lpsi(rng);
        const int k = y(rng);
        const auto d = negbin_log_pmf_derivatives(k, m, std::exp(lp));
        const double h = 1e-6;
        const double dmu = (negbin_log_pmf(k, m + h, std::exp(lp)) - negbin_log_pmf(k, m - h, std::exp(lp))) / (2 * h);
        const double dlp = (negbin_log_pmf(k, m, std::exp(lp + h)) - negbin_log_pmf(k, m, std::exp(lp - h))) / (2 * h);
        CHECK(d.value == doctest::Approx(negbin_log_pmf(k, m, std::exp(lp))).epsilon(1e-14));
        CHECK(std::abs(d.d_mu - dmu) <= 1e-6 * std::max(1.0, std::abs(dmu)));
        CHECK(std::abs(d.d_log_psi - dlp) <= 1e-6 * std::max(1.0, std::abs(dlp)));
    }
}

TEST_CASE("single-cell Poisson likelihood is unimodal in mu") {
    for (int y : {0, 1, 4, 30}) {
        const double peak = std::max(y, 1) * 1.0;
        double prev = poisson_log_pmf(y, peak);
        for (double m = peak * 1.05; m < peak * 20; m *= 1.05) {
            const double v = poisson_log_pmf(y, m);
            CHECK(v < prev);
            prev = v;
        }
        if (y > 0) {
            prev = poisson_log_pmf(y, peak);
            for (double m = peak / 1.05; m > peak / 20; m /= 1.05) {
                const double v = poisson_log_pmf(y, m);
                CHECK(v < prev);
                prev = v;
            }
        }
    }
}

TEST_CASE("model log-likelihood is the sum of cell log pmfs") {
    const auto d = support::random_dataset(2, 3, 15, 3);
    std::mt19937_64 rng(4);
    for (auto od : {Overdispersion::poisson, Overdispersion::shared, Overdispersion::by_group, Overdispersion::by_region}) {
        ModelSpec spec = epidemic(ContactStructure::matrix);
        spec.overdispersion = od;
        const Model m(spec, d);
        const Eigen::VectorXd theta = support::random_theta(m, rng);
        const auto mu = support::oracle_means(spec, theta, d);
        const auto psi = m.overdispersion(theta);
        double ref = 0.0;
        for (std::size_t t = 1; t < 15; ++t) {
            for (std::size_t c = 0; c < 6; ++c) {
                const auto y = d.counts.slice(t)[c];
                ref += od == Overdispersion::poisson ? support::oracle_poisson(y, mu(t - 1, c))
                                                     : support::oracle_negbin(y, mu(t - 1, c), psi[c]);
            }
        }
        CHECK(log_likelihood(spec, theta, d) == doctest::Approx(ref).epsilon(1e-12));
    }
}

TEST_CASE("overdispersion 1e-10 approaches the Poisson likelihood") {
    const auto d = support::random_dataset(2, 2, 20, 5);
    ModelSpec nb = poisson_endemic();
    nb.overdispersion = Overdispersion::shared;
    const Model mp(poisson_endemic(), d), mn(nb, d);
    std::mt19937_64 rng(6);
    const Eigen::VectorXd tp = support::random_theta(mp, rng);
    std::vector<std::pair<std::string, double>> named = mp.layout().unpack(tp);
    named.emplace_back("psi", 1e-10);
    const Eigen::VectorXd tn = mn.layout().pack(named);
    CHECK(std::abs(mn.log_likelihood(tn) - mp.log_likelihood(tp)) < 1e-5);
}

TEST_CASE("endemic intercept score of a Poisson model equals the sum of residuals") {
    const auto d = support::random_dataset(2, 3, 25, 7);
    const Model m(poisson_endemic(), d);
    std::mt19937_64 rng(8);
    const Eigen::VectorXd theta = support::random_theta(m, rng);
    const Eigen::VectorXd g = score(poisson_endemic(), theta, d);
    const auto mu = support::oracle_means(poisson_endemic(), theta, d);
    double resid = 0.0;
    for (std::size_t t = 1; t < 25; ++t)
        for (std::size_t c = 0; c < 6; ++c) resid += static_cast<double>(d.counts.slice(t)[c]) - mu(t - 1, c);
    CHECK(g(m.layout().index_of("end.intercept")) == doctest::Approx(resid).epsilon(1e-11));
}

TEST_CASE("score matches finite differences: endemic only") {
    ModelSpec s;
    s.epidemic.variant = EpidemicVariant::none;
    check_score(s, support::random_dataset(3, 4, 40, 9), 10, 10);
    check_score(poisson_endemic(), support::random_dataset(2, 3, 30, 10), 11, 3);
}

TEST_CASE("score matches finite differences: epidemic structures") {
    const auto d = support::random_dataset(3, 4, 40, 11);
    check_score(epidemic(ContactStructure::identity), d, 12, 10);
    check_score(epidemic(ContactStructure::power_fixed, 0.6), d, 13, 10);
    check_score(epidemic(ContactStructure::ones), d, 14, 3);
    ModelSpec g = epidemic(ContactStructure::matrix);
    g.epidemic.rho_by_group = true;
    g.overdispersion = Overdispersion::by_region;
    g.endemic.seasonality = Seasonality::shared;
    check_score(g, d, 15, 3);
    ModelSpec f = epidemic(ContactStructure::matrix);
    f.epidemic.weights = SpatialWeightVariant::free_order_weights;
    f.epidemic.population_power = false;
    check_score(f, d, 16, 3);
    ModelSpec ns = epidemic(ContactStructure::matrix);
    ns.epidemic.weights = SpatialWeightVariant::power_law_no_self;
    ns.endemic.offset = false;
    check_score(ns, d, 17, 3);
}

TEST_CASE("score matches finite differences: three-component variant") {
    ModelSpec s;
    s.epidemic.variant = EpidemicVariant::three_component;
    s.epidemic.weights = SpatialWeightVariant::power_law_no_self;
    s.epidemic.ar_group_effects = true;
    s.epidemic.ar_region_effects = true;
    check_score(s, support::random_dataset(3, 4, 40, 18), 19, 10);
}

TEST_CASE("likelihood wrappers reject mismatched parameter vectors") {
    const auto d = support::random_dataset(2, 2, 5, 20);
    CHECK_THROWS_AS(log_likelihood(poisson_endemic(), Eigen::VectorXd::Zero(1), d), Error);
}
