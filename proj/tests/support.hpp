#pragma once

#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "epifit/contact_matrix.hpp"
#include "epifit/model.hpp"
#include "epifit/simulation.hpp"
#include "epifit/spatial_weights.hpp"

namespace support {

using epifit::Dataset;
using epifit::ModelSpec;

inline std::vector<std::string> labels(const std::string& prefix, std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i + 1));
    return out;
}

inline epifit::RegionGraph path_graph(std::size_t R) {
    epifit::RegionGraph g;
    g.regions = labels("r", R);
    for (std::size_t r = 1; r < R; ++r) g.edges.push_back({r - 1, r});
    return g;
}

/// Random row-stochastic-free positive matrix with a dominant diagonal.
inline Eigen::MatrixXd random_contacts(std::size_t G, std::mt19937_64& rng, double diagonal = 2.0) {
    std::uniform_real_distribution<double> u(0.1, 1.0);
    Eigen::MatrixXd m(G, G);
    for (std::size_t i = 0; i < G; ++i) {
        for (std::size_t j = 0; j < G; ++j) m(i, j) = u(rng) + (i == j ? diagonal : 0.0);
    }
    return m;
}

/// Lattice with random counts, constant random populations, a path graph
/// over the regions and a random contact matrix.
inline Dataset random_dataset(std::size_t G, std::size_t R, std::size_t T, std::uint64_t seed,
                              double mean_count = 5.0) {
    std::mt19937_64 rng(seed);
    Dataset d;
    d.counts = epifit::StratifiedCounts(epifit::consecutive_weeks({2011, 27}, T), labels("g", G), labels("r", R));
    std::uniform_real_distribution<double> pop(1e4, 1e5);
    std::vector<double> e(G * R);
    for (auto& x : e) x = pop(rng);
    d.counts.set_constant_offsets(e);
    std::poisson_distribution<std::int64_t> pois(mean_count);
    for (std::size_t t = 0; t < T; ++t) {
        for (auto& y : d.counts.slice(t)) y = pois(rng);
    }
    d.orders = epifit::adjacency_orders(path_graph(R));
    epifit::ContactMatrix c;
    c.rates = random_contacts(G, rng);
    c.labels = d.counts.groups();
    d.contacts = c;
    return d;
}

inline Eigen::VectorXd random_theta(const epifit::Model& m, std::mt19937_64& rng, double spread = 0.3) {
    std::normal_distribution<double> n(0.0, spread);
    Eigen::VectorXd theta = m.default_start();
    for (Eigen::Index i = 0; i < theta.size(); ++i) theta(i) += n(rng);
    return theta;
}

/// Parameter vector from natural-scale values; unnamed entries take 0 on
/// the identity scale and 1 on the log scale.
inline Eigen::VectorXd theta_from(const epifit::Model& m, const std::map<std::string, double>& values) {
    std::vector<std::pair<std::string, double>> named;
    for (const auto& info : m.layout().entries()) {
        const auto it = values.find(info.name);
        named.emplace_back(info.name, it != values.end() ? it->second
                                                         : (info.transform == epifit::Transform::log ? 1.0 : 0.0));
    }
    return m.layout().pack(named);
}

/// Copy of `base` whose counts are one trajectory simulated from (spec,
/// theta) over the same weeks, started from a constant initial slice.
inline Dataset simulate_dataset(const ModelSpec& spec, const Eigen::VectorXd& theta, const Dataset& base,
                                std::uint64_t seed, std::int64_t initial = 5) {
    epifit::SimulationConfig cfg;
    cfg.spec = spec;
    cfg.params = theta;
    cfg.base = &base;
    cfg.initial = std::vector<std::int64_t>(base.counts.num_cells(), initial);
    cfg.start_week = base.counts.weeks().front();
    cfg.horizon = base.counts.num_times() - 1;
    cfg.seed = seed;
    cfg.threads = 1;
    Dataset d = base;
    d.counts = epifit::simulate(cfg).front();
    return d;
}

/// Three age groups on a four-region path with a contact matrix whose
/// power 0.6 needs no truncation, populations between 1e4 and 1e5.
inline Dataset kappa_base(std::size_t T, std::uint64_t seed) {
    Dataset d = random_dataset(3, 4, T, seed);
    d.contacts->rates << 0.6, 0.3, 0.1, 0.2, 0.6, 0.2, 0.1, 0.3, 0.6;
    return d;
}

/// Merged endemic-epidemic model with C^kappa, shared seasonality and
/// overdispersion.
inline ModelSpec kappa_spec(epifit::ContactStructure contacts, double kappa = 0.6) {
    ModelSpec s;
    s.endemic.seasonality = epifit::Seasonality::shared;
    s.overdispersion = epifit::Overdispersion::shared;
    s.epidemic.contacts = contacts;
    s.epidemic.kappa = kappa;
    return s;
}

/// True parameters of the recovery scenario (kappa 0.6, rho 2, tau 0.9):
/// the epidemic intercept is set so that the spectral radius is `radius`.
inline Eigen::VectorXd kappa_truth(const Dataset& base, double radius = 0.7) {
    const ModelSpec spec = kappa_spec(epifit::ContactStructure::power_fixed);
    const epifit::Model m(spec, base);
    std::map<std::string, double> v{{"end.intercept", std::log(2.0 / 5e4)},
                                    {"end.group.g2", 0.3},
                                    {"end.region.r3", -0.3},
                                    {"end.christmas", 0.5},
                                    {"end.sin", 0.4},
                                    {"end.cos", -0.3},
                                    {"epi.intercept", 0.0},
                                    {"epi.group.g3", 0.4},
                                    {"epi.region.r2", -0.3},
                                    {"epi.tau", 0.9},
                                    {"rho", 2.0},
                                    {"psi", 0.1}};
    Eigen::VectorXd theta = theta_from(m, v);
    const double r0 = epifit::epidemic_proportion(m, theta);
    v["epi.intercept"] = std::log(radius / r0);
    return theta_from(m, v);
}

/// Contact weights entering the model, computed without the library's
/// matrix_power: C^kappa by Eigen's Schur-Pade matrix power.
inline Eigen::MatrixXd oracle_contacts(const ModelSpec& spec, const Dataset& d) {
    const auto G = static_cast<Eigen::Index>(d.counts.num_groups());
    switch (spec.epidemic.contacts) {
        case epifit::ContactStructure::identity: return Eigen::MatrixXd::Identity(G, G);
        case epifit::ContactStructure::ones: return Eigen::MatrixXd::Ones(G, G);
        default: break;
    }
    Eigen::MatrixXd c = d.contacts->rates;
    for (Eigen::Index i = 0; i < G; ++i) c.row(i) /= c.row(i).sum();
    if (spec.epidemic.contacts == epifit::ContactStructure::matrix) return c;
    Eigen::MatrixXd p = c.pow(spec.epidemic.kappa);
    return p.cwiseMax(0.0);
}

/// Brute-force conditional means: row t-1 holds mu at time t, columns
/// stacked over (g, r). Reads parameters by name only.
inline Eigen::MatrixXd oracle_means(const ModelSpec& spec, const Eigen::VectorXd& theta, const Dataset& d,
                                    Eigen::MatrixXd* endemic_out = nullptr) {
    const epifit::Model model(spec, d);
    std::map<std::string, double> p;
    for (const auto& [name, value] : model.layout().unpack(theta)) p[name] = value;
    auto get = [&](const std::string& name, double fallback = 0.0) {
        const auto it = p.find(name);
        return it == p.end() ? fallback : it->second;
    };
    const auto& y = d.counts;
    const std::size_t T = y.num_times(), G = y.num_groups(), R = y.num_regions();
    const auto& gl = y.groups();
    const auto& rl = y.regions();

    Eigen::MatrixXd c;
    std::vector<Eigen::MatrixXd> w(G);
    if (spec.has_epidemic()) {
        c = oracle_contacts(spec, d);
        for (std::size_t gs = 0; gs < G; ++gs) {
            w[gs].resize(R, R);
            const double rho = spec.epidemic.rho_by_group ? get("rho." + gl[gs]) : get("rho");
            for (std::size_t a = 0; a < R; ++a) {
                for (std::size_t b = 0; b < R; ++b) {
                    const int o = d.orders(a, b);
                    double v = 0.0;
                    switch (spec.epidemic.weights) {
                        case epifit::SpatialWeightVariant::power_law_with_self: v = std::pow(o + 1.0, -rho); break;
                        case epifit::SpatialWeightVariant::power_law_no_self: v = o == 0 ? 0.0 : std::pow(o, -rho); break;
                        case epifit::SpatialWeightVariant::free_order_weights:
                            v = o == 0 ? 1.0 : get("weight.order" + std::to_string(o));
                            break;
                    }
                    w[gs](a, b) = v;
                }
            }
        }
    }

    const double omega = 2.0 * M_PI / spec.endemic.period;
    Eigen::MatrixXd mu(T - 1, G * R);
    if (endemic_out) endemic_out->resize(T - 1, G * R);
    for (std::size_t t = 1; t < T; ++t) {
        const auto wk = y.weeks()[t];
        const double x = (wk.week == 52 || wk.week == 1) ? 1.0 : 0.0;
        const int sw = wk.week == 53 ? 52 : wk.week;
        for (std::size_t g = 0; g < G; ++g) {
            for (std::size_t r = 0; r < R; ++r) {
                double gamma = 0.0, delta = 0.0;
                if (spec.endemic.seasonality == epifit::Seasonality::shared) {
                    gamma = get("end.sin");
                    delta = get("end.cos");
                } else if (spec.endemic.seasonality == epifit::Seasonality::by_group) {
                    gamma = get("end.sin." + gl[g]);
                    delta = get("end.cos." + gl[g]);
                }
                const double eta = get("end.intercept") + get("end.group." + gl[g]) + get("end.region." + rl[r]) +
                                   get("end.christmas") * x + gamma * std::sin(omega * sw) + delta * std::cos(omega * sw);
                const double e = y.offset(t, g, r);
                const double endemic = (spec.endemic.offset ? e : 1.0) * std::exp(eta);
                double epidemic = 0.0;
                if (spec.has_epidemic()) {
                    const double phi = std::exp(get("epi.intercept") + get("epi.group." + gl[g]) +
                                                get("epi.region." + rl[r])) *
                                       std::pow(e, get("epi.tau"));
                    double sum = 0.0;
                    for (std::size_t gs = 0; gs < G; ++gs) {
                        for (std::size_t rs = 0; rs < R; ++rs) {
                            double denom = 0.0;
                            for (std::size_t g2 = 0; g2 < G; ++g2) {
                                for (std::size_t r2 = 0; r2 < R; ++r2) denom += c(gs, g2) * w[gs](rs, r2);
                            }
                            if (denom > 0.0) {
                                sum += c(gs, g) * w[gs](rs, r) / denom * static_cast<double>(y.count(t - 1, gs, rs));
                            }
                        }
                    }
                    epidemic = phi * sum;
                    if (spec.epidemic.variant == epifit::EpidemicVariant::three_component) {
                        const double lambda =
                            std::exp(get("ar.intercept") + get("ar.group." + gl[g]) + get("ar.region." + rl[r]));
                        epidemic += lambda * static_cast<double>(y.count(t - 1, g, r));
                    }
                }
                mu(t - 1, g * R + r) = endemic + epidemic;
                if (endemic_out) (*endemic_out)(t - 1, g * R + r) = endemic;
            }
        }
    }
    return mu;
}

/// Negative-binomial log-pmf written from the textbook form with lgamma.
inline double oracle_negbin(std::int64_t y, double mu, double psi) {
    const double k = 1.0 / psi;
    const double yd = static_cast<double>(y);
    return std::lgamma(yd + k) - std::lgamma(k) - std::lgamma(yd + 1.0) + k * std::log(k / (k + mu)) +
           yd * std::log(mu / (k + mu));
}

inline double oracle_poisson(std::int64_t y, double mu) {
    const double yd = static_cast<double>(y);
    return yd * std::log(mu) - mu - std::lgamma(yd + 1.0);
}

/// Per-cell log-likelihood terms from the oracle means and pmfs.
inline Eigen::MatrixXd oracle_loglik_terms(const ModelSpec& spec, const Eigen::VectorXd& theta, const Dataset& d) {
    const epifit::Model model(spec, d);
    std::map<std::string, double> p;
    for (const auto& [name, value] : model.layout().unpack(theta)) p[name] = value;
    const Eigen::MatrixXd mu = oracle_means(spec, theta, d);
    const auto& y = d.counts;
    const std::size_t R = y.num_regions();
    Eigen::MatrixXd out(mu.rows(), mu.cols());
    for (Eigen::Index t = 0; t < mu.rows(); ++t) {
        for (Eigen::Index c = 0; c < mu.cols(); ++c) {
            const auto g = static_cast<std::size_t>(c) / R, r = static_cast<std::size_t>(c) % R;
            const std::int64_t obs = y.count(static_cast<std::size_t>(t) + 1, g, r);
            double psi = 0.0;
            switch (spec.overdispersion) {
                case epifit::Overdispersion::poisson: break;
                case epifit::Overdispersion::shared: psi = p.at("psi"); break;
                case epifit::Overdispersion::by_group: psi = p.at("psi." + y.groups()[g]); break;
                case epifit::Overdispersion::by_region: psi = p.at("psi." + y.regions()[r]); break;
            }
            out(t, c) = psi == 0.0 ? oracle_poisson(obs, mu(t, c)) : oracle_negbin(obs, mu(t, c), psi);
        }
    }
    return out;
}

/// Central differences of the oracle log-likelihood. Differences are taken
/// per cell and summed in extended precision, which keeps the cancellation
/// error far below the 1e-6 contract even for large likelihoods.
inline Eigen::VectorXd oracle_score(const ModelSpec& spec, const Eigen::VectorXd& theta, const Dataset& d,
                                    double h = 1e-6) {
    Eigen::VectorXd g(theta.size());
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
        Eigen::VectorXd a = theta, b = theta;
        a(i) += h;
        b(i) -= h;
        const Eigen::MatrixXd la = oracle_loglik_terms(spec, a, d), lb = oracle_loglik_terms(spec, b, d);
        long double s = 0.0L;
        for (Eigen::Index k = 0; k < la.size(); ++k) s += static_cast<long double>(la(k) - lb(k));
        g(i) = static_cast<double>(s / (2.0L * h));
    }
    return g;
}

/// Central finite-difference gradient.
template <class F>
Eigen::VectorXd finite_difference(F f, const Eigen::VectorXd& x, double h = 1e-6) {
    Eigen::VectorXd g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        Eigen::VectorXd a = x, b = x;
        a(i) += h;
        b(i) -= h;
        g(i) = (f(a) - f(b)) / (2.0 * h);
    }
    return g;
}

}  // namespace support
