#include "epifit/simulation.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <map>
#include <mutex>
#include <random>
#include <thread>

#include <Eigen/Eigenvalues>

namespace epifit {
namespace {

unsigned thread_count(unsigned requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("EPIFIT_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return static_cast<unsigned>(n);
    }
    return 1;
}

std::int64_t draw(std::mt19937_64& rng, double mu, double psi, bool poisson) {
    if (!(mu > 0.0)) return 0;
    double rate = mu;
    if (!poisson) {
        // Gamma-Poisson mixture: rate ~ Gamma(1/psi, psi mu).
        std::gamma_distribution<double> gamma(1.0 / psi, psi * mu);
        rate = gamma(rng);
        if (!(rate > 0.0)) return 0;
    }
    std::poisson_distribution<std::int64_t> pois(rate);
    return pois(rng);
}

}  // namespace

double spectral_radius(const Eigen::MatrixXd& m) {
    if (m.size() == 0) return 0.0;
    Eigen::EigenSolver<Eigen::MatrixXd> solver(m, false);
    if (solver.info() != Eigen::Success) throw Error("eigen_failed", "eigenvalues of the coefficient matrix failed");
    return solver.eigenvalues().cwiseAbs().maxCoeff();
}

double epidemic_proportion(const Model& model, const Eigen::VectorXd& theta) {
    return spectral_radius(model.epidemic_coefficient_matrix(theta));
}

std::vector<StratifiedCounts> simulate(const SimulationConfig& config) {
    if (config.base == nullptr) throw Error("no_template", "simulation needs a template dataset");
    if (config.horizon < 1) throw Error("bad_horizon", "horizon must be at least 1");
    const Dataset& base = *config.base;
    const StratifiedCounts& bc = base.counts;
    const std::size_t n = bc.num_cells();

    const IsoWeek start = config.start_week ? *config.start_week : bc.weeks().back();
    std::vector<std::int64_t> initial;
    if (config.initial) {
        initial = *config.initial;
        if (initial.size() != n) throw Error("dimension_mismatch", "initial slice does not match the lattice");
    } else {
        const auto last = bc.slice(bc.num_times() - 1);
        initial.assign(last.begin(), last.end());
    }

    Dataset traj;
    traj.orders = base.orders;
    traj.contacts = base.contacts;
    traj.counts = StratifiedCounts(consecutive_weeks(start, config.horizon + 1), bc.groups(), bc.regions());
    std::map<IsoWeek, std::size_t> base_index;
    for (std::size_t t = 0; t < bc.num_times(); ++t) base_index[bc.weeks()[t]] = t;
    for (std::size_t t = 0; t <= config.horizon; ++t) {
        const auto it = base_index.find(traj.counts.weeks()[t]);
        const std::size_t src = it != base_index.end() ? it->second : bc.num_times() - 1;
        for (std::size_t g = 0; g < bc.num_groups(); ++g) {
            for (std::size_t r = 0; r < bc.num_regions(); ++r) traj.counts.offset(t, g, r) = bc.offset(src, g, r);
        }
    }
    traj.counts.set_offsets_time_varying(bc.offsets_time_varying());
    std::copy(initial.begin(), initial.end(), traj.counts.slice(0).begin());

    const Model model(config.spec, traj);
    if (config.params.size() != static_cast<Eigen::Index>(model.num_params())) {
        throw Error("dimension_mismatch", "parameter vector does not match the model layout");
    }
    if (config.spec.has_epidemic() && !config.allow_explosive && !bc.offsets_time_varying()) {
        const double radius = epidemic_proportion(model, config.params);
        if (radius >= 1.0) {
            throw Error("explosive", "epidemic coefficient matrix has spectral radius " + std::to_string(radius) +
                                         " >= 1; pass allow_explosive to simulate anyway");
        }
    }
    const bool poisson = config.spec.overdispersion == Overdispersion::poisson;
    const std::vector<double> psi = model.overdispersion(config.params);

    std::vector<StratifiedCounts> out(config.replicates, traj.counts);
    auto run = [&](std::size_t rep) {
        std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                          static_cast<std::uint32_t>(rep), static_cast<std::uint32_t>(rep >> 32)};
        std::mt19937_64 rng(seq);
        StratifiedCounts& y = out[rep];
        std::vector<double> e(n), w(n), b(n);
        for (std::size_t t = 1; t <= config.horizon; ++t) {
            model.slice_components(config.params, t, y.slice(t - 1), e, w, b);
            auto cur = y.slice(t);
            for (std::size_t c = 0; c < n; ++c) {
                const double mu = e[c] + w[c] + b[c];
                const std::int64_t v =
                    mu > config.count_cap ? -1 : draw(rng, mu, poisson ? 0.0 : psi[c], poisson);
                if (v < 0 || static_cast<double>(v) > config.count_cap) {
                    throw Error("count_overflow", "simulated count exceeds the cap at " +
                                                      y.weeks()[t].to_string() + ", group " +
                                                      y.groups()[c / bc.num_regions()] + ", region " +
                                                      y.regions()[c % bc.num_regions()]);
                }
                cur[c] = v;
            }
        }
    };

    const unsigned workers = std::min<unsigned>(thread_count(config.threads),
                                                static_cast<unsigned>(std::max<std::size_t>(1, config.replicates)));
    if (workers <= 1) {
        for (std::size_t rep = 0; rep < config.replicates; ++rep) run(rep);
        return out;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < workers; ++i) {
        pool.emplace_back([&] {
            for (std::size_t rep = next++; rep < config.replicates; rep = next++) {
                try {
                    run(rep);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
    return out;
}

std::vector<DecompositionRow> mean_decomposition(const Model& model, const Eigen::VectorXd& theta,
                                                 Aggregation aggregate) {
    const auto& counts = model.data().counts;
    const MeanComponents m = model.components(theta);
    const std::size_t G = counts.num_groups(), R = counts.num_regions();
    std::vector<std::string> cells;
    auto cell_of = [&](std::size_t g, std::size_t r) -> std::size_t {
        switch (aggregate) {
            case Aggregation::by_group: return g;
            case Aggregation::by_region: return r;
            case Aggregation::total: return 0;
        }
        return 0;
    };
    switch (aggregate) {
        case Aggregation::by_group: cells = counts.groups(); break;
        case Aggregation::by_region: cells = counts.regions(); break;
        case Aggregation::total: cells = {"total"}; break;
    }

    std::vector<DecompositionRow> rows;
    rows.reserve(static_cast<std::size_t>(m.endemic.rows()) * cells.size());
    for (Eigen::Index i = 0; i < m.endemic.rows(); ++i) {
        std::vector<DecompositionRow> slice(cells.size());
        for (std::size_t k = 0; k < cells.size(); ++k) {
            slice[k].t = static_cast<std::size_t>(i) + 1;
            slice[k].cell = cells[k];
        }
        for (std::size_t g = 0; g < G; ++g) {
            for (std::size_t r = 0; r < R; ++r) {
                const auto c = static_cast<Eigen::Index>(g * R + r);
                auto& row = slice[cell_of(g, r)];
                row.endemic += m.endemic(i, c);
                row.within_group += m.within_group(i, c);
                row.between_groups += m.between_groups(i, c);
            }
        }
        rows.insert(rows.end(), slice.begin(), slice.end());
    }
    return rows;
}

}  // namespace epifit
