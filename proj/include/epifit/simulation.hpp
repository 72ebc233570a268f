#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "epifit/fit.hpp"
#include "epifit/model.hpp"

namespace epifit {

struct SimulationConfig {
    ModelSpec spec;
    Eigen::VectorXd params;
    /// Template supplying labels, offsets, orders and contacts. Offsets of
    /// simulated weeks repeat the template's last slice when the horizon
    /// runs past it.
    const Dataset* base = nullptr;
    /// Initial slice Y[0] stacked over (g, r); defaults to the template's
    /// last slice.
    std::optional<std::vector<std::int64_t>> initial;
    /// ISO week of the initial slice; defaults to the template's last week.
    std::optional<IsoWeek> start_week;
    std::size_t horizon = 1;
    std::size_t replicates = 1;
    std::uint64_t seed = 1;
    double count_cap = 1e9;
    /// Permit a spectral radius >= 1.
    bool allow_explosive = false;
    /// Worker threads for replicates; 0 reads EPIFIT_THREADS (default 1).
    unsigned threads = 0;
};

/// Simulated trajectories: each holds horizon + 1 slices, the first being
/// the initial slice.
std::vector<StratifiedCounts> simulate(const SimulationConfig& config);

/// Spectral radius of the epidemic coefficient matrix.
double epidemic_proportion(const Model& model, const Eigen::VectorXd& theta);
double spectral_radius(const Eigen::MatrixXd& m);

enum class Aggregation { by_group, by_region, total };

struct DecompositionRow {
    std::size_t t = 0;  // time index into the data (>= 1)
    std::string cell;
    double endemic = 0.0;
    double within_group = 0.0;
    double between_groups = 0.0;
};

/// Fitted mean components aggregated per time point and cell.
std::vector<DecompositionRow> mean_decomposition(const Model& model, const Eigen::VectorXd& theta,
                                                 Aggregation aggregate);

}  // namespace epifit
