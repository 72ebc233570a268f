#pragma once

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace epifit {

/// Undirected neighbourhood graph of the regions.
struct RegionGraph {
    std::vector<std::string> regions;
    std::vector<std::pair<std::size_t, std::size_t>> edges;

    /// Builds the graph from label pairs; throws on unknown labels or self-loops.
    static RegionGraph from_labels(std::vector<std::string> regions,
                                   const std::vector<std::pair<std::string, std::string>>& edges);
};

/// Adjacency orders o(r', r): symmetric hop counts with zero diagonal.
using OrderMatrix = Eigen::MatrixXi;

/// All-pairs hop counts by breadth-first search from each region.
/// Throws if the graph is disconnected, listing its components.
OrderMatrix adjacency_orders(const RegionGraph& graph);

enum class SpatialWeightVariant { power_law_with_self, power_law_no_self, free_order_weights };

/// Unnormalised power-law weights: (o + 1)^-rho with self weight, or
/// o^-rho off the diagonal and 0 on it without.
Eigen::MatrixXd power_law_weights(const OrderMatrix& orders, double rho, bool include_self);

/// Unnormalised weights from per-order values; weights[o] is the weight of
/// order o, and weights[0] should be 1.
Eigen::MatrixXd order_weights(const OrderMatrix& orders, const std::vector<double>& weights);

/// Jointly row-normalised (G*R) x (G*R) weights
///   [(g', r'), (g, r)] = c(g', g) w(r', r) / sum_{g, r} c(g', g) w(r', r)
/// with the stacked index g * R + r.
Eigen::MatrixXd joint_normalize(const Eigen::MatrixXd& contact_weights, const Eigen::MatrixXd& spatial_weights);

}  // namespace epifit
