#include "epifit/spatial_weights.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include "epifit/error.hpp"

namespace epifit {

RegionGraph RegionGraph::from_labels(std::vector<std::string> regions,
                                     const std::vector<std::pair<std::string, std::string>>& edges) {
    RegionGraph g;
    g.regions = std::move(regions);
    auto index = [&g](const std::string& label) {
        const auto it = std::find(g.regions.begin(), g.regions.end(), label);
        if (it == g.regions.end()) throw Error("unknown_region", "adjacency refers to unknown region '" + label + "'");
        return static_cast<std::size_t>(it - g.regions.begin());
    };
    for (const auto& [a, b] : edges) {
        const auto i = index(a);
        const auto j = index(b);
        if (i == j) throw Error("self_loop", "region '" + a + "' is listed as its own neighbour");
        g.edges.emplace_back(std::min(i, j), std::max(i, j));
    }
    std::sort(g.edges.begin(), g.edges.end());
    g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());
    return g;
}

OrderMatrix adjacency_orders(const RegionGraph& graph) {
    const std::size_t n = graph.regions.size();
    std::vector<std::vector<std::size_t>> adj(n);
    for (const auto& [a, b] : graph.edges) {
        if (a >= n || b >= n) throw Error("bad_edge", "edge refers to a region index out of range");
        if (a == b) throw Error("self_loop", "self-loop at region '" + graph.regions[a] + "'");
        adj[a].push_back(b);
        adj[b].push_back(a);
    }

    OrderMatrix orders = OrderMatrix::Constant(n, n, -1);
    for (std::size_t src = 0; src < n; ++src) {
        std::queue<std::size_t> frontier;
        orders(src, src) = 0;
        frontier.push(src);
        while (!frontier.empty()) {
            const auto u = frontier.front();
            frontier.pop();
            for (auto v : adj[u]) {
                if (orders(src, v) < 0) {
                    orders(src, v) = orders(src, u) + 1;
                    frontier.push(v);
                }
            }
        }
    }

    if (n > 0 && (orders.array() < 0).any()) {
        std::vector<int> component(n, -1);
        std::string listing;
        int next = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (component[i] >= 0) continue;
            listing += (next ? "; {" : "{");
            bool first = true;
            for (std::size_t j = 0; j < n; ++j) {
                if (orders(i, j) >= 0) {
                    component[j] = next;
                    listing += (first ? "" : ", ") + graph.regions[j];
                    first = false;
                }
            }
            listing += "}";
            ++next;
        }
        throw Error("disconnected_graph", "region graph is disconnected; components: " + listing);
    }
    return orders;
}

Eigen::MatrixXd power_law_weights(const OrderMatrix& orders, double rho, bool include_self) {
    if (!(rho > 0.0) || !std::isfinite(rho)) throw Error("bad_rho", "power-law decay rho must be positive");
    Eigen::MatrixXd w(orders.rows(), orders.cols());
    for (Eigen::Index i = 0; i < orders.rows(); ++i) {
        for (Eigen::Index j = 0; j < orders.cols(); ++j) {
            const int o = orders(i, j);
            if (include_self) {
                w(i, j) = std::pow(static_cast<double>(o) + 1.0, -rho);
            } else {
                w(i, j) = o == 0 ? 0.0 : std::pow(static_cast<double>(o), -rho);
            }
        }
    }
    return w;
}

Eigen::MatrixXd order_weights(const OrderMatrix& orders, const std::vector<double>& weights) {
    Eigen::MatrixXd w(orders.rows(), orders.cols());
    for (Eigen::Index i = 0; i < orders.rows(); ++i) {
        for (Eigen::Index j = 0; j < orders.cols(); ++j) {
            const auto o = static_cast<std::size_t>(orders(i, j));
            if (o >= weights.size()) throw Error("bad_order", "no weight given for adjacency order " + std::to_string(o));
            if (weights[o] < 0.0) throw Error("negative_weight", "order weights must be nonnegative");
            w(i, j) = weights[o];
        }
    }
    return w;
}

Eigen::MatrixXd joint_normalize(const Eigen::MatrixXd& contact_weights, const Eigen::MatrixXd& spatial_weights) {
    const Eigen::Index groups = contact_weights.rows();
    const Eigen::Index regions = spatial_weights.rows();
    if (contact_weights.cols() != groups || spatial_weights.cols() != regions) {
        throw Error("dimension_mismatch", "contact and spatial weights must be square");
    }
    if ((contact_weights.array() < 0.0).any() || (spatial_weights.array() < 0.0).any()) {
        throw Error("negative_weight", "transmission weights must be nonnegative");
    }
    const Eigen::Index n = groups * regions;
    Eigen::MatrixXd out(n, n);
    for (Eigen::Index gs = 0; gs < groups; ++gs) {
        for (Eigen::Index rs = 0; rs < regions; ++rs) {
            const Eigen::Index row = gs * regions + rs;
            double total = 0.0;
            for (Eigen::Index g = 0; g < groups; ++g) {
                for (Eigen::Index r = 0; r < regions; ++r) {
                    const double v = contact_weights(gs, g) * spatial_weights(rs, r);
                    out(row, g * regions + r) = v;
                    total += v;
                }
            }
            if (!(total > 0.0)) {
                throw Error("zero_outflow", "no transmission weight leaves (group " + std::to_string(gs) +
                                                ", region " + std::to_string(rs) + ")");
            }
            out.row(row) /= total;
        }
    }
    return out;
}

}  // namespace epifit
