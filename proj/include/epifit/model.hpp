#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "epifit/contact_matrix.hpp"
#include "epifit/counts.hpp"
#include "epifit/spatial_weights.hpp"

namespace epifit {

enum class Seasonality { none, shared, by_group };
enum class EpidemicVariant { none, merged, three_component };
enum class ContactStructure { matrix, power_fixed, power_profiled, identity, ones };
enum class Overdispersion { poisson, shared, by_group, by_region };

/// Endemic predictor: log nu = intercept + group + region + christmas * x_t
///                              + gamma sin(omega w) + delta cos(omega w).
struct EndemicSpec {
    bool group_effects = true;
    bool region_effects = true;
    bool christmas = true;
    Seasonality seasonality = Seasonality::by_group;
    double period = 52.0;
    /// Multiply the endemic component by the population offset.
    bool offset = true;
};

struct EpidemicSpec {
    EpidemicVariant variant = EpidemicVariant::merged;
    bool group_effects = true;
    bool region_effects = true;
    /// Scale the epidemic component by e^tau with tau estimated.
    bool population_power = true;
    SpatialWeightVariant weights = SpatialWeightVariant::power_law_with_self;
    /// Separate decay rho per infecting group.
    bool rho_by_group = false;
    ContactStructure contacts = ContactStructure::matrix;
    /// Power applied to the row-normalised contact matrix for power_fixed and
    /// power_profiled (the current profile value).
    double kappa = 1.0;
    /// Autoregressive predictor terms of the three-component variant.
    bool ar_group_effects = false;
    bool ar_region_effects = false;
};

struct ModelSpec {
    EndemicSpec endemic;
    EpidemicSpec epidemic;
    Overdispersion overdispersion = Overdispersion::by_group;

    bool has_epidemic() const { return epidemic.variant != EpidemicVariant::none; }
    bool kappa_profiled() const {
        return has_epidemic() && epidemic.contacts == ContactStructure::power_profiled;
    }
};

/// Everything the model reads besides the parameters.
struct Dataset {
    StratifiedCounts counts;
    OrderMatrix orders;
    std::optional<ContactMatrix> contacts;
};

struct ModelDims {
    std::size_t groups = 1;
    std::size_t regions = 1;
    int max_order = 0;
};

enum class Transform { identity, log };

struct ParameterInfo {
    std::string name;
    Transform transform = Transform::identity;
};

/// Named layout of the flat parameter vector. Log-transformed entries hold
/// the logarithm of the natural-scale value.
class ParameterLayout {
public:
    std::size_t size() const { return params_.size(); }
    const ParameterInfo& operator[](std::size_t i) const { return params_[i]; }
    const std::vector<ParameterInfo>& entries() const { return params_; }
    std::optional<std::size_t> find(const std::string& name) const;
    std::size_t index_of(const std::string& name) const;

    /// Natural-scale (name, value) pairs.
    std::vector<std::pair<std::string, double>> unpack(const Eigen::VectorXd& theta) const;
    /// Inverse of unpack; every layout name must be present.
    Eigen::VectorXd pack(const std::vector<std::pair<std::string, double>>& named) const;

    std::size_t add(std::string name, Transform transform = Transform::identity);

private:
    std::vector<ParameterInfo> params_;
};

/// Layout for the given spec and dimensions. Free parameters only: the
/// first group and region effects are fixed at 0 and kappa is not included.
ParameterLayout make_layout(const ModelSpec& spec, const std::vector<std::string>& groups,
                            const std::vector<std::string>& regions, int max_order);

/// Number of free parameters, counting a profiled kappa as one.
std::size_t parameter_count(const ModelSpec& spec, const ModelDims& dims);

/// Mean components for t = 1 .. T-1 (row i is time i + 1), columns stacked
/// over (g, r). total = endemic + within_group + between_groups.
struct MeanComponents {
    Eigen::MatrixXd endemic;
    /// Epidemic part from the same group (autoregression included).
    Eigen::MatrixXd within_group;
    /// Epidemic part from the other groups.
    Eigen::MatrixXd between_groups;

    Eigen::MatrixXd total() const { return endemic + within_group + between_groups; }
};

/// Bound model: spec plus data, with covariates and the effective contact
/// matrix precomputed. Evaluation is const and thread-safe.
class Model {
public:
    Model(ModelSpec spec, const Dataset& data);

    const ModelSpec& spec() const { return spec_; }
    const Dataset& data() const { return *data_; }
    const ParameterLayout& layout() const { return layout_; }
    std::size_t num_params() const { return layout_.size(); }
    /// Free parameters counted for AIC (layout size, plus one for profiled kappa).
    std::size_t dimension() const;

    /// Row-normalised contact weights entering the epidemic component.
    const Eigen::MatrixXd& contact_weights() const { return contacts_; }
    const std::vector<TruncatedEntry>& truncations() const { return truncations_; }

    Eigen::VectorXd default_start() const;

    /// Per-cell mean components for time index t >= 1 given the previous
    /// slice `previous` (stacked over (g, r)).
    void slice_components(const Eigen::VectorXd& theta, std::size_t t, std::span<const std::int64_t> previous,
                          std::span<double> endemic, std::span<double> within, std::span<double> between) const;

    MeanComponents components(const Eigen::VectorXd& theta) const;
    Eigen::MatrixXd means(const Eigen::VectorXd& theta) const { return components(theta).total(); }

    /// Conditional log-likelihood over t >= 1. Throws on non-finite values.
    double log_likelihood(const Eigen::VectorXd& theta) const;
    /// Log-likelihood and its exact gradient.
    double log_likelihood(const Eigen::VectorXd& theta, Eigen::VectorXd& gradient) const;

    /// Overdispersion psi per stacked cell; empty for Poisson.
    std::vector<double> overdispersion(const Eigen::VectorXd& theta) const;

    /// Coefficients of Y(t-1) in the conditional mean: entry [(g,r), (g',r')].
    Eigen::MatrixXd epidemic_coefficient_matrix(const Eigen::VectorXd& theta) const;

    /// Calendar week (1..52) of the maximum of the seasonal curve of group g.
    int seasonal_peak_week(const Eigen::VectorXd& theta, std::size_t group) const;

    /// Time-t covariates (exposed for the simulator and tests).
    double christmas(std::size_t t) const { return christmas_[t]; }
    double season_sin(std::size_t t) const { return sin_[t]; }
    double season_cos(std::size_t t) const { return cos_[t]; }

private:
    struct Kernels;
    Kernels spatial_kernels(const Eigen::VectorXd& theta, bool derivatives) const;
    double evaluate(const Eigen::VectorXd& theta, Eigen::VectorXd* gradient) const;

    ModelSpec spec_;
    const Dataset* data_;
    std::size_t groups_ = 0;
    std::size_t regions_ = 0;
    int max_order_ = 0;
    ParameterLayout layout_;
    Eigen::MatrixXd contacts_;
    Eigen::MatrixXd raw_contacts_;
    std::vector<TruncatedEntry> truncations_;

    std::vector<double> christmas_, sin_, cos_;

    // Parameter indices; -1 when absent (reference level or term disabled).
    int end_intercept_ = -1, end_christmas_ = -1;
    std::vector<int> end_group_, end_region_, end_sin_, end_cos_;
    int ar_intercept_ = -1;
    std::vector<int> ar_group_, ar_region_;
    int epi_intercept_ = -1, epi_tau_ = -1;
    std::vector<int> epi_group_, epi_region_;
    std::vector<int> rho_;          // per infecting group
    std::vector<int> order_weight_; // per order, -1 for order 0
    std::vector<int> psi_;          // per stacked cell
};

/// ISO week -> seasonal week index (week 53 shares the angle of week 52).
int seasonal_week(const IsoWeek& w);

/// Christmas indicator: ISO weeks 52 and 1.
bool is_christmas_week(const IsoWeek& w);

/// Convenience wrappers over Model.
Eigen::MatrixXd compute_means(const ModelSpec& spec, const Eigen::VectorXd& theta, const Dataset& data);
Eigen::MatrixXd epidemic_coefficient_matrix(const ModelSpec& spec, const Eigen::VectorXd& theta, const Dataset& data);

}  // namespace epifit
