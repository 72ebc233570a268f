#include "epifit/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "epifit/error.hpp"
#include "epifit/likelihood.hpp"

namespace epifit {

// ---------------------------------------------------------------------------
// Parameter layout

std::optional<std::size_t> ParameterLayout::find(const std::string& name) const {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (params_[i].name == name) return i;
    }
    return std::nullopt;
}

std::size_t ParameterLayout::index_of(const std::string& name) const {
    const auto i = find(name);
    if (!i) throw Error("unknown_parameter", "no parameter named '" + name + "'");
    return *i;
}

std::size_t ParameterLayout::add(std::string name, Transform transform) {
    params_.push_back({std::move(name), transform});
    return params_.size() - 1;
}

std::vector<std::pair<std::string, double>> ParameterLayout::unpack(const Eigen::VectorXd& theta) const {
    if (static_cast<std::size_t>(theta.size()) != params_.size()) {
        throw Error("dimension_mismatch", "parameter vector has " + std::to_string(theta.size()) +
                                              " entries, layout expects " + std::to_string(params_.size()));
    }
    std::vector<std::pair<std::string, double>> out;
    out.reserve(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const double v = theta(static_cast<Eigen::Index>(i));
        out.emplace_back(params_[i].name, params_[i].transform == Transform::log ? std::exp(v) : v);
    }
    return out;
}

Eigen::VectorXd ParameterLayout::pack(const std::vector<std::pair<std::string, double>>& named) const {
    Eigen::VectorXd theta(static_cast<Eigen::Index>(params_.size()));
    std::vector<bool> seen(params_.size(), false);
    for (const auto& [name, value] : named) {
        const auto i = find(name);
        if (!i) continue;
        if (params_[*i].transform == Transform::log) {
            if (!(value > 0.0)) throw Error("bad_parameter", "parameter '" + name + "' must be positive");
            theta(static_cast<Eigen::Index>(*i)) = std::log(value);
        } else {
            theta(static_cast<Eigen::Index>(*i)) = value;
        }
        seen[*i] = true;
    }
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (!seen[i]) throw Error("missing_parameter", "no value for parameter '" + params_[i].name + "'");
    }
    return theta;
}

namespace {

struct LayoutIndices {
    int end_intercept = -1, end_christmas = -1;
    std::vector<int> end_group, end_region, end_sin, end_cos;
    int ar_intercept = -1;
    std::vector<int> ar_group, ar_region;
    int epi_intercept = -1, epi_tau = -1;
    std::vector<int> epi_group, epi_region;
    std::vector<int> rho, order_weight;
    std::vector<int> psi;  // per stacked cell
};

LayoutIndices build_layout(const ModelSpec& spec, const std::vector<std::string>& groups,
                           const std::vector<std::string>& regions, int max_order, ParameterLayout& layout) {
    const std::size_t G = groups.size();
    const std::size_t R = regions.size();
    LayoutIndices ix;
    auto add = [&layout](std::string name, Transform tr = Transform::identity) {
        return static_cast<int>(layout.add(std::move(name), tr));
    };

    const auto& en = spec.endemic;
    ix.end_intercept = add("end.intercept");
    ix.end_group.assign(G, -1);
    ix.end_region.assign(R, -1);
    if (en.group_effects) {
        for (std::size_t g = 1; g < G; ++g) ix.end_group[g] = add("end.group." + groups[g]);
    }
    if (en.region_effects) {
        for (std::size_t r = 1; r < R; ++r) ix.end_region[r] = add("end.region." + regions[r]);
    }
    if (en.christmas) ix.end_christmas = add("end.christmas");
    ix.end_sin.assign(G, -1);
    ix.end_cos.assign(G, -1);
    if (en.seasonality == Seasonality::shared) {
        const int s = add("end.sin");
        const int c = add("end.cos");
        std::fill(ix.end_sin.begin(), ix.end_sin.end(), s);
        std::fill(ix.end_cos.begin(), ix.end_cos.end(), c);
    } else if (en.seasonality == Seasonality::by_group) {
        for (std::size_t g = 0; g < G; ++g) {
            ix.end_sin[g] = add("end.sin." + groups[g]);
            ix.end_cos[g] = add("end.cos." + groups[g]);
        }
    }

    const auto& ep = spec.epidemic;
    ix.ar_group.assign(G, -1);
    ix.ar_region.assign(R, -1);
    ix.epi_group.assign(G, -1);
    ix.epi_region.assign(R, -1);
    ix.rho.assign(G, -1);
    if (spec.has_epidemic()) {
        if (ep.variant == EpidemicVariant::three_component) {
            ix.ar_intercept = add("ar.intercept");
            if (ep.ar_group_effects) {
                for (std::size_t g = 1; g < G; ++g) ix.ar_group[g] = add("ar.group." + groups[g]);
            }
            if (ep.ar_region_effects) {
                for (std::size_t r = 1; r < R; ++r) ix.ar_region[r] = add("ar.region." + regions[r]);
            }
        }
        ix.epi_intercept = add("epi.intercept");
        if (ep.group_effects) {
            for (std::size_t g = 1; g < G; ++g) ix.epi_group[g] = add("epi.group." + groups[g]);
        }
        if (ep.region_effects) {
            for (std::size_t r = 1; r < R; ++r) ix.epi_region[r] = add("epi.region." + regions[r]);
        }
        if (ep.population_power) ix.epi_tau = add("epi.tau");
        if (ep.weights == SpatialWeightVariant::free_order_weights) {
            ix.order_weight.assign(static_cast<std::size_t>(max_order) + 1, -1);
            for (int o = 1; o <= max_order; ++o) {
                ix.order_weight[static_cast<std::size_t>(o)] = add("weight.order" + std::to_string(o), Transform::log);
            }
        } else if (ep.rho_by_group) {
            for (std::size_t g = 0; g < G; ++g) ix.rho[g] = add("rho." + groups[g], Transform::log);
        } else {
            const int k = add("rho", Transform::log);
            std::fill(ix.rho.begin(), ix.rho.end(), k);
        }
    }

    ix.psi.assign(G * R, -1);
    switch (spec.overdispersion) {
        case Overdispersion::poisson:
            break;
        case Overdispersion::shared: {
            const int k = add("psi", Transform::log);
            std::fill(ix.psi.begin(), ix.psi.end(), k);
            break;
        }
        case Overdispersion::by_group:
            for (std::size_t g = 0; g < G; ++g) {
                const int k = add("psi." + groups[g], Transform::log);
                for (std::size_t r = 0; r < R; ++r) ix.psi[g * R + r] = k;
            }
            break;
        case Overdispersion::by_region:
            for (std::size_t r = 0; r < R; ++r) {
                const int k = add("psi." + regions[r], Transform::log);
                for (std::size_t g = 0; g < G; ++g) ix.psi[g * R + r] = k;
            }
            break;
    }
    return ix;
}

double coef(const Eigen::VectorXd& theta, int idx) { return idx < 0 ? 0.0 : theta(idx); }

}  // namespace

ParameterLayout make_layout(const ModelSpec& spec, const std::vector<std::string>& groups,
                            const std::vector<std::string>& regions, int max_order) {
    ParameterLayout layout;
    build_layout(spec, groups, regions, max_order, layout);
    return layout;
}

std::size_t parameter_count(const ModelSpec& spec, const ModelDims& dims) {
    std::vector<std::string> groups(dims.groups), regions(dims.regions);
    for (std::size_t g = 0; g < dims.groups; ++g) groups[g] = std::to_string(g);
    for (std::size_t r = 0; r < dims.regions; ++r) regions[r] = std::to_string(r);
    return make_layout(spec, groups, regions, dims.max_order).size() + (spec.kappa_profiled() ? 1 : 0);
}

int seasonal_week(const IsoWeek& w) { return std::min(w.week, 52); }

bool is_christmas_week(const IsoWeek& w) { return w.week == 52 || w.week == 1; }

// ---------------------------------------------------------------------------
// Model

struct Model::Kernels {
    // Row-normalised spatial weights u(r', r), one per rho slot.
    std::vector<Eigen::MatrixXd> normalized;
    std::vector<std::size_t> slot_of_group;
    struct Derivative {
        int param;
        std::size_t slot;
        Eigen::MatrixXd d_normalized;
    };
    std::vector<Derivative> derivatives;
};

Model::Model(ModelSpec spec, const Dataset& data) : spec_(std::move(spec)), data_(&data) {
    const auto& counts = data.counts;
    counts.validate();
    groups_ = counts.num_groups();
    regions_ = counts.num_regions();
    if (spec_.has_epidemic()) {
        if (static_cast<std::size_t>(data.orders.rows()) != regions_ ||
            static_cast<std::size_t>(data.orders.cols()) != regions_) {
            throw Error("dimension_mismatch", "adjacency orders do not match the number of regions");
        }
        max_order_ = regions_ > 0 ? data.orders.maxCoeff() : 0;
    }

    LayoutIndices ix = build_layout(spec_, counts.groups(), counts.regions(), max_order_, layout_);
    end_intercept_ = ix.end_intercept;
    end_christmas_ = ix.end_christmas;
    end_group_ = std::move(ix.end_group);
    end_region_ = std::move(ix.end_region);
    end_sin_ = std::move(ix.end_sin);
    end_cos_ = std::move(ix.end_cos);
    ar_intercept_ = ix.ar_intercept;
    ar_group_ = std::move(ix.ar_group);
    ar_region_ = std::move(ix.ar_region);
    epi_intercept_ = ix.epi_intercept;
    epi_tau_ = ix.epi_tau;
    epi_group_ = std::move(ix.epi_group);
    epi_region_ = std::move(ix.epi_region);
    rho_ = std::move(ix.rho);
    order_weight_ = std::move(ix.order_weight);
    psi_ = std::move(ix.psi);

    const std::size_t T = counts.num_times();
    const double omega = 2.0 * std::numbers::pi / spec_.endemic.period;
    christmas_.resize(T);
    sin_.resize(T);
    cos_.resize(T);
    for (std::size_t t = 0; t < T; ++t) {
        const auto& w = counts.weeks()[t];
        christmas_[t] = is_christmas_week(w) ? 1.0 : 0.0;
        sin_[t] = std::sin(omega * seasonal_week(w));
        cos_[t] = std::cos(omega * seasonal_week(w));
    }

    const auto G = static_cast<Eigen::Index>(groups_);
    contacts_ = Eigen::MatrixXd::Identity(G, G);
    if (!spec_.has_epidemic()) return;

    auto given_contacts = [&]() -> ContactMatrix {
        if (!data.contacts) throw Error("missing_contacts", "model needs a contact matrix but none was supplied");
        const ContactMatrix& c = *data.contacts;
        if (c.size() != G) throw Error("label_mismatch", "contact matrix size does not match the number of groups");
        if (c.labels.empty()) return c;
        // Reorder to the data's group order.
        ContactMatrix out = c;
        std::vector<Eigen::Index> perm(groups_);
        for (std::size_t g = 0; g < groups_; ++g) {
            const auto it = std::find(c.labels.begin(), c.labels.end(), counts.groups()[g]);
            if (it == c.labels.end()) {
                throw Error("label_mismatch", "group '" + counts.groups()[g] + "' is missing from the contact matrix");
            }
            perm[g] = it - c.labels.begin();
        }
        for (Eigen::Index i = 0; i < G; ++i) {
            for (Eigen::Index j = 0; j < G; ++j) out.rates(i, j) = c.rates(perm[i], perm[j]);
        }
        out.labels = counts.groups();
        if (!c.population.empty()) {
            for (std::size_t g = 0; g < groups_; ++g) out.population[g] = c.population[perm[g]];
        }
        return out;
    };

    switch (spec_.epidemic.contacts) {
        case ContactStructure::identity:
            break;
        case ContactStructure::ones:
            contacts_ = Eigen::MatrixXd::Ones(G, G);
            break;
        case ContactStructure::matrix:
            contacts_ = row_normalize(given_contacts()).rates;
            break;
        case ContactStructure::power_fixed:
        case ContactStructure::power_profiled: {
            auto powered = matrix_power_detailed(row_normalize(given_contacts()), spec_.epidemic.kappa);
            contacts_ = powered.matrix.rates;
            truncations_ = std::move(powered.truncated);
            break;
        }
    }
    raw_contacts_ = contacts_;
    for (Eigen::Index g = 0; g < G; ++g) {
        const double s = contacts_.row(g).sum();
        if (!(s > 0.0)) throw Error("zero_row", "contact weights of group " + counts.groups()[g] + " are all zero");
        contacts_.row(g) /= s;
    }
}

std::size_t Model::dimension() const { return layout_.size() + (spec_.kappa_profiled() ? 1 : 0); }

Eigen::VectorXd Model::default_start() const {
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout_.size()));
    const auto& counts = data_->counts;
    const double mean_count = std::max(static_cast<double>(counts.total_count()) /
                                           static_cast<double>(counts.num_times() * counts.num_cells()),
                                       0.1);
    double mean_offset = 0.0;
    double mean_log_offset = 0.0;
    std::size_t n = 0;
    for (std::size_t t = 0; t < counts.num_times(); ++t) {
        for (double e : counts.offset_slice(t)) {
            mean_offset += e;
            mean_log_offset += std::log(e);
            ++n;
        }
    }
    mean_offset /= static_cast<double>(n);
    mean_log_offset /= static_cast<double>(n);
    theta(end_intercept_) = spec_.endemic.offset ? std::log(mean_count / mean_offset) : std::log(mean_count);
    // Epidemic multipliers start at 0.1 (at the geometric-mean population
    // when tau is estimated). A unit multiplier sits next to the explosive
    // regime and the first steps tend to overshoot into a flat region where
    // the epidemic component has vanished.
    const double weak = std::log(0.1);
    if (epi_intercept_ >= 0) {
        theta(epi_intercept_) = weak;
        if (epi_tau_ >= 0) {
            theta(epi_tau_) = 1.0;
            theta(epi_intercept_) -= mean_log_offset;
        }
    }
    if (ar_intercept_ >= 0) theta(ar_intercept_) = weak;
    for (int k : rho_) {
        if (k >= 0) theta(k) = 0.0;
    }
    for (std::size_t o = 1; o < order_weight_.size(); ++o) {
        theta(order_weight_[o]) = -std::log(static_cast<double>(o) + 1.0);
    }
    return theta;
}

Model::Kernels Model::spatial_kernels(const Eigen::VectorXd& theta, bool derivatives) const {
    Kernels k;
    const auto R = static_cast<Eigen::Index>(regions_);
    const auto& orders = data_->orders;
    const auto variant = spec_.epidemic.weights;

    // Unnormalised weights w and d log w / d parameter (zero where w == 0).
    auto normalize = [&](const Eigen::MatrixXd& w, const std::vector<std::pair<int, Eigen::MatrixXd>>& dlogw,
                         std::size_t slot) {
        Eigen::MatrixXd u = Eigen::MatrixXd::Zero(R, R);
        for (Eigen::Index i = 0; i < R; ++i) {
            const double s = w.row(i).sum();
            if (s > 0.0) u.row(i) = w.row(i) / s;
        }
        k.normalized.push_back(u);
        if (!derivatives) return;
        for (const auto& [param, d] : dlogw) {
            Eigen::MatrixXd du(R, R);
            for (Eigen::Index i = 0; i < R; ++i) {
                const double mean = u.row(i).dot(d.row(i));
                du.row(i) = u.row(i).cwiseProduct((d.row(i).array() - mean).matrix());
            }
            k.derivatives.push_back({param, slot, std::move(du)});
        }
    };

    if (variant == SpatialWeightVariant::free_order_weights) {
        std::vector<double> weights(order_weight_.size(), 1.0);
        for (std::size_t o = 1; o < weights.size(); ++o) weights[o] = std::exp(theta(order_weight_[o]));
        const Eigen::MatrixXd w = order_weights(orders, weights);
        std::vector<std::pair<int, Eigen::MatrixXd>> dlogw;
        if (derivatives) {
            for (std::size_t o = 1; o < weights.size(); ++o) {
                dlogw.emplace_back(order_weight_[o], (orders.array() == static_cast<int>(o)).cast<double>().matrix());
            }
        }
        normalize(w, dlogw, 0);
        k.slot_of_group.assign(groups_, 0);
        return k;
    }

    const bool with_self = variant == SpatialWeightVariant::power_law_with_self;
    Eigen::MatrixXd log_base(R, R);
    for (Eigen::Index i = 0; i < R; ++i) {
        for (Eigen::Index j = 0; j < R; ++j) {
            const int o = orders(i, j);
            log_base(i, j) = with_self ? std::log(o + 1.0) : (o == 0 ? 0.0 : std::log(static_cast<double>(o)));
        }
    }
    std::vector<int> slot_params;
    k.slot_of_group.resize(groups_);
    for (std::size_t g = 0; g < groups_; ++g) {
        const auto it = std::find(slot_params.begin(), slot_params.end(), rho_[g]);
        if (it == slot_params.end()) {
            slot_params.push_back(rho_[g]);
            k.slot_of_group[g] = slot_params.size() - 1;
        } else {
            k.slot_of_group[g] = static_cast<std::size_t>(it - slot_params.begin());
        }
    }
    for (std::size_t s = 0; s < slot_params.size(); ++s) {
        const double rho = std::exp(theta(slot_params[s]));
        const Eigen::MatrixXd w = power_law_weights(orders, rho, with_self);
        std::vector<std::pair<int, Eigen::MatrixXd>> dlogw;
        if (derivatives) dlogw.emplace_back(slot_params[s], -rho * log_base);
        normalize(w, dlogw, s);
    }
    return k;
}

void Model::slice_components(const Eigen::VectorXd& theta, std::size_t t, std::span<const std::int64_t> previous,
                             std::span<double> endemic, std::span<double> within,
                             std::span<double> between) const {
    const auto& counts = data_->counts;
    const std::size_t G = groups_, R = regions_;
    const auto offsets = counts.offset_slice(t);
    const double b_xmas = coef(theta, end_christmas_) * christmas_[t];
    for (std::size_t g = 0; g < G; ++g) {
        const double seasonal = coef(theta, end_sin_[g]) * sin_[t] + coef(theta, end_cos_[g]) * cos_[t];
        for (std::size_t r = 0; r < R; ++r) {
            const std::size_t c = g * R + r;
            const double eta = theta(end_intercept_) + coef(theta, end_group_[g]) + coef(theta, end_region_[r]) +
                               b_xmas + seasonal;
            endemic[c] = (spec_.endemic.offset ? offsets[c] : 1.0) * std::exp(eta);
            within[c] = 0.0;
            between[c] = 0.0;
        }
    }
    if (!spec_.has_epidemic()) return;

    const Kernels k = spatial_kernels(theta, false);
    // spread[g'][r] = sum_r' u(r', r) Y(g', r')
    Eigen::MatrixXd spread(G, R);
    for (std::size_t gs = 0; gs < G; ++gs) {
        const auto& u = k.normalized[k.slot_of_group[gs]];
        for (std::size_t r = 0; r < R; ++r) {
            double s = 0.0;
            for (std::size_t rs = 0; rs < R; ++rs) s += u(rs, r) * static_cast<double>(previous[gs * R + rs]);
            spread(gs, r) = s;
        }
    }
    const double tau = coef(theta, epi_tau_);
    for (std::size_t g = 0; g < G; ++g) {
        for (std::size_t r = 0; r < R; ++r) {
            const std::size_t c = g * R + r;
            const double log_phi = theta(epi_intercept_) + coef(theta, epi_group_[g]) + coef(theta, epi_region_[r]) +
                                   tau * std::log(offsets[c]);
            const double phi = std::exp(log_phi);
            double other = 0.0;
            for (std::size_t gs = 0; gs < G; ++gs) {
                if (gs != g) other += contacts_(gs, g) * spread(gs, r);
            }
            within[c] = phi * contacts_(g, g) * spread(g, r);
            between[c] = phi * other;
            if (ar_intercept_ >= 0) {
                const double lambda =
                    std::exp(theta(ar_intercept_) + coef(theta, ar_group_[g]) + coef(theta, ar_region_[r]));
                within[c] += lambda * static_cast<double>(previous[c]);
            }
        }
    }
}

MeanComponents Model::components(const Eigen::VectorXd& theta) const {
    const auto& counts = data_->counts;
    const auto T = static_cast<Eigen::Index>(counts.num_times());
    const auto n = static_cast<Eigen::Index>(counts.num_cells());
    MeanComponents m;
    m.endemic.resize(T - 1, n);
    m.within_group.resize(T - 1, n);
    m.between_groups.resize(T - 1, n);
    std::vector<double> e(n), w(n), b(n);
    for (Eigen::Index t = 1; t < T; ++t) {
        slice_components(theta, static_cast<std::size_t>(t), counts.slice(static_cast<std::size_t>(t - 1)), e, w, b);
        for (Eigen::Index c = 0; c < n; ++c) {
            m.endemic(t - 1, c) = e[c];
            m.within_group(t - 1, c) = w[c];
            m.between_groups(t - 1, c) = b[c];
        }
    }
    return m;
}

std::vector<double> Model::overdispersion(const Eigen::VectorXd& theta) const {
    if (spec_.overdispersion == Overdispersion::poisson) return {};
    std::vector<double> psi(psi_.size());
    for (std::size_t c = 0; c < psi_.size(); ++c) psi[c] = std::exp(theta(psi_[c]));
    return psi;
}

double Model::log_likelihood(const Eigen::VectorXd& theta) const { return evaluate(theta, nullptr); }

double Model::log_likelihood(const Eigen::VectorXd& theta, Eigen::VectorXd& gradient) const {
    return evaluate(theta, &gradient);
}

double Model::evaluate(const Eigen::VectorXd& theta, Eigen::VectorXd* gradient) const {
    if (static_cast<std::size_t>(theta.size()) != layout_.size()) {
        throw Error("dimension_mismatch", "parameter vector has " + std::to_string(theta.size()) +
                                              " entries, model expects " + std::to_string(layout_.size()));
    }
    const auto& counts = data_->counts;
    const std::size_t T = counts.num_times(), G = groups_, R = regions_, n = G * R;
    const bool poisson = spec_.overdispersion == Overdispersion::poisson;
    const bool epidemic = spec_.has_epidemic();
    const bool want_grad = gradient != nullptr;
    if (want_grad) gradient->setZero(theta.size());

    const std::vector<double> psi = overdispersion(theta);
    Kernels k;
    if (epidemic) k = spatial_kernels(theta, want_grad);

    // Time-constant predictor parts.
    std::vector<double> end_const(n), epi_const(n, 0.0), lambda(n, 0.0);
    for (std::size_t g = 0; g < G; ++g) {
        for (std::size_t r = 0; r < R; ++r) {
            const std::size_t c = g * R + r;
            end_const[c] = theta(end_intercept_) + coef(theta, end_group_[g]) + coef(theta, end_region_[r]);
            if (epidemic) {
                epi_const[c] = theta(epi_intercept_) + coef(theta, epi_group_[g]) + coef(theta, epi_region_[r]);
            }
            if (ar_intercept_ >= 0) {
                lambda[c] = std::exp(theta(ar_intercept_) + coef(theta, ar_group_[g]) + coef(theta, ar_region_[r]));
            }
        }
    }
    const double tau = coef(theta, epi_tau_);

    const std::size_t nderiv = k.derivatives.size();
    Eigen::MatrixXd spread(G, R);
    std::vector<Eigen::MatrixXd> d_spread(nderiv, Eigen::MatrixXd::Zero(G, R));

    auto add = [gradient](int idx, double v) {
        if (idx >= 0) (*gradient)(idx) += v;
    };

    double total = 0.0;
    for (std::size_t t = 1; t < T; ++t) {
        const auto prev = counts.slice(t - 1);
        const auto cur = counts.slice(t);
        const auto offsets = counts.offset_slice(t);
        if (epidemic) {
            for (std::size_t gs = 0; gs < G; ++gs) {
                const auto& u = k.normalized[k.slot_of_group[gs]];
                for (std::size_t r = 0; r < R; ++r) {
                    double s = 0.0;
                    for (std::size_t rs = 0; rs < R; ++rs) s += u(rs, r) * static_cast<double>(prev[gs * R + rs]);
                    spread(gs, r) = s;
                }
            }
            for (std::size_t d = 0; d < nderiv; ++d) {
                const auto& dk = k.derivatives[d];
                for (std::size_t gs = 0; gs < G; ++gs) {
                    if (k.slot_of_group[gs] != dk.slot) {
                        d_spread[d].row(gs).setZero();
                        continue;
                    }
                    for (std::size_t r = 0; r < R; ++r) {
                        double s = 0.0;
                        for (std::size_t rs = 0; rs < R; ++rs) {
                            s += dk.d_normalized(rs, r) * static_cast<double>(prev[gs * R + rs]);
                        }
                        d_spread[d](gs, r) = s;
                    }
                }
            }
        }

        const double xmas = christmas_[t];
        for (std::size_t g = 0; g < G; ++g) {
            const double sn = sin_[t], cs = cos_[t];
            const double seasonal = coef(theta, end_sin_[g]) * sn + coef(theta, end_cos_[g]) * cs;
            for (std::size_t r = 0; r < R; ++r) {
                const std::size_t c = g * R + r;
                const double log_e = std::log(offsets[c]);
                const double endemic = std::exp(end_const[c] + coef(theta, end_christmas_) * xmas + seasonal +
                                                (spec_.endemic.offset ? log_e : 0.0));
                double epi = 0.0, phi = 0.0, ar = 0.0;
                if (epidemic) {
                    phi = std::exp(epi_const[c] + tau * log_e);
                    double s = 0.0;
                    for (std::size_t gs = 0; gs < G; ++gs) s += contacts_(gs, g) * spread(gs, r);
                    epi = phi * s;
                    ar = lambda[c] * static_cast<double>(prev[c]);
                }
                const double mu = endemic + epi + ar;
                if (!std::isfinite(mu) || !(mu > 0.0)) {
                    throw Error("nonfinite_mean", "mean is not finite and positive at " +
                                                      counts.weeks()[t].to_string() + ", group " + counts.groups()[g] +
                                                      ", region " + counts.regions()[r]);
                }
                const std::int64_t y = cur[c];
                double d_mu = 0.0;
                if (poisson) {
                    total += poisson_log_pmf(y, mu);
                    d_mu = static_cast<double>(y) / mu - 1.0;
                } else {
                    const auto d = negbin_log_pmf_derivatives(y, mu, psi[c]);
                    total += d.value;
                    d_mu = d.d_mu;
                    if (want_grad) add(psi_[c], d.d_log_psi);
                }
                if (!want_grad) continue;

                const double de = d_mu * endemic;
                add(end_intercept_, de);
                add(end_group_[g], de);
                add(end_region_[r], de);
                add(end_christmas_, de * xmas);
                add(end_sin_[g], de * sn);
                add(end_cos_[g], de * cs);
                if (!epidemic) continue;
                const double dp = d_mu * epi;
                add(epi_intercept_, dp);
                add(epi_group_[g], dp);
                add(epi_region_[r], dp);
                add(epi_tau_, dp * log_e);
                if (ar_intercept_ >= 0) {
                    const double da = d_mu * ar;
                    add(ar_intercept_, da);
                    add(ar_group_[g], da);
                    add(ar_region_[r], da);
                }
                for (std::size_t d = 0; d < nderiv; ++d) {
                    double s = 0.0;
                    for (std::size_t gs = 0; gs < G; ++gs) s += contacts_(gs, g) * d_spread[d](gs, r);
                    add(k.derivatives[d].param, d_mu * phi * s);
                }
            }
        }
    }
    if (!std::isfinite(total)) throw Error("nonfinite_loglik", "log-likelihood is not finite");
    return total;
}

Eigen::MatrixXd Model::epidemic_coefficient_matrix(const Eigen::VectorXd& theta) const {
    const auto& counts = data_->counts;
    const std::size_t G = groups_, R = regions_, n = G * R;
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    if (!spec_.has_epidemic()) return m;
    if (epi_tau_ >= 0 && counts.offsets_time_varying()) {
        throw Error("time_varying_epidemic", "epidemic predictor varies over time; coefficient matrix is undefined");
    }

    // Unnormalised contact and spatial weights, jointly normalised.
    const auto& orders = data_->orders;
    const auto offsets = counts.offset_slice(0);
    const double tau = coef(theta, epi_tau_);
    for (std::size_t gs = 0; gs < G; ++gs) {
        Eigen::MatrixXd w;
        if (spec_.epidemic.weights == SpatialWeightVariant::free_order_weights) {
            std::vector<double> weights(order_weight_.size(), 1.0);
            for (std::size_t o = 1; o < weights.size(); ++o) weights[o] = std::exp(theta(order_weight_[o]));
            w = order_weights(orders, weights);
        } else {
            w = power_law_weights(orders, std::exp(theta(rho_[gs])),
                                  spec_.epidemic.weights == SpatialWeightVariant::power_law_with_self);
        }
        const Eigen::MatrixXd joint = joint_normalize(raw_contacts_, w);
        for (std::size_t rs = 0; rs < R; ++rs) {
            const auto from = static_cast<Eigen::Index>(gs * R + rs);
            for (std::size_t g = 0; g < G; ++g) {
                for (std::size_t r = 0; r < R; ++r) {
                    const std::size_t c = g * R + r;
                    const double phi = std::exp(theta(epi_intercept_) + coef(theta, epi_group_[g]) +
                                                coef(theta, epi_region_[r]) + tau * std::log(offsets[c]));
                    m(static_cast<Eigen::Index>(c), from) = phi * joint(from, static_cast<Eigen::Index>(c));
                }
            }
        }
    }
    if (ar_intercept_ >= 0) {
        for (std::size_t g = 0; g < G; ++g) {
            for (std::size_t r = 0; r < R; ++r) {
                const auto c = static_cast<Eigen::Index>(g * R + r);
                m(c, c) += std::exp(theta(ar_intercept_) + coef(theta, ar_group_[g]) + coef(theta, ar_region_[r]));
            }
        }
    }
    return m;
}

int Model::seasonal_peak_week(const Eigen::VectorXd& theta, std::size_t group) const {
    if (group >= groups_) throw Error("bad_group", "group index out of range");
    if (end_sin_[group] < 0) throw Error("no_seasonality", "model has no seasonal terms");
    const double gamma = theta(end_sin_[group]);
    const double delta = theta(end_cos_[group]);
    const int period = static_cast<int>(std::lround(spec_.endemic.period));
    if (gamma == 0.0 && delta == 0.0) return 1;
    // gamma sin(x) + delta cos(x) = A cos(x - atan2(gamma, delta))
    const double omega = 2.0 * std::numbers::pi / spec_.endemic.period;
    double peak = std::atan2(gamma, delta) / omega;
    int week = static_cast<int>(std::lround(peak)) % period;
    if (week <= 0) week += period;
    return week;
}

Eigen::MatrixXd compute_means(const ModelSpec& spec, const Eigen::VectorXd& theta, const Dataset& data) {
    return Model(spec, data).means(theta);
}

Eigen::MatrixXd epidemic_coefficient_matrix(const ModelSpec& spec, const Eigen::VectorXd& theta,
                                            const Dataset& data) {
    return Model(spec, data).epidemic_coefficient_matrix(theta);
}

}  // namespace epifit
