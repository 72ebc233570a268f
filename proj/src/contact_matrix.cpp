#include "epifit/contact_matrix.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "epifit/error.hpp"

namespace epifit {
namespace {

std::size_t label_index(const std::vector<std::string>& labels, const std::string& label, const char* what) {
    const auto it = std::find(labels.begin(), labels.end(), label);
    if (it == labels.end()) {
        throw Error("unknown_group", std::string(what) + " label '" + label + "' is not a declared group");
    }
    return static_cast<std::size_t>(it - labels.begin());
}

}  // namespace

ContactMatrix estimate_contact_matrix(const SurveyRecords& records, std::span<const double> population) {
    const std::size_t n = records.groups.size();
    if (n == 0) throw Error("empty_groups", "no contact groups declared");
    if (population.size() != n) {
        throw Error("label_mismatch", "population has " + std::to_string(population.size()) + " entries for " +
                                          std::to_string(n) + " groups");
    }
    for (const auto& [label, _] : records.participants) label_index(records.groups, label, "participant roster");

    std::vector<double> participants(n, 0.0);
    for (std::size_t g = 0; g < n; ++g) {
        const auto it = records.participants.find(records.groups[g]);
        if (it == records.participants.end() || it->second <= 0) {
            throw Error("empty_group", "no survey participants in group '" + records.groups[g] + "'");
        }
        if (!(population[g] > 0.0)) {
            throw Error("bad_population", "population of group '" + records.groups[g] + "' must be positive");
        }
        participants[g] = static_cast<double>(it->second);
    }

    Eigen::MatrixXd totals = Eigen::MatrixXd::Zero(n, n);
    for (const auto& row : records.rows) {
        if (row.count < 0) throw Error("negative_count", "negative contact count in survey");
        const auto i = label_index(records.groups, row.participant_group, "participant");
        const auto j = label_index(records.groups, row.contact_group, "contact");
        totals(i, j) += static_cast<double>(row.count);
    }

    ContactMatrix out;
    out.labels = records.groups;
    out.population.assign(population.begin(), population.end());
    out.rates.resize(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double m_ij = totals(i, j) / participants[i];
            const double m_ji = totals(j, i) / participants[j];
            out.rates(i, j) = (m_ij * population[i] + m_ji * population[j]) / (2.0 * population[i]);
        }
    }
    return out;
}

ContactMatrix aggregate_contact_matrix(const ContactMatrix& fine, const std::map<std::string, std::string>& grouping,
                                       std::span<const double> fine_population) {
    const auto n = static_cast<std::size_t>(fine.size());
    if (fine.labels.size() != n || fine_population.size() != n) {
        throw Error("dimension_mismatch", "fine matrix, labels and populations are not conformable");
    }
    // Coarse labels in order of first appearance along the fine labels.
    std::vector<std::string> coarse;
    std::vector<std::size_t> target(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto it = grouping.find(fine.labels[i]);
        if (it == grouping.end()) throw Error("incomplete_grouping", "no coarse group for '" + fine.labels[i] + "'");
        auto pos = std::find(coarse.begin(), coarse.end(), it->second);
        if (pos == coarse.end()) {
            coarse.push_back(it->second);
            pos = coarse.end() - 1;
        }
        target[i] = static_cast<std::size_t>(pos - coarse.begin());
    }
    for (const auto& [from, _] : grouping) label_index(fine.labels, from, "grouping");

    const std::size_t m = coarse.size();
    std::vector<double> coarse_pop(m, 0.0);
    for (std::size_t i = 0; i < n; ++i) coarse_pop[target[i]] += fine_population[i];

    Eigen::MatrixXd weighted = Eigen::MatrixXd::Zero(m, m);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) weighted(target[i], target[j]) += fine_population[i] * fine.rates(i, j);
    }
    ContactMatrix out;
    out.labels = coarse;
    out.population = coarse_pop;
    out.rates.resize(m, m);
    for (std::size_t a = 0; a < m; ++a) {
        if (!(coarse_pop[a] > 0.0)) {
            throw Error("bad_population", "coarse group '" + coarse[a] + "' has zero total population");
        }
        out.rates.row(a) = weighted.row(a) / coarse_pop[a];
    }
    return out;
}

ContactMatrix row_normalize(const ContactMatrix& c) {
    ContactMatrix out = c;
    for (Eigen::Index i = 0; i < c.size(); ++i) {
        const double s = c.rates.row(i).sum();
        if (!(s > 0.0)) {
            const std::string name = i < static_cast<Eigen::Index>(c.labels.size()) ? c.labels[i] : std::to_string(i);
            throw Error("zero_row", "contact matrix row '" + name + "' has no contacts");
        }
        out.rates.row(i) /= s;
    }
    out.row_normalized = true;
    return out;
}

PowerResult matrix_power_detailed(const ContactMatrix& c, double kappa) {
    if (!(kappa >= 0.0) || !std::isfinite(kappa)) throw Error("bad_kappa", "kappa must be a finite value >= 0");
    const Eigen::Index n = c.size();
    for (Eigen::Index i = 0; i < n; ++i) {
        if (std::abs(c.rates.row(i).sum() - 1.0) > 1e-9 || c.rates.row(i).minCoeff() < 0.0) {
            throw Error("not_row_normalized", "matrix power requires a row-normalised contact matrix");
        }
    }

    PowerResult res;
    res.matrix = c;
    if (kappa == 0.0) {
        res.matrix.rates = Eigen::MatrixXd::Identity(n, n);
        res.untruncated = res.matrix.rates;
        return res;
    }

    Eigen::EigenSolver<Eigen::MatrixXd> solver(c.rates, true);
    if (solver.info() != Eigen::Success) throw Error("eigen_failed", "eigendecomposition of the contact matrix failed");
    const Eigen::MatrixXcd vectors = solver.eigenvectors();
    const Eigen::VectorXcd values = solver.eigenvalues();

    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(vectors);
    const auto& sv = svd.singularValues();
    res.eigenvector_condition = sv(n - 1) > 0.0 ? sv(0) / sv(n - 1) : std::numeric_limits<double>::infinity();
    if (!(res.eigenvector_condition <= kMaxEigenvectorCondition)) {
        throw Error("defective_matrix", "contact matrix is (nearly) defective: eigenvector condition number " +
                                            std::to_string(res.eigenvector_condition));
    }

    Eigen::VectorXcd powered(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        powered(i) = values(i) == std::complex<double>(0.0, 0.0) ? std::complex<double>(0.0, 0.0)
                                                                 : std::pow(values(i), kappa);
    }
    const Eigen::MatrixXcd full = vectors * powered.asDiagonal() * vectors.inverse();
    res.max_imaginary = full.imag().cwiseAbs().maxCoeff();
    if (res.max_imaginary > kMaxImaginaryResidue) {
        throw Error("complex_power", "C^kappa has an imaginary residue of " + std::to_string(res.max_imaginary));
    }
    res.untruncated = full.real();
    res.matrix.rates = res.untruncated;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            if (res.matrix.rates(i, j) < 0.0) {
                res.truncated.push_back({i, j, res.matrix.rates(i, j)});
                res.matrix.rates(i, j) = 0.0;
            }
        }
    }
    return res;
}

double reciprocity_defect(const ContactMatrix& c) {
    const Eigen::Index n = c.size();
    if (static_cast<Eigen::Index>(c.population.size()) != n) {
        throw Error("no_population", "reciprocity needs population sizes");
    }
    double scale = 0.0;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            scale = std::max(scale, std::abs(c.rates(i, j) * c.population[i]));
            worst = std::max(worst, std::abs(c.rates(i, j) * c.population[i] - c.rates(j, i) * c.population[j]));
        }
    }
    return scale > 0.0 ? worst / scale : 0.0;
}

}  // namespace epifit
