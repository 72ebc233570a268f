#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace epifit {

/// One survey row: the number of contacts a participant of
/// `participant_group` reported with persons of `contact_group` in a day.
struct SurveyRecord {
    std::string participant_group;
    std::string contact_group;
    long count = 0;
};

struct SurveyRecords {
    std::vector<std::string> groups;
    std::vector<SurveyRecord> rows;
    /// Number of participants per group label.
    std::map<std::string, long> participants;
};

/// Mean contact rates c(g', g): row g' = participant, column g = contact.
struct ContactMatrix {
    Eigen::MatrixXd rates;
    std::vector<std::string> labels;
    /// Population sizes n_g; empty when unknown.
    std::vector<double> population;
    bool row_normalized = false;

    Eigen::Index size() const { return rates.rows(); }
};

/// Reciprocity-corrected contact matrix from survey diaries.
///
/// Uses the population-weighted symmetrisation
///   c(g', g) = (m(g', g) n(g') + m(g, g') n(g)) / (2 n(g'))
/// of the sample means m, so that c(g', g) n(g') = c(g, g') n(g).
ContactMatrix estimate_contact_matrix(const SurveyRecords& records, std::span<const double> population);

/// Collapses fine groups into coarse ones: columns are summed and rows are
/// averaged with weights equal to the fine population sizes.
ContactMatrix aggregate_contact_matrix(const ContactMatrix& fine, const std::map<std::string, std::string>& grouping,
                                       std::span<const double> fine_population);

ContactMatrix row_normalize(const ContactMatrix& c);

struct TruncatedEntry {
    Eigen::Index row = 0;
    Eigen::Index col = 0;
    double value = 0.0;  // value before clamping
};

struct PowerResult {
    ContactMatrix matrix;        // truncated at zero
    Eigen::MatrixXd untruncated; // real part of E diag(lambda^kappa) E^-1
    std::vector<TruncatedEntry> truncated;
    double max_imaginary = 0.0;
    double eigenvector_condition = 1.0;
};

/// Tolerances used by matrix_power.
inline constexpr double kMaxImaginaryResidue = 1e-9;
inline constexpr double kMaxEigenvectorCondition = 1e12;

/// Fractional power C^kappa via the eigendecomposition of a row-normalised
/// C. Negative entries are clamped to zero and reported in `truncated`; rows
/// are not renormalised afterwards.
PowerResult matrix_power_detailed(const ContactMatrix& c, double kappa);

inline ContactMatrix matrix_power(const ContactMatrix& c, double kappa) {
    return matrix_power_detailed(c, kappa).matrix;
}

/// Largest |c(a,b) n(a) - c(b,a) n(b)| relative to the largest c(a,b) n(a).
double reciprocity_defect(const ContactMatrix& c);

}  // namespace epifit
