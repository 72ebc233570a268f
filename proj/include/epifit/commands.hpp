#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "epifit/fit.hpp"
#include "epifit/io.hpp"
#include "epifit/profile.hpp"

namespace epifit {

/// Run-level options shared by the command-line subcommands. Unset values
/// fall back to the config file's options and then to built-in defaults.
struct CommandOptions {
    std::filesystem::path config;
    std::filesystem::path out = ".";
    std::string model;
    std::optional<std::uint64_t> seed;
    std::vector<double> scale_factors;
    std::optional<std::pair<double, double>> kappa_range;
    std::optional<double> kappa;
    std::optional<std::filesystem::path> fit_file;
    std::optional<std::size_t> horizon;
    std::optional<std::size_t> replicates;
    bool allow_explosive = false;
    bool normalize = false;
    /// Diagnostics (summary echo, truncation events); null silences them.
    std::ostream* log = nullptr;
};

/// Writes fit.json and decomposition.csv.
void run_fit(const CommandOptions& options);
/// Writes profile.json and profile_trace.csv.
void run_profile(const CommandOptions& options);
/// Writes simulated.csv.
void run_simulate(const CommandOptions& options);
/// Writes compare.csv and compare.json.
void run_compare(const CommandOptions& options);
/// Writes contact_matrix.csv.
void run_contacts(const CommandOptions& options);

/// One row of the model comparison table: dim, delta AIC and the tau, rho
/// and kappa estimates with 95% intervals (absent entries are null).
struct ComparisonEntry {
    FitResult fit;
    std::optional<ProfileResult> profile;
    /// Spectral radius of the epidemic coefficient matrix when it does not
    /// vary over time.
    std::optional<double> epidemic_proportion;
};

nlohmann::json comparison_table(const std::vector<ComparisonEntry>& entries, std::size_t reference);
void write_comparison_csv(std::ostream& out, const nlohmann::json& table);

/// Comma-separated list of numbers, e.g. `1.5,2.5`.
std::vector<double> parse_number_list(const std::string& text);

}  // namespace epifit
