#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "epifit/contact_matrix.hpp"
#include "epifit/fit.hpp"
#include "epifit/model.hpp"
#include "epifit/profile.hpp"
#include "epifit/simulation.hpp"
#include "epifit/spatial_weights.hpp"

namespace epifit {

// ---------------------------------------------------------------------------
// CSV

struct CsvTable {
    std::string source;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::optional<std::size_t> find_column(const std::string& name) const;
    std::size_t column(const std::string& name) const;
};

CsvTable parse_csv(std::istream& in, const std::string& source);
CsvTable read_csv(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Data files

/// Counts (`week,region,group,count`) with populations
/// (`region,group,population`, optionally with a `week` column). Group and
/// region order follow their first appearance in the population file.
StratifiedCounts load_counts(const CsvTable& counts, const CsvTable& population);

/// Adjacency edge list `region_a,region_b`.
RegionGraph load_adjacency(const CsvTable& edges, const std::vector<std::string>& regions);

/// Square matrix CSV: header row and first column carry the labels.
ContactMatrix load_contact_matrix(const CsvTable& table);
void write_contact_matrix(std::ostream& out, const ContactMatrix& c);

/// Survey rows `participant_group,contact_group,count` plus the roster
/// `participant_id,group`; `groups` declares the group set and order.
SurveyRecords load_survey(const CsvTable& survey, const CsvTable& roster, const std::vector<std::string>& groups);

/// Two-column CSV (`label,value`) read as ordered pairs.
std::vector<std::pair<std::string, std::string>> load_pairs(const CsvTable& table);

/// Long-format counts; with `replicate` set, a leading replicate column.
void write_counts(std::ostream& out, const StratifiedCounts& data, std::optional<std::size_t> replicate = {},
                  bool header = true);

struct DataPaths {
    std::filesystem::path counts;
    std::filesystem::path population;
    std::optional<std::filesystem::path> adjacency;
    std::optional<std::filesystem::path> contacts;
};

/// Loads and cross-validates counts, populations, adjacency and contacts.
Dataset load_dataset(const DataPaths& paths, RegionGraph* graph = nullptr);

/// One-line summary: T, G, R, total cases and total population.
std::string dataset_summary(const Dataset& data);

// ---------------------------------------------------------------------------
// Configuration

/// Applies one model key (e.g. `epidemic.contacts = power`) to a spec.
/// Returns false for keys that are not model keys.
bool apply_model_key(ModelSpec& spec, const std::string& key, const std::string& value);

struct RunConfig {
    std::filesystem::path base_dir;
    DataPaths data;
    std::optional<std::filesystem::path> survey, roster, survey_population, grouping;
    ModelSpec spec;
    /// Named model sections, in file order.
    std::vector<std::pair<std::string, ModelSpec>> models;
    std::string reference;
    std::map<std::string, std::string> options;

    std::string option(const std::string& key, const std::string& fallback) const;
    const ModelSpec& model(const std::string& name) const;
};

/// Parses `key = value` lines with `#` comments and `[model NAME]`
/// sections. Relative paths resolve against base_dir.
RunConfig parse_config(std::istream& in, const std::filesystem::path& base_dir);
RunConfig read_config(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// JSON

nlohmann::json spec_to_json(const ModelSpec& spec);
std::string spec_fingerprint(const ModelSpec& spec);

nlohmann::json fit_to_json(const FitResult& fit, const Dataset& data);
nlohmann::json profile_to_json(const ProfileResult& profile, const Dataset& data);

/// Parameter estimates (transformed scale) read back from fit JSON, in the
/// order of `layout`.
Eigen::VectorXd params_from_json(const nlohmann::json& fit, const ParameterLayout& layout);

void write_decomposition(std::ostream& out, const Dataset& data, const std::vector<DecompositionRow>& rows);

}  // namespace epifit
