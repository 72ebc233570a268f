#include "epifit/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "epifit/error.hpp"
#include "epifit/hash.hpp"

namespace epifit {
namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                field += '"';
                ++i;
            } else if (ch == '"') {
                quoted = false;
            } else {
                field += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            out.push_back(trim(field));
            field.clear();
        } else {
            field += ch;
        }
    }
    out.push_back(trim(field));
    return out;
}

double parse_double(const std::string& s, const std::string& where) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw Error("bad_value", "cannot parse number '" + s + "' in " + where);
    }
}

std::int64_t parse_int(const std::string& s, const std::string& where) {
    try {
        std::size_t pos = 0;
        const long long v = std::stoll(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw Error("bad_value", "cannot parse integer '" + s + "' in " + where);
    }
}

bool parse_bool(const std::string& s, const std::string& key) {
    if (s == "true" || s == "yes" || s == "1" || s == "on") return true;
    if (s == "false" || s == "no" || s == "0" || s == "off") return false;
    throw Error("bad_config", "expected a boolean for '" + key + "', got '" + s + "'");
}

std::size_t index_in(const std::vector<std::string>& labels, const std::string& label) {
    return static_cast<std::size_t>(std::find(labels.begin(), labels.end(), label) - labels.begin());
}

std::string location(const CsvTable& t, std::size_t row) {
    return t.source + " line " + std::to_string(row + 2);
}

}  // namespace

// ---------------------------------------------------------------------------
// CSV

std::optional<std::size_t> CsvTable::find_column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
}

std::size_t CsvTable::column(const std::string& name) const {
    const auto c = find_column(name);
    if (!c) throw Error("missing_column", source + " has no column '" + name + "'");
    return *c;
}

CsvTable parse_csv(std::istream& in, const std::string& source) {
    CsvTable t;
    t.source = source;
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        auto fields = split_csv_line(line);
        if (!have_header) {
            t.header = std::move(fields);
            have_header = true;
            continue;
        }
        if (fields.size() != t.header.size()) {
            throw Error("bad_csv", source + ": row " + std::to_string(t.rows.size() + 2) + " has " +
                                       std::to_string(fields.size()) + " fields, header has " +
                                       std::to_string(t.header.size()));
        }
        t.rows.push_back(std::move(fields));
    }
    if (!have_header) throw Error("bad_csv", source + " is empty");
    return t;
}

CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("missing_file", "cannot open " + path.string());
    return parse_csv(in, path.filename().string());
}

// ---------------------------------------------------------------------------
// Data files

StratifiedCounts load_counts(const CsvTable& counts, const CsvTable& population) {
    const auto p_region = population.column("region");
    const auto p_group = population.column("group");
    const auto p_pop = population.column("population");
    const auto p_week = population.find_column("week");

    std::vector<std::string> groups, regions;
    for (const auto& row : population.rows) {
        if (std::find(groups.begin(), groups.end(), row[p_group]) == groups.end()) groups.push_back(row[p_group]);
        if (std::find(regions.begin(), regions.end(), row[p_region]) == regions.end()) regions.push_back(row[p_region]);
    }
    const std::size_t G = groups.size(), R = regions.size();

    const auto c_week = counts.column("week");
    const auto c_region = counts.column("region");
    const auto c_group = counts.column("group");
    const auto c_count = counts.column("count");

    std::set<IsoWeek> week_set;
    for (const auto& row : counts.rows) week_set.insert(IsoWeek::parse(row[c_week]));
    std::vector<IsoWeek> weeks(week_set.begin(), week_set.end());
    StratifiedCounts data(weeks, groups, regions);
    const std::size_t T = weeks.size();
    auto week_index = [&](const IsoWeek& w) {
        return static_cast<std::size_t>(std::lower_bound(weeks.begin(), weeks.end(), w) - weeks.begin());
    };

    std::vector<char> seen(T * G * R, 0);
    for (std::size_t i = 0; i < counts.rows.size(); ++i) {
        const auto& row = counts.rows[i];
        const auto g = index_in(groups, row[c_group]);
        const auto r = index_in(regions, row[c_region]);
        if (g == G) throw Error("label_mismatch", location(counts, i) + ": group '" + row[c_group] + "' has no population");
        if (r == R) {
            throw Error("label_mismatch", location(counts, i) + ": region '" + row[c_region] + "' has no population");
        }
        const auto t = week_index(IsoWeek::parse(row[c_week]));
        const std::size_t cell = (t * G + g) * R + r;
        if (seen[cell]) {
            throw Error("duplicate_cell", location(counts, i) + ": duplicate row for (" + row[c_week] + ", " +
                                              row[c_region] + ", " + row[c_group] + ")");
        }
        seen[cell] = 1;
        const auto value = parse_int(row[c_count], location(counts, i));
        if (value < 0) throw Error("negative_count", location(counts, i) + ": negative count " + row[c_count]);
        data.count(t, g, r) = value;
    }
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t g = 0; g < G; ++g) {
            for (std::size_t r = 0; r < R; ++r) {
                if (!seen[(t * G + g) * R + r]) {
                    throw Error("missing_cell", "no count for (" + weeks[t].to_string() + ", " + regions[r] + ", " +
                                                    groups[g] + ")");
                }
            }
        }
    }

    std::vector<char> pop_seen(p_week ? T * G * R : G * R, 0);
    for (std::size_t i = 0; i < population.rows.size(); ++i) {
        const auto& row = population.rows[i];
        const auto g = index_in(groups, row[p_group]);
        const auto r = index_in(regions, row[p_region]);
        const double value = parse_double(row[p_pop], location(population, i));
        if (!(value > 0.0)) throw Error("bad_population", location(population, i) + ": population must be positive");
        if (p_week) {
            const IsoWeek w = IsoWeek::parse(row[*p_week]);
            if (!week_set.count(w)) continue;
            const auto t = week_index(w);
            char& s = pop_seen[(t * G + g) * R + r];
            if (s) throw Error("duplicate_cell", location(population, i) + ": duplicate population row");
            s = 1;
            data.offset(t, g, r) = value;
        } else {
            char& s = pop_seen[g * R + r];
            if (s) throw Error("duplicate_cell", location(population, i) + ": duplicate population row");
            s = 1;
            for (std::size_t t = 0; t < T; ++t) data.offset(t, g, r) = value;
        }
    }
    if (std::find(pop_seen.begin(), pop_seen.end(), 0) != pop_seen.end()) {
        throw Error("missing_cell", population.source + " does not cover every (region, group) cell");
    }
    data.set_offsets_time_varying(p_week.has_value());
    data.validate();
    return data;
}

RegionGraph load_adjacency(const CsvTable& edges, const std::vector<std::string>& regions) {
    const auto a = edges.column("region_a");
    const auto b = edges.column("region_b");
    std::vector<std::pair<std::string, std::string>> pairs;
    for (const auto& row : edges.rows) pairs.emplace_back(row[a], row[b]);
    return RegionGraph::from_labels(regions, pairs);
}

ContactMatrix load_contact_matrix(const CsvTable& table) {
    const std::size_t n = table.header.size() - 1;
    if (table.header.size() < 2 || table.rows.size() != n) {
        throw Error("bad_matrix", table.source + " is not a square labelled matrix");
    }
    ContactMatrix c;
    c.labels.assign(table.header.begin() + 1, table.header.end());
    c.rates.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        const auto& row = table.rows[i];
        if (row[0] != c.labels[i]) {
            throw Error("bad_matrix", location(table, i) + ": row label '" + row[0] + "' does not match column '" +
                                          c.labels[i] + "'");
        }
        for (std::size_t j = 0; j < n; ++j) {
            const double v = parse_double(row[j + 1], location(table, i));
            if (v < 0.0) throw Error("negative_contact", location(table, i) + ": negative contact rate");
            c.rates(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
        }
    }
    return c;
}

void write_contact_matrix(std::ostream& out, const ContactMatrix& c) {
    out << "group";
    for (const auto& l : c.labels) out << ',' << l;
    out << '\n';
    out << std::setprecision(17);
    for (Eigen::Index i = 0; i < c.size(); ++i) {
        out << c.labels[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < c.size(); ++j) out << ',' << c.rates(i, j);
        out << '\n';
    }
}

SurveyRecords load_survey(const CsvTable& survey, const CsvTable& roster, const std::vector<std::string>& groups) {
    SurveyRecords rec;
    rec.groups = groups;
    const auto pg = survey.column("participant_group");
    const auto cg = survey.column("contact_group");
    const auto cnt = survey.column("count");
    for (std::size_t i = 0; i < survey.rows.size(); ++i) {
        const auto& row = survey.rows[i];
        rec.rows.push_back({row[pg], row[cg], static_cast<long>(parse_int(row[cnt], location(survey, i)))});
    }
    const auto rid = roster.column("participant_id");
    const auto rg = roster.column("group");
    std::set<std::string> ids;
    for (std::size_t i = 0; i < roster.rows.size(); ++i) {
        const auto& row = roster.rows[i];
        if (!ids.insert(row[rid]).second) {
            throw Error("duplicate_participant", location(roster, i) + ": duplicate participant " + row[rid]);
        }
        ++rec.participants[row[rg]];
    }
    return rec;
}

std::vector<std::pair<std::string, std::string>> load_pairs(const CsvTable& table) {
    if (table.header.size() != 2) throw Error("bad_csv", table.source + " must have exactly two columns");
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& row : table.rows) out.emplace_back(row[0], row[1]);
    return out;
}

void write_counts(std::ostream& out, const StratifiedCounts& data, std::optional<std::size_t> replicate,
                  bool header) {
    if (header) out << (replicate ? "replicate," : "") << "week,region,group,count\n";
    for (std::size_t t = 0; t < data.num_times(); ++t) {
        const auto week = data.weeks()[t].to_string();
        for (std::size_t r = 0; r < data.num_regions(); ++r) {
            for (std::size_t g = 0; g < data.num_groups(); ++g) {
                if (replicate) out << *replicate << ',';
                out << week << ',' << data.regions()[r] << ',' << data.groups()[g] << ',' << data.count(t, g, r)
                    << '\n';
            }
        }
    }
}

Dataset load_dataset(const DataPaths& paths, RegionGraph* graph) {
    Dataset data;
    data.counts = load_counts(read_csv(paths.counts), read_csv(paths.population));
    const auto& regions = data.counts.regions();
    RegionGraph g;
    if (paths.adjacency) {
        g = load_adjacency(read_csv(*paths.adjacency), regions);
    } else if (regions.size() > 1) {
        throw Error("missing_adjacency", "an adjacency file is required for more than one region");
    } else {
        g.regions = regions;
    }
    data.orders = adjacency_orders(g);
    if (paths.contacts) {
        ContactMatrix c = load_contact_matrix(read_csv(*paths.contacts));
        std::vector<std::string> a = c.labels, b = data.counts.groups();
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        if (a != b) throw Error("label_mismatch", "contact matrix groups do not match the count groups");
        data.contacts = std::move(c);
    }
    if (graph) *graph = std::move(g);
    return data;
}

std::string dataset_summary(const Dataset& data) {
    const auto& c = data.counts;
    double population = 0.0;
    for (double e : c.offset_slice(0)) population += e;
    std::ostringstream s;
    s << "T=" << c.num_times() << " G=" << c.num_groups() << " R=" << c.num_regions()
      << " cases=" << c.total_count() << " population=" << std::fixed << std::setprecision(0) << population
      << " weeks=" << c.weeks().front().to_string() << ".." << c.weeks().back().to_string();
    return s.str();
}

// ---------------------------------------------------------------------------
// Configuration

bool apply_model_key(ModelSpec& spec, const std::string& key, const std::string& value) {
    auto& en = spec.endemic;
    auto& ep = spec.epidemic;
    auto bad = [&]() { return Error("bad_config", "invalid value '" + value + "' for '" + key + "'"); };
    if (key == "endemic.group_effects") {
        en.group_effects = parse_bool(value, key);
    } else if (key == "endemic.region_effects") {
        en.region_effects = parse_bool(value, key);
    } else if (key == "endemic.christmas") {
        en.christmas = parse_bool(value, key);
    } else if (key == "endemic.seasonality") {
        if (value == "none") en.seasonality = Seasonality::none;
        else if (value == "shared") en.seasonality = Seasonality::shared;
        else if (value == "group") en.seasonality = Seasonality::by_group;
        else throw bad();
    } else if (key == "endemic.period") {
        en.period = parse_double(value, key);
        if (!(en.period > 0.0)) throw bad();
    } else if (key == "endemic.offset") {
        en.offset = parse_bool(value, key);
    } else if (key == "epidemic") {
        if (value == "none") ep.variant = EpidemicVariant::none;
        else if (value == "merged") ep.variant = EpidemicVariant::merged;
        else if (value == "three_component") ep.variant = EpidemicVariant::three_component;
        else throw bad();
    } else if (key == "epidemic.group_effects") {
        ep.group_effects = parse_bool(value, key);
    } else if (key == "epidemic.region_effects") {
        ep.region_effects = parse_bool(value, key);
    } else if (key == "epidemic.population_power") {
        ep.population_power = parse_bool(value, key);
    } else if (key == "epidemic.weights") {
        if (value == "power_law") ep.weights = SpatialWeightVariant::power_law_with_self;
        else if (value == "power_law_no_self") ep.weights = SpatialWeightVariant::power_law_no_self;
        else if (value == "free_orders") ep.weights = SpatialWeightVariant::free_order_weights;
        else throw bad();
    } else if (key == "epidemic.rho_by_group") {
        ep.rho_by_group = parse_bool(value, key);
    } else if (key == "epidemic.contacts") {
        if (value == "matrix") ep.contacts = ContactStructure::matrix;
        else if (value == "power") ep.contacts = ContactStructure::power_fixed;
        else if (value == "profile") ep.contacts = ContactStructure::power_profiled;
        else if (value == "identity") ep.contacts = ContactStructure::identity;
        else if (value == "ones") ep.contacts = ContactStructure::ones;
        else throw bad();
    } else if (key == "epidemic.kappa") {
        ep.kappa = parse_double(value, key);
        if (!(ep.kappa >= 0.0)) throw bad();
    } else if (key == "ar.group_effects") {
        ep.ar_group_effects = parse_bool(value, key);
    } else if (key == "ar.region_effects") {
        ep.ar_region_effects = parse_bool(value, key);
    } else if (key == "overdispersion") {
        if (value == "poisson") spec.overdispersion = Overdispersion::poisson;
        else if (value == "shared") spec.overdispersion = Overdispersion::shared;
        else if (value == "group") spec.overdispersion = Overdispersion::by_group;
        else if (value == "region") spec.overdispersion = Overdispersion::by_region;
        else throw bad();
    } else {
        return false;
    }
    return true;
}

std::string RunConfig::option(const std::string& key, const std::string& fallback) const {
    const auto it = options.find(key);
    return it == options.end() ? fallback : it->second;
}

const ModelSpec& RunConfig::model(const std::string& name) const {
    if (name.empty()) return spec;
    for (const auto& [n, s] : models) {
        if (n == name) return s;
    }
    throw Error("unknown_model", "config has no model section '" + name + "'");
}

RunConfig parse_config(std::istream& in, const std::filesystem::path& base_dir) {
    RunConfig cfg;
    cfg.base_dir = base_dir;
    // Section bodies are applied after the global block so they inherit it.
    std::vector<std::pair<std::string, std::vector<std::pair<std::string, std::string>>>> sections;
    auto path = [&](const std::string& v) {
        std::filesystem::path p(v);
        return p.is_absolute() ? p : base_dir / p;
    };

    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw Error("bad_config", "line " + std::to_string(lineno) + ": unterminated section");
            const std::string inner = trim(line.substr(1, line.size() - 2));
            if (inner.rfind("model", 0) != 0) {
                throw Error("bad_config", "line " + std::to_string(lineno) + ": unknown section '" + inner + "'");
            }
            const std::string name = trim(inner.substr(5));
            if (name.empty()) throw Error("bad_config", "line " + std::to_string(lineno) + ": model section needs a name");
            for (const auto& s : sections) {
                if (s.first == name) throw Error("bad_config", "duplicate model section '" + name + "'");
            }
            sections.push_back({name, {}});
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw Error("bad_config", "line " + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!sections.empty()) {
            sections.back().second.emplace_back(key, value);
            continue;
        }
        if (apply_model_key(cfg.spec, key, value)) continue;
        if (key == "counts") cfg.data.counts = path(value);
        else if (key == "population") cfg.data.population = path(value);
        else if (key == "adjacency") cfg.data.adjacency = path(value);
        else if (key == "contacts") cfg.data.contacts = path(value);
        else if (key == "survey") cfg.survey = path(value);
        else if (key == "roster") cfg.roster = path(value);
        else if (key == "survey.population") cfg.survey_population = path(value);
        else if (key == "grouping") cfg.grouping = path(value);
        else if (key == "reference") cfg.reference = value;
        else cfg.options[key] = value;
    }
    for (auto& [name, body] : sections) {
        ModelSpec s = cfg.spec;
        for (const auto& [key, value] : body) {
            if (!apply_model_key(s, key, value)) {
                throw Error("bad_config", "key '" + key + "' is not allowed in model section '" + name + "'");
            }
        }
        cfg.models.emplace_back(name, s);
    }
    return cfg;
}

RunConfig read_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("missing_file", "cannot open config " + path.string());
    return parse_config(in, path.parent_path());
}

// ---------------------------------------------------------------------------
// JSON

nlohmann::json spec_to_json(const ModelSpec& spec) {
    using nlohmann::json;
    const auto& en = spec.endemic;
    const auto& ep = spec.epidemic;
    static const char* seasonality[] = {"none", "shared", "group"};
    static const char* variant[] = {"none", "merged", "three_component"};
    static const char* weights[] = {"power_law", "power_law_no_self", "free_orders"};
    static const char* contacts[] = {"matrix", "power", "profile", "identity", "ones"};
    static const char* overdispersion[] = {"poisson", "shared", "group", "region"};
    json j;
    j["endemic"] = {{"group_effects", en.group_effects},
                    {"region_effects", en.region_effects},
                    {"christmas", en.christmas},
                    {"seasonality", seasonality[static_cast<int>(en.seasonality)]},
                    {"period", en.period},
                    {"offset", en.offset}};
    j["epidemic"] = {{"variant", variant[static_cast<int>(ep.variant)]},
                     {"group_effects", ep.group_effects},
                     {"region_effects", ep.region_effects},
                     {"population_power", ep.population_power},
                     {"weights", weights[static_cast<int>(ep.weights)]},
                     {"rho_by_group", ep.rho_by_group},
                     {"contacts", contacts[static_cast<int>(ep.contacts)]},
                     {"kappa", ep.kappa},
                     {"ar_group_effects", ep.ar_group_effects},
                     {"ar_region_effects", ep.ar_region_effects}};
    j["overdispersion"] = overdispersion[static_cast<int>(spec.overdispersion)];
    return j;
}

std::string spec_fingerprint(const ModelSpec& spec) {
    ModelSpec s = spec;
    // The profiled kappa value is a result, not part of the model structure.
    if (s.kappa_profiled()) s.epidemic.kappa = 0.0;
    return fnv1a_hex(spec_to_json(s).dump());
}

nlohmann::json fit_to_json(const FitResult& fit, const Dataset& data) {
    using nlohmann::json;
    json j;
    j["label"] = fit.label;
    j["spec"] = spec_to_json(fit.spec);
    j["spec_fingerprint"] = spec_fingerprint(fit.spec);
    j["data_fingerprint"] = fit.data_fingerprint;
    const auto& c = data.counts;
    j["data"] = {{"first_week", c.weeks().front().to_string()},
                 {"last_week", c.weeks().back().to_string()},
                 {"times", c.num_times()},
                 {"groups", c.groups()},
                 {"regions", c.regions()}};
    j["kappa"] = fit.kappa ? json(*fit.kappa) : json(nullptr);
    j["loglik"] = fit.loglik;
    j["aic"] = fit.aic;
    j["dim"] = fit.dim;
    j["convergence"] = {{"converged", fit.converged},
                        {"criterion", fit.criterion},
                        {"iterations", fit.iterations},
                        {"gradient_max_norm", fit.gradient_max_norm}};
    j["covariance_available"] = fit.covariance_available;
    const Eigen::VectorXd se = fit.standard_errors();
    const double z = normal_quantile(0.95);
    json params = json::array();
    for (std::size_t i = 0; i < fit.layout.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        const bool log_scale = fit.layout[i].transform == Transform::log;
        const double est = fit.estimates(k);
        json p = {{"name", fit.layout[i].name},
                  {"transform", log_scale ? "log" : "identity"},
                  {"estimate", est},
                  {"value", log_scale ? std::exp(est) : est}};
        if (fit.covariance_available) {
            const double lo = est - z * se(k), hi = est + z * se(k);
            p["se"] = se(k);
            p["ci_lower"] = log_scale ? std::exp(lo) : lo;
            p["ci_upper"] = log_scale ? std::exp(hi) : hi;
        } else {
            p["se"] = nullptr;
        }
        params.push_back(std::move(p));
    }
    j["parameters"] = std::move(params);
    if (fit.spec.has_epidemic() && !(fit.spec.epidemic.population_power && c.offsets_time_varying())) {
        const Model model(fit.spec, data);
        j["epidemic_proportion"] = epidemic_proportion(model, fit.estimates);
        json trunc = json::array();
        for (const auto& t : model.truncations()) {
            trunc.push_back({{"from", c.groups()[static_cast<std::size_t>(t.row)]},
                             {"to", c.groups()[static_cast<std::size_t>(t.col)]},
                             {"value", t.value}});
        }
        j["contact_truncations"] = std::move(trunc);
    }
    if (fit.spec.kappa_profiled()) {
        j["note"] = "Wald intervals are conditional on the profiled kappa and do not include its uncertainty.";
    }
    return j;
}

nlohmann::json profile_to_json(const ProfileResult& profile, const Dataset& data) {
    using nlohmann::json;
    json j;
    j["kappa_hat"] = profile.kappa_hat;
    j["loglik_max"] = profile.loglik_max;
    j["cutoff"] = profile.cutoff;
    j["ci"] = {{"lower", profile.ci.lower},
               {"upper", profile.ci.upper},
               {"lower_open", profile.lower_open},
               {"upper_open", profile.upper_open}};
    j["wald"] = {{"log_kappa_se", profile.log_kappa_se},
                 {"lower", profile.wald.lower},
                 {"upper", profile.wald.upper}};
    json trace = json::array();
    for (const auto& p : profile.trace) trace.push_back({{"kappa", p.kappa}, {"loglik", p.loglik}});
    j["trace"] = std::move(trace);
    j["fit"] = fit_to_json(profile.fit, data);
    return j;
}

Eigen::VectorXd params_from_json(const nlohmann::json& fit, const ParameterLayout& layout) {
    Eigen::VectorXd theta(static_cast<Eigen::Index>(layout.size()));
    std::vector<bool> seen(layout.size(), false);
    for (const auto& p : fit.at("parameters")) {
        const auto i = layout.find(p.at("name").get<std::string>());
        if (!i) throw Error("bad_fit_file", "fit has unknown parameter '" + p.at("name").get<std::string>() + "'");
        theta(static_cast<Eigen::Index>(*i)) = p.at("estimate").get<double>();
        seen[*i] = true;
    }
    for (std::size_t i = 0; i < layout.size(); ++i) {
        if (!seen[i]) throw Error("bad_fit_file", "fit has no value for '" + layout[i].name + "'");
    }
    return theta;
}

void write_decomposition(std::ostream& out, const Dataset& data, const std::vector<DecompositionRow>& rows) {
    out << "t,cell,component,value\n" << std::setprecision(12);
    for (const auto& row : rows) {
        const auto week = data.counts.weeks()[row.t].to_string();
        out << week << ',' << row.cell << ",endemic," << row.endemic << '\n';
        out << week << ',' << row.cell << ",within_group," << row.within_group << '\n';
        out << week << ',' << row.cell << ",between_groups," << row.between_groups << '\n';
    }
}

}  // namespace epifit
