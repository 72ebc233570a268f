#include "epifit/commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "epifit/error.hpp"
#include "epifit/simulation.hpp"

namespace epifit {
namespace {

struct Loaded {
    RunConfig config;
    Dataset data;
};

std::ofstream open_output(const std::filesystem::path& dir, const std::string& name) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    std::ofstream out(dir / name);
    if (!out) throw Error("write_failed", "cannot write " + (dir / name).string());
    return out;
}

void write_json(const std::filesystem::path& dir, const std::string& name, const nlohmann::json& j) {
    auto out = open_output(dir, name);
    out << j.dump(2) << '\n';
}

double option_number(const RunConfig& cfg, const std::string& key, double fallback) {
    const std::string v = cfg.option(key, "");
    if (v.empty()) return fallback;
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos == v.size()) return x;
    } catch (const std::exception&) {
    }
    throw Error("bad_config", "option '" + key + "' is not a number: '" + v + "'");
}

std::size_t option_count(const RunConfig& cfg, const std::string& key, std::size_t fallback) {
    const double x = option_number(cfg, key, static_cast<double>(fallback));
    if (!(x >= 0.0) || x != std::floor(x)) throw Error("bad_config", "option '" + key + "' must be a whole number");
    return static_cast<std::size_t>(x);
}

Loaded load(const CommandOptions& opt) {
    Loaded l{read_config(opt.config), {}};
    if (l.config.data.counts.empty() || l.config.data.population.empty()) {
        throw Error("bad_config", "config must name the counts and population files");
    }
    l.data = load_dataset(l.config.data);
    std::vector<double> factors = opt.scale_factors;
    if (factors.empty()) {
        const std::string s = l.config.option("scale_factors", "");
        if (!s.empty()) factors = parse_number_list(s);
    }
    if (!factors.empty()) l.data.counts = scale_counts(l.data.counts, factors);
    if (opt.log) *opt.log << "data: " << dataset_summary(l.data) << '\n';
    return l;
}

ModelSpec resolve_spec(const CommandOptions& opt, const RunConfig& cfg) {
    ModelSpec spec = cfg.model(opt.model);
    if (opt.kappa) {
        if (!(*opt.kappa >= 0.0)) throw Error("bad_kappa", "kappa must be nonnegative");
        spec.epidemic.kappa = *opt.kappa;
        if (spec.epidemic.contacts == ContactStructure::power_profiled) {
            spec.epidemic.contacts = ContactStructure::power_fixed;
        }
    }
    return spec;
}

ProfileOptions profile_options(const CommandOptions& opt, const RunConfig& cfg) {
    ProfileOptions p;
    p.lower = option_number(cfg, "kappa.lower", p.lower);
    p.upper = option_number(cfg, "kappa.upper", p.upper);
    if (opt.kappa_range) std::tie(p.lower, p.upper) = *opt.kappa_range;
    p.grid_points = static_cast<int>(option_count(cfg, "profile.grid_points", static_cast<std::size_t>(p.grid_points)));
    const std::string search = cfg.option("profile.search", "golden");
    if (search == "grid") p.search = ProfileSearch::grid;
    else if (search == "golden") p.search = ProfileSearch::golden_section;
    else throw Error("bad_config", "profile.search must be grid or golden");
    return p;
}

Aggregation decomposition_aggregation(const RunConfig& cfg) {
    const std::string a = cfg.option("decomposition", "group");
    if (a == "group") return Aggregation::by_group;
    if (a == "region") return Aggregation::by_region;
    if (a == "total") return Aggregation::total;
    throw Error("bad_config", "decomposition must be group, region or total");
}

void log_truncations(const CommandOptions& opt, const std::vector<TruncatedEntry>& entries,
                     const std::vector<std::string>& labels) {
    if (!opt.log) return;
    for (const auto& t : entries) {
        *opt.log << "truncated C^kappa entry (" << labels[static_cast<std::size_t>(t.row)] << ", "
                 << labels[static_cast<std::size_t>(t.col)] << ") = " << t.value << " to 0\n";
    }
}

// Fit of one spec; a profiled kappa is resolved by the profile likelihood.
ComparisonEntry fit_entry(const ModelSpec& spec, const Dataset& data, const ProfileOptions& popt,
                          const std::string& label) {
    ComparisonEntry e;
    if (spec.kappa_profiled()) {
        e.profile = profile_kappa(spec, data, popt);
        e.fit = e.profile->fit;
    } else {
        e.fit = fit(spec, data);
    }
    e.fit.label = label;
    if (spec.has_epidemic() && !(spec.epidemic.population_power && data.counts.offsets_time_varying())) {
        e.epidemic_proportion = epidemic_proportion(Model(e.fit.spec, data), e.fit.estimates);
    }
    return e;
}

void write_fit_outputs(const CommandOptions& opt, const RunConfig& cfg, const Dataset& data, const FitResult& f) {
    write_json(opt.out, "fit.json", fit_to_json(f, data));
    const Model model(f.spec, data);
    log_truncations(opt, model.truncations(), data.counts.groups());
    auto out = open_output(opt.out, "decomposition.csv");
    write_decomposition(out, data, mean_decomposition(model, f.estimates, decomposition_aggregation(cfg)));
}

nlohmann::json estimate_with_ci(const FitResult& f, const std::string& name) {
    const auto i = f.layout.find(name);
    if (!i) return nullptr;
    const double est = f.estimates(static_cast<Eigen::Index>(*i));
    nlohmann::json j = {{"estimate", f.layout[*i].transform == Transform::log ? std::exp(est) : est}};
    if (f.covariance_available) {
        const Interval ci = wald_ci(f, name);
        j["lower"] = ci.lower;
        j["upper"] = ci.upper;
    } else {
        j["lower"] = nullptr;
        j["upper"] = nullptr;
    }
    return j;
}

std::string csv_number(const nlohmann::json& v) {
    if (v.is_null()) return "";
    std::ostringstream s;
    s << std::setprecision(10) << v.get<double>();
    return s.str();
}

}  // namespace

std::vector<double> parse_number_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream s(text);
    std::string item;
    while (std::getline(s, item, ',')) {
        try {
            std::size_t pos = 0;
            out.push_back(std::stod(item, &pos));
            while (pos < item.size() && std::isspace(static_cast<unsigned char>(item[pos]))) ++pos;
            if (pos != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw Error("bad_value", "cannot parse number list '" + text + "'");
        }
    }
    if (out.empty()) throw Error("bad_value", "empty number list");
    return out;
}

nlohmann::json comparison_table(const std::vector<ComparisonEntry>& entries, std::size_t reference) {
    std::vector<FitResult> fits;
    for (const auto& e : entries) fits.push_back(e.fit);
    const auto rows = compare_models(fits, reference);
    nlohmann::json table = nlohmann::json::array();
    for (std::size_t k = 0; k < entries.size(); ++k) {
        const auto& f = entries[k].fit;
        nlohmann::json row = {{"model", rows[k].label},
                              {"dim", rows[k].dim},
                              {"loglik", rows[k].loglik},
                              {"aic", rows[k].aic},
                              {"delta_aic", rows[k].delta_aic},
                              {"tau", estimate_with_ci(f, "epi.tau")},
                              {"rho", estimate_with_ci(f, "rho")},
                              {"kappa", nullptr},
                              {"epidemic_proportion", nullptr}};
        if (entries[k].epidemic_proportion) row["epidemic_proportion"] = *entries[k].epidemic_proportion;
        if (const auto& p = entries[k].profile) {
            row["kappa"] = {{"estimate", p->kappa_hat},
                            {"lower", p->wald.lower},
                            {"upper", p->wald.upper},
                            {"profile_lower", p->ci.lower},
                            {"profile_upper", p->ci.upper}};
        } else if (f.kappa) {
            row["kappa"] = {{"estimate", *f.kappa}, {"lower", nullptr}, {"upper", nullptr}};
        }
        table.push_back(std::move(row));
    }
    return table;
}

void write_comparison_csv(std::ostream& out, const nlohmann::json& table) {
    out << "model,dim,loglik,aic,delta_aic,tau,tau_lower,tau_upper,rho,rho_lower,rho_upper,"
           "kappa,kappa_lower,kappa_upper,kappa_profile_lower,kappa_profile_upper\n";
    auto field = [](const nlohmann::json& obj, const char* key) {
        return obj.is_object() && obj.contains(key) ? csv_number(obj[key]) : std::string();
    };
    for (const auto& row : table) {
        out << row["model"].get<std::string>() << ',' << row["dim"].get<std::size_t>() << ','
            << csv_number(row["loglik"]) << ',' << csv_number(row["aic"]) << ',' << csv_number(row["delta_aic"]);
        for (const char* p : {"tau", "rho"}) {
            out << ',' << field(row[p], "estimate") << ',' << field(row[p], "lower") << ',' << field(row[p], "upper");
        }
        const auto& k = row["kappa"];
        out << ',' << field(k, "estimate") << ',' << field(k, "lower") << ',' << field(k, "upper") << ','
            << field(k, "profile_lower") << ',' << field(k, "profile_upper") << '\n';
    }
}

void run_fit(const CommandOptions& opt) {
    const Loaded l = load(opt);
    const ModelSpec spec = resolve_spec(opt, l.config);
    ComparisonEntry e = fit_entry(spec, l.data, profile_options(opt, l.config), opt.model.empty() ? "model" : opt.model);
    if (opt.log) {
        *opt.log << "fit: loglik=" << std::setprecision(10) << e.fit.loglik << " aic=" << e.fit.aic
                 << " dim=" << e.fit.dim << '\n';
    }
    write_fit_outputs(opt, l.config, l.data, e.fit);
}

void run_profile(const CommandOptions& opt) {
    const Loaded l = load(opt);
    ModelSpec spec = resolve_spec(opt, l.config);
    if (!spec.has_epidemic()) throw Error("bad_spec", "profiling kappa needs an epidemic component");
    spec.epidemic.contacts = ContactStructure::power_profiled;
    const ProfileResult p = profile_kappa(spec, l.data, profile_options(opt, l.config));
    if (opt.log) {
        *opt.log << "profile: kappa=" << std::setprecision(6) << p.kappa_hat << " (" << p.ci.lower << ", "
                 << p.ci.upper << ")\n";
    }
    write_json(opt.out, "profile.json", profile_to_json(p, l.data));
    auto out = open_output(opt.out, "profile_trace.csv");
    out << "kappa,loglik,deviance\n" << std::setprecision(12);
    for (const auto& pt : p.trace) {
        out << pt.kappa << ',' << pt.loglik << ',' << 2.0 * (p.loglik_max - pt.loglik) << '\n';
    }
}

void run_simulate(const CommandOptions& opt) {
    const Loaded l = load(opt);
    ModelSpec spec = resolve_spec(opt, l.config);
    Eigen::VectorXd theta;
    std::optional<std::filesystem::path> fit_path = opt.fit_file;
    if (!fit_path) {
        const std::string p = l.config.option("fit", "");
        if (!p.empty()) fit_path = std::filesystem::path(p).is_absolute() ? std::filesystem::path(p) : l.config.base_dir / p;
    }
    if (spec.kappa_profiled()) spec.epidemic.contacts = ContactStructure::power_fixed;
    if (fit_path) {
        std::ifstream in(*fit_path);
        if (!in) throw Error("missing_file", "cannot open fit file " + fit_path->string());
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& ex) {
            throw Error("bad_fit_file", fit_path->string() + ": " + ex.what());
        }
        if (!opt.kappa && j.contains("kappa") && !j["kappa"].is_null()) spec.epidemic.kappa = j["kappa"].get<double>();
        theta = params_from_json(j, Model(spec, l.data).layout());
    } else {
        if (opt.log) *opt.log << "simulate: no fit file given, fitting the model first\n";
        const ComparisonEntry e = fit_entry(resolve_spec(opt, l.config), l.data, profile_options(opt, l.config), "");
        if (e.fit.kappa) spec.epidemic.kappa = *e.fit.kappa;
        theta = e.fit.estimates;
    }

    SimulationConfig sc;
    sc.spec = spec;
    sc.params = theta;
    sc.base = &l.data;
    sc.horizon = opt.horizon ? *opt.horizon : option_count(l.config, "horizon", 52);
    sc.replicates = opt.replicates ? *opt.replicates : option_count(l.config, "replicates", 1);
    sc.seed = opt.seed ? *opt.seed : option_count(l.config, "seed", 1);
    sc.allow_explosive = opt.allow_explosive || l.config.option("allow_explosive", "false") == "true";
    sc.count_cap = option_number(l.config, "count_cap", sc.count_cap);
    const auto runs = simulate(sc);
    auto out = open_output(opt.out, "simulated.csv");
    for (std::size_t rep = 0; rep < runs.size(); ++rep) write_counts(out, runs[rep], rep, rep == 0);
    if (opt.log) *opt.log << "simulate: " << runs.size() << " replicates of " << sc.horizon << " weeks\n";
}

void run_compare(const CommandOptions& opt) {
    const Loaded l = load(opt);
    if (l.config.models.empty()) throw Error("no_models", "compare needs [model NAME] sections in the config");
    std::size_t reference = 0;
    if (!l.config.reference.empty()) {
        reference = l.config.models.size();
        for (std::size_t k = 0; k < l.config.models.size(); ++k) {
            if (l.config.models[k].first == l.config.reference) reference = k;
        }
        if (reference == l.config.models.size()) {
            throw Error("unknown_model", "reference model '" + l.config.reference + "' is not defined");
        }
    }
    const ProfileOptions popt = profile_options(opt, l.config);
    std::vector<ComparisonEntry> entries;
    for (const auto& [name, spec] : l.config.models) {
        if (opt.log) *opt.log << "compare: fitting " << name << '\n';
        entries.push_back(fit_entry(spec, l.data, popt, name));
    }
    const nlohmann::json table = comparison_table(entries, reference);
    nlohmann::json doc = {{"reference", entries[reference].fit.label},
                          {"data_fingerprint", entries[reference].fit.data_fingerprint},
                          {"models", table}};
    write_json(opt.out, "compare.json", doc);
    auto out = open_output(opt.out, "compare.csv");
    write_comparison_csv(out, table);
}

void run_contacts(const CommandOptions& opt) {
    const RunConfig cfg = read_config(opt.config);
    std::optional<std::vector<std::pair<std::string, std::string>>> population;
    if (cfg.survey_population) population = load_pairs(read_csv(*cfg.survey_population));
    auto population_for = [&](const std::vector<std::string>& labels) {
        if (!population) throw Error("bad_config", "survey.population is required here");
        std::vector<double> n;
        for (const auto& label : labels) {
            const auto it = std::find_if(population->begin(), population->end(),
                                         [&](const auto& p) { return p.first == label; });
            if (it == population->end()) throw Error("label_mismatch", "no population for group '" + label + "'");
            n.push_back(std::stod(it->second));
        }
        return n;
    };

    ContactMatrix c;
    if (cfg.survey) {
        if (!cfg.roster) throw Error("bad_config", "a survey needs a participant roster");
        if (!population) throw Error("bad_config", "a survey needs survey.population");
        std::vector<std::string> groups;
        for (const auto& p : *population) groups.push_back(p.first);
        c = estimate_contact_matrix(load_survey(read_csv(*cfg.survey), read_csv(*cfg.roster), groups),
                                    population_for(groups));
    } else if (cfg.data.contacts) {
        c = load_contact_matrix(read_csv(*cfg.data.contacts));
        if (population) c.population = population_for(c.labels);
    } else {
        throw Error("bad_config", "contacts needs either a survey or a contacts matrix file");
    }
    if (cfg.grouping) {
        std::map<std::string, std::string> grouping;
        for (const auto& [fine, coarse] : load_pairs(read_csv(*cfg.grouping))) grouping[fine] = coarse;
        c = aggregate_contact_matrix(c, grouping, population_for(c.labels));
    }
    std::optional<double> kappa = opt.kappa;
    if (!kappa && !cfg.option("kappa", "").empty()) kappa = option_number(cfg, "kappa", 1.0);
    const bool normalize = opt.normalize || kappa || cfg.option("normalize", "false") == "true";
    if (normalize) c = row_normalize(c);
    if (kappa) {
        const PowerResult p = matrix_power_detailed(c, *kappa);
        log_truncations(opt, p.truncated, c.labels);
        c = p.matrix;
    }
    auto out = open_output(opt.out, "contact_matrix.csv");
    write_contact_matrix(out, c);
}

}  // namespace epifit
