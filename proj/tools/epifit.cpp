#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "epifit/commands.hpp"
#include "epifit/error.hpp"

namespace {

struct Flags {
    epifit::CommandOptions options;
    std::string scale_factors;
    std::string kappa_range;
    std::string fit_file;
    double kappa = -1.0;
    std::size_t horizon = 0;
    std::size_t replicates = 0;
    std::uint64_t seed = 0;
};

void add_common(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.options.config, "Run configuration file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", f.options.out, "Output directory")->capture_default_str();
    cmd->add_option("--model", f.options.model, "Model section of the config to use");
    cmd->add_option("--seed", f.seed, "Random seed");
    cmd->add_option("--scale-factors", f.scale_factors, "Per-group under-reporting factors, e.g. 1.5,2.5");
}

epifit::CommandOptions resolve(Flags& f, const CLI::App& cmd) {
    auto& o = f.options;
    o.log = &std::cerr;
    if (cmd.count("--seed")) o.seed = f.seed;
    if (!f.scale_factors.empty()) o.scale_factors = epifit::parse_number_list(f.scale_factors);
    if (!f.kappa_range.empty()) {
        const auto r = epifit::parse_number_list(f.kappa_range);
        if (r.size() != 2 || !(r[0] > 0.0) || !(r[0] < r[1])) {
            throw epifit::Error("bad_kappa_range", "--kappa-range needs lo,hi with 0 < lo < hi");
        }
        o.kappa_range = std::pair{r[0], r[1]};
    }
    if (cmd.get_option_no_throw("--kappa") && cmd.count("--kappa")) o.kappa = f.kappa;
    if (!f.fit_file.empty()) o.fit_file = f.fit_file;
    if (f.horizon > 0) o.horizon = f.horizon;
    if (f.replicates > 0) o.replicates = f.replicates;
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Endemic-epidemic models for age-stratified areal count time series"};
    app.require_subcommand(1);
    Flags f;

    auto* fit = app.add_subcommand("fit", "Fit a model; writes fit.json and decomposition.csv");
    add_common(fit, f);
    fit->add_option("--kappa", f.kappa, "Fix the contact power kappa");
    fit->add_option("--kappa-range", f.kappa_range, "Profile range lo,hi when kappa is profiled");

    auto* profile = app.add_subcommand("profile", "Profile likelihood of kappa; writes profile.json and profile_trace.csv");
    add_common(profile, f);
    profile->add_option("--kappa-range", f.kappa_range, "Search range lo,hi");

    auto* simulate = app.add_subcommand("simulate", "Simulate trajectories; writes simulated.csv");
    add_common(simulate, f);
    simulate->add_option("--fit", f.fit_file, "fit.json with the parameters (default: fit first)");
    simulate->add_option("--kappa", f.kappa, "Contact power kappa");
    simulate->add_option("--horizon", f.horizon, "Weeks to simulate");
    simulate->add_option("--replicates", f.replicates, "Number of trajectories");
    simulate->add_flag("--allow-explosive", f.options.allow_explosive, "Permit a spectral radius >= 1");

    auto* compare = app.add_subcommand("compare", "Fit every [model] section; writes compare.csv and compare.json");
    add_common(compare, f);
    compare->add_option("--kappa-range", f.kappa_range, "Profile range lo,hi for profiled models");

    auto* contacts = app.add_subcommand("contacts", "Estimate or transform a contact matrix; writes contact_matrix.csv");
    add_common(contacts, f);
    contacts->add_option("--kappa", f.kappa, "Raise the row-normalised matrix to this power");
    contacts->add_flag("--normalize", f.options.normalize, "Row-normalise the matrix");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "error: usage: " << e.what() << '\n';
        return 2;
    }

    try {
        const CLI::App* cmd = app.get_subcommands().front();
        const epifit::CommandOptions options = resolve(f, *cmd);
        if (cmd == fit) epifit::run_fit(options);
        else if (cmd == profile) epifit::run_profile(options);
        else if (cmd == simulate) epifit::run_simulate(options);
        else if (cmd == compare) epifit::run_compare(options);
        else epifit::run_contacts(options);
    } catch (const epifit::Error& e) {
        std::cerr << "error: " << e.code() << ": " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
