#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include "epifit/io.hpp"
#include "epifit/model.hpp"

namespace fixtures {

namespace fs = std::filesystem;

/// Fresh scratch directory under the system temp dir.
inline fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("epifit_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

inline void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

inline std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Writes counts.csv, population.csv, adjacency.csv (path graph over the
/// regions) and contacts.csv for a dataset with constant offsets.
inline void write_dataset(const fs::path& dir, const epifit::Dataset& d) {
    const auto& y = d.counts;
    {
        std::ofstream out(dir / "counts.csv");
        epifit::write_counts(out, y);
    }
    std::ostringstream pop;
    pop << std::setprecision(17) << "region,group,population\n";
    for (std::size_t r = 0; r < y.num_regions(); ++r)
        for (std::size_t g = 0; g < y.num_groups(); ++g)
            pop << y.regions()[r] << ',' << y.groups()[g] << ',' << y.offset(0, g, r) << '\n';
    write_text(dir / "population.csv", pop.str());
    std::ostringstream adj;
    adj << "region_a,region_b\n";
    for (std::size_t a = 0; a < y.num_regions(); ++a)
        for (std::size_t b = a + 1; b < y.num_regions(); ++b)
            if (d.orders(a, b) == 1) adj << y.regions()[a] << ',' << y.regions()[b] << '\n';
    write_text(dir / "adjacency.csv", adj.str());
    if (d.contacts) {
        std::ofstream out(dir / "contacts.csv");
        epifit::write_contact_matrix(out, *d.contacts);
    }
}

inline std::string data_keys() {
    return "counts = counts.csv\npopulation = population.csv\nadjacency = adjacency.csv\ncontacts = contacts.csv\n";
}

#ifdef EPIFIT_CLI
/// Runs the command-line tool and returns its exit status; stderr goes to
/// `log`.
inline int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string("\"") + EPIFIT_CLI + "\" " + args + " > /dev/null 2> \"" + log.string() + "\"";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}
#endif

}  // namespace fixtures
