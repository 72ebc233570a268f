#include "epifit/counts.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <regex>

#include "epifit/error.hpp"
#include "epifit/hash.hpp"

namespace epifit {

int iso_weeks_in_year(int year) {
    using namespace std::chrono;
    // A year has 53 ISO weeks iff it starts on a Thursday, or is a leap
    // year starting on a Wednesday.
    const weekday jan1{sys_days{std::chrono::year{year} / January / 1}};
    if (jan1 == Thursday) return 53;
    if (jan1 == Wednesday && std::chrono::year{year}.is_leap()) return 53;
    return 52;
}

IsoWeek IsoWeek::parse(const std::string& label) {
    static const std::regex pattern(R"(^\s*(\d{4})-W(\d{1,2})\s*$)");
    std::smatch m;
    if (!std::regex_match(label, m, pattern)) {
        throw Error("bad_week", "cannot parse ISO week label '" + label + "' (expected e.g. 2011-W27)");
    }
    IsoWeek w{std::stoi(m[1].str()), std::stoi(m[2].str())};
    if (w.week < 1 || w.week > iso_weeks_in_year(w.year)) {
        throw Error("bad_week", "week out of range in '" + label + "'");
    }
    return w;
}

std::string IsoWeek::to_string() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-W%02d", year, week);
    return buf;
}

IsoWeek IsoWeek::next() const {
    if (week < iso_weeks_in_year(year)) return {year, week + 1};
    return {year + 1, 1};
}

std::vector<IsoWeek> consecutive_weeks(IsoWeek first, std::size_t n) {
    std::vector<IsoWeek> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(first);
        first = first.next();
    }
    return out;
}

StratifiedCounts::StratifiedCounts(std::vector<IsoWeek> weeks, std::vector<std::string> groups,
                                   std::vector<std::string> regions)
    : weeks_(std::move(weeks)), groups_(std::move(groups)), regions_(std::move(regions)) {
    const std::size_t n = weeks_.size() * groups_.size() * regions_.size();
    counts_.assign(n, 0);
    offsets_.assign(n, 1.0);
}

void StratifiedCounts::set_constant_offsets(std::span<const double> population_by_cell) {
    if (population_by_cell.size() != num_cells()) {
        throw Error("dimension_mismatch", "population vector does not match the group x region lattice");
    }
    for (std::size_t t = 0; t < num_times(); ++t) {
        std::copy(population_by_cell.begin(), population_by_cell.end(), offsets_.begin() + t * num_cells());
    }
    offsets_time_varying_ = false;
}

std::int64_t StratifiedCounts::total_count() const {
    return std::accumulate(counts_.begin(), counts_.end(), std::int64_t{0});
}

void StratifiedCounts::validate() const {
    if (num_times() < 2) throw Error("too_short", "at least two time points are required");
    if (groups_.empty() || regions_.empty()) throw Error("empty_lattice", "no groups or regions");
    for (std::size_t t = 0; t < num_times(); ++t) {
        for (std::size_t g = 0; g < num_groups(); ++g) {
            for (std::size_t r = 0; r < num_regions(); ++r) {
                if (count(t, g, r) < 0) {
                    throw Error("negative_count", "negative count at " + weeks_[t].to_string() + ", group " +
                                                      groups_[g] + ", region " + regions_[r]);
                }
                const double e = offset(t, g, r);
                if (!(e > 0.0) || !std::isfinite(e)) {
                    throw Error("bad_population",
                                "population must be positive for group " + groups_[g] + ", region " + regions_[r]);
                }
            }
        }
    }
    for (std::size_t t = 1; t < num_times(); ++t) {
        if (weeks_[t] != weeks_[t - 1].next()) {
            throw Error("week_gap", "weeks are not consecutive between " + weeks_[t - 1].to_string() + " and " +
                                        weeks_[t].to_string());
        }
    }
}

std::string StratifiedCounts::fingerprint() const {
    Fnv1a h;
    h.update_u64(num_times());
    h.update_u64(num_groups());
    h.update_u64(num_regions());
    for (const auto& w : weeks_) h.update(w.to_string());
    for (const auto& s : groups_) h.update(s);
    for (const auto& s : regions_) h.update(s);
    for (auto c : counts_) h.update_u64(static_cast<std::uint64_t>(c));
    return h.hex();
}

StratifiedCounts scale_counts(const StratifiedCounts& data, std::span<const double> factors) {
    if (factors.size() != data.num_groups()) {
        throw Error("dimension_mismatch", "expected " + std::to_string(data.num_groups()) + " scale factors, got " +
                                              std::to_string(factors.size()));
    }
    for (double f : factors) {
        if (!(f > 0.0) || !std::isfinite(f)) throw Error("bad_scale_factor", "scale factors must be positive");
    }
    StratifiedCounts out = data;
    for (std::size_t t = 0; t < data.num_times(); ++t) {
        for (std::size_t g = 0; g < data.num_groups(); ++g) {
            for (std::size_t r = 0; r < data.num_regions(); ++r) {
                const double scaled = static_cast<double>(data.count(t, g, r)) * factors[g];
                out.count(t, g, r) = static_cast<std::int64_t>(std::floor(scaled + 0.5));
            }
        }
    }
    return out;
}

}  // namespace epifit
