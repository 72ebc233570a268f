#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace epifit {

/// ISO-8601 week, e.g. `2011-W27`.
struct IsoWeek {
    int year = 0;
    int week = 0;

    static IsoWeek parse(const std::string& label);
    std::string to_string() const;
    IsoWeek next() const;

    auto operator<=>(const IsoWeek&) const = default;
};

/// Number of ISO weeks (52 or 53) in the given ISO year.
int iso_weeks_in_year(int year);

/// Dense count lattice Y[t, g, r] with population offsets e[t, g, r].
///
/// Offsets are stored per time slice; `offsets_time_varying` records whether
/// they were supplied with a time dimension. Stacked (g, r) vectors use the
/// index g * R + r throughout the library.
class StratifiedCounts {
public:
    StratifiedCounts() = default;
    StratifiedCounts(std::vector<IsoWeek> weeks, std::vector<std::string> groups,
                     std::vector<std::string> regions);

    std::size_t num_times() const { return weeks_.size(); }
    std::size_t num_groups() const { return groups_.size(); }
    std::size_t num_regions() const { return regions_.size(); }
    std::size_t num_cells() const { return groups_.size() * regions_.size(); }

    const std::vector<IsoWeek>& weeks() const { return weeks_; }
    const std::vector<std::string>& groups() const { return groups_; }
    const std::vector<std::string>& regions() const { return regions_; }

    std::int64_t& count(std::size_t t, std::size_t g, std::size_t r) { return counts_[index(t, g, r)]; }
    std::int64_t count(std::size_t t, std::size_t g, std::size_t r) const { return counts_[index(t, g, r)]; }
    double& offset(std::size_t t, std::size_t g, std::size_t r) { return offsets_[index(t, g, r)]; }
    double offset(std::size_t t, std::size_t g, std::size_t r) const { return offsets_[index(t, g, r)]; }

    /// Counts of time slice t, stacked over (g, r).
    std::span<const std::int64_t> slice(std::size_t t) const {
        return {counts_.data() + t * num_cells(), num_cells()};
    }
    std::span<std::int64_t> slice(std::size_t t) { return {counts_.data() + t * num_cells(), num_cells()}; }
    std::span<const double> offset_slice(std::size_t t) const {
        return {offsets_.data() + t * num_cells(), num_cells()};
    }

    const std::vector<std::int64_t>& raw_counts() const { return counts_; }

    /// Sets e[t, g, r] = population(g, r) for all t.
    void set_constant_offsets(std::span<const double> population_by_cell);
    bool offsets_time_varying() const { return offsets_time_varying_; }
    void set_offsets_time_varying(bool v) { offsets_time_varying_ = v; }

    std::int64_t total_count() const;

    /// Throws if offsets are not strictly positive, counts negative, or T < 2.
    void validate() const;

    /// Stable 64-bit FNV-1a hash over dimensions, labels and counts, as hex.
    std::string fingerprint() const;

private:
    std::size_t index(std::size_t t, std::size_t g, std::size_t r) const {
        return (t * groups_.size() + g) * regions_.size() + r;
    }

    std::vector<IsoWeek> weeks_;
    std::vector<std::string> groups_;
    std::vector<std::string> regions_;
    std::vector<std::int64_t> counts_;
    std::vector<double> offsets_;
    bool offsets_time_varying_ = false;
};

/// Multiplies each group's counts by its factor and rounds half up.
/// Zero counts stay zero.
StratifiedCounts scale_counts(const StratifiedCounts& data, std::span<const double> factors);

/// Consecutive ISO weeks starting at `first`.
std::vector<IsoWeek> consecutive_weeks(IsoWeek first, std::size_t n);

}  // namespace epifit
