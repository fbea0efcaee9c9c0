#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stu/common.hpp"
#include "stu/types.hpp"

namespace stu {

// Representative minutes per dwell bucket. Defaults to the interval midpoints
// for the six bounded buckets; the open ">240" bucket gets a conservative
// 240 unless overridden.
class DwellPolicy {
public:
    DwellPolicy() : DwellPolicy(240.0) {}
    explicit DwellPolicy(double open_bucket_minutes);
    explicit DwellPolicy(const std::array<double, kBucketCount>& representatives);

    double representative(std::size_t bucket) const { return reps_[bucket]; }
    const std::array<double, kBucketCount>& representatives() const { return reps_; }

    // Bucket index for an exact duration in minutes, matching the label
    // boundaries: [0,4], [5,10], [11,20], [21,60], [61,120], [121,240], >240.
    static std::size_t bucket_of(double minutes);

private:
    std::array<double, kBucketCount> reps_;
};

// Expected total visit-minutes of one POI-week: sum of bucket count times the
// bucket's representative minutes.
double expected_poi_dwell_total(const WeeklyPattern& pattern, const DwellPolicy& policy);

// Evenly splits one co-located group's counts across its members: every count
// field of every member is scaled by 1 / group size. All members must share a
// week_start. A diagnostic is emitted when members are not carbon copies.
std::vector<WeeklyPattern> dedup_group(std::vector<WeeklyPattern> group,
                                       const std::string& colocation_key,
                                       Diagnostics* diag = nullptr);

// Full-stream dedup: groups patterns by (colocation key from the catalog,
// week), scales each group, and returns patterns in their input order.
// Patterns with an unknown poi_id or an empty colocation key pass through.
std::vector<WeeklyPattern> dedup_colocated(std::vector<WeeklyPattern> patterns,
                                           const PoiCatalog& catalog, Diagnostics* diag = nullptr);

// One (tract, week, category) cell of visitation-weighted visit time.
struct TractCategoryTime {
    std::string tract_geoid;
    Date week_start;
    Category category = Category::grocery;
    double total_minutes = 0;     // T_{i,k}
    double attributed_visits = 0; // V_{i,k}
};

// Apportions each POI-week's expected dwell total across visitor home tracts
// by their share of the POI's visits, summed per (tract, week, category).
// POIs missing from the catalog raise UnknownPoi in strict mode and are
// counted and skipped otherwise; POIs whose NAICS has no category mapping are
// out of scope and skipped with a diagnostic in both modes.
std::vector<TractCategoryTime> tract_category_time(std::span<const WeeklyPattern> patterns,
                                                   const PoiCatalog& catalog,
                                                   const CategoryMap& categories,
                                                   const DwellPolicy& policy,
                                                   Strictness strictness = Strictness::lenient,
                                                   Diagnostics* diag = nullptr);

// Per-tract-week normalized measures. Absent optionals mean "denominator
// unavailable", never zero.
struct FoundationalStu {
    std::string tract_geoid;
    Date week_start;
    std::array<std::optional<double>, kCategoryCount> per_user;  // minutes/device/week
    std::optional<double> per_user_all;
    std::array<std::optional<double>, kCategoryCount> per_visit; // minutes/visit
    std::optional<double> per_visit_all;
    double device_count = 0;                           // D_i (0 when panel row missing)
    std::array<double, kCategoryCount> category_visits{}; // V_{i,k}
    double total_attributed_visits = 0;                // V_i
};

// Joins tract-category times with the device panel (the month containing the
// week's Monday) and normalizes. D_i = 0 or a missing panel month leaves
// per_user absent with a diagnostic; zero attributed visits leave the
// corresponding per_visit entry absent. Missing panel months abort in strict
// mode.
std::vector<FoundationalStu> foundational_stu(std::span<const TractCategoryTime> tract_times,
                                              std::span<const PanelObservation> panel,
                                              Strictness strictness = Strictness::lenient,
                                              Diagnostics* diag = nullptr);

} // namespace stu
