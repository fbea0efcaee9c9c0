#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "stu/common.hpp"
#include "stu/measures.hpp"
#include "stu/types.hpp"

namespace stu {

// Time-weighted visitation minutes per 6-digit NAICS sector for one
// tract-week; the shares of these totals feed the diversity measure.
struct SectorTimeProfile {
    std::string tract_geoid;
    Date week_start;
    std::map<std::string, double> sector_minutes;
};

// Same apportionment as tract_category_time, keyed by NAICS sector instead of
// category. Only POIs with a mapped NAICS contribute (the in-scope set).
std::vector<SectorTimeProfile> sector_time_profiles(std::span<const WeeklyPattern> patterns,
                                                    const PoiCatalog& catalog,
                                                    const CategoryMap& categories,
                                                    const DwellPolicy& policy,
                                                    Strictness strictness = Strictness::lenient,
                                                    Diagnostics* diag = nullptr);

// Shannon diversity of the profile's sector time shares, natural log;
// zero-share sectors contribute nothing. Throws EmptyProfile when no sector
// has positive minutes.
double shannon_diversity(const SectorTimeProfile& profile);

// One neighborhood's weight and value for the inequality measure.
struct GiniInput {
    std::string geoid;
    double population = 0;
    double value = 0; // per-user minutes
};

// Population-weighted Gini over neighborhoods: Lorenz curve ordered by
// ascending value (ties broken by geoid), trapezoid area. Throws
// DegenerateRegion for fewer than 2 units, zero total population, negative
// inputs, or an all-zero value field.
double gini_stu(std::vector<GiniInput> points);

} // namespace stu
