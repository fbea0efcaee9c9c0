#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stu/common.hpp"
#include "stu/measures.hpp"
#include "stu/types.hpp"

namespace stu {

enum class Level : int { tract = 0, county_subdivision, county, metro };

inline constexpr std::array<Level, 4> kLevels = {Level::tract, Level::county_subdivision,
                                                 Level::county, Level::metro};

std::string_view level_name(Level level);
std::optional<Level> level_from_name(std::string_view name);

// The unit a tract belongs to at `level`. Tract level returns the tract
// itself and county is always derivable from the GEOID prefix; subdivision
// and metro need a hierarchy membership row. Tracts in no metro (or with no
// membership row) return nullopt.
std::optional<std::string> parent_unit(const GeoHierarchy& hierarchy, const std::string& tract_geoid,
                                       Level level, Diagnostics* diag = nullptr);

// One tract-week row as fed into aggregation: the normalized measures plus
// the weights each of them aggregates under.
struct AggregateInput {
    FoundationalStu stu;
    std::optional<double> diversity;
    std::optional<double> population;
};

// One unit-week of aggregated measures. Weight fields carry the sums over
// contributing member tracts so levels can be chained.
struct AggregateOutput {
    std::string geoid;
    Date week_start;
    std::array<std::optional<double>, kCategoryCount> per_user;
    std::optional<double> per_user_all;
    std::array<std::optional<double>, kCategoryCount> per_visit;
    std::optional<double> per_visit_all;
    std::optional<double> diversity;
    std::optional<double> gini; // absent at tract level
    double device_count = 0;
    std::array<double, kCategoryCount> category_visits{};
    double total_attributed_visits = 0;
    std::optional<double> population;
};

// Rolls tract-week rows up to `level`. Per-user and diversity aggregate as
// device-weighted means, per-visit as attributed-visit-weighted means (each
// category under its own visit weight); tracts with an absent value drop out
// of that cell's numerator and denominator. For levels above tract the
// member tracts' per-user values also feed a population-weighted Gini;
// degenerate units leave it absent with a diagnostic. Level::tract passes
// rows through (no Gini).
std::vector<AggregateOutput> aggregate_level(std::span<const AggregateInput> tracts,
                                             const GeoHierarchy& hierarchy, Level level,
                                             Diagnostics* diag = nullptr);

// Apportions additive values across geography vintages: target value =
// sum over sources of value * weight. Sources without a crosswalk entry are
// dropped with a diagnostic in lenient mode and abort in strict mode.
std::map<std::string, double> apply_crosswalk(const std::map<std::string, double>& values_by_source,
                                              std::span<const CrosswalkWeight> crosswalk,
                                              Strictness strictness = Strictness::lenient,
                                              Diagnostics* diag = nullptr);

} // namespace stu
