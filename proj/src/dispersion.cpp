#include "stu/dispersion.hpp"

#include <algorithm>
#include <cmath>

#include "stu/ingest.hpp"

namespace stu {

std::vector<SectorTimeProfile> sector_time_profiles(std::span<const WeeklyPattern> patterns,
                                                    const PoiCatalog& catalog,
                                                    const CategoryMap& categories,
                                                    const DwellPolicy& policy, Strictness strictness,
                                                    Diagnostics* diag) {
    std::map<std::pair<std::string, Date>, std::map<std::string, double>> cells;
    for (const auto& pattern : patterns) {
        const PoiRecord* poi = catalog.find(pattern.poi_id);
        if (!poi) {
            if (strictness == Strictness::strict)
                throw Error(ErrorKind::unknown_poi,
                            "poi '" + pattern.poi_id + "' not in catalog (week " +
                                pattern.week_start.iso() + ")");
            if (diag)
                diag->emit("unknown_poi", pattern.poi_id, "week " + pattern.week_start.iso());
            continue;
        }
        if (!categories.find(poi->naics))
            continue; // out of scope; tract_category_time already reports it
        if (pattern.raw_visits <= 0)
            continue;
        const double poi_total = expected_poi_dwell_total(pattern, policy);
        for (const auto& [cbg, count] : pattern.home_areas) {
            if (count <= 0)
                continue;
            cells[{cbg_to_tract(cbg), pattern.week_start}][poi->naics] +=
                poi_total * (count / pattern.raw_visits);
        }
    }
    std::vector<SectorTimeProfile> out;
    out.reserve(cells.size());
    for (auto& [key, sectors] : cells)
        out.push_back({key.first, key.second, std::move(sectors)});
    return out;
}

double shannon_diversity(const SectorTimeProfile& profile) {
    double total = 0;
    for (const auto& [sector, minutes] : profile.sector_minutes) {
        if (minutes < 0)
            throw Error(ErrorKind::empty_profile,
                        "negative sector minutes for " + sector + " in tract " + profile.tract_geoid);
        total += minutes;
    }
    if (total <= 0)
        throw Error(ErrorKind::empty_profile,
                    "no positive sector minutes for tract " + profile.tract_geoid + " week " +
                        profile.week_start.iso());
    double h = 0;
    for (const auto& [sector, minutes] : profile.sector_minutes) {
        if (minutes <= 0)
            continue;
        const double p = minutes / total;
        h -= p * std::log(p);
    }
    return h;
}

double gini_stu(std::vector<GiniInput> points) {
    if (points.size() < 2)
        throw Error(ErrorKind::degenerate_region,
                    "need at least 2 units, got " + std::to_string(points.size()));
    double total_population = 0;
    double total_mass = 0;
    for (const auto& p : points) {
        if (p.population < 0 || p.value < 0)
            throw Error(ErrorKind::degenerate_region, "negative input for unit " + p.geoid);
        total_population += p.population;
        total_mass += p.population * p.value;
    }
    if (total_population <= 0)
        throw Error(ErrorKind::degenerate_region, "zero total population");
    if (total_mass <= 0)
        throw Error(ErrorKind::degenerate_region, "all per-user values are zero");

    std::sort(points.begin(), points.end(), [](const GiniInput& a, const GiniInput& b) {
        if (a.value != b.value)
            return a.value < b.value;
        return a.geoid < b.geoid;
    });
    // Equal values put the Lorenz curve on the diagonal; skip the trapezoid
    // sum so the analytic 0 is returned without rounding residue.
    if (points.front().value == points.back().value)
        return 0.0;

    // Trapezoid rule under the Lorenz curve: G = 1 - sum dX * (Y_i + Y_{i-1}).
    double gini = 1.0;
    double cumulative_mass = 0;
    double previous_y = 0;
    for (const auto& p : points) {
        cumulative_mass += p.population * p.value;
        const double y = cumulative_mass / total_mass;
        gini -= (p.population / total_population) * (y + previous_y);
        previous_y = y;
    }
    return gini;
}

} // namespace stu
