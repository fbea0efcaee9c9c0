#include "stu/aggregate.hpp"

#include <algorithm>

#include "stu/dispersion.hpp"

namespace stu {

namespace {

// Weighted-mean cell kept as (sum of w*x, sum of w) so merges commute.
struct WeightedCell {
    double weighted_sum = 0;
    double weight = 0;

    void add(std::optional<double> value, double w) {
        if (!value || w <= 0)
            return;
        weighted_sum += *value * w;
        weight += w;
    }
    std::optional<double> mean() const {
        if (weight <= 0)
            return std::nullopt;
        return weighted_sum / weight;
    }
};

struct UnitAccumulator {
    std::array<WeightedCell, kCategoryCount> per_user;
    WeightedCell per_user_all;
    std::array<WeightedCell, kCategoryCount> per_visit;
    WeightedCell per_visit_all;
    WeightedCell diversity;
    double device_count = 0;
    std::array<double, kCategoryCount> category_visits{};
    double total_attributed_visits = 0;
    double population = 0;
    bool has_population = false;
    std::vector<GiniInput> gini_members;
};

} // namespace

std::string_view level_name(Level level) {
    switch (level) {
    case Level::tract:
        return "tract";
    case Level::county_subdivision:
        return "county_subdivision";
    case Level::county:
        return "county";
    case Level::metro:
        return "metro";
    }
    return "";
}

std::optional<Level> level_from_name(std::string_view name) {
    for (Level level : kLevels)
        if (level_name(level) == name)
            return level;
    return std::nullopt;
}

std::optional<std::string> parent_unit(const GeoHierarchy& hierarchy, const std::string& tract_geoid,
                                       Level level, Diagnostics* diag) {
    switch (level) {
    case Level::tract:
        return tract_geoid;
    case Level::county:
        return tract_geoid.substr(0, 5);
    case Level::county_subdivision: {
        auto it = hierarchy.tracts.find(tract_geoid);
        if (it == hierarchy.tracts.end()) {
            if (diag)
                diag->emit("missing_membership", tract_geoid, "no county subdivision");
            return std::nullopt;
        }
        return it->second.county_subdivision_geoid;
    }
    case Level::metro: {
        auto it = hierarchy.tracts.find(tract_geoid);
        if (it == hierarchy.tracts.end() || !it->second.metro_geoid)
            return std::nullopt;
        return *it->second.metro_geoid;
    }
    }
    return std::nullopt;
}

std::vector<AggregateOutput> aggregate_level(std::span<const AggregateInput> tracts,
                                             const GeoHierarchy& hierarchy, Level level,
                                             Diagnostics* diag) {
    std::map<std::pair<std::string, Date>, UnitAccumulator> units;
    for (const auto& row : tracts) {
        const auto unit = parent_unit(hierarchy, row.stu.tract_geoid, level, diag);
        if (!unit)
            continue;
        auto& acc = units[{*unit, row.stu.week_start}];
        const double d = row.stu.device_count;
        // Tract level is a pass-through: one member per unit, so every
        // present value keeps weight 1 (a tract with no panel row must not
        // lose its per-visit and diversity values to a zero device weight).
        const bool pass = level == Level::tract;
        for (std::size_t k = 0; k < kCategoryCount; ++k) {
            acc.per_user[k].add(row.stu.per_user[k], pass ? 1.0 : d);
            acc.per_visit[k].add(row.stu.per_visit[k], pass ? 1.0 : row.stu.category_visits[k]);
            acc.category_visits[k] += row.stu.category_visits[k];
        }
        acc.per_user_all.add(row.stu.per_user_all, pass ? 1.0 : d);
        acc.per_visit_all.add(row.stu.per_visit_all, pass ? 1.0 : row.stu.total_attributed_visits);
        acc.diversity.add(row.diversity, pass ? 1.0 : d);
        if (row.stu.per_user_all)
            acc.device_count += d;
        acc.total_attributed_visits += row.stu.total_attributed_visits;
        if (row.population) {
            acc.population += *row.population;
            acc.has_population = true;
        }
        if (level != Level::tract) {
            if (row.stu.per_user_all && row.population)
                acc.gini_members.push_back({row.stu.tract_geoid, *row.population,
                                            *row.stu.per_user_all});
            else if (diag)
                diag->emit("gini_member_excluded", *unit + ":" + row.stu.tract_geoid,
                           row.stu.per_user_all ? "no population" : "no per-user value");
        }
    }

    std::vector<AggregateOutput> out;
    out.reserve(units.size());
    for (auto& [key, acc] : units) {
        AggregateOutput unit;
        unit.geoid = key.first;
        unit.week_start = key.second;
        for (std::size_t k = 0; k < kCategoryCount; ++k) {
            unit.per_user[k] = acc.per_user[k].mean();
            unit.per_visit[k] = acc.per_visit[k].mean();
        }
        unit.per_user_all = acc.per_user_all.mean();
        unit.per_visit_all = acc.per_visit_all.mean();
        unit.diversity = acc.diversity.mean();
        unit.device_count = acc.device_count;
        unit.category_visits = acc.category_visits;
        unit.total_attributed_visits = acc.total_attributed_visits;
        if (acc.has_population)
            unit.population = acc.population;
        if (diag && level != Level::tract &&
            (!unit.per_user_all || !unit.per_visit_all || !unit.diversity))
            diag->emit("empty_unit", std::string(level_name(level)) + ":" + unit.geoid + ":" +
                                         unit.week_start.iso(),
                       "no contributing tracts for some measure");
        if (level != Level::tract) {
            try {
                unit.gini = gini_stu(std::move(acc.gini_members));
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::degenerate_region)
                    throw;
                if (diag)
                    diag->emit("degenerate_region", std::string(level_name(level)) + ":" +
                                                        unit.geoid + ":" + unit.week_start.iso(),
                               e.what());
            }
        }
        out.push_back(std::move(unit));
    }
    return out;
}

std::map<std::string, double> apply_crosswalk(const std::map<std::string, double>& values_by_source,
                                              std::span<const CrosswalkWeight> crosswalk,
                                              Strictness strictness, Diagnostics* diag) {
    std::map<std::string, std::vector<const CrosswalkWeight*>> by_source;
    for (const auto& w : crosswalk)
        by_source[w.source_geoid].push_back(&w);

    std::map<std::string, double> out;
    for (const auto& [source, value] : values_by_source) {
        auto it = by_source.find(source);
        if (it == by_source.end()) {
            if (strictness == Strictness::strict)
                throw Error(ErrorKind::unmapped_source,
                            "no crosswalk entry for source " + source);
            if (diag)
                diag->emit("unmapped_source", source, "value dropped from crosswalk output");
            continue;
        }
        for (const CrosswalkWeight* w : it->second)
            out[w->target_geoid] += value * w->weight;
    }
    return out;
}

} // namespace stu
