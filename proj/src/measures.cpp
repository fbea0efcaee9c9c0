#include "stu/measures.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

#include "stu/ingest.hpp"

namespace stu {

namespace {

constexpr std::array<double, kBucketCount - 1> kBoundedMidpoints = {2, 7.5, 15.5, 40.5, 90.5, 180.5};

void validate_representatives(const std::array<double, kBucketCount>& reps) {
    for (std::size_t b = 0; b < reps.size(); ++b) {
        if (!(reps[b] > 0))
            throw Error(ErrorKind::bad_format, "dwell representative for bucket '" +
                                                   std::string(kBucketLabels[b]) +
                                                   "' must be positive");
        if (b > 0 && !(reps[b] > reps[b - 1]))
            throw Error(ErrorKind::bad_format, "dwell representatives must be strictly increasing");
    }
    if (reps.back() < 240)
        throw Error(ErrorKind::bad_format, "open-bucket representative must be at least 240");
}

} // namespace

DwellPolicy::DwellPolicy(double open_bucket_minutes) {
    std::copy(kBoundedMidpoints.begin(), kBoundedMidpoints.end(), reps_.begin());
    reps_.back() = open_bucket_minutes;
    validate_representatives(reps_);
}

DwellPolicy::DwellPolicy(const std::array<double, kBucketCount>& representatives)
    : reps_(representatives) {
    validate_representatives(reps_);
}

std::size_t DwellPolicy::bucket_of(double minutes) {
    if (minutes < 5)
        return 0;
    if (minutes <= 10)
        return 1;
    if (minutes <= 20)
        return 2;
    if (minutes <= 60)
        return 3;
    if (minutes <= 120)
        return 4;
    if (minutes <= 240)
        return 5;
    return 6;
}

double expected_poi_dwell_total(const WeeklyPattern& pattern, const DwellPolicy& policy) {
    double total = 0;
    for (std::size_t b = 0; b < kBucketCount; ++b)
        total += policy.representative(b) * pattern.dwell_buckets[b];
    return total;
}

std::vector<WeeklyPattern> dedup_group(std::vector<WeeklyPattern> group,
                                       const std::string& colocation_key, Diagnostics* diag) {
    if (group.size() <= 1)
        return group;
    for (const auto& p : group)
        if (p.week_start != group.front().week_start)
            throw Error(ErrorKind::mixed_weeks_in_group,
                        "colocation group '" + colocation_key + "' mixes weeks " +
                            group.front().week_start.iso() + " and " + p.week_start.iso());
    bool identical = true;
    for (const auto& p : group)
        identical = identical && p.raw_visits == group.front().raw_visits &&
                    p.dwell_buckets == group.front().dwell_buckets &&
                    p.home_areas == group.front().home_areas;
    if (!identical && diag)
        diag->emit("non_identical_colocated_group",
                   colocation_key + ":" + group.front().week_start.iso(),
                   std::to_string(group.size()) + " members differ");
    const double inv = 1.0 / static_cast<double>(group.size());
    for (auto& p : group) {
        p.raw_visits *= inv;
        for (auto& count : p.dwell_buckets)
            count *= inv;
        for (auto& [cbg, count] : p.home_areas)
            count *= inv;
    }
    return group;
}

std::vector<WeeklyPattern> dedup_colocated(std::vector<WeeklyPattern> patterns,
                                           const PoiCatalog& catalog, Diagnostics* diag) {
    // (colocation key, week) -> indices into `patterns`.
    std::map<std::pair<std::string, Date>, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < patterns.size(); ++i) {
        const PoiRecord* poi = catalog.find(patterns[i].poi_id);
        if (!poi || poi->colocation_key.empty())
            continue;
        groups[{poi->colocation_key, patterns[i].week_start}].push_back(i);
    }
    for (const auto& [key, indices] : groups) {
        if (indices.size() <= 1)
            continue;
        std::vector<WeeklyPattern> group;
        group.reserve(indices.size());
        for (std::size_t i : indices)
            group.push_back(std::move(patterns[i]));
        group = dedup_group(std::move(group), key.first, diag);
        for (std::size_t g = 0; g < indices.size(); ++g)
            patterns[indices[g]] = std::move(group[g]);
    }
    return patterns;
}

std::vector<TractCategoryTime> tract_category_time(std::span<const WeeklyPattern> patterns,
                                                   const PoiCatalog& catalog,
                                                   const CategoryMap& categories,
                                                   const DwellPolicy& policy, Strictness strictness,
                                                   Diagnostics* diag) {
    std::map<std::tuple<std::string, Date, int>, std::pair<double, double>> cells;
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
        const auto category = categories.find(poi->naics);
        if (!category) {
            if (diag)
                diag->emit("out_of_scope_naics", poi->naics, "poi " + pattern.poi_id);
            continue;
        }
        if (pattern.raw_visits <= 0)
            continue;
        const double poi_total = expected_poi_dwell_total(pattern, policy);
        for (const auto& [cbg, count] : pattern.home_areas) {
            if (count <= 0)
                continue;
            auto& [minutes, visits] =
                cells[{cbg_to_tract(cbg), pattern.week_start, static_cast<int>(*category)}];
            minutes += poi_total * (count / pattern.raw_visits);
            visits += count;
        }
    }
    std::vector<TractCategoryTime> out;
    out.reserve(cells.size());
    for (const auto& [key, value] : cells)
        out.push_back({std::get<0>(key), std::get<1>(key), static_cast<Category>(std::get<2>(key)),
                       value.first, value.second});
    return out;
}

std::vector<FoundationalStu> foundational_stu(std::span<const TractCategoryTime> tract_times,
                                              std::span<const PanelObservation> panel,
                                              Strictness strictness, Diagnostics* diag) {
    std::map<std::pair<std::string, YearMonth>, double> devices;
    for (const auto& obs : panel) {
        auto [it, inserted] = devices.emplace(std::make_pair(obs.geoid, obs.month), obs.device_count);
        if (!inserted && diag)
            diag->emit("duplicate_panel_row", obs.geoid + ":" + obs.month.iso(),
                       "first occurrence kept");
    }

    std::map<std::pair<std::string, Date>, FoundationalStu> rows;
    std::map<std::pair<std::string, Date>, std::array<double, kCategoryCount>> minutes_by_row;
    for (const auto& cell : tract_times) {
        const std::pair<std::string, Date> key{cell.tract_geoid, cell.week_start};
        auto& row = rows[key];
        row.tract_geoid = cell.tract_geoid;
        row.week_start = cell.week_start;
        const auto k = static_cast<std::size_t>(cell.category);
        row.category_visits[k] += cell.attributed_visits;
        row.total_attributed_visits += cell.attributed_visits;
        minutes_by_row[key][k] += cell.total_minutes;
    }

    std::vector<FoundationalStu> out;
    out.reserve(rows.size());
    for (auto& [key, row] : rows) {
        const std::array<double, kCategoryCount>& minutes = minutes_by_row[key];

        const auto panel_it = devices.find({row.tract_geoid, month_of(row.week_start)});
        if (panel_it == devices.end()) {
            if (strictness == Strictness::strict)
                throw Error(ErrorKind::missing_panel_month,
                            "no panel row for tract " + row.tract_geoid + " month " +
                                month_of(row.week_start).iso());
            if (diag)
                diag->emit("missing_panel_month", row.tract_geoid + ":" + month_of(row.week_start).iso(),
                           "per-user values left absent");
        } else {
            row.device_count = panel_it->second;
            if (row.device_count > 0) {
                double all = 0;
                for (std::size_t k = 0; k < kCategoryCount; ++k) {
                    row.per_user[k] = minutes[k] / row.device_count;
                    all += *row.per_user[k];
                }
                row.per_user_all = all;
            } else if (diag) {
                diag->emit("zero_device_count", row.tract_geoid + ":" + month_of(row.week_start).iso(),
                           "per-user values left absent");
            }
        }

        double total_minutes = 0;
        for (std::size_t k = 0; k < kCategoryCount; ++k) {
            total_minutes += minutes[k];
            if (row.category_visits[k] > 0)
                row.per_visit[k] = minutes[k] / row.category_visits[k];
        }
        if (row.total_attributed_visits > 0)
            row.per_visit_all = total_minutes / row.total_attributed_visits;

        out.push_back(std::move(row));
    }
    return out;
}

} // namespace stu
