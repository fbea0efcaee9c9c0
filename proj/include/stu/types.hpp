#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "stu/common.hpp"

namespace stu {

// The seven activity categories. Order is fixed: it is the column order of
// every emitted table.
enum class Category : int {
    grocery = 0,
    consume,
    sports,
    events,
    dining,
    arts,
    religious,
};

inline constexpr int kCategoryCount = 7;

inline constexpr std::array<Category, kCategoryCount> kCategories = {
    Category::grocery, Category::consume,   Category::sports, Category::events,
    Category::dining,  Category::arts,      Category::religious,
};

std::string_view category_name(Category c);
std::optional<Category> category_from_name(std::string_view name);

// Output table column names; nullopt selects the "_all" total column.
std::string per_user_column(std::optional<Category> c);
std::string per_visit_column(std::optional<Category> c);

// Fixed dwell-histogram bucket labels, in duration order.
inline constexpr int kBucketCount = 7;
inline constexpr std::array<std::string_view, kBucketCount> kBucketLabels = {
    "<5", "5-10", "11-20", "21-60", "61-120", "121-240", ">240",
};

struct PoiRecord {
    std::string poi_id;
    std::string naics;          // exactly 6 digits
    double latitude = 0;
    double longitude = 0;
    std::string colocation_key; // shared by POIs on the same polygon
    std::string tract_geoid;    // 11-digit FIPS
    std::optional<Date> open_date;
    std::optional<Date> close_date;
};

struct PoiCatalog {
    std::map<std::string, PoiRecord> by_id;

    const PoiRecord* find(const std::string& poi_id) const {
        auto it = by_id.find(poi_id);
        return it == by_id.end() ? nullptr : &it->second;
    }
};

// One POI-week of foot traffic. Counts are carried as doubles: co-located
// deduplication scales them by 1/group-size.
struct WeeklyPattern {
    std::string poi_id;
    Date week_start;                          // always a Monday
    double raw_visits = 0;                    // V_j
    std::array<double, kBucketCount> dwell_buckets{};
    std::map<std::string, double> home_areas; // 12-digit CBG -> visit count

    bool operator==(const WeeklyPattern&) const = default;
};

struct PanelObservation {
    std::string geoid; // tract (11), county (5) or state (2) FIPS
    YearMonth month;
    double device_count = 0;               // D_i
    std::optional<double> population;      // enables coverage reporting
};

struct CrosswalkWeight {
    std::string source_geoid;
    std::string target_geoid;
    double weight = 0; // in [0,1]; weights of one source sum to 1
};

struct TractMembership {
    std::string county_subdivision_geoid; // 10 chars
    std::string county_geoid;             // 5 chars, = tract prefix
    std::optional<std::string> metro_geoid; // 5-char CBSA
};

struct GeoHierarchy {
    std::map<std::string, TractMembership> tracts;
    std::vector<CrosswalkWeight> crosswalk;
};

// NAICS code -> category; injective per code.
struct CategoryMap {
    std::unordered_map<std::string, Category> by_naics;

    std::optional<Category> find(const std::string& naics) const {
        auto it = by_naics.find(naics);
        if (it == by_naics.end())
            return std::nullopt;
        return it->second;
    }
};

} // namespace stu
