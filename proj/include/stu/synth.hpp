#pragma once

#include <array>
#include <cstdint>
#include <istream>
#include <map>
#include <string>
#include <vector>

#include "stu/common.hpp"
#include "stu/measures.hpp"
#include "stu/types.hpp"

namespace stu {

// Everything the generator needs; same config = byte-identical fixture.
struct SynthConfig {
    std::uint64_t seed = 1;
    std::size_t tracts = 50;
    std::size_t pois = 500; // catalog entries; co-located ones share a site
    std::size_t weeks = 4;
    Date first_week{2023, 1, 2};

    std::size_t counties = 4;
    std::size_t subdivisions_per_county = 2;
    std::size_t metros = 2;
    std::size_t cbgs_per_tract = 3;

    // Weekly per-device minutes drawn per tract-week.
    double per_user_shape = 0.6;
    double per_user_scale_urban = 268.7;
    double per_user_scale_rural = 155.3;
    double urban_fraction = 0.5;

    // How the weekly budget splits across categories, and the per-visit
    // duration model (lognormal minutes) per category.
    std::array<double, kCategoryCount> category_weights = {0.20, 0.18, 0.12, 0.08,
                                                           0.22, 0.08, 0.12};
    std::array<double, kCategoryCount> dwell_shape = {0.5, 0.5, 0.6, 0.6, 0.5, 0.6, 0.5};
    std::array<double, kCategoryCount> dwell_scale = {25, 30, 70, 110, 45, 80, 90};

    double devices_per_tract = 120; // jittered about 20% per tract
    double coverage = 0.05;         // population = devices / coverage

    double colocation_rate = 0.1;   // chance a site carries 2-3 POI ids
    double corruption_rate = 0;     // fraction of pattern rows mangled on write
    double unattributed_rate = 0.1; // extra visits with no home block group
};

// key = value lines, # comments; unknown keys are rejected. Array values are
// 7 comma-separated reals.
SynthConfig load_synth_config(std::istream& in);
void validate_synth_config(const SynthConfig& config);

// One ground-truth visit. home_cbg is empty for unattributed visits.
struct LedgerVisit {
    Date week_start;
    std::string site_id;
    std::string poi_id; // canonical member of the site
    std::string naics;
    std::string home_cbg;
    double dwell_minutes = 0;
};

struct GeneratedFixture {
    std::vector<PoiRecord> catalog;       // file emission order
    std::vector<WeeklyPattern> patterns;  // clean rows, file emission order
    std::vector<PanelObservation> panel;
    GeoHierarchy hierarchy;
    CategoryMap category_map;
    std::vector<LedgerVisit> ledger;
    std::vector<std::size_t> corrupted_rows; // 1-based data rows in weekly_patterns.csv
    std::vector<std::string> tract_ids;
    std::vector<bool> tract_urban;
    std::map<std::string, double> tract_population;
};

GeneratedFixture generate(const SynthConfig& config);

// Writes the five pipeline input files plus ledger.csv into `dir` (created if
// needed). Corruption is applied here: the chosen pattern rows get their
// bucket object mangled, everything else is untouched.
void write_fixture(const GeneratedFixture& fixture, const std::string& dir);

// Brute-force recomputation of every emitted measure from the visit ledger,
// keyed "level|geoid|week|column" to match the compute output tables. The
// exact/bucketed totals quantify the information lost to duration bucketing.
struct OracleResult {
    std::map<std::string, double> values;
    double exact_minutes_total = 0;
    double bucketed_minutes_total = 0;
};

OracleResult oracle_measures(const GeneratedFixture& fixture, const DwellPolicy& policy);

std::string oracle_key(std::string_view level, const std::string& geoid, const Date& week,
                       std::string_view column);

} // namespace stu
