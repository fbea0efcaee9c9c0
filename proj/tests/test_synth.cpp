#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "stu/ingest.hpp"
#include "stu/synth.hpp"

using namespace stu;

namespace {

namespace fs = std::filesystem;

SynthConfig small_config(std::uint64_t seed = 11) {
    SynthConfig config;
    config.seed = seed;
    config.tracts = 6;
    config.pois = 30;
    config.weeks = 2;
    config.counties = 2;
    config.metros = 1;
    config.devices_per_tract = 40;
    return config;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

} // namespace

TEST_CASE("config files parse key = value lines with comments") {
    std::istringstream in("# fixture knobs\n"
                          "seed = 99\n"
                          "tracts=12\n"
                          "first_week = 2024-01-01\n"
                          "category_weights = 1,1,1,1,1,1,1\n"
                          "\n"
                          "urban_fraction = 0.25\n");
    const SynthConfig config = load_synth_config(in);
    CHECK(config.seed == 99);
    CHECK(config.tracts == 12);
    CHECK(config.first_week == Date{2024, 1, 1});
    CHECK(config.category_weights == std::array<double, 7>{1, 1, 1, 1, 1, 1, 1});
    CHECK(config.urban_fraction == 0.25);
    CHECK(config.pois == 500); // untouched default

    std::istringstream unknown("tract_count = 12\n");
    CHECK_THROWS_AS(load_synth_config(unknown), Error);
    std::istringstream short_array("category_weights = 1,2,3\n");
    CHECK_THROWS_AS(load_synth_config(short_array), Error);
}

TEST_CASE("config validation rejects unusable settings") {
    CHECK_NOTHROW(validate_synth_config(SynthConfig{}));
    auto bad = SynthConfig{};
    bad.first_week = {2023, 1, 3}; // Tuesday
    CHECK_THROWS_AS(validate_synth_config(bad), Error);
    bad = SynthConfig{};
    bad.pois = 5; // fewer than one per category
    CHECK_THROWS_AS(validate_synth_config(bad), Error);
    bad = SynthConfig{};
    bad.coverage = 0;
    CHECK_THROWS_AS(validate_synth_config(bad), Error);
    bad = SynthConfig{};
    bad.corruption_rate = 1.5;
    CHECK_THROWS_AS(validate_synth_config(bad), Error);
    bad = SynthConfig{};
    bad.counties = bad.tracts + 1;
    CHECK_THROWS_AS(validate_synth_config(bad), Error);
}

TEST_CASE("generation is deterministic in the seed") {
    const auto a = generate(small_config());
    const auto b = generate(small_config());
    CHECK(a.patterns == b.patterns);
    CHECK(a.corrupted_rows == b.corrupted_rows);
    CHECK(a.tract_ids == b.tract_ids);
    REQUIRE(a.ledger.size() == b.ledger.size());
    CHECK(a.ledger.size() > 100);

    const auto c = generate(small_config(12));
    CHECK(a.patterns != c.patterns);
}

TEST_CASE("fixtures write byte-identically") {
    TempDir first("stu_synth_bytes_a"), second("stu_synth_bytes_b");
    const auto fixture = generate(small_config());
    write_fixture(fixture, first.path.string());
    write_fixture(fixture, second.path.string());
    for (const auto& name : {"weekly_patterns.csv", "panel.csv", "poi_catalog.csv",
                             "category_map.csv", "hierarchy.csv", "ledger.csv"}) {
        CHECK(slurp(first.path / name) == slurp(second.path / name));
        CHECK(!slurp(first.path / name).empty());
    }
}

TEST_CASE("one pattern row per poi and week, on Mondays, internally consistent") {
    const auto config = small_config();
    const auto fixture = generate(config);
    CHECK(fixture.patterns.size() == config.pois * config.weeks);
    CHECK(fixture.catalog.size() == config.pois);

    for (const auto& p : fixture.patterns) {
        CHECK(p.week_start.is_monday());
        double bucket_total = 0;
        for (double b : p.dwell_buckets)
            bucket_total += b;
        CHECK(bucket_total == p.raw_visits);
        double home_total = 0;
        for (const auto& [cbg, count] : p.home_areas) {
            CHECK(cbg.size() == 12);
            home_total += count;
        }
        CHECK(home_total <= p.raw_visits);
    }
}

TEST_CASE("the ledger matches the patterns site by site") {
    auto config = small_config();
    config.colocation_rate = 0; // one poi per site: pattern rows count visits once
    const auto fixture = generate(config);

    double pattern_visits = 0;
    for (const auto& p : fixture.patterns)
        pattern_visits += p.raw_visits;
    CHECK(pattern_visits == static_cast<double>(fixture.ledger.size()));

    std::set<std::string> keys;
    for (const auto& poi : fixture.catalog) {
        CHECK(!poi.colocation_key.empty());
        keys.insert(poi.colocation_key);
    }
    CHECK(keys.size() == fixture.catalog.size()); // no shared sites
}

TEST_CASE("colocation produces shared keys and duplicated rows") {
    auto config = small_config(21);
    config.colocation_rate = 1.0;
    const auto fixture = generate(config);
    std::map<std::string, int> members;
    for (const auto& poi : fixture.catalog)
        ++members[poi.colocation_key];
    int shared = 0;
    for (const auto& [key, count] : members)
        if (count > 1)
            ++shared;
    CHECK(shared > 0);

    // co-listed members carry identical site-level rows
    std::map<std::string, const PoiRecord*> by_id;
    for (const auto& poi : fixture.catalog)
        by_id[poi.poi_id] = &poi;
    std::map<std::pair<std::string, Date>, std::vector<const WeeklyPattern*>> groups;
    for (const auto& p : fixture.patterns)
        groups[{by_id.at(p.poi_id)->colocation_key, p.week_start}].push_back(&p);
    for (const auto& [key, rows] : groups)
        for (const auto* row : rows) {
            CHECK(row->raw_visits == rows.front()->raw_visits);
            CHECK(row->dwell_buckets == rows.front()->dwell_buckets);
            CHECK(row->home_areas == rows.front()->home_areas);
        }
}

TEST_CASE("unattributed visits leave home areas short of raw visits") {
    auto with = small_config(31);
    with.unattributed_rate = 0.5;
    auto without = small_config(31);
    without.unattributed_rate = 0;

    auto deficit = [](const GeneratedFixture& fixture) {
        double raw = 0, attributed = 0;
        for (const auto& p : fixture.patterns) {
            raw += p.raw_visits;
            for (const auto& [cbg, count] : p.home_areas)
                attributed += count;
        }
        return raw - attributed;
    };
    CHECK(deficit(generate(with)) > 0);
    CHECK(deficit(generate(without)) == 0);
}

TEST_CASE("hierarchy and panel stay internally consistent") {
    const auto config = small_config();
    const auto fixture = generate(config);
    CHECK(fixture.tract_ids.size() == config.tracts);
    for (const auto& tract : fixture.tract_ids) {
        const auto& membership = fixture.hierarchy.tracts.at(tract);
        CHECK(membership.county_geoid == tract.substr(0, 5));
        CHECK(membership.county_subdivision_geoid.substr(0, 5) == membership.county_geoid);
        CHECK(fixture.tract_population.at(tract) > 0);
    }
    CHECK(fixture.panel.size() == config.tracts); // both weeks share a month
    for (const auto& row : fixture.panel) {
        CHECK(row.device_count >= 1);
        CHECK(row.population.has_value());
    }
    // identity crosswalk over every tract
    CHECK(fixture.hierarchy.crosswalk.size() == config.tracts);
    for (const auto& w : fixture.hierarchy.crosswalk) {
        CHECK(w.source_geoid == w.target_geoid);
        CHECK(w.weight == 1.0);
    }
}

TEST_CASE("every category is represented in the catalog") {
    const auto fixture = generate(small_config());
    std::set<Category> seen;
    for (const auto& poi : fixture.catalog) {
        auto category = fixture.category_map.find(poi.naics);
        REQUIRE(category.has_value());
        seen.insert(*category);
    }
    CHECK(seen.size() == kCategoryCount);
}

TEST_CASE("corruption picks exactly the requested distinct rows") {
    auto config = small_config(41);
    config.corruption_rate = 0.1;
    const auto fixture = generate(config);
    const auto rows = config.pois * config.weeks;
    CHECK(fixture.corrupted_rows.size() ==
          static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(rows))));
    std::set<std::size_t> unique(fixture.corrupted_rows.begin(), fixture.corrupted_rows.end());
    CHECK(unique.size() == fixture.corrupted_rows.size());
    for (std::size_t row : fixture.corrupted_rows) {
        CHECK(row >= 1);
        CHECK(row <= rows);
    }
    CHECK(std::is_sorted(fixture.corrupted_rows.begin(), fixture.corrupted_rows.end()));

    TempDir dir("stu_synth_corrupt");
    write_fixture(fixture, dir.path.string());
    std::ifstream in(dir.path / "weekly_patterns.csv", std::ios::binary);
    auto parsed = parse_weekly_patterns(in, Strictness::lenient);
    CHECK(parsed.records.size() + parsed.skipped == fixture.patterns.size());
    CHECK(parsed.skipped == fixture.corrupted_rows.size());
}

TEST_CASE("written fixtures parse back to the in-memory records") {
    TempDir dir("stu_synth_roundtrip");
    const auto fixture = generate(small_config(51));
    write_fixture(fixture, dir.path.string());

    std::ifstream patterns_in(dir.path / "weekly_patterns.csv", std::ios::binary);
    auto patterns = parse_weekly_patterns(patterns_in, Strictness::strict);
    REQUIRE(patterns.records.size() == fixture.patterns.size());
    CHECK(patterns.records == fixture.patterns);

    std::ifstream catalog_in(dir.path / "poi_catalog.csv", std::ios::binary);
    auto catalog = load_poi_catalog(catalog_in, Strictness::strict);
    CHECK(catalog.by_id.size() == fixture.catalog.size());

    std::ifstream panel_in(dir.path / "panel.csv", std::ios::binary);
    auto panel = parse_panel(panel_in, Strictness::strict);
    CHECK(panel.records.size() == fixture.panel.size());

    std::ifstream hierarchy_in(dir.path / "hierarchy.csv", std::ios::binary);
    auto hierarchy = load_hierarchy(hierarchy_in, Strictness::strict);
    CHECK(hierarchy.tracts.size() == fixture.hierarchy.tracts.size());
    CHECK(hierarchy.crosswalk.size() == fixture.hierarchy.crosswalk.size());
}

TEST_CASE("the oracle prices bucketing loss and keys every tract cell") {
    const auto config = small_config(61);
    const auto fixture = generate(config);
    const auto oracle = oracle_measures(fixture, DwellPolicy());
    CHECK(oracle.exact_minutes_total > 0);
    CHECK(oracle.bucketed_minutes_total > 0);
    CHECK(oracle.exact_minutes_total != oracle.bucketed_minutes_total);

    // every tract-week present in the ledger gets a full per-user block
    std::set<std::pair<std::string, Date>> tract_weeks;
    for (const auto& visit : fixture.ledger)
        if (!visit.home_cbg.empty())
            tract_weeks.insert({cbg_to_tract(visit.home_cbg), visit.week_start});
    for (const auto& [tract, week] : tract_weeks) {
        CHECK(oracle.values.contains(oracle_key("tract", tract, week, "Per_User_STU_all")));
        CHECK(oracle.values.contains(oracle_key("tract", tract, week, "Diversity")));
    }
    CHECK(oracle.values.contains(oracle_key("county", fixture.tract_ids[0].substr(0, 5),
                                            config.first_week, "Gini")));
}
