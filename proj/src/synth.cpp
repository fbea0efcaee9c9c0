#include "stu/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "stu/aggregate.hpp"
#include "stu/csv.hpp"
#include "stu/ingest.hpp"
#include "stu/rng.hpp"

namespace stu {

namespace {

const std::array<std::vector<std::string>, kCategoryCount> kNaicsPools = {{
    {"445110", "445120", "445230"},           // grocery
    {"446110", "448140", "452311"},           // consume
    {"713940", "711211"},                     // sports
    {"711310", "711320"},                     // events
    {"722511", "722513", "722515"},           // dining
    {"712110", "711110", "712120"},           // arts
    {"813110"},                               // religious
}};

std::string pad_number(unsigned long value, int width) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%0*lu", width, value);
    return buf;
}

struct Site {
    std::size_t index = 0;
    Category category = Category::grocery;
    std::string naics;
    std::size_t tract = 0;
    std::string id;
    std::string colocation_key;
    std::vector<std::size_t> poi_indices;
};

struct RawVisit {
    std::size_t site = 0;
    std::string home_cbg; // empty = unattributed
    double minutes = 0;
};

double parse_config_double(const std::string& value, std::size_t line) {
    return parse_double_field(value, line);
}

unsigned long parse_config_count(const std::string& value, std::size_t line) {
    const long v = parse_long_field(value, line);
    if (v < 0)
        throw Error(ErrorKind::bad_format, "expected a nonnegative integer, got '" + value + "'",
                    line);
    return static_cast<unsigned long>(v);
}

std::array<double, kCategoryCount> parse_config_array(const std::string& value, std::size_t line) {
    std::array<double, kCategoryCount> out{};
    std::size_t start = 0;
    std::size_t filled = 0;
    while (true) {
        const std::size_t comma = value.find(',', start);
        const std::string item = value.substr(start, comma == std::string::npos ? std::string::npos
                                                                                : comma - start);
        if (filled >= out.size())
            throw Error(ErrorKind::bad_format, "expected 7 comma-separated values", line);
        out[filled++] = parse_config_double(item, line);
        if (comma == std::string::npos)
            break;
        start = comma + 1;
    }
    if (filled != out.size())
        throw Error(ErrorKind::bad_format,
                    "expected 7 comma-separated values, got " + std::to_string(filled), line);
    return out;
}

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos)
        return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

} // namespace

SynthConfig load_synth_config(std::istream& in) {
    SynthConfig config;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        line = trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw Error(ErrorKind::bad_format, "expected key = value, got '" + line + "'", lineno);
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));

        if (key == "seed")
            config.seed = parse_config_count(value, lineno);
        else if (key == "tracts")
            config.tracts = parse_config_count(value, lineno);
        else if (key == "pois")
            config.pois = parse_config_count(value, lineno);
        else if (key == "weeks")
            config.weeks = parse_config_count(value, lineno);
        else if (key == "first_week")
            config.first_week = parse_date(value);
        else if (key == "counties")
            config.counties = parse_config_count(value, lineno);
        else if (key == "subdivisions_per_county")
            config.subdivisions_per_county = parse_config_count(value, lineno);
        else if (key == "metros")
            config.metros = parse_config_count(value, lineno);
        else if (key == "cbgs_per_tract")
            config.cbgs_per_tract = parse_config_count(value, lineno);
        else if (key == "per_user_shape")
            config.per_user_shape = parse_config_double(value, lineno);
        else if (key == "per_user_scale_urban")
            config.per_user_scale_urban = parse_config_double(value, lineno);
        else if (key == "per_user_scale_rural")
            config.per_user_scale_rural = parse_config_double(value, lineno);
        else if (key == "urban_fraction")
            config.urban_fraction = parse_config_double(value, lineno);
        else if (key == "category_weights")
            config.category_weights = parse_config_array(value, lineno);
        else if (key == "dwell_shape")
            config.dwell_shape = parse_config_array(value, lineno);
        else if (key == "dwell_scale")
            config.dwell_scale = parse_config_array(value, lineno);
        else if (key == "devices_per_tract")
            config.devices_per_tract = parse_config_double(value, lineno);
        else if (key == "coverage")
            config.coverage = parse_config_double(value, lineno);
        else if (key == "colocation_rate")
            config.colocation_rate = parse_config_double(value, lineno);
        else if (key == "corruption_rate")
            config.corruption_rate = parse_config_double(value, lineno);
        else if (key == "unattributed_rate")
            config.unattributed_rate = parse_config_double(value, lineno);
        else
            throw Error(ErrorKind::bad_format, "unknown config key '" + key + "'", lineno);
    }
    validate_synth_config(config);
    return config;
}

void validate_synth_config(const SynthConfig& config) {
    auto fail = [](const std::string& what) { throw Error(ErrorKind::bad_format, what); };
    if (!config.first_week.valid() || !config.first_week.is_monday())
        fail("first_week must be a valid Monday");
    if (config.tracts < 1)
        fail("tracts must be at least 1");
    if (config.pois < kCategoryCount)
        fail("pois must be at least 7 so every category gets a site");
    if (config.weeks < 1)
        fail("weeks must be at least 1");
    if (config.counties < 1 || config.counties > config.tracts)
        fail("counties must be between 1 and the tract count");
    if (config.subdivisions_per_county < 1)
        fail("subdivisions_per_county must be at least 1");
    if (config.metros > config.counties)
        fail("metros cannot exceed counties");
    if (config.cbgs_per_tract < 1 || config.cbgs_per_tract > 9)
        fail("cbgs_per_tract must be between 1 and 9");
    if (!(config.per_user_shape > 0) || !(config.per_user_scale_urban > 0) ||
        !(config.per_user_scale_rural > 0))
        fail("per-user distribution parameters must be positive");
    for (double r : {config.urban_fraction, config.colocation_rate, config.corruption_rate,
                     config.unattributed_rate})
        if (r < 0 || r > 1)
            fail("rates must lie in [0, 1]");
    double weight_sum = 0;
    for (std::size_t k = 0; k < kCategoryCount; ++k) {
        if (config.category_weights[k] < 0)
            fail("category weights must be nonnegative");
        weight_sum += config.category_weights[k];
        if (!(config.dwell_shape[k] > 0) || !(config.dwell_scale[k] > 0))
            fail("dwell distribution parameters must be positive");
    }
    if (!(weight_sum > 0))
        fail("category weights must not all be zero");
    if (!(config.devices_per_tract >= 1))
        fail("devices_per_tract must be at least 1");
    if (!(config.coverage > 0) || config.coverage > 1)
        fail("coverage must lie in (0, 1]");
}

GeneratedFixture generate(const SynthConfig& config) {
    validate_synth_config(config);
    GeneratedFixture fixture;

    // Geography: contiguous tract blocks per county, subdivisions round-robin
    // within a county, one county left outside any metro when possible.
    const std::size_t tracts = config.tracts;
    std::vector<std::size_t> county_of_tract(tracts);
    std::vector<std::string> county_ids(config.counties);
    std::vector<std::string> subdivision_of_tract(tracts);
    std::vector<std::optional<std::string>> metro_of_county(config.counties);
    for (std::size_t c = 0; c < config.counties; ++c) {
        county_ids[c] = "12" + pad_number(2 * c + 1, 3);
        if (config.metros > 0 && !(config.counties > config.metros && c + 1 == config.counties))
            metro_of_county[c] = pad_number(10000 + 500 * (c % config.metros), 5);
    }
    fixture.tract_ids.resize(tracts);
    for (std::size_t t = 0; t < tracts; ++t) {
        const std::size_t c = t * config.counties / tracts;
        county_of_tract[t] = c;
        const std::size_t first_in_county = (c * tracts + config.counties - 1) / config.counties;
        const std::size_t t_in_c = t - first_in_county;
        fixture.tract_ids[t] = county_ids[c] + pad_number((t_in_c + 1) * 100, 6);
        subdivision_of_tract[t] =
            county_ids[c] + pad_number(90000 + t_in_c % config.subdivisions_per_county, 5);
    }
    for (std::size_t t = 0; t < tracts; ++t) {
        TractMembership m;
        m.county_subdivision_geoid = subdivision_of_tract[t];
        m.county_geoid = county_of_tract[t] < config.counties ? county_ids[county_of_tract[t]] : "";
        m.metro_geoid = metro_of_county[county_of_tract[t]];
        fixture.hierarchy.tracts.emplace(fixture.tract_ids[t], std::move(m));
        fixture.hierarchy.crosswalk.push_back({fixture.tract_ids[t], fixture.tract_ids[t], 1.0});
    }

    for (std::size_t k = 0; k < kCategoryCount; ++k)
        for (const auto& naics : kNaicsPools[k])
            fixture.category_map.by_naics.emplace(naics, kCategories[k]);

    // Panel: per-tract device count jittered around the configured base, flat
    // across months.
    fixture.tract_urban.resize(tracts);
    std::vector<double> devices(tracts);
    std::vector<YearMonth> months;
    for (std::size_t w = 0; w < config.weeks; ++w) {
        const YearMonth m = month_of(add_days(config.first_week, 7 * static_cast<int>(w)));
        if (months.empty() || months.back() != m)
            months.push_back(m);
    }
    for (std::size_t t = 0; t < tracts; ++t) {
        Rng rng(derive_seed(config.seed, "tract", t));
        fixture.tract_urban[t] = rng.uniform() < config.urban_fraction;
        devices[t] = std::max(1.0, std::round(config.devices_per_tract * (0.8 + 0.4 * rng.uniform())));
        const double population = std::round(devices[t] / config.coverage);
        fixture.tract_population[fixture.tract_ids[t]] = population;
        for (const YearMonth& m : months)
            fixture.panel.push_back({fixture.tract_ids[t], m, devices[t], population});
    }

    // Sites and their member POIs. Categories rotate per site so every
    // category is always represented.
    std::vector<Site> sites;
    std::vector<std::size_t> site_of_poi(config.pois);
    {
        std::size_t poi = 0;
        while (poi < config.pois) {
            Site site;
            site.index = sites.size();
            Rng rng(derive_seed(config.seed, "site", site.index));
            std::size_t members = 1;
            if (rng.uniform() < config.colocation_rate)
                members = 2 + static_cast<std::size_t>(rng.below(2));
            members = std::min(members, config.pois - poi);
            site.category = kCategories[site.index % kCategoryCount];
            const auto& pool = kNaicsPools[site.index % kCategoryCount];
            site.naics = pool[rng.below(pool.size())];
            site.tract = rng.below(tracts);
            site.id = "S" + pad_number(site.index, 5);
            site.colocation_key = "LOC" + pad_number(site.index, 5);
            const double latitude = 27.0 + 2.0 * rng.uniform();
            const double longitude = -82.0 - 2.0 * rng.uniform();
            std::optional<Date> open_date;
            std::optional<Date> close_date;
            if (rng.uniform() < 0.15)
                open_date = add_days(config.first_week, -30 - static_cast<int>(rng.below(300)));
            if (rng.uniform() < 0.05)
                close_date = add_days(config.first_week,
                                      7 * static_cast<int>(config.weeks) + static_cast<int>(rng.below(90)));
            for (std::size_t g = 0; g < members; ++g) {
                PoiRecord record;
                record.poi_id = "P" + pad_number(poi, 6);
                record.naics = site.naics;
                record.latitude = latitude;
                record.longitude = longitude;
                record.colocation_key = site.colocation_key;
                record.tract_geoid = fixture.tract_ids[site.tract];
                record.open_date = open_date;
                record.close_date = close_date;
                fixture.catalog.push_back(std::move(record));
                site.poi_indices.push_back(poi);
                site_of_poi[poi] = site.index;
                ++poi;
            }
            sites.push_back(std::move(site));
        }
    }
    std::array<std::vector<std::size_t>, kCategoryCount> sites_by_category;
    for (const Site& site : sites)
        sites_by_category[static_cast<std::size_t>(site.category)].push_back(site.index);
    for (std::size_t k = 0; k < kCategoryCount; ++k)
        if (sites_by_category[k].empty())
            throw Error(ErrorKind::bad_format,
                        "too few sites to cover category " +
                            std::string(category_name(kCategories[k])) +
                            "; raise pois or lower colocation_rate");

    double weight_sum = 0;
    for (double w : config.category_weights)
        weight_sum += w;
    std::array<double, kCategoryCount> weights{};
    for (std::size_t k = 0; k < kCategoryCount; ++k)
        weights[k] = config.category_weights[k] / weight_sum;

    // Visits. Each tract-week draws a per-device minutes target and spends it
    // per category, in bucket-representative space, so the configured
    // lognormal is what the per-user measure actually sees.
    const DwellPolicy budget_policy;
    std::vector<std::vector<RawVisit>> week_visits(config.weeks);
    parallel_for(config.weeks, 0, [&](std::size_t w) {
        auto& visits = week_visits[w];
        std::vector<std::size_t> site_counts(sites.size(), 0);
        for (std::size_t t = 0; t < tracts; ++t) {
            Rng rng(derive_seed(config.seed, "visits", t, w));
            const double scale = fixture.tract_urban[t] ? config.per_user_scale_urban
                                                        : config.per_user_scale_rural;
            const double per_user_target = rng.lognormal(config.per_user_shape, scale);
            const double tract_budget = per_user_target * devices[t];
            for (std::size_t k = 0; k < kCategoryCount; ++k) {
                double remaining = tract_budget * weights[k];
                while (remaining > 0) {
                    const double minutes =
                        std::round(rng.lognormal(config.dwell_shape[k], config.dwell_scale[k]));
                    const auto& pool = sites_by_category[k];
                    const std::size_t site = pool[rng.below(pool.size())];
                    const char cbg_digit =
                        static_cast<char>('1' + static_cast<int>(rng.below(config.cbgs_per_tract)));
                    visits.push_back({site, fixture.tract_ids[t] + cbg_digit, minutes});
                    ++site_counts[site];
                    remaining -= budget_policy.representative(DwellPolicy::bucket_of(minutes));
                }
            }
        }
        // Unattributed noise: extra visits that count toward a site's totals
        // but belong to no home block group.
        if (config.unattributed_rate > 0) {
            for (std::size_t s = 0; s < sites.size(); ++s) {
                if (site_counts[s] == 0)
                    continue;
                Rng rng(derive_seed(config.seed, "unattributed", s, w));
                const long extra =
                    rng.poisson(config.unattributed_rate * static_cast<double>(site_counts[s]));
                const auto k = static_cast<std::size_t>(sites[s].category);
                for (long e = 0; e < extra; ++e) {
                    const double minutes =
                        std::round(rng.lognormal(config.dwell_shape[k], config.dwell_scale[k]));
                    visits.push_back({s, "", minutes});
                }
            }
        }
    });

    // Ledger rows in week order, then pattern rows: one per (poi, week),
    // including zero-visit weeks, so row counts are predictable.
    for (std::size_t w = 0; w < config.weeks; ++w) {
        const Date monday = add_days(config.first_week, 7 * static_cast<int>(w));
        for (const RawVisit& v : week_visits[w])
            fixture.ledger.push_back({monday, sites[v.site].id,
                                      "P" + pad_number(sites[v.site].poi_indices.front(), 6),
                                      sites[v.site].naics, v.home_cbg, v.minutes});
    }
    for (std::size_t w = 0; w < config.weeks; ++w) {
        const Date monday = add_days(config.first_week, 7 * static_cast<int>(w));
        std::vector<WeeklyPattern> site_week(sites.size());
        for (auto& p : site_week)
            p.week_start = monday;
        for (const RawVisit& v : week_visits[w]) {
            auto& p = site_week[v.site];
            p.raw_visits += 1;
            p.dwell_buckets[DwellPolicy::bucket_of(v.minutes)] += 1;
            if (!v.home_cbg.empty())
                p.home_areas[v.home_cbg] += 1;
        }
        for (std::size_t poi = 0; poi < config.pois; ++poi) {
            WeeklyPattern row = site_week[site_of_poi[poi]];
            row.poi_id = "P" + pad_number(poi, 6);
            fixture.patterns.push_back(std::move(row));
        }
    }

    const std::size_t total_rows = fixture.patterns.size();
    const auto corrupt_count =
        static_cast<std::size_t>(std::llround(config.corruption_rate * static_cast<double>(total_rows)));
    if (corrupt_count > 0) {
        std::vector<std::size_t> rows(total_rows);
        for (std::size_t i = 0; i < total_rows; ++i)
            rows[i] = i + 1;
        Rng rng(derive_seed(config.seed, "corrupt"));
        for (std::size_t i = 0; i < corrupt_count; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng.below(total_rows - i));
            std::swap(rows[i], rows[j]);
        }
        fixture.corrupted_rows.assign(rows.begin(), rows.begin() + static_cast<long>(corrupt_count));
        std::sort(fixture.corrupted_rows.begin(), fixture.corrupted_rows.end());
    }
    return fixture;
}

void write_fixture(const GeneratedFixture& fixture, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw Error(ErrorKind::io_error, "cannot create directory " + dir + ": " + ec.message());

    auto open = [&](const std::string& name) {
        std::ofstream out(dir + "/" + name, std::ios::binary);
        if (!out)
            throw Error(ErrorKind::io_error, "cannot open " + dir + "/" + name + " for writing");
        return out;
    };

    {
        auto out = open("weekly_patterns.csv");
        CsvWriter writer(out);
        writer.write_row({"poi_id", "week_start", "raw_visits", "dwell_buckets", "home_areas"});
        const std::set<std::size_t> corrupted(fixture.corrupted_rows.begin(),
                                              fixture.corrupted_rows.end());
        static const std::array<std::string, 3> kMangled = {"{}", R"({"<5":)", "not json"};
        std::size_t row = 0;
        for (const auto& p : fixture.patterns) {
            ++row;
            std::string buckets = encode_bucket_object(p.dwell_buckets);
            if (corrupted.contains(row))
                buckets = kMangled[row % kMangled.size()];
            writer.write_row({p.poi_id, p.week_start.iso(), format_double(p.raw_visits), buckets,
                              encode_home_areas(p.home_areas)});
        }
    }
    {
        auto out = open("panel.csv");
        write_panel(out, fixture.panel);
    }
    {
        auto out = open("poi_catalog.csv");
        write_poi_catalog(out, fixture.catalog);
    }
    {
        auto out = open("category_map.csv");
        write_category_map(out, fixture.category_map);
    }
    {
        auto out = open("hierarchy.csv");
        write_hierarchy(out, fixture.hierarchy);
    }
    {
        auto out = open("ledger.csv");
        CsvWriter writer(out);
        writer.write_row({"week_start", "site_id", "poi_id", "naics", "home_cbg", "dwell_minutes"});
        for (const auto& v : fixture.ledger)
            writer.write_row({v.week_start.iso(), v.site_id, v.poi_id, v.naics, v.home_cbg,
                              format_double(v.dwell_minutes)});
    }
}

std::string oracle_key(std::string_view level, const std::string& geoid, const Date& week,
                       std::string_view column) {
    std::string out(level);
    out += '|';
    out += geoid;
    out += '|';
    out += week.iso();
    out += '|';
    out += column;
    return out;
}

OracleResult oracle_measures(const GeneratedFixture& fixture, const DwellPolicy& policy) {
    OracleResult result;

    struct SiteWeek {
        double total_minutes = 0; // bucket representatives
        double visits = 0;
        std::map<std::string, double> visits_by_tract;
        std::string naics;
    };
    std::map<std::pair<std::string, Date>, SiteWeek> site_weeks;
    for (const auto& v : fixture.ledger) {
        const double rep = policy.representative(DwellPolicy::bucket_of(v.dwell_minutes));
        result.exact_minutes_total += v.dwell_minutes;
        result.bucketed_minutes_total += rep;
        auto& sw = site_weeks[{v.site_id, v.week_start}];
        sw.total_minutes += rep;
        sw.visits += 1;
        sw.naics = v.naics;
        if (!v.home_cbg.empty())
            sw.visits_by_tract[v.home_cbg.substr(0, 11)] += 1;
    }

    struct TractWeek {
        std::array<double, kCategoryCount> minutes{};
        std::array<double, kCategoryCount> visits{};
        std::map<std::string, double> sector_minutes;
    };
    std::map<std::pair<std::string, Date>, TractWeek> tract_weeks;
    for (const auto& [key, sw] : site_weeks) {
        const auto category = fixture.category_map.find(sw.naics);
        if (!category || sw.visits <= 0)
            continue;
        const auto k = static_cast<std::size_t>(*category);
        for (const auto& [tract, count] : sw.visits_by_tract) {
            auto& tw = tract_weeks[{tract, key.second}];
            const double share = sw.total_minutes * count / sw.visits;
            tw.minutes[k] += share;
            tw.visits[k] += count;
            tw.sector_minutes[sw.naics] += share;
        }
    }

    std::map<std::pair<std::string, YearMonth>, double> devices;
    for (const auto& obs : fixture.panel)
        devices.emplace(std::make_pair(obs.geoid, obs.month), obs.device_count);

    // Tract rows, plus the per-tract inputs each aggregation level needs.
    struct TractRow {
        std::string tract;
        Date week;
        std::array<std::optional<double>, kCategoryCount> per_user;
        std::optional<double> per_user_all;
        std::array<std::optional<double>, kCategoryCount> per_visit;
        std::optional<double> per_visit_all;
        double diversity = 0;
        double device_count = 0;
        std::array<double, kCategoryCount> visits{};
        double total_visits = 0;
        double population = 0;
    };
    std::vector<TractRow> rows;
    for (const auto& [key, tw] : tract_weeks) {
        TractRow row;
        row.tract = key.first;
        row.week = key.second;
        row.visits = tw.visits;
        const auto d = devices.find({key.first, month_of(key.second)});
        row.device_count = d == devices.end() ? 0 : d->second;
        double total_minutes = 0;
        for (std::size_t k = 0; k < kCategoryCount; ++k) {
            total_minutes += tw.minutes[k];
            row.total_visits += tw.visits[k];
            if (tw.visits[k] > 0)
                row.per_visit[k] = tw.minutes[k] / tw.visits[k];
        }
        if (row.device_count > 0) {
            double all = 0;
            for (std::size_t k = 0; k < kCategoryCount; ++k) {
                row.per_user[k] = tw.minutes[k] / row.device_count;
                all += *row.per_user[k];
            }
            row.per_user_all = all;
        }
        if (row.total_visits > 0)
            row.per_visit_all = total_minutes / row.total_visits;

        double sector_total = 0;
        for (const auto& [naics, minutes] : tw.sector_minutes)
            sector_total += minutes;
        for (const auto& [naics, minutes] : tw.sector_minutes) {
            if (minutes <= 0)
                continue;
            const double p = minutes / sector_total;
            row.diversity -= p * std::log(p);
        }
        const auto pop = fixture.tract_population.find(key.first);
        row.population = pop == fixture.tract_population.end() ? 0 : pop->second;
        rows.push_back(std::move(row));
    }

    auto emit = [&](std::string_view level, const std::string& geoid, const Date& week,
                    const std::string& column, std::optional<double> value) {
        if (value)
            result.values.emplace(oracle_key(level, geoid, week, column), *value);
    };

    for (const TractRow& row : rows) {
        for (std::size_t k = 0; k < kCategoryCount; ++k) {
            emit("tract", row.tract, row.week, per_user_column(kCategories[k]), row.per_user[k]);
            emit("tract", row.tract, row.week, per_visit_column(kCategories[k]), row.per_visit[k]);
        }
        emit("tract", row.tract, row.week, per_user_column(std::nullopt), row.per_user_all);
        emit("tract", row.tract, row.week, per_visit_column(std::nullopt), row.per_visit_all);
        emit("tract", row.tract, row.week, "Diversity", row.diversity);
    }

    for (Level level : {Level::county_subdivision, Level::county, Level::metro}) {
        struct UnitCell {
            std::array<double, kCategoryCount> pu_sum{}, pu_w{};
            double pu_all_sum = 0, pu_all_w = 0;
            std::array<double, kCategoryCount> pv_sum{}, pv_w{};
            double pv_all_sum = 0, pv_all_w = 0;
            double h_sum = 0, h_w = 0;
            std::vector<std::pair<double, double>> gini_members; // population, value
        };
        std::map<std::pair<std::string, Date>, UnitCell> units;
        for (const TractRow& row : rows) {
            const auto membership = fixture.hierarchy.tracts.find(row.tract);
            std::optional<std::string> unit;
            if (level == Level::county)
                unit = row.tract.substr(0, 5);
            else if (membership != fixture.hierarchy.tracts.end())
                unit = level == Level::county_subdivision
                           ? std::optional(membership->second.county_subdivision_geoid)
                           : membership->second.metro_geoid;
            if (!unit)
                continue;
            auto& cell = units[{*unit, row.week}];
            const double d = row.device_count;
            for (std::size_t k = 0; k < kCategoryCount; ++k) {
                if (row.per_user[k] && d > 0) {
                    cell.pu_sum[k] += *row.per_user[k] * d;
                    cell.pu_w[k] += d;
                }
                if (row.per_visit[k] && row.visits[k] > 0) {
                    cell.pv_sum[k] += *row.per_visit[k] * row.visits[k];
                    cell.pv_w[k] += row.visits[k];
                }
            }
            if (row.per_user_all && d > 0) {
                cell.pu_all_sum += *row.per_user_all * d;
                cell.pu_all_w += d;
            }
            if (row.per_visit_all && row.total_visits > 0) {
                cell.pv_all_sum += *row.per_visit_all * row.total_visits;
                cell.pv_all_w += row.total_visits;
            }
            if (d > 0) {
                cell.h_sum += row.diversity * d;
                cell.h_w += d;
            }
            if (row.per_user_all && row.population > 0)
                cell.gini_members.emplace_back(row.population, *row.per_user_all);
        }
        for (const auto& [key, cell] : units) {
            const auto& [geoid, week] = key;
            for (std::size_t k = 0; k < kCategoryCount; ++k) {
                if (cell.pu_w[k] > 0)
                    emit(level_name(level), geoid, week, per_user_column(kCategories[k]),
                         cell.pu_sum[k] / cell.pu_w[k]);
                if (cell.pv_w[k] > 0)
                    emit(level_name(level), geoid, week, per_visit_column(kCategories[k]),
                         cell.pv_sum[k] / cell.pv_w[k]);
            }
            if (cell.pu_all_w > 0)
                emit(level_name(level), geoid, week, per_user_column(std::nullopt),
                     cell.pu_all_sum / cell.pu_all_w);
            if (cell.pv_all_w > 0)
                emit(level_name(level), geoid, week, per_visit_column(std::nullopt),
                     cell.pv_all_sum / cell.pv_all_w);
            if (cell.h_w > 0)
                emit(level_name(level), geoid, week, "Diversity", cell.h_sum / cell.h_w);

            // Pairwise mean-absolute-difference Gini over member tracts.
            if (cell.gini_members.size() >= 2) {
                double pop_total = 0;
                double mean = 0;
                for (const auto& [pop, value] : cell.gini_members)
                    pop_total += pop;
                for (const auto& [pop, value] : cell.gini_members)
                    mean += pop / pop_total * value;
                if (mean > 0) {
                    double diff = 0;
                    for (const auto& [pi, xi] : cell.gini_members)
                        for (const auto& [pj, xj] : cell.gini_members)
                            diff += (pi / pop_total) * (pj / pop_total) * std::abs(xi - xj);
                    emit(level_name(level), geoid, week, "Gini", diff / (2 * mean));
                }
            }
        }
    }
    return result;
}

} // namespace stu
