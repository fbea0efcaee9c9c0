#include "stu/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>

#if __has_include(<nlohmann/json.hpp>)
#include <nlohmann/json.hpp>
#else
#include "json.hpp"
#endif

#include "stu/csv.hpp"

namespace stu {

namespace {

using json = nlohmann::json;

// Shared row loop: header mapping once, then per-row dispatch with
// lenient-skip / strict-throw handling. `row` passed to the callback is the
// 1-based data row index.
std::size_t for_each_row(std::istream& in, std::string_view what, Strictness strictness,
                         Diagnostics* diag,
                         const std::function<std::vector<std::size_t>(const std::vector<std::string>&)>& bind_header,
                         const std::function<void(const std::vector<std::string>&, std::size_t)>& on_row) {
    CsvReader reader(in);
    auto header = reader.next();
    if (!header)
        throw Error(ErrorKind::missing_column, std::string(what) + " is empty (no header row)");
    const auto columns = bind_header(*header);
    const std::size_t width = header->size();

    std::size_t skipped = 0;
    std::size_t row = 0;
    while (true) {
        std::optional<std::vector<std::string>> fields;
        try {
            fields = reader.next();
        } catch (const Error& e) {
            if (strictness == Strictness::strict)
                throw Error(e.kind(), e.what(), row + 1);
            ++skipped;
            if (diag)
                diag->emit("parse_skip", std::string(what) + ":" + std::to_string(row + 1), e.what());
            ++row;
            continue;
        }
        if (!fields)
            break;
        ++row;
        try {
            if (fields->size() != width)
                throw Error(ErrorKind::bad_format,
                            "expected " + std::to_string(width) + " fields, got " +
                                std::to_string(fields->size()),
                            row);
            std::vector<std::string> bound;
            bound.reserve(columns.size());
            for (std::size_t c : columns)
                bound.push_back((*fields)[c]);
            on_row(bound, row);
        } catch (const Error& e) {
            if (strictness == Strictness::strict)
                throw;
            ++skipped;
            if (diag)
                diag->emit("parse_skip", std::string(what) + ":" + std::to_string(row), e.what());
        }
    }
    return skipped;
}

std::vector<std::size_t> bind(const std::vector<std::string>& header,
                              std::initializer_list<std::string_view> names, std::string_view what) {
    std::vector<std::size_t> out;
    out.reserve(names.size());
    for (auto name : names)
        out.push_back(require_column(header, name, what));
    return out;
}

json parse_object_literal(const std::string& text, std::size_t row) {
    json value = json::parse(text, nullptr, /*allow_exceptions=*/false);
    if (value.is_discarded() || !value.is_object())
        throw Error(ErrorKind::malformed_bucket_object, "not a JSON object: '" + text + "'", row);
    return value;
}

double object_number(const json& value, std::size_t row) {
    if (!value.is_number())
        throw Error(ErrorKind::malformed_bucket_object, "non-numeric count " + value.dump(), row);
    return value.get<double>();
}

Date parse_row_date(const std::string& text, std::size_t row) {
    try {
        return parse_date(text);
    } catch (const Error& e) {
        throw Error(e.kind(), e.what(), row);
    }
}

std::vector<std::size_t> bind_poi_header(const std::vector<std::string>& header) {
    return bind(header,
                {"poi_id", "naics", "latitude", "longitude", "colocation_key", "tract_geoid",
                 "open_date", "close_date"},
                "poi catalog");
}

PoiRecord parse_poi_row(const std::vector<std::string>& f, std::size_t row) {
    PoiRecord poi;
    poi.poi_id = f[0];
    if (poi.poi_id.empty())
        throw Error(ErrorKind::bad_format, "empty poi_id", row);
    poi.naics = f[1];
    if (poi.naics.size() != 6 || !all_digits(poi.naics))
        throw Error(ErrorKind::bad_format, "naics '" + poi.naics + "' must be 6 digits", row);
    poi.latitude = parse_double_field(f[2], row);
    poi.longitude = parse_double_field(f[3], row);
    if (std::abs(poi.latitude) > 90 || std::abs(poi.longitude) > 180)
        throw Error(ErrorKind::bad_format, "coordinates out of range", row);
    poi.colocation_key = f[4];
    poi.tract_geoid = f[5];
    if (poi.tract_geoid.size() != 11 || !all_digits(poi.tract_geoid))
        throw Error(ErrorKind::bad_geoid_length, "tract_geoid '" + poi.tract_geoid + "' must be 11 digits",
                    row);
    if (!f[6].empty())
        poi.open_date = parse_row_date(f[6], row);
    if (!f[7].empty())
        poi.close_date = parse_row_date(f[7], row);
    if (poi.open_date && poi.close_date && *poi.close_date < *poi.open_date)
        throw Error(ErrorKind::bad_format, "close_date precedes open_date", row);
    return poi;
}

} // namespace

std::string cbg_to_tract(std::string_view cbg_geoid) {
    if (cbg_geoid.size() != 12 || !all_digits(cbg_geoid))
        throw Error(ErrorKind::bad_geoid_length,
                    "census block group GEOID must be 12 digits, got '" + std::string(cbg_geoid) + "'");
    return std::string(cbg_geoid.substr(0, 11));
}

ParseResult<WeeklyPattern> parse_weekly_patterns(std::istream& in, Strictness strictness,
                                                 Diagnostics* diag) {
    ParseResult<WeeklyPattern> result;
    result.skipped = for_each_row(
        in, "weekly patterns", strictness, diag,
        [](const std::vector<std::string>& header) {
            return bind(header, {"poi_id", "week_start", "raw_visits", "dwell_buckets", "home_areas"},
                        "weekly patterns");
        },
        [&](const std::vector<std::string>& f, std::size_t row) {
            WeeklyPattern p;
            p.poi_id = f[0];
            if (p.poi_id.empty())
                throw Error(ErrorKind::bad_format, "empty poi_id", row);
            p.week_start = parse_row_date(f[1], row);
            if (!p.week_start.is_monday())
                throw Error(ErrorKind::non_monday_week_start,
                            "week_start " + f[1] + " is not a Monday", row);
            p.raw_visits = parse_double_field(f[2], row);
            if (!std::isfinite(p.raw_visits) || p.raw_visits < 0)
                throw Error(ErrorKind::negative_count, "raw_visits " + f[2], row);

            const json buckets = parse_object_literal(f[3], row);
            if (buckets.size() != kBucketLabels.size())
                throw Error(ErrorKind::malformed_bucket_object,
                            "expected exactly " + std::to_string(kBucketLabels.size()) +
                                " bucket keys, got " + std::to_string(buckets.size()),
                            row);
            for (std::size_t b = 0; b < kBucketLabels.size(); ++b) {
                const std::string label(kBucketLabels[b]);
                if (!buckets.contains(label))
                    throw Error(ErrorKind::malformed_bucket_object, "missing bucket '" + label + "'",
                                row);
                const double count = object_number(buckets.at(label), row);
                if (!std::isfinite(count) || count < 0)
                    throw Error(ErrorKind::negative_count, "bucket '" + label + "' count", row);
                p.dwell_buckets[b] = count;
            }

            const json homes = parse_object_literal(f[4], row);
            for (const auto& [cbg, count_value] : homes.items()) {
                if (cbg.size() != 12 || !all_digits(cbg))
                    throw Error(ErrorKind::bad_geoid_length,
                                "home area key '" + cbg + "' is not a 12-digit GEOID", row);
                const double count = object_number(count_value, row);
                if (!std::isfinite(count) || count < 0)
                    throw Error(ErrorKind::negative_count, "home area '" + cbg + "' count", row);
                if (count > p.raw_visits)
                    throw Error(ErrorKind::home_count_exceeds_total,
                                "home area '" + cbg + "' count " + format_double(count) +
                                    " exceeds raw_visits " + format_double(p.raw_visits),
                                row);
                p.home_areas[cbg] = count;
            }
            result.records.push_back(std::move(p));
        });
    return result;
}

ParseResult<PanelObservation> parse_panel(std::istream& in, Strictness strictness, Diagnostics* diag) {
    ParseResult<PanelObservation> result;
    result.skipped = for_each_row(
        in, "panel", strictness, diag,
        [](const std::vector<std::string>& header) {
            return bind(header, {"geoid", "month", "device_count", "population"}, "panel");
        },
        [&](const std::vector<std::string>& f, std::size_t row) {
            PanelObservation obs;
            obs.geoid = f[0];
            const auto len = obs.geoid.size();
            if (!all_digits(obs.geoid) || (len != 2 && len != 5 && len != 11))
                throw Error(ErrorKind::bad_geoid_length,
                            "panel geoid '" + obs.geoid + "' must be 2, 5 or 11 digits", row);
            try {
                obs.month = parse_year_month(f[1]);
            } catch (const Error& e) {
                throw Error(e.kind(), e.what(), row);
            }
            obs.device_count = parse_double_field(f[2], row);
            if (!std::isfinite(obs.device_count) || obs.device_count < 0)
                throw Error(ErrorKind::negative_count, "device_count " + f[2], row);
            if (!f[3].empty()) {
                const double population = parse_double_field(f[3], row);
                if (!std::isfinite(population) || population < 0)
                    throw Error(ErrorKind::negative_count, "population " + f[3], row);
                obs.population = population;
            }
            if (obs.population) {
                if (*obs.population > 0) {
                    const double coverage = obs.device_count / *obs.population;
                    if (coverage > 1.5)
                        throw Error(ErrorKind::coverage_out_of_range,
                                    "coverage " + format_double(coverage) + " for " + obs.geoid, row);
                    if (coverage > 1.0 && diag)
                        diag->emit("coverage_above_one", obs.geoid + ":" + obs.month.iso(),
                                   format_double(coverage));
                } else if (obs.device_count > 0 && diag) {
                    diag->emit("coverage_undefined", obs.geoid + ":" + obs.month.iso(),
                               "population 0 with device_count " + format_double(obs.device_count));
                }
            }
            result.records.push_back(std::move(obs));
        });
    return result;
}

ParseResult<PoiRecord> parse_poi_catalog(std::istream& in, Strictness strictness, Diagnostics* diag) {
    ParseResult<PoiRecord> result;
    result.skipped = for_each_row(in, "poi catalog", strictness, diag, bind_poi_header,
                                  [&](const std::vector<std::string>& f, std::size_t row) {
                                      result.records.push_back(parse_poi_row(f, row));
                                  });
    return result;
}

PoiCatalog load_poi_catalog(std::istream& in, Strictness strictness, Diagnostics* diag) {
    PoiCatalog catalog;
    for_each_row(in, "poi catalog", strictness, diag, bind_poi_header,
                 [&](const std::vector<std::string>& f, std::size_t row) {
                     PoiRecord poi = parse_poi_row(f, row);
                     if (!catalog.by_id.emplace(poi.poi_id, std::move(poi)).second)
                         throw Error(ErrorKind::bad_format, "duplicate poi_id '" + f[0] + "'", row);
                 });
    return catalog;
}

CategoryMap load_category_map(std::istream& in, Strictness strictness, Diagnostics* diag) {
    // Rows are collected first and merged after the loop: injectivity is a
    // property of the whole map, so lenient row-skipping must not mask it.
    std::vector<std::tuple<std::string, Category, std::size_t>> rows;
    for_each_row(
        in, "category map", strictness, diag,
        [](const std::vector<std::string>& header) {
            return bind(header, {"naics", "category"}, "category map");
        },
        [&](const std::vector<std::string>& f, std::size_t row) {
            const std::string& naics = f[0];
            if (naics.size() != 6 || !all_digits(naics))
                throw Error(ErrorKind::bad_format, "naics '" + naics + "' must be 6 digits", row);
            const auto category = category_from_name(f[1]);
            if (!category)
                throw Error(ErrorKind::bad_format, "unknown category '" + f[1] + "'", row);
            rows.emplace_back(naics, *category, row);
        });
    CategoryMap map;
    for (const auto& [naics, category, row] : rows) {
        auto [it, inserted] = map.by_naics.emplace(naics, category);
        if (!inserted && it->second != category)
            throw Error(ErrorKind::duplicate_naics_mapping,
                        "naics " + naics + " mapped to both " +
                            std::string(category_name(it->second)) + " and " +
                            std::string(category_name(category)),
                        row);
    }
    std::set<Category> present;
    for (const auto& [naics, category] : map.by_naics)
        present.insert(category);
    for (Category c : kCategories)
        if (!present.contains(c))
            throw Error(ErrorKind::incomplete_category_map,
                        "category " + std::string(category_name(c)) + " has no NAICS codes");
    return map;
}

GeoHierarchy load_hierarchy(std::istream& in, Strictness strictness, Diagnostics* diag) {
    GeoHierarchy hierarchy;
    // Membership conflicts and weight-range violations are structural, so the
    // checks run after the row loop where lenient skipping cannot reach them.
    std::vector<std::tuple<std::string, TractMembership, std::size_t>> memberships;
    std::vector<std::size_t> crosswalk_rows;
    for_each_row(
        in, "hierarchy", strictness, diag,
        [](const std::vector<std::string>& header) {
            return bind(header,
                        {"kind", "tract_geoid", "county_subdivision_geoid", "county_geoid",
                         "metro_geoid", "source_geoid", "target_geoid", "weight"},
                        "hierarchy");
        },
        [&](const std::vector<std::string>& f, std::size_t row) {
            const std::string& kind = f[0];
            if (kind == "membership") {
                const std::string& tract = f[1];
                TractMembership m;
                m.county_subdivision_geoid = f[2];
                m.county_geoid = f[3];
                if (tract.size() != 11 || !all_digits(tract))
                    throw Error(ErrorKind::bad_geoid_length, "tract '" + tract + "'", row);
                if (m.county_subdivision_geoid.size() != 10 || !all_digits(m.county_subdivision_geoid))
                    throw Error(ErrorKind::bad_geoid_length,
                                "county subdivision '" + m.county_subdivision_geoid + "'", row);
                if (m.county_geoid.size() != 5 || !all_digits(m.county_geoid))
                    throw Error(ErrorKind::bad_geoid_length, "county '" + m.county_geoid + "'", row);
                if (m.county_geoid != tract.substr(0, 5))
                    throw Error(ErrorKind::non_nested_hierarchy,
                                "county " + m.county_geoid + " does not prefix tract " + tract, row);
                if (m.county_subdivision_geoid.substr(0, 5) != m.county_geoid)
                    throw Error(ErrorKind::non_nested_hierarchy,
                                "subdivision " + m.county_subdivision_geoid + " not in county " +
                                    m.county_geoid,
                                row);
                if (!f[4].empty()) {
                    if (f[4].size() != 5 || !all_digits(f[4]))
                        throw Error(ErrorKind::bad_geoid_length, "metro '" + f[4] + "'", row);
                    m.metro_geoid = f[4];
                }
                memberships.emplace_back(tract, std::move(m), row);
            } else if (kind == "crosswalk") {
                CrosswalkWeight w;
                w.source_geoid = f[5];
                w.target_geoid = f[6];
                if (!all_digits(w.source_geoid) || !all_digits(w.target_geoid))
                    throw Error(ErrorKind::bad_geoid_length, "crosswalk geoids must be digits", row);
                w.weight = parse_double_field(f[7], row);
                hierarchy.crosswalk.push_back(std::move(w));
                crosswalk_rows.push_back(row);
            } else {
                throw Error(ErrorKind::bad_format, "unknown hierarchy row kind '" + kind + "'", row);
            }
        });

    for (auto& [tract, m, row] : memberships) {
        auto [it, inserted] = hierarchy.tracts.try_emplace(tract, std::move(m));
        if (!inserted) {
            const TractMembership& prev = it->second;
            if (prev.county_subdivision_geoid != m.county_subdivision_geoid ||
                prev.county_geoid != m.county_geoid || prev.metro_geoid != m.metro_geoid)
                throw Error(ErrorKind::bad_format,
                            "conflicting duplicate membership for tract " + tract, row);
        }
    }

    std::map<std::string, double> weight_sums;
    for (std::size_t i = 0; i < hierarchy.crosswalk.size(); ++i) {
        const CrosswalkWeight& w = hierarchy.crosswalk[i];
        if (!std::isfinite(w.weight) || w.weight < 0 || w.weight > 1)
            throw Error(ErrorKind::bad_format,
                        "crosswalk weight " + format_double(w.weight) + " outside [0,1]",
                        crosswalk_rows[i]);
        weight_sums[w.source_geoid] += w.weight;
    }
    for (const auto& [source, sum] : weight_sums)
        if (std::abs(sum - 1.0) > 1e-6)
            throw Error(ErrorKind::crosswalk_weight_sum_violation,
                        "crosswalk weights for source " + source + " sum to " + format_double(sum));
    return hierarchy;
}

std::string encode_bucket_object(const std::array<double, kBucketCount>& buckets) {
    std::string out = "{";
    for (std::size_t b = 0; b < kBucketLabels.size(); ++b) {
        if (b)
            out += ',';
        out += '"';
        out += kBucketLabels[b];
        out += "\":";
        out += format_double(buckets[b]);
    }
    out += '}';
    return out;
}

std::string encode_home_areas(const std::map<std::string, double>& home_areas) {
    std::string out = "{";
    bool first = true;
    for (const auto& [cbg, count] : home_areas) {
        if (!first)
            out += ',';
        first = false;
        out += '"';
        out += cbg;
        out += "\":";
        out += format_double(count);
    }
    out += '}';
    return out;
}

void write_weekly_patterns(std::ostream& out, std::span<const WeeklyPattern> patterns) {
    CsvWriter writer(out);
    writer.write_row({"poi_id", "week_start", "raw_visits", "dwell_buckets", "home_areas"});
    for (const auto& p : patterns)
        writer.write_row({p.poi_id, p.week_start.iso(), format_double(p.raw_visits),
                          encode_bucket_object(p.dwell_buckets), encode_home_areas(p.home_areas)});
}

void write_panel(std::ostream& out, std::span<const PanelObservation> panel) {
    CsvWriter writer(out);
    writer.write_row({"geoid", "month", "device_count", "population"});
    for (const auto& obs : panel)
        writer.write_row({obs.geoid, obs.month.iso(), format_double(obs.device_count),
                          obs.population ? format_double(*obs.population) : std::string()});
}

void write_poi_catalog(std::ostream& out, std::span<const PoiRecord> pois) {
    CsvWriter writer(out);
    writer.write_row({"poi_id", "naics", "latitude", "longitude", "colocation_key", "tract_geoid",
                      "open_date", "close_date"});
    for (const auto& poi : pois)
        writer.write_row({poi.poi_id, poi.naics, format_double(poi.latitude),
                          format_double(poi.longitude), poi.colocation_key, poi.tract_geoid,
                          poi.open_date ? poi.open_date->iso() : std::string(),
                          poi.close_date ? poi.close_date->iso() : std::string()});
}

void write_category_map(std::ostream& out, const CategoryMap& map) {
    CsvWriter writer(out);
    writer.write_row({"naics", "category"});
    std::map<std::string, Category> sorted(map.by_naics.begin(), map.by_naics.end());
    for (const auto& [naics, category] : sorted)
        writer.write_row({naics, std::string(category_name(category))});
}

void write_hierarchy(std::ostream& out, const GeoHierarchy& hierarchy) {
    CsvWriter writer(out);
    writer.write_row({"kind", "tract_geoid", "county_subdivision_geoid", "county_geoid", "metro_geoid",
                      "source_geoid", "target_geoid", "weight"});
    for (const auto& [tract, m] : hierarchy.tracts)
        writer.write_row({"membership", tract, m.county_subdivision_geoid, m.county_geoid,
                          m.metro_geoid.value_or(""), "", "", ""});
    for (const auto& w : hierarchy.crosswalk)
        writer.write_row({"crosswalk", "", "", "", "", w.source_geoid, w.target_geoid,
                          format_double(w.weight)});
}

} // namespace stu
