#pragma once

#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "stu/common.hpp"
#include "stu/types.hpp"

namespace stu {

template <typename T> struct ParseResult {
    std::vector<T> records;
    std::size_t skipped = 0; // malformed data rows dropped in lenient mode
};

// All parsers: UTF-8 RFC 4180 CSV with a header row. Lenient mode skips and
// counts malformed rows (one diagnostic each when `diag` is given); strict
// mode throws on the first bad row, with its 1-based data-row index.

ParseResult<WeeklyPattern> parse_weekly_patterns(std::istream& in, Strictness strictness,
                                                 Diagnostics* diag = nullptr);

ParseResult<PanelObservation> parse_panel(std::istream& in, Strictness strictness,
                                          Diagnostics* diag = nullptr);

ParseResult<PoiRecord> parse_poi_catalog(std::istream& in, Strictness strictness,
                                         Diagnostics* diag = nullptr);

PoiCatalog load_poi_catalog(std::istream& in, Strictness strictness, Diagnostics* diag = nullptr);

// Injectivity and the all-categories-present invariant are enforced in both
// modes; only row-level dirt is mode-dependent.
CategoryMap load_category_map(std::istream& in, Strictness strictness, Diagnostics* diag = nullptr);

// Single file holding `membership` and `crosswalk` rows; per-source crosswalk
// weights must sum to 1 within 1e-6, memberships must nest.
GeoHierarchy load_hierarchy(std::istream& in, Strictness strictness, Diagnostics* diag = nullptr);

// First 11 digits of a 12-digit census block group GEOID.
std::string cbg_to_tract(std::string_view cbg_geoid);

// Writers emitting the exact formats the parsers accept (field-for-field
// round trip). Counts and weights print as shortest round-trip decimals.
void write_weekly_patterns(std::ostream& out, std::span<const WeeklyPattern> patterns);
void write_panel(std::ostream& out, std::span<const PanelObservation> panel);
void write_poi_catalog(std::ostream& out, std::span<const PoiRecord> pois);
void write_category_map(std::ostream& out, const CategoryMap& map);
void write_hierarchy(std::ostream& out, const GeoHierarchy& hierarchy);

// The dwell_buckets / home_areas cell encodings (JSON object literals).
std::string encode_bucket_object(const std::array<double, kBucketCount>& buckets);
std::string encode_home_areas(const std::map<std::string, double>& home_areas);

} // namespace stu
