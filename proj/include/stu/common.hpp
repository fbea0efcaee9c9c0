#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace stu {

// Error codes used across the pipeline. Names match the documented codes in
// docs/formats.md; parsers attach the offending 1-based data row where known.
enum class ErrorKind {
    io_error,
    missing_column,
    bad_format,
    malformed_bucket_object,
    non_monday_week_start,
    negative_count,
    bad_geoid_length,
    home_count_exceeds_total,
    coverage_out_of_range,
    duplicate_naics_mapping,
    incomplete_category_map,
    crosswalk_weight_sum_violation,
    non_nested_hierarchy,
    mixed_weeks_in_group,
    unknown_poi,
    missing_panel_month,
    empty_profile,
    degenerate_region,
    empty_unit,
    unmapped_source,
    insufficient_samples,
    degenerate_sample,
    support_violation,
    zero_variance,
    too_few_units,
    constant_input,
    too_few_points,
};

const char* error_name(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string message);
    Error(ErrorKind kind, std::string message, std::size_t row);

    ErrorKind kind() const { return kind_; }
    std::optional<std::size_t> row() const { return row_; }

private:
    ErrorKind kind_;
    std::optional<std::size_t> row_;
};

enum class Strictness { lenient, strict };

// Side-channel event stream: one (kind, key, detail) triple per event.
// Collected per work unit and merged in a deterministic order.
struct Diagnostic {
    std::string kind;
    std::string key;
    std::string detail;
};

class Diagnostics {
public:
    void emit(std::string kind, std::string key, std::string detail);
    void merge(Diagnostics&& other);
    const std::vector<Diagnostic>& events() const { return events_; }
    std::size_t count(std::string_view kind) const;

private:
    std::vector<Diagnostic> events_;
};

// Calendar date carried as plain y/m/d; all parsing is strict ISO yyyy-mm-dd.
struct Date {
    int year = 0;
    unsigned month = 0;
    unsigned day = 0;

    auto operator<=>(const Date&) const = default;

    bool valid() const;
    bool is_monday() const;
    std::string iso() const;
};

struct YearMonth {
    int year = 0;
    unsigned month = 0;
    auto operator<=>(const YearMonth&) const = default;
    std::string iso() const;
};

Date parse_date(std::string_view text);            // throws bad_format
YearMonth parse_year_month(std::string_view text); // "yyyy-mm"
inline YearMonth month_of(const Date& d) { return {d.year, d.month}; }
Date add_days(const Date& d, int days);

bool all_digits(std::string_view s);

// Shortest decimal that round-trips the exact double; integers print bare.
std::string format_double(double value);
double parse_double_field(std::string_view text, std::size_t row, ErrorKind kind = ErrorKind::bad_format);
long parse_long_field(std::string_view text, std::size_t row);

// Runs fn(i) for i in [0, count) across `threads` workers (0 = hardware).
// Work is split into contiguous index blocks; fn must only touch state owned
// by index i, so results do not depend on the schedule.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn);

} // namespace stu
