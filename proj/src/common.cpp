#include "stu/common.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <mutex>
#include <thread>

namespace stu {

const char* error_name(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::io_error: return "IoError";
    case ErrorKind::missing_column: return "MissingColumn";
    case ErrorKind::bad_format: return "BadFormat";
    case ErrorKind::malformed_bucket_object: return "MalformedBucketObject";
    case ErrorKind::non_monday_week_start: return "NonMondayWeekStart";
    case ErrorKind::negative_count: return "NegativeCount";
    case ErrorKind::bad_geoid_length: return "BadGeoidLength";
    case ErrorKind::home_count_exceeds_total: return "HomeCountExceedsTotal";
    case ErrorKind::coverage_out_of_range: return "CoverageOutOfRange";
    case ErrorKind::duplicate_naics_mapping: return "DuplicateNaicsMapping";
    case ErrorKind::incomplete_category_map: return "IncompleteCategoryMap";
    case ErrorKind::crosswalk_weight_sum_violation: return "CrosswalkWeightSumViolation";
    case ErrorKind::non_nested_hierarchy: return "NonNestedHierarchy";
    case ErrorKind::mixed_weeks_in_group: return "MixedWeeksInGroup";
    case ErrorKind::unknown_poi: return "UnknownPoi";
    case ErrorKind::missing_panel_month: return "MissingPanelMonth";
    case ErrorKind::empty_profile: return "EmptyProfile";
    case ErrorKind::degenerate_region: return "DegenerateRegion";
    case ErrorKind::empty_unit: return "EmptyUnit";
    case ErrorKind::unmapped_source: return "UnmappedSource";
    case ErrorKind::insufficient_samples: return "InsufficientSamples";
    case ErrorKind::degenerate_sample: return "DegenerateSample";
    case ErrorKind::support_violation: return "SupportViolation";
    case ErrorKind::zero_variance: return "ZeroVariance";
    case ErrorKind::too_few_units: return "TooFewUnits";
    case ErrorKind::constant_input: return "ConstantInput";
    case ErrorKind::too_few_points: return "TooFewPoints";
    }
    return "UnknownError";
}

namespace {

std::string compose(ErrorKind kind, const std::string& message, std::optional<std::size_t> row) {
    std::string out = error_name(kind);
    if (row)
        out += " at row " + std::to_string(*row);
    out += ": ";
    out += message;
    return out;
}

} // namespace

Error::Error(ErrorKind kind, std::string message)
    : std::runtime_error(compose(kind, message, {})), kind_(kind) {}

Error::Error(ErrorKind kind, std::string message, std::size_t row)
    : std::runtime_error(compose(kind, message, row)), kind_(kind), row_(row) {}

void Diagnostics::emit(std::string kind, std::string key, std::string detail) {
    events_.push_back({std::move(kind), std::move(key), std::move(detail)});
}

void Diagnostics::merge(Diagnostics&& other) {
    events_.insert(events_.end(), std::make_move_iterator(other.events_.begin()),
                   std::make_move_iterator(other.events_.end()));
    other.events_.clear();
}

std::size_t Diagnostics::count(std::string_view kind) const {
    return static_cast<std::size_t>(
        std::count_if(events_.begin(), events_.end(), [&](const Diagnostic& d) { return d.kind == kind; }));
}

bool Date::valid() const {
    using namespace std::chrono;
    return year_month_day{std::chrono::year{year}, std::chrono::month{month}, std::chrono::day{day}}.ok();
}

bool Date::is_monday() const {
    using namespace std::chrono;
    year_month_day ymd{std::chrono::year{year}, std::chrono::month{month}, std::chrono::day{day}};
    return weekday{sys_days{ymd}} == Monday;
}

std::string Date::iso() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", year, month, day);
    return buf;
}

std::string YearMonth::iso() const {
    char buf[12];
    std::snprintf(buf, sizeof buf, "%04d-%02u", year, month);
    return buf;
}

bool all_digits(std::string_view s) {
    if (s.empty())
        return false;
    return std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

Date parse_date(std::string_view text) {
    if (text.size() != 10 || text[4] != '-' || text[7] != '-' || !all_digits(text.substr(0, 4)) ||
        !all_digits(text.substr(5, 2)) || !all_digits(text.substr(8, 2)))
        throw Error(ErrorKind::bad_format, "expected yyyy-mm-dd date, got '" + std::string(text) + "'");
    Date d;
    d.year = std::stoi(std::string(text.substr(0, 4)));
    d.month = static_cast<unsigned>(std::stoi(std::string(text.substr(5, 2))));
    d.day = static_cast<unsigned>(std::stoi(std::string(text.substr(8, 2))));
    if (!d.valid())
        throw Error(ErrorKind::bad_format, "invalid calendar date '" + std::string(text) + "'");
    return d;
}

Date add_days(const Date& d, int days) {
    using namespace std::chrono;
    const sys_days base = sys_days{year_month_day{std::chrono::year{d.year},
                                                  std::chrono::month{d.month},
                                                  std::chrono::day{d.day}}};
    const year_month_day shifted{base + std::chrono::days{days}};
    return {static_cast<int>(shifted.year()), static_cast<unsigned>(shifted.month()),
            static_cast<unsigned>(shifted.day())};
}

YearMonth parse_year_month(std::string_view text) {
    if (text.size() != 7 || text[4] != '-' || !all_digits(text.substr(0, 4)) || !all_digits(text.substr(5, 2)))
        throw Error(ErrorKind::bad_format, "expected yyyy-mm month, got '" + std::string(text) + "'");
    YearMonth ym;
    ym.year = std::stoi(std::string(text.substr(0, 4)));
    ym.month = static_cast<unsigned>(std::stoi(std::string(text.substr(5, 2))));
    if (ym.month < 1 || ym.month > 12)
        throw Error(ErrorKind::bad_format, "invalid month '" + std::string(text) + "'");
    return ym;
}

std::string format_double(double value) {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, res.ptr);
}

double parse_double_field(std::string_view text, std::size_t row, ErrorKind kind) {
    double value = 0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    auto res = std::from_chars(first, last, value);
    if (res.ec != std::errc{} || res.ptr != last)
        throw Error(kind, "expected a number, got '" + std::string(text) + "'", row);
    return value;
}

long parse_long_field(std::string_view text, std::size_t row) {
    long value = 0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    auto res = std::from_chars(first, last, value);
    if (res.ec != std::errc{} || res.ptr != last)
        throw Error(ErrorKind::bad_format, "expected an integer, got '" + std::string(text) + "'", row);
    return value;
}

void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn) {
    if (count == 0)
        return;
    std::size_t workers = threads > 0 ? static_cast<std::size_t>(threads)
                                      : std::max<std::size_t>(1, std::thread::hardware_concurrency());
    workers = std::min(workers, count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i)
            fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::exception_ptr first_error;
    std::mutex error_mutex;
    const std::size_t chunk = (count + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(count, lo + chunk);
        if (lo >= hi)
            break;
        pool.emplace_back([&, lo, hi] {
            try {
                for (std::size_t i = lo; i < hi; ++i)
                    fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error)
                    first_error = std::current_exception();
            }
        });
    }
    for (auto& t : pool)
        t.join();
    if (first_error)
        std::rethrow_exception(first_error);
}

} // namespace stu
