#pragma once

#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "stu/common.hpp"

namespace stu {

// RFC 4180 reader: comma-delimited, double-quote quoting with "" escapes,
// quoted fields may span lines; accepts \n and \r\n records.
class CsvReader {
public:
    explicit CsvReader(std::istream& in) : in_(in) {}

    // Next logical record, or nullopt at end of stream.
    // Throws Error{bad_format} on broken quoting, with the record number.
    std::optional<std::vector<std::string>> next();

    // 1-based index of the last record returned (header counts as record 1).
    std::size_t record_number() const { return record_; }

private:
    std::istream& in_;
    std::size_t record_ = 0;
};

class CsvWriter {
public:
    explicit CsvWriter(std::ostream& out) : out_(out) {}

    void write_row(std::span<const std::string> fields);
    void write_row(std::initializer_list<std::string> fields);

private:
    std::ostream& out_;
};

// Quotes only when the field contains a comma, quote, or line break.
std::string csv_escape(std::string_view field);

// Header helper: index of `name` in `header`, or missing_column error naming
// the file context.
std::size_t require_column(const std::vector<std::string>& header, std::string_view name,
                           std::string_view what);

} // namespace stu
