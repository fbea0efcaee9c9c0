#include "stu/csv.hpp"

#include <algorithm>

namespace stu {

std::optional<std::vector<std::string>> CsvReader::next() {
    int c = in_.get();
    if (c == EOF)
        return std::nullopt;
    ++record_;

    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    bool field_started_quoted = false;

    auto end_field = [&] {
        fields.push_back(std::move(field));
        field.clear();
        quoted = false;
        field_started_quoted = false;
    };

    while (true) {
        if (c == EOF) {
            if (quoted)
                throw Error(ErrorKind::bad_format, "unterminated quoted field", record_);
            end_field();
            return fields;
        }
        char ch = static_cast<char>(c);
        if (quoted) {
            if (ch == '"') {
                int peek = in_.get();
                if (peek == '"') {
                    field.push_back('"');
                } else {
                    quoted = false;
                    // Only a separator, record end, or EOF may follow a closing quote.
                    c = peek;
                    continue;
                }
            } else {
                field.push_back(ch);
            }
        } else {
            if (ch == ',') {
                end_field();
            } else if (ch == '\r') {
                int peek = in_.get();
                if (peek == '\n') {
                    end_field();
                    return fields;
                }
                throw Error(ErrorKind::bad_format, "bare carriage return in record", record_);
            } else if (ch == '\n') {
                end_field();
                return fields;
            } else if (ch == '"') {
                if (!field.empty() || field_started_quoted)
                    throw Error(ErrorKind::bad_format, "quote inside unquoted field", record_);
                quoted = true;
                field_started_quoted = true;
            } else {
                if (field_started_quoted)
                    throw Error(ErrorKind::bad_format, "text after closing quote", record_);
                field.push_back(ch);
            }
        }
        c = in_.get();
    }
}

std::string csv_escape(std::string_view field) {
    const bool needs_quotes =
        field.find_first_of(",\"\r\n") != std::string_view::npos;
    if (!needs_quotes)
        return std::string(field);
    std::string out;
    out.reserve(field.size() + 2);
    out.push_back('"');
    for (char ch : field) {
        if (ch == '"')
            out.push_back('"');
        out.push_back(ch);
    }
    out.push_back('"');
    return out;
}

void CsvWriter::write_row(std::span<const std::string> fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i)
            out_.put(',');
        out_ << csv_escape(fields[i]);
    }
    out_.put('\n');
}

void CsvWriter::write_row(std::initializer_list<std::string> fields) {
    write_row(std::span<const std::string>(fields.begin(), fields.size()));
}

std::size_t require_column(const std::vector<std::string>& header, std::string_view name,
                           std::string_view what) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
        throw Error(ErrorKind::missing_column,
                    std::string(what) + " is missing required column '" + std::string(name) + "'");
    return static_cast<std::size_t>(it - header.begin());
}

} // namespace stu
