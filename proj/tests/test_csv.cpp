#include <doctest.h>

#include <sstream>

#include "stu/csv.hpp"

using namespace stu;

namespace {

std::vector<std::vector<std::string>> read_all(const std::string& text) {
    std::istringstream in(text);
    CsvReader reader(in);
    std::vector<std::vector<std::string>> rows;
    while (auto row = reader.next())
        rows.push_back(std::move(*row));
    return rows;
}

} // namespace

TEST_CASE("plain rows split on commas") {
    auto rows = read_all("a,b,c\n1,2,3\n");
    REQUIRE(rows.size() == 2);
    CHECK(rows[0] == std::vector<std::string>{"a", "b", "c"});
    CHECK(rows[1] == std::vector<std::string>{"1", "2", "3"});
}

TEST_CASE("quoted fields keep commas, escaped quotes and line breaks") {
    auto rows = read_all("\"a,b\",\"say \"\"hi\"\"\",\"two\nlines\"\n");
    REQUIRE(rows.size() == 1);
    CHECK(rows[0][0] == "a,b");
    CHECK(rows[0][1] == "say \"hi\"");
    CHECK(rows[0][2] == "two\nlines");
}

TEST_CASE("crlf records and a missing final newline both parse") {
    auto rows = read_all("a,b\r\n1,2\r\n3,4");
    REQUIRE(rows.size() == 3);
    CHECK(rows[1] == std::vector<std::string>{"1", "2"});
    CHECK(rows[2] == std::vector<std::string>{"3", "4"});
}

TEST_CASE("empty fields and empty trailing field survive") {
    auto rows = read_all(",x,\n");
    REQUIRE(rows.size() == 1);
    CHECK(rows[0] == std::vector<std::string>{"", "x", ""});
}

TEST_CASE("unterminated quote is an error with the record number") {
    std::istringstream in("ok,row\n\"broken\n");
    CsvReader reader(in);
    REQUIRE(reader.next());
    try {
        while (reader.next())
            ;
        FAIL("expected a parse error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::bad_format);
        CHECK(e.row().has_value());
    }
}

TEST_CASE("text after a closing quote is an error") {
    std::istringstream in("\"a\"b,c\n");
    CsvReader reader(in);
    CHECK_THROWS_AS((void)reader.next(), Error);
}

TEST_CASE("writer quotes only when needed and round-trips") {
    std::ostringstream out;
    CsvWriter writer(out);
    writer.write_row({"plain", "with,comma", "with\"quote", "multi\nline", ""});
    writer.write_row({"1", "2"});
    auto rows = read_all(out.str());
    REQUIRE(rows.size() == 2);
    CHECK(rows[0] ==
          std::vector<std::string>{"plain", "with,comma", "with\"quote", "multi\nline", ""});
    CHECK(rows[1] == std::vector<std::string>{"1", "2"});
    CHECK(out.str().substr(0, 5) == "plain"); // no gratuitous quoting
}

TEST_CASE("csv_escape leaves clean fields alone") {
    CHECK(csv_escape("abc") == "abc");
    CHECK(csv_escape("a,b") == "\"a,b\"");
    CHECK(csv_escape("a\"b") == "\"a\"\"b\"");
    CHECK(csv_escape("a\nb") == "\"a\nb\"");
}

TEST_CASE("require_column finds by exact name or throws") {
    std::vector<std::string> header = {"GEOID", "Timestamp", "value"};
    CHECK(require_column(header, "value", "test") == 2);
    try {
        require_column(header, "missing", "test");
        FAIL("expected missing_column");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::missing_column);
    }
}

TEST_CASE("record numbers count logical records, not physical lines") {
    std::istringstream in("a\n\"x\ny\"\nb\n");
    CsvReader reader(in);
    (void)reader.next();
    CHECK(reader.record_number() == 1);
    (void)reader.next();
    CHECK(reader.record_number() == 2);
    (void)reader.next();
    CHECK(reader.record_number() == 3);
}
