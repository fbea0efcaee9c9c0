#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "stu/csv.hpp"
#include "stu/pipeline.hpp"
#include "stu/synth.hpp"

using namespace stu;

namespace {

namespace fs = std::filesystem;

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

SynthConfig small_config(std::uint64_t seed = 71) {
    SynthConfig config;
    config.seed = seed;
    config.tracts = 8;
    config.pois = 40;
    config.weeks = 2;
    config.counties = 2;
    config.metros = 1;
    config.devices_per_tract = 50;
    config.colocation_rate = 0.2;
    return config;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

std::vector<fs::path> all_files(const fs::path& root) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(root))
        if (entry.is_regular_file())
            files.push_back(fs::relative(entry.path(), root));
    std::sort(files.begin(), files.end());
    return files;
}

std::string first_line(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::string line;
    std::getline(in, line);
    return line;
}

} // namespace

TEST_CASE("computed measures match the visit-ledger oracle") {
    TempDir dir("stu_pipeline_oracle");
    const auto fixture = generate(small_config());
    write_fixture(fixture, (dir.path / "input").string());

    ComputeOptions options;
    options.threads = 2;
    const auto result = run_compute(InputPaths{(dir.path / "input").string()}, options);
    write_compute_outputs(result, (dir.path / "output").string());

    const auto oracle = oracle_measures(fixture, options.policy);
    const auto emitted = read_output_tables((dir.path / "output").string());
    const auto report = compare_to_oracle(emitted, oracle.values, 1e-9);
    if (!report.pass)
        for (const auto& problem : report.problems)
            MESSAGE(problem);
    CHECK(report.pass);
    CHECK(report.cells == oracle.values.size());
    CHECK(report.cells > 100);
}

TEST_CASE("thread count never changes the output bytes") {
    TempDir dir("stu_pipeline_threads");
    const auto fixture = generate(small_config(72));
    write_fixture(fixture, (dir.path / "input").string());

    for (int threads : {1, 3, 8}) {
        ComputeOptions options;
        options.threads = threads;
        const auto result = run_compute(InputPaths{(dir.path / "input").string()}, options);
        write_compute_outputs(result, (dir.path / ("out" + std::to_string(threads))).string());
    }
    const auto names = all_files(dir.path / "out1");
    CHECK(names.size() > 8);
    for (const auto& name : names) {
        CHECK(slurp(dir.path / "out1" / name) == slurp(dir.path / "out3" / name));
        CHECK(slurp(dir.path / "out1" / name) == slurp(dir.path / "out8" / name));
    }
    CHECK(all_files(dir.path / "out3") == names);
    CHECK(all_files(dir.path / "out8") == names);
}

TEST_CASE("emitted tract tables re-aggregate to the same upper levels") {
    TempDir dir("stu_pipeline_reagg");
    const auto fixture = generate(small_config(73));
    write_fixture(fixture, (dir.path / "input").string());

    ComputeOptions options;
    const auto result = run_compute(InputPaths{(dir.path / "input").string()}, options);
    write_compute_outputs(result, (dir.path / "output").string());

    const auto inputs = read_tract_inputs((dir.path / "output").string(), Strictness::strict);
    std::size_t tract_rows = 0;
    for (const auto& [week, rows] : inputs)
        tract_rows += rows.size();
    CHECK(tract_rows == result.tract_rows.size());

    std::map<Level, std::vector<AggregateOutput>> reaggregated;
    for (Level level : {Level::county_subdivision, Level::county, Level::metro})
        for (const auto& [week, rows] : inputs) {
            auto out = aggregate_level(rows, fixture.hierarchy, level);
            auto& bucket = reaggregated[level];
            bucket.insert(bucket.end(), std::make_move_iterator(out.begin()),
                          std::make_move_iterator(out.end()));
        }
    write_level_tables(reaggregated, (dir.path / "reagg").string());

    // identical inputs (exact round-trip decimals) must give identical bytes
    for (const auto& level : {"county_subdivision", "county", "metro"}) {
        const auto files = all_files(dir.path / "output" / level);
        REQUIRE(!files.empty());
        for (const auto& name : files)
            CHECK(slurp(dir.path / "output" / level / name) ==
                  slurp(dir.path / "reagg" / level / name));
    }
}

TEST_CASE("an empty patterns file yields empty outputs and a diagnostic") {
    TempDir dir("stu_pipeline_empty");
    auto fixture = generate(small_config(74));
    fixture.patterns.clear();
    fixture.corrupted_rows.clear();
    write_fixture(fixture, (dir.path / "input").string());

    const auto result = run_compute(InputPaths{(dir.path / "input").string()}, ComputeOptions{});
    CHECK(result.patterns_parsed == 0);
    CHECK(result.tract_rows.empty());
    CHECK(result.diagnostics.count("empty_input") == 1);
    write_compute_outputs(result, (dir.path / "output").string());
    CHECK(fs::exists(dir.path / "output" / "diagnostics.csv"));
    CHECK(fs::exists(dir.path / "output" / "coverage.csv"));
    CHECK(read_output_tables((dir.path / "output").string()).empty());
}

TEST_CASE("strict mode propagates the first bad row out of compute") {
    TempDir dir("stu_pipeline_strict");
    auto config = small_config(75);
    config.corruption_rate = 0.05;
    const auto fixture = generate(config);
    write_fixture(fixture, (dir.path / "input").string());

    ComputeOptions strict;
    strict.strictness = Strictness::strict;
    try {
        run_compute(InputPaths{(dir.path / "input").string()}, strict);
        FAIL("expected a strict-mode abort");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::malformed_bucket_object);
        CHECK(e.row() == fixture.corrupted_rows.front());
    }

    const auto lenient =
        run_compute(InputPaths{(dir.path / "input").string()}, ComputeOptions{});
    CHECK(lenient.patterns_skipped == fixture.corrupted_rows.size());
}

TEST_CASE("missing input files fail with a clear error") {
    TempDir dir("stu_pipeline_missing");
    try {
        run_compute(InputPaths{(dir.path / "nowhere").string()}, ComputeOptions{});
        FAIL("expected io_error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::io_error);
    }
}

TEST_CASE("output table headers are pinned") {
    TempDir dir("stu_pipeline_headers");
    const auto fixture = generate(small_config(76));
    write_fixture(fixture, (dir.path / "input").string());
    const auto result = run_compute(InputPaths{(dir.path / "input").string()}, ComputeOptions{});
    write_compute_outputs(result, (dir.path / "output").string());

    const std::string measures =
        "Per_User_STU_all,Per_User_STU_Grocery,Per_User_STU_Consume,Per_User_STU_Sports,"
        "Per_User_STU_Events,Per_User_STU_Dining,Per_User_STU_Arts,Per_User_STU_Religious,"
        "Per_Visit_STU_all,Per_Visit_STU_Grocery,Per_Visit_STU_Consume,Per_Visit_STU_Sports,"
        "Per_Visit_STU_Events,Per_Visit_STU_Dining,Per_Visit_STU_Arts,Per_Visit_STU_Religious,"
        "Diversity";
    CHECK(first_line(dir.path / "output" / "tract" / "2023-01-02.csv") ==
          "GEOID,Timestamp," + measures);
    for (const auto& level : {"county_subdivision", "county", "metro"})
        CHECK(first_line(dir.path / "output" / level / "2023-01-02.csv") ==
              "GEOID,Timestamp," + measures + ",Gini");
    CHECK(first_line(dir.path / "output" / "weights" / "2023-01-02.csv") ==
          "GEOID,Timestamp,Devices,Population,Visits_all,Visits_Grocery,Visits_Consume,"
          "Visits_Sports,Visits_Events,Visits_Dining,Visits_Arts,Visits_Religious");
    CHECK(first_line(dir.path / "output" / "coverage.csv") ==
          "level,geoid,month,devices,population,coverage");
    CHECK(first_line(dir.path / "output" / "diagnostics.csv") == "kind,key,detail");
}

TEST_CASE("coverage rolls device counts up to county and state") {
    TempDir dir("stu_pipeline_coverage");
    const auto config = small_config(77);
    const auto fixture = generate(config);
    write_fixture(fixture, (dir.path / "input").string());
    const auto result = run_compute(InputPaths{(dir.path / "input").string()}, ComputeOptions{});
    write_compute_outputs(result, (dir.path / "output").string());

    std::ifstream in(dir.path / "output" / "coverage.csv", std::ios::binary);
    CsvReader reader(in);
    (void)reader.next(); // header
    double tract_devices = 0, county_devices = 0, state_devices = 0;
    std::size_t tract_rows = 0;
    while (auto row = reader.next()) {
        const double devices = std::stod(row->at(3));
        if (row->at(0) == "tract") {
            ++tract_rows;
            tract_devices += devices;
            const double population = std::stod(row->at(4));
            const double coverage = std::stod(row->at(5));
            CHECK(coverage == doctest::Approx(devices / population).epsilon(1e-12));
            CHECK(coverage <= 1.0);
        } else if (row->at(0) == "county") {
            county_devices += devices;
        } else {
            CHECK(row->at(0) == "state");
            state_devices += devices;
        }
    }
    CHECK(tract_rows == config.tracts);
    CHECK(tract_devices == county_devices);
    CHECK(tract_devices == state_devices);
}

TEST_CASE("levels can be restricted") {
    TempDir dir("stu_pipeline_levels");
    const auto fixture = generate(small_config(78));
    write_fixture(fixture, (dir.path / "input").string());
    ComputeOptions options;
    options.levels = {Level::tract, Level::metro};
    const auto result = run_compute(InputPaths{(dir.path / "input").string()}, options);
    write_compute_outputs(result, (dir.path / "output").string());
    CHECK(fs::exists(dir.path / "output" / "tract"));
    CHECK(fs::exists(dir.path / "output" / "metro"));
    CHECK_FALSE(fs::exists(dir.path / "output" / "county"));
    CHECK_FALSE(fs::exists(dir.path / "output" / "county_subdivision"));
}
