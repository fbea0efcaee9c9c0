#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stu/csv.hpp"
#include "stu/pipeline.hpp"
#include "stu/stats.hpp"
#include "stu/synth.hpp"

using namespace stu;

namespace {

DwellPolicy make_policy(const std::vector<double>& reps, double open_bucket_minutes) {
    if (!reps.empty()) {
        if (reps.size() != kBucketCount)
            throw CLI::ValidationError("--dwell-reps", "expects exactly 7 values");
        std::array<double, kBucketCount> arr{};
        std::copy(reps.begin(), reps.end(), arr.begin());
        return DwellPolicy(arr);
    }
    return DwellPolicy(open_bucket_minutes);
}

std::vector<Level> parse_levels(const std::vector<std::string>& names) {
    if (names.empty())
        return {kLevels.begin(), kLevels.end()};
    std::vector<Level> levels;
    for (const auto& name : names) {
        auto level = level_from_name(name);
        if (!level)
            throw CLI::ValidationError("--levels", "unknown level '" + name + "'");
        levels.push_back(*level);
    }
    return levels;
}

std::ifstream open_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorKind::io_error, "cannot open " + path);
    return in;
}

bool numeric_cell(const std::string& cell) {
    if (cell.empty())
        return false;
    char* end = nullptr;
    std::strtod(cell.c_str(), &end);
    return end == cell.c_str() + cell.size();
}

// One column of numbers. With a named column the header is required; without
// one the file is a single column whose header row (if any) is skipped.
std::vector<double> read_values(const std::string& path, const std::string& column) {
    auto in = open_file(path);
    CsvReader reader(in);
    std::vector<double> values;
    if (!column.empty()) {
        auto header = reader.next();
        if (!header)
            throw Error(ErrorKind::missing_column, "empty file " + path);
        const std::size_t col = require_column(*header, column, path);
        while (auto row = reader.next())
            if (col < row->size() && !(*row)[col].empty())
                values.push_back(parse_double_field((*row)[col], reader.record_number()));
        return values;
    }
    bool first = true;
    while (auto row = reader.next()) {
        const std::string& cell = row->at(0);
        if (first && !numeric_cell(cell)) {
            first = false;
            continue;
        }
        first = false;
        if (!cell.empty())
            values.push_back(parse_double_field(cell, reader.record_number()));
    }
    return values;
}

std::string kv(std::string_view key, double value) {
    return std::string(key) + "=" + format_double(value) + "\n";
}

std::string kv(std::string_view key, std::size_t value) {
    return std::string(key) + "=" + std::to_string(value) + "\n";
}

std::string kv(std::string_view key, std::string_view value) {
    return std::string(key) + "=" + std::string(value) + "\n";
}

void print_fit(const DistributionFit& fit) {
    const std::string prefix{family_name(fit.family)};
    std::cout << kv(prefix + ".shape", fit.shape) << kv(prefix + ".location", fit.location)
              << kv(prefix + ".scale", fit.scale) << kv(prefix + ".ks_d", fit.ks_statistic)
              << kv(prefix + ".ks_p", fit.p_value)
              << kv(prefix + ".loglik", fit.log_likelihood);
}

struct ComputeCli {
    std::string input;
    std::string output;
    bool strict = false;
    bool lenient = false;
    double open_bucket = 240.0;
    std::vector<double> reps;
    std::vector<std::string> levels;
    int threads = 1;
};

struct AggregateCli {
    std::string input;
    std::string hierarchy;
    std::string output;
    bool strict = false;
    bool lenient = false;
    std::vector<std::string> levels;
};

struct FitCli {
    std::string input;
    std::string column;
    std::vector<std::string> families;
    std::uint64_t seed = 0;
};

struct MoranCli {
    std::string input;
    std::string column;
    std::string edges;
    std::string grid;
    std::size_t permutations = 999;
    std::uint64_t seed = 0;
    int threads = 1;
    bool raw_weights = false;
};

struct Ks2Cli {
    std::string a;
    std::string b;
    std::string column;
};

struct CorrelateCli {
    std::string input;
    std::string x = "x";
    std::string y = "y";
};

struct SynthCli {
    std::string output;
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> tracts, pois, weeks;
    std::optional<double> corruption, colocation, unattributed;
};

struct ValidateCli {
    std::string workdir;
    std::string config;
    std::optional<std::uint64_t> seed;
    double tolerance = 1e-9;
    double open_bucket = 240.0;
    int threads = 1;
};

void run_compute_cmd(const ComputeCli& cli) {
    ComputeOptions options;
    options.strictness = cli.strict ? Strictness::strict : Strictness::lenient;
    options.policy = make_policy(cli.reps, cli.open_bucket);
    options.threads = cli.threads;
    options.levels = parse_levels(cli.levels);

    ComputeResult result = run_compute(InputPaths{cli.input}, options);
    write_compute_outputs(result, cli.output);

    std::cout << kv("pattern_rows", result.patterns_parsed)
              << kv("pattern_rows_skipped", result.patterns_skipped)
              << kv("panel_rows", result.panel_parsed)
              << kv("panel_rows_skipped", result.panel_skipped)
              << kv("tract_weeks", result.tract_rows.size())
              << kv("diagnostics", result.diagnostics.events().size());
    std::size_t unit_weeks = 0;
    for (const auto& [level, rows] : result.levels)
        unit_weeks += rows.size();
    std::cout << kv("unit_weeks", unit_weeks) << "# compute: " << result.tract_rows.size()
              << " tract-weeks across " << result.levels.size() << " levels -> " << cli.output
              << "\n";
}

void run_aggregate_cmd(const AggregateCli& cli) {
    const Strictness strictness = cli.strict ? Strictness::strict : Strictness::lenient;
    auto hierarchy_in = open_file(cli.hierarchy);
    Diagnostics diag;
    const GeoHierarchy hierarchy = load_hierarchy(hierarchy_in, strictness, &diag);
    auto by_week = read_tract_inputs(cli.input, strictness);

    std::vector<std::string> wanted = cli.levels;
    if (wanted.empty())
        wanted = {"county_subdivision", "county", "metro"};
    std::map<Level, std::vector<AggregateOutput>> levels;
    for (Level level : parse_levels(wanted))
        for (auto& [week, inputs] : by_week) {
            auto rows = aggregate_level(inputs, hierarchy, level, &diag);
            auto& out = levels[level];
            out.insert(out.end(), std::make_move_iterator(rows.begin()),
                       std::make_move_iterator(rows.end()));
        }
    write_level_tables(levels, cli.output);
    {
        std::ofstream out(std::filesystem::path(cli.output) / "diagnostics.csv",
                          std::ios::binary);
        CsvWriter writer(out);
        writer.write_row({"kind", "key", "detail"});
        for (const auto& event : diag.events())
            writer.write_row({event.kind, event.key, event.detail});
    }

    std::size_t tract_weeks = 0;
    for (const auto& [week, inputs] : by_week)
        tract_weeks += inputs.size();
    std::size_t unit_weeks = 0;
    for (const auto& [level, rows] : levels)
        unit_weeks += rows.size();
    std::cout << kv("tract_weeks", tract_weeks) << kv("unit_weeks", unit_weeks)
              << kv("diagnostics", diag.events().size()) << "# aggregate: " << unit_weeks
              << " unit-weeks -> " << cli.output << "\n";
}

void run_fit_cmd(const FitCli& cli) {
    const auto values = read_values(cli.input, cli.column);
    std::vector<Family> families;
    if (cli.families.empty()) {
        families.assign(kFamilies.begin(), kFamilies.end());
    } else {
        for (const auto& name : cli.families) {
            auto family = family_from_name(name);
            if (!family)
                throw CLI::ValidationError("--families", "unknown family '" + name + "'");
            families.push_back(*family);
        }
    }
    const FamilyRanking ranking = select_best_family(values, families);
    std::cout << kv("n", values.size());
    if (!ranking.ranked.empty())
        std::cout << kv("best_family", family_name(ranking.ranked.front().family));
    for (std::size_t i = 0; i < ranking.ranked.size(); ++i) {
        std::cout << kv("rank" + std::to_string(i + 1), family_name(ranking.ranked[i].family));
        print_fit(ranking.ranked[i]);
    }
    for (const auto& [family, reason] : ranking.unfit)
        std::cout << kv(std::string(family_name(family)) + ".error", reason);
    if (ranking.ranked.empty())
        std::cout << "# fit: no family admissible on " << values.size() << " values\n";
    else
        std::cout << "# fit: best " << family_name(ranking.ranked.front().family) << " (ks_d="
                  << format_double(ranking.ranked.front().ks_statistic)
                  << ", p=" << format_double(ranking.ranked.front().p_value) << ") over "
                  << values.size() << " values\n";
}

void run_moran_cmd(const MoranCli& cli) {
    std::vector<double> values;
    SpatialWeights weights;
    if (!cli.grid.empty()) {
        const auto sep = cli.grid.find('x');
        if (sep == std::string::npos)
            throw CLI::ValidationError("--grid", "expects ROWSxCOLS, e.g. 10x10");
        const std::size_t rows = std::stoul(cli.grid.substr(0, sep));
        const std::size_t cols = std::stoul(cli.grid.substr(sep + 1));
        weights = SpatialWeights::rook_grid(rows, cols, !cli.raw_weights);
        values = read_values(cli.input, cli.column);
        if (values.size() != rows * cols)
            throw Error(ErrorKind::bad_format, "grid needs " + std::to_string(rows * cols) +
                                                   " values, got " + std::to_string(values.size()));
    } else {
        // Values table with id + value columns; edge list references the ids.
        auto in = open_file(cli.input);
        CsvReader reader(in);
        auto header = reader.next();
        if (!header)
            throw Error(ErrorKind::missing_column, "empty file " + cli.input);
        const std::size_t id_col = require_column(*header, "id", cli.input);
        const std::size_t value_col =
            require_column(*header, cli.column.empty() ? "value" : cli.column, cli.input);
        std::vector<std::string> ids;
        while (auto row = reader.next()) {
            ids.push_back(row->at(id_col));
            values.push_back(parse_double_field(row->at(value_col), reader.record_number()));
        }
        auto edges_in = open_file(cli.edges);
        CsvReader edges_reader(edges_in);
        auto edges_header = edges_reader.next();
        if (!edges_header)
            throw Error(ErrorKind::missing_column, "empty file " + cli.edges);
        const std::size_t source_col = require_column(*edges_header, "source", cli.edges);
        const std::size_t target_col = require_column(*edges_header, "target", cli.edges);
        std::vector<std::pair<std::string, std::string>> edges;
        while (auto row = edges_reader.next())
            edges.emplace_back(row->at(source_col), row->at(target_col));
        weights = SpatialWeights::from_edges(std::move(ids), edges, !cli.raw_weights);
    }

    const MoranResult result =
        morans_i(values, weights, cli.permutations, cli.seed, cli.threads);
    std::cout << kv("i", result.i) << kv("p", result.p_value) << kv("n", result.n)
              << kv("permutations", result.permutations) << "# moran: I="
              << format_double(result.i) << ", two-sided permutation p="
              << format_double(result.p_value) << " (" << result.permutations
              << " permutations)\n";
}

void run_ks2_cmd(const Ks2Cli& cli) {
    const auto a = read_values(cli.a, cli.column);
    const auto b = read_values(cli.b, cli.column);
    const KsResult result = two_sample_ks(a, b);
    std::cout << kv("d", result.statistic) << kv("p", result.p_value) << kv("n_a", a.size())
              << kv("n_b", b.size()) << "# ks2: D=" << format_double(result.statistic)
              << ", p=" << format_double(result.p_value) << "\n";
}

void run_correlate_cmd(const CorrelateCli& cli) {
    auto in = open_file(cli.input);
    CsvReader reader(in);
    auto header = reader.next();
    if (!header)
        throw Error(ErrorKind::missing_column, "empty file " + cli.input);
    const std::size_t x_col = require_column(*header, cli.x, cli.input);
    const std::size_t y_col = require_column(*header, cli.y, cli.input);
    std::vector<double> x, y;
    while (auto row = reader.next()) {
        x.push_back(parse_double_field(row->at(x_col), reader.record_number()));
        y.push_back(parse_double_field(row->at(y_col), reader.record_number()));
    }
    const PearsonResult result = pearson_r(x, y);
    std::cout << kv("r", result.r) << kv("p", result.p_value) << kv("ci_low", result.ci_low)
              << kv("ci_high", result.ci_high) << kv("n", result.n) << "# correlate: r="
              << format_double(result.r) << " [" << format_double(result.ci_low) << ", "
              << format_double(result.ci_high) << "], p=" << format_double(result.p_value)
              << "\n";
}

SynthConfig synth_config_from(const std::string& config_path) {
    if (config_path.empty())
        return SynthConfig{};
    auto in = open_file(config_path);
    return load_synth_config(in);
}

void run_synth_cmd(const SynthCli& cli) {
    SynthConfig config = synth_config_from(cli.config);
    if (cli.seed)
        config.seed = *cli.seed;
    if (cli.tracts)
        config.tracts = *cli.tracts;
    if (cli.pois)
        config.pois = *cli.pois;
    if (cli.weeks)
        config.weeks = *cli.weeks;
    if (cli.corruption)
        config.corruption_rate = *cli.corruption;
    if (cli.colocation)
        config.colocation_rate = *cli.colocation;
    if (cli.unattributed)
        config.unattributed_rate = *cli.unattributed;
    validate_synth_config(config);

    const GeneratedFixture fixture = generate(config);
    write_fixture(fixture, cli.output);
    std::cout << kv("seed", static_cast<std::size_t>(config.seed))
              << kv("tracts", config.tracts) << kv("pois", fixture.catalog.size())
              << kv("weeks", config.weeks) << kv("pattern_rows", fixture.patterns.size())
              << kv("corrupted_rows", fixture.corrupted_rows.size())
              << kv("panel_rows", fixture.panel.size())
              << kv("ledger_visits", fixture.ledger.size()) << "# synth: "
              << fixture.patterns.size() << " pattern rows ("
              << fixture.corrupted_rows.size() << " corrupted) -> " << cli.output << "\n";
}

int run_validate_cmd(const ValidateCli& cli) {
    SynthConfig config = synth_config_from(cli.config);
    if (cli.seed)
        config.seed = *cli.seed;
    validate_synth_config(config);

    const GeneratedFixture fixture = generate(config);
    const std::string input_dir = cli.workdir + "/input";
    const std::string output_dir = cli.workdir + "/output";
    write_fixture(fixture, input_dir);

    ComputeOptions options;
    options.policy = DwellPolicy(cli.open_bucket);
    options.threads = cli.threads;
    const ComputeResult result = run_compute(InputPaths{input_dir}, options);
    write_compute_outputs(result, output_dir);

    const OracleResult oracle = oracle_measures(fixture, options.policy);
    const auto emitted = read_output_tables(output_dir);
    const ValidationReport report = compare_to_oracle(emitted, oracle.values, cli.tolerance);

    std::cout << kv("cells", report.cells) << kv("max_rel_error", report.max_rel_error);
    if (!report.worst_key.empty())
        std::cout << kv("worst_cell", report.worst_key);
    for (const auto& [column, stats] : report.by_column)
        std::cout << kv("column." + column + ".cells", stats.first)
                  << kv("column." + column + ".max_rel_error", stats.second);
    if (oracle.exact_minutes_total > 0)
        std::cout << kv("binning_error",
                        std::abs(oracle.bucketed_minutes_total - oracle.exact_minutes_total) /
                            oracle.exact_minutes_total);
    for (const auto& problem : report.problems)
        std::cout << "# problem: " << problem << "\n";
    std::cout << kv("pass", report.pass ? "true" : "false");
    if (report.pass)
        std::cout << "# validate: PASS, " << report.cells
                  << " cells within tolerance (max_rel_error="
                  << format_double(report.max_rel_error) << ")\n";
    else
        std::cout << "# validate: FAIL, " << report.problems.size() << " problems\n";
    return report.pass ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Social-infrastructure time-use measures from POI foot traffic"};
    app.require_subcommand(1);
    app.set_config("--config-file", "", "Read option defaults from a TOML/INI file");
    int exit_code = 0;

    auto compute = std::make_shared<ComputeCli>();
    {
        CLI::App* cmd = app.add_subcommand(
            "compute", "Run the full pipeline over an input directory");
        cmd->add_option("--input", compute->input, "Directory with the five input tables")
            ->required();
        cmd->add_option("--output", compute->output, "Output directory")->required();
        auto* strict = cmd->add_flag("--strict", compute->strict, "Abort on first malformed row");
        auto* lenient =
            cmd->add_flag("--lenient", compute->lenient, "Skip malformed rows (default)");
        strict->excludes(lenient);
        lenient->excludes(strict);
        cmd->add_option("--open-bucket-minutes", compute->open_bucket,
                        "Representative minutes for the >240 dwell bucket (>= 240)");
        cmd->add_option("--dwell-reps", compute->reps,
                        "Override all 7 bucket representatives (comma separated)")
            ->delimiter(',');
        cmd->add_option("--levels", compute->levels,
                        "Levels to emit: tract,county_subdivision,county,metro (default all)")
            ->delimiter(',');
        cmd->add_option("--threads", compute->threads, "Worker threads, 0 = hardware");
        cmd->callback([compute] { run_compute_cmd(*compute); });
    }

    auto aggregate = std::make_shared<AggregateCli>();
    {
        CLI::App* cmd = app.add_subcommand(
            "aggregate", "Re-aggregate an emitted tract table to higher levels");
        cmd->add_option("--input", aggregate->input,
                        "compute output directory (tract/ and weights/ are read)")
            ->required();
        cmd->add_option("--hierarchy", aggregate->hierarchy, "Hierarchy CSV file")->required();
        cmd->add_option("--output", aggregate->output, "Output directory")->required();
        auto* strict = cmd->add_flag("--strict", aggregate->strict, "Abort on first bad row");
        auto* lenient = cmd->add_flag("--lenient", aggregate->lenient, "Skip bad rows (default)");
        strict->excludes(lenient);
        lenient->excludes(strict);
        cmd->add_option("--levels", aggregate->levels,
                        "Levels to emit (default county_subdivision,county,metro)")
            ->delimiter(',');
        cmd->callback([aggregate] { run_aggregate_cmd(*aggregate); });
    }

    auto fit = std::make_shared<FitCli>();
    {
        CLI::App* cmd =
            app.add_subcommand("fit", "Fit candidate distribution families to a value column");
        cmd->add_option("--input", fit->input, "CSV file of values")->required();
        cmd->add_option("--column", fit->column, "Column name (default: single unnamed column)");
        cmd->add_option("--families", fit->families,
                        "Families to try (default: all seven)")
            ->delimiter(',');
        cmd->add_option("--seed", fit->seed, "Accepted for interface parity; fits are exact");
        cmd->callback([fit] { run_fit_cmd(*fit); });
    }

    auto moran = std::make_shared<MoranCli>();
    {
        CLI::App* cmd = app.add_subcommand(
            "moran", "Global spatial autocorrelation with a permutation test");
        cmd->add_option("--input", moran->input, "Values CSV (id,value or plain column)")
            ->required();
        cmd->add_option("--column", moran->column, "Value column name");
        auto* edges = cmd->add_option("--edges", moran->edges,
                                      "Edge list CSV with source,target columns");
        auto* grid = cmd->add_option("--grid", moran->grid,
                                     "Rook-adjacency grid ROWSxCOLS instead of an edge list");
        edges->excludes(grid);
        grid->excludes(edges);
        cmd->add_option("--permutations", moran->permutations, "Permutation count (default 999)");
        cmd->add_option("--seed", moran->seed, "Permutation RNG seed")->required();
        cmd->add_option("--threads", moran->threads, "Worker threads, 0 = hardware");
        cmd->add_flag("--raw-weights", moran->raw_weights,
                      "Skip row standardization of the weights");
        cmd->callback([moran] { run_moran_cmd(*moran); });
    }

    auto ks2 = std::make_shared<Ks2Cli>();
    {
        CLI::App* cmd =
            app.add_subcommand("ks2", "Two-sample Kolmogorov-Smirnov test on two value files");
        cmd->add_option("--a", ks2->a, "First sample CSV")->required();
        cmd->add_option("--b", ks2->b, "Second sample CSV")->required();
        cmd->add_option("--column", ks2->column, "Column name in both files");
        cmd->callback([ks2] { run_ks2_cmd(*ks2); });
    }

    auto correlate = std::make_shared<CorrelateCli>();
    {
        CLI::App* cmd = app.add_subcommand(
            "correlate", "Pearson correlation with t-test p-value and Fisher-z CI");
        cmd->add_option("--input", correlate->input, "CSV with the two columns")->required();
        cmd->add_option("--x", correlate->x, "X column name (default 'x')");
        cmd->add_option("--y", correlate->y, "Y column name (default 'y')");
        cmd->callback([correlate] { run_correlate_cmd(*correlate); });
    }

    auto synth = std::make_shared<SynthCli>();
    {
        CLI::App* cmd = app.add_subcommand(
            "synth", "Generate a synthetic input fixture with a ground-truth visit ledger");
        cmd->add_option("--output", synth->output, "Fixture directory")->required();
        cmd->add_option("--config", synth->config, "Generator config (key = value lines)");
        cmd->add_option("--seed", synth->seed, "Override the config seed");
        cmd->add_option("--tracts", synth->tracts, "Override tract count");
        cmd->add_option("--pois", synth->pois, "Override POI count");
        cmd->add_option("--weeks", synth->weeks, "Override week count");
        cmd->add_option("--corruption-rate", synth->corruption,
                        "Fraction of pattern rows mangled on write");
        cmd->add_option("--colocation-rate", synth->colocation,
                        "Chance a site carries multiple POI ids");
        cmd->add_option("--unattributed-rate", synth->unattributed,
                        "Extra visit mass with no home block group");
        cmd->callback([synth] { run_synth_cmd(*synth); });
    }

    auto validate = std::make_shared<ValidateCli>();
    {
        CLI::App* cmd = app.add_subcommand(
            "validate", "Generate a fixture, run the pipeline, compare against the oracle");
        cmd->add_option("--workdir", validate->workdir, "Scratch directory")->required();
        cmd->add_option("--config", validate->config, "Generator config file");
        cmd->add_option("--seed", validate->seed, "Override the config seed");
        cmd->add_option("--tolerance", validate->tolerance, "Relative tolerance (default 1e-9)");
        cmd->add_option("--open-bucket-minutes", validate->open_bucket,
                        "Open bucket representative used on both sides");
        cmd->add_option("--threads", validate->threads, "Worker threads, 0 = hardware");
        cmd->callback([validate, &exit_code] { exit_code = run_validate_cmd(*validate); });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const Error& e) {
        // what() already carries the error name and, when known, the row.
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return exit_code;
}
