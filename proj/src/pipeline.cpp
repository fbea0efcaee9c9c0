#include "stu/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <tuple>
#include <utility>

#include "stu/csv.hpp"
#include "stu/synth.hpp"

namespace fs = std::filesystem;

namespace stu {
namespace {

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorKind::io_error, "cannot open " + path);
    return in;
}

std::ofstream open_output(const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error(ErrorKind::io_error, "cannot write " + path.string());
    return out;
}

std::vector<std::string> measure_columns(bool with_gini) {
    std::vector<std::string> cols;
    cols.push_back(per_user_column(std::nullopt));
    for (Category k : kCategories)
        cols.push_back(per_user_column(k));
    cols.push_back(per_visit_column(std::nullopt));
    for (Category k : kCategories)
        cols.push_back(per_visit_column(k));
    cols.push_back("Diversity");
    if (with_gini)
        cols.push_back("Gini");
    return cols;
}

std::vector<std::optional<double>> measure_cells(const AggregateOutput& row, bool with_gini) {
    std::vector<std::optional<double>> cells;
    cells.push_back(row.per_user_all);
    for (std::size_t k = 0; k < kCategoryCount; ++k)
        cells.push_back(row.per_user[k]);
    cells.push_back(row.per_visit_all);
    for (std::size_t k = 0; k < kCategoryCount; ++k)
        cells.push_back(row.per_visit[k]);
    cells.push_back(row.diversity);
    if (with_gini)
        cells.push_back(row.gini);
    return cells;
}

std::vector<fs::path> csv_files_sorted(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.path().extension() == ".csv")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    return files;
}

std::optional<double> optional_cell(const std::vector<std::string>& row, std::size_t col,
                                    std::size_t record) {
    if (col >= row.size() || row[col].empty())
        return std::nullopt;
    return parse_double_field(row[col], record);
}

} // namespace

ComputeResult run_compute(const InputPaths& inputs, const ComputeOptions& options) {
    ComputeResult result;
    Diagnostics& diag = result.diagnostics;

    auto catalog_in = open_input(inputs.poi_catalog());
    const PoiCatalog catalog = load_poi_catalog(catalog_in, options.strictness, &diag);
    auto categories_in = open_input(inputs.category_map());
    const CategoryMap categories = load_category_map(categories_in, options.strictness, &diag);
    auto hierarchy_in = open_input(inputs.hierarchy());
    const GeoHierarchy hierarchy = load_hierarchy(hierarchy_in, options.strictness, &diag);

    auto panel_in = open_input(inputs.panel());
    auto panel = parse_panel(panel_in, options.strictness, &diag);
    result.panel = std::move(panel.records);
    result.panel_parsed = result.panel.size();
    result.panel_skipped = panel.skipped;

    auto patterns_in = open_input(inputs.weekly_patterns());
    auto patterns = parse_weekly_patterns(patterns_in, options.strictness, &diag);
    result.patterns_parsed = patterns.records.size();
    result.patterns_skipped = patterns.skipped;
    if (patterns.records.empty())
        diag.emit("empty_input", "weekly_patterns", "no pattern rows parsed");

    // Tract populations straight from the panel (first row wins, matching the
    // device join), apportioned through the crosswalk when one is provided.
    std::map<YearMonth, std::map<std::string, double>> population_by_month;
    for (const auto& row : result.panel)
        if (row.geoid.size() == 11 && row.population)
            population_by_month[row.month].emplace(row.geoid, *row.population);
    if (!hierarchy.crosswalk.empty())
        for (auto& [month, values] : population_by_month)
            values = apply_crosswalk(values, hierarchy.crosswalk, options.strictness, &diag);

    std::map<Date, std::vector<WeeklyPattern>> by_week;
    for (auto& p : patterns.records)
        by_week[p.week_start].push_back(std::move(p));
    std::vector<Date> weeks;
    weeks.reserve(by_week.size());
    for (const auto& [week, rows] : by_week)
        weeks.push_back(week);

    struct WeekSlot {
        std::vector<AggregateInput> tracts;
        std::map<Level, std::vector<AggregateOutput>> levels;
        Diagnostics diag;
    };
    std::vector<WeekSlot> slots(weeks.size());
    const std::span<const PanelObservation> panel_span(result.panel);

    // Weeks are independent work units; each slot is owned by one index.
    parallel_for(weeks.size(), options.threads, [&](std::size_t wi) {
        WeekSlot& slot = slots[wi];
        const Date week = weeks[wi];
        std::vector<WeeklyPattern> week_patterns = std::move(by_week.find(week)->second);

        week_patterns = dedup_colocated(std::move(week_patterns), catalog, &slot.diag);
        const auto cells = tract_category_time(week_patterns, catalog, categories, options.policy,
                                               options.strictness, &slot.diag);
        // Unknown-POI reporting already happened above; profiles stay quiet.
        const auto profiles = sector_time_profiles(week_patterns, catalog, categories,
                                                   options.policy, options.strictness, nullptr);
        auto stus = foundational_stu(cells, panel_span, options.strictness, &slot.diag);

        std::map<std::string, const SectorTimeProfile*> profile_by_tract;
        for (const auto& p : profiles)
            profile_by_tract.emplace(p.tract_geoid, &p);
        const std::map<std::string, double>* populations = nullptr;
        if (auto pit = population_by_month.find(month_of(week)); pit != population_by_month.end())
            populations = &pit->second;

        slot.tracts.reserve(stus.size());
        for (auto& stu_row : stus) {
            AggregateInput input;
            input.stu = std::move(stu_row);
            if (auto prof = profile_by_tract.find(input.stu.tract_geoid);
                prof != profile_by_tract.end()) {
                try {
                    input.diversity = shannon_diversity(*prof->second);
                } catch (const Error& e) {
                    slot.diag.emit("diversity_undefined",
                                   input.stu.tract_geoid + "|" + week.iso(), e.what());
                }
            }
            if (populations)
                if (auto pop = populations->find(input.stu.tract_geoid); pop != populations->end())
                    input.population = pop->second;
            slot.tracts.push_back(std::move(input));
        }

        for (Level level : options.levels)
            slot.levels[level] =
                aggregate_level(slot.tracts, hierarchy, level, &slot.diag);
    });

    for (auto& slot : slots) {
        for (auto& row : slot.tracts)
            result.tract_rows.push_back(std::move(row));
        for (auto& [level, rows] : slot.levels) {
            auto& out = result.levels[level];
            out.insert(out.end(), std::make_move_iterator(rows.begin()),
                       std::make_move_iterator(rows.end()));
        }
        diag.merge(std::move(slot.diag));
    }
    return result;
}

void write_level_tables(const std::map<Level, std::vector<AggregateOutput>>& levels,
                        const std::string& outdir) {
    for (const auto& [level, rows] : levels) {
        const bool with_gini = level != Level::tract;
        const fs::path dir = fs::path(outdir) / std::string(level_name(level));
        fs::create_directories(dir);

        std::map<Date, std::vector<const AggregateOutput*>> file_rows;
        for (const auto& row : rows)
            file_rows[row.week_start].push_back(&row);
        for (auto& [week, week_rows] : file_rows) {
            std::sort(week_rows.begin(), week_rows.end(),
                      [](const AggregateOutput* a, const AggregateOutput* b) {
                          return a->geoid < b->geoid;
                      });
            auto out = open_output(dir / (week.iso() + ".csv"));
            CsvWriter writer(out);
            std::vector<std::string> header = {"GEOID", "Timestamp"};
            for (auto& column : measure_columns(with_gini))
                header.push_back(std::move(column));
            writer.write_row(header);
            for (const AggregateOutput* row : week_rows) {
                std::vector<std::string> fields = {row->geoid, week.iso()};
                for (const auto& value : measure_cells(*row, with_gini))
                    fields.push_back(value ? format_double(*value) : std::string());
                writer.write_row(fields);
            }
        }
    }
}

void write_compute_outputs(const ComputeResult& result, const std::string& outdir) {
    fs::create_directories(outdir);
    write_level_tables(result.levels, outdir);

    // Weights sidecar: the denominators aggregation runs on, one file per week.
    const fs::path weights_dir = fs::path(outdir) / "weights";
    fs::create_directories(weights_dir);
    std::map<Date, std::vector<const AggregateInput*>> tract_by_week;
    for (const auto& row : result.tract_rows)
        tract_by_week[row.stu.week_start].push_back(&row);
    for (auto& [week, rows] : tract_by_week) {
        std::sort(rows.begin(), rows.end(), [](const AggregateInput* a, const AggregateInput* b) {
            return a->stu.tract_geoid < b->stu.tract_geoid;
        });
        auto out = open_output(weights_dir / (week.iso() + ".csv"));
        CsvWriter writer(out);
        std::vector<std::string> header = {"GEOID", "Timestamp", "Devices", "Population",
                                           "Visits_all"};
        for (Category k : kCategories)
            header.push_back("Visits_" + std::string(category_name(k)));
        writer.write_row(header);
        for (const AggregateInput* row : rows) {
            std::vector<std::string> fields = {row->stu.tract_geoid, week.iso(),
                                               format_double(row->stu.device_count),
                                               row->population ? format_double(*row->population)
                                                               : std::string(),
                                               format_double(row->stu.total_attributed_visits)};
            for (std::size_t k = 0; k < kCategoryCount; ++k)
                fields.push_back(format_double(row->stu.category_visits[k]));
            writer.write_row(fields);
        }
    }

    // Monthly device coverage, rolled up tract -> county -> state. Tracts
    // without a population stay out of the roll-ups (coverage would skew).
    struct Roll {
        double devices = 0;
        double population = 0;
        bool has_population = false;
    };
    std::map<std::tuple<int, std::string, YearMonth>, Roll> rolls;
    std::set<std::pair<std::string, YearMonth>> seen;
    for (const auto& row : result.panel) {
        if (row.geoid.size() != 11)
            continue;
        if (!seen.insert({row.geoid, row.month}).second)
            continue;
        Roll& tract = rolls[{0, row.geoid, row.month}];
        tract.devices += row.device_count;
        if (row.population) {
            tract.population += *row.population;
            tract.has_population = true;
            for (int rank : {1, 2}) {
                Roll& up = rolls[{rank, row.geoid.substr(0, rank == 1 ? 5 : 2), row.month}];
                up.devices += row.device_count;
                up.population += *row.population;
                up.has_population = true;
            }
        }
    }
    {
        auto out = open_output(fs::path(outdir) / "coverage.csv");
        CsvWriter writer(out);
        writer.write_row({"level", "geoid", "month", "devices", "population", "coverage"});
        static constexpr std::array<std::string_view, 3> kRollNames = {"tract", "county", "state"};
        for (const auto& [key, roll] : rolls) {
            const auto& [rank, geoid, month] = key;
            const bool defined = roll.has_population && roll.population > 0;
            writer.write_row({std::string(kRollNames[static_cast<std::size_t>(rank)]), geoid,
                              month.iso(), format_double(roll.devices),
                              roll.has_population ? format_double(roll.population) : std::string(),
                              defined ? format_double(roll.devices / roll.population)
                                      : std::string()});
        }
    }

    {
        auto out = open_output(fs::path(outdir) / "diagnostics.csv");
        CsvWriter writer(out);
        writer.write_row({"kind", "key", "detail"});
        for (const auto& event : result.diagnostics.events())
            writer.write_row({event.kind, event.key, event.detail});
    }
}

std::map<Date, std::vector<AggregateInput>> read_tract_inputs(const std::string& computed_dir,
                                                              Strictness strictness) {
    const fs::path tract_dir = fs::path(computed_dir) / "tract";
    const fs::path weights_dir = fs::path(computed_dir) / "weights";
    if (!fs::is_directory(tract_dir))
        throw Error(ErrorKind::io_error, "no tract tables under " + computed_dir);
    if (!fs::is_directory(weights_dir))
        throw Error(ErrorKind::io_error, "no weights tables under " + computed_dir);

    struct Weights {
        double devices = 0;
        std::optional<double> population;
        double total_visits = 0;
        std::array<double, kCategoryCount> category_visits{};
    };
    std::map<std::pair<std::string, Date>, Weights> weights;
    for (const auto& file : csv_files_sorted(weights_dir)) {
        auto in = open_input(file.string());
        CsvReader reader(in);
        auto header = reader.next();
        if (!header)
            throw Error(ErrorKind::missing_column, "empty weights table " + file.string());
        const std::size_t geoid_col = require_column(*header, "GEOID", "weights");
        const std::size_t ts_col = require_column(*header, "Timestamp", "weights");
        const std::size_t dev_col = require_column(*header, "Devices", "weights");
        const std::size_t pop_col = require_column(*header, "Population", "weights");
        const std::size_t all_col = require_column(*header, "Visits_all", "weights");
        std::array<std::size_t, kCategoryCount> cat_cols{};
        for (std::size_t k = 0; k < kCategoryCount; ++k)
            cat_cols[k] = require_column(
                *header, "Visits_" + std::string(category_name(kCategories[k])), "weights");
        while (auto row = reader.next()) {
            const std::size_t record = reader.record_number();
            Weights w;
            w.devices = parse_double_field(row->at(dev_col), record);
            w.population = optional_cell(*row, pop_col, record);
            w.total_visits = parse_double_field(row->at(all_col), record);
            for (std::size_t k = 0; k < kCategoryCount; ++k)
                w.category_visits[k] = parse_double_field(row->at(cat_cols[k]), record);
            weights.emplace(std::pair{row->at(geoid_col), parse_date(row->at(ts_col))},
                            std::move(w));
        }
    }

    std::map<Date, std::vector<AggregateInput>> inputs;
    for (const auto& file : csv_files_sorted(tract_dir)) {
        auto in = open_input(file.string());
        CsvReader reader(in);
        auto header = reader.next();
        if (!header)
            throw Error(ErrorKind::missing_column, "empty tract table " + file.string());
        const std::size_t geoid_col = require_column(*header, "GEOID", "tract table");
        const std::size_t ts_col = require_column(*header, "Timestamp", "tract table");
        const std::size_t pu_all = require_column(*header, per_user_column(std::nullopt),
                                                  "tract table");
        const std::size_t pv_all = require_column(*header, per_visit_column(std::nullopt),
                                                  "tract table");
        const std::size_t div_col = require_column(*header, "Diversity", "tract table");
        std::array<std::size_t, kCategoryCount> pu_cols{}, pv_cols{};
        for (std::size_t k = 0; k < kCategoryCount; ++k) {
            pu_cols[k] = require_column(*header, per_user_column(kCategories[k]), "tract table");
            pv_cols[k] = require_column(*header, per_visit_column(kCategories[k]), "tract table");
        }
        while (auto row = reader.next()) {
            const std::size_t record = reader.record_number();
            AggregateInput input;
            input.stu.tract_geoid = row->at(geoid_col);
            input.stu.week_start = parse_date(row->at(ts_col));
            input.stu.per_user_all = optional_cell(*row, pu_all, record);
            input.stu.per_visit_all = optional_cell(*row, pv_all, record);
            for (std::size_t k = 0; k < kCategoryCount; ++k) {
                input.stu.per_user[k] = optional_cell(*row, pu_cols[k], record);
                input.stu.per_visit[k] = optional_cell(*row, pv_cols[k], record);
            }
            input.diversity = optional_cell(*row, div_col, record);

            auto wit = weights.find({input.stu.tract_geoid, input.stu.week_start});
            if (wit == weights.end()) {
                if (strictness == Strictness::strict)
                    throw Error(ErrorKind::bad_format,
                                "no weights row for " + input.stu.tract_geoid + " " +
                                    input.stu.week_start.iso(),
                                record);
                continue;
            }
            input.stu.device_count = wit->second.devices;
            input.population = wit->second.population;
            input.stu.total_attributed_visits = wit->second.total_visits;
            input.stu.category_visits = wit->second.category_visits;
            inputs[input.stu.week_start].push_back(std::move(input));
        }
    }
    return inputs;
}

std::map<std::string, double> read_output_tables(const std::string& outdir) {
    std::map<std::string, double> cells;
    for (Level level : kLevels) {
        const fs::path dir = fs::path(outdir) / std::string(level_name(level));
        if (!fs::is_directory(dir))
            continue;
        for (const auto& file : csv_files_sorted(dir)) {
            auto in = open_input(file.string());
            CsvReader reader(in);
            auto header = reader.next();
            if (!header)
                continue;
            const std::size_t geoid_col = require_column(*header, "GEOID", file.string());
            const std::size_t ts_col = require_column(*header, "Timestamp", file.string());
            while (auto row = reader.next()) {
                const Date week = parse_date(row->at(ts_col));
                for (std::size_t c = 0; c < header->size(); ++c) {
                    if (c == geoid_col || c == ts_col)
                        continue;
                    if (c >= row->size() || (*row)[c].empty())
                        continue;
                    cells[oracle_key(level_name(level), row->at(geoid_col), week,
                                     (*header)[c])] =
                        parse_double_field((*row)[c], reader.record_number());
                }
            }
        }
    }
    return cells;
}

ValidationReport compare_to_oracle(const std::map<std::string, double>& emitted,
                                   const std::map<std::string, double>& oracle,
                                   double tolerance) {
    ValidationReport report;
    std::size_t overflow = 0;
    auto note = [&](std::string text) {
        if (report.problems.size() < 50)
            report.problems.push_back(std::move(text));
        else
            ++overflow;
    };

    for (const auto& [key, want] : oracle) {
        auto it = emitted.find(key);
        if (it == emitted.end()) {
            note("missing: " + key);
            continue;
        }
        const double got = it->second;
        const double rel = std::abs(got - want) / std::max(std::abs(want), 1e-12);
        ++report.cells;
        auto& column = report.by_column[key.substr(key.rfind('|') + 1)];
        ++column.first;
        column.second = std::max(column.second, rel);
        if (rel > report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst_key = key;
        }
        if (rel > tolerance)
            note("mismatch: " + key + " got=" + format_double(got) +
                 " want=" + format_double(want));
    }
    for (const auto& [key, value] : emitted)
        if (!oracle.contains(key))
            note("unexpected: " + key);
    if (overflow > 0)
        report.problems.push_back("... and " + std::to_string(overflow) + " more");
    report.pass = report.problems.empty();
    return report;
}

} // namespace stu
