#pragma once

#include <map>
#include <string>
#include <vector>

#include "stu/aggregate.hpp"
#include "stu/common.hpp"
#include "stu/dispersion.hpp"
#include "stu/ingest.hpp"
#include "stu/measures.hpp"

namespace stu {

// Fixed file names inside an input directory.
struct InputPaths {
    std::string dir;

    std::string weekly_patterns() const { return dir + "/weekly_patterns.csv"; }
    std::string panel() const { return dir + "/panel.csv"; }
    std::string poi_catalog() const { return dir + "/poi_catalog.csv"; }
    std::string category_map() const { return dir + "/category_map.csv"; }
    std::string hierarchy() const { return dir + "/hierarchy.csv"; }
};

struct ComputeOptions {
    Strictness strictness = Strictness::lenient;
    DwellPolicy policy;
    int threads = 1;
    std::vector<Level> levels = {Level::tract, Level::county_subdivision, Level::county,
                                 Level::metro};
};

struct ComputeResult {
    std::vector<AggregateInput> tract_rows; // week-major, GEOID-minor order
    std::map<Level, std::vector<AggregateOutput>> levels;
    std::vector<PanelObservation> panel;
    Diagnostics diagnostics;
    std::size_t patterns_parsed = 0;
    std::size_t patterns_skipped = 0;
    std::size_t panel_parsed = 0;
    std::size_t panel_skipped = 0;
};

// ingest -> dedup -> measures -> diversity -> aggregation, one week at a
// time (weeks run in parallel; results merge in week order, so output bytes
// do not depend on the thread count).
ComputeResult run_compute(const InputPaths& inputs, const ComputeOptions& options);

// Writes <level>/<yyyy-mm-dd>.csv per level and week, a weights/ sidecar with
// the tract-level denominators, coverage.csv, and diagnostics.csv.
void write_compute_outputs(const ComputeResult& result, const std::string& outdir);

// Reconstructs aggregation inputs from an emitted tract table + weights
// sidecar, keyed by week. Used to re-aggregate without recomputing measures.
std::map<Date, std::vector<AggregateInput>> read_tract_inputs(const std::string& computed_dir,
                                                              Strictness strictness);

// Writes one measure table tree (as write_compute_outputs does for levels).
void write_level_tables(const std::map<Level, std::vector<AggregateOutput>>& levels,
                        const std::string& outdir);

// Flattens every value cell of every emitted level table into
// "level|geoid|week|column" -> value form.
std::map<std::string, double> read_output_tables(const std::string& outdir);

struct ValidationReport {
    bool pass = false;
    std::size_t cells = 0;
    double max_rel_error = 0;
    std::string worst_key;
    std::vector<std::string> problems; // capped listing of mismatches
    // column -> (cells compared, max relative error)
    std::map<std::string, std::pair<std::size_t, double>> by_column;
};

ValidationReport compare_to_oracle(const std::map<std::string, double>& emitted,
                                   const std::map<std::string, double>& oracle, double tolerance);

} // namespace stu
