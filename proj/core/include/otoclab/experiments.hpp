#pragma once

// Run orchestration: configuration, the experiment recipes, result tables with
// provenance headers, and CSV / JSON / SVG emission.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "otoclab/classical.hpp"
#include "otoclab/otoc.hpp"

namespace otoclab {

// Bumped whenever a table's column layout changes.
inline constexpr int kFormatVersion = 1;

std::string_view code_version();

struct PlotRequest {
    std::string table;                 // CSV file to read
    std::string x;
    std::vector<std::string> y;
    bool log_x = false;
    bool log_y = false;
    std::string title;
    std::string output = "plot.svg";   // file name inside the run directory
};

struct RunConfig {
    std::string command;

    std::vector<int> N = {20};
    double xi = 0.4;
    double epsilon = 0.4;
    std::string diagonalization = "parity";   // "parity" or "full"

    std::string V = "D_x";
    std::string W = "D_x";

    TimeSampler sampler;              // seed is copied from `seed`
    std::optional<std::uint64_t> seed;

    bool short_time = true;
    double scan_t0 = 1e-3;
    std::size_t fit_points = 16;
    double bisection_rel_width = 1e-3;

    std::size_t window = 50;          // 0 selects 2N
    double lambda_min_r2 = 0.9;       // fits below this are left out of lambda smoothing
    std::size_t lambda_window = 60;   // 0 selects 2N
    // A smoothed lambda point is kept only when at least this fraction of
    // its window produced an accepted fit.
    double lambda_min_coverage = 0.3;

    std::vector<double> classical_xi = {0.4};
    std::vector<double> classical_energies = {0.0};
    FregConfig freg;
    bool dump_section = false;

    std::string scaling_mode = "u3";  // "u3", "goe" or "synthetic"
    std::vector<double> scaling_energies = {0.0};
    std::size_t scaling_window = 0;   // 0 selects 2N
    double synthetic_alpha = -1.0;
    double synthetic_beta = 2.0;

    PlotRequest plot;

    std::filesystem::path out = "runs";
    unsigned threads = 1;

    // Throws InvalidParameter naming the offending key.
    void validate() const;
};

// Parses JSON text. Unknown keys and type mismatches are reported with the
// dotted key path. The command may be left empty here and set by the caller.
RunConfig parse_config(std::string_view json_text);
RunConfig load_config(const std::filesystem::path& path);

// Fully resolved config as canonical JSON (sorted keys, two-space indent).
std::string config_to_json(const RunConfig& config);

// 16 hex digits of FNV-1a over the canonical JSON, with `out` and `threads`
// left out since they do not affect results.
std::string config_hash(const RunConfig& config);

struct Column {
    std::string name;
    std::string unit;   // empty for dimensionless
};

// Empty cell = undefined value.
using Cell = std::variant<std::monostate, double, std::int64_t, std::string>;

struct Provenance {
    std::string command;
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string code_version;
    int format_version = kFormatVersion;
};

class ResultTable {
public:
    ResultTable() = default;
    ResultTable(std::string name, std::vector<Column> columns);

    const std::string& name() const { return name_; }
    const std::vector<Column>& columns() const { return columns_; }
    const std::vector<std::vector<Cell>>& rows() const { return rows_; }
    std::size_t row_count() const { return rows_.size(); }

    // Throws InvalidParameter on a width mismatch.
    void add_row(std::vector<Cell> row);

    std::optional<std::size_t> column_index(std::string_view name) const;
    // Numeric view of a column; strings and empty cells map to nullopt.
    // Throws InvalidParameter for an unknown column.
    std::vector<std::optional<double>> numeric(std::string_view column) const;

    Provenance provenance;

private:
    std::string name_;
    std::vector<Column> columns_;
    std::vector<std::vector<Cell>> rows_;
};

// '#'-prefixed provenance lines, header row, then rows. Doubles use 17
// significant digits.
std::string format_csv(const ResultTable& table);
ResultTable parse_csv(std::string_view text, std::string name = "table");
ResultTable read_csv(const std::filesystem::path& path);

using SummaryValue = std::variant<double, std::int64_t, std::string, std::vector<double>>;

struct RunResult {
    std::vector<ResultTable> tables;
    std::map<std::string, SummaryValue> summary;
    std::vector<std::pair<std::string, std::string>> figures;   // file name, SVG text
};

RunResult run_spectrum(const RunConfig& config);
RunResult run_otoc_scan(const RunConfig& config);
RunResult run_classical_map(const RunConfig& config);
RunResult run_scaling(const RunConfig& config);
RunResult run_goe(const RunConfig& config);
RunResult run_plot(const RunConfig& config);

// Dispatches on config.command.
RunResult run_command(const RunConfig& config);

// Writes <out>/<hash>/ with one CSV per table, summary.json, config.json and
// the figures. Returns the run directory.
std::filesystem::path write_run(const RunResult& result, const RunConfig& config);

struct PlotSpec {
    std::string x;
    std::vector<std::string> y;
    bool log_x = false;
    bool log_y = false;
    bool lines = false;     // connect points in row order instead of markers
    std::string title;
    double width = 640;
    double height = 420;
};

// Standalone SVG chart of the y columns against x. Points that are undefined
// (or non-positive on a log axis) are skipped. Throws InvalidParameter when a
// referenced column is missing.
std::string emit_svg(const ResultTable& table, const PlotSpec& spec);

// Per-state analysis shared by the otoc and goe commands.
struct ScanOutput {
    std::vector<OtocRecord> records;
    SmoothedCurve nu;
    SmoothedCurve lambda;
    std::size_t dim = 0;
};

ScanOutput scan_model(const RunConfig& config, int N, bool goe_hamiltonian);

} // namespace otoclab
