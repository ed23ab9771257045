#include "otoclab/experiments.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "otoclab/algebra.hpp"
#include "otoclab/error.hpp"
#include "otoclab/spectrum.hpp"
#include "parallel.hpp"

#ifndef OTOCLAB_VERSION
#define OTOCLAB_VERSION "0.0.0"
#endif

namespace otoclab {

using json = nlohmann::json;

std::string_view code_version() { return OTOCLAB_VERSION; }

namespace {

const std::set<std::string> kCommands = {"spectrum", "otoc", "classical", "scaling", "goe", "plot"};

[[noreturn]] void bad_key(const std::string& key, const std::string& what) {
    throw InvalidParameter(key + ": " + what);
}

// Reads one JSON object, tracking which keys were consumed so leftovers can be
// reported as unknown.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) bad_key(path_.empty() ? "<root>" : path_, "expected an object");
    }

    std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

    const json* find(const std::string& k) {
        seen_.insert(k);
        auto it = j_.find(k);
        return it == j_.end() ? nullptr : &*it;
    }

    void number(const std::string& k, double& dst) {
        if (const json* v = find(k)) {
            if (!v->is_number()) bad_key(key(k), "expected a number");
            dst = v->get<double>();
        }
    }

    template <class Int>
    void integer(const std::string& k, Int& dst) {
        if (const json* v = find(k)) {
            if (!v->is_number_integer()) bad_key(key(k), "expected an integer");
            if constexpr (std::is_unsigned_v<Int>) {
                if (v->is_number_unsigned()) {
                    dst = static_cast<Int>(v->get<std::uint64_t>());
                } else {
                    if (v->get<std::int64_t>() < 0) bad_key(key(k), "must be non-negative");
                    dst = static_cast<Int>(v->get<std::int64_t>());
                }
            } else {
                dst = static_cast<Int>(v->get<std::int64_t>());
            }
        }
    }

    void boolean(const std::string& k, bool& dst) {
        if (const json* v = find(k)) {
            if (!v->is_boolean()) bad_key(key(k), "expected true or false");
            dst = v->get<bool>();
        }
    }

    void string(const std::string& k, std::string& dst) {
        if (const json* v = find(k)) {
            if (!v->is_string()) bad_key(key(k), "expected a string");
            dst = v->get<std::string>();
        }
    }

    void numbers(const std::string& k, std::vector<double>& dst) {
        if (const json* v = find(k)) {
            if (v->is_number()) {
                dst = {v->get<double>()};
                return;
            }
            if (!v->is_array()) bad_key(key(k), "expected a number or a list of numbers");
            dst.clear();
            for (const auto& e : *v) {
                if (!e.is_number()) bad_key(key(k), "expected a list of numbers");
                dst.push_back(e.get<double>());
            }
        }
    }

    void strings(const std::string& k, std::vector<std::string>& dst) {
        if (const json* v = find(k)) {
            if (v->is_string()) {
                dst = {v->get<std::string>()};
                return;
            }
            if (!v->is_array()) bad_key(key(k), "expected a string or a list of strings");
            dst.clear();
            for (const auto& e : *v) {
                if (!e.is_string()) bad_key(key(k), "expected a list of strings");
                dst.push_back(e.get<std::string>());
            }
        }
    }

    void finish() const {
        for (const auto& [k, v] : j_.items()) {
            if (!seen_.count(k)) bad_key(key(k), "unknown key");
        }
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

template <class F>
void with_object(ObjectReader& parent, const std::string& k, F&& f) {
    if (const json* v = parent.find(k)) {
        ObjectReader child(*v, parent.key(k));
        f(child);
        child.finish();
    }
}

std::string plane_name(SectionPlane p) { return p == SectionPlane::q1 ? "q1" : "q2"; }

std::string orientation_name(Orientation o) {
    switch (o) {
    case Orientation::positive: return "positive";
    case Orientation::negative: return "negative";
    case Orientation::both: return "both";
    }
    return "positive";
}

json config_json(const RunConfig& c) {
    json j;
    j["command"] = c.command;
    j["seed"] = c.seed ? json(*c.seed) : json(nullptr);
    j["model"] = {{"N", c.N}, {"xi", c.xi}, {"epsilon", c.epsilon}, {"diagonalization", c.diagonalization}};
    j["operators"] = {{"V", c.V}, {"W", c.W}};
    j["sampler"] = {{"t_min", c.sampler.t_min}, {"t_max", c.sampler.t_max}, {"count", c.sampler.count}};
    j["short_time"] = {{"enabled", c.short_time},
                       {"t0", c.scan_t0},
                       {"fit_points", c.fit_points},
                       {"rel_width", c.bisection_rel_width}};
    j["smoothing"] = {{"window", c.window},
                      {"lambda_min_r2", c.lambda_min_r2},
                      {"lambda_window", c.lambda_window},
                      {"lambda_min_coverage", c.lambda_min_coverage}};
    j["classical"] = {{"xi", c.classical_xi},
                      {"energies", c.classical_energies},
                      {"cells", c.freg.cells},
                      {"budget", c.freg.budget},
                      {"T", c.freg.T},
                      {"renorm_interval", c.freg.renorm_interval},
                      {"tol", c.freg.tol},
                      {"plane", plane_name(c.freg.section.plane)},
                      {"orientation", orientation_name(c.freg.section.orientation)},
                      {"batch", c.freg.batch},
                      {"early_exit", c.freg.early_exit},
                      {"dump_section", c.dump_section}};
    j["scaling"] = {{"mode", c.scaling_mode},
                    {"energies", c.scaling_energies},
                    {"window", c.scaling_window},
                    {"alpha", c.synthetic_alpha},
                    {"beta", c.synthetic_beta}};
    j["plot"] = {{"table", c.plot.table}, {"x", c.plot.x},         {"y", c.plot.y},
                 {"log_x", c.plot.log_x}, {"log_y", c.plot.log_y}, {"title", c.plot.title},
                 {"output", c.plot.output}};
    j["out"] = c.out.string();
    j["threads"] = c.threads;
    return j;
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex16(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
    return buf;
}

std::string format_double(double v) {
    if (!std::isfinite(v)) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string quote_csv(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch;
    }
    return out + "\"";
}

std::string format_cell(const Cell& c) {
    return std::visit(
        [](const auto& v) -> std::string {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, std::monostate>) {
                return "";
            } else if constexpr (std::is_same_v<T, double>) {
                return format_double(v);
            } else if constexpr (std::is_same_v<T, std::int64_t>) {
                return std::to_string(v);
            } else {
                return quote_csv(v);
            }
        },
        c);
}

Cell opt_cell(const std::optional<double>& v) {
    if (v && std::isfinite(*v)) return *v;
    return std::monostate{};
}

Cell int_cell(std::size_t v) { return static_cast<std::int64_t>(v); }

std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(std::move(cur));
    return out;
}

Cell parse_cell(const std::string& s) {
    if (s.empty()) return std::monostate{};
    const char* b = s.c_str();
    char* end = nullptr;
    const long long i = std::strtoll(b, &end, 10);
    if (end && *end == '\0') return static_cast<std::int64_t>(i);
    const double d = std::strtod(b, &end);
    if (end && *end == '\0') return d;
    return s;
}

ResultTable make_table(const RunConfig& config, std::string name, std::vector<Column> columns) {
    ResultTable t(std::move(name), std::move(columns));
    t.provenance.command = config.command;
    t.provenance.config_hash = config_hash(config);
    t.provenance.seed = config.seed.value_or(0);
    t.provenance.code_version = std::string(code_version());
    return t;
}

OperatorMatrix operator_at(const FockBasis& basis, const std::string& name) {
    return generator_matrix(basis, parse_generator(name));
}

std::string join_flags(const std::vector<std::string>& flags) {
    std::string out;
    for (const auto& f : flags) {
        if (!out.empty()) out += ';';
        out += f;
    }
    return out;
}

std::size_t resolved_window(std::size_t window, int N) {
    return window == 0 ? static_cast<std::size_t>(2 * N) : window;
}

std::vector<Column> scan_columns() {
    return {{"n", ""},         {"E_n", "energy"},       {"mean", ""},    {"mean/dim", ""},
            {"sigma", ""},     {"sigma/dim", ""},       {"nu", ""},      {"lambda_q", "1/time"},
            {"t_tilde", "time"}, {"fit_R2", ""},        {"flags", ""}};
}

void add_scan_tables(const RunConfig& config, const ScanOutput& scan, const std::string& stem,
                     RunResult& result) {
    auto table = make_table(config, stem, scan_columns());
    const double dim = static_cast<double>(scan.dim);
    for (const auto& r : scan.records) {
        std::vector<std::string> flags;
        if (!r.wiggliness) flags.push_back("nu_undefined");
        if (config.short_time) {
            if (!r.t_tilde) flags.push_back("no_ehrenfest");
            if (!r.lambda_q) {
                flags.push_back("lambda_undefined");
            } else if (r.fit_r2 && *r.fit_r2 < config.lambda_min_r2) {
                flags.push_back("lambda_low_r2");
            }
        }
        table.add_row({int_cell(r.n + 1), r.energy, r.mean, r.mean / dim, r.sigma, r.sigma / dim,
                       opt_cell(r.wiggliness), opt_cell(r.lambda_q), opt_cell(r.t_tilde), opt_cell(r.fit_r2),
                       join_flags(flags)});
    }

    auto smooth = make_table(config, stem + "_smoothed",
                             {{"E", "energy"}, {"nu_smoothed", ""}, {"lambda_smoothed", "1/time"}, {"window", ""}});
    for (std::size_t i = 0; i < scan.nu.size(); ++i) {
        const double e = scan.nu.energies[i];
        Cell lam = std::monostate{};
        if (scan.lambda.size() > 0 && e >= scan.lambda.energies.front() && e <= scan.lambda.energies.back()) {
            lam = interpolate_at(scan.lambda, e);
        }
        smooth.add_row({e, scan.nu.values[i], lam, int_cell(scan.nu.window)});
    }

    PlotSpec nu_plot{"E_n", {"nu"}, false, false, false, stem + ": wiggliness"};
    result.figures.emplace_back(stem + "_nu.svg", emit_svg(table, nu_plot));
    PlotSpec mean_plot{"E_n", {"mean/dim", "sigma/dim"}, false, true, false, stem + ": long-time mean and spread"};
    result.figures.emplace_back(stem + "_mean.svg", emit_svg(table, mean_plot));
    PlotSpec smooth_plot{"E", {"nu_smoothed"}, false, false, true, stem + ": smoothed wiggliness"};
    result.figures.emplace_back(stem + "_smoothed.svg", emit_svg(smooth, smooth_plot));
    if (config.short_time) {
        PlotSpec lam_plot{"E", {"lambda_smoothed"}, false, false, true, stem + ": smoothed quantum Lyapunov rate"};
        result.figures.emplace_back(stem + "_lambda.svg", emit_svg(smooth, lam_plot));
    }

    std::size_t undefined = 0;
    for (const auto& r : scan.records) undefined += r.wiggliness ? 0 : 1;
    result.summary[stem + ".dim"] = static_cast<std::int64_t>(scan.dim);
    result.summary[stem + ".nu_undefined"] = static_cast<std::int64_t>(undefined);
    if (scan.nu.size() > 0) {
        const auto [lo, hi] = std::minmax_element(scan.nu.values.begin(), scan.nu.values.end());
        result.summary[stem + ".nu_smoothed_min"] = *lo;
        result.summary[stem + ".nu_smoothed_max"] = *hi;
    }
    if (scan.lambda.size() > 0) {
        const auto it = std::max_element(scan.lambda.values.begin(), scan.lambda.values.end());
        const auto i = static_cast<std::size_t>(it - scan.lambda.values.begin());
        result.summary[stem + ".lambda_smoothed_max"] = *it;
        result.summary[stem + ".lambda_smoothed_argmax_E"] = scan.lambda.energies[i];
    }
    result.tables.push_back(std::move(table));
    result.tables.push_back(std::move(smooth));
}

std::string n_list_text(const std::vector<double>& sizes) {
    std::string out;
    for (double s : sizes) {
        if (!out.empty()) out += ';';
        out += std::to_string(static_cast<long long>(std::llround(s)));
    }
    return out;
}

} // namespace

void RunConfig::validate() const {
    if (!command.empty() && !kCommands.count(command)) bad_key("command", "unknown command '" + command + "'");
    if (!seed) bad_key("seed", "required (no default seed is drawn from the clock)");
    if (N.empty()) bad_key("model.N", "must not be empty");
    for (int n : N) {
        if (n < 2) bad_key("model.N", "every N must be >= 2");
    }
    if (!(xi >= 0.0 && xi <= 1.0)) bad_key("model.xi", "must lie in [0, 1]");
    if (!(epsilon >= 0.0)) bad_key("model.epsilon", "must be >= 0");
    if (diagonalization != "parity" && diagonalization != "full") {
        bad_key("model.diagonalization", "expected 'parity' or 'full'");
    }
    for (const auto& [k, name] : {std::pair{"operators.V", V}, std::pair{"operators.W", W}}) {
        Generator g;
        try {
            g = parse_generator(name);
        } catch (const std::exception& e) {
            bad_key(k, e.what());
        }
        if (g == Generator::D_y || g == Generator::R_y) {
            bad_key(k, "'" + name + "' has purely imaginary matrix elements; only real generators are supported");
        }
    }
    try {
        sampler.validate();
    } catch (const std::exception& e) {
        bad_key("sampler", e.what());
    }
    if (!(scan_t0 > 0.0)) bad_key("short_time.t0", "must be > 0");
    if (fit_points < 10) bad_key("short_time.fit_points", "must be >= 10");
    if (!(bisection_rel_width > 0.0 && bisection_rel_width < 1.0)) {
        bad_key("short_time.rel_width", "must lie in (0, 1)");
    }
    if (!(lambda_min_r2 >= 0.0 && lambda_min_r2 <= 1.0)) bad_key("smoothing.lambda_min_r2", "must lie in [0, 1]");
    if (!(lambda_min_coverage >= 0.0 && lambda_min_coverage <= 1.0)) {
        bad_key("smoothing.lambda_min_coverage", "must lie in [0, 1]");
    }
    if (classical_xi.empty()) bad_key("classical.xi", "must not be empty");
    for (double x : classical_xi) {
        if (!(x >= 0.0 && x <= 1.0)) bad_key("classical.xi", "every xi must lie in [0, 1]");
    }
    if (classical_energies.empty()) bad_key("classical.energies", "must not be empty");
    for (double e : classical_energies) {
        if (!std::isfinite(e)) bad_key("classical.energies", "must be finite");
    }
    if (freg.cells < 1) bad_key("classical.cells", "must be >= 1");
    if (freg.budget < 1) bad_key("classical.budget", "must be >= 1");
    if (freg.batch < 1) bad_key("classical.batch", "must be >= 1");
    if (!(freg.T > 1.0)) bad_key("classical.T", "must be > 1");
    if (!(freg.renorm_interval > 0.0)) bad_key("classical.renorm_interval", "must be > 0");
    if (!(freg.tol > 0.0)) bad_key("classical.tol", "must be > 0");
    if (scaling_mode != "u3" && scaling_mode != "goe" && scaling_mode != "synthetic") {
        bad_key("scaling.mode", "expected 'u3', 'goe' or 'synthetic'");
    }
    if (scaling_energies.empty()) bad_key("scaling.energies", "must not be empty");
    if (!std::isfinite(synthetic_alpha)) bad_key("scaling.alpha", "must be finite");
    if (!std::isfinite(synthetic_beta)) bad_key("scaling.beta", "must be finite");
    if (threads < 1) bad_key("threads", "must be >= 1");

    if ((command == "spectrum" || command == "otoc") && N.size() != 1) {
        bad_key("model.N", "the " + command + " command takes a single N");
    }
    if (command == "scaling") {
        std::set<int> distinct(N.begin(), N.end());
        if (distinct.size() < 3) bad_key("model.N", "scaling needs at least 3 distinct sizes");
    }
    if (command == "plot") {
        if (plot.table.empty()) bad_key("plot.table", "required for the plot command");
        if (plot.x.empty()) bad_key("plot.x", "required for the plot command");
        if (plot.y.empty()) bad_key("plot.y", "required for the plot command");
        if (plot.output.empty() || plot.output.find('/') != std::string::npos) {
            bad_key("plot.output", "must be a plain file name");
        }
    }
}

RunConfig parse_config(std::string_view json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw InvalidParameter(std::string("config: ") + e.what());
    }
    RunConfig c;
    ObjectReader r(root, "");
    r.string("command", c.command);
    if (const json* s = r.find("seed")) {
        if (!s->is_null()) {
            if (!s->is_number_integer() || (!s->is_number_unsigned() && s->get<std::int64_t>() < 0)) {
                bad_key("seed", "expected a non-negative integer");
            }
            c.seed = s->get<std::uint64_t>();
        }
    }
    with_object(r, "model", [&](ObjectReader& m) {
        if (const json* n = m.find("N")) {
            c.N.clear();
            auto take = [&](const json& e) {
                if (!e.is_number_integer()) bad_key("model.N", "expected an integer or a list of integers");
                c.N.push_back(e.get<int>());
            };
            if (n->is_array()) {
                for (const auto& e : *n) take(e);
            } else {
                take(*n);
            }
        }
        m.number("xi", c.xi);
        m.number("epsilon", c.epsilon);
        m.string("diagonalization", c.diagonalization);
    });
    with_object(r, "operators", [&](ObjectReader& o) {
        o.string("V", c.V);
        o.string("W", c.W);
    });
    with_object(r, "sampler", [&](ObjectReader& s) {
        s.number("t_min", c.sampler.t_min);
        s.number("t_max", c.sampler.t_max);
        s.integer("count", c.sampler.count);
    });
    with_object(r, "short_time", [&](ObjectReader& s) {
        s.boolean("enabled", c.short_time);
        s.number("t0", c.scan_t0);
        s.integer("fit_points", c.fit_points);
        s.number("rel_width", c.bisection_rel_width);
    });
    with_object(r, "smoothing", [&](ObjectReader& s) {
        s.integer("window", c.window);
        s.number("lambda_min_r2", c.lambda_min_r2);
        s.integer("lambda_window", c.lambda_window);
        s.number("lambda_min_coverage", c.lambda_min_coverage);
    });
    with_object(r, "classical", [&](ObjectReader& s) {
        s.numbers("xi", c.classical_xi);
        s.numbers("energies", c.classical_energies);
        s.integer("cells", c.freg.cells);
        s.integer("budget", c.freg.budget);
        s.number("T", c.freg.T);
        s.number("renorm_interval", c.freg.renorm_interval);
        s.number("tol", c.freg.tol);
        std::string plane = plane_name(c.freg.section.plane);
        s.string("plane", plane);
        if (plane == "q1") {
            c.freg.section.plane = SectionPlane::q1;
        } else if (plane == "q2") {
            c.freg.section.plane = SectionPlane::q2;
        } else {
            bad_key("classical.plane", "expected 'q1' or 'q2'");
        }
        std::string orient = orientation_name(c.freg.section.orientation);
        s.string("orientation", orient);
        if (orient == "positive") {
            c.freg.section.orientation = Orientation::positive;
        } else if (orient == "negative") {
            c.freg.section.orientation = Orientation::negative;
        } else if (orient == "both") {
            c.freg.section.orientation = Orientation::both;
        } else {
            bad_key("classical.orientation", "expected 'positive', 'negative' or 'both'");
        }
        s.integer("batch", c.freg.batch);
        s.boolean("early_exit", c.freg.early_exit);
        s.boolean("dump_section", c.dump_section);
    });
    with_object(r, "scaling", [&](ObjectReader& s) {
        s.string("mode", c.scaling_mode);
        s.numbers("energies", c.scaling_energies);
        s.integer("window", c.scaling_window);
        s.number("alpha", c.synthetic_alpha);
        s.number("beta", c.synthetic_beta);
    });
    with_object(r, "plot", [&](ObjectReader& s) {
        s.string("table", c.plot.table);
        s.string("x", c.plot.x);
        s.strings("y", c.plot.y);
        s.boolean("log_x", c.plot.log_x);
        s.boolean("log_y", c.plot.log_y);
        s.string("title", c.plot.title);
        s.string("output", c.plot.output);
    });
    std::string out = c.out.string();
    r.string("out", out);
    c.out = out;
    r.integer("threads", c.threads);
    r.finish();
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidParameter("config: cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string config_to_json(const RunConfig& config) { return config_json(config).dump(2); }

std::string config_hash(const RunConfig& config) {
    json j = config_json(config);
    j.erase("out");
    j.erase("threads");
    return hex16(fnv1a(j.dump()));
}

ResultTable::ResultTable(std::string name, std::vector<Column> columns)
    : name_(std::move(name)), columns_(std::move(columns)) {}

void ResultTable::add_row(std::vector<Cell> row) {
    if (row.size() != columns_.size()) {
        throw InvalidParameter("table " + name_ + ": row has " + std::to_string(row.size()) + " cells, expected " +
                               std::to_string(columns_.size()));
    }
    rows_.push_back(std::move(row));
}

std::optional<std::size_t> ResultTable::column_index(std::string_view name) const {
    for (std::size_t i = 0; i < columns_.size(); ++i) {
        if (columns_[i].name == name) return i;
    }
    return std::nullopt;
}

std::vector<std::optional<double>> ResultTable::numeric(std::string_view column) const {
    const auto idx = column_index(column);
    if (!idx) throw InvalidParameter("table " + name_ + ": no column '" + std::string(column) + "'");
    std::vector<std::optional<double>> out;
    out.reserve(rows_.size());
    for (const auto& row : rows_) {
        const Cell& c = row[*idx];
        if (const auto* d = std::get_if<double>(&c)) {
            out.emplace_back(*d);
        } else if (const auto* i = std::get_if<std::int64_t>(&c)) {
            out.emplace_back(static_cast<double>(*i));
        } else {
            out.emplace_back(std::nullopt);
        }
    }
    return out;
}

std::string format_csv(const ResultTable& table) {
    const auto& p = table.provenance;
    std::string out;
    out += "# otoclab " + p.code_version + "\n";
    out += "# format_version: " + std::to_string(p.format_version) + "\n";
    out += "# command: " + p.command + "\n";
    out += "# table: " + table.name() + "\n";
    out += "# config_hash: " + p.config_hash + "\n";
    out += "# seed: " + std::to_string(p.seed) + "\n";
    std::string units;
    for (const auto& c : table.columns()) {
        if (c.unit.empty()) continue;
        if (!units.empty()) units += ", ";
        units += c.name + " [" + c.unit + "]";
    }
    if (!units.empty()) out += "# units: " + units + "\n";
    for (std::size_t i = 0; i < table.columns().size(); ++i) {
        if (i) out += ',';
        out += quote_csv(table.columns()[i].name);
    }
    out += '\n';
    for (const auto& row : table.rows()) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out += ',';
            out += format_cell(row[i]);
        }
        out += '\n';
    }
    return out;
}

ResultTable parse_csv(std::string_view text, std::string name) {
    std::istringstream in{std::string(text)};
    std::string line;
    Provenance prov;
    prov.format_version = 0;
    std::optional<ResultTable> table;
    std::map<std::string, std::string> units;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty() && line[0] == '#') {
            auto field = [&](std::string_view key) -> std::optional<std::string> {
                const std::string prefix = "# " + std::string(key) + ": ";
                if (line.rfind(prefix, 0) == 0) return line.substr(prefix.size());
                return std::nullopt;
            };
            if (auto v = field("command")) prov.command = *v;
            if (auto v = field("config_hash")) prov.config_hash = *v;
            if (auto v = field("seed")) prov.seed = std::strtoull(v->c_str(), nullptr, 10);
            if (auto v = field("format_version")) prov.format_version = std::atoi(v->c_str());
            if (auto v = field("table")) name = *v;
            if (auto v = field("units")) {
                // "name [unit], name [unit]"
                std::size_t pos = 0;
                while (pos < v->size()) {
                    const auto open = v->find(" [", pos);
                    const auto close = v->find(']', open);
                    if (open == std::string::npos || close == std::string::npos) break;
                    units[v->substr(pos, open - pos)] = v->substr(open + 2, close - open - 2);
                    pos = close + 1;
                    if (v->compare(pos, 2, ", ") == 0) pos += 2;
                }
            }
            if (line.rfind("# otoclab ", 0) == 0) prov.code_version = line.substr(10);
            continue;
        }
        if (!table) {
            std::vector<Column> cols;
            for (auto& c : split_csv_line(line)) {
                const auto u = units.find(c);
                cols.push_back({c, u == units.end() ? std::string() : u->second});
            }
            table.emplace(name, std::move(cols));
            continue;
        }
        if (line.empty()) continue;
        std::vector<Cell> row;
        for (const auto& s : split_csv_line(line)) row.push_back(parse_cell(s));
        table->add_row(std::move(row));
    }
    if (!table) throw InvalidParameter("csv: no header row");
    table->provenance = prov;
    return std::move(*table);
}

ResultTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidParameter("csv: cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_csv(ss.str(), path.stem().string());
}

ScanOutput scan_model(const RunConfig& config, int N, bool goe_hamiltonian) {
    const FockBasis basis = build_basis(N);
    OperatorMatrix Vop = operator_at(basis, config.V);
    OperatorMatrix Wop = operator_at(basis, config.W);

    EigenSystem eig;
    if (goe_hamiltonian) {
        const auto H = goe_sample(basis.size(), config.seed.value_or(0), static_cast<std::uint64_t>(N));
        eig = diagonalize(H);
        Vop = retag(std::move(Vop), H.basis);
        Wop = retag(std::move(Wop), H.basis);
    } else {
        const auto H = build_hamiltonian(ModelParams{N, config.xi, config.epsilon}, basis);
        eig = config.diagonalization == "parity" ? diagonalize_by_parity(H, basis) : diagonalize(H);
    }
    const OtocEvaluator eval(to_eigenbasis(Vop, eig), to_eigenbasis(Wop, eig), eig.energies);

    AnalysisOptions opts;
    opts.sampler = config.sampler;
    opts.sampler.seed = config.seed.value_or(0);
    opts.short_time = config.short_time;
    opts.scan_t0 = config.scan_t0;
    opts.fit_points = config.fit_points;
    opts.bisection_rel_width = config.bisection_rel_width;
    opts.threads = config.threads;

    ScanOutput out;
    out.dim = eval.dim();
    out.records = analyze_states(eval, opts);

    std::vector<double> energies;
    std::vector<std::optional<double>> nu, lambda;
    for (const auto& r : out.records) {
        energies.push_back(r.energy);
        nu.push_back(r.wiggliness);
        const bool good = r.lambda_q && r.fit_r2 && *r.fit_r2 >= config.lambda_min_r2;
        lambda.push_back(good ? r.lambda_q : std::nullopt);
    }
    const std::size_t window = resolved_window(config.window, N);
    out.nu = moving_average(energies, nu, window);
    const std::size_t lwindow = resolved_window(config.lambda_window, N);
    const SmoothedCurve raw = moving_average(energies, lambda, lwindow);
    const double need = config.lambda_min_coverage * static_cast<double>(std::min(lwindow, energies.size()));
    out.lambda.window = lwindow;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (static_cast<double>(raw.counts[i]) < need) continue;
        out.lambda.energies.push_back(raw.energies[i]);
        out.lambda.values.push_back(raw.values[i]);
        out.lambda.counts.push_back(raw.counts[i]);
    }
    return out;
}

RunResult run_spectrum(const RunConfig& config) {
    config.validate();
    const int N = config.N.front();
    const FockBasis basis = build_basis(N);
    const auto H = build_hamiltonian(ModelParams{N, config.xi, config.epsilon}, basis);
    const bool by_parity = config.diagonalization == "parity";
    const EigenSystem eig = by_parity ? diagonalize_by_parity(H, basis) : diagonalize(H);

    RunResult result;
    auto table = make_table(config, "spectrum", {{"n", ""}, {"E_n", "energy"}, {"parity", ""}});
    for (std::size_t i = 0; i < eig.dim(); ++i) {
        const Cell parity = eig.parity.empty() ? Cell{} : Cell{static_cast<std::int64_t>(eig.parity[i])};
        table.add_row({int_cell(i + 1), eig.energies(static_cast<Eigen::Index>(i)), parity});
    }
    result.summary["N"] = static_cast<std::int64_t>(N);
    result.summary["dim"] = static_cast<std::int64_t>(eig.dim());
    result.summary["E_min"] = eig.energies.minCoeff();
    result.summary["E_max"] = eig.energies.maxCoeff();
    result.summary["orthonormality_residual"] = eig.orthonormality_residual;
    result.summary["reconstruction_residual"] = eig.reconstruction_residual;
    result.figures.emplace_back("spectrum.svg",
                                emit_svg(table, PlotSpec{"n", {"E_n"}, false, false, false, "Spectrum"}));
    result.tables.push_back(std::move(table));
    return result;
}

RunResult run_otoc_scan(const RunConfig& config) {
    config.validate();
    const int N = config.N.front();
    RunResult result;
    const ScanOutput scan = scan_model(config, N, false);
    add_scan_tables(config, scan, "otoc", result);
    result.summary["N"] = static_cast<std::int64_t>(N);
    result.summary["window"] = static_cast<std::int64_t>(resolved_window(config.window, N));
    return result;
}

RunResult run_goe(const RunConfig& config) {
    config.validate();
    RunResult result;
    for (int N : config.N) {
        const ScanOutput scan = scan_model(config, N, true);
        add_scan_tables(config, scan, "goe_N" + std::to_string(N), result);
    }
    return result;
}

RunResult run_classical_map(const RunConfig& config) {
    config.validate();
    struct Probe {
        double xi;
        double energy;
    };
    std::vector<Probe> probes;
    for (double xi : config.classical_xi) {
        for (double e : config.classical_energies) probes.push_back({xi, e});
    }
    std::map<double, ClassicalMinimum> minima;
    for (double xi : config.classical_xi) {
        if (!minima.count(xi)) minima[xi] = minimize_h(ClassicalParams{xi, config.epsilon});
    }

    FregConfig freg = config.freg;
    freg.threads = 1;
    freg.keep_points = config.dump_section;
    std::vector<std::optional<FregResult>> results(probes.size());
    std::vector<std::string> failures(probes.size());
    // Warm the shared threshold cache before the workers start.
    regularity_threshold(freg.T, freg.renorm_interval, freg.tol);
    detail::parallel_for(probes.size(), config.threads, [&](std::size_t i) {
        try {
            results[i] = freg_at_energy(probes[i].energy, ClassicalParams{probes[i].xi, config.epsilon}, freg);
        } catch (const InvalidParameter&) {
            failures[i] = "no_section_cell";
        }
    });

    RunResult result;
    auto table = make_table(config, "classical",
                            {{"xi", ""},
                             {"E", "energy"},
                             {"f_reg", ""},
                             {"lambda_bar", "1/time"},
                             {"coverage", ""},
                             {"n_traj", ""},
                             {"E_min", "energy"},
                             {"flags", ""}});
    const bool q1 = config.freg.section.plane == SectionPlane::q1;
    auto dump = make_table(config, "classical_section",
                           {{"xi", ""},
                            {"E", "energy"},
                            {q1 ? "q2" : "q1", ""},
                            {q1 ? "p2" : "p1", ""},
                            {"lambda", "1/time"},
                            {"trajectory", ""}});
    for (std::size_t i = 0; i < probes.size(); ++i) {
        const auto& pr = probes[i];
        const double e_min = minima[pr.xi].value;
        std::vector<std::string> flags;
        if (pr.energy < e_min) flags.push_back("below_minimum");
        if (!results[i]) {
            if (!failures[i].empty()) flags.push_back(failures[i]);
            table.add_row({pr.xi, pr.energy, {}, {}, {}, int_cell(0), e_min, join_flags(flags)});
            continue;
        }
        const auto& r = *results[i];
        if (r.coverage < 0.5) flags.push_back("low_coverage");
        table.add_row({pr.xi, pr.energy, r.f_reg, r.lambda_bar, r.coverage, int_cell(r.trajectories), e_min,
                       join_flags(flags)});
        for (const auto& p : r.points) dump.add_row({pr.xi, pr.energy, p.a, p.b, p.lambda, int_cell(p.trajectory)});
    }
    result.summary["threshold"] = regularity_threshold(freg.T, freg.renorm_interval, freg.tol);
    result.summary["probes"] = static_cast<std::int64_t>(probes.size());
    std::vector<double> mins;
    for (const auto& [xi, m] : minima) mins.push_back(m.value);
    result.summary["E_min_per_xi"] = mins;

    result.figures.emplace_back(
        "classical.svg",
        emit_svg(table, PlotSpec{"E", {"f_reg", "lambda_bar"}, false, false, config.classical_xi.size() == 1,
                                 "Fraction of regularity and mean Lyapunov exponent"}));
    result.tables.push_back(std::move(table));
    if (config.dump_section) {
        result.figures.emplace_back(
            "classical_section.svg",
            emit_svg(dump, PlotSpec{q1 ? "q2" : "q1", {q1 ? "p2" : "p1"}, false, false, false, "Section points"}));
        result.tables.push_back(std::move(dump));
    }
    return result;
}

RunResult run_scaling(const RunConfig& config) {
    config.validate();
    std::vector<int> sizes = config.N;
    std::sort(sizes.begin(), sizes.end());
    sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());

    // nu_bar[e][k] for energy index e and size index k
    std::vector<std::vector<std::optional<double>>> nu_bar(config.scaling_energies.size(),
                                                           std::vector<std::optional<double>>(sizes.size()));
    for (std::size_t k = 0; k < sizes.size(); ++k) {
        const int N = sizes[k];
        if (config.scaling_mode == "synthetic") {
            for (auto& row : nu_bar) {
                row[k] = std::pow(static_cast<double>(N), config.synthetic_alpha) * std::exp(-config.synthetic_beta);
            }
            continue;
        }
        RunConfig sub = config;
        sub.short_time = false;
        sub.window = resolved_window(config.scaling_window, N);
        const ScanOutput scan = scan_model(sub, N, config.scaling_mode == "goe");
        for (std::size_t e = 0; e < config.scaling_energies.size(); ++e) {
            const double E = config.scaling_energies[e];
            if (scan.nu.size() > 0 && E >= scan.nu.energies.front() && E <= scan.nu.energies.back()) {
                nu_bar[e][k] = interpolate_at(scan.nu, E);
            }
        }
    }

    RunResult result;
    auto inter = make_table(config, "scaling_nu_bar", {{"E", "energy"}, {"N", ""}, {"nu_bar", ""}});
    auto table = make_table(config, "scaling",
                            {{"E", "energy"}, {"alpha", ""}, {"beta", ""}, {"residual", ""}, {"N_list", ""}, {"flags", ""}});
    std::vector<double> alphas;
    for (std::size_t e = 0; e < config.scaling_energies.size(); ++e) {
        const double E = config.scaling_energies[e];
        std::vector<std::pair<double, double>> points;
        for (std::size_t k = 0; k < sizes.size(); ++k) {
            inter.add_row({E, static_cast<std::int64_t>(sizes[k]), opt_cell(nu_bar[e][k])});
            if (nu_bar[e][k] && *nu_bar[e][k] > 0.0) points.emplace_back(sizes[k], *nu_bar[e][k]);
        }
        if (points.size() < 3) {
            table.add_row({E, {}, {}, {}, std::string(), std::string("nu_bar_undefined")});
            continue;
        }
        const ScalingFit fit = fit_scaling(points, E);
        const std::string flags = points.size() < sizes.size() ? "partial_sizes" : "";
        table.add_row({E, fit.alpha, fit.beta, fit.residual, n_list_text(fit.sizes), flags});
        alphas.push_back(fit.alpha);
    }
    result.summary["mode"] = config.scaling_mode;
    result.summary["alpha"] = alphas;
    result.figures.emplace_back(
        "scaling_nu_bar.svg",
        emit_svg(inter, PlotSpec{"N", {"nu_bar"}, true, true, false, "Smoothed wiggliness against size"}));
    result.figures.emplace_back("scaling_alpha.svg",
                                emit_svg(table, PlotSpec{"E", {"alpha", "beta"}, false, false, true,
                                                         "Scaling exponents"}));
    result.tables.push_back(std::move(table));
    result.tables.push_back(std::move(inter));
    return result;
}

RunResult run_plot(const RunConfig& config) {
    config.validate();
    const ResultTable table = read_csv(config.plot.table);
    RunResult result;
    PlotSpec spec;
    spec.x = config.plot.x;
    spec.y = config.plot.y;
    spec.log_x = config.plot.log_x;
    spec.log_y = config.plot.log_y;
    spec.title = config.plot.title.empty() ? table.name() : config.plot.title;
    result.figures.emplace_back(config.plot.output, emit_svg(table, spec));
    result.summary["rows"] = static_cast<std::int64_t>(table.row_count());
    result.summary["source_config_hash"] = table.provenance.config_hash;
    return result;
}

RunResult run_command(const RunConfig& config) {
    const auto& c = config.command;
    if (c == "spectrum") return run_spectrum(config);
    if (c == "otoc") return run_otoc_scan(config);
    if (c == "classical") return run_classical_map(config);
    if (c == "scaling") return run_scaling(config);
    if (c == "goe") return run_goe(config);
    if (c == "plot") return run_plot(config);
    bad_key("command", c.empty() ? "missing" : "unknown command '" + c + "'");
}

std::filesystem::path write_run(const RunResult& result, const RunConfig& config) {
    const auto dir = config.out / config_hash(config);
    std::filesystem::create_directories(dir);
    auto write = [&](const std::string& file, const std::string& text) {
        std::ofstream out(dir / file, std::ios::binary | std::ios::trunc);
        if (!out) throw InvalidParameter("out: cannot write " + (dir / file).string());
        out << text;
    };
    for (const auto& t : result.tables) write(t.name() + ".csv", format_csv(t));
    for (const auto& [file, svg] : result.figures) write(file, svg);

    json summary;
    summary["command"] = config.command;
    summary["config_hash"] = config_hash(config);
    summary["seed"] = config.seed.value_or(0);
    summary["code_version"] = std::string(code_version());
    summary["format_version"] = kFormatVersion;
    json tables = json::object();
    for (const auto& t : result.tables) tables[t.name() + ".csv"] = t.row_count();
    summary["tables"] = tables;
    json values = json::object();
    for (const auto& [k, v] : result.summary) {
        std::visit([&](const auto& x) { values[k] = x; }, v);
    }
    summary["results"] = values;
    write("summary.json", summary.dump(2) + "\n");
    write("config.json", config_to_json(config) + "\n");
    return dir;
}

} // namespace otoclab
