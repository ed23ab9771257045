// Command-line front end: otoclab <command> [--config file] [overrides]

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "otoclab/error.hpp"
#include "otoclab/experiments.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Microcanonical OTOC and classical chaos toolkit for the u(3) boson model"};
    app.set_version_flag("--version", std::string(otoclab::code_version()));
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    bool print_config = false;
    app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("--out", out_dir, "Root output directory (runs are written to <out>/<config hash>)");
    app.add_option("--seed", seed, "Random seed (overrides the config file)");
    app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
    app.add_flag("--print-config", print_config, "Print the resolved config and exit");

    std::string plot_table, plot_x, plot_output;
    std::vector<std::string> plot_y;
    bool log_x = false, log_y = false;

    const std::pair<const char*, const char*> commands[] = {
        {"spectrum", "Energy levels with parity labels"},
        {"otoc", "Long-time OTOC statistics, wiggliness and short-time growth for every eigenstate"},
        {"classical", "Fraction of regularity and mean Lyapunov exponent from Poincare sections"},
        {"scaling", "Size scaling of the smoothed wiggliness"},
        {"goe", "OTOC scan with a GOE Hamiltonian of matching dimension"},
        {"plot", "SVG figure from a CSV table"},
    };
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        if (std::string(name) == "plot") {
            sub->add_option("--table", plot_table, "CSV table to plot");
            sub->add_option("--x", plot_x, "Column on the horizontal axis");
            sub->add_option("--y", plot_y, "Column(s) on the vertical axis");
            sub->add_option("--svg", plot_output, "Output file name inside the run directory");
            sub->add_flag("--log-x", log_x, "Logarithmic horizontal axis");
            sub->add_flag("--log-y", log_y, "Logarithmic vertical axis");
        }
    }

    CLI11_PARSE(app, argc, argv);
    const std::string command = app.get_subcommands().front()->get_name();

    try {
        otoclab::RunConfig config = config_path.empty() ? otoclab::RunConfig{} : otoclab::load_config(config_path);
        if (!config.command.empty() && config.command != command) {
            std::cerr << "note: config command '" << config.command << "' replaced by '" << command << "'\n";
        }
        config.command = command;
        if (!out_dir.empty()) config.out = out_dir;
        if (seed) config.seed = *seed;
        if (threads) config.threads = *threads;
        if (!plot_table.empty()) config.plot.table = plot_table;
        if (!plot_x.empty()) config.plot.x = plot_x;
        if (!plot_y.empty()) config.plot.y = plot_y;
        if (!plot_output.empty()) config.plot.output = plot_output;
        if (log_x) config.plot.log_x = true;
        if (log_y) config.plot.log_y = true;

        config.validate();
        if (print_config) {
            std::cout << otoclab::config_to_json(config) << "\n";
            return 0;
        }
        const auto result = otoclab::run_command(config);
        const auto dir = otoclab::write_run(result, config);
        std::cout << dir.string() << "\n";
        return 0;
    } catch (const otoclab::InvalidParameter& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
