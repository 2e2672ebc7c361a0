// qnd_cli.cpp — Command-line front end for propagator runs

#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "qnd/experiment.hpp"

int main(int argc, char** argv) {
    namespace ex = qnd::experiment;

    CLI::App app{"Evaluate, verify and inspect QND propagators from a JSON config"};
    std::string config_path;
    std::string out_dir = ".";
    std::optional<std::string> mode;
    std::optional<std::uint64_t> seed;
    std::optional<double> tol;

    app.add_option("--config", config_path, "experiment config (JSON)")->required();
    app.add_option("--mode", mode, "override the config mode")
        ->check(CLI::IsMember({"kernel", "verify", "dephasing", "structure"}));
    app.add_option("--out", out_dir, "output directory")->capture_default_str();
    app.add_option("--seed", seed, "seed for randomized verification draws");
    app.add_option("--tol", tol, "override tolerances.rel_tol")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : ex::kUsageError;
    }

    try {
        auto config = ex::load_config(config_path);
        if (mode) config.mode = *ex::parse_mode(*mode);
        if (seed) config.seed = *seed;
        if (tol) {
            config.tolerances.rel_tol = *tol;
            config.tolerances.validate();
        }
        const auto result = ex::run(config, out_dir);
        (result.exit_code == ex::kPass ? std::cout : std::cerr) << result.message << "\n";
        for (const auto& f : result.files) std::cout << "wrote " << f.string() << "\n";
        return result.exit_code;
    } catch (const qnd::ConfigurationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return ex::kUsageError;
    } catch (const qnd::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return ex::kUsageError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return ex::kUsageError;
    }
}
