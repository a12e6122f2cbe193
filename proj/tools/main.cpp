#include <CLI11.hpp>
#include <iostream>

#include "cli_util.hpp"
#include "flab/training.hpp"
#include "flab/version.hpp"

namespace flab::cli {
void register_gen_data(CLI::App& app, int argc, char** argv);
void register_train(CLI::App& app, int argc, char** argv);
void register_eval(CLI::App& app);
void register_analyze(CLI::App& app);
} // namespace flab::cli

int main(int argc, char** argv) {
    using namespace flab;
    CLI::App app{"fidelity-lab: context-compression training and fidelity diagnostics"};
    app.set_version_flag("--version", flab::kToolkitVersion);
    app.require_subcommand(1);

    try {
        cli::register_gen_data(app, argc, argv);
        cli::register_train(app, argc, argv);
        cli::register_eval(app);
        cli::register_analyze(app);
        app.parse(argc, argv);
        return cli::kExitOk;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return cli::kExitConfig;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return cli::kExitConfig;
    } catch (const TrainStepError& e) {
        std::cerr << "training failed: " << e.what() << "\n";
        return e.non_finite() ? cli::kExitNumeric : 1;
    } catch (const SchemaError& e) {
        std::cerr << "schema error: " << e.what() << "\n";
        return cli::kExitSchema;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return cli::kExitIo;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 1;
    }
}
