// obboot: command-line front end for the experiment harness.
#include "orthoboot/config.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv)
{
    using namespace orthoboot;

    CLI::App app{"Orthogonal and standard bootstrap experiments"};
    app.set_version_flag("--version", std::string("obboot ") + ORTHOBOOT_VERSION + " (rng " + kRngName + ")");
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    bool full = false;
    unsigned threads = 0;

    for (const char* kind : {"coverage", "debias", "scaling", "pi", "estimate"}) {
        auto* sub = app.add_subcommand(kind, std::string("run a ") + kind + " config");
        sub->add_option("-c,--config", config_path, "TOML or JSON config")->required();
        sub->add_option("--seed", seed, "override the config seed");
        sub->add_option("-o,--out-dir", out_dir, "override the output directory");
        sub->add_flag("--full", full, "ignore the [ci] overrides");
        sub->add_option("-j,--threads", threads, "worker threads (0: all cores)");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    const std::string kind = app.get_subcommands().front()->get_name();
    try {
        RunConfig config = load_config(config_path, full);
        if (run_kind_name(config.kind) != kind)
            throw ConfigError({"config kind '" + std::string(run_kind_name(config.kind)) + "' does not match subcommand '" +
                               kind + "'"});
        RunOptions options;
        options.seed = seed;
        if (!out_dir.empty()) options.out_dir = out_dir;
        options.exec.threads = threads;
        for (const auto& path : run_config(std::move(config), options)) std::cout << path.string() << '\n';
    } catch (const ConfigError& e) {
        for (const auto& p : e.problems()) std::cerr << "error: config: " << p << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
