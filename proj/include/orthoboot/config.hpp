// config.hpp
//
// Run configuration for the obboot CLI. Configs are TOML (or JSON when the
// file ends in .json). Top-level keys:
//
//   kind       coverage | debias | scaling | pi | estimate
//   seed       base seed (uint64)
//   alpha      interval level, in (0, 1)
//   n          sample size; a list for scaling
//   B          replicate count; a list for coverage and debias
//   R          data repetitions (coverage, debias)
//   repeats    bootstrap repeats per data set (debias)
//   seeds      bootstrap seeds per n (scaling)
//   n_test     test points (pi)
//   methods    subset of naive, sb, ob, ij, cheap
//   inputs     CSV files, one per block (estimate); relative to the config
//   [generator] name, params     [functional] name, params
//   [model]    intercept, ridge
//   [output]   dir, prefix
//   [ci]       overrides applied unless the run is --full
//
// Every validation problem is collected before ConfigError is thrown.

#pragma once

#include "orthoboot/experiments.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace orthoboot {

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(std::vector<std::string> problems);
    const std::vector<std::string>& problems() const noexcept { return problems_; }

private:
    std::vector<std::string> problems_;
};

enum class RunKind { coverage, debias, scaling, pi, estimate };

const char* run_kind_name(RunKind k) noexcept;

struct RunConfig {
    RunKind kind = RunKind::coverage;
    std::uint64_t seed = 0;
    double alpha = 0.05;
    std::vector<Eigen::Index> n;
    std::vector<Eigen::Index> B;
    Eigen::Index R = 0;
    Eigen::Index repeats = 0;
    Eigen::Index seeds = 0;
    Eigen::Index n_test = 0;
    std::vector<Method> methods;
    std::vector<std::filesystem::path> inputs;
    std::string generator;
    nlohmann::json generator_params = nlohmann::json::object();
    std::string functional;
    nlohmann::json functional_params = nlohmann::json::object();
    LinearModelOptions model{};
    std::filesystem::path out_dir = "results";
    std::string prefix;
    nlohmann::json source;  // the effective table, echoed into JSON outputs
};

// Parses and validates a config table. Relative input paths resolve against base_dir.
RunConfig parse_config(const nlohmann::json& table, const std::filesystem::path& base_dir, bool full);
RunConfig load_config(const std::filesystem::path& path, bool full);

// Reads a TOML or JSON file into a JSON value.
nlohmann::json read_config_table(const std::filesystem::path& path);

struct RunOptions {
    std::optional<std::uint64_t> seed;
    std::optional<std::filesystem::path> out_dir;
    Execution exec{0};
};

// Runs the configured experiment and writes its outputs; returns the files written.
std::vector<std::filesystem::path> run_config(RunConfig config, const RunOptions& options);

}  // namespace orthoboot
