#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "deqlab/analytic_moments.hpp"
#include "deqlab/ensembles.hpp"
#include "deqlab/nonlinearity.hpp"
#include "deqlab/numerics.hpp"

namespace deqlab {

inline constexpr const char* kExperiments[] = {"fig1",    "fig2",           "fig3",       "fig4",
                                               "moments", "freeprob-check", "train-probe"};

/// Every problem found while reading or validating a config, in order.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(std::vector<std::string> messages);
    const std::vector<std::string>& messages() const { return messages_; }

private:
    std::vector<std::string> messages_;
};

struct ExperimentConfig {
    std::string experiment;
    std::size_t n = 1000;
    std::uint64_t seed = 20240101;
    std::size_t seeds = 0;
    std::vector<Family> families;
    /// Raw grid text and its expansion. fig1: delta; fig2-4 and train-probe:
    /// sqrt(V); moments and freeprob-check: V.
    std::string grid_spec;
    std::vector<double> grid;
    std::string out;
    TraceEstimator estimator = TraceEstimator::Exact;
    std::size_t probes = 32;
    unsigned threads = 1;
    Activation activation = Activation::HardTanh;
    WeightMode weight_mode = WeightMode::Tied;
    std::size_t t_probe = 500;
    double sigma_x2 = 1.0;
    double learning_rate = 0.05;
    std::size_t steps = 100;

    /// Keys that took their default value.
    std::vector<std::string> defaulted;

    /// Resolved key=value pairs, for the manifest and --check output.
    std::map<std::string, std::string> echo() const;
    std::string manifest_path() const { return out + ".json"; }
};

/// Expands "lo:hi:steps", "lo:hi:steps:log", plain numbers, or a
/// comma-separated mix of these into a sorted list without duplicates.
std::vector<double> parse_grid(const std::string& spec);

/// Raw key -> value pairs from a config file. `line_of` records where each
/// key came from (0 for command-line overrides).
struct RawConfig {
    std::map<std::string, std::string> values;
    std::map<std::string, std::size_t> line_of;
    std::string source;
};

/// Reads flat key=value lines; '#' starts a comment. Syntax errors, unknown
/// keys and duplicates are collected into one ConfigError.
RawConfig read_config_text(const std::string& text, const std::string& source);
RawConfig read_config_file(const std::string& path);

/// Applies defaults and checks every key; problems are aggregated into one
/// ConfigError. `overrides` win over the file.
ExperimentConfig resolve_config(const RawConfig& file, const std::map<std::string, std::string>& overrides);

/// validate_config(path): read, resolve with no overrides.
ExperimentConfig validate_config(const std::string& path);

const std::vector<std::string>& known_config_keys();

}  // namespace deqlab
