#pragma once

#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "deqlab/config.hpp"
#include "deqlab/errors.hpp"

namespace deqlab {

class IoError : public Error {
public:
    using Error::Error;
};

/// One CSV row. NaN numeric fields are written as empty cells.
struct ResultRow {
    std::string experiment;
    std::string family;
    std::string mode;
    double scale = std::numeric_limits<double>::quiet_NaN();
    double sqrt_scale = std::numeric_limits<double>::quiet_NaN();
    double delta = std::numeric_limits<double>::quiet_NaN();
    std::size_t n = 0;
    std::size_t seeds = 0;
    std::string statistic;
    double theory = std::numeric_limits<double>::quiet_NaN();
    double mean = std::numeric_limits<double>::quiet_NaN();
    double median = std::numeric_limits<double>::quiet_NaN();
    double std_error = std::numeric_limits<double>::quiet_NaN();
    double q25 = std::numeric_limits<double>::quiet_NaN();
    double q75 = std::numeric_limits<double>::quiet_NaN();
    std::size_t diverged = 0;
    std::string note;
    /// True when the cell raised instead of producing numbers.
    bool failed = false;
};

struct RunResult {
    std::vector<ResultRow> rows;
    std::size_t failed_cells = 0;
    /// 0 success, 3 every cell failed.
    int status = 0;
    double wall_seconds = 0.0;
};

/// Computes all rows for the configured experiment without touching disk.
/// Per-cell failures become rows with failed = true.
RunResult run_experiment(const ExperimentConfig& config);

std::string csv_header();
std::string format_csv(const std::vector<ResultRow>& rows);

/// Writes config.out (CSV) and config.manifest_path() (JSON). IoError if
/// either cannot be written.
void write_outputs(const ExperimentConfig& config, const RunResult& result);

/// run_experiment + write_outputs; returns the exit status (0 or 3).
int run(const ExperimentConfig& config, RunResult* result = nullptr);

/// Empirical spectrum of D^{1/2} W D^{1/2}, W GOE at scale V, D i.i.d.
/// Bernoulli(p), compared with hardtanh_jacobian_density.
struct HardtanhSpectrumCheck {
    double ks_continuous = 0.0;
    double atom_mass_empirical = 0.0;
    double atom_mass_theory = 0.0;
    std::size_t n_eigenvalues = 0;
};

HardtanhSpectrumCheck hardtanh_spectrum_check(double p, double scale, std::size_t n, const SeedDerivation& seed);

/// First grid point whose median residual exceeds `threshold`; NaN if none.
double empirical_transition(const std::vector<ResultRow>& rows, const std::string& family,
                            const std::string& statistic, double threshold = 1e-3);

}  // namespace deqlab
