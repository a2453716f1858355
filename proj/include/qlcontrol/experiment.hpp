#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "qlcontrol/config.hpp"
#include "qlcontrol/diagnostics.hpp"
#include "qlcontrol/error.hpp"

namespace qlc {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitSolver = 3;
inline constexpr int kExitDiagnostic = 4;

int exit_code_for(ErrorKind kind);

/// Everything a pipeline needs that is fixed by the config alone.
struct Instance {
    Grid grid;
    ControlRegion region;
    WeightFunctionPsi psi;
    NonlinearityModel model;
    ScalarField y_s;
    ScalarField f;
    ScalarField y0;
    TimeGrid time;
};

Instance build_instance(const ExperimentConfig& config);

struct RunOutcome {
    int exit_code = kExitOk;
    std::string status;
    std::string message;
    std::string checksum;  // crc32 of report.json
    std::filesystem::path directory;
    nlohmann::json report;
};

/// Runs the configured pipeline and writes report.json, report.crc32 and the exports into `directory`.
RunOutcome run_experiment(const ExperimentConfig& config, const std::filesystem::path& directory);
/// Loads the file first; a bad config yields exit code 2 without touching the output directory.
RunOutcome run_experiment(const std::string& config_path);

struct SweepOutcome {
    int exit_code = kExitOk;
    std::vector<RunOutcome> points;
    nlohmann::json summary;
};

/// One run per value of `axis` (a "section.key" name), written to directory/point_<i>.
SweepOutcome run_sweep(const ExperimentConfig& config, const std::string& axis, const std::vector<double>& values,
                       const std::filesystem::path& directory, int threads);

/// Named stand-alone diagnostic: duality, energy, weights, psi, carleman, observability, smoothing.
RunOutcome run_check(const std::string& name, const ExperimentConfig& config, const std::filesystem::path& directory);

std::string report_checksum(const std::string& text);

/// Configuration used when no file is given: linear 1D, 129 nodes, 256 steps.
ExperimentConfig default_config();

}  // namespace qlc
