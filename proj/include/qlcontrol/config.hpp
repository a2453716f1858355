#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <boost/property_tree/ptree.hpp>

#include "qlcontrol/hum_control.hpp"

namespace qlc {

/// Parsed experiment description. Sections: run, domain, region, model, stationary, initial, time,
/// carleman, fixed_point, solver, sweep, output, diagnostics (see docs/config.md).
struct ExperimentConfig {
    boost::property_tree::ptree tree;

    std::string name = "experiment";
    std::string pipeline = "control";
    std::uint64_t seed = 1;

    std::string domain_kind = "interval";
    std::vector<Interval> bounds;
    std::vector<int> nodes;

    std::vector<Interval> omega;
    std::vector<Interval> omega0;

    std::string model_name = "linear";
    double model_c = 1.0;
    double model_beta = 1.0;
    double model_m = 2.0;
    double model_eps = 0.1;
    Interval model_range{-2.0, 2.0};
    bool globalize = true;
    double globalize_margin = 0.1;

    std::string stationary_profile = "sine";
    double stationary_amplitude = 0.1;

    std::string initial_family = "sine";
    double initial_amplitude = 0.01;
    double initial_center = 0.3;
    double initial_width = 0.1;
    int initial_mode = 1;

    double horizon = 1.0;
    int steps = 256;
    double T0_fraction = 0.0;

    double lambda = 1.0;
    double s = 0.01;
    bool proof_regime = false;

    int max_outer = 15;
    double tol_sup = 1e-8;
    double q_final = 4.0;
    std::vector<double> zetas;
    double terminal_tolerance = 1e-6;  // relative to |y0 - y_s|_2

    MinimizeMethod method = MinimizeMethod::Auto;
    double cg_tolerance = 1e-9;
    int cg_max_iterations = 2000;
    double newton_tolerance = 1e-13;

    std::string sweep_axis;
    std::vector<double> sweep_values;

    std::string output_dir = "out";
    bool write_trajectories = true;

    int carleman_samples = 0;
    int observability_samples = 0;
    std::vector<double> smoothing_widths{0.2, 0.1414, 0.1, 0.0707, 0.05};
    double smoothing_horizon = 0.01;
    int smoothing_steps = 1024;
    double smoothing_height = 0.05;
};

ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::string& path);
/// Re-validates after setting "section.key" to value.
ExperimentConfig with_override(const ExperimentConfig& config, const std::string& key, const std::string& value);
ExperimentConfig config_from_tree(const boost::property_tree::ptree& tree);

}  // namespace qlc
