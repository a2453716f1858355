#include "qlcontrol/config.hpp"

#include <fstream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>

#include "qlcontrol/error.hpp"

namespace qlc {

namespace pt = boost::property_tree;

namespace {

[[noreturn]] void invalid(const std::string& field, const std::string& reason) {
    throw Error(ErrorKind::ConfigInvalid, field + ": " + reason);
}

const pt::ptree& section(const pt::ptree& tree, const std::string& name) {
    const auto it = tree.find(name);
    if (it == tree.not_found()) invalid(name, "missing section [" + name + "]");
    return it->second;
}

template <typename T>
T get(const pt::ptree& sec, const std::string& sec_name, const std::string& key, const T& fallback) {
    const auto v = sec.get_optional<std::string>(key);
    if (!v) return fallback;
    std::istringstream in(*v);
    T out{};
    if constexpr (std::is_same_v<T, bool>) {
        std::string s;
        in >> s;
        if (s == "true" || s == "1" || s == "yes") return true;
        if (s == "false" || s == "0" || s == "no") return false;
        invalid(sec_name + "." + key, "expected a boolean, got '" + *v + "'");
    } else if constexpr (std::is_same_v<T, std::string>) {
        return *v;
    } else {
        if (!(in >> out) || !(in >> std::ws).eof()) {
            invalid(sec_name + "." + key, "cannot parse '" + *v + "'");
        }
    }
    return out;
}

template <typename T>
T require(const pt::ptree& sec, const std::string& sec_name, const std::string& key) {
    if (!sec.get_optional<std::string>(key)) invalid(sec_name + "." + key, "required key is missing");
    return get<T>(sec, sec_name, key, T{});
}

std::vector<double> get_list(const pt::ptree& sec, const std::string& sec_name, const std::string& key) {
    std::vector<double> out;
    const auto v = sec.get_optional<std::string>(key);
    if (!v || v->empty()) return out;
    std::string item;
    std::istringstream in(*v);
    while (std::getline(in, item, ',')) {
        std::istringstream num(item);
        double x;
        if (!(num >> x) || !(num >> std::ws).eof()) invalid(sec_name + "." + key, "bad list entry '" + item + "'");
        out.push_back(x);
    }
    return out;
}

Interval get_interval(const pt::ptree& sec, const std::string& sec_name, const std::string& prefix) {
    Interval i{require<double>(sec, sec_name, prefix + "_lo"), require<double>(sec, sec_name, prefix + "_hi")};
    if (!(i.lo < i.hi)) invalid(sec_name + "." + prefix, "lo must be below hi");
    return i;
}

}  // namespace

ExperimentConfig config_from_tree(const pt::ptree& tree) {
    ExperimentConfig c;
    c.tree = tree;

    const pt::ptree empty;
    const auto opt = [&](const std::string& name) -> const pt::ptree& {
        const auto it = tree.find(name);
        return it == tree.not_found() ? empty : it->second;
    };

    const auto& run = opt("run");
    c.name = get<std::string>(run, "run", "name", c.name);
    c.pipeline = get<std::string>(run, "run", "pipeline", c.pipeline);
    c.seed = get<std::uint64_t>(run, "run", "seed", c.seed);
    if (c.pipeline != "control" && c.pipeline != "smoothing" && c.pipeline != "diagnostics") {
        invalid("run.pipeline", "expected control, smoothing or diagnostics");
    }

    const auto& dom = section(tree, "domain");
    c.domain_kind = get<std::string>(dom, "domain", "kind", c.domain_kind);
    if (c.domain_kind != "interval" && c.domain_kind != "rectangle") {
        invalid("domain.kind", "expected interval or rectangle");
    }
    const int dims = c.domain_kind == "interval" ? 1 : 2;
    const char* axes[] = {"x", "y"};
    for (int a = 0; a < dims; ++a) {
        c.bounds.push_back(get_interval(dom, "domain", axes[a]));
        const int n = require<int>(dom, "domain", std::string("n") + axes[a]);
        if (n < 8) invalid(std::string("domain.n") + axes[a], "needs at least 8 nodes");
        c.nodes.push_back(n);
    }

    const auto& reg = section(tree, "region");
    for (int a = 0; a < dims; ++a) {
        c.omega.push_back(get_interval(reg, "region", std::string("omega_") + axes[a]));
        c.omega0.push_back(get_interval(reg, "region", std::string("omega0_") + axes[a]));
    }

    const auto& mod = section(tree, "model");
    c.model_name = get<std::string>(mod, "model", "name", c.model_name);
    if (c.model_name != "linear" && c.model_name != "cubic" && c.model_name != "porous") {
        invalid("model.name", "expected linear, cubic or porous");
    }
    c.model_c = get<double>(mod, "model", "c", c.model_c);
    c.model_beta = get<double>(mod, "model", "beta", c.model_beta);
    c.model_m = get<double>(mod, "model", "m", c.model_m);
    c.model_eps = get<double>(mod, "model", "eps", c.model_eps);
    c.model_range = {get<double>(mod, "model", "range_lo", c.model_range.lo),
                     get<double>(mod, "model", "range_hi", c.model_range.hi)};
    c.globalize = get<bool>(mod, "model", "globalize", c.globalize);
    c.globalize_margin = get<double>(mod, "model", "globalize_margin", c.globalize_margin);

    const auto& st = opt("stationary");
    c.stationary_profile = get<std::string>(st, "stationary", "profile", c.stationary_profile);
    if (c.stationary_profile != "sine" && c.stationary_profile != "zero") {
        invalid("stationary.profile", "expected sine or zero");
    }
    c.stationary_amplitude = get<double>(st, "stationary", "amplitude", c.stationary_amplitude);

    const auto& ini = opt("initial");
    c.initial_family = get<std::string>(ini, "initial", "family", c.initial_family);
    if (c.initial_family != "sine" && c.initial_family != "bump" && c.initial_family != "random") {
        invalid("initial.family", "expected sine, bump or random");
    }
    c.initial_amplitude = get<double>(ini, "initial", "amplitude", c.initial_amplitude);
    c.initial_center = get<double>(ini, "initial", "center", c.initial_center);
    c.initial_width = get<double>(ini, "initial", "width", c.initial_width);
    c.initial_mode = get<int>(ini, "initial", "mode", c.initial_mode);
    if (c.initial_amplitude < 0.0) invalid("initial.amplitude", "must be nonnegative");

    const auto& tim = section(tree, "time");
    c.horizon = require<double>(tim, "time", "horizon");
    c.steps = require<int>(tim, "time", "steps");
    c.T0_fraction = get<double>(tim, "time", "T0_fraction", c.T0_fraction);
    if (!(c.horizon > 0.0)) invalid("time.horizon", "must be positive");
    if (c.steps < 16 || c.steps % 2 != 0) invalid("time.steps", "must be even and at least 16");
    if (!(c.T0_fraction >= 0.0 && c.T0_fraction < 1.0)) invalid("time.T0_fraction", "must lie in [0, 1)");

    const auto& car = section(tree, "carleman");
    c.lambda = require<double>(car, "carleman", "lambda");
    c.s = require<double>(car, "carleman", "s");
    c.proof_regime = get<bool>(car, "carleman", "proof_regime", c.proof_regime);
    if (!(c.lambda > 0.0)) invalid("carleman.lambda", "must be positive");
    if (!(c.s > 0.0)) invalid("carleman.s", "must be positive");

    const auto& fp = opt("fixed_point");
    c.max_outer = get<int>(fp, "fixed_point", "max_outer", c.max_outer);
    c.tol_sup = get<double>(fp, "fixed_point", "tol_sup", c.tol_sup);
    c.q_final = get<double>(fp, "fixed_point", "q", c.q_final);
    c.zetas = get_list(fp, "fixed_point", "zetas");
    c.terminal_tolerance = get<double>(fp, "fixed_point", "terminal_tolerance", c.terminal_tolerance);
    if (c.max_outer < 1) invalid("fixed_point.max_outer", "must be at least 1");

    const auto& sol = opt("solver");
    const std::string method = get<std::string>(sol, "solver", "method", "auto");
    if (method == "auto") {
        c.method = MinimizeMethod::Auto;
    } else if (method == "cg") {
        c.method = MinimizeMethod::ConjugateGradient;
    } else if (method == "direct") {
        c.method = MinimizeMethod::SpaceTimeDirect;
    } else {
        invalid("solver.method", "expected auto, cg or direct");
    }
    c.cg_tolerance = get<double>(sol, "solver", "cg_tolerance", c.cg_tolerance);
    c.cg_max_iterations = get<int>(sol, "solver", "cg_max_iterations", c.cg_max_iterations);
    c.newton_tolerance = get<double>(sol, "solver", "newton_tolerance", c.newton_tolerance);

    const auto& sw = opt("sweep");
    c.sweep_axis = get<std::string>(sw, "sweep", "axis", "");
    c.sweep_values = get_list(sw, "sweep", "values");

    const auto& out = opt("output");
    c.output_dir = get<std::string>(out, "output", "directory", c.output_dir);
    c.write_trajectories = get<bool>(out, "output", "trajectories", c.write_trajectories);

    const auto& diag = opt("diagnostics");
    c.carleman_samples = get<int>(diag, "diagnostics", "carleman_samples", c.carleman_samples);
    c.observability_samples = get<int>(diag, "diagnostics", "observability_samples", c.observability_samples);
    const auto widths = get_list(diag, "diagnostics", "smoothing_widths");
    if (!widths.empty()) c.smoothing_widths = widths;
    c.smoothing_horizon = get<double>(diag, "diagnostics", "smoothing_horizon", c.smoothing_horizon);
    c.smoothing_steps = get<int>(diag, "diagnostics", "smoothing_steps", c.smoothing_steps);
    c.smoothing_height = get<double>(diag, "diagnostics", "smoothing_height", c.smoothing_height);
    if (c.carleman_samples < 0 || c.observability_samples < 0) invalid("diagnostics", "sample counts must be nonnegative");
    if (c.smoothing_steps < 16) invalid("diagnostics.smoothing_steps", "must be at least 16");
    return c;
}

ExperimentConfig parse_config(std::istream& in) {
    pt::ptree tree;
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        invalid("file", e.message() + " (line " + std::to_string(e.line()) + ")");
    }
    return config_from_tree(tree);
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) invalid("file", "cannot open " + path);
    return parse_config(in);
}

ExperimentConfig with_override(const ExperimentConfig& config, const std::string& key, const std::string& value) {
    if (key.find('.') == std::string::npos) invalid(key, "override keys have the form section.key");
    pt::ptree tree = config.tree;
    tree.put(key, value);
    return config_from_tree(tree);
}

}  // namespace qlc
