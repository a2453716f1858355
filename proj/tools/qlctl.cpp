#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "qlcontrol/error.hpp"
#include "qlcontrol/experiment.hpp"

namespace {

using qlc::ExperimentConfig;

std::string number_text(double v) {
    std::ostringstream out;
    out << std::setprecision(17) << v;
    return out.str();
}

ExperimentConfig load(const std::string& path, std::optional<std::uint64_t> seed, const std::string& out) {
    ExperimentConfig c = path.empty() ? qlc::default_config() : qlc::load_config(path);
    if (seed) c = qlc::with_override(c, "run.seed", std::to_string(*seed));
    if (!out.empty()) c = qlc::with_override(c, "output.directory", out);
    return c;
}

int report(const qlc::RunOutcome& o) {
    std::cout << "status: " << o.status << "\n";
    if (!o.message.empty()) std::cout << "message: " << o.message << "\n";
    if (!o.checksum.empty()) std::cout << "report: " << (o.directory / "report.json").string() << " crc32 " << o.checksum << "\n";
    return o.exit_code;
}

std::vector<double> parse_values(const std::string& text) {
    std::vector<double> v;
    std::istringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        try {
            std::size_t used = 0;
            v.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw qlc::Error(qlc::ErrorKind::ConfigInvalid, "--values: bad entry '" + item + "'");
        }
    }
    return v;
}

int export_csv(const std::string& input, const std::string& output, const std::string& manifest_path) {
    std::ifstream in(input, std::ios::binary);
    if (!in) throw qlc::Error(qlc::ErrorKind::IoError, "cannot open " + input);
    const qlc::BinaryField field = qlc::read_binary(in);
    std::vector<qlc::Interval> bounds(field.counts.size(), qlc::Interval{0.0, 1.0});
    if (!manifest_path.empty()) {
        std::ifstream m(manifest_path);
        if (!m) throw qlc::Error(qlc::ErrorKind::IoError, "cannot open " + manifest_path);
        const auto j = nlohmann::json::parse(m);
        for (std::size_t a = 0; a < bounds.size(); ++a) {
            bounds[a] = {j["axes"][a]["lo"].get<double>(), j["axes"][a]["hi"].get<double>()};
        }
    }
    std::ofstream out(output);
    if (!out) throw qlc::Error(qlc::ErrorKind::IoError, "cannot write " + output);
    const int layers = static_cast<int>(field.layers.size());
    const int nx = field.counts[0];
    out << (field.counts.size() == 1 ? "t,x,value\n" : "t,x,y,value\n");
    out << std::setprecision(17);
    for (int k = 0; k < layers; ++k) {
        const double t = layers > 1 ? field.horizon * k / (layers - 1) : field.horizon;
        for (Eigen::Index node = 0; node < field.layers[k].size(); ++node) {
            const int i = static_cast<int>(node % nx);
            const double x = bounds[0].lo + bounds[0].length() * i / (nx - 1);
            out << t << ',' << x << ',';
            if (field.counts.size() > 1) {
                const int j = static_cast<int>(node / nx);
                out << bounds[1].lo + bounds[1].length() * j / (field.counts[1] - 1) << ',';
            }
            out << field.layers[k][node] << '\n';
        }
    }
    return qlc::kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"qlctl: Carleman-weighted control of quasilinear diffusion"};
    app.require_subcommand(1);

    std::optional<std::uint64_t> seed;
    std::string out;
    int threads = 1;
    app.add_option("--seed", seed, "override run.seed");
    app.add_option("--out", out, "output directory");
    app.add_option("--threads", threads, "concurrent sweep points")->check(CLI::PositiveNumber);

    std::string run_config;
    auto* run = app.add_subcommand("run", "run the pipeline described by a config file");
    run->add_option("config", run_config, "config file")->required();

    std::string sweep_config, axis, values;
    auto* sweep = app.add_subcommand("sweep", "run one config over a list of values of one key");
    sweep->add_option("config", sweep_config, "config file")->required();
    sweep->add_option("--axis", axis, "section.key to vary (default: sweep.axis)");
    sweep->add_option("--values", values, "comma-separated values (default: sweep.values)");

    std::string check_name, check_config;
    auto* check = app.add_subcommand("check", "run a named diagnostic");
    check->add_option("name", check_name, "duality | energy | weights | psi | carleman | observability | smoothing")
        ->required();
    check->add_option("--config", check_config, "config file (default: linear 1D)");

    std::string export_in, export_out, manifest;
    auto* exp = app.add_subcommand("export", "convert a binary trajectory to CSV");
    exp->add_option("input", export_in, "binary trajectory")->required();
    exp->add_option("output", export_out, "CSV file")->required();
    exp->add_option("--manifest", manifest, "manifest.json giving the domain bounds");

    for (auto* sub : {run, sweep, check, exp}) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : qlc::kExitConfig;
    }

    try {
        if (*run) {
            const ExperimentConfig c = load(run_config, seed, out);
            return report(qlc::run_experiment(c, c.output_dir));
        }
        if (*sweep) {
            const ExperimentConfig c = load(sweep_config, seed, out);
            const std::string a = axis.empty() ? c.sweep_axis : axis;
            const std::vector<double> v = values.empty() ? c.sweep_values : parse_values(values);
            if (a.empty()) throw qlc::Error(qlc::ErrorKind::ConfigInvalid, "sweep.axis: no sweep axis given");
            const qlc::SweepOutcome s = qlc::run_sweep(c, a, v, c.output_dir, threads);
            for (std::size_t i = 0; i < s.points.size(); ++i) {
                std::cout << a << " = " << number_text(v[i]) << ": " << s.points[i].status << " (exit "
                          << s.points[i].exit_code << ")\n";
            }
            std::cout << "summary: " << (std::filesystem::path(c.output_dir) / "sweep.json").string() << "\n";
            return s.exit_code;
        }
        if (*check) {
            ExperimentConfig c = load(check_config, seed, out);
            const std::string dir = out.empty() ? "check_" + check_name : out;
            const qlc::RunOutcome o = qlc::run_check(check_name, c, dir);
            std::cout << o.report.dump(2) << "\n";
            return o.exit_code;
        }
        return export_csv(export_in, export_out, manifest);
    } catch (const qlc::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return qlc::exit_code_for(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return qlc::kExitSolver;
    }
}
