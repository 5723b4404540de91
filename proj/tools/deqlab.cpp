#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "deqlab/config.hpp"
#include "deqlab/experiments.hpp"

namespace {

constexpr const char* kDefaultsHelp = R"(Defaults (applied when a key is absent; listed under defaulted_keys in the manifest):
  n        2000 for fig1, 32 for train-probe, 1000 otherwise
  seeds    fig1 5, fig2/fig3 20, fig4 100, moments 0 (theory only), freeprob-check 5, train-probe 10
  grid     fig1 delta 0.05:0.9:10:log,0.5 | fig2/fig3 sqrt(V) 0.1:0.9:9 | fig4 sqrt(V) 0.1:2.5:61
           moments V 0.05,0.125,0.2 | freeprob-check V 0.1,0.2 | train-probe sqrt(V) 0.05,0.3,0.6,0.9,1.2
  families random,goe,orthogonal   seed 20240101   threads 1   estimator exact   probes 32
  activation hardtanh   mode tied   t_probe 500   sigma_x2 1   lr 0.05   steps 100
  out      <experiment>.csv (manifest at <out>.json)
Config files hold one key=value per line with the keys above; '#' starts a comment.
Exit codes: 0 success, 1 config error, 2 I/O error, 3 every cell failed.)";

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"deqlab: deep-equilibrium initialisation laboratory"};
    app.footer(kDefaultsHelp);
    app.set_version_flag("--version", std::string("deqlab ") + DEQLAB_VERSION);

    std::string experiment, config_path;
    std::map<std::string, std::string> overrides;
    auto opt = [&](const std::string& flag, const std::string& key, const std::string& help) {
        app.add_option_function<std::string>(flag, [&overrides, key](const std::string& v) { overrides[key] = v; }, help);
    };

    app.add_option("experiment", experiment, "fig1 | fig2 | fig3 | fig4 | moments | freeprob-check | train-probe");
    app.add_option("--config", config_path, "key=value config file");
    opt("--n", "n", "matrix dimension N");
    opt("--seeds", "seeds", "Monte-Carlo seeds per cell");
    opt("--seed", "seed", "base seed");
    opt("--families", "families", "comma list of random, goe, orthogonal");
    opt("--grid", "grid", "lo:hi:steps(:log) or comma list");
    opt("--out", "out", "CSV output path");
    opt("--threads", "threads", "worker threads");
    opt("--estimator", "estimator", "exact | hutchinson");
    opt("--probes", "probes", "Hutchinson probe count");
    opt("--activation", "activation", "identity | hardtanh | tanh");
    opt("--mode", "mode", "tied | untied (moments)");
    opt("--t-probe", "t_probe", "probe depth for fig4");
    opt("--sigma-x2", "sigma_x2", "input coordinate variance");
    opt("--lr", "lr", "train-probe learning rate");
    opt("--steps", "steps", "train-probe gradient steps");
    bool check_only = false;
    app.add_flag("--check", check_only, "validate and print the resolved config, then exit");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        deqlab::RawConfig raw;
        if (!config_path.empty()) raw = deqlab::read_config_file(config_path);
        if (!experiment.empty()) overrides["experiment"] = experiment;
        const auto cfg = deqlab::resolve_config(raw, overrides);
        if (check_only) {
            for (const auto& [k, v] : cfg.echo()) std::cout << k << '=' << v << '\n';
            return 0;
        }
        deqlab::RunResult result;
        const int status = deqlab::run(cfg, &result);
        std::cerr << "deqlab: " << result.rows.size() << " rows written to " << cfg.out << " ("
                  << result.failed_cells << " failed cells, " << result.wall_seconds << " s)\n";
        for (const auto& r : result.rows)
            if (r.failed) std::cerr << "  " << r.family << " " << r.statistic << ": " << r.note << '\n';
        return status;
    } catch (const deqlab::ConfigError& e) {
        std::cerr << "deqlab: " << e.what() << '\n';
        return 1;
    } catch (const deqlab::IoError& e) {
        std::cerr << "deqlab: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "deqlab: " << e.what() << '\n';
        return 1;
    }
}
