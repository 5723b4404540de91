#include "deqlab/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "deqlab/errors.hpp"

namespace deqlab {
namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            parts.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    parts.push_back(trim(cur));
    return parts;
}

bool parse_double(const std::string& s, double& out) {
    const char* end = s.data() + s.size();
    auto [p, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc() && p == end && std::isfinite(out);
}

bool parse_int(const std::string& s, long long& out) {
    const char* end = s.data() + s.size();
    auto [p, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc() && p == end;
}

std::string format_double(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return ec == std::errc() ? std::string(buf, p) : std::string("nan");
}

std::size_t default_n(const std::string& e) {
    if (e == "fig1") return 2000;
    if (e == "train-probe") return 32;
    return 1000;
}

std::size_t default_seeds(const std::string& e) {
    if (e == "fig1") return 5;
    if (e == "fig2" || e == "fig3") return 20;
    if (e == "fig4") return 100;
    if (e == "moments") return 0;
    if (e == "freeprob-check") return 5;
    return 10;
}

std::string default_grid(const std::string& e) {
    if (e == "fig1") return "0.05:0.9:10:log,0.5";
    if (e == "fig2" || e == "fig3") return "0.1:0.9:9";
    if (e == "fig4") return "0.1:2.5:61";
    if (e == "moments") return "0.05,0.125,0.2";
    if (e == "freeprob-check") return "0.1,0.2";
    return "0.05,0.3,0.6,0.9,1.2";
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> messages)
    : std::runtime_error([&] {
          std::string all = "invalid configuration";
          for (const auto& m : messages) all += "\n  " + m;
          return all;
      }()),
      messages_(std::move(messages)) {}

const std::vector<std::string>& known_config_keys() {
    static const std::vector<std::string> keys{
        "experiment", "n",       "seed",      "seeds",   "families", "grid",     "out",   "estimator",
        "probes",     "threads", "activation", "mode",    "t_probe",  "sigma_x2", "lr",    "steps"};
    return keys;
}

std::vector<double> parse_grid(const std::string& spec) {
    std::vector<double> out;
    if (trim(spec).empty()) throw InvalidArgument("grid: empty specification");
    for (const auto& item : split(spec, ',')) {
        const auto parts = split(item, ':');
        if (parts.size() == 1) {
            double v;
            if (!parse_double(parts[0], v)) throw InvalidArgument("grid: '" + item + "' is not a number");
            out.push_back(v);
            continue;
        }
        if (parts.size() != 3 && parts.size() != 4)
            throw InvalidArgument("grid: '" + item + "' must be lo:hi:steps or lo:hi:steps:log");
        double lo, hi;
        long long steps;
        if (!parse_double(parts[0], lo) || !parse_double(parts[1], hi) || !parse_int(parts[2], steps))
            throw InvalidArgument("grid: cannot parse '" + item + "'");
        const bool log = parts.size() == 4;
        if (log && parts[3] != "log") throw InvalidArgument("grid: unknown spacing '" + parts[3] + "'");
        if (steps < 1) throw InvalidArgument("grid: steps must be >= 1 in '" + item + "'");
        if (steps > 1 && !(hi > lo)) throw InvalidArgument("grid: need lo < hi in '" + item + "'");
        if (log && !(lo > 0.0)) throw InvalidArgument("grid: log spacing needs lo > 0 in '" + item + "'");
        for (long long i = 0; i < steps; ++i) {
            const double t = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
            double v = log ? lo * std::pow(hi / lo, t) : lo + (hi - lo) * t;
            if (i == steps - 1) v = steps == 1 ? lo : hi;
            out.push_back(v);
        }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end(),
                          [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(a)); }),
              out.end());
    return out;
}

RawConfig read_config_text(const std::string& text, const std::string& source) {
    RawConfig raw;
    raw.source = source;
    std::vector<std::string> errors;
    const auto& keys = known_config_keys();
    std::istringstream in(text);
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto hash = line.find('#');
        const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
        if (body.empty()) continue;
        const auto eq = body.find('=');
        const std::string where = source + ":" + std::to_string(number) + ": ";
        if (eq == std::string::npos) {
            errors.push_back(where + "expected key=value");
            continue;
        }
        const std::string key = trim(body.substr(0, eq));
        const std::string value = trim(body.substr(eq + 1));
        if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
            errors.push_back(where + "unknown key '" + key + "'");
            continue;
        }
        if (raw.values.count(key)) {
            errors.push_back(where + "duplicate key '" + key + "' (first on line " +
                             std::to_string(raw.line_of[key]) + ")");
            continue;
        }
        raw.values[key] = value;
        raw.line_of[key] = number;
    }
    if (!errors.empty()) throw ConfigError(std::move(errors));
    return raw;
}

RawConfig read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError({path + ": cannot open config file"});
    std::stringstream buf;
    buf << in.rdbuf();
    return read_config_text(buf.str(), path);
}

ExperimentConfig resolve_config(const RawConfig& file, const std::map<std::string, std::string>& overrides) {
    std::vector<std::string> errors;
    const auto& keys = known_config_keys();
    std::map<std::string, std::string> values = file.values;
    std::map<std::string, std::string> origin;
    for (const auto& [k, line] : file.line_of) origin[k] = file.source + ":" + std::to_string(line) + ": ";
    for (const auto& [k, v] : overrides) {
        if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
            errors.push_back("command line: unknown key '" + k + "'");
            continue;
        }
        values[k] = v;
        origin[k] = "command line: ";
    }

    ExperimentConfig cfg;
    auto where = [&](const std::string& k) { return origin.count(k) ? origin[k] : std::string(); };
    auto has = [&](const std::string& k) { return values.count(k) > 0; };

    if (!has("experiment")) {
        errors.push_back("missing experiment (one of fig1, fig2, fig3, fig4, moments, freeprob-check, train-probe)");
        throw ConfigError(std::move(errors));
    }
    cfg.experiment = values["experiment"];
    if (std::find(std::begin(kExperiments), std::end(kExperiments), cfg.experiment) == std::end(kExperiments)) {
        errors.push_back(where("experiment") + "unknown experiment '" + cfg.experiment + "'");
        throw ConfigError(std::move(errors));
    }
    const std::string& e = cfg.experiment;

    auto get_count = [&](const std::string& k, std::size_t def, long long min, std::size_t& out) {
        if (!has(k)) {
            out = def;
            cfg.defaulted.push_back(k);
            return;
        }
        long long v;
        if (!parse_int(values[k], v)) {
            errors.push_back(where(k) + k + ": '" + values[k] + "' is not an integer");
        } else if (v < min) {
            errors.push_back(where(k) + k + " must be >= " + std::to_string(min) + " (got " + values[k] + ")");
        } else {
            out = static_cast<std::size_t>(v);
        }
    };
    auto get_real = [&](const std::string& k, double def, double& out) {
        if (!has(k)) {
            out = def;
            cfg.defaulted.push_back(k);
            return false;
        }
        if (!parse_double(values[k], out)) {
            errors.push_back(where(k) + k + ": '" + values[k] + "' is not a number");
            return false;
        }
        return true;
    };

    get_count("n", default_n(e), 1, cfg.n);
    get_count("seeds", default_seeds(e), 0, cfg.seeds);
    std::size_t threads = 1;
    get_count("threads", 1, 1, threads);
    cfg.threads = static_cast<unsigned>(threads);
    get_count("probes", 32, 1, cfg.probes);
    get_count("t_probe", 500, 1, cfg.t_probe);
    get_count("steps", 100, 0, cfg.steps);

    if (has("seed")) {
        const auto& s = values["seed"];
        std::uint64_t v = 0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || p != s.data() + s.size())
            errors.push_back(where("seed") + "seed: '" + s + "' is not a non-negative 64-bit integer");
        else
            cfg.seed = v;
    } else {
        cfg.defaulted.push_back("seed");
    }

    if (get_real("sigma_x2", 1.0, cfg.sigma_x2) && !(cfg.sigma_x2 >= 0.0))
        errors.push_back(where("sigma_x2") + "sigma_x2 must be >= 0");
    if (get_real("lr", 0.05, cfg.learning_rate) && !(cfg.learning_rate > 0.0))
        errors.push_back(where("lr") + "lr must be > 0");

    if (has("families")) {
        for (const auto& name : split(values["families"], ',')) {
            try {
                const Family f = parse_family(name);
                if (std::find(cfg.families.begin(), cfg.families.end(), f) == cfg.families.end())
                    cfg.families.push_back(f);
            } catch (const InvalidArgument& ex) {
                errors.push_back(where("families") + ex.what());
            }
        }
    } else {
        cfg.families.assign(std::begin(kAllFamilies), std::end(kAllFamilies));
        cfg.defaulted.push_back("families");
    }

    auto parse_enum = [&](const std::string& k, auto parser, auto def, auto& out) {
        if (!has(k)) {
            out = def;
            cfg.defaulted.push_back(k);
            return;
        }
        try {
            out = parser(values[k]);
        } catch (const InvalidArgument& ex) {
            errors.push_back(where(k) + ex.what());
        }
    };
    parse_enum(
        "estimator",
        [](const std::string& s) {
            if (s == "exact") return TraceEstimator::Exact;
            if (s == "hutchinson") return TraceEstimator::Hutchinson;
            throw InvalidArgument("estimator must be exact or hutchinson (got '" + s + "')");
        },
        TraceEstimator::Exact, cfg.estimator);
    parse_enum("activation", [](const std::string& s) { return parse_activation(s); }, Activation::HardTanh,
               cfg.activation);
    parse_enum("mode", [](const std::string& s) { return parse_weight_mode(s); }, WeightMode::Tied,
               cfg.weight_mode);

    if (has("out")) {
        cfg.out = values["out"];
        if (cfg.out.empty()) errors.push_back(where("out") + "out must not be empty");
    } else {
        cfg.out = e + ".csv";
        cfg.defaulted.push_back("out");
    }

    if (has("grid")) {
        cfg.grid_spec = values["grid"];
    } else {
        cfg.grid_spec = default_grid(e);
        cfg.defaulted.push_back("grid");
    }
    try {
        cfg.grid = parse_grid(cfg.grid_spec);
    } catch (const InvalidArgument& ex) {
        errors.push_back(where("grid") + ex.what());
    }

    for (double g : cfg.grid) {
        const std::string v = format_double(g);
        if (e == "fig1" && !(g > 0.0 && g < 1.0)) {
            errors.push_back(where("grid") + "fig1 grid holds delta values in (0, 1); got " + v);
        } else if ((e == "fig2" || e == "fig3" || e == "fig4") && !(g > 0.0)) {
            errors.push_back(where("grid") + e + " grid holds sqrt(V) values > 0; got " + v);
        } else if ((e == "moments" || e == "freeprob-check" || e == "train-probe") && !(g >= 0.0)) {
            errors.push_back(where("grid") + e + " grid values must be >= 0; got " + v);
        }
    }
    if (e == "moments" && cfg.seeds == 0) {
        for (Family f : cfg.families) {
            const double vc = critical_scale(f, cfg.weight_mode);
            for (double g : cfg.grid)
                if (g >= vc)
                    errors.push_back(where("grid") + "theory-only query at V=" + format_double(g) + " is at or above V_c=" +
                                     format_double(vc) + " for " + std::string(to_string(f)) + " " +
                                     std::string(to_string(cfg.weight_mode)) + " weights");
        }
    }
    if (e == "freeprob-check")
        for (double g : cfg.grid)
            if (g >= 0.25)
                errors.push_back(where("grid") + "freeprob-check V=" + format_double(g) +
                                 " is at or above V_c=0.25 for the GOE transforms");
    if (cfg.families.empty()) errors.push_back(where("families") + "no families selected");

    if (!errors.empty()) throw ConfigError(std::move(errors));
    std::sort(cfg.defaulted.begin(), cfg.defaulted.end());
    return cfg;
}

ExperimentConfig validate_config(const std::string& path) {
    return resolve_config(read_config_file(path), {});
}

std::map<std::string, std::string> ExperimentConfig::echo() const {
    std::map<std::string, std::string> m;
    m["experiment"] = experiment;
    m["n"] = std::to_string(n);
    m["seed"] = std::to_string(seed);
    m["seeds"] = std::to_string(seeds);
    std::string fams;
    for (std::size_t i = 0; i < families.size(); ++i) fams += (i ? "," : "") + std::string(to_string(families[i]));
    m["families"] = fams;
    m["grid"] = grid_spec;
    m["out"] = out;
    m["estimator"] = estimator == TraceEstimator::Exact ? "exact" : "hutchinson";
    m["probes"] = std::to_string(probes);
    m["threads"] = std::to_string(threads);
    m["activation"] = std::string(to_string(activation));
    m["mode"] = std::string(to_string(weight_mode));
    m["t_probe"] = std::to_string(t_probe);
    m["sigma_x2"] = format_double(sigma_x2);
    m["lr"] = format_double(learning_rate);
    m["steps"] = std::to_string(steps);
    return m;
}

}  // namespace deqlab
