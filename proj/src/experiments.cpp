#include "deqlab/experiments.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <functional>
#include <optional>

#include <json.hpp>

#include "deqlab/analytic_moments.hpp"
#include "deqlab/freeprob.hpp"
#include "deqlab/linear_deq.hpp"
#include "deqlab/nonlinear_deq.hpp"
#include "deqlab/stats.hpp"
#include "deqlab/train_probe.hpp"

#ifndef DEQLAB_VERSION
#define DEQLAB_VERSION "0.0.0"
#endif

namespace deqlab {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string num(double v) {
    if (!std::isfinite(v)) return {};
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return ec == std::errc() ? std::string(buf, p) : std::string();
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
        if (c == '"') q += '"';
        q += c;
    }
    return q + "\"";
}

void apply_summary(ResultRow& row, const Summary& s) {
    row.mean = s.mean;
    row.median = s.median;
    row.std_error = s.std_error;
    row.q25 = s.q25;
    row.q75 = s.q75;
}

void apply_report(ResultRow& row, const MomentReport& r) {
    row.theory = r.theory_value;
    row.seeds = r.n_seeds;
    row.diverged = r.n_diverged;
    if (r.mc_mean) row.mean = *r.mc_mean;
    if (r.mc_median) row.median = *r.mc_median;
    if (r.mc_stderr) row.std_error = *r.mc_stderr;
    if (r.mc_q25) row.q25 = *r.mc_q25;
    if (r.mc_q75) row.q75 = *r.mc_q75;
}

std::vector<double> finite_only(const std::vector<double>& v) {
    std::vector<double> out;
    for (double x : v)
        if (std::isfinite(x)) out.push_back(x);
    return out;
}

void append_note(ResultRow& row, const std::string& note) {
    row.note += (row.note.empty() ? "" : "; ") + note;
}

/// Runs `body` for one cell; an exception turns the prototype row into a failed row.
void guarded(RunResult& res, ResultRow proto, const std::function<void(std::vector<ResultRow>&)>& body) {
    std::vector<ResultRow> rows;
    try {
        body(rows);
    } catch (const std::exception& ex) {
        proto.failed = true;
        proto.note = std::string("error: ") + ex.what();
        rows.assign(1, proto);
        ++res.failed_cells;
    }
    for (auto& r : rows) res.rows.push_back(std::move(r));
}

ResultRow base_row(const ExperimentConfig& cfg, Family f) {
    ResultRow row;
    row.experiment = cfg.experiment;
    row.family = std::string(to_string(f));
    row.n = cfg.n;
    row.seeds = cfg.seeds;
    return row;
}

// ---------------------------------------------------------------------------

void run_fig1(const ExperimentConfig& cfg, RunResult& res) {
    LengthVarianceOptions opt{cfg.estimator, cfg.probes, cfg.threads};
    const SeedDerivation root{cfg.seed, 0, 0, 0};
    for (Family f : cfg.families) {
        for (std::size_t g = 0; g < cfg.grid.size(); ++g) {
            ResultRow proto = base_row(cfg, f);
            proto.mode = "tied";
            proto.delta = cfg.grid[g];
            proto.scale = scale_from_distance(f, WeightMode::Tied, proto.delta);
            proto.sqrt_scale = std::sqrt(proto.scale);
            proto.statistic = "length_variance_T";
            guarded(res, proto, [&](std::vector<ResultRow>& out) {
                ResultRow row = proto;
                const auto report = estimate_length_variance({f, cfg.n, proto.scale}, WeightMode::Tied, cfg.seeds,
                                                             root.with_family(family_tag(f)).with_grid(g), opt);
                apply_report(row, report);
                if (cfg.estimator == TraceEstimator::Hutchinson)
                    append_note(row, "hutchinson " + std::to_string(cfg.probes) + " probes");
                if (finite_size_caveat(f, WeightMode::Tied, proto.scale, cfg.n))
                    append_note(row, "N below delta^-1.5: edge fluctuations comparable to the gap");
                out.push_back(row);
            });
        }
    }
}

/// fig2 and fig3 share the batched fixed-point runs.
void run_fig23(const ExperimentConfig& cfg, RunResult& res, bool radius) {
    const Nonlinearity phi(cfg.activation);
    const SeedDerivation root{cfg.seed, 0, 0, 0};
    const std::size_t nf = cfg.families.size(), ng = cfg.grid.size(), ns = cfg.seeds;
    if (ns == 0) throw InvalidArgument("fig2/fig3 need at least one seed");
    std::vector<double> value(nf * ns * ng, kNaN);
    std::vector<std::string> task_error(nf * ns);

    parallel_for(nf * ns, cfg.threads, [&](std::size_t task) {
        const std::size_t f = task / ns, r = task % ns;
        try {
            const Family fam = cfg.families[f];
            const Matrix w = sample({fam, cfg.n, 1.0}, root.with_family(family_tag(fam)).with_replicate(r));
            const Vector x = sample_gaussian_vector(cfg.n, cfg.sigma_x2, root.with_replicate(r), StreamPurpose::Input);
            const auto run = iterate_h_batched(w, x, phi, cfg.grid, 5000, 1e-10, true);
            for (std::size_t g = 0; g < ng; ++g) {
                if (!run.converged[g]) continue;
                const Vector h = run.h.col(static_cast<Eigen::Index>(g));
                double v;
                if (radius) {
                    const Matrix scaled = cfg.grid[g] * w;
                    v = radius_empirical(scaled, h, phi);
                } else {
                    v = h.squaredNorm() / static_cast<double>(cfg.n);
                }
                value[(f * ns + r) * ng + g] = v;
            }
        } catch (const std::exception& ex) {
            task_error[task] = ex.what();
        }
    });

    for (std::size_t f = 0; f < nf; ++f) {
        const Family fam = cfg.families[f];
        for (std::size_t g = 0; g < ng; ++g) {
            ResultRow proto = base_row(cfg, fam);
            proto.mode = "tied";
            proto.sqrt_scale = cfg.grid[g];
            proto.scale = cfg.grid[g] * cfg.grid[g];
            proto.statistic = radius ? "spectral_radius" : "sigma_h2";
            guarded(res, proto, [&](std::vector<ResultRow>& out) {
                for (std::size_t r = 0; r < ns; ++r)
                    if (!task_error[f * ns + r].empty()) throw Error(task_error[f * ns + r]);
                ResultRow row = proto;
                std::vector<double> vals(ns);
                for (std::size_t r = 0; r < ns; ++r) vals[r] = value[(f * ns + r) * ng + g];
                const auto ok = finite_only(vals);
                row.diverged = ns - ok.size();
                if (!ok.empty()) apply_summary(row, summarize(ok));
                try {
                    const auto st = sigma_h_selfconsistent(proto.scale, cfg.sigma_x2, 0.0, phi);
                    row.theory = radius ? radius_theory(fam, proto.scale, phi, st.sigma_h2) : st.sigma_h2;
                } catch (const Error& ex) {
                    append_note(row, std::string("no theory: ") + ex.what());
                }
                if (row.diverged > 0) append_note(row, "diverged counts seeds not converged to 1e-10 by t=5000");
                out.push_back(row);
            });
        }
    }
}

void run_fig4(const ExperimentConfig& cfg, RunResult& res) {
    const Nonlinearity phi(cfg.activation);
    const SeedDerivation root{cfg.seed, 0, 0, 0};
    const std::string stat = "residual_t" + std::to_string(cfg.t_probe);
    std::vector<ResidualCell> cells;
    ResultRow whole;
    whole.experiment = cfg.experiment;
    whole.statistic = stat;
    whole.n = cfg.n;
    whole.seeds = cfg.seeds;
    guarded(res, whole, [&](std::vector<ResultRow>&) {
        if (cfg.seeds == 0) throw InvalidArgument("fig4 needs at least one seed");
        cells = residual_sweep(cfg.families, cfg.grid, cfg.n, cfg.seeds, cfg.t_probe, phi, root, cfg.threads);
    });
    if (cells.empty()) return;

    for (const auto& cell : cells) {
        ResultRow row = base_row(cfg, cell.family);
        row.mode = "tied";
        row.sqrt_scale = cell.sqrt_scale;
        row.scale = cell.sqrt_scale * cell.sqrt_scale;
        row.statistic = stat;
        apply_summary(row, cell.residual);
        row.diverged = cell.n_diverged;
        if (cell.n_diverged > 0) append_note(row, "diverged residuals clipped at 1e6");
        if (cfg.sigma_x2 != 1.0) append_note(row, "inputs drawn with unit variance; sigma_x2 ignored");
        res.rows.push_back(row);
    }
    for (Family f : cfg.families) {
        ResultRow row = base_row(cfg, f);
        row.mode = "tied";
        row.statistic = "transition_sqrtV";
        const auto it = std::find_if(cells.begin(), cells.end(), [&](const auto& c) { return c.family == f; });
        row.theory = it != cells.end() ? it->predicted_critical : kNaN;
        row.mean = empirical_transition(res.rows, row.family, stat);
        row.note = "mean = first sqrt(V) with median residual > 1e-3; theory = predicted critical sqrt(V)";
        if (!std::isfinite(row.theory)) append_note(row, "no theory prediction for this family and nonlinearity");
        res.rows.push_back(row);
    }
}

void run_moments(const ExperimentConfig& cfg, RunResult& res) {
    const SeedDerivation root{cfg.seed, 0, 0, 0};
    const WeightMode mode = cfg.weight_mode;
    const Vector x = cfg.seeds > 0
                         ? sample_gaussian_vector(cfg.n, cfg.sigma_x2, root, StreamPurpose::Input)
                         : Vector();
    for (Family f : cfg.families) {
        for (std::size_t g = 0; g < cfg.grid.size(); ++g) {
            const double v = cfg.grid[g];
            ResultRow proto = base_row(cfg, f);
            proto.mode = std::string(to_string(mode));
            proto.scale = v;
            proto.sqrt_scale = std::sqrt(v);
            proto.delta = distance_to_threshold(f, mode, v);
            proto.statistic = "moments";
            guarded(res, proto, [&](std::vector<ResultRow>& out) {
                const bool sub = v < critical_scale(f, mode);
                auto theory_row = [&](MomentQuantity q) {
                    ResultRow row = proto;
                    row.statistic = std::string(to_string(q));
                    row.seeds = 0;
                    if (sub)
                        row.theory = theory_value({f, mode, v, q});
                    else
                        row.note = "V >= V_c=" + num(critical_scale(f, mode));
                    return row;
                };
                ResultRow vf = theory_row(MomentQuantity::VarianceFactor);
                ResultRow gt = theory_row(MomentQuantity::GramTraceFactor);
                ResultRow lv = theory_row(MomentQuantity::LengthVarianceT);
                ResultRow mr = proto;
                mr.statistic = "mean_ratio";
                mr.seeds = 0;
                mr.theory = (f == Family::GOE && mode == WeightMode::Tied) ? (sub ? catalan_generating(v) : kNaN) : 1.0;
                std::vector<ResultRow> extra;
                if (f == Family::GOE && mode == WeightMode::Tied && sub) {
                    ResultRow sp = proto;
                    sp.statistic = "variance_factor_single_pole";
                    sp.seeds = 0;
                    sp.theory = goe_variance_factor_single_pole(v);
                    sp.note = "printed main-text closed form; Monte-Carlo is in the variance_factor row";
                    extra.push_back(sp);
                }
                std::optional<ResultRow> rec;
                if (mode == WeightMode::Untied && f != Family::Orthogonal && sub) {
                    rec = proto;
                    rec->statistic = "length_variance_T_recursive";
                    rec->seeds = 0;
                    rec->theory = untied_length_variance_recursive(f, v);
                    rec->note = "theory from M = I + W M'; Monte-Carlo repeated from length_variance_T";
                }

                if (cfg.seeds > 0 && sub) {
                    LinearDeqProblem problem{{f, cfg.n, v}, x, mode, InputMode::FixedVector, cfg.sigma_x2};
                    const auto est = estimate_moments(problem, cfg.seeds, root.with_family(family_tag(f)).with_grid(g),
                                                      cfg.threads);
                    const auto& rep = est.variance_factor;
                    apply_report(vf, rep);
                    vf.theory = rep.theory_value;
                    apply_report(gt, rep);
                    gt.theory = gram_trace_factor_theory(f, mode, v);
                    for (double* p : {&gt.mean, &gt.median, &gt.q25, &gt.q75}) *p += 1.0;
                    mr.seeds = cfg.seeds;
                    mr.diverged = rep.n_diverged;
                    mr.mean = est.mean_ratio;
                    mr.std_error = est.mean_ratio_stderr;
                    const auto lrep = estimate_length_variance({f, cfg.n, v}, mode, cfg.seeds,
                                                               root.with_family(family_tag(f)).with_grid(g),
                                                               {cfg.estimator, cfg.probes, cfg.threads});
                    apply_report(lv, lrep);
                    if (rec) {
                        const double keep = rec->theory;
                        apply_report(*rec, lrep);
                        rec->theory = keep;
                    }
                } else if (cfg.seeds > 0) {
                    for (ResultRow* r : {&vf, &gt, &lv, &mr}) append_note(*r, "Monte-Carlo skipped at V >= V_c");
                }
                out.push_back(vf);
                out.push_back(gt);
                out.push_back(lv);
                out.push_back(mr);
                for (auto& e : extra) out.push_back(e);
                if (rec) out.push_back(*rec);
            });
        }
    }
}

void run_freeprob(const ExperimentConfig& cfg, RunResult& res) {
    const SeedDerivation root{cfg.seed, 0, 0, 0};
    const double nd = static_cast<double>(cfg.n);
    const Nonlinearity hardtanh(Activation::HardTanh);
    for (std::size_t g = 0; g < cfg.grid.size(); ++g) {
        const double v = cfg.grid[g];
        ResultRow proto;
        proto.experiment = cfg.experiment;
        proto.scale = v;
        proto.sqrt_scale = std::sqrt(v);
        proto.n = cfg.n;
        proto.seeds = cfg.seeds;
        proto.mode = "tied";

        // GOE resolvent: series vs recovered density vs Monte-Carlo.
        proto.family = "goe";
        proto.statistic = "goe_resolvent";
        guarded(res, proto, [&](std::vector<ResultRow>& out) {
            const auto series = goe_resolvent_mgf(v, 4);
            const double r = 2.0 * std::sqrt(v);
            const auto grid = support_grid(1.0 / (1.0 + r), 1.0 / (1.0 - r));
            const auto density = density_from_stieltjes(
                [v](Complex z) { return (1.0 + goe_resolvent_mgf_closed(z, v)) / z; }, grid);
            std::vector<std::vector<double>> mc(4, std::vector<double>(cfg.seeds, kNaN));
            parallel_for(cfg.seeds, cfg.threads, [&](std::size_t s) {
                const Matrix w = sample({Family::GOE, cfg.n, v}, root.with_family(1000 + g).with_replicate(s));
                const auto ev = sym_spectrum(w);
                for (int k = 1; k <= 4; ++k) {
                    double acc = 0.0;
                    for (double l : ev) acc += std::pow(1.0 - l, -k);
                    mc[k - 1][s] = acc / nd;
                }
            });
            for (int k = 1; k <= 4; ++k) {
                ResultRow row = proto;
                row.statistic = "goe_resolvent_m" + std::to_string(k);
                row.theory = series[k];
                if (cfg.seeds > 0) apply_summary(row, summarize(mc[k - 1]));
                row.note = "density-recovered moment " + num(density.moment(k) / density.total_mass());
                out.push_back(row);
            }
            ResultRow sm = proto;
            sm.statistic = "goe_gram_second_moment";
            sm.seeds = 0;
            sm.theory = goe_gram_second_moment(v);
            sm.mean = goe_gram_second_moment_fd(v);
            sm.note = "mean = fourth derivative of M(w) by finite differences";
            out.push_back(sm);
        });

        // Random-family Gram moments from the cubic recursion.
        proto.family = "random";
        proto.statistic = "random_gram";
        guarded(res, proto, [&](std::vector<ResultRow>& out) {
            const auto series = random_gram_moment_series(v, 3);
            std::vector<std::vector<double>> mc(3, std::vector<double>(cfg.seeds, kNaN));
            parallel_for(cfg.seeds, cfg.threads, [&](std::size_t s) {
                Matrix a = -sample({Family::IidGaussian, cfg.n, v}, root.with_family(2000 + g).with_replicate(s));
                a.diagonal().array() += 1.0;
                const Matrix inv = solve_linear(a, Matrix(Matrix::Identity(a.rows(), a.cols())));
                const Matrix gram = inv * inv.transpose();
                const auto ev = sym_spectrum(Matrix(0.5 * (gram + gram.transpose())));
                for (int k = 1; k <= 3; ++k) {
                    double acc = 0.0;
                    for (double l : ev) acc += std::pow(l, k);
                    mc[k - 1][s] = acc / nd;
                }
            });
            for (int k = 1; k <= 3; ++k) {
                ResultRow row = proto;
                row.statistic = "random_gram_m" + std::to_string(k);
                row.theory = series[k];
                if (cfg.seeds > 0) apply_summary(row, summarize(mc[k - 1]));
                out.push_back(row);
            }
        });

        // Hard-tanh Jacobian spectrum at the self-consistent active fraction.
        proto.family = "goe";
        proto.statistic = "hardtanh_spectrum";
        guarded(res, proto, [&](std::vector<ResultRow>& out) {
            const double p = sigma_h_selfconsistent(v, cfg.sigma_x2, 0.0, hardtanh).p;
            std::vector<double> ks(cfg.seeds), atom(cfg.seeds);
            double atom_theory = 1.0 - p;
            for (std::size_t s = 0; s < cfg.seeds; ++s) {
                const auto chk = hardtanh_spectrum_check(p, v, cfg.n, root.with_family(3000 + g).with_replicate(s));
                ks[s] = chk.ks_continuous;
                atom[s] = chk.atom_mass_empirical;
            }
            ResultRow k = proto;
            k.statistic = "hardtanh_spectrum_ks";
            k.theory = 0.0;
            if (cfg.seeds > 0) apply_summary(k, summarize(ks));
            k.note = "Kolmogorov distance of the continuous part; p=" + num(p);
            ResultRow a = proto;
            a.statistic = "hardtanh_atom_mass";
            a.theory = atom_theory;
            if (cfg.seeds > 0) apply_summary(a, summarize(atom));
            out.push_back(k);
            out.push_back(a);
        });
    }
}

void run_train(const ExperimentConfig& cfg, RunResult& res) {
    ProbeTask task;
    task.dim = cfg.n;
    task.activation = cfg.activation;
    TrainOptions opt;
    opt.learning_rate = cfg.learning_rate;
    opt.steps = cfg.steps;
    opt.threads = cfg.threads;
    const SeedDerivation root{cfg.seed, 0, 0, 0};
    std::vector<TrainRow> rows;
    ResultRow whole;
    whole.experiment = cfg.experiment;
    whole.statistic = "train";
    guarded(res, whole, [&](std::vector<ResultRow>&) {
        if (cfg.seeds == 0) throw InvalidArgument("train-probe needs at least one seed");
        rows = train_stability_sweep(task, cfg.families, cfg.grid, cfg.seeds, opt, root);
    });
    if (rows.empty()) return;
    const std::size_t ng = cfg.grid.size(), ns = cfg.seeds;
    for (std::size_t f = 0; f < cfg.families.size(); ++f) {
        for (std::size_t g = 0; g < ng; ++g) {
            ResultRow proto = base_row(cfg, cfg.families[f]);
            proto.mode = "tied";
            proto.sqrt_scale = cfg.grid[g];
            proto.scale = cfg.grid[g] * cfg.grid[g];
            std::vector<double> loss, steps;
            std::size_t diverged = 0;
            for (std::size_t r = 0; r < ns; ++r) {
                const auto& t = rows[(f * ng + g) * ns + r];
                if (t.diverged) {
                    ++diverged;
                    continue;
                }
                loss.push_back(t.final_train_loss);
                if (t.steps_to_threshold) steps.push_back(static_cast<double>(*t.steps_to_threshold));
            }
            ResultRow rate = proto;
            rate.statistic = "divergence_rate";
            const double pr = static_cast<double>(diverged) / static_cast<double>(ns);
            rate.mean = pr;
            rate.std_error = std::sqrt(pr * (1.0 - pr) / static_cast<double>(ns));
            rate.diverged = diverged;
            ResultRow fl = proto;
            fl.statistic = "final_train_loss";
            fl.diverged = diverged;
            if (!loss.empty()) apply_summary(fl, summarize(loss));
            ResultRow st = proto;
            st.statistic = "steps_to_half_loss";
            st.diverged = diverged;
            if (!steps.empty()) apply_summary(st, summarize(steps));
            st.note = std::to_string(steps.size()) + " of " + std::to_string(ns - diverged) +
                      " surviving seeds reached half the initial loss";
            res.rows.push_back(rate);
            res.rows.push_back(fl);
            res.rows.push_back(st);
        }
    }
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

double empirical_transition(const std::vector<ResultRow>& rows, const std::string& family,
                            const std::string& statistic, double threshold) {
    double best = kNaN;
    for (const auto& r : rows) {
        if (r.family != family || r.statistic != statistic || r.failed) continue;
        if (r.median > threshold && !(r.sqrt_scale >= best)) best = r.sqrt_scale;
    }
    return best;
}

HardtanhSpectrumCheck hardtanh_spectrum_check(double p, double scale, std::size_t n, const SeedDerivation& seed) {
    const Matrix w = sample({Family::GOE, n, scale}, seed);
    RandomStream mask(seed, StreamPurpose::Mask);
    std::vector<Eigen::Index> active;
    for (std::size_t i = 0; i < n; ++i)
        if (mask.bernoulli(p)) active.push_back(static_cast<Eigen::Index>(i));
    // Full spectrum of D^{1/2} W D^{1/2}: the active block plus exact zeros.
    const auto k = static_cast<Eigen::Index>(active.size());
    Matrix block(k, k);
    for (Eigen::Index j = 0; j < k; ++j)
        for (Eigen::Index i = 0; i < k; ++i) block(i, j) = w(active[i], active[j]);
    std::vector<double> ev = k > 0 ? sym_spectrum(block) : std::vector<double>{};
    ev.resize(n, 0.0);

    const auto density = hardtanh_jacobian_density(p, scale);
    HardtanhSpectrumCheck out;
    out.n_eigenvalues = n;
    out.atom_mass_theory = density.atom_mass();
    std::vector<double> continuous;
    std::size_t zeros = 0;
    for (double l : ev) {
        if (std::abs(l) < 1e-10)
            ++zeros;
        else
            continuous.push_back(l);
    }
    out.atom_mass_empirical = static_cast<double>(zeros) / static_cast<double>(n);
    out.ks_continuous =
        continuous.empty() ? 0.0 : kolmogorov_distance(continuous, [&](double x) { return density.continuous_cdf(x); });
    return out;
}

RunResult run_experiment(const ExperimentConfig& cfg) {
    const auto start = std::chrono::steady_clock::now();
    RunResult res;
    const std::string& e = cfg.experiment;
    if (e == "fig1")
        run_fig1(cfg, res);
    else if (e == "fig2")
        run_fig23(cfg, res, false);
    else if (e == "fig3")
        run_fig23(cfg, res, true);
    else if (e == "fig4")
        run_fig4(cfg, res);
    else if (e == "moments")
        run_moments(cfg, res);
    else if (e == "freeprob-check")
        run_freeprob(cfg, res);
    else if (e == "train-probe")
        run_train(cfg, res);
    else
        throw InvalidArgument("unknown experiment '" + e + "'");
    const std::size_t ok = static_cast<std::size_t>(
        std::count_if(res.rows.begin(), res.rows.end(), [](const ResultRow& r) { return !r.failed; }));
    res.status = ok == 0 ? 3 : 0;
    res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return res;
}

std::string csv_header() {
    return "experiment,family,mode,V,sqrtV,delta,N,seeds,statistic,theory,mean,median,stderr,q25,q75,diverged,note\n";
}

std::string format_csv(const std::vector<ResultRow>& rows) {
    std::string out = csv_header();
    for (const auto& r : rows) {
        out += csv_field(r.experiment) + ',' + csv_field(r.family) + ',' + csv_field(r.mode) + ',' + num(r.scale) +
               ',' + num(r.sqrt_scale) + ',' + num(r.delta) + ',' + std::to_string(r.n) + ',' +
               std::to_string(r.seeds) + ',' + csv_field(r.statistic) + ',' + num(r.theory) + ',' + num(r.mean) +
               ',' + num(r.median) + ',' + num(r.std_error) + ',' + num(r.q25) + ',' + num(r.q75) + ',' +
               std::to_string(r.diverged) + ',' + csv_field(r.note) + '\n';
    }
    return out;
}

void write_outputs(const ExperimentConfig& cfg, const RunResult& res) {
    {
        std::ofstream csv(cfg.out, std::ios::binary | std::ios::trunc);
        if (!csv) throw IoError("cannot open '" + cfg.out + "' for writing");
        csv << format_csv(res.rows);
        if (!csv) throw IoError("failed writing '" + cfg.out + "'");
    }
    nlohmann::ordered_json m;
    m["tool"] = "deqlab";
    m["version"] = DEQLAB_VERSION;
    m["experiment"] = cfg.experiment;
    nlohmann::ordered_json conf;
    for (const auto& [k, v] : cfg.echo()) conf[k] = v;
    m["config"] = conf;
    m["defaulted_keys"] = cfg.defaulted;
    m["csv"] = cfg.out;
    m["rows"] = res.rows.size();
    m["failed_cells"] = res.failed_cells;
    m["exit_status"] = res.status;
    m["wall_time_seconds"] = res.wall_seconds;
    m["timestamp_utc"] = utc_timestamp();
    nlohmann::ordered_json cells = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < res.rows.size(); ++i) {
        const auto& r = res.rows[i];
        nlohmann::ordered_json c;
        c["row"] = i;
        c["family"] = r.family;
        c["statistic"] = r.statistic;
        if (std::isfinite(r.scale)) c["V"] = r.scale;
        if (std::isfinite(r.delta)) c["delta"] = r.delta;
        c["diverged"] = r.diverged;
        if (r.failed) c["error"] = r.note;
        cells.push_back(c);
    }
    m["cells"] = cells;
    std::ofstream js(cfg.manifest_path(), std::ios::binary | std::ios::trunc);
    if (!js) throw IoError("cannot open '" + cfg.manifest_path() + "' for writing");
    js << m.dump(2) << '\n';
    if (!js) throw IoError("failed writing '" + cfg.manifest_path() + "'");
}

int run(const ExperimentConfig& cfg, RunResult* result) {
    RunResult res = run_experiment(cfg);
    write_outputs(cfg, res);
    const int status = res.status;
    if (result) *result = std::move(res);
    return status;
}

}  // namespace deqlab
