// Command-line front end: optimize, simulate, sweep, heatmap, check.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "aoii/experiment.hpp"
#include "aoii/heatmap.hpp"

namespace {

using namespace aoii;
namespace fs = std::filesystem;

int usage() {
    std::fprintf(stderr,
                 "usage: aoii <command> [--config FILE] [--SECTION.KEY=VALUE ...] [args]\n"
                 "\n"
                 "commands:\n"
                 "  optimize               optimize the single configured (N, p_t) cell;\n"
                 "                         writes policy.csv, phi.csv and per-phase traces\n"
                 "  simulate --policy=P    run the collision channel against a policy;\n"
                 "                         P = grid file | pt1 | pte:<E> | pte:auto\n"
                 "                         (pte:auto needs --ref-policy=FILE for the load target)\n"
                 "  sweep                  optimize and benchmark every grid cell;\n"
                 "                         writes fig3_aoii / fig4_load / fig7_pt1 / fig8_pte\n"
                 "  heatmap IN [OUT.svg]   render a policy or phi grid file (--log for log color)\n"
                 "  check                  fast self-diagnostics of the model stack\n"
                 "\n"
                 "the output directory is output.dir, else $AOII_OUTPUT_DIR, else '.'\n");
    return 1;
}

struct Cli {
    std::string command;
    ConfigMap cfg;
    std::vector<std::string> args;  ///< non-override command arguments
};

Cli parse_cli(int argc, char** argv) {
    Cli cli;
    if (argc < 2) throw ConfigError("missing command");
    cli.command = argv[1];
    for (int i = 2; i < argc; ++i) {
        std::string arg = argv[i];
        std::string file;
        if (arg == "--config") {
            if (i + 1 >= argc) throw ConfigError("--config needs a file argument");
            file = argv[++i];
        } else if (arg.rfind("--config=", 0) == 0) {
            file = arg.substr(9);
        }
        if (!file.empty()) {
            std::ifstream in(file);
            if (!in) throw ConfigError("cannot open config file " + file);
            for (const auto& [k, v] : parse_ini(in).kv) cli.cfg.kv[k] = v;
            continue;
        }
        if (!apply_override(cli.cfg, arg)) cli.args.push_back(std::move(arg));
    }
    return cli;
}

fs::path output_dir(const ConfigMap& cfg) {
    std::string dir = cfg.get("output.dir", "");
    if (dir.empty())
        if (const char* env = std::getenv("AOII_OUTPUT_DIR")) dir = env;
    if (dir.empty()) dir = ".";
    fs::create_directories(dir);
    return dir;
}

ChainParams single_cell(const ExperimentConfig& ec) {
    if (ec.grid_N.size() != 1 || ec.grid_pt.size() != 1)
        throw ConfigError("this command needs a single-cell grid (one N, one p_t)");
    return ec.cell(ec.grid_N[0], ec.grid_pt[0]);
}

// Same pipeline as optimize_cell, but each artifact is written the moment it
// exists so a non-converging later stage still leaves the traces on disk.
int cmd_optimize(const Cli& cli) {
    const ExperimentConfig ec = ExperimentConfig::from_map(cli.cfg);
    const ChainParams params = single_cell(ec);
    const StateSpace space(params);
    const fs::path dir = output_dir(cli.cfg);
    Provenance prov;
    prov.config_hash = ec.hash;
    StationaryOptions sopts;
    sopts.include_sync_state = ec.optim.include_sync_state;

    auto [pi0, phi0] = seed_init(space, params);
    const OptimTrace t1 = descend(pi0, phi0, params, ec.optim);
    write_trace_file(dir / "trace_phase1.csv", t1, prov);
    const StationaryResult s1 = stationary_dist(t1.final_pi, params, sopts);
    const double tau = truncated_aoii(space, s1.phi);
    const double p = std::min(1.0, 5.0 / static_cast<double>(params.N));
    std::printf("phase 1: %ld steps, threshold tau=%.4f p=%.4f\n", t1.steps_taken, tau, p);

    const Policy thr = threshold_policy(tau, p, space);
    const OptimTrace t2 = descend(thr, stationary_dist(thr, params, sopts).phi, params, ec.optim);
    write_trace_file(dir / "trace_phase2.csv", t2, prov);
    const StationaryResult stat = stationary_dist(t2.final_pi, params, sopts);

    write_grid_file(dir / "policy.csv",
                    policy_grid(t2.final_pi, params, ec.optim.include_sync_state, prov));
    write_grid_file(dir / "phi.csv",
                    phi_grid(stat.phi, params, ec.optim.include_sync_state, prov));

    double load = 0.0;
    for (std::size_t s = 0; s < space.size(); ++s)
        load += t2.final_pi.values[s] * stat.phi.probs[s];
    load *= static_cast<double>(params.N);
    std::printf("phase 2: %ld steps, U %.6g -> %.6g\n", t2.steps_taken, t2.steps.front().U,
                t2.steps.back().U);
    std::printf("model: aoii=%.4f load=%.4f ell=%.4f residual=%.2e\n",
                truncated_aoii(space, stat.phi), load, stat.ell, stat.residual);
    std::printf("wrote %s\n", (dir / "policy.csv").string().c_str());
    return 0;
}

int cmd_simulate(const Cli& cli) {
    std::string spec, ref;
    for (const auto& a : cli.args) {
        if (a.rfind("--policy=", 0) == 0) spec = a.substr(9);
        else if (a.rfind("--ref-policy=", 0) == 0) ref = a.substr(13);
        else throw ConfigError("unknown simulate argument: " + a);
    }
    if (spec.empty()) throw ConfigError("simulate needs --policy=FILE|pt1|pte:<E>|pte:auto");

    ConfigMap cfg = cli.cfg;
    SimPolicy policy;
    std::string name;
    GridFile grid;
    const bool from_file = spec != "pt1" && spec.rfind("pte:", 0) != 0;
    if (from_file) {
        grid = read_grid_file(spec);
        if (grid.kind != "policy")
            throw ConfigError("simulate needs a policy grid, got kind '" + grid.kind + "'");
        // the file names the cell; make the config agree with it
        cfg.kv["grid.N"] = std::to_string(grid.N);
        cfg.kv["grid.p_t"] = format_double(grid.p_t);
        cfg.kv["chain.F"] = std::to_string(grid.F);
        cfg.kv["chain.G"] = std::to_string(grid.G);
        Policy table;
        table.values = grid.values;
        policy = SimPolicy::from_table(table);
        name = "policy";
    }
    const ExperimentConfig ec = ExperimentConfig::from_map(cfg);
    const ChainParams params = single_cell(ec);

    if (spec == "pt1") {
        policy = benchmark_pt1(params);
        name = "pt1";
    } else if (spec == "pte:auto") {
        if (ref.empty()) throw ConfigError("pte:auto needs --ref-policy=FILE for the load target");
        const GridFile rg = read_grid_file(ref);
        if (rg.kind != "policy")
            throw ConfigError("--ref-policy needs a policy grid, got kind '" + rg.kind + "'");
        Policy table;
        table.values = rg.values;
        double load = 0.0, ignored = 0.0;
        detail::mean_sim(params, SimPolicy::from_table(table), ec.horizon, ec.seeds, &ignored,
                         &load);
        const double E = calibrate_pte(params, load, ec.horizon, ec.seeds.front());
        std::printf("calibrated pte E=%.6f against reference load %.4f\n", E, load);
        policy = benchmark_pte(params, E);
        name = "pte";
    } else if (spec.rfind("pte:", 0) == 0) {
        policy = benchmark_pte(params, parse_double(spec.substr(4)));
        name = "pte";
    }

    std::vector<SimRow> rows;
    double aoii = 0.0, load = 0.0;
    for (std::uint64_t seed : ec.seeds) {
        SimConfig sc;
        sc.params = params;
        sc.horizon = ec.horizon;
        sc.seed = seed;
        sc.policy = policy;
        SimRow row;
        row.seed = seed;
        row.policy = name;
        row.report = run(sc);
        aoii += row.report.avg_aoii;
        load += row.report.avg_load;
        std::printf("seed %llu: aoii=%.4f load=%.4f success=%.4f\n",
                    static_cast<unsigned long long>(seed), row.report.avg_aoii,
                    row.report.avg_load, row.report.success_rate);
        rows.push_back(std::move(row));
    }
    const double n = static_cast<double>(ec.seeds.size());
    std::printf("mean over %zu seeds: aoii=%.4f load=%.4f\n", ec.seeds.size(), aoii / n, load / n);

    const fs::path dir = output_dir(cli.cfg);
    Provenance prov;
    prov.config_hash = ec.hash;
    std::ofstream os(dir / "sim.csv");
    write_sim_csv(os, rows, prov, ec.horizon);
    std::printf("wrote %s\n", (dir / "sim.csv").string().c_str());
    return 0;
}

int cmd_sweep(const Cli& cli) {
    const ExperimentConfig ec = ExperimentConfig::from_map(cli.cfg);
    const fs::path dir = output_dir(cli.cfg);
    const auto outcomes = sweep(ec, dir / "cache");

    bool any_failed = false;
    for (const auto& o : outcomes) {
        if (o.ok) {
            std::printf("N=%ld p_t=%g: aoii=%.3f load=%.3f vs pt1 %.1f%% vs pte %.1f%%%s\n", o.N,
                        o.p_t, o.aoii, o.load, o.pt1_reduction, o.pte_reduction,
                        o.from_cache ? " (cached)" : "");
        } else {
            std::printf("N=%ld p_t=%g: FAILED: %s\n", o.N, o.p_t, o.error.c_str());
            any_failed = true;
        }
    }
    Provenance prov;
    prov.config_hash = ec.hash;
    write_sweep_outputs(dir, outcomes, prov);
    std::printf("wrote %s/fig{3_aoii,4_load,7_pt1,8_pte}.csv\n", dir.string().c_str());
    return any_failed ? 3 : 0;
}

int cmd_heatmap(const Cli& cli) {
    std::string in, out;
    HeatmapOptions opts;
    for (const auto& a : cli.args) {
        if (a == "--log") opts.log_scale = true;
        else if (a.rfind("--title=", 0) == 0) opts.title = a.substr(8);
        else if (in.empty()) in = a;
        else if (out.empty()) out = a;
        else throw ConfigError("unexpected heatmap argument: " + a);
    }
    if (in.empty()) throw ConfigError("heatmap needs an input grid file");
    const GridFile grid = read_grid_file(in);
    if (opts.title.empty())
        opts.title = grid.kind + " N=" + std::to_string(grid.N) + " p_t=" +
                     format_double(grid.p_t);
    const fs::path out_path = out.empty() ? fs::path(in).replace_extension(".svg") : fs::path(out);
    write_heatmap_file(out_path, grid, opts);
    std::printf("wrote %s\n", out_path.string().c_str());
    return 0;
}

int cmd_check() {
    std::mt19937_64 eng(2024);
    auto runif = [&](double lo, double hi) {
        return lo + (hi - lo) * std::generate_canonical<double, 53>(eng);
    };
    auto random_policy = [&](const StateSpace& space) {
        Policy pi(space.size());
        for (std::size_t s = 1; s < space.size(); ++s) pi.values[s] = runif(0.0, 1.0);
        return pi;
    };
    bool ok = true;
    auto verdict = [&ok](const char* what, bool pass, double detail) {
        std::printf("check %-28s %s (%.3g)\n", what, pass ? "ok" : "FAIL", detail);
        ok = ok && pass;
    };

    {  // kernel rows are distributions for arbitrary policies and success rates
        const ChainParams params(0.2, 7, 5, 4);
        const StateSpace space(params);
        double worst = 0.0;
        for (int i = 0; i < 50; ++i) {
            Policy pi = random_policy(space);
            std::vector<double> q(space.size());
            for (std::size_t s = 1; s < q.size(); ++s) q[s] = pi.values[s] * runif(0.0, 1.0);
            const TransitionKernel k = build_kernel(pi, q, params);
            for (const auto& row : k.rows) {
                double sum = 0.0;
                for (int e = 0; e < row.n; ++e) {
                    sum += row.p[e];
                    if (row.p[e] < 0.0 || row.p[e] > 1.0) worst = 1.0;
                }
                worst = std::max(worst, std::abs(sum - 1.0));
            }
        }
        verdict("kernel row sums", worst <= 1e-12, worst);
    }

    {  // closed-form objective dominates the stationary truncated mean
        const ChainParams params(0.15, 6, 6, 5);
        const StateSpace space(params);
        double margin = 1e300;
        for (int i = 0; i < 40; ++i) {
            const Policy pi = random_policy(space);
            const StationaryResult st = stationary_dist(pi, params);
            const BoundBreakdown b = bound(pi, st.phi, params);
            margin = std::min(margin, b.total - truncated_aoii(space, st.phi));
        }
        verdict("objective dominates chain", margin >= -1e-9, margin);
    }

    {  // analytic gradient against central differences
        const ChainParams params(0.25, 5, 5, 5);
        const StateSpace space(params);
        const Policy pi = random_policy(space);
        StateDist phi(space.size());
        double sum = 0.0;
        for (std::size_t s = 0; s < space.size(); ++s) sum += (phi.probs[s] = runif(0.01, 1.0));
        for (auto& v : phi.probs) v /= sum;
        OptimConfig cfg;
        const Gradient ga = gradient(pi, phi, params, cfg);
        cfg.grad_mode = GradMode::finite_difference;
        const Gradient gf = gradient(pi, phi, params, cfg);
        double num = 0.0, den = 0.0;
        for (std::size_t u = 0; u < space.size(); ++u) {
            num += (ga.pi[u] - gf.pi[u]) * (ga.pi[u] - gf.pi[u]) +
                   (ga.phi[u] - gf.phi[u]) * (ga.phi[u] - gf.phi[u]);
            den += gf.pi[u] * gf.pi[u] + gf.phi[u] * gf.phi[u];
        }
        const double rel = std::sqrt(num / std::max(den, 1e-30));
        verdict("analytic gradient", rel <= 1e-4, rel);
    }

    {  // single-sensor channel: simulated occupancy against the chain law
        const ChainParams params(0.25, 5, 5, 1);
        const StateSpace space(params);
        const Policy pi = random_policy(space);
        const StationaryResult st = stationary_dist(pi, params);
        SimConfig sc;
        sc.params = params;
        sc.horizon = 200000;
        sc.seed = 7;
        sc.policy = SimPolicy::from_table(pi);
        const SimReport rep = run(sc);
        double tv = 0.0;
        for (std::size_t s = 0; s < space.size(); ++s)
            tv += std::abs(rep.occupancy[s] - st.phi.probs[s]);
        verdict("single-sensor occupancy", tv / 2.0 <= 0.02, tv / 2.0);
    }

    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        const Cli cli = parse_cli(argc, argv);
        if (cli.command == "optimize") return cmd_optimize(cli);
        if (cli.command == "simulate") return cmd_simulate(cli);
        if (cli.command == "sweep") return cmd_sweep(cli);
        if (cli.command == "heatmap") return cmd_heatmap(cli);
        if (cli.command == "check") return cmd_check();
        std::fprintf(stderr, "unknown command '%s'\n", cli.command.c_str());
        return usage();
    } catch (const ConvergenceError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return usage();
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
