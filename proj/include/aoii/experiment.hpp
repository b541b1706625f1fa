#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "aoii/config.hpp"
#include "aoii/grid_files.hpp"
#include "aoii/optimizer.hpp"
#include "aoii/simulator.hpp"
#include "aoii/stationary.hpp"

namespace aoii {

/// Hash of everything the optimized policy depends on; names cache entries.
inline std::uint64_t optim_hash(const OptimConfig& cfg, const ChainParams& params) {
    std::ostringstream ss;
    ss << params.F << '|' << params.G << '|' << format_double(params.p_t) << '|' << params.N;
    for (int i = 0; i < 4; ++i)
        ss << '|' << format_double(cfg.K[i]) << '|' << format_double(cfg.eps[i]);
    ss << '|' << format_double(cfg.rho_a) << '|' << format_double(cfg.alpha_pi) << '|'
       << format_double(cfg.alpha_phi) << '|' << cfg.max_steps << '|'
       << (cfg.grad_mode == GradMode::analytic ? 'a' : 'f') << '|' << cfg.include_sync_state
       << '|' << format_double(cfg.q_floor);
    if (cfg.energy)
        ss << "|e" << format_double(cfg.energy->K_e) << '|'
           << format_double(cfg.energy->load_cap);
    const std::string s = ss.str();
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

struct OptimizeResult {
    Policy policy;
    OptimTrace phase1, phase2;
    ThresholdInit init;
    StationaryResult stat;  ///< stationary law of the final policy
};

/// Two-phase pipeline: gradient descent from the generic seed, threshold
/// re-initialization at the calibrated tau, then the refining descent.
inline OptimizeResult optimize_cell(const ChainParams& params, const OptimConfig& cfg) {
    const StateSpace space(params);
    OptimizeResult out;

    Phase1Result phase1 = calibrate_tau_full(params, cfg);
    out.phase1 = std::move(phase1.trace);
    out.init = phase1.init;

    const Policy thr = threshold_policy(out.init.tau, out.init.p, space);
    StationaryOptions sopts;
    sopts.include_sync_state = cfg.include_sync_state;
    const auto thr_stat = stationary_dist(thr, params, sopts);

    out.phase2 = descend(thr, thr_stat.phi, params, cfg);
    out.policy = out.phase2.final_pi;
    out.stat = stationary_dist(out.policy, params, sopts);
    return out;
}

inline std::filesystem::path cache_policy_path(const std::filesystem::path& dir,
                                               const ChainParams& params,
                                               std::uint64_t opt_hash, std::uint64_t seed) {
    std::ostringstream name;
    name << "policy_N" << params.N << "_pt" << format_double(params.p_t) << "_F" << params.F
         << "_G" << params.G << "_h" << format_hash(opt_hash) << "_s" << seed << ".csv";
    return dir / name.str();
}

/// Everything measured on one (N, p_t) grid cell.
struct CellOutcome {
    long N = 0;
    double p_t = 0.0;
    bool ok = false;
    bool from_cache = false;
    std::string error;
    Policy policy;
    double aoii = 0.0, load = 0.0;          ///< dual policy, mean over seeds
    double pt1_aoii = 0.0, pte_aoii = 0.0;  ///< benchmarks, mean over seeds
    double pte_E = 0.0;
    double pt1_reduction = 0.0, pte_reduction = 0.0;  ///< percent
};

namespace detail {

inline SimReport mean_sim(const ChainParams& params, const SimPolicy& policy,
                          long long horizon, const std::vector<std::uint64_t>& seeds,
                          double* mean_aoii, double* mean_load) {
    SimReport last;
    double aoii = 0.0, load = 0.0;
    for (std::uint64_t seed : seeds) {
        SimConfig cfg;
        cfg.params = params;
        cfg.horizon = horizon;
        cfg.seed = seed;
        cfg.policy = policy;
        last = run(cfg);
        aoii += last.avg_aoii;
        load += last.avg_load;
    }
    *mean_aoii = aoii / static_cast<double>(seeds.size());
    *mean_load = load / static_cast<double>(seeds.size());
    return last;
}

}  // namespace detail

/// Optimizes (or loads from cache) and benchmarks a single grid cell.
inline CellOutcome run_cell(const ExperimentConfig& config, long N, double p_t,
                            const std::filesystem::path& cache_dir) {
    CellOutcome out;
    out.N = N;
    out.p_t = p_t;
    const ChainParams params = config.cell(N, p_t);
    const StateSpace space(params);

    try {
        const std::uint64_t ohash = optim_hash(config.optim, params);
        const auto cpath = cache_policy_path(cache_dir, params, ohash, config.optim.seed);
        if (config.cache && std::filesystem::exists(cpath)) {
            GridFile grid = read_grid_file(cpath);
            if (grid.kind != "policy" || grid.F != params.F || grid.G != params.G)
                throw ParseError("cache entry mismatches cell: " + cpath.string());
            out.policy.values = std::move(grid.values);
            check_policy_valid(out.policy, space);
            out.from_cache = true;
        } else {
            OptimizeResult opt = optimize_cell(params, config.optim);
            out.policy = std::move(opt.policy);
            if (config.cache) {
                std::filesystem::create_directories(cache_dir);
                Provenance prov;
                prov.config_hash = config.hash;
                write_grid_file(cpath,
                                policy_grid(out.policy, params, config.optim.include_sync_state,
                                            prov));
            }
        }

        const SimPolicy dual = SimPolicy::from_table(out.policy);
        detail::mean_sim(params, dual, config.horizon, config.seeds, &out.aoii, &out.load);

        double ignored = 0.0;
        detail::mean_sim(params, benchmark_pt1(params), config.horizon, config.seeds,
                         &out.pt1_aoii, &ignored);

        out.pte_E = calibrate_pte(params, out.load, config.horizon, config.seeds.front());
        detail::mean_sim(params, benchmark_pte(params, out.pte_E), config.horizon, config.seeds,
                         &out.pte_aoii, &ignored);

        if (out.pt1_aoii <= 0.0 || out.pte_aoii <= 0.0)
            throw std::domain_error("benchmark aoii is zero; horizon too short");
        out.pt1_reduction = 100.0 * (1.0 - out.aoii / out.pt1_aoii);
        out.pte_reduction = 100.0 * (1.0 - out.aoii / out.pte_aoii);
        out.ok = true;
    } catch (const std::exception& e) {
        out.ok = false;
        out.error = e.what();
    }
    return out;
}

/// Runs every grid cell in a worker pool; outcomes return in grid order
/// (N-major), independent of scheduling.
inline std::vector<CellOutcome> sweep(const ExperimentConfig& config,
                                      const std::filesystem::path& cache_dir) {
    std::vector<std::pair<long, double>> cells;
    for (long n : config.grid_N)
        for (double pt : config.grid_pt) cells.emplace_back(n, pt);

    std::vector<CellOutcome> outcomes(cells.size());
    std::atomic<std::size_t> next{0};
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const unsigned width = config.threads > 0 ? static_cast<unsigned>(config.threads)
                                              : std::min<unsigned>(hw, cells.size());

    auto worker = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            outcomes[i] = run_cell(config, cells[i].first, cells[i].second, cache_dir);
        }
    };
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < width; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    return outcomes;
}

/// Writes the four dataset files from sweep outcomes; failed cells are
/// skipped (their error strings stay in the outcomes).
inline void write_sweep_outputs(const std::filesystem::path& dir,
                                const std::vector<CellOutcome>& outcomes,
                                const Provenance& prov) {
    std::vector<SweepRow> aoii, load, pt1, pte;
    for (const auto& o : outcomes) {
        if (!o.ok) continue;
        aoii.push_back({o.N, o.p_t, o.aoii});
        load.push_back({o.N, o.p_t, o.load});
        pt1.push_back({o.N, o.p_t, o.pt1_reduction});
        pte.push_back({o.N, o.p_t, o.pte_reduction});
    }
    write_sweep_file(dir / "fig3_aoii.csv", "aoii", aoii, prov);
    write_sweep_file(dir / "fig4_load.csv", "load", load, prov);
    write_sweep_file(dir / "fig7_pt1.csv", "pt1_reduction_pct", pt1, prov);
    write_sweep_file(dir / "fig8_pte.csv", "pte_reduction_pct", pte, prov);
}

}  // namespace aoii
