// End-to-end optimization of one cell: two-phase descent, then a
// head-to-head simulation against the PT1 benchmark. Uses the tuned
// penalty settings from configs/experiments.ini; the collision model is
// only trustworthy for N around 25 and up at moderate load, so the demo
// sticks to such a cell.
#include <cstdio>

#include "aoii/experiment.hpp"

int main() {
    using namespace aoii;

    const ChainParams params(0.1, 50, 25, 25);
    OptimConfig cfg;
    cfg.max_steps = 20000;
    cfg.q_floor = 1e-3;
    cfg.eps[0] = 1e-8;
    cfg.eps[3] = 1e-12;
    cfg.energy = EnergyPenalty{1e8, 0.6};

    const OptimizeResult res = optimize_cell(params, cfg);
    std::printf("threshold init: tau=%.2f p=%.2f\n", res.init.tau, res.init.p);
    std::printf("phase 2: U %.4g -> %.4g over %ld steps\n", res.phase2.steps.front().U,
                res.phase2.steps.back().U, res.phase2.steps_taken);

    const StateSpace space(params);
    std::printf("model: aoii=%.3f ell=%.4f\n", truncated_aoii(space, res.stat.phi), res.stat.ell);

    SimConfig sc;
    sc.params = params;
    sc.horizon = 100000;
    sc.seed = 1;
    sc.policy = SimPolicy::from_table(res.policy);
    const double reduction = compare(sc.policy, benchmark_pt1(params), sc);
    const SimReport rep = run(sc);
    std::printf("simulated: aoii=%.3f load=%.3f, %.1f%% below the PT1 baseline\n", rep.avg_aoii,
                rep.avg_load, reduction);
    return 0;
}
