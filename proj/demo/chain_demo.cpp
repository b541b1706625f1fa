// Minimal tour of the chain model: build a cell, pick a threshold policy,
// solve for the steady state, and compare the model against the simulator.
#include <cstdio>

#include "aoii/optimizer.hpp"
#include "aoii/simulator.hpp"
#include "aoii/stationary.hpp"

int main() {
    using namespace aoii;

    const ChainParams params(0.25, 10, 5, 4);  // p_t, F, G, N
    const StateSpace space(params);
    std::printf("cell: N=%ld p_t=%g, truncated at F=%d G=%d -> %zu states\n", params.N,
                params.p_t, params.F, params.G, space.size());

    // transmit with probability 0.4 whenever the age-error product passes 6
    const Policy policy = threshold_policy(6.0, 0.4, space);

    const StationaryResult stat = stationary_dist(policy, params);
    std::printf("steady state: ell=%.4f residual=%.2e outer=%d\n", stat.ell, stat.residual,
                stat.outer_iters);
    std::printf("model truncated aoii: %.4f\n", truncated_aoii(space, stat.phi));

    double load = 0.0;
    for (std::size_t s = 0; s < space.size(); ++s)
        load += policy.values[s] * stat.phi.probs[s];
    std::printf("model load: %.4f attempts/slot\n", static_cast<double>(params.N) * load);

    SimConfig sc;
    sc.params = params;
    sc.horizon = 200000;
    sc.seed = 42;
    sc.policy = SimPolicy::from_table(policy);
    const SimReport rep = run(sc);
    std::printf("simulated:  aoii=%.4f load=%.4f success=%.4f\n", rep.avg_aoii, rep.avg_load,
                rep.success_rate);
    return 0;
}
