#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "aoii/chain.hpp"
#include "aoii/rng.hpp"

namespace aoii {

/// One sensor's ground truth: untruncated process, estimate, age and error.
struct SensorState {
    long long x = 0;      ///< true process value
    long long x_hat = 0;  ///< last delivered value
    long long f = 0;      ///< slots since x == x_hat last held
    long long g = 0;      ///< |x - x_hat|
};

struct SimPolicy {
    enum class Kind { table, pt1, pte };
    Kind kind = Kind::pt1;
    Policy table;    ///< used when kind == table
    double E = 0.0;  ///< used when kind == pte

    static SimPolicy from_table(Policy p) {
        SimPolicy out;
        out.kind = Kind::table;
        out.table = std::move(p);
        return out;
    }
};

/// Always-transmit-on-error benchmark: probability 1/N whenever g > 0.
inline SimPolicy benchmark_pt1(const ChainParams& params) {
    params.validate();
    SimPolicy out;
    out.kind = SimPolicy::Kind::pt1;
    return out;
}

/// Load-limited benchmark: probability E/N whenever g > 0.
inline SimPolicy benchmark_pte(const ChainParams& params, double E) {
    params.validate();
    if (!(E >= 0.0)) throw std::invalid_argument("benchmark_pte: E must be >= 0");
    if (E / static_cast<double>(params.N) > 1.0)
        throw std::invalid_argument("benchmark_pte: E/N must be <= 1");
    SimPolicy out;
    out.kind = SimPolicy::Kind::pte;
    out.E = E;
    return out;
}

struct SimConfig {
    ChainParams params;
    long long horizon = 100000;
    std::uint64_t seed = 1;
    SimPolicy policy;
    bool record_trace = false;  ///< keep the per-slot running mean of the aoii

    void validate() const {
        params.validate();
        if (horizon < 1) throw std::invalid_argument("SimConfig: horizon must be >= 1");
        if (policy.kind == SimPolicy::Kind::pte &&
            (!(policy.E >= 0.0) || policy.E / static_cast<double>(params.N) > 1.0))
            throw std::invalid_argument("SimConfig: pte needs 0 <= E <= N");
    }
};

struct SimReport {
    double avg_aoii = 0.0;        ///< time-network mean of untruncated f*g
    double avg_load = 0.0;        ///< transmission attempts per slot, network total
    double success_rate = 0.0;    ///< fraction of slots with exactly one transmitter
    std::uint64_t success_slots = 0;
    std::uint64_t collision_slots = 0;
    std::uint64_t idle_slots = 0;
    std::vector<double> occupancy;     ///< end-of-slot truncated-state frequencies
    std::vector<double> mean_trace;    ///< running mean of aoii per slot (optional)
};

struct SimWorld {
    std::vector<SensorState> sensors;
    std::vector<std::mt19937_64> rng;

    SimWorld(const ChainParams& params, std::uint64_t seed) {
        sensors.assign(static_cast<std::size_t>(params.N), SensorState{});
        rng.reserve(sensors.size());
        for (std::size_t i = 0; i < sensors.size(); ++i)
            rng.push_back(substream_engine(seed, i + 1));
    }
};

struct SlotOutcome {
    int attempts = 0;  ///< transmitters this slot
    int winner = -1;   ///< delivering sensor, -1 unless attempts == 1
};

namespace detail {

inline double transmit_prob(const SimPolicy& policy, const StateSpace& space,
                            const ChainParams& params, long long f, long long g) {
    switch (policy.kind) {
        case SimPolicy::Kind::table: {
            const int ft = static_cast<int>(std::min<long long>(f, params.F));
            const int gt = static_cast<int>(std::min<long long>(g, params.G));
            return policy.table.values[space.index(ft, gt)];
        }
        case SimPolicy::Kind::pt1:
            return g > 0 ? 1.0 / static_cast<double>(params.N) : 0.0;
        case SimPolicy::Kind::pte:
            return g > 0 ? policy.E / static_cast<double>(params.N) : 0.0;
    }
    return 0.0;
}

}  // namespace detail

/// One shared slot: each sensor decides from its slot-start truncated state,
/// every process walks, ages and errors are recomputed, and a lone
/// transmitter delivers its post-walk value.
inline SlotOutcome step(SimWorld& world, const SimPolicy& policy, const StateSpace& space,
                        const ChainParams& params) {
    SlotOutcome out;
    const double p_t = params.p_t;
    for (std::size_t i = 0; i < world.sensors.size(); ++i) {
        SensorState& s = world.sensors[i];
        auto& eng = world.rng[i];

        const bool tx = uniform01(eng) < detail::transmit_prob(policy, space, params, s.f, s.g);
        if (tx) {
            ++out.attempts;
            out.winner = static_cast<int>(i);
        }

        const double w = uniform01(eng);
        if (w < p_t) ++s.x;
        else if (w < 2.0 * p_t) --s.x;

        s.g = std::llabs(s.x - s.x_hat);
        s.f = s.g == 0 ? 0 : s.f + 1;
    }
    if (out.attempts == 1) {
        SensorState& s = world.sensors[static_cast<std::size_t>(out.winner)];
        s.x_hat = s.x;
        s.g = 0;
        s.f = 0;
    } else {
        out.winner = -1;
    }
    return out;
}

/// Monte Carlo of the full system from the all-synced start.
inline SimReport run(const SimConfig& config) {
    config.validate();
    const StateSpace space(config.params);
    if (config.policy.kind == SimPolicy::Kind::table) {
        check_same_size(config.policy.table.values.size(), space.size(), "run");
        check_policy_valid(config.policy.table, space);
    }

    SimWorld world(config.params, config.seed);
    const double inv_n = 1.0 / static_cast<double>(config.params.N);

    SimReport report;
    std::vector<std::uint64_t> occ(space.size(), 0);
    double aoii_total = 0.0;
    std::uint64_t attempts_total = 0;
    if (config.record_trace)
        report.mean_trace.reserve(static_cast<std::size_t>(config.horizon));

    for (long long t = 0; t < config.horizon; ++t) {
        const SlotOutcome slot = step(world, config.policy, space, config.params);
        attempts_total += static_cast<std::uint64_t>(slot.attempts);
        if (slot.attempts == 0) ++report.idle_slots;
        else if (slot.attempts == 1) ++report.success_slots;
        else ++report.collision_slots;

        for (const SensorState& s : world.sensors) {
            aoii_total += static_cast<double>(s.f) * static_cast<double>(s.g);
            const int ft = static_cast<int>(std::min<long long>(s.f, config.params.F));
            const int gt = static_cast<int>(std::min<long long>(s.g, config.params.G));
            ++occ[space.index(ft, gt)];
        }
        if (config.record_trace)
            report.mean_trace.push_back(aoii_total * inv_n / static_cast<double>(t + 1));
    }

    const double slots = static_cast<double>(config.horizon);
    report.avg_aoii = aoii_total / (slots * static_cast<double>(config.params.N));
    report.avg_load = static_cast<double>(attempts_total) / slots;
    report.success_rate = static_cast<double>(report.success_slots) / slots;
    report.occupancy.resize(space.size());
    for (std::size_t s = 0; s < space.size(); ++s)
        report.occupancy[s] =
            static_cast<double>(occ[s]) / (slots * static_cast<double>(config.params.N));
    return report;
}

/// Percent aoii reduction of policy a over baseline b, both simulated from
/// the same master seed (common random numbers).
inline double compare(const SimPolicy& a, const SimPolicy& b, SimConfig config) {
    config.policy = a;
    const double aoii_a = run(config).avg_aoii;
    config.policy = b;
    const double aoii_b = run(config).avg_aoii;
    if (aoii_b == 0.0) throw std::domain_error("compare: baseline aoii is 0");
    return 100.0 * (1.0 - aoii_a / aoii_b);
}

/// Multiplicative load matching: scales E until the measured load is within
/// 2% of target_load (at most 4 refinement runs).
inline double calibrate_pte(const ChainParams& params, double target_load, long long horizon,
                            std::uint64_t seed) {
    if (!(target_load > 0.0)) throw std::invalid_argument("calibrate_pte: target must be > 0");
    SimConfig cfg;
    cfg.params = params;
    cfg.horizon = horizon;
    cfg.seed = seed;
    double E = std::min(target_load, static_cast<double>(params.N));
    for (int iter = 0; iter < 4; ++iter) {
        cfg.policy = benchmark_pte(params, E);
        const double load = run(cfg).avg_load;
        if (load <= 0.0) {
            E = std::min(2.0 * std::max(E, 1e-3), static_cast<double>(params.N));
            continue;
        }
        if (std::abs(load - target_load) <= 0.02 * target_load) break;
        E = std::min(E * target_load / load, static_cast<double>(params.N));
    }
    return E;
}

}  // namespace aoii
