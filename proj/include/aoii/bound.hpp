#pragma once

#include <algorithm>
#include <stdexcept>
#include <vector>

#include "aoii/chain.hpp"

namespace aoii {

/// Term-by-term breakdown of the closed-form AoII upper bound.
struct BoundBreakdown {
    double interior = 0.0;     ///< sum over 1<=f<=F-1, 1<=g<=min(f,G-1) of f*g*phi(f,g)
    double sg_term = 0.0;      ///< sum over f of phi(f,G)*f^2 (class S_G)
    double sf_term = 0.0;      ///< geometric-tail term over class S_F = {(F,g): g<G}
    double corner_term = 0.0;  ///< (F,G) term, including the FG*phi(F,G) summand
    double total = 0.0;
    bool clamped = false;      ///< set when q_min or q_FG hit the q_floor clamp
    double q_min = 1.0;        ///< min_{g in 1..G-1} q(F,g) after clamping (1 when S_F empty)
    double q_FG = 1.0;         ///< q(F,G) after clamping
};

/// Closed form of sum_{i>=0} q(1-q)^i (F+i)(G+i):
/// FG + r(F+G+2r+1) with r = (1-q)/q, from E[i] = r and E[i^2] = r(1+2r)
/// under the geometric law on {0,1,...}.
inline double geometric_tail_FG(int F, int G, double q) {
    if (!(q > 0.0)) throw std::invalid_argument("geometric_tail_FG: q must be positive");
    const double r = (1.0 - q) / q;
    return static_cast<double>(F) * G + r * (F + G + 2.0 * r + 1.0);
}

/// Upper bound J(pi,phi) on the average untruncated AoII, evaluated verbatim
/// at whatever (pi, phi) pair is supplied (optimizer iterates included).
/// q_min and q_FG are clamped below at q_floor to keep J finite when the
/// policy is silent at the truncation boundary.
inline BoundBreakdown bound(const Policy& policy, const StateDist& dist,
                            const ChainParams& params, double q_floor = 1e-12,
                            bool include_sync_state = true) {
    const StateSpace space(params);
    check_same_size(policy.values.size(), space.size(), "bound");
    check_same_size(dist.probs.size(), space.size(), "bound");
    const int F = space.F();
    const int G = space.G();

    const double ell = collision_term(policy, dist, include_sync_state);
    const std::vector<double> q = success_prob(policy, ell, params);

    BoundBreakdown out;
    for (int f = 1; f <= F - 1; ++f) {
        const int gmax = std::min(f, G - 1);
        for (int g = 1; g <= gmax; ++g)
            out.interior += static_cast<double>(f) * g * dist.probs[space.index(f, g)];
        if (f >= G)
            out.sg_term += static_cast<double>(f) * f * dist.probs[space.index(f, G)];
    }

    if (G >= 2) {
        double q_min = q[space.index(F, 1)];
        for (int g = 2; g <= G - 1; ++g) q_min = std::min(q_min, q[space.index(F, g)]);
        if (q_min < q_floor) {
            q_min = q_floor;
            out.clamped = true;
        }
        out.q_min = q_min;
        double mass = 0.0;
        for (int g = 1; g <= G - 1; ++g) mass += dist.probs[space.index(F, g)];
        out.sf_term = G * mass * (F + (1.0 - q_min) / q_min);
    }

    double q_fg = q[space.index(F, G)];
    if (q_fg < q_floor) {
        q_fg = q_floor;
        out.clamped = true;
    }
    out.q_FG = q_fg;
    out.corner_term = dist.probs[space.index(F, G)] * geometric_tail_FG(F, G, q_fg);

    out.total = out.interior + out.sg_term + out.sf_term + out.corner_term;
    return out;
}

}  // namespace aoii
