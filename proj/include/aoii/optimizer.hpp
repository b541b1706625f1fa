#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "aoii/bound.hpp"
#include "aoii/chain.hpp"
#include "aoii/stationary.hpp"

namespace aoii {

enum class GradMode { analytic, finite_difference };

struct EnergyPenalty {
    double K_e = 1e8;
    double load_cap = 0.5;
};

/// Constants for the penalized normalized-gradient descent.
struct OptimConfig {
    std::array<double, 4> K = {1e8, 1e11, 1e10, 1e11};
    std::array<double, 4> eps = {1e-3, 1e-6, 1e-5, 1e-6};
    double rho_a = 1e-6;
    double alpha_pi = 1e-3;
    double alpha_phi = 1e-4;
    long max_steps = 50000;
    std::optional<EnergyPenalty> energy;
    GradMode grad_mode = GradMode::analytic;
    std::uint64_t seed = 1;
    bool include_sync_state = true;
    double q_floor = 1e-12;
    double fd_step = 1e-6;  ///< relative step for finite-difference gradients

    void validate() const {
        for (double k : K)
            if (!(k >= 0.0)) throw std::invalid_argument("OptimConfig: K must be >= 0");
        for (double e : eps)
            if (!(e >= 0.0)) throw std::invalid_argument("OptimConfig: eps must be >= 0");
        if (!(rho_a > 0.0 && rho_a < 1.0))
            throw std::invalid_argument("OptimConfig: rho_a must lie in (0,1)");
        if (!(alpha_pi > 0.0) || !(alpha_phi > 0.0))
            throw std::invalid_argument("OptimConfig: learning rates must be > 0");
        if (max_steps < 1) throw std::invalid_argument("OptimConfig: max_steps must be >= 1");
        if (!(q_floor > 0.0)) throw std::invalid_argument("OptimConfig: q_floor must be > 0");
        if (energy && (!(energy->K_e >= 0.0) || !(energy->load_cap >= 0.0)))
            throw std::invalid_argument("OptimConfig: energy penalty constants must be >= 0");
    }
};

struct Penalties {
    double c1 = 0.0, c2 = 0.0, c3 = 0.0, c4 = 0.0;
};

struct ObjectiveParts {
    double U = 0.0;
    double J = 0.0;
    std::array<double, 4> c = {0, 0, 0, 0};
    std::array<double, 4> rho_terms = {0, 0, 0, 0};  ///< K_i * rho(c_i - eps_i)
    double energy_term = 0.0;
    double ell = 1.0;   ///< clamped collision term at this iterate
    double load = 0.0;  ///< network load N * sum_s pi(s) phi(s)
    BoundBreakdown bound;
};

struct StepRecord {
    long step = 0;
    double U = 0.0, J = 0.0, c1 = 0.0, c2 = 0.0, c3 = 0.0, c4 = 0.0, ell = 1.0;
};

struct OptimTrace {
    std::vector<StepRecord> steps;
    Policy final_pi;      ///< clamped to [0,1] with pi(0,0)=0 (deployable)
    StateDist final_phi;
    Policy final_pi_raw;  ///< pre-clamp final iterate
    bool converged_early = false;
    bool aborted = false;
    std::string abort_reason;
    long steps_taken = 0;
};

struct ThresholdInit {
    double tau = 0.0;
    double p = 0.0;
};

inline double leaky_relu(double x, double rho_a) { return std::max(rho_a * x, x); }

/// Subgradient convention: slope rho_a at x = 0.
inline double leaky_relu_grad(double x, double rho_a) { return x > 0.0 ? 1.0 : rho_a; }

namespace detail {

/// Reusable buffers and precomputed structure for objective/gradient
/// evaluation at one (p_t, F, G, N).
struct EvalContext {
    StateSpace space;
    KernelTemplate templ;
    long N;
    int F, G;
    std::size_t corner;
    std::vector<std::uint32_t> sf_idx;  ///< indices of (F,g), g = 1..G-1
    std::vector<double> w_fixed;        ///< interior + S_G bound coefficients
    std::vector<double> q, p, d, B;

    explicit EvalContext(const ChainParams& params)
        : space(params), templ(KernelTemplate::build(space, params)), N(params.N),
          F(params.F), G(params.G) {
        corner = space.index(F, G);
        for (int g = 1; g <= G - 1; ++g)
            sf_idx.push_back(static_cast<std::uint32_t>(space.index(F, g)));
        w_fixed.assign(space.size(), 0.0);
        for (int f = 1; f <= F - 1; ++f) {
            for (int g = 1; g <= std::min(f, G - 1); ++g)
                w_fixed[space.index(f, g)] = static_cast<double>(f) * g;
            if (f >= G) w_fixed[space.index(f, G)] = static_cast<double>(f) * f;
        }
        q.resize(space.size());
        p.resize(templ.to.size());
        d.resize(space.size());
        B.resize(space.size());
    }
};

struct EvalResult {
    ObjectiveParts parts;
    double ell_raw = 1.0;
    bool ell_clamped = false;
    double E = 1.0;       ///< ell^(N-1)
    double Eprime = 0.0;  ///< (N-1) ell^(N-2)
    double sum_phi = 1.0;
    double massF = 0.0;             ///< sum of phi over S_F
    std::size_t qmin_idx = 0;       ///< first argmin of q over S_F
    double sf_coef = 0.0;           ///< G(F + r(q_min))
    double corner_geom = 0.0;       ///< geometric_tail_FG(F, G, q_FG)
};

inline EvalResult eval(EvalContext& ctx, const std::vector<double>& pi,
                       const std::vector<double>& phi, const OptimConfig& cfg) {
    const std::size_t n = ctx.space.size();
    EvalResult r;
    ObjectiveParts& o = r.parts;

    double ell = cfg.include_sync_state ? phi[0] : 0.0;
    for (std::size_t s = 1; s < n; ++s) ell += phi[s] * (1.0 - pi[s]);
    r.ell_raw = ell;
    o.ell = std::clamp(ell, 0.0, 1.0);
    r.ell_clamped = o.ell != ell;

    if (ctx.N == 1) {
        r.E = 1.0;
        r.Eprime = 0.0;
    } else {
        r.E = std::pow(o.ell, static_cast<double>(ctx.N - 1));
        r.Eprime = (ctx.N - 1) * std::pow(o.ell, static_cast<double>(ctx.N - 2));
    }
    for (std::size_t s = 0; s < n; ++s) ctx.q[s] = pi[s] * r.E;

    // c1 = ||phi P - phi||^2 with the kernel at this (pi, phi)
    for (std::size_t s = 0; s < n; ++s) ctx.d[s] = -phi[s];
    for (std::size_t s = 0; s < n; ++s) {
        const double qs = ctx.q[s];
        const double ps = phi[s];
        for (std::uint32_t e = ctx.templ.row_ptr[s]; e < ctx.templ.row_ptr[s + 1]; ++e) {
            const double prob = ctx.templ.a[e] + ctx.templ.b[e] * qs;
            ctx.p[e] = prob;
            ctx.d[ctx.templ.to[e]] += ps * prob;
        }
    }
    double c1 = 0.0;
    for (std::size_t s = 0; s < n; ++s) c1 += ctx.d[s] * ctx.d[s];

    double c2 = 0.0, c3, c4 = 0.0, sum_phi = 0.0, load = 0.0, lin = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
        const double pv = pi[s];
        if (pv > 1.0) c2 += (pv - 1.0) * (pv - 1.0);
        else if (pv < 0.0) c2 += pv * pv;
        const double fv = phi[s];
        if (fv > 1.0) c4 += (fv - 1.0) * (fv - 1.0);
        else if (fv < 0.0) c4 += fv * fv;
        sum_phi += fv;
        load += pv * fv;
        lin += ctx.w_fixed[s] * fv;
    }
    c3 = (sum_phi - 1.0) * (sum_phi - 1.0);
    r.sum_phi = sum_phi;
    o.load = static_cast<double>(ctx.N) * load;
    o.c = {c1, c2, c3, c4};

    BoundBreakdown& bb = o.bound;
    bb = BoundBreakdown{};
    double sg = 0.0;
    for (int f = ctx.G; f <= ctx.F - 1; ++f)
        sg += static_cast<double>(f) * f * phi[ctx.space.index(f, ctx.G)];
    bb.sg_term = sg;
    bb.interior = lin - sg;
    if (ctx.G >= 2) {
        double q_min = ctx.q[ctx.sf_idx[0]];
        std::size_t qmin_idx = ctx.sf_idx[0];
        for (std::size_t i = 1; i < ctx.sf_idx.size(); ++i) {
            if (ctx.q[ctx.sf_idx[i]] < q_min) {
                q_min = ctx.q[ctx.sf_idx[i]];
                qmin_idx = ctx.sf_idx[i];
            }
        }
        if (q_min < cfg.q_floor) {
            q_min = cfg.q_floor;
            bb.clamped = true;
        }
        bb.q_min = q_min;
        r.qmin_idx = qmin_idx;
        double massF = 0.0;
        for (auto i : ctx.sf_idx) massF += phi[i];
        r.massF = massF;
        r.sf_coef = ctx.G * (ctx.F + (1.0 - q_min) / q_min);
        bb.sf_term = r.sf_coef * massF;
    }
    double q_fg = ctx.q[ctx.corner];
    if (q_fg < cfg.q_floor) {
        q_fg = cfg.q_floor;
        bb.clamped = true;
    }
    bb.q_FG = q_fg;
    r.corner_geom = geometric_tail_FG(ctx.F, ctx.G, q_fg);
    bb.corner_term = phi[ctx.corner] * r.corner_geom;
    bb.total = bb.interior + bb.sg_term + bb.sf_term + bb.corner_term;
    o.J = bb.total;

    double U = o.J;
    for (int i = 0; i < 4; ++i) {
        o.rho_terms[i] = cfg.K[i] * leaky_relu(o.c[i] - cfg.eps[i], cfg.rho_a);
        U += o.rho_terms[i];
    }
    if (cfg.energy && o.load > cfg.energy->load_cap) {
        const double over = o.load - cfg.energy->load_cap;
        o.energy_term = cfg.energy->K_e * over * over;
        U += o.energy_term;
    }
    o.U = U;
    return r;
}

/// Analytic gradient of U at (pi, phi); requires `eval`'s result for the same
/// iterate (d and p buffers in ctx are reused as-is).
inline void gradient_analytic(EvalContext& ctx, const std::vector<double>& pi,
                              const std::vector<double>& phi, const OptimConfig& cfg,
                              const EvalResult& r, std::vector<double>& gpi,
                              std::vector<double>& gphi) {
    const std::size_t n = ctx.space.size();
    const ObjectiveParts& o = r.parts;
    gpi.assign(n, 0.0);
    gphi.assign(n, 0.0);

    for (std::size_t s = 0; s < n; ++s) {
        double acc = 0.0;
        for (std::uint32_t e = ctx.templ.row_ptr[s]; e < ctx.templ.row_ptr[s + 1]; ++e)
            acc += ctx.templ.b[e] * ctx.d[ctx.templ.to[e]];
        ctx.B[s] = acc;
    }
    double W = 0.0;
    for (std::size_t s = 0; s < n; ++s) W += phi[s] * pi[s] * ctx.B[s];

    std::array<double, 4> rho_g;
    for (int i = 0; i < 4; ++i) rho_g[i] = cfg.K[i] * leaky_relu_grad(o.c[i] - cfg.eps[i], cfg.rho_a);

    const double ell_gate = r.ell_clamped ? 0.0 : 1.0;
    double dJ_dqmin = 0.0;
    if (ctx.G >= 2 && o.bound.q_min > cfg.q_floor)
        dJ_dqmin = ctx.G * r.massF * (-1.0 / (o.bound.q_min * o.bound.q_min));
    double dJ_dqfg = 0.0;
    if (o.bound.q_FG > cfg.q_floor) {
        const double rr = (1.0 - o.bound.q_FG) / o.bound.q_FG;
        dJ_dqfg = phi[ctx.corner] * (ctx.F + ctx.G + 4.0 * rr + 1.0) *
                  (-1.0 / (o.bound.q_FG * o.bound.q_FG));
    }
    // chain of J and c1 through ell (via q(s) = pi(s) ell^(N-1))
    const double A_J =
        (dJ_dqmin * (ctx.G >= 2 ? pi[r.qmin_idx] : 0.0) + dJ_dqfg * pi[ctx.corner]) *
        r.Eprime * ell_gate;
    const double A_c1 = 2.0 * W * r.Eprime * ell_gate;

    double energy_g = 0.0;
    if (cfg.energy && o.load > cfg.energy->load_cap)
        energy_g = cfg.energy->K_e * 2.0 * (o.load - cfg.energy->load_cap) *
                   static_cast<double>(ctx.N);
    const double c3_g = rho_g[2] * 2.0 * (r.sum_phi - 1.0);

    for (std::size_t u = 0; u < n; ++u) {
        // d/dphi(u)
        double g = ctx.w_fixed[u];
        if (u == ctx.corner) g += r.corner_geom;
        const double dl_dphi =
            (u == 0 ? (cfg.include_sync_state ? 1.0 : 0.0) : 1.0 - pi[u]) * ell_gate;
        g += A_J * dl_dphi;
        double rowdot = 0.0;
        for (std::uint32_t e = ctx.templ.row_ptr[u]; e < ctx.templ.row_ptr[u + 1]; ++e)
            rowdot += ctx.d[ctx.templ.to[e]] * ctx.p[e];
        g += rho_g[0] * (2.0 * (rowdot - ctx.d[u]) + A_c1 * dl_dphi);
        g += c3_g;
        if (phi[u] > 1.0) g += rho_g[3] * 2.0 * (phi[u] - 1.0);
        else if (phi[u] < 0.0) g += rho_g[3] * 2.0 * phi[u];
        g += energy_g * pi[u];
        gphi[u] = g;

        if (u == 0) continue;  // pi(0,0) is not a free variable
        // d/dpi(u)
        const double dl_dpi = -phi[u] * ell_gate;
        double gp = A_J * dl_dpi;
        if (ctx.G >= 2 && u == r.qmin_idx) gp += dJ_dqmin * r.E;
        if (u == ctx.corner) gp += dJ_dqfg * r.E;
        gp += rho_g[0] * (2.0 * r.E * phi[u] * ctx.B[u] + A_c1 * dl_dpi);
        if (pi[u] > 1.0) gp += rho_g[1] * 2.0 * (pi[u] - 1.0);
        else if (pi[u] < 0.0) gp += rho_g[1] * 2.0 * pi[u];
        gp += energy_g * phi[u];
        gpi[u] = gp;
    }

    // S_F states carry the shared coefficient G(F + r(q_min))
    if (ctx.G >= 2)
        for (auto i : ctx.sf_idx) gphi[i] += r.sf_coef;

    for (std::size_t u = 0; u < n; ++u) {
        if (!std::isfinite(gpi[u]) || !std::isfinite(gphi[u])) {
            auto [f, g] = ctx.space.state(u);
            throw std::runtime_error("gradient: non-finite entry at state (" +
                                     std::to_string(f) + "," + std::to_string(g) + ")");
        }
    }
}

inline void gradient_fd(EvalContext& ctx, const std::vector<double>& pi,
                        const std::vector<double>& phi, const OptimConfig& cfg,
                        std::vector<double>& gpi, std::vector<double>& gphi) {
    const std::size_t n = ctx.space.size();
    gpi.assign(n, 0.0);
    gphi.assign(n, 0.0);
    std::vector<double> pi_w = pi, phi_w = phi;
    for (std::size_t u = 1; u < n; ++u) {
        const double x = pi[u];
        const double h = cfg.fd_step * (1.0 + std::abs(x));
        pi_w[u] = x + h;
        const double up = eval(ctx, pi_w, phi, cfg).parts.U;
        pi_w[u] = x - h;
        const double dn = eval(ctx, pi_w, phi, cfg).parts.U;
        pi_w[u] = x;
        gpi[u] = (up - dn) / (2.0 * h);
    }
    for (std::size_t u = 0; u < n; ++u) {
        const double x = phi[u];
        const double h = cfg.fd_step * (1.0 + std::abs(x));
        phi_w[u] = x + h;
        const double up = eval(ctx, pi, phi_w, cfg).parts.U;
        phi_w[u] = x - h;
        const double dn = eval(ctx, pi, phi_w, cfg).parts.U;
        phi_w[u] = x;
        gphi[u] = (up - dn) / (2.0 * h);
    }
}

}  // namespace detail

/// Constraint penalties c1..c4 of the relaxed problem at an arbitrary
/// (pi, phi) iterate.
inline Penalties penalties(const Policy& policy, const StateDist& dist,
                           const ChainParams& params, bool include_sync_state = true) {
    detail::EvalContext ctx(params);
    check_same_size(policy.values.size(), ctx.space.size(), "penalties");
    check_same_size(dist.probs.size(), ctx.space.size(), "penalties");
    OptimConfig cfg;
    cfg.include_sync_state = include_sync_state;
    const auto r = detail::eval(ctx, policy.values, dist.probs, cfg);
    return {r.parts.c[0], r.parts.c[1], r.parts.c[2], r.parts.c[3]};
}

/// Penalized objective U = J + sum_i K_i rho(c_i - eps_i) (+ energy term).
inline ObjectiveParts objective(const Policy& policy, const StateDist& dist,
                                const ChainParams& params, const OptimConfig& config) {
    config.validate();
    detail::EvalContext ctx(params);
    check_same_size(policy.values.size(), ctx.space.size(), "objective");
    check_same_size(dist.probs.size(), ctx.space.size(), "objective");
    return detail::eval(ctx, policy.values, dist.probs, config).parts;
}

struct Gradient {
    std::vector<double> pi;   ///< entry 0 (state (0,0)) is always 0
    std::vector<double> phi;
};

/// Gradient of U with respect to every free pi entry and every phi entry.
inline Gradient gradient(const Policy& policy, const StateDist& dist, const ChainParams& params,
                         const OptimConfig& config) {
    config.validate();
    detail::EvalContext ctx(params);
    check_same_size(policy.values.size(), ctx.space.size(), "gradient");
    check_same_size(dist.probs.size(), ctx.space.size(), "gradient");
    Gradient g;
    if (config.grad_mode == GradMode::analytic) {
        const auto r = detail::eval(ctx, policy.values, dist.probs, config);
        detail::gradient_analytic(ctx, policy.values, dist.probs, config, r, g.pi, g.phi);
    } else {
        detail::gradient_fd(ctx, policy.values, dist.probs, config, g.pi, g.phi);
    }
    return g;
}

/// Normalized gradient descent on U. Runs max_steps steps (early exit on an
/// exactly zero gradient), recording (U, J, c_i, ell) per step. The reported
/// final policy is clamped to [0,1] with pi(0,0)=0; the raw iterate is kept
/// in final_pi_raw.
inline OptimTrace descend(const Policy& init_pi, const StateDist& init_phi,
                          const ChainParams& params, const OptimConfig& config) {
    config.validate();
    detail::EvalContext ctx(params);
    const std::size_t n = ctx.space.size();
    check_same_size(init_pi.values.size(), n, "descend");
    check_same_size(init_phi.probs.size(), n, "descend");
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(init_pi.values[i]) || !std::isfinite(init_phi.probs[i]))
            throw std::invalid_argument("descend: initial point must be finite");
    if (init_pi.values[0] != 0.0)
        throw std::invalid_argument("descend: pi(0,0) must be 0");

    std::vector<double> pi = init_pi.values, phi = init_phi.probs;
    std::vector<double> gpi, gphi;
    OptimTrace trace;
    trace.steps.reserve(static_cast<std::size_t>(std::min<long>(config.max_steps, 1 << 20)));

    for (long step = 0; step < config.max_steps; ++step) {
        const auto r = detail::eval(ctx, pi, phi, config);
        trace.steps.push_back({step, r.parts.U, r.parts.J, r.parts.c[0], r.parts.c[1],
                               r.parts.c[2], r.parts.c[3], r.parts.ell});
        trace.steps_taken = step + 1;
        if (!std::isfinite(r.parts.U)) {
            trace.aborted = true;
            trace.abort_reason = "non-finite objective at step " + std::to_string(step);
            break;
        }
        if (config.grad_mode == GradMode::analytic)
            detail::gradient_analytic(ctx, pi, phi, config, r, gpi, gphi);
        else
            detail::gradient_fd(ctx, pi, phi, config, gpi, gphi);

        double npi2 = 0.0, nphi2 = 0.0;
        for (std::size_t u = 0; u < n; ++u) {
            npi2 += gpi[u] * gpi[u];
            nphi2 += gphi[u] * gphi[u];
        }
        if (npi2 == 0.0 && nphi2 == 0.0) {
            trace.converged_early = true;
            break;
        }
        if (npi2 > 0.0) {
            const double scale = config.alpha_pi / std::sqrt(npi2);
            for (std::size_t u = 1; u < n; ++u) pi[u] -= scale * gpi[u];
        }
        if (nphi2 > 0.0) {
            const double scale = config.alpha_phi / std::sqrt(nphi2);
            for (std::size_t u = 0; u < n; ++u) phi[u] -= scale * gphi[u];
        }
    }

    trace.final_pi_raw.values = pi;
    trace.final_phi.probs = std::move(phi);
    trace.final_pi.values = std::move(pi);
    for (double& v : trace.final_pi.values) v = std::clamp(v, 0.0, 1.0);
    trace.final_pi.values[0] = 0.0;
    return trace;
}

/// Threshold policy on the AoII product: pi = 0 for f*g < tau, p for
/// f*g >= tau, with pi(0,0) = 0 regardless.
inline Policy threshold_policy(double tau, double p, const StateSpace& space) {
    if (!(p >= 0.0 && p <= 1.0))
        throw std::invalid_argument("threshold_policy: p must lie in [0,1]");
    Policy out(space.size());
    for (std::size_t s = 1; s < space.size(); ++s) {
        auto [f, g] = space.state(s);
        out.values[s] = static_cast<double>(f) * g >= tau ? p : 0.0;
    }
    return out;
}

/// Descent seed: phi(0,0) ~ 1 and phi(f,g) ~ 1/(fg) normalized; pi(f,g) ~ fg
/// scaled so the network load N * sum pi*phi equals target_load, clamped to
/// [0,1].
inline std::pair<Policy, StateDist> seed_init(const StateSpace& space, const ChainParams& params,
                                              double target_load = 0.9) {
    const std::size_t n = space.size();
    StateDist phi(n);
    phi.probs[0] = 1.0;
    double z = 1.0;
    for (std::size_t s = 1; s < n; ++s) {
        auto [f, g] = space.state(s);
        phi.probs[s] = 1.0 / (static_cast<double>(f) * g);
        z += phi.probs[s];
    }
    for (double& v : phi.probs) v /= z;

    Policy pi(n);
    double raw_load = 0.0;
    for (std::size_t s = 1; s < n; ++s) {
        auto [f, g] = space.state(s);
        pi.values[s] = static_cast<double>(f) * g;
        raw_load += pi.values[s] * phi.probs[s];
    }
    const double scale = target_load / (static_cast<double>(params.N) * raw_load);
    for (std::size_t s = 1; s < n; ++s)
        pi.values[s] = std::min(1.0, pi.values[s] * scale);
    return {std::move(pi), std::move(phi)};
}

struct Phase1Result {
    OptimTrace trace;
    StationaryResult stat;
    ThresholdInit init;
};

/// Preliminary descent from seed_init; tau is the stationary truncated AoII
/// of the resulting policy and p = 5/N (clamped to 1).
inline Phase1Result calibrate_tau_full(const ChainParams& params, const OptimConfig& config) {
    const StateSpace space(params);
    auto [pi0, phi0] = seed_init(space, params);
    Phase1Result out;
    out.trace = descend(pi0, phi0, params, config);
    StationaryOptions sopts;
    sopts.include_sync_state = config.include_sync_state;
    out.stat = stationary_dist(out.trace.final_pi, params, sopts);
    out.init.tau = truncated_aoii(space, out.stat.phi);
    out.init.p = std::min(1.0, 5.0 / static_cast<double>(params.N));
    return out;
}

inline ThresholdInit calibrate_tau(const ChainParams& params, const OptimConfig& config) {
    return calibrate_tau_full(params, config).init;
}

/// Threshold extrapolation tau ~ sqrt(p_t).
inline double scale_tau(double tau_ref, double p_t_ref, double p_t_new) {
    if (!(p_t_ref > 0.0 && p_t_ref < 0.5) || !(p_t_new > 0.0 && p_t_new < 0.5))
        throw std::invalid_argument("scale_tau: p_t values must lie in (0, 0.5)");
    return tau_ref * std::sqrt(p_t_new / p_t_ref);
}

}  // namespace aoii
