#pragma once

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "aoii/chain.hpp"

namespace aoii {

/// Raised when the self-consistent stationary solve fails to converge;
/// carries the last stationarity residual and the iteration count.
class ConvergenceError : public std::runtime_error {
  public:
    ConvergenceError(const std::string& what, double residual, int iterations)
        : std::runtime_error(what + " (residual " + std::to_string(residual) + " after " +
                             std::to_string(iterations) + " iterations)"),
          residual_(residual),
          iterations_(iterations) {}

    double residual() const { return residual_; }
    int iterations() const { return iterations_; }

  private:
    double residual_;
    int iterations_;
};

struct StationaryOptions {
    double tol = 1e-10;       ///< stationarity residual ||phi P - phi||_2
    int max_outer = 500;      ///< outer fixed-point iterations on ell
    double damping = 0.5;     ///< ell update damping
    double ell_tol = 1e-10;   ///< convergence threshold on |ell - collision_term(phi)|
    std::size_t direct_solve_limit = 5000;  ///< switch to power iteration above this size
    long power_max_iters = 500000;
    bool include_sync_state = true;
};

struct StationaryResult {
    StateDist phi;
    double ell = 1.0;
    int outer_iters = 0;
    double residual = 0.0;
};

namespace detail {

inline void kernel_probs(const KernelTemplate& t, const std::vector<double>& q,
                         std::vector<double>& p) {
    p.resize(t.to.size());
    for (std::size_t s = 0; s < t.rows(); ++s) {
        const double qs = q[s];
        for (std::uint32_t e = t.row_ptr[s]; e < t.row_ptr[s + 1]; ++e)
            p[e] = t.a[e] + t.b[e] * qs;
    }
}

/// out[t] = sum_s phi[s] * P(s,t)
inline void left_multiply(const KernelTemplate& t, const std::vector<double>& p,
                          const std::vector<double>& phi, std::vector<double>& out) {
    out.assign(phi.size(), 0.0);
    for (std::size_t s = 0; s < t.rows(); ++s) {
        const double ps = phi[s];
        if (ps == 0.0) continue;
        for (std::uint32_t e = t.row_ptr[s]; e < t.row_ptr[s + 1]; ++e)
            out[t.to[e]] += ps * p[e];
    }
}

inline double stationarity_residual(const KernelTemplate& t, const std::vector<double>& p,
                                    const std::vector<double>& phi, std::vector<double>& work) {
    left_multiply(t, p, phi, work);
    double r2 = 0.0;
    for (std::size_t i = 0; i < phi.size(); ++i) {
        const double d = work[i] - phi[i];
        r2 += d * d;
    }
    return std::sqrt(r2);
}

/// Direct solve of phi P = phi, sum(phi) = 1: rows 1..n-1 of (P^T - I), with
/// the (0,0) equation replaced by the normalization row.
inline bool stationary_direct(const KernelTemplate& t, const std::vector<double>& p,
                              std::vector<double>& phi) {
    const auto n = static_cast<Eigen::Index>(t.rows());
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(t.to.size() + 2 * static_cast<std::size_t>(n));
    for (Eigen::Index j = 0; j < n; ++j) trips.emplace_back(0, j, 1.0);
    for (std::size_t s = 0; s < t.rows(); ++s)
        for (std::uint32_t e = t.row_ptr[s]; e < t.row_ptr[s + 1]; ++e)
            if (t.to[e] != 0)
                trips.emplace_back(static_cast<Eigen::Index>(t.to[e]),
                                   static_cast<Eigen::Index>(s), p[e]);
    for (Eigen::Index i = 1; i < n; ++i) trips.emplace_back(i, i, -1.0);

    Eigen::SparseMatrix<double> A(n, n);
    A.setFromTriplets(trips.begin(), trips.end());
    A.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.analyzePattern(A);
    lu.factorize(A);
    if (lu.info() != Eigen::Success) return false;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    rhs[0] = 1.0;
    Eigen::VectorXd x = lu.solve(rhs);
    if (lu.info() != Eigen::Success) return false;

    double sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        phi[static_cast<std::size_t>(i)] = std::max(x[i], 0.0);
        sum += phi[static_cast<std::size_t>(i)];
    }
    if (!(sum > 0.0) || !std::isfinite(sum)) return false;
    for (double& v : phi) v /= sum;
    return true;
}

inline bool stationary_power(const KernelTemplate& t, const std::vector<double>& p,
                             std::vector<double>& phi, double tol, long max_iters) {
    std::vector<double> next(phi.size());
    for (long it = 0; it < max_iters; ++it) {
        left_multiply(t, p, phi, next);
        double sum = 0.0;
        for (double v : next) sum += v;
        if (!(sum > 0.0) || !std::isfinite(sum)) return false;
        for (double& v : next) v /= sum;
        if (it % 16 == 15) {
            double r2 = 0.0;
            for (std::size_t i = 0; i < phi.size(); ++i) {
                const double d = next[i] - phi[i];
                r2 += d * d;
            }
            phi.swap(next);
            if (std::sqrt(r2) <= tol * 0.25) return true;
        } else {
            phi.swap(next);
        }
    }
    return false;
}

}  // namespace detail

/// Self-consistent stationary distribution: finds (phi*, ell*) with
/// ell* = collision_term(pi, phi*) and phi* stationary for the kernel built
/// from q = success_prob(pi, ell*). Damped fixed point on ell with a direct
/// (or power-iteration) stationary solve inside.
inline StationaryResult stationary_dist(const Policy& policy, const ChainParams& params,
                                        const StationaryOptions& opts = {}) {
    params.validate();
    const StateSpace space(params);
    check_policy_valid(policy, space);
    const KernelTemplate t = KernelTemplate::build(space, params);
    const std::size_t n = space.size();

    StationaryResult res;
    res.phi.probs.assign(n, 1.0 / static_cast<double>(n));
    std::vector<double> p, work;
    double ell = 1.0;
    double gap = 0.0;

    const int max_outer = params.N == 1 ? 1 : opts.max_outer;
    for (int outer = 1; outer <= max_outer; ++outer) {
        res.outer_iters = outer;
        const std::vector<double> q = success_prob(policy, ell, params);
        detail::kernel_probs(t, q, p);
        bool ok = n <= opts.direct_solve_limit && detail::stationary_direct(t, p, res.phi.probs);
        if (!ok)
            ok = detail::stationary_power(t, p, res.phi.probs, opts.tol, opts.power_max_iters);
        if (!ok)
            throw ConvergenceError("stationary_dist: inner stationary solve failed",
                                   detail::stationarity_residual(t, p, res.phi.probs, work),
                                   outer);
        const double ell_next = collision_term(policy, res.phi, opts.include_sync_state);
        gap = std::abs(ell_next - ell);
        if (params.N == 1 || gap <= opts.ell_tol) {
            res.ell = params.N == 1 ? ell_next : ell;
            res.residual = detail::stationarity_residual(t, p, res.phi.probs, work);
            if (res.residual > opts.tol)
                throw ConvergenceError("stationary_dist: residual above tolerance",
                                       res.residual, outer);
            return res;
        }
        ell = ell + opts.damping * (ell_next - ell);
    }
    throw ConvergenceError("stationary_dist: ell fixed point did not converge", gap,
                           opts.max_outer);
}


}  // namespace aoii
