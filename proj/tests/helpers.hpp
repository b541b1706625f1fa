#pragma once

// Shared test utilities: deterministic random instances and small independent
// oracles (dense stationary solve, BFS) that deliberately avoid the library's
// own solver paths.

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "aoii/chain.hpp"
#include "aoii/rng.hpp"

namespace testutil {

inline std::mt19937_64 test_engine(std::uint64_t seed) {
    return aoii::substream_engine(0xA011C0DEULL, seed);
}

inline double runif(std::mt19937_64& eng, double lo, double hi) {
    return lo + (hi - lo) * aoii::uniform01(eng);
}

inline aoii::Policy random_policy(const aoii::StateSpace& space, std::mt19937_64& eng,
                                  double lo = 0.0, double hi = 1.0) {
    aoii::Policy pi(space.size());
    for (std::size_t s = 1; s < space.size(); ++s) pi.values[s] = runif(eng, lo, hi);
    return pi;
}

inline aoii::StateDist random_dist(const aoii::StateSpace& space, std::mt19937_64& eng) {
    aoii::StateDist phi(space.size());
    double sum = 0.0;
    for (auto& v : phi.probs) {
        v = runif(eng, 0.01, 1.0);
        sum += v;
    }
    for (auto& v : phi.probs) v /= sum;
    return phi;
}

inline std::vector<std::vector<double>> dense_matrix(const aoii::TransitionKernel& kernel) {
    const std::size_t n = kernel.rows.size();
    std::vector<std::vector<double>> P(n, std::vector<double>(n, 0.0));
    for (std::size_t s = 0; s < n; ++s)
        for (int i = 0; i < kernel.rows[s].n; ++i)
            P[s][kernel.rows[s].to[i]] += kernel.rows[s].p[i];
    return P;
}

/// Stationary distribution by dense Gaussian elimination with partial
/// pivoting on (P^T - I) with the first equation replaced by sum(phi)=1.
inline std::vector<double> dense_stationary(const std::vector<std::vector<double>>& P) {
    const std::size_t n = P.size();
    std::vector<std::vector<double>> A(n, std::vector<double>(n + 1, 0.0));
    for (std::size_t j = 0; j < n; ++j) A[0][j] = 1.0;
    A[0][n] = 1.0;
    for (std::size_t i = 1; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) A[i][j] = P[j][i];
        A[i][i] -= 1.0;
    }
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(A[r][col]) > std::abs(A[piv][col])) piv = r;
        if (std::abs(A[piv][col]) < 1e-300) throw std::runtime_error("singular system");
        std::swap(A[col], A[piv]);
        for (std::size_t r = 0; r < n; ++r) {
            if (r == col) continue;
            const double m = A[r][col] / A[col][col];
            if (m == 0.0) continue;
            for (std::size_t j = col; j <= n; ++j) A[r][j] -= m * A[col][j];
        }
    }
    std::vector<double> phi(n);
    for (std::size_t i = 0; i < n; ++i) phi[i] = A[i][n] / A[i][i];
    return phi;
}

inline double total_variation(const std::vector<double>& a, const std::vector<double>& b) {
    double tv = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) tv += std::abs(a[i] - b[i]);
    return 0.5 * tv;
}

/// Forward BFS over nonzero kernel entries, independent of the library's
/// reachability helpers.
inline std::vector<char> bfs_forward(const aoii::TransitionKernel& kernel, std::size_t start) {
    std::vector<char> seen(kernel.rows.size(), 0);
    std::vector<std::size_t> stack{start};
    seen[start] = 1;
    while (!stack.empty()) {
        const std::size_t s = stack.back();
        stack.pop_back();
        for (int i = 0; i < kernel.rows[s].n; ++i) {
            const auto t = kernel.rows[s].to[i];
            if (kernel.rows[s].p[i] > 0.0 && !seen[t]) {
                seen[t] = 1;
                stack.push_back(t);
            }
        }
    }
    return seen;
}

inline std::vector<char> bfs_reverse(const aoii::TransitionKernel& kernel, std::size_t target) {
    const std::size_t n = kernel.rows.size();
    std::vector<std::vector<std::size_t>> rev(n);
    for (std::size_t s = 0; s < n; ++s)
        for (int i = 0; i < kernel.rows[s].n; ++i)
            if (kernel.rows[s].p[i] > 0.0) rev[kernel.rows[s].to[i]].push_back(s);
    std::vector<char> seen(n, 0);
    std::vector<std::size_t> stack{target};
    seen[target] = 1;
    while (!stack.empty()) {
        const std::size_t s = stack.back();
        stack.pop_back();
        for (std::size_t prev : rev[s])
            if (!seen[prev]) {
                seen[prev] = 1;
                stack.push_back(prev);
            }
    }
    return seen;
}

}  // namespace testutil
