#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace aoii {

/// Process and truncation parameters shared by every module.
///
/// The observed process is a lazy random walk on the integers: each slot it
/// moves +1 with probability p_t, -1 with probability p_t, and stays with
/// probability p_r = 1 - 2*p_t. F and G truncate the age penalty f and the
/// error penalty g; N is the number of sensors sharing the channel.
struct ChainParams {
    double p_t = 0.25;
    double p_r = 0.5;
    int F = 100;
    int G = 50;
    long N = 1;

    ChainParams() = default;
    ChainParams(double p_t_, int F_, int G_, long N_)
        : p_t(p_t_), p_r(1.0 - 2.0 * p_t_), F(F_), G(G_), N(N_) {
        validate();
    }

    void validate() const {
        if (!(p_t > 0.0 && p_t < 0.5))
            throw std::invalid_argument("ChainParams: p_t must lie in (0, 0.5)");
        if (p_r != 1.0 - 2.0 * p_t)
            throw std::invalid_argument("ChainParams: p_r must equal 1 - 2*p_t exactly");
        if (G < 1 || F < G)
            throw std::invalid_argument("ChainParams: need F >= G >= 1");
        if (N < 1)
            throw std::invalid_argument("ChainParams: need N >= 1");
    }
};

/// Truncated state space {(0,0)} u {(f,g) : 1 <= f <= F, 1 <= g <= min(f,G)}.
/// Ordering is row-major in f then g; index 0 is (0,0).
class StateSpace {
  public:
    explicit StateSpace(const ChainParams& params) : F_(params.F), G_(params.G) {
        params.validate();
        offsets_.assign(static_cast<std::size_t>(F_) + 1, 0);
        std::size_t count = 1;
        for (int f = 1; f <= F_; ++f) count += static_cast<std::size_t>(std::min(f, G_));
        states_.reserve(count);
        states_.emplace_back(0, 0);
        for (int f = 1; f <= F_; ++f) {
            offsets_[static_cast<std::size_t>(f)] = states_.size();
            for (int g = 1; g <= std::min(f, G_); ++g) states_.emplace_back(f, g);
        }
    }

    int F() const { return F_; }
    int G() const { return G_; }
    std::size_t size() const { return states_.size(); }
    std::pair<int, int> state(std::size_t i) const { return states_[i]; }
    const std::vector<std::pair<int, int>>& states() const { return states_; }

    bool contains(int f, int g) const {
        if (f == 0 && g == 0) return true;
        return f >= 1 && f <= F_ && g >= 1 && g <= std::min(f, G_);
    }

    std::size_t index(int f, int g) const {
        if (f == 0 && g == 0) return 0;
        if (!contains(f, g))
            throw std::out_of_range("StateSpace::index: (" + std::to_string(f) + "," +
                                    std::to_string(g) + ") is not a state");
        return offsets_[static_cast<std::size_t>(f)] + static_cast<std::size_t>(g - 1);
    }

  private:
    int F_, G_;
    std::vector<std::pair<int, int>> states_;
    std::vector<std::size_t> offsets_;
};

/// Transmission probability pi(f,g) per state. Entries may transiently leave
/// [0,1] during optimization; a finalized policy has every entry in [0,1] and
/// pi(0,0) = 0.
struct Policy {
    std::vector<double> values;

    Policy() = default;
    explicit Policy(std::size_t n, double fill = 0.0) : values(n, fill) {
        if (n > 0) values[0] = 0.0;
    }
};

/// Probability vector phi over the state space. Entries may transiently leave
/// the simplex during optimization (penalized, not projected).
struct StateDist {
    std::vector<double> probs;

    StateDist() = default;
    explicit StateDist(std::size_t n, double fill = 0.0) : probs(n, fill) {}
};

inline void check_same_size(std::size_t a, std::size_t b, const char* where) {
    if (a != b) throw std::invalid_argument(std::string(where) + ": index mismatch");
}

/// Throws unless the policy is deployable: sized to the space, every entry in
/// [0,1], and pi(0,0) = 0.
inline void check_policy_valid(const Policy& policy, const StateSpace& space) {
    check_same_size(policy.values.size(), space.size(), "Policy");
    if (policy.values.empty() || policy.values[0] != 0.0)
        throw std::invalid_argument("Policy: pi(0,0) must be 0");
    for (double v : policy.values)
        if (!(v >= 0.0 && v <= 1.0))
            throw std::invalid_argument("Policy: entries must lie in [0,1]");
}

/// Probability that no sensor other than the tagged one transmits, before
/// clamping. States with g >= 1 contribute phi*(1-pi); the synced state
/// contributes phi(0,0) when include_sync_state is set (a synced sensor is
/// silent since pi(0,0)=0).
inline double collision_term_raw(const Policy& policy, const StateDist& dist,
                                 bool include_sync_state = true) {
    check_same_size(policy.values.size(), dist.probs.size(), "collision_term");
    double ell = include_sync_state && !dist.probs.empty() ? dist.probs[0] : 0.0;
    for (std::size_t s = 1; s < dist.probs.size(); ++s)
        ell += dist.probs[s] * (1.0 - policy.values[s]);
    return ell;
}

/// collision_term_raw clamped to [0,1].
inline double collision_term(const Policy& policy, const StateDist& dist,
                             bool include_sync_state = true) {
    return std::clamp(collision_term_raw(policy, dist, include_sync_state), 0.0, 1.0);
}

/// Per-state success probability q(s) = pi(s) * ell^(N-1).
inline std::vector<double> success_prob(const Policy& policy, double ell,
                                        const ChainParams& params) {
    if (!(ell >= 0.0 && ell <= 1.0))
        throw std::invalid_argument("success_prob: ell must lie in [0,1]");
    const double atten = params.N == 1 ? 1.0 : std::pow(ell, static_cast<double>(params.N - 1));
    std::vector<double> q(policy.values.size());
    for (std::size_t s = 0; s < q.size(); ++s) q[s] = policy.values[s] * atten;
    return q;
}

/// One transition row: at most 4 merged (target, probability) entries.
struct KernelRow {
    int n = 0;
    std::uint32_t to[4] = {0, 0, 0, 0};
    double p[4] = {0, 0, 0, 0};
};

/// Sparse transition kernel plus the (ell, q) metadata it was built from.
struct TransitionKernel {
    std::vector<KernelRow> rows;
    std::vector<double> q;
    double ell = std::numeric_limits<double>::quiet_NaN();
};

/// Row structure with probabilities in affine form p = a + b*q(source).
/// The sparsity pattern and the (a,b) coefficients depend only on (p_t, F, G),
/// so optimizers can rebuild probabilities for new q without reallocation;
/// sum(a) = 1 and sum(b) = 0 per row, making rows stochastic for any q.
struct KernelTemplate {
    std::vector<std::uint32_t> row_ptr;  // size n+1
    std::vector<std::uint32_t> to;
    std::vector<double> a;
    std::vector<double> b;

    std::size_t rows() const { return row_ptr.size() - 1; }

    static KernelTemplate build(const StateSpace& space, const ChainParams& params) {
        const double p_t = params.p_t;
        const double p_r = params.p_r;
        const int F = space.F();
        const int G = space.G();
        KernelTemplate t;
        const std::size_t n = space.size();
        t.row_ptr.reserve(n + 1);
        t.to.reserve(4 * n);
        t.a.reserve(4 * n);
        t.b.reserve(4 * n);
        t.row_ptr.push_back(0);

        std::uint32_t cand_to[4];
        double cand_a[4], cand_b[4];
        for (std::size_t s = 0; s < n; ++s) {
            auto [f, g] = space.state(s);
            int cn = 0;
            auto add = [&](std::size_t target, double a, double b) {
                const auto to32 = static_cast<std::uint32_t>(target);
                for (int i = 0; i < cn; ++i) {
                    if (cand_to[i] == to32) {
                        cand_a[i] += a;
                        cand_b[i] += b;
                        return;
                    }
                }
                cand_to[cn] = to32;
                cand_a[cn] = a;
                cand_b[cn] = b;
                ++cn;
            };
            if (s == 0) {
                add(space.index(1, 1), 2.0 * p_t, 0.0);
                add(0, p_r, 0.0);
            } else if (g == 1) {
                const int fu = std::min(f + 1, F);
                add(space.index(fu, std::min(2, G)), p_t, -p_t);
                add(space.index(fu, 1), p_r, -p_r);
                add(0, p_t, 1.0 - p_t);
            } else {
                const int fu = std::min(f + 1, F);
                add(space.index(fu, std::min(g + 1, G)), p_t, -p_t);
                add(space.index(fu, g - 1), p_t, -p_t);
                add(space.index(fu, g), p_r, -p_r);
                add(0, 0.0, 1.0);
            }
            for (int i = 0; i < cn; ++i) {
                t.to.push_back(cand_to[i]);
                t.a.push_back(cand_a[i]);
                t.b.push_back(cand_b[i]);
            }
            t.row_ptr.push_back(static_cast<std::uint32_t>(t.to.size()));
        }
        return t;
    }
};

/// Materializes the transition kernel for a given per-state success
/// probability vector q. Rejects pi(0,0) != 0 (the (0,0) row is only
/// stochastic for a silent synced state).
inline TransitionKernel build_kernel(const Policy& policy, const std::vector<double>& q,
                                     const ChainParams& params) {
    const StateSpace space(params);
    check_same_size(policy.values.size(), space.size(), "build_kernel");
    check_same_size(q.size(), space.size(), "build_kernel");
    if (policy.values[0] != 0.0)
        throw std::invalid_argument("build_kernel: pi(0,0) must be 0");
    const KernelTemplate t = KernelTemplate::build(space, params);
    TransitionKernel k;
    k.q = q;
    k.rows.resize(space.size());
    for (std::size_t s = 0; s < space.size(); ++s) {
        KernelRow& row = k.rows[s];
        const double qs = q[s];
        for (std::uint32_t e = t.row_ptr[s]; e < t.row_ptr[s + 1]; ++e) {
            row.to[row.n] = t.to[e];
            row.p[row.n] = t.a[e] + t.b[e] * qs;
            ++row.n;
        }
    }
    return k;
}

/// Truncated-chain AoII expectation sum_{f,g} f*g*phi(f,g); a lower bound on
/// the untruncated AoII.
inline double truncated_aoii(const StateSpace& space, const StateDist& dist) {
    check_same_size(dist.probs.size(), space.size(), "truncated_aoii");
    double total = 0.0;
    for (std::size_t s = 1; s < space.size(); ++s) {
        auto [f, g] = space.state(s);
        total += static_cast<double>(f) * static_cast<double>(g) * dist.probs[s];
    }
    return total;
}

/// States reachable from `start` along nonzero kernel entries.
inline std::vector<char> reachable_from(const TransitionKernel& kernel, std::size_t start) {
    std::vector<char> seen(kernel.rows.size(), 0);
    std::vector<std::size_t> stack{start};
    seen[start] = 1;
    while (!stack.empty()) {
        const std::size_t s = stack.back();
        stack.pop_back();
        const KernelRow& row = kernel.rows[s];
        for (int i = 0; i < row.n; ++i) {
            if (row.p[i] > 0.0 && !seen[row.to[i]]) {
                seen[row.to[i]] = 1;
                stack.push_back(row.to[i]);
            }
        }
    }
    return seen;
}

/// States from which `target` is reachable (reverse BFS over nonzero entries).
inline std::vector<char> reaches(const TransitionKernel& kernel, std::size_t target) {
    const std::size_t n = kernel.rows.size();
    std::vector<std::vector<std::uint32_t>> rev(n);
    for (std::size_t s = 0; s < n; ++s) {
        const KernelRow& row = kernel.rows[s];
        for (int i = 0; i < row.n; ++i)
            if (row.p[i] > 0.0) rev[row.to[i]].push_back(static_cast<std::uint32_t>(s));
    }
    std::vector<char> seen(n, 0);
    std::vector<std::size_t> stack{target};
    seen[target] = 1;
    while (!stack.empty()) {
        const std::size_t s = stack.back();
        stack.pop_back();
        for (std::uint32_t prev : rev[s]) {
            if (!seen[prev]) {
                seen[prev] = 1;
                stack.push_back(prev);
            }
        }
    }
    return seen;
}

}  // namespace aoii
