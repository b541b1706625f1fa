#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <istream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "aoii/chain.hpp"
#include "aoii/optimizer.hpp"

namespace aoii {

class ConfigError : public std::runtime_error {
  public:
    ConfigError(const std::string& what, long line = 0)
        : std::runtime_error(line > 0 ? "config line " + std::to_string(line) + ": " + what
                                      : "config: " + what),
          line_(line) {}
    long line() const { return line_; }

  private:
    long line_;
};

namespace detail {

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

}  // namespace detail

/// Flat section.key -> value view of a config file, pre-typing.
struct ConfigMap {
    std::map<std::string, std::string> kv;

    bool has(const std::string& key) const { return kv.count(key) > 0; }
    std::string get(const std::string& key, const std::string& fallback) const {
        auto it = kv.find(key);
        return it == kv.end() ? fallback : it->second;
    }
};

/// `[section]` headers with `key = value` lines; `#` and `;` start comments.
inline ConfigMap parse_ini(std::istream& in) {
    ConfigMap out;
    std::string line, section;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find_first_of("#;");
        if (hash != std::string::npos) line.erase(hash);
        const std::string t = detail::trim(line);
        if (t.empty()) continue;
        if (t.front() == '[') {
            if (t.back() != ']') throw ConfigError("unterminated section header", lineno);
            section = detail::trim(t.substr(1, t.size() - 2));
            if (section.empty()) throw ConfigError("empty section name", lineno);
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ConfigError("expected key = value", lineno);
        const std::string key = detail::trim(t.substr(0, eq));
        if (key.empty()) throw ConfigError("empty key", lineno);
        if (section.empty()) throw ConfigError("key outside any [section]", lineno);
        out.kv[section + "." + key] = detail::trim(t.substr(eq + 1));
    }
    return out;
}

inline ConfigMap parse_ini(const std::string& text) {
    std::istringstream in(text);
    return parse_ini(in);
}

/// Applies one `--section.key=value` token; returns false if it is not an
/// override-shaped token.
inline bool apply_override(ConfigMap& cfg, std::string_view arg) {
    if (arg.size() < 3 || arg.substr(0, 2) != "--") return false;
    const auto body = arg.substr(2);
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) return false;
    const std::string key = detail::trim(body.substr(0, eq));
    if (key.find('.') == std::string::npos) return false;
    cfg.kv[key] = detail::trim(body.substr(eq + 1));
    return true;
}

/// FNV-1a over the canonical `key=value` serialization. Overrides are
/// hashed too, so the hash names the effective experiment.
inline std::uint64_t config_hash(const ConfigMap& cfg) {
    std::uint64_t h = 1469598103934665603ULL;
    auto feed = [&h](std::string_view s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ULL;
        }
    };
    for (const auto& [k, v] : cfg.kv) {  // std::map iterates sorted
        feed(k);
        feed("=");
        feed(v);
        feed("\n");
    }
    return h;
}

namespace detail {

inline double to_real(const ConfigMap& c, const std::string& key, double fallback) {
    if (!c.has(key)) return fallback;
    const std::string& v = c.kv.at(key);
    try {
        std::size_t pos = 0;
        const double out = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("key " + key + ": not a number: '" + v + "'");
    }
}

inline long to_int(const ConfigMap& c, const std::string& key, long fallback) {
    if (!c.has(key)) return fallback;
    const std::string& v = c.kv.at(key);
    try {
        std::size_t pos = 0;
        const long out = std::stol(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("key " + key + ": not an integer: '" + v + "'");
    }
}

inline bool to_bool(const ConfigMap& c, const std::string& key, bool fallback) {
    if (!c.has(key)) return fallback;
    std::string v = c.kv.at(key);
    std::transform(v.begin(), v.end(), v.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("key " + key + ": not a boolean: '" + v + "'");
}

template <typename T, typename Parse>
std::vector<T> to_list(const ConfigMap& c, const std::string& key, Parse parse) {
    std::vector<T> out;
    if (!c.has(key)) return out;
    std::string v = c.kv.at(key);
    std::replace(v.begin(), v.end(), ',', ' ');
    std::istringstream in(v);
    std::string tok;
    while (in >> tok) {
        try {
            out.push_back(parse(tok));
        } catch (const std::exception&) {
            throw ConfigError("key " + key + ": bad list element '" + tok + "'");
        }
    }
    return out;
}

}  // namespace detail

/// Typed experiment description: grid of cells, chain shape, optimizer and
/// simulation settings.
struct ExperimentConfig {
    std::vector<long> grid_N;
    std::vector<double> grid_pt;
    int F = 100, G = 50;
    OptimConfig optim;
    long long horizon = 100000;
    std::vector<std::uint64_t> seeds = {1};
    bool energy_penalty = false;
    std::string output_dir;
    int threads = 0;  ///< 0 = hardware concurrency
    bool cache = true;
    std::uint64_t hash = 0;

    static ExperimentConfig from_map(const ConfigMap& c) {
        ExperimentConfig out;
        out.grid_N = detail::to_list<long>(c, "grid.N",
                                           [](const std::string& s) { return std::stol(s); });
        out.grid_pt = detail::to_list<double>(
            c, "grid.p_t", [](const std::string& s) { return std::stod(s); });
        out.F = static_cast<int>(detail::to_int(c, "chain.F", 100));
        out.G = static_cast<int>(detail::to_int(c, "chain.G", 50));

        OptimConfig& o = out.optim;
        for (int i = 0; i < 4; ++i) {
            o.K[i] = detail::to_real(c, "optim.K" + std::to_string(i + 1), o.K[i]);
            o.eps[i] = detail::to_real(c, "optim.eps" + std::to_string(i + 1), o.eps[i]);
        }
        o.rho_a = detail::to_real(c, "optim.rho_a", o.rho_a);
        o.alpha_pi = detail::to_real(c, "optim.alpha_pi", o.alpha_pi);
        o.alpha_phi = detail::to_real(c, "optim.alpha_phi", o.alpha_phi);
        o.max_steps = detail::to_int(c, "optim.max_steps", o.max_steps);
        o.seed = static_cast<std::uint64_t>(detail::to_int(c, "optim.seed", 1));
        o.q_floor = detail::to_real(c, "optim.q_floor", o.q_floor);
        o.fd_step = detail::to_real(c, "optim.fd_step", o.fd_step);
        const std::string gm = c.get("optim.grad_mode", "analytic");
        if (gm == "analytic") o.grad_mode = GradMode::analytic;
        else if (gm == "fd") o.grad_mode = GradMode::finite_difference;
        else throw ConfigError("optim.grad_mode must be analytic or fd");
        o.include_sync_state = detail::to_bool(c, "flags.ell_includes_sync_state", true);

        out.energy_penalty = detail::to_bool(c, "flags.energy_penalty", false);
        if (out.energy_penalty) {
            EnergyPenalty e;
            e.K_e = detail::to_real(c, "flags.energy_K", e.K_e);
            e.load_cap = detail::to_real(c, "flags.energy_cap", e.load_cap);
            o.energy = e;
        }

        out.horizon = detail::to_int(c, "sim.horizon", 100000);
        out.seeds = detail::to_list<std::uint64_t>(c, "sim.seeds", [](const std::string& s) {
            return static_cast<std::uint64_t>(std::stoull(s));
        });
        if (out.seeds.empty()) out.seeds = {1};

        out.output_dir = c.get("output.dir", "");
        out.threads = static_cast<int>(detail::to_int(c, "output.threads", 0));
        out.cache = detail::to_bool(c, "output.cache", true);
        out.hash = config_hash(c);
        out.validate();
        return out;
    }

    void validate() const {
        if (grid_N.empty() || grid_pt.empty())
            throw ConfigError("grid.N and grid.p_t must be non-empty");
        for (long n : grid_N)
            for (double pt : grid_pt) ChainParams(pt, F, G, n).validate();
        optim.validate();
        if (horizon < 1) throw ConfigError("sim.horizon must be >= 1");
        if (threads < 0) throw ConfigError("output.threads must be >= 0");
    }

    ChainParams cell(long N, double p_t) const { return ChainParams(p_t, F, G, N); }
};

}  // namespace aoii
