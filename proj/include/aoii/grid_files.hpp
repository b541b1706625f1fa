#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "aoii/chain.hpp"
#include "aoii/optimizer.hpp"
#include "aoii/simulator.hpp"
#include "aoii/version.hpp"

namespace aoii {

class ParseError : public std::runtime_error {
  public:
    ParseError(const std::string& what, long line = 0)
        : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
          line_(line) {}
    long line() const { return line_; }

  private:
    long line_;
};

/// Shortest decimal form that parses back to the identical double.
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, long line = 0) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw ParseError("not a number: '" + std::string(s) + "'", line);
    return v;
}

inline std::string format_hash(std::uint64_t h) {
    char buf[17] = {};
    for (int i = 15; i >= 0; --i) {
        buf[i] = "0123456789abcdef"[h & 0xF];
        h >>= 4;
    }
    return std::string(buf, 16);
}

inline std::uint64_t parse_hash(std::string_view s, long line = 0) {
    std::uint64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v, 16);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw ParseError("not a hash: '" + std::string(s) + "'", line);
    return v;
}

/// Stamp carried by every output file.
struct Provenance {
    std::string version = kVersion;
    std::uint64_t config_hash = 0;
};

/// A (F+1)x(G+1) state grid with metadata: a transmission policy or a state
/// distribution, one value per valid state, invalid cells empty.
struct GridFile {
    std::string kind;  ///< "policy" or "phi"
    int F = 0, G = 0;
    long N = 1;
    double p_t = 0.25;
    bool include_sync_state = true;
    Provenance prov;
    std::vector<double> values;  ///< StateSpace-indexed

    ChainParams params() const { return ChainParams(p_t, F, G, N); }
};

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return out;
}

inline void write_comment_header(std::ostream& os, const std::string& kind,
                                 const Provenance& prov) {
    os << "# kind: " << kind << "\n";
    os << "# version: " << prov.version << "\n";
    os << "# config_hash: " << format_hash(prov.config_hash) << "\n";
}

struct CommentHeader {
    std::map<std::string, std::string> kv;
    long lines_consumed = 0;

    const std::string& require(const std::string& key) const {
        auto it = kv.find(key);
        if (it == kv.end()) throw ParseError("missing header field '" + key + "'");
        return it->second;
    }
};

inline CommentHeader read_comment_header(std::istream& in) {
    CommentHeader out;
    while (in.peek() == '#') {
        std::string line;
        std::getline(in, line);
        ++out.lines_consumed;
        std::string_view body(line);
        body.remove_prefix(1);
        const auto colon = body.find(':');
        if (colon == std::string_view::npos)
            throw ParseError("malformed header comment", out.lines_consumed);
        auto trim = [](std::string_view s) {
            while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
            while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
                s.remove_suffix(1);
            return std::string(s);
        };
        out.kv[trim(body.substr(0, colon))] = trim(body.substr(colon + 1));
    }
    return out;
}

}  // namespace detail

inline void write_grid(std::ostream& os, const GridFile& grid) {
    const StateSpace space(grid.params());
    check_same_size(grid.values.size(), space.size(), "write_grid");
    detail::write_comment_header(os, grid.kind, grid.prov);
    os << "# F: " << grid.F << "\n# G: " << grid.G << "\n# N: " << grid.N
       << "\n# p_t: " << format_double(grid.p_t)
       << "\n# ell_includes_sync_state: " << (grid.include_sync_state ? 1 : 0) << "\n";
    os << "f\\g";
    for (int g = 0; g <= grid.G; ++g) os << ',' << g;
    os << "\n";
    for (int f = 0; f <= grid.F; ++f) {
        os << f;
        for (int g = 0; g <= grid.G; ++g) {
            os << ',';
            if (space.contains(f, g)) os << format_double(grid.values[space.index(f, g)]);
        }
        os << "\n";
    }
}

inline GridFile read_grid(std::istream& in) {
    const auto header = detail::read_comment_header(in);
    long lineno = header.lines_consumed;

    GridFile grid;
    grid.kind = header.require("kind");
    if (grid.kind != "policy" && grid.kind != "phi")
        throw ParseError("unknown grid kind '" + grid.kind + "'");
    grid.prov.version = header.require("version");
    grid.prov.config_hash = parse_hash(header.require("config_hash"));
    try {
        grid.F = std::stoi(header.require("F"));
        grid.G = std::stoi(header.require("G"));
        grid.N = std::stol(header.require("N"));
    } catch (const std::logic_error&) {
        throw ParseError("non-integer F/G/N header field");
    }
    grid.p_t = parse_double(header.require("p_t"));
    grid.include_sync_state = header.require("ell_includes_sync_state") == "1";

    std::unique_ptr<StateSpace> space;
    try {
        space = std::make_unique<StateSpace>(grid.params());
    } catch (const std::invalid_argument& e) {
        throw ParseError(std::string("invalid grid header: ") + e.what());
    }
    grid.values.assign(space->size(), 0.0);

    std::string line;
    if (!std::getline(in, line)) throw ParseError("missing column header row", lineno + 1);
    ++lineno;
    {
        const auto cols = detail::split_csv(line);
        if (cols.size() != static_cast<std::size_t>(grid.G) + 2)
            throw ParseError("column header has " + std::to_string(cols.size()) +
                                 " fields, expected " + std::to_string(grid.G + 2),
                             lineno);
    }
    for (int f = 0; f <= grid.F; ++f) {
        if (!std::getline(in, line)) throw ParseError("missing row f=" + std::to_string(f),
                                                      lineno + 1);
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto cols = detail::split_csv(line);
        if (cols.size() != static_cast<std::size_t>(grid.G) + 2)
            throw ParseError("row has " + std::to_string(cols.size()) + " fields, expected " +
                                 std::to_string(grid.G + 2),
                             lineno);
        if (parse_double(cols[0], lineno) != f)
            throw ParseError("row label mismatch, expected f=" + std::to_string(f), lineno);
        for (int g = 0; g <= grid.G; ++g) {
            const auto cell = cols[static_cast<std::size_t>(g) + 1];
            if (space->contains(f, g)) {
                if (cell.empty())
                    throw ParseError("empty cell for valid state (" + std::to_string(f) + "," +
                                         std::to_string(g) + ")",
                                     lineno);
                grid.values[space->index(f, g)] = parse_double(cell, lineno);
            } else if (!cell.empty()) {
                throw ParseError("value in invalid state (" + std::to_string(f) + "," +
                                     std::to_string(g) + ")",
                                 lineno);
            }
        }
    }
    return grid;
}

inline void write_grid_file(const std::filesystem::path& path, const GridFile& grid) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    write_grid(os, grid);
    if (!os) throw std::runtime_error("write failed: " + path.string());
}

inline GridFile read_grid_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    try {
        return read_grid(in);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what(), e.line());
    }
}

inline GridFile policy_grid(const Policy& policy, const ChainParams& params,
                            bool include_sync_state, const Provenance& prov) {
    GridFile grid;
    grid.kind = "policy";
    grid.F = params.F;
    grid.G = params.G;
    grid.N = params.N;
    grid.p_t = params.p_t;
    grid.include_sync_state = include_sync_state;
    grid.prov = prov;
    grid.values = policy.values;
    return grid;
}

inline GridFile phi_grid(const StateDist& dist, const ChainParams& params,
                         bool include_sync_state, const Provenance& prov) {
    GridFile grid;
    grid.kind = "phi";
    grid.F = params.F;
    grid.G = params.G;
    grid.N = params.N;
    grid.p_t = params.p_t;
    grid.include_sync_state = include_sync_state;
    grid.prov = prov;
    grid.values = dist.probs;
    return grid;
}

inline void write_trace_csv(std::ostream& os, const OptimTrace& trace, const Provenance& prov) {
    detail::write_comment_header(os, "trace", prov);
    os << "step,U,J,c1,c2,c3,c4,ell\n";
    for (const auto& s : trace.steps)
        os << s.step << ',' << format_double(s.U) << ',' << format_double(s.J) << ','
           << format_double(s.c1) << ',' << format_double(s.c2) << ',' << format_double(s.c3)
           << ',' << format_double(s.c4) << ',' << format_double(s.ell) << "\n";
}

inline void write_trace_file(const std::filesystem::path& path, const OptimTrace& trace,
                             const Provenance& prov) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    write_trace_csv(os, trace, prov);
}

struct SimRow {
    std::uint64_t seed = 0;
    std::string policy;
    SimReport report;
};

inline void write_sim_csv(std::ostream& os, const std::vector<SimRow>& rows,
                          const Provenance& prov, long long horizon) {
    detail::write_comment_header(os, "sim", prov);
    os << "# horizon: " << horizon << "\n";
    os << "policy,seed,avg_aoii,avg_load,success_rate,collision_rate,idle_rate\n";
    const double slots = static_cast<double>(horizon);
    for (const auto& r : rows)
        os << r.policy << ',' << r.seed << ',' << format_double(r.report.avg_aoii) << ','
           << format_double(r.report.avg_load) << ',' << format_double(r.report.success_rate)
           << ',' << format_double(static_cast<double>(r.report.collision_slots) / slots) << ','
           << format_double(static_cast<double>(r.report.idle_slots) / slots) << "\n";
}

struct SweepRow {
    long N = 0;
    double p_t = 0.0;
    double value = 0.0;
};

inline void write_sweep_csv(std::ostream& os, const std::string& column,
                            const std::vector<SweepRow>& rows, const Provenance& prov) {
    detail::write_comment_header(os, "sweep", prov);
    os << "N,p_t," << column << "\n";
    for (const auto& r : rows)
        os << r.N << ',' << format_double(r.p_t) << ',' << format_double(r.value) << "\n";
}

inline void write_sweep_file(const std::filesystem::path& path, const std::string& column,
                             const std::vector<SweepRow>& rows, const Provenance& prov) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    write_sweep_csv(os, column, rows, prov);
}

}  // namespace aoii
