#pragma once

// File formats for fields, trajectories, sample sets, loss/error tables, sections and
// upsampled grids. Numbers are written with 17 significant digits so every file round
// trips bit exactly and reruns are byte identical.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "fol/error.hpp"
#include "fol/fe_solver.hpp"
#include "fol/fields.hpp"
#include "fol/mesh.hpp"
#include "fol/sampling.hpp"

namespace fol::io {

namespace fs = std::filesystem;
using nlohmann::json;

inline std::string read_text(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw IoError("cannot read '" + p.string() + "'");
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

inline void write_text(const fs::path& p, const std::string& text) {
    if (p.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(p.parent_path(), ec);
        if (ec) throw IoError("cannot create directory '" + p.parent_path().string() + "': " + ec.message());
    }
    std::ofstream os(p, std::ios::binary);
    if (!os) throw IoError("cannot write '" + p.string() + "'");
    os << text;
    if (!os) throw IoError("failed writing '" + p.string() + "'");
}

inline void ensure_dir(const fs::path& p) {
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw IoError("cannot create directory '" + p.string() + "': " + ec.message());
}

inline json read_json(const fs::path& p) {
    try {
        return json::parse(read_text(p));
    } catch (const json::parse_error& e) {
        throw ValidationError("malformed JSON in '" + p.string() + "': " + e.what());
    }
}

inline void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

// ---------------------------------------------------------------- CSV core

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        const auto b = cell.find_first_not_of(" \t\r");
        const auto e = cell.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

/// Parses a numeric CSV with a header row; every row must have the header's width.
inline CsvTable parse_csv(const std::string& text, const std::string& what = "csv") {
    CsvTable t;
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = split_csv_line(line);
        if (t.header.empty()) {
            t.header = std::move(cells);
            continue;
        }
        if (cells.size() != t.header.size())
            throw ParseError(lineno, what + ": expected " + std::to_string(t.header.size()) + " columns, got " +
                                         std::to_string(cells.size()));
        std::vector<double> row;
        row.reserve(cells.size());
        for (const auto& c : cells) {
            char* end = nullptr;
            const double v = std::strtod(c.c_str(), &end);
            if (c.empty() || end != c.c_str() + c.size()) throw ParseError(lineno, what + ": '" + c + "' is not a number");
            row.push_back(v);
        }
        t.rows.push_back(std::move(row));
    }
    if (t.header.empty()) throw ParseError(1, what + ": missing header row");
    return t;
}

inline void require_header(const CsvTable& t, const std::vector<std::string>& expected, const std::string& what) {
    if (t.header != expected) {
        std::string e;
        for (const auto& h : expected) e += (e.empty() ? "" : ",") + h;
        throw ValidationError(what + ": header must be '" + e + "'");
    }
}

inline CsvTable read_csv(const fs::path& p) { return parse_csv(read_text(p), p.string()); }

// ---------------------------------------------------------------- nodal fields

/// `node_id,x,y,T`
inline std::string field_csv(const Mesh& m, const Eigen::VectorXd& v, const std::string& column = "T") {
    if (static_cast<std::size_t>(v.size()) != m.node_count()) throw ValidationError("field does not match mesh");
    std::string s = "node_id,x,y," + column + "\n";
    for (std::size_t i = 0; i < m.node_count(); ++i)
        s += std::to_string(i) + "," + format_double(m.nodes[i].x) + "," + format_double(m.nodes[i].y) + "," +
             format_double(v[static_cast<Eigen::Index>(i)]) + "\n";
    return s;
}

inline void write_field(const fs::path& p, const Mesh& m, const FullField& f) { write_text(p, field_csv(m, f.values)); }

namespace detail {

inline Eigen::VectorXd nodal_column(const CsvTable& t, std::size_t n_nodes, std::size_t value_col, const std::string& what) {
    if (t.rows.size() != n_nodes)
        throw ValidationError(what + ": " + std::to_string(t.rows.size()) + " rows for a mesh with " + std::to_string(n_nodes) +
                              " nodes");
    Eigen::VectorXd v(static_cast<Eigen::Index>(n_nodes));
    std::vector<char> seen(n_nodes, 0);
    for (const auto& r : t.rows) {
        const double id = r[0];
        if (id < 0 || id >= static_cast<double>(n_nodes) || id != std::floor(id))
            throw ValidationError(what + ": node id " + format_double(id) + " out of range");
        const auto i = static_cast<std::size_t>(id);
        if (seen[i]++) throw ValidationError(what + ": node id " + std::to_string(i) + " repeated");
        v[static_cast<Eigen::Index>(i)] = r[value_col];
    }
    return v;
}

} // namespace detail

inline FullField read_field(const fs::path& p, std::size_t n_nodes) {
    const CsvTable t = read_csv(p);
    require_header(t, {"node_id", "x", "y", "T"}, p.string());
    FullField f{detail::nodal_column(t, n_nodes, 3, p.string())};
    if (!f.values.allFinite()) throw ValidationError(p.string() + ": non-finite temperature");
    return f;
}

inline FullField read_field(const fs::path& p, const Mesh& m) { return read_field(p, m.node_count()); }

/// `node_id,k`
inline void write_conductivity(const fs::path& p, const ConductivityField& k) {
    std::string s = "node_id,k\n";
    for (Eigen::Index i = 0; i < k.k.size(); ++i) s += std::to_string(i) + "," + format_double(k.k[i]) + "\n";
    write_text(p, s);
}

inline ConductivityField read_conductivity(const fs::path& p, const Mesh& m) {
    const CsvTable t = read_csv(p);
    require_header(t, {"node_id", "k"}, p.string());
    ConductivityField k{detail::nodal_column(t, m.node_count(), 1, p.string())};
    require_positive(k);
    return k;
}

// ---------------------------------------------------------------- trajectories

inline std::string step_name(std::size_t s) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "step_%04zu.csv", s);
    return buf;
}

/// Writes step_0000.csv .. step_NNNN.csv plus trajectory.json {steps, dt}.
inline void write_trajectory(const fs::path& dir, const Mesh& m, const std::vector<FullField>& fields, double dt) {
    ensure_dir(dir);
    for (std::size_t s = 0; s < fields.size(); ++s) write_field(dir / step_name(s), m, fields[s]);
    write_json(dir / "trajectory.json", json{{"steps", fields.size() - 1}, {"dt", dt}, {"nodes", m.node_count()}});
}

inline bool is_trajectory_dir(const fs::path& dir) { return fs::exists(dir / "trajectory.json"); }

/// Node count comes from trajectory.json.
inline Trajectory read_trajectory(const fs::path& dir) {
    const fs::path meta = dir / "trajectory.json";
    if (!fs::exists(meta)) throw IoError("'" + dir.string() + "' is not a trajectory directory (no trajectory.json)");
    const json j = read_json(meta);
    const auto steps = j.at("steps").get<std::size_t>();
    const auto nodes = j.at("nodes").get<std::size_t>();
    Trajectory t;
    t.dt = j.at("dt").get<double>();
    for (std::size_t s = 0; s <= steps; ++s) {
        const fs::path f = dir / step_name(s);
        if (!fs::exists(f)) throw ValidationError("trajectory '" + dir.string() + "' is missing " + step_name(s));
        t.fields.push_back(read_field(f, nodes));
    }
    return t;
}

inline Trajectory read_trajectory(const fs::path& dir, const Mesh& m) {
    Trajectory t = read_trajectory(dir);
    if (!t.fields.empty() && static_cast<std::size_t>(t.fields[0].values.size()) != m.node_count())
        throw ValidationError("trajectory '" + dir.string() + "' does not match the mesh");
    return t;
}

// ---------------------------------------------------------------- sample sets

/// `sample_id,v_0..v_{n-1}` plus a JSON sidecar with provenance.
inline void write_samples(const fs::path& csv, const SampleSet& s, const FourierParams& fp, const json& grid) {
    std::string text = "sample_id";
    for (Eigen::Index j = 0; j < s.n_free(); ++j) text += ",v_" + std::to_string(j);
    text += "\n";
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        text += std::to_string(i);
        for (Eigen::Index j = 0; j < s.n_free(); ++j) text += "," + format_double(s.samples(i, j));
        text += "\n";
    }
    write_text(csv, text);
    auto ranges = [](const std::vector<Interval>& v) {
        json a = json::array();
        for (const auto& [lo, hi] : v) a.push_back({lo, hi});
        return a;
    };
    fs::path side = csv;
    side.replace_extension(".json");
    write_json(side, json{{"counts", {{"fourier", s.provenance.fourier}, {"gaussian", s.provenance.gaussian}, {"constant", s.provenance.constant}}},
                          {"seed", s.seed},
                          {"n_free", s.n_free()},
                          {"fingerprint", s.fingerprint},
                          {"grid", grid},
                          {"fourier", {{"n_sum", fp.n_sum}, {"c", ranges(fp.c)}, {"A", ranges(fp.A)}, {"B", ranges(fp.B)},
                                       {"C", ranges(fp.C)}, {"D", ranges(fp.D)}}}});
}

inline SampleSet read_samples(const fs::path& csv) {
    const CsvTable t = read_csv(csv);
    if (t.header.empty() || t.header[0] != "sample_id") throw ValidationError(csv.string() + ": first column must be sample_id");
    const auto n = static_cast<Eigen::Index>(t.header.size() - 1);
    SampleSet s;
    s.samples.resize(static_cast<Eigen::Index>(t.rows.size()), n);
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        if (t.rows[i][0] != static_cast<double>(i)) throw ValidationError(csv.string() + ": sample ids must be 0..N-1 in order");
        for (Eigen::Index j = 0; j < n; ++j) s.samples(static_cast<Eigen::Index>(i), j) = t.rows[i][static_cast<std::size_t>(j) + 1];
    }
    fs::path side = csv;
    side.replace_extension(".json");
    if (fs::exists(side)) {
        const json j = read_json(side);
        s.seed = j.value("seed", std::uint64_t{0});
        s.fingerprint = j.value("fingerprint", std::string());
        if (j.contains("counts")) {
            const auto& c = j["counts"];
            s.provenance = {c.value("fourier", 0), c.value("gaussian", 0), c.value("constant", 0)};
        }
        if (s.provenance.total() != s.size()) throw ValidationError(side.string() + ": provenance counts do not sum to the row count");
    } else {
        s.provenance = {0, 0, 0};
    }
    return s;
}

// ---------------------------------------------------------------- tables

inline void write_loss(const fs::path& p, const std::vector<double>& loss) {
    std::string s = "epoch,mean_loss\n";
    for (std::size_t e = 0; e < loss.size(); ++e) s += std::to_string(e + 1) + "," + format_double(loss[e]) + "\n";
    write_text(p, s);
}

/// `step,t,E_rr`
inline void write_errors(const fs::path& p, const std::vector<double>& err, double dt) {
    std::string s = "step,t,E_rr\n";
    for (std::size_t k = 0; k < err.size(); ++k)
        s += std::to_string(k) + "," + format_double(static_cast<double>(k) * dt) + "," + format_double(err[k]) + "\n";
    write_text(p, s);
}

inline void write_section(const fs::path& p, const std::vector<std::pair<double, double>>& sec) {
    std::string s = "coord,value\n";
    for (const auto& [c, v] : sec) s += format_double(c) + "," + format_double(v) + "\n";
    write_text(p, s);
}

/// Row j of the CSV is grid row j (y index), written top row last.
inline void write_grid_csv(const fs::path& p, const Eigen::MatrixXd& g) {
    std::string s;
    for (Eigen::Index j = 0; j < g.rows(); ++j) {
        for (Eigen::Index i = 0; i < g.cols(); ++i) s += (i ? "," : "") + format_double(g(j, i));
        s += "\n";
    }
    write_text(p, s);
}

/// Binary 8-bit PGM, finite [min,max] mapped linearly to [0,255], y axis pointing up.
/// Non-finite cells (outside the domain) are black.
inline void write_pgm(const fs::path& p, const Eigen::MatrixXd& g) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (Eigen::Index k = 0; k < g.size(); ++k)
        if (std::isfinite(g.data()[k])) {
            lo = std::min(lo, g.data()[k]);
            hi = std::max(hi, g.data()[k]);
        }
    const double span = hi - lo;
    std::string s = "P5\n" + std::to_string(g.cols()) + " " + std::to_string(g.rows()) + "\n255\n";
    for (Eigen::Index j = g.rows(); j-- > 0;)
        for (Eigen::Index i = 0; i < g.cols(); ++i) {
            if (!std::isfinite(g(j, i))) {
                s.push_back('\0');
                continue;
            }
            const double u = span > 0.0 ? (g(j, i) - lo) / span : 0.5;
            s.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * std::clamp(u, 0.0, 1.0)))));
        }
    write_text(p, s);
}

/// `node_id,x,y,qx,qy,q_mag`
inline void write_flux(const fs::path& p, const Mesh& m, const Eigen::MatrixX2d& q) {
    std::string s = "node_id,x,y,qx,qy,q_mag\n";
    for (std::size_t i = 0; i < m.node_count(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        s += std::to_string(i) + "," + format_double(m.nodes[i].x) + "," + format_double(m.nodes[i].y) + "," +
             format_double(q(r, 0)) + "," + format_double(q(r, 1)) + "," + format_double(q.row(r).norm()) + "\n";
    }
    write_text(p, s);
}

} // namespace fol::io
