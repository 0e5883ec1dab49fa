#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "fol/error.hpp"
#include "fol/shape.hpp"

namespace fol {

struct Point {
    double x = 0.0;
    double y = 0.0;
    bool operator==(const Point&) const = default;
};

using Quad = std::array<int, 4>;

/// Quadrilateral mesh with tagged boundary node sets. Elements are CCW.
struct Mesh {
    std::vector<Point> nodes;
    std::vector<Quad> elems;
    std::map<std::string, std::vector<int>> boundary_sets;  // sorted, unique node ids

    std::size_t node_count() const { return nodes.size(); }
    std::size_t element_count() const { return elems.size(); }

    Mat42 element_coords(std::size_t e) const {
        Mat42 c;
        for (int a = 0; a < 4; ++a) {
            const Point& p = nodes[static_cast<std::size_t>(elems[e][a])];
            c(a, 0) = p.x;
            c(a, 1) = p.y;
        }
        return c;
    }

    bool operator==(const Mesh&) const = default;
};

struct BoundingBox {
    double xmin, xmax, ymin, ymax;
};

inline BoundingBox bounding_box(const Mesh& m) {
    BoundingBox b{INFINITY, -INFINITY, INFINITY, -INFINITY};
    for (const auto& p : m.nodes) {
        b.xmin = std::min(b.xmin, p.x);
        b.xmax = std::max(b.xmax, p.x);
        b.ymin = std::min(b.ymin, p.y);
        b.ymax = std::max(b.ymax, p.y);
    }
    return b;
}

/// Row-major nodes from (0,0); tags "left", "right", "top", "bottom" (corners sit in two tags).
inline Mesh build_structured_grid(int nx, int ny, double width = 1.0, double height = 1.0) {
    if (nx < 2 || ny < 2) throw ValidationError("structured grid needs nx >= 2 and ny >= 2");
    if (!(width > 0.0) || !(height > 0.0)) throw ValidationError("grid width and height must be positive");
    Mesh m;
    m.nodes.reserve(static_cast<std::size_t>(nx * ny));
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i)
            m.nodes.push_back({width * i / (nx - 1), height * j / (ny - 1)});
    auto id = [nx](int i, int j) { return j * nx + i; };
    for (int j = 0; j + 1 < ny; ++j)
        for (int i = 0; i + 1 < nx; ++i)
            m.elems.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)});
    auto& left = m.boundary_sets["left"];
    auto& right = m.boundary_sets["right"];
    for (int j = 0; j < ny; ++j) {
        left.push_back(id(0, j));
        right.push_back(id(nx - 1, j));
    }
    auto& bottom = m.boundary_sets["bottom"];
    auto& top = m.boundary_sets["top"];
    for (int i = 0; i < nx; ++i) {
        bottom.push_back(id(i, 0));
        top.push_back(id(i, ny - 1));
    }
    return m;
}

/// Unstructured O-grid of a rectangle with a circular hole. Tags: left, right, top, bottom, hole.
/// `n_side` nodes along each outer side, `n_radial` node rings between the outer boundary and the hole.
inline Mesh build_plate_with_hole(int n_side, int n_radial, double width = 1.0, double height = 1.0,
                                  double cx = 0.5, double cy = 0.5, double radius = 0.2) {
    if (n_side < 2 || n_radial < 2) throw ValidationError("plate-with-hole needs n_side >= 2 and n_radial >= 2");
    if (!(radius > 0.0) || cx - radius <= 0.0 || cx + radius >= width || cy - radius <= 0.0 || cy + radius >= height)
        throw ValidationError("hole must lie strictly inside the plate");
    const int per_side = n_side - 1;
    const int ring = 4 * per_side;
    Mesh m;
    auto id = [ring](int k, int j) { return j * ring + (k % ring); };
    for (int j = 0; j < n_radial; ++j) {
        const double s = static_cast<double>(j) / (n_radial - 1);
        for (int k = 0; k < ring; ++k) {
            const int side = k / per_side;
            const double t = static_cast<double>(k % per_side) / per_side;
            Point outer;
            switch (side) {
                case 0: outer = {t * width, 0.0}; break;
                case 1: outer = {width, t * height}; break;
                case 2: outer = {width - t * width, height}; break;
                default: outer = {0.0, height - t * height}; break;
            }
            const double theta = 1.25 * std::numbers::pi + 2.0 * std::numbers::pi * k / ring;
            const Point inner{cx + radius * std::cos(theta), cy + radius * std::sin(theta)};
            m.nodes.push_back({outer.x + s * (inner.x - outer.x), outer.y + s * (inner.y - outer.y)});
        }
    }
    for (int j = 0; j + 1 < n_radial; ++j)
        for (int k = 0; k < ring; ++k)
            m.elems.push_back({id(k, j), id(k + 1, j), id(k + 1, j + 1), id(k, j + 1)});
    for (int k = 0; k < ring; ++k) {
        const int n = id(k, 0);
        const Point& p = m.nodes[static_cast<std::size_t>(n)];
        if (p.x == 0.0) m.boundary_sets["left"].push_back(n);
        if (p.x == width) m.boundary_sets["right"].push_back(n);
        if (p.y == 0.0) m.boundary_sets["bottom"].push_back(n);
        if (p.y == height) m.boundary_sets["top"].push_back(n);
        m.boundary_sets["hole"].push_back(id(k, n_radial - 1));
    }
    for (auto& [tag, ids] : m.boundary_sets) std::sort(ids.begin(), ids.end());
    return m;
}

/// Empty result iff every mesh invariant holds.
inline std::vector<std::string> validate_mesh(const Mesh& m) {
    std::vector<std::string> diag;
    const auto n = static_cast<long>(m.nodes.size());
    for (std::size_t i = 0; i < m.nodes.size(); ++i)
        if (!std::isfinite(m.nodes[i].x) || !std::isfinite(m.nodes[i].y))
            diag.push_back("node " + std::to_string(i) + ": non-finite coordinate");
    const auto rule = gauss_rule_2x2();
    for (std::size_t e = 0; e < m.elems.size(); ++e) {
        const auto& q = m.elems[e];
        const std::string tag = "element " + std::to_string(e) + ": ";
        bool in_range = true;
        for (int v : q)
            if (v < 0 || v >= n) {
                diag.push_back(tag + "node index " + std::to_string(v) + " out of range [0," + std::to_string(n) + ")");
                in_range = false;
            }
        if (!in_range) continue;
        const std::set<int> distinct(q.begin(), q.end());
        if (distinct.size() != 4) {
            diag.push_back(tag + "degenerate element (repeated node)");
            continue;
        }
        const Mat42 c = m.element_coords(e);
        for (const auto& gp : rule.points) {
            const double det = jacobian_det(c, gp[0], gp[1]);
            if (!(det > 0.0)) {
                diag.push_back(tag + "non-positive Jacobian determinant " + std::to_string(det) +
                               (det < 0.0 ? " (negative Jacobian; clockwise or tangled)" : ""));
                break;
            }
        }
    }
    for (const auto& [tagname, ids] : m.boundary_sets) {
        if (tagname.empty()) diag.push_back("boundary set with empty tag");
        for (int v : ids)
            if (v < 0 || v >= n) {
                diag.push_back("boundary set '" + tagname + "': node " + std::to_string(v) + " does not exist");
                break;
            }
    }
    return diag;
}

inline void require_valid(const Mesh& m) {
    const auto diag = validate_mesh(m);
    if (diag.empty()) return;
    std::string msg = "invalid mesh:";
    for (const auto& d : diag) msg += "\n  " + d;
    throw ValidationError(msg);
}

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string serialize_mesh(const Mesh& m) {
    std::ostringstream os;
    os << "folmesh 1\n";
    os << "nodes " << m.nodes.size() << "\n";
    for (std::size_t i = 0; i < m.nodes.size(); ++i)
        os << i << ' ' << format_double(m.nodes[i].x) << ' ' << format_double(m.nodes[i].y) << "\n";
    os << "elems " << m.elems.size() << "\n";
    for (std::size_t e = 0; e < m.elems.size(); ++e) {
        os << e;
        for (int v : m.elems[e]) os << ' ' << v;
        os << "\n";
    }
    for (const auto& [tag, ids] : m.boundary_sets) {
        os << "bset " << tag << ' ' << ids.size() << "\n";
        for (std::size_t i = 0; i < ids.size(); ++i) os << ids[i] << ((i + 1) % 16 == 0 || i + 1 == ids.size() ? "\n" : " ");
    }
    return os.str();
}

namespace detail {

/// Whitespace tokenizer over line-based text with `#` comments.
class Tokenizer {
public:
    explicit Tokenizer(std::string_view text) : text_(text) {}

    std::optional<std::string_view> next() {
        skip();
        if (pos_ >= text_.size()) return std::nullopt;
        const std::size_t start = pos_;
        while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_])) && text_[pos_] != '#') ++pos_;
        return text_.substr(start, pos_ - start);
    }

    std::string_view expect(const char* what) {
        auto t = next();
        if (!t) throw ParseError(line_, std::string("unexpected end of input, expected ") + what);
        return *t;
    }

    long expect_int(const char* what) {
        const auto t = expect(what);
        std::string s(t);
        char* end = nullptr;
        const long v = std::strtol(s.c_str(), &end, 10);
        if (end != s.c_str() + s.size() || s.empty())
            throw ParseError(line_, std::string("expected integer ") + what + ", got '" + s + "'");
        return v;
    }

    double expect_double(const char* what) {
        const auto t = expect(what);
        std::string s(t);
        char* end = nullptr;
        const double v = std::strtod(s.c_str(), &end);
        if (end != s.c_str() + s.size() || s.empty())
            throw ParseError(line_, std::string("expected number ") + what + ", got '" + s + "'");
        return v;
    }

    std::size_t line() const { return line_; }

private:
    void skip() {
        while (pos_ < text_.size()) {
            const char c = text_[pos_];
            if (c == '\n') {
                ++line_;
                ++pos_;
            } else if (c == '#') {
                while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    std::string_view text_;
    std::size_t pos_ = 0;
    std::size_t line_ = 1;
};

} // namespace detail

/// Parses the `folmesh 1` text format and validates the result.
inline Mesh load_mesh(std::string_view text) {
    detail::Tokenizer tk(text);
    if (tk.expect("header") != "folmesh") throw ParseError(tk.line(), "missing 'folmesh' header");
    if (tk.expect_int("format version") != 1) throw ParseError(tk.line(), "unsupported folmesh version");
    Mesh m;
    if (tk.expect("'nodes'") != "nodes") throw ParseError(tk.line(), "expected 'nodes'");
    const long n = tk.expect_int("node count");
    if (n < 0) throw ParseError(tk.line(), "negative node count");
    m.nodes.resize(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) {
        if (tk.expect_int("node id") != i) throw ParseError(tk.line(), "node ids must be contiguous from 0");
        const double x = tk.expect_double("x");
        const double y = tk.expect_double("y");
        m.nodes[static_cast<std::size_t>(i)] = {x, y};
    }
    if (tk.expect("'elems'") != "elems") throw ParseError(tk.line(), "expected 'elems'");
    const long ne = tk.expect_int("element count");
    if (ne < 0) throw ParseError(tk.line(), "negative element count");
    m.elems.resize(static_cast<std::size_t>(ne));
    for (long e = 0; e < ne; ++e) {
        if (tk.expect_int("element id") != e) throw ParseError(tk.line(), "element ids must be contiguous from 0");
        for (int a = 0; a < 4; ++a) m.elems[static_cast<std::size_t>(e)][a] = static_cast<int>(tk.expect_int("node index"));
    }
    while (auto t = tk.next()) {
        if (*t != "bset") throw ParseError(tk.line(), "expected 'bset', got '" + std::string(*t) + "'");
        const std::string tag(tk.expect("boundary tag"));
        if (m.boundary_sets.contains(tag)) throw ParseError(tk.line(), "duplicate boundary tag '" + tag + "'");
        const long k = tk.expect_int("boundary node count");
        if (k < 0) throw ParseError(tk.line(), "negative boundary node count");
        auto& ids = m.boundary_sets[tag];
        for (long i = 0; i < k; ++i) ids.push_back(static_cast<int>(tk.expect_int("boundary node id")));
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    }
    require_valid(m);
    return m;
}

/// Boundary tag -> prescribed temperature.
struct DirichletSpec {
    std::map<std::string, double> entries;
};

/// Partition of nodes into free and constrained slots, both ascending by node id.
struct DofMap {
    struct Slot {
        bool free;
        int index;  ///< position in `free` or `constrained`
    };
    std::vector<int> free;
    std::vector<std::pair<int, double>> constrained;
    std::vector<Slot> node_to_slot;

    std::size_t n_free() const { return free.size(); }
    std::size_t n_constrained() const { return constrained.size(); }
    std::size_t node_count() const { return node_to_slot.size(); }

    Eigen::VectorXd constrained_values() const {
        Eigen::VectorXd v(static_cast<Eigen::Index>(constrained.size()));
        for (std::size_t i = 0; i < constrained.size(); ++i) v[static_cast<Eigen::Index>(i)] = constrained[i].second;
        return v;
    }
};

inline DofMap build_dof_map(const Mesh& m, const DirichletSpec& d) {
    std::map<int, double> prescribed;
    std::map<int, std::string> owner;
    for (const auto& [tag, value] : d.entries) {
        const auto it = m.boundary_sets.find(tag);
        if (it == m.boundary_sets.end()) throw ValidationError("Dirichlet tag '" + tag + "' is not a boundary set of the mesh");
        for (int node : it->second) {
            const auto [pos, inserted] = prescribed.emplace(node, value);
            if (!inserted && pos->second != value)
                throw ValidationError("node " + std::to_string(node) + " gets conflicting Dirichlet values from '" +
                                      owner[node] + "' and '" + tag + "'");
            owner.emplace(node, tag);
        }
    }
    DofMap dm;
    dm.node_to_slot.resize(m.nodes.size());
    for (int i = 0; i < static_cast<int>(m.nodes.size()); ++i) {
        const auto it = prescribed.find(i);
        if (it == prescribed.end()) {
            dm.node_to_slot[static_cast<std::size_t>(i)] = {true, static_cast<int>(dm.free.size())};
            dm.free.push_back(i);
        } else {
            dm.node_to_slot[static_cast<std::size_t>(i)] = {false, static_cast<int>(dm.constrained.size())};
            dm.constrained.emplace_back(i, it->second);
        }
    }
    return dm;
}

/// FNV-1a digest of the mesh geometry and dof partition. Identifies a training layout.
inline std::string grid_fingerprint(const Mesh& m, const DofMap& dofs) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const void* data, std::size_t len) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < len; ++i) {
            h ^= p[i];
            h *= 1099511628211ull;
        }
    };
    for (const auto& p : m.nodes) {
        mix(&p.x, sizeof p.x);
        mix(&p.y, sizeof p.y);
    }
    for (const auto& q : m.elems) mix(q.data(), sizeof(int) * 4);
    for (int f : dofs.free) mix(&f, sizeof f);
    for (const auto& [node, value] : dofs.constrained) {
        mix(&node, sizeof node);
        mix(&value, sizeof value);
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace fol
