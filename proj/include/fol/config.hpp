#pragma once

// Run configuration: flat INI sections read with Boost.PropertyTree. Every key has a
// default equal to the main-study setup, unknown keys are rejected, and referenced files
// must exist when the config is validated.

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "fol/error.hpp"
#include "fol/fem.hpp"
#include "fol/io.hpp"
#include "fol/mesh.hpp"
#include "fol/neural.hpp"
#include "fol/sampling.hpp"
#include "fol/training.hpp"

namespace fol {

struct MeshConfig {
    std::string shape = "structured";  ///< structured | plate_with_hole | file
    int nx = 11;
    int ny = 11;
    double width = 1.0;
    double height = 1.0;
    int n_side = 11;
    int n_radial = 5;
    double hole_cx = 0.5;
    double hole_cy = 0.5;
    double hole_r = 0.2;
    std::string file;
};

struct ConductivityConfig {
    std::string kind = "homogeneous";  ///< homogeneous | inclusions | file
    double k = 1.0;
    InclusionSpec inclusions;
    std::string file;
};

struct ModelConfig {
    Architecture arch = Architecture::separated;
    Activation activation = Activation::swish;
    std::vector<int> hidden;  ///< empty: architecture default
};

struct RunConfig {
    MeshConfig mesh;
    DirichletSpec dirichlet{{{"left", 1.0}, {"right", 0.0}}};
    ConductivityConfig conductivity;
    MaterialParams material;
    SampleCounts counts;
    FourierParams fourier;
    ModelConfig model;
    TrainConfig train;
    std::string output = "data/run";
    std::uint64_t seed = 0;
    std::filesystem::path base_dir;  ///< relative paths in the config resolve against this

    std::filesystem::path resolve(const std::string& p) const {
        const std::filesystem::path path(p);
        return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
    }

    void validate() const {
        if (mesh.shape != "structured" && mesh.shape != "plate_with_hole" && mesh.shape != "file")
            throw ValidationError("mesh.shape must be structured, plate_with_hole or file");
        if (mesh.shape == "file" && !std::filesystem::exists(resolve(mesh.file)))
            throw IoError("mesh file '" + resolve(mesh.file).string() + "' does not exist");
        if (conductivity.kind != "homogeneous" && conductivity.kind != "inclusions" && conductivity.kind != "file")
            throw ValidationError("conductivity.kind must be homogeneous, inclusions or file");
        if (conductivity.kind == "file" && !std::filesystem::exists(resolve(conductivity.file)))
            throw IoError("conductivity file '" + resolve(conductivity.file).string() + "' does not exist");
        if (!(conductivity.k > 0.0)) throw ValidationError("conductivity.k must be positive");
        if (!(material.rho > 0.0) || !(material.c > 0.0)) throw ValidationError("material rho and c must be positive");
        if (counts.fourier < 0 || counts.gaussian < 0 || counts.constant < 0)
            throw ValidationError("sample counts must be non-negative");
        fourier.validate();
        train.validate();
        for (int h : model.hidden)
            if (h < 1) throw ValidationError("model.hidden widths must be positive");
    }
};

namespace detail {

inline std::vector<Interval> parse_intervals(const std::string& s, const std::string& key) {
    // "lo:hi, lo:hi, ..."
    std::vector<Interval> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto colon = item.find(':');
        if (colon == std::string::npos) throw ValidationError(key + ": interval '" + item + "' must be lo:hi");
        try {
            out.emplace_back(std::stod(item.substr(0, colon)), std::stod(item.substr(colon + 1)));
        } catch (const std::logic_error&) {
            throw ValidationError(key + ": interval '" + item + "' is not numeric");
        }
    }
    if (out.empty()) throw ValidationError(key + ": no intervals given");
    return out;
}

inline std::string format_intervals(const std::vector<Interval>& v) {
    std::string s;
    for (const auto& [lo, hi] : v) s += (s.empty() ? "" : ", ") + format_double(lo) + ":" + format_double(hi);
    return s;
}

inline std::vector<Circle> parse_circles(const std::string& s) {
    // "cx cy r; cx cy r"
    std::vector<Circle> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ';')) {
        if (item.find_first_not_of(" \t") == std::string::npos) continue;
        std::istringstream is(item);
        Circle c{};
        if (!(is >> c.cx >> c.cy >> c.r) || !(c.r > 0.0))
            throw ValidationError("conductivity.circles: '" + item + "' must be 'cx cy r' with r > 0");
        out.push_back(c);
    }
    return out;
}

inline std::vector<int> parse_ints(const std::string& s, const std::string& key) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.find_first_not_of(" \t") == std::string::npos) continue;
        try {
            out.push_back(std::stoi(item));
        } catch (const std::logic_error&) {
            throw ValidationError(key + ": '" + item + "' is not an integer");
        }
    }
    return out;
}

} // namespace detail

inline const std::map<std::string, std::set<std::string>>& config_schema() {
    static const std::map<std::string, std::set<std::string>> s{
        {"mesh", {"shape", "nx", "ny", "width", "height", "n_side", "n_radial", "hole_cx", "hole_cy", "hole_r", "file"}},
        {"dirichlet", {}},  // any boundary tag
        {"conductivity", {"kind", "k", "background", "inclusion", "circles", "file"}},
        {"material", {"rho", "c"}},
        {"samples", {"fourier", "gaussian", "constant", "n_sum", "c", "A", "B", "C", "D"}},
        {"model", {"architecture", "activation", "hidden"}},
        {"train", {"epochs", "batch_size", "lr", "optimizer", "dt", "lbfgs_history"}},
        {"run", {"output", "seed"}},
    };
    return s;
}

inline RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {}) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    std::istringstream is(text);
    try {
        pt::read_ini(is, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ParseError(e.line(), "config: " + e.message());
    }
    const auto& schema = config_schema();
    for (const auto& [section, body] : tree) {
        const auto it = schema.find(section);
        if (it == schema.end()) throw ValidationError("config: unknown section [" + section + "]");
        if (body.empty() && !body.data().empty()) throw ValidationError("config: key '" + section + "' outside a section");
        if (section == "dirichlet") continue;
        for (const auto& [key, _] : body)
            if (!it->second.count(key)) throw ValidationError("config: unknown key '" + key + "' in [" + section + "]");
    }

    RunConfig c;
    c.base_dir = base_dir;
    // ptree's defaulted get() would swallow conversion failures
    auto get = [&tree](const std::string& path, auto fallback) {
        const auto child = tree.get_child_optional(path);
        if (!child) return fallback;
        const auto v = child->template get_value_optional<decltype(fallback)>();
        if (!v) throw ValidationError("config: '" + path + "' has an invalid value '" + child->data() + "'");
        return *v;
    };
    auto& m = c.mesh;
    m.shape = get("mesh.shape", m.shape);
    m.nx = get("mesh.nx", m.nx);
    m.ny = get("mesh.ny", m.ny);
    m.width = get("mesh.width", m.width);
    m.height = get("mesh.height", m.height);
    m.n_side = get("mesh.n_side", m.n_side);
    m.n_radial = get("mesh.n_radial", m.n_radial);
    m.hole_cx = get("mesh.hole_cx", m.hole_cx);
    m.hole_cy = get("mesh.hole_cy", m.hole_cy);
    m.hole_r = get("mesh.hole_r", m.hole_r);
    m.file = get("mesh.file", m.file);

    if (const auto d = tree.get_child_optional("dirichlet")) {
        c.dirichlet.entries.clear();
        for (const auto& [tag, v] : *d) c.dirichlet.entries[tag] = get("dirichlet." + tag, 0.0);
    }

    auto& k = c.conductivity;
    k.kind = get("conductivity.kind", k.kind);
    k.k = get("conductivity.k", k.k);
    k.inclusions.background = get("conductivity.background", k.inclusions.background);
    k.inclusions.inclusion = get("conductivity.inclusion", k.inclusions.inclusion);
    if (const auto s = tree.get_optional<std::string>("conductivity.circles")) k.inclusions.circles = detail::parse_circles(*s);
    k.file = get("conductivity.file", k.file);

    c.material.rho = get("material.rho", c.material.rho);
    c.material.c = get("material.c", c.material.c);

    c.counts.fourier = get("samples.fourier", c.counts.fourier);
    c.counts.gaussian = get("samples.gaussian", c.counts.gaussian);
    c.counts.constant = get("samples.constant", c.counts.constant);
    c.fourier.n_sum = get("samples.n_sum", c.fourier.n_sum);
    for (auto [key, list] : {std::pair{"c", &c.fourier.c}, {"A", &c.fourier.A}, {"B", &c.fourier.B}, {"C", &c.fourier.C}, {"D", &c.fourier.D}})
        if (const auto s = tree.get_optional<std::string>(std::string("samples.") + key))
            *list = detail::parse_intervals(*s, std::string("samples.") + key);

    c.model.arch = parse_architecture(get("model.architecture", to_string(c.model.arch)));
    c.model.activation = parse_activation(get("model.activation", to_string(c.model.activation)));
    if (const auto s = tree.get_optional<std::string>("model.hidden")) c.model.hidden = detail::parse_ints(*s, "model.hidden");

    auto& t = c.train;
    t.epochs = get("train.epochs", t.epochs);
    t.batch_size = get("train.batch_size", t.batch_size);
    t.lr = get("train.lr", t.lr);
    t.optimizer = parse_optimizer(get("train.optimizer", to_string(t.optimizer)));
    t.dt = get("train.dt", t.dt);
    t.lbfgs_history = get("train.lbfgs_history", t.lbfgs_history);
    t.activation = c.model.activation;

    c.output = get("run.output", c.output);
    c.seed = get("run.seed", c.seed);
    t.seed = c.seed;
    c.validate();
    return c;
}

inline RunConfig load_config(const std::filesystem::path& p) {
    return parse_config(io::read_text(p), p.has_parent_path() ? p.parent_path() : std::filesystem::path("."));
}

/// Effective configuration with every key spelled out; parses back to the same settings.
inline std::string to_ini(const RunConfig& c) {
    std::ostringstream os;
    const auto& m = c.mesh;
    os << "[mesh]\nshape = " << m.shape << "\nnx = " << m.nx << "\nny = " << m.ny << "\nwidth = " << format_double(m.width)
       << "\nheight = " << format_double(m.height) << "\nn_side = " << m.n_side << "\nn_radial = " << m.n_radial
       << "\nhole_cx = " << format_double(m.hole_cx) << "\nhole_cy = " << format_double(m.hole_cy)
       << "\nhole_r = " << format_double(m.hole_r) << "\nfile = " << m.file << "\n\n[dirichlet]\n";
    for (const auto& [tag, v] : c.dirichlet.entries) os << tag << " = " << format_double(v) << "\n";
    const auto& k = c.conductivity;
    os << "\n[conductivity]\nkind = " << k.kind << "\nk = " << format_double(k.k)
       << "\nbackground = " << format_double(k.inclusions.background) << "\ninclusion = " << format_double(k.inclusions.inclusion)
       << "\ncircles = ";
    for (std::size_t i = 0; i < k.inclusions.circles.size(); ++i) {
        const auto& cc = k.inclusions.circles[i];
        os << (i ? "; " : "") << format_double(cc.cx) << " " << format_double(cc.cy) << " " << format_double(cc.r);
    }
    os << "\nfile = " << k.file << "\n\n[material]\nrho = " << format_double(c.material.rho) << "\nc = " << format_double(c.material.c)
       << "\n\n[samples]\nfourier = " << c.counts.fourier << "\ngaussian = " << c.counts.gaussian << "\nconstant = " << c.counts.constant
       << "\nn_sum = " << c.fourier.n_sum << "\nc = " << detail::format_intervals(c.fourier.c)
       << "\nA = " << detail::format_intervals(c.fourier.A) << "\nB = " << detail::format_intervals(c.fourier.B)
       << "\nC = " << detail::format_intervals(c.fourier.C) << "\nD = " << detail::format_intervals(c.fourier.D)
       << "\n\n[model]\narchitecture = " << to_string(c.model.arch) << "\nactivation = " << to_string(c.model.activation) << "\nhidden = ";
    for (std::size_t i = 0; i < c.model.hidden.size(); ++i) os << (i ? ", " : "") << c.model.hidden[i];
    const auto& t = c.train;
    os << "\n\n[train]\nepochs = " << t.epochs << "\nbatch_size = " << t.batch_size << "\nlr = " << format_double(t.lr)
       << "\noptimizer = " << to_string(t.optimizer) << "\ndt = " << format_double(t.dt) << "\nlbfgs_history = " << t.lbfgs_history
       << "\n\n[run]\noutput = " << c.output << "\nseed = " << c.seed << "\n";
    return os.str();
}

/// Mesh, boundary conditions and assembled operators described by a config.
struct Problem {
    Mesh mesh;
    DofMap dofs;
    ConductivityField k;
    SystemMatrices sys;
};

inline Mesh build_mesh(const RunConfig& c) {
    const auto& m = c.mesh;
    if (m.shape == "structured") return build_structured_grid(m.nx, m.ny, m.width, m.height);
    if (m.shape == "plate_with_hole") return build_plate_with_hole(m.n_side, m.n_radial, m.width, m.height, m.hole_cx, m.hole_cy, m.hole_r);
    return load_mesh(io::read_text(c.resolve(m.file)));
}

inline Problem build_problem(const RunConfig& c) {
    Problem p;
    p.mesh = build_mesh(c);
    p.dofs = build_dof_map(p.mesh, c.dirichlet);
    if (c.conductivity.kind == "homogeneous") p.k = homogeneous_conductivity(p.mesh, c.conductivity.k);
    else if (c.conductivity.kind == "inclusions") p.k = inclusion_conductivity(p.mesh, c.conductivity.inclusions);
    else p.k = io::read_conductivity(c.resolve(c.conductivity.file), p.mesh);
    p.sys = assemble(p.mesh, p.k, c.material);
    return p;
}

} // namespace fol
