#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "fol/error.hpp"
#include "fol/fields.hpp"
#include "fol/mesh.hpp"
#include "fol/parallel.hpp"

namespace fol {

enum class Architecture { separated, elementwise, fully_connected };
enum class Activation { swish, tanh, sigmoid, relu };

inline std::string to_string(Architecture a) {
    switch (a) {
        case Architecture::separated: return "separated";
        case Architecture::elementwise: return "elementwise";
        case Architecture::fully_connected: return "fully_connected";
    }
    return "?";
}

inline std::string to_string(Activation a) {
    switch (a) {
        case Activation::swish: return "swish";
        case Activation::tanh: return "tanh";
        case Activation::sigmoid: return "sigmoid";
        case Activation::relu: return "relu";
    }
    return "?";
}

inline Architecture parse_architecture(std::string_view s) {
    if (s == "separated") return Architecture::separated;
    if (s == "elementwise") return Architecture::elementwise;
    if (s == "fully_connected") return Architecture::fully_connected;
    throw ValidationError("unknown architecture '" + std::string(s) + "'");
}

inline Activation parse_activation(std::string_view s) {
    if (s == "swish") return Activation::swish;
    if (s == "tanh") return Activation::tanh;
    if (s == "sigmoid") return Activation::sigmoid;
    if (s == "relu") return Activation::relu;
    throw ValidationError("unknown activation '" + std::string(s) + "'");
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double activation_apply(Activation kind, double x) {
    switch (kind) {
        case Activation::swish: return x * sigmoid(x);
        case Activation::tanh: return std::tanh(x);
        case Activation::sigmoid: return sigmoid(x);
        case Activation::relu: return x > 0.0 ? x : 0.0;
    }
    return 0.0;
}

inline double activation_grad(Activation kind, double x) {
    switch (kind) {
        case Activation::swish: {
            const double s = sigmoid(x);
            return s + x * s * (1.0 - s);
        }
        case Activation::tanh: {
            const double t = std::tanh(x);
            return 1.0 - t * t;
        }
        case Activation::sigmoid: {
            const double s = sigmoid(x);
            return s * (1.0 - s);
        }
        case Activation::relu: return x > 0.0 ? 1.0 : 0.0;
    }
    return 0.0;
}

namespace detail {

inline Eigen::ArrayXXd act(Activation kind, const Eigen::ArrayXXd& z) {
    switch (kind) {
        case Activation::swish: return z / (1.0 + (-z).exp());
        case Activation::tanh: return z.tanh();
        case Activation::sigmoid: return 1.0 / (1.0 + (-z).exp());
        case Activation::relu: return z.max(0.0);
    }
    return z;
}

/// Derivative evaluated from the pre-activation z and its activation a = act(z).
inline Eigen::ArrayXXd act_grad(Activation kind, const Eigen::ArrayXXd& z, const Eigen::ArrayXXd& a) {
    switch (kind) {
        case Activation::swish: {
            const Eigen::ArrayXXd s = 1.0 / (1.0 + (-z).exp());
            return s + a * (1.0 - s);
        }
        case Activation::tanh: return 1.0 - a.square();
        case Activation::sigmoid: return a * (1.0 - a);
        case Activation::relu: return (z > 0.0).cast<double>();
    }
    return z;
}

} // namespace detail

/// Offsets of one dense layer inside the flat parameter vector. W is row-major out x in.
struct LayerShape {
    int in = 0;
    int out = 0;
    Eigen::Index w_offset = 0;
    Eigen::Index b_offset = 0;
};

struct Net {
    std::vector<LayerShape> layers;
    std::vector<int> input_map;     ///< free slots read by this net
    std::vector<int> output_slots;  ///< free slots written by this net
    bool full_input = false;        ///< input_map is the identity over all slots
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMatrixMap = Eigen::Map<const RowMatrix>;
using RowMatrixMap = Eigen::Map<RowMatrix>;

/// A set of MLPs jointly mapping a free-node field to the next-step free-node field.
struct ModelBundle {
    Architecture arch = Architecture::separated;
    Activation activation = Activation::swish;
    int n_free = 0;
    std::string fingerprint;
    double dt = 0.0;
    std::vector<Net> nets;
    Eigen::VectorXd params;  ///< all weights and biases, net by net, layer by layer

    ConstRowMatrixMap weights(const LayerShape& l) const { return {params.data() + l.w_offset, l.out, l.in}; }
    Eigen::Map<const Eigen::VectorXd> biases(const LayerShape& l) const { return {params.data() + l.b_offset, l.out}; }
    RowMatrixMap weights(const LayerShape& l) { return {params.data() + l.w_offset, l.out, l.in}; }
    Eigen::Map<Eigen::VectorXd> biases(const LayerShape& l) { return {params.data() + l.b_offset, l.out}; }
};

inline std::size_t count_params(const ModelBundle& m) {
    std::size_t n = 0;
    for (const auto& net : m.nets)
        for (const auto& l : net.layers) n += static_cast<std::size_t>(l.out) * l.in + l.out;
    return n;
}

/// Lays out nets and zero parameters. `hidden` lists the hidden-layer widths.
inline ModelBundle make_model(Architecture arch, Activation act, int n_free, std::vector<std::vector<int>> input_maps,
                              std::vector<std::vector<int>> output_slots, const std::vector<int>& hidden) {
    if (hidden.empty()) throw ValidationError("hidden layer specification must not be empty");
    for (int h : hidden)
        if (h < 1) throw ValidationError("hidden layer widths must be positive");
    if (input_maps.size() != output_slots.size()) throw ValidationError("input and output maps disagree on net count");
    ModelBundle m;
    m.arch = arch;
    m.activation = act;
    m.n_free = n_free;
    std::vector<int> written(static_cast<std::size_t>(n_free), 0);
    Eigen::Index offset = 0;
    for (std::size_t k = 0; k < input_maps.size(); ++k) {
        Net net;
        net.input_map = std::move(input_maps[k]);
        net.output_slots = std::move(output_slots[k]);
        if (net.input_map.empty() || net.output_slots.empty()) throw ValidationError("net with empty input or output");
        for (int s : net.input_map)
            if (s < 0 || s >= n_free) throw ValidationError("input_map index out of range");
        for (int s : net.output_slots) {
            if (s < 0 || s >= n_free) throw ValidationError("output slot out of range");
            ++written[static_cast<std::size_t>(s)];
        }
        net.full_input = static_cast<int>(net.input_map.size()) == n_free;
        for (int i = 0; net.full_input && i < n_free; ++i) net.full_input = net.input_map[static_cast<std::size_t>(i)] == i;
        std::vector<int> widths{static_cast<int>(net.input_map.size())};
        widths.insert(widths.end(), hidden.begin(), hidden.end());
        widths.push_back(static_cast<int>(net.output_slots.size()));
        for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
            LayerShape ls{widths[l], widths[l + 1], offset, 0};
            offset += static_cast<Eigen::Index>(ls.in) * ls.out;
            ls.b_offset = offset;
            offset += ls.out;
            net.layers.push_back(ls);
        }
        m.nets.push_back(std::move(net));
    }
    for (int w : written)
        if (w != 1) throw ValidationError("every free slot must be produced by exactly one net");
    m.params = Eigen::VectorXd::Zero(offset);
    return m;
}

/// Free slots of every element touching free slot i (including i itself).
inline std::vector<std::vector<int>> element_stencils(const Mesh& mesh, const DofMap& dofs) {
    std::vector<std::set<int>> sets(dofs.n_free());
    for (const auto& q : mesh.elems)
        for (int a : q) {
            const auto sa = dofs.node_to_slot[static_cast<std::size_t>(a)];
            if (!sa.free) continue;
            for (int b : q) {
                const auto sb = dofs.node_to_slot[static_cast<std::size_t>(b)];
                if (sb.free) sets[static_cast<std::size_t>(sa.index)].insert(sb.index);
            }
        }
    std::vector<std::vector<int>> out;
    out.reserve(sets.size());
    for (auto& s : sets) out.emplace_back(s.begin(), s.end());
    return out;
}

inline std::vector<int> default_hidden(Architecture arch) {
    if (arch == Architecture::fully_connected) return {170, 170, 170, 170};
    return {10, 10};
}

/// Glorot-uniform weights, zero biases.
inline void glorot_init(ModelBundle& m, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    m.params.setZero();
    for (const auto& net : m.nets)
        for (const auto& l : net.layers) {
            const double limit = std::sqrt(6.0 / (l.in + l.out));
            std::uniform_real_distribution<double> u(-limit, limit);
            auto w = m.weights(l);
            for (Eigen::Index r = 0; r < w.rows(); ++r)
                for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = u(rng);
        }
}

inline ModelBundle init_model(Architecture arch, const Mesh& mesh, const DofMap& dofs, std::vector<int> hidden,
                              Activation act, std::uint64_t seed, double dt) {
    if (hidden.empty()) hidden = default_hidden(arch);
    const int n = static_cast<int>(dofs.n_free());
    if (n == 0) throw ValidationError("mesh has no free dofs to learn");
    std::vector<int> all(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
    std::vector<std::vector<int>> inputs, outputs;
    switch (arch) {
        case Architecture::separated:
            for (int i = 0; i < n; ++i) {
                inputs.push_back(all);
                outputs.push_back({i});
            }
            break;
        case Architecture::elementwise:
            inputs = element_stencils(mesh, dofs);
            for (int i = 0; i < n; ++i) outputs.push_back({i});
            break;
        case Architecture::fully_connected:
            inputs.push_back(all);
            outputs.push_back(all);
            break;
    }
    ModelBundle m = make_model(arch, act, n, std::move(inputs), std::move(outputs), hidden);
    m.fingerprint = grid_fingerprint(mesh, dofs);
    m.dt = dt;
    glorot_init(m, seed);
    return m;
}

/// Recorded intermediates of one net: z[l] pre-activation, a[l] layer output.
struct NetTape {
    Eigen::MatrixXd input;  ///< gathered input; empty when the net reads the full field
    std::vector<Eigen::MatrixXd> z;
    std::vector<Eigen::MatrixXd> a;
};

struct Tape {
    std::vector<NetTape> nets;
};

namespace detail {

inline void forward_net(const ModelBundle& m, const Net& net, const Eigen::MatrixXd& x, NetTape& t) {
    if (!net.full_input) t.input = x(net.input_map, Eigen::all);
    const Eigen::MatrixXd& in = net.full_input ? x : t.input;
    t.z.resize(net.layers.size());
    t.a.resize(net.layers.size());
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const auto& ls = net.layers[l];
        const Eigen::MatrixXd& prev = l == 0 ? in : t.a[l - 1];
        t.z[l].noalias() = m.weights(ls) * prev;
        t.z[l].colwise() += m.biases(ls);
        if (l + 1 < net.layers.size())
            t.a[l] = act(m.activation, t.z[l].array()).matrix();
        else
            t.a[l] = t.z[l];  // linear output layer
    }
}

} // namespace detail

/// Batched forward pass; columns of `x` are independent inputs (n_free x batch).
inline Eigen::MatrixXd forward_batch(const ModelBundle& m, const Eigen::MatrixXd& x, Tape* tape = nullptr) {
    if (x.rows() != m.n_free)
        throw ValidationError("model expects " + std::to_string(m.n_free) + " inputs, got " + std::to_string(x.rows()));
    Tape local;
    Tape& t = tape ? *tape : local;
    t.nets.assign(m.nets.size(), {});
    Eigen::MatrixXd y(m.n_free, x.cols());
    parallel_for(m.nets.size(), [&](std::size_t k) {
        const Net& net = m.nets[k];
        detail::forward_net(m, net, x, t.nets[k]);
        const Eigen::MatrixXd& out = t.nets[k].a.back();
        for (std::size_t o = 0; o < net.output_slots.size(); ++o) y.row(net.output_slots[o]) = out.row(static_cast<Eigen::Index>(o));
        if (!tape) t.nets[k] = {};
    });
    return y;
}

inline FreeField forward(const ModelBundle& m, const FreeField& t_n) {
    return {forward_batch(m, t_n.values).col(0)};
}

struct TapedOutput {
    FreeField output;
    Tape tape;
};

inline TapedOutput forward_with_tape(const ModelBundle& m, const FreeField& t_n) {
    TapedOutput r;
    r.output.values = forward_batch(m, t_n.values, &r.tape).col(0);
    return r;
}

/// Reverse pass: gradient w.r.t. every parameter given dLoss/dOutput `dy` (n_free x batch).
inline Eigen::VectorXd backward(const ModelBundle& m, const Tape& tape, const Eigen::MatrixXd& x, const Eigen::MatrixXd& dy) {
    if (tape.nets.size() != m.nets.size()) throw ValidationError("tape does not belong to this model");
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(m.params.size());
    parallel_for(m.nets.size(), [&](std::size_t k) {
        const Net& net = m.nets[k];
        const NetTape& t = tape.nets[k];
        const Eigen::MatrixXd& in = net.full_input ? x : t.input;
        Eigen::MatrixXd delta = dy(net.output_slots, Eigen::all);
        for (std::size_t l = net.layers.size(); l-- > 0;) {
            const auto& ls = net.layers[l];
            if (l + 1 < net.layers.size())
                delta = (delta.array() * detail::act_grad(m.activation, t.z[l].array(), t.a[l].array())).matrix();
            const Eigen::MatrixXd& prev = l == 0 ? in : t.a[l - 1];
            RowMatrixMap gw(grad.data() + ls.w_offset, ls.out, ls.in);
            gw.noalias() = delta * prev.transpose();
            Eigen::Map<Eigen::VectorXd>(grad.data() + ls.b_offset, ls.out) = delta.rowwise().sum();
            if (l > 0) delta = m.weights(ls).transpose() * delta;
        }
    });
    return grad;
}

// Checkpoint text format, header `folmodel 1`. Values are written with 17 significant
// digits so a parse round trip is bit exact.
inline std::string serialize_model(const ModelBundle& m) {
    std::ostringstream os;
    os << "folmodel 1\n";
    os << "arch " << to_string(m.arch) << "\n";
    os << "activation " << to_string(m.activation) << "\n";
    os << "n_free " << m.n_free << "\n";
    os << "fingerprint " << (m.fingerprint.empty() ? "-" : m.fingerprint) << "\n";
    os << "dt " << format_double(m.dt) << "\n";
    os << "nets " << m.nets.size() << "\n";
    auto ints = [&os](const std::vector<int>& v) {
        os << v.size() << "\n";
        for (std::size_t i = 0; i < v.size(); ++i) os << v[i] << ((i + 1) % 20 == 0 || i + 1 == v.size() ? "\n" : " ");
    };
    auto reals = [&os](const double* p, Eigen::Index n, Eigen::Index row) {
        for (Eigen::Index i = 0; i < n; ++i) os << format_double(p[i]) << ((i + 1) % row == 0 || i + 1 == n ? "\n" : " ");
    };
    for (std::size_t k = 0; k < m.nets.size(); ++k) {
        const Net& net = m.nets[k];
        os << "net " << k << "\ninputs ";
        ints(net.input_map);
        os << "outputs ";
        ints(net.output_slots);
        os << "layers " << net.layers.size() << "\n";
        for (const auto& l : net.layers) {
            os << "layer " << l.in << ' ' << l.out << "\nW\n";
            reals(m.params.data() + l.w_offset, static_cast<Eigen::Index>(l.in) * l.out, l.in);
            os << "b\n";
            reals(m.params.data() + l.b_offset, l.out, l.out);
        }
    }
    os << "end\n";
    return os.str();
}

inline ModelBundle parse_model(std::string_view text) {
    detail::Tokenizer tk(text);
    auto key = [&tk](const char* k) {
        const auto t = tk.expect(k);
        if (t != k) throw ParseError(tk.line(), std::string("expected '") + k + "', got '" + std::string(t) + "'");
    };
    const auto head = tk.next();
    if (!head || *head != "folmodel") throw ValidationError("not a folmodel checkpoint (bad header)");
    const auto version = tk.next();
    if (!version || *version != "1")
        throw ValidationError("unsupported folmodel version '" + std::string(version.value_or("")) + "'");
    key("arch");
    const Architecture arch = parse_architecture(tk.expect("architecture"));
    key("activation");
    const Activation act = parse_activation(tk.expect("activation"));
    key("n_free");
    const int n_free = static_cast<int>(tk.expect_int("n_free"));
    key("fingerprint");
    std::string fp(tk.expect("fingerprint"));
    if (fp == "-") fp.clear();
    key("dt");
    const double dt = tk.expect_double("dt");
    key("nets");
    const long n_nets = tk.expect_int("net count");
    if (n_nets < 0) throw ParseError(tk.line(), "negative net count");
    std::vector<std::vector<int>> inputs, outputs;
    std::vector<std::vector<int>> widths;
    std::vector<std::vector<double>> values;
    for (long k = 0; k < n_nets; ++k) {
        key("net");
        if (tk.expect_int("net index") != k) throw ParseError(tk.line(), "nets out of order");
        auto read_ints = [&tk](std::vector<int>& v) {
            const long n = tk.expect_int("count");
            if (n < 0) throw ParseError(tk.line(), "negative count");
            for (long i = 0; i < n; ++i) v.push_back(static_cast<int>(tk.expect_int("index")));
        };
        key("inputs");
        read_ints(inputs.emplace_back());
        key("outputs");
        read_ints(outputs.emplace_back());
        key("layers");
        const long nl = tk.expect_int("layer count");
        auto& w = widths.emplace_back();
        auto& vals = values.emplace_back();
        for (long l = 0; l < nl; ++l) {
            key("layer");
            const long in = tk.expect_int("layer input width");
            const long out = tk.expect_int("layer output width");
            if (in < 1 || out < 1) throw ParseError(tk.line(), "layer widths must be positive");
            if (l == 0) w.push_back(static_cast<int>(in));
            else if (w.back() != in) throw ParseError(tk.line(), "layer widths do not chain");
            w.push_back(static_cast<int>(out));
            key("W");
            for (long i = 0; i < in * out; ++i) vals.push_back(tk.expect_double("weight"));
            key("b");
            for (long i = 0; i < out; ++i) vals.push_back(tk.expect_double("bias"));
        }
    }
    key("end");
    if (widths.empty()) throw ValidationError("checkpoint contains no nets");
    // all nets share their hidden widths
    const std::vector<int> hidden(widths[0].begin() + 1, widths[0].end() - 1);
    ModelBundle m = make_model(arch, act, n_free, inputs, outputs, hidden);
    Eigen::Index pos = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
        if (std::vector<int>(widths[k].begin() + 1, widths[k].end() - 1) != hidden)
            throw ValidationError("nets with different hidden widths are not supported");
        for (double v : values[k]) m.params[pos++] = v;
    }
    if (pos != m.params.size()) throw ValidationError("checkpoint parameter count mismatch");
    m.fingerprint = fp;
    m.dt = dt;
    return m;
}

} // namespace fol
