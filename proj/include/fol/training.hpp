#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fol/error.hpp"
#include "fol/fem.hpp"
#include "fol/fields.hpp"
#include "fol/neural.hpp"
#include "fol/sampling.hpp"

namespace fol {

inline void require_backward_euler(const ReducedSystem& rs) {
    if (rs.alpha != 1.0) throw ValidationError("the residual loss needs a backward Euler (alpha = 1) system");
}

/// Residual of the implicit step on the free dofs: A_ff t_hat - M_ff t_n - rhs_const.
inline Eigen::VectorXd step_residual(const ReducedSystem& rs, const FreeField& t_n, const FreeField& t_hat) {
    require_backward_euler(rs);
    if (t_n.values.size() != rs.n_free() || t_hat.values.size() != rs.n_free())
        throw ValidationError("field size does not match the reduced system");
    return rs.A_ff * t_hat.values - rs.B_ff * t_n.values - rs.rhs_const;
}

/// L2 norm of the step residual for one sample.
inline double residual_loss(const ReducedSystem& rs, const FreeField& t_n, const FreeField& t_hat) {
    return step_residual(rs, t_n, t_hat).norm();
}

/// d(L^2)/d(t_hat) for one sample.
inline Eigen::VectorXd residual_loss_grad_prediction(const ReducedSystem& rs, const FreeField& t_n, const FreeField& t_hat) {
    return 2.0 * (rs.A_ff.transpose() * step_residual(rs, t_n, t_hat));
}

struct LossAndGradient {
    double loss = 0.0;
    Eigen::VectorXd grad;
};

namespace detail {

/// Sum over columns of L_i^2 and its parameter gradient (unnormalized).
inline LossAndGradient residual_sum(const ReducedSystem& rs, const ModelBundle& model, const Eigen::MatrixXd& x,
                                    bool want_grad) {
    require_backward_euler(rs);
    if (x.rows() != rs.n_free()) throw ValidationError("batch does not match the reduced system");
    Tape tape;
    const Eigen::MatrixXd y = forward_batch(model, x, want_grad ? &tape : nullptr);
    Eigen::MatrixXd r = rs.A_ff * y - rs.B_ff * x;
    r.colwise() -= rs.rhs_const;
    LossAndGradient out;
    out.loss = r.colwise().squaredNorm().sum();
    if (want_grad) {
        const Eigen::MatrixXd dy = 2.0 * (rs.A_ff.transpose() * r);
        out.grad = backward(model, tape, x, dy);
    }
    return out;
}

} // namespace detail

/// Mean of squared residual norms over the batch (columns of `batch`, n_free x n_s).
inline double batch_loss(const ReducedSystem& rs, const Eigen::MatrixXd& batch, const ModelBundle& model) {
    if (batch.cols() == 0) throw ValidationError("empty batch");
    return detail::residual_sum(rs, model, batch, false).loss / static_cast<double>(batch.cols());
}

/// batch_loss and its exact gradient w.r.t. model.params.
inline LossAndGradient loss_and_gradient(const ReducedSystem& rs, const Eigen::MatrixXd& batch, const ModelBundle& model) {
    if (batch.cols() == 0) throw ValidationError("empty batch");
    auto r = detail::residual_sum(rs, model, batch, true);
    const double inv = 1.0 / static_cast<double>(batch.cols());
    r.loss *= inv;
    r.grad *= inv;
    return r;
}

inline Eigen::VectorXd loss_gradient(const ReducedSystem& rs, const Eigen::MatrixXd& batch, const ModelBundle& model) {
    return loss_and_gradient(rs, batch, model).grad;
}

struct GradientCheck {
    double rel_error = 0.0;  ///< |g - g_fd|_inf / max(|g|_inf, |g_fd|_inf) over the probed entries
    double max_abs_error = 0.0;
    std::vector<Eigen::Index> probed;
};

/// Central-difference check of loss_gradient on `n_probe` parameters drawn with `seed`.
inline GradientCheck check_gradient(const ReducedSystem& rs, const Eigen::MatrixXd& batch, ModelBundle model, int n_probe,
                                    double h, std::uint64_t seed) {
    const Eigen::VectorXd grad = loss_gradient(rs, batch, model);
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<Eigen::Index> pick(0, model.params.size() - 1);
    GradientCheck out;
    double scale = 0.0;
    for (int k = 0; k < n_probe; ++k) {
        const Eigen::Index i = pick(rng);
        const double orig = model.params[i];
        model.params[i] = orig + h;
        const double fp = batch_loss(rs, batch, model);
        model.params[i] = orig - h;
        const double fm = batch_loss(rs, batch, model);
        model.params[i] = orig;
        const double fd = (fp - fm) / (2.0 * h);
        out.max_abs_error = std::max(out.max_abs_error, std::abs(fd - grad[i]));
        scale = std::max({scale, std::abs(fd), std::abs(grad[i])});
        out.probed.push_back(i);
    }
    out.rel_error = scale > 0.0 ? out.max_abs_error / scale : out.max_abs_error;
    return out;
}

struct AdamState {
    Eigen::VectorXd m;
    Eigen::VectorXd v;
    long step = 0;
};

/// Bias-corrected Adam.
inline void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& st, double lr, double beta1 = 0.9,
                      double beta2 = 0.999, double eps = 1e-8) {
    if (grads.size() != params.size()) throw ValidationError("gradient and parameter shapes differ");
    if (st.step == 0) {
        st.m = Eigen::VectorXd::Zero(params.size());
        st.v = Eigen::VectorXd::Zero(params.size());
    } else if (st.m.size() != params.size()) {
        throw ValidationError("Adam state does not match parameter shape");
    }
    ++st.step;
    st.m = beta1 * st.m + (1.0 - beta1) * grads;
    st.v = beta2 * st.v + (1.0 - beta2) * grads.cwiseAbs2();
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(st.step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(st.step));
    params.array() -= lr * (st.m.array() / c1) / ((st.v.array() / c2).sqrt() + eps);
}

struct LbfgsState {
    int history = 10;
    std::deque<Eigen::VectorXd> s;
    std::deque<Eigen::VectorXd> y;
    bool has_value = false;
    double f = 0.0;
    Eigen::VectorXd g;
};

/// Stores a curvature pair if s^T y > 0; returns whether it was kept.
inline bool lbfgs_push_pair(LbfgsState& st, Eigen::VectorXd s, Eigen::VectorXd y) {
    const double sy = s.dot(y);
    if (!(sy > 1e-12 * s.norm() * y.norm())) return false;
    st.s.push_back(std::move(s));
    st.y.push_back(std::move(y));
    while (static_cast<int>(st.s.size()) > st.history) {
        st.s.pop_front();
        st.y.pop_front();
    }
    return true;
}

/// Two-loop recursion: returns -H g.
inline Eigen::VectorXd lbfgs_direction(const LbfgsState& st, const Eigen::VectorXd& g) {
    Eigen::VectorXd q = g;
    const std::size_t k = st.s.size();
    std::vector<double> alpha(k), rho(k);
    for (std::size_t i = k; i-- > 0;) {
        rho[i] = 1.0 / st.y[i].dot(st.s[i]);
        alpha[i] = rho[i] * st.s[i].dot(q);
        q.noalias() -= alpha[i] * st.y[i];
    }
    if (k > 0) q *= st.s.back().dot(st.y.back()) / st.y.back().squaredNorm();
    for (std::size_t i = 0; i < k; ++i) {
        const double beta = rho[i] * st.y[i].dot(q);
        q.noalias() += (alpha[i] - beta) * st.s[i];
    }
    return -q;
}

struct LbfgsStepResult {
    bool line_search_failed = false;
    double f_before = 0.0;
    double f_after = 0.0;
    int evaluations = 0;
};

/// One L-BFGS iteration with backtracking Armijo search (c = 1e-4, halving, at most 20 trials).
/// `fg(x)` returns {f(x), grad f(x)}.
template <typename LossGradFn>
LbfgsStepResult lbfgs_step(Eigen::VectorXd& params, LossGradFn&& fg, LbfgsState& st) {
    LbfgsStepResult res;
    if (!st.has_value || st.g.size() != params.size()) {
        auto [f, g] = fg(params);
        st.f = f;
        st.g = std::move(g);
        st.has_value = true;
        ++res.evaluations;
    }
    res.f_before = st.f;
    Eigen::VectorXd d = lbfgs_direction(st, st.g);
    double slope = st.g.dot(d);
    if (!(slope < 0.0)) {
        st.s.clear();
        st.y.clear();
        d = -st.g;
        slope = -st.g.squaredNorm();
    }
    if (slope == 0.0) {
        res.f_after = st.f;
        return res;
    }
    constexpr double c_armijo = 1e-4;
    double t = 1.0;
    for (int trial = 0; trial < 20; ++trial, t *= 0.5) {
        Eigen::VectorXd x = params + t * d;
        auto [f, g] = fg(x);
        ++res.evaluations;
        if (std::isfinite(f) && f <= st.f + c_armijo * t * slope) {
            lbfgs_push_pair(st, x - params, g - st.g);
            params = std::move(x);
            st.f = f;
            st.g = std::move(g);
            res.f_after = f;
            return res;
        }
    }
    res.line_search_failed = true;
    res.f_after = st.f;
    return res;
}

enum class Optimizer { adam, lbfgs };

inline std::string to_string(Optimizer o) { return o == Optimizer::adam ? "adam" : "lbfgs"; }

inline Optimizer parse_optimizer(std::string_view s) {
    if (s == "adam") return Optimizer::adam;
    if (s == "lbfgs" || s == "l-bfgs") return Optimizer::lbfgs;
    throw ValidationError("unknown optimizer '" + std::string(s) + "'");
}

struct TrainConfig {
    int epochs = 1000;
    int batch_size = 60;
    double lr = 1e-3;
    Optimizer optimizer = Optimizer::adam;
    Activation activation = Activation::swish;
    double dt = 0.05;
    std::uint64_t seed = 0;
    int lbfgs_history = 10;

    void validate() const {
        if (epochs < 1) throw ValidationError("epochs must be >= 1");
        if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
        if (!(lr > 0.0)) throw ValidationError("learning rate must be positive");
        if (!(dt > 0.0)) throw ValidationError("dt must be positive");
        if (lbfgs_history < 1) throw ValidationError("lbfgs history must be >= 1");
    }
};

struct TrainResult {
    ModelBundle model;
    std::vector<double> loss_history;  ///< per-epoch mean batch loss
    long optimizer_steps = 0;
};

/// Epoch callback: (epoch index from 1, mean loss, seconds since start).
using ProgressFn = std::function<void(int, double, double)>;

namespace detail {

inline Eigen::MatrixXd gather_batch(const SampleSet& samples, const std::vector<Eigen::Index>& order, std::size_t begin,
                                    std::size_t end) {
    Eigen::MatrixXd x(samples.n_free(), static_cast<Eigen::Index>(end - begin));
    for (std::size_t i = begin; i < end; ++i) x.col(static_cast<Eigen::Index>(i - begin)) = samples.samples.row(order[i]).transpose();
    return x;
}

/// Full-data mean loss/gradient, accumulated chunk by chunk in a fixed order.
inline LossAndGradient full_batch(const ReducedSystem& rs, const ModelBundle& model, const SampleSet& samples) {
    const auto n = static_cast<std::size_t>(samples.size());
    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), 0);
    LossAndGradient total{0.0, Eigen::VectorXd::Zero(model.params.size())};
    constexpr std::size_t chunk = 500;
    for (std::size_t b = 0; b < n; b += chunk) {
        const auto part = residual_sum(rs, model, gather_batch(samples, order, b, std::min(n, b + chunk)), true);
        total.loss += part.loss;
        total.grad += part.grad;
    }
    total.loss /= static_cast<double>(n);
    total.grad /= static_cast<double>(n);
    return total;
}

} // namespace detail

/// Unsupervised training on the residual loss. Adam runs mini-batches over a seeded
/// per-epoch shuffle (last short batch kept); L-BFGS takes one full-batch iteration per epoch.
inline TrainResult train(ModelBundle model, const ReducedSystem& rs, const SampleSet& samples, const TrainConfig& cfg,
                         const ProgressFn& progress = {}) {
    cfg.validate();
    require_backward_euler(rs);
    if (!model.fingerprint.empty() && !samples.fingerprint.empty() && model.fingerprint != samples.fingerprint)
        throw FingerprintMismatch("sample set was generated for a different grid (" + samples.fingerprint + " vs model " +
                                  model.fingerprint + ")");
    if (samples.n_free() != model.n_free || rs.n_free() != model.n_free)
        throw FingerprintMismatch("sample, system and model dimensions disagree");
    if (samples.size() == 0) throw ValidationError("no training samples");
    if (model.dt != 0.0 && model.dt != rs.dt) throw ValidationError("model dt differs from the reduced system dt");
    model.dt = rs.dt;

    TrainResult out;
    const auto start = std::chrono::steady_clock::now();
    AdamState adam;
    LbfgsState lbfgs;
    lbfgs.history = cfg.lbfgs_history;
    const auto n = static_cast<std::size_t>(samples.size());
    const auto bs = static_cast<std::size_t>(cfg.batch_size);
    std::vector<Eigen::Index> order(n);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double epoch_loss = 0.0;
        if (cfg.optimizer == Optimizer::adam) {
            std::iota(order.begin(), order.end(), 0);
            Rng rng = sample_stream(cfg.seed, 0x5eed, static_cast<std::uint32_t>(epoch));
            std::shuffle(order.begin(), order.end(), rng);
            int batches = 0;
            for (std::size_t b = 0; b < n; b += bs) {
                const Eigen::MatrixXd x = detail::gather_batch(samples, order, b, std::min(n, b + bs));
                const auto lg = loss_and_gradient(rs, x, model);
                if (!std::isfinite(lg.loss) || !lg.grad.allFinite())
                    throw NumericalError("non-finite loss at epoch " + std::to_string(epoch + 1));
                adam_step(model.params, lg.grad, adam, cfg.lr);
                epoch_loss += lg.loss;
                ++batches;
                ++out.optimizer_steps;
            }
            epoch_loss /= batches;
        } else {
            auto fg = [&](const Eigen::VectorXd& p) {
                ModelBundle probe = model;
                probe.params = p;
                auto lg = detail::full_batch(rs, probe, samples);
                return std::pair<double, Eigen::VectorXd>{lg.loss, std::move(lg.grad)};
            };
            const auto step = lbfgs_step(model.params, fg, lbfgs);
            epoch_loss = step.f_before;
            ++out.optimizer_steps;
        }
        if (!std::isfinite(epoch_loss)) throw NumericalError("non-finite loss at epoch " + std::to_string(epoch + 1));
        out.loss_history.push_back(epoch_loss);
        if (progress)
            progress(epoch + 1, epoch_loss,
                     std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    }
    out.model = std::move(model);
    return out;
}

inline void require_fingerprint(const ModelBundle& m, const Mesh& mesh, const DofMap& dofs) {
    const auto fp = grid_fingerprint(mesh, dofs);
    if (m.fingerprint != fp)
        throw FingerprintMismatch("checkpoint was trained on a different grid (fingerprint " + m.fingerprint + ", expected " +
                                  fp + ")");
    if (static_cast<std::size_t>(m.n_free) != dofs.n_free())
        throw FingerprintMismatch("checkpoint free-dof count does not match the mesh");
}

inline void save_checkpoint(const ModelBundle& m, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write checkpoint '" + path + "'");
    os << serialize_model(m);
    if (!os) throw IoError("failed writing checkpoint '" + path + "'");
}

inline ModelBundle load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot read checkpoint '" + path + "'");
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_model(ss.str());
}

inline ModelBundle load_checkpoint(const std::string& path, const Mesh& mesh, const DofMap& dofs) {
    ModelBundle m = load_checkpoint(path);
    require_fingerprint(m, mesh, dofs);
    return m;
}

} // namespace fol
