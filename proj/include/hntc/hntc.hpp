// SPDX-License-Identifier: Apache-2.0
//
// Hybrid noisy tensor completion: ADMM over a tensor whose leading n1
// dimensions are spatially smooth (LTTV penalty) and whose trailing n2
// dimensions are low-rank per position (weighted tensor nuclear norm), subject
// to a weighted squared-error budget sum W (T - X)^2 <= eta.
//
// Storage convention: with Tensor's first-index-fastest order, the data of an
// (I^s_1..I^s_n1, I^l_1..I^l_n2) tensor is an (npos x nbeam) column-major
// matrix. A column is one position slice (fixed beam tuple), a row is one beam
// slice (fixed position tuple).

#pragma once

#include "hntc/prox.hpp"
#include "hntc/tensor.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace hntc {

struct HntcConfig {
    std::size_t n1 = 2;
    std::size_t n2 = 2;
    /// Nuclear-norm weights per low-rank mode; empty means uniform 1/n2.
    std::vector<double> alpha;
    double gamma = 1.0;
    double lambda = 1.0;
    double eta = 0.0;
    /// Step for the Z multipliers; defaults to lambda.
    std::optional<double> beta1;
    /// Step for mu on the normalized problem. When unset, beta2_rel / eta_rel
    /// with eta_rel = eta / sum W T^2, so mu moves by beta2_rel times the
    /// constraint violation measured in units of the budget.
    std::optional<double> beta2;
    double beta2_rel = 100.0;
    /// The mu step targets (1 - eta_margin) eta so the fixed point sits strictly
    /// inside the budget and the feasibility test can trigger on an approach
    /// from the infeasible side.
    double eta_margin = 1e-2;
    /// Absolute primal-gap threshold; when unset, epsilon_rel * ||T||_F.
    std::optional<double> epsilon;
    double epsilon_rel = 1e-3;
    std::size_t max_iter = 300;
    /// Solve in units where the weighted RMS of the observed data is one.
    /// Equivalent to specifying gamma relative to the data scale.
    bool normalize = true;
    bool record_trace = false;

    std::vector<double> alphas() const {
        if (alpha.empty()) return std::vector<double>(n2, n2 ? 1.0 / static_cast<double>(n2) : 0.0);
        return alpha;
    }
    double step_z() const { return beta1.value_or(lambda); }

    void validate() const {
        auto fail = [](const std::string &m) { throw std::invalid_argument("HntcConfig: " + m); };
        if (n1 + n2 == 0) fail("n1 + n2 must be positive");
        const auto a = alphas();
        if (a.size() != n2) fail("alpha must have n2 entries");
        double sum = 0;
        for (double v : a) {
            if (!(v > 0)) fail("alpha entries must be > 0");
            sum += v;
        }
        if (n2 > 0 && std::abs(sum - 1.0) > 1e-9) fail("alpha must sum to 1");
        if (!(lambda > 0) || !std::isfinite(lambda)) fail("lambda must be > 0");
        if (!(gamma >= 0) || !std::isfinite(gamma)) fail("gamma must be >= 0");
        if (!(eta >= 0) || !std::isfinite(eta)) fail("eta must be >= 0");
        if (!(step_z() > 0)) fail("beta1 must be > 0");
        if (beta2 && !(*beta2 > 0)) fail("beta2 must be > 0");
        if (!(beta2_rel > 0)) fail("beta2_rel must be > 0");
        if (!(eta_margin >= 0 && eta_margin < 1)) fail("eta_margin must be in [0, 1)");
        if (epsilon && !(*epsilon > 0)) fail("epsilon must be > 0");
        if (!epsilon && !(epsilon_rel > 0)) fail("epsilon_rel must be > 0");
        if (max_iter < 1) fail("max_iter must be >= 1");
    }
};

struct HntcProblem {
    Tensor t;
    Tensor w;
    HntcConfig config;

    Shape grid_shape() const {
        return Shape(t.shape().begin(), t.shape().begin() + static_cast<long>(config.n1));
    }
    Shape beam_shape() const {
        return Shape(t.shape().begin() + static_cast<long>(config.n1), t.shape().end());
    }
    std::size_t npos() const { return shape_size(grid_shape()); }
    std::size_t nbeam() const { return shape_size(beam_shape()); }

    void validate() const {
        config.validate();
        if (t.order() != config.n1 + config.n2)
            throw std::invalid_argument("HntcProblem: tensor order " + std::to_string(t.order()) +
                                        " != n1 + n2");
        t.require_same_shape(w, "HntcProblem(t, w)");
        for (std::size_t i = 0; i < w.size(); ++i) {
            if (!(w[i] >= 0) || !std::isfinite(w[i]))
                throw std::invalid_argument("HntcProblem: weights must be finite and >= 0");
            if (!std::isfinite(t[i])) throw std::invalid_argument("HntcProblem: non-finite data");
        }
    }
};

struct HntcState {
    Tensor x;
    std::vector<Tensor> y;
    std::vector<Tensor> z;
    double mu = 0.0;
    std::size_t iter = 0;
    /// Data scale factor the state is expressed in (1 when not normalized).
    double scale = 1.0;
};

struct TraceRow {
    std::size_t iter;
    double primal_gap;
    double constraint_value;
    double mu;
};

struct HntcResult {
    Tensor x;
    HntcState state;
    std::size_t iterations = 0;
    bool converged = false;
    double primal_gap = 0.0;
    /// sum W (T - X)^2 - eta, in the caller's units.
    double constraint_value = 0.0;
    /// Largest relative residual seen over all X-subproblem solves.
    double max_x_residual = 0.0;
    std::vector<TraceRow> trace;
};

/// sum_psi W(psi) (T(psi) - X(psi))^2
inline double weighted_sq_error(const Tensor &t, const Tensor &w, const Tensor &x) {
    double s = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double d = t[i] - x[i];
        s += w[i] * d * d;
    }
    return s;
}

inline HntcState cold_state(const HntcProblem &p) {
    HntcState s;
    s.x = p.t;
    s.y.assign(p.config.n2, p.t);
    s.z.assign(p.config.n2, Tensor(p.t.shape()));
    return s;
}

/// X-subproblem: one SPD solve per beam tuple against a shared stencil.
class XUpdater {
  public:
    static constexpr double kResidualTol = 1e-8;

    explicit XUpdater(const HntcProblem &p)
        : op_{build_a_operator(p.grid_shape(), std::max<std::size_t>(p.config.n2, 1),
                               p.config.lambda, p.config.gamma)},
          solver_{op_} {}

    Tensor operator()(const HntcProblem &p, const HntcState &s) {
        const auto &cfg = p.config;
        const auto npos = static_cast<Eigen::Index>(p.npos());
        const auto nbeam = static_cast<Eigen::Index>(p.nbeam());
        auto T = p.t.as_matrix(cfg.n1);
        auto W = p.w.as_matrix(cfg.n1);
        Tensor out(p.t.shape());
        auto X = out.as_matrix(cfg.n1);
        last_max_residual_ = 0.0;
        Vector shift(npos), rhs(npos), col(npos);
        for (Eigen::Index b = 0; b < nbeam; ++b) {
            shift = 2.0 * s.mu * W.col(b);
            rhs = shift.cwiseProduct(T.col(b));
            if (cfg.n2 == 0) {
                // Pure smoothing: proximal term lambda/2 ||X - X_prev||^2 keeps the
                // system definite while mu is still zero.
                rhs += cfg.lambda * s.x.as_matrix(cfg.n1).col(b);
            }
            for (std::size_t k = 0; k < cfg.n2; ++k)
                rhs += cfg.lambda * s.y[k].as_matrix(cfg.n1).col(b) + s.z[k].as_matrix(cfg.n1).col(b);
            col = solver_.solve(shift, rhs);
            const double rn = rhs.norm();
            Vector r = op_.base * col + shift.cwiseProduct(col) - rhs;
            const double rr = rn > 0 ? r.norm() / rn : r.norm();
            last_max_residual_ = std::max(last_max_residual_, rr);
            if (!(rr <= kResidualTol))
                throw SolverError("x_update: relative residual " + std::to_string(rr) +
                                  " above tolerance at beam " + std::to_string(b));
            X.col(b) = col;
        }
        return out;
    }

    double last_max_residual() const { return last_max_residual_; }
    const SpdOperator &op() const { return op_; }

  private:
    SpdOperator op_;
    ShiftedSpdSolver solver_;
    double last_max_residual_ = 0.0;
};

inline Tensor x_update(const HntcProblem &p, const HntcState &s) {
    XUpdater upd(p);
    return upd(p, s);
}

/// Y_k <- per position, fold_k(D_{alpha_k/lambda}(unfold_k(X - Z_k/lambda))).
inline std::vector<Tensor> y_update(const HntcProblem &p, const HntcState &s) {
    const auto &cfg = p.config;
    const auto alphas = cfg.alphas();
    const Shape beam = p.beam_shape();
    const auto npos = static_cast<Eigen::Index>(p.npos());
    const auto nbeam = static_cast<Eigen::Index>(p.nbeam());
    auto X = s.x.as_matrix(cfg.n1);
    std::vector<Tensor> out;
    out.reserve(cfg.n2);
    Tensor slice(beam);
    for (std::size_t k = 0; k < cfg.n2; ++k) {
        Tensor yk(p.t.shape());
        auto Y = yk.as_matrix(cfg.n1);
        auto Z = s.z[k].as_matrix(cfg.n1);
        const double tau = alphas[k] / cfg.lambda;
        for (Eigen::Index i = 0; i < npos; ++i) {
            for (Eigen::Index b = 0; b < nbeam; ++b)
                slice[static_cast<std::size_t>(b)] = X(i, b) - Z(i, b) / cfg.lambda;
            const Tensor shrunk = fold(svt(unfold(slice, k), tau), k, beam);
            for (Eigen::Index b = 0; b < nbeam; ++b) Y(i, b) = shrunk[static_cast<std::size_t>(b)];
        }
        out.push_back(std::move(yk));
    }
    return out;
}

/// Z_k <- Z_k + beta1 (Y_k - X)
inline std::vector<Tensor> z_update(const HntcState &s, double beta1) {
    std::vector<Tensor> out = s.z;
    for (std::size_t k = 0; k < out.size(); ++k) {
        auto &zk = out[k];
        const auto &yk = s.y[k];
        for (std::size_t i = 0; i < zk.size(); ++i) zk[i] += beta1 * (yk[i] - s.x[i]);
    }
    return out;
}

/// mu <- max(0, mu + beta2 (sum W (T - X)^2 - target)), target defaults to eta.
inline double mu_update(const HntcProblem &p, const HntcState &s, double beta2,
                        std::optional<double> target = std::nullopt) {
    const double v = weighted_sq_error(p.t, p.w, s.x) - target.value_or(p.config.eta);
    return std::max(0.0, s.mu + beta2 * v);
}

inline double primal_gap(const HntcState &s) {
    double g = 0.0;
    for (const auto &yk : s.y) g += frobenius(s.x - yk);
    return g;
}

/// Effective mu step for a (possibly normalized) problem.
inline double step_mu(const HntcProblem &p) {
    if (p.config.beta2) return *p.config.beta2;
    const double energy = weighted_sq_error(p.t, p.w, Tensor(p.t.shape()));
    if (!(energy > 0)) return p.config.beta2_rel;
    const double eta_rel = std::max(p.config.eta / energy, 1e-12);
    return p.config.beta2_rel / eta_rel;
}

namespace detail {

inline double data_scale(const HntcProblem &p) {
    if (!p.config.normalize) return 1.0;
    const double m = weighted_sq_error(p.t, p.w, Tensor(p.t.shape()));
    const double wsum = std::accumulate(p.w.values().begin(), p.w.values().end(), 0.0);
    if (!(m > 0) || !(wsum > 0)) return 1.0;
    return 1.0 / std::sqrt(m / wsum);
}

inline HntcResult run(const HntcProblem &orig, HntcState state) {
    orig.validate();
    const double c = state.scale;
    HntcProblem p = orig;
    if (c != 1.0) {
        p.t *= c;
        p.config.eta = orig.config.eta * c * c;
    }
    const auto &cfg = p.config;
    const double eps = cfg.epsilon ? *cfg.epsilon * c : cfg.epsilon_rel * frobenius(p.t);
    const double beta2 = step_mu(p);

    XUpdater xupd(p);
    HntcResult res;
    double gap = std::numeric_limits<double>::infinity();
    double iota = std::numeric_limits<double>::infinity();
    std::size_t it = 0;
    while ((gap >= eps || iota > 0) && it < cfg.max_iter) {
        Tensor x_new = xupd(p, state);
        res.max_x_residual = std::max(res.max_x_residual, xupd.last_max_residual());
        if (cfg.n2 == 0) gap = frobenius(x_new - state.x);
        state.x = std::move(x_new);
        state.y = y_update(p, state);
        state.z = z_update(state, cfg.step_z());
        state.mu = mu_update(p, state, beta2, (1.0 - cfg.eta_margin) * cfg.eta);
        if (cfg.n2 > 0) gap = primal_gap(state);
        iota = weighted_sq_error(p.t, p.w, state.x) - cfg.eta;
        ++it;
        state.iter += 1;
        if (cfg.record_trace) res.trace.push_back({it, gap / c, iota / (c * c), state.mu});
    }
    res.iterations = it;
    res.converged = gap < eps && iota <= 0;
    res.primal_gap = gap / c;
    res.constraint_value = iota / (c * c);
    res.x = state.x;
    if (c != 1.0) res.x *= 1.0 / c;
    res.state = std::move(state);
    return res;
}

} // namespace detail

/// Cold start: X = Y_k = T, Z_k = 0, mu = 0.
inline HntcResult solve(const HntcProblem &p) {
    p.validate();
    const double c = detail::data_scale(p);
    HntcState s = cold_state(p);
    if (c != 1.0) {
        s.x *= c;
        for (auto &y : s.y) y *= c;
    }
    s.scale = c;
    return detail::run(p, std::move(s));
}

/// Warm start from a previous solve: Y_k, Z_k and mu carry over; X starts from
/// the previous X (its value is overwritten by the first X-update).
inline HntcResult solve_warm(const HntcProblem &p, const HntcState &prior) {
    p.validate();
    if (prior.x.shape() != p.t.shape() || prior.y.size() != p.config.n2 ||
        prior.z.size() != p.config.n2)
        throw std::invalid_argument("solve_warm: prior state does not match problem");
    for (std::size_t k = 0; k < p.config.n2; ++k)
        if (prior.y[k].shape() != p.t.shape() || prior.z[k].shape() != p.t.shape())
            throw std::invalid_argument("solve_warm: prior state does not match problem");
    const double c = detail::data_scale(p);
    HntcState s = prior;
    const double ratio = c / prior.scale;
    if (ratio != 1.0) {
        s.x *= ratio;
        for (auto &y : s.y) y *= ratio;
    }
    s.scale = c;
    s.iter = 0;
    return detail::run(p, std::move(s));
}

inline void write_trace_csv(std::ostream &os, const std::vector<TraceRow> &trace) {
    os << "iter,primal_gap,constraint_value,mu\n";
    char buf[160];
    for (const auto &r : trace) {
        std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g,%.10g\n", r.iter, r.primal_gap,
                      r.constraint_value, r.mu);
        os << buf;
    }
}

} // namespace hntc
