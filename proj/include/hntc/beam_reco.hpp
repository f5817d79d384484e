// SPDX-License-Identifier: Apache-2.0
//
// Position-aided BS beam recommendation from a completed power tensor (BSS
// and its grouping variant G-BSS), the nearest-observed-position fingerprint
// baseline, and the beam-alignment metrics.
//
// Ties are broken toward the lexicographically smallest (u, v).

#pragma once

#include "hntc/channel.hpp"
#include "hntc/measurement_db.hpp"
#include "hntc/rng.hpp"
#include "hntc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace hntc {

struct RecoRequest {
    Point2 g;
    std::size_t n_tr = 1;
    double d = 0.0;
};

struct RecoResult {
    std::vector<Beam> beams;
    std::vector<double> scores;
};

/// Greedy top-n_tr selection over a (c_theta x c_phi) score map stored
/// u-fastest. Equivalent to a stable descending sort with lexicographic ties.
inline RecoResult select_top(std::span<const double> scores, std::size_t c_theta, std::size_t n_tr) {
    const std::size_t k = scores.size();
    if (n_tr < 1 || n_tr > k)
        throw std::invalid_argument("select_top: n_tr must be in [1, |K|]");
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    auto lex = [&](std::size_t b) { return std::pair{b % c_theta, b / c_theta}; };
    std::partial_sort(order.begin(), order.begin() + static_cast<long>(n_tr), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          if (scores[a] != scores[b]) return scores[a] > scores[b];
                          return lex(a) < lex(b);
                      });
    RecoResult r;
    for (std::size_t i = 0; i < n_tr; ++i) {
        r.beams.push_back({order[i] % c_theta, order[i] / c_theta});
        r.scores.push_back(scores[order[i]]);
    }
    return r;
}

namespace detail {

inline void check_completed(const Tensor &t_c, const GridSpec &grid) {
    if (t_c.order() != 4 || t_c.dim(0) != grid.lx() || t_c.dim(1) != grid.ly())
        throw std::invalid_argument("completed tensor shape " + shape_string(t_c.shape()) +
                                    " does not match the grid");
}

inline std::vector<double> position_slice(const Tensor &t_c, std::size_t pos) {
    auto M = t_c.as_matrix(2);
    std::vector<double> s(static_cast<std::size_t>(M.cols()));
    for (Eigen::Index b = 0; b < M.cols(); ++b) s[static_cast<std::size_t>(b)] = M(static_cast<Eigen::Index>(pos), b);
    return s;
}

} // namespace detail

/// Beam subset selection at the label of the reported coordinate.
inline RecoResult bss(const Tensor &t_c, const GridSpec &grid, const RecoRequest &req) {
    detail::check_completed(t_c, grid);
    const Label p = pos_label(grid, req.g);
    const auto slice = detail::position_slice(t_c, label_index(grid, p));
    return select_top(slice, t_c.dim(2), req.n_tr);
}

/// Labels whose cell (clipped to the area) intersects the disk of radius
/// `radius` around g.
inline std::vector<Label> labels_within(const GridSpec &grid, Point2 g, double radius) {
    if (radius <= 0) return {pos_label(grid, g)};
    std::vector<Label> out;
    const double h = grid.delta_s / 2;
    for (std::size_t py = 0; py < grid.ly(); ++py)
        for (std::size_t px = 0; px < grid.lx(); ++px) {
            const Point2 c = grid.center({px, py});
            const double lox = std::max(c.x - h, grid.x0), hix = std::min(c.x + h, grid.x_end);
            const double loy = std::max(c.y - h, grid.y0), hiy = std::min(c.y + h, grid.y_end);
            const Point2 q{std::clamp(g.x, lox, hix), std::clamp(g.y, loy, hiy)};
            if (distance(q, g) <= radius) out.push_back({px, py});
        }
    if (out.empty()) throw std::invalid_argument("labels_within: empty position group");
    return out;
}

/// Grouping-based BSS: greedy selection on the slice averaged over every label
/// reachable within zeta * d of the reported coordinate.
inline RecoResult gbss(const Tensor &t_c, const GridSpec &grid, const RecoRequest &req,
                       double zeta = 0.4) {
    detail::check_completed(t_c, grid);
    if (req.d < 0) throw std::invalid_argument("gbss: negative error radius");
    if (!grid.area().contains(req.g)) throw std::out_of_range("gbss: coordinate outside the area");
    if (req.d == 0) return bss(t_c, grid, req);
    const auto group = labels_within(grid, req.g, zeta * req.d);
    auto M = t_c.as_matrix(2);
    std::vector<double> mean(static_cast<std::size_t>(M.cols()), 0.0);
    for (const auto &p : group) {
        const auto i = static_cast<Eigen::Index>(label_index(grid, p));
        for (Eigen::Index b = 0; b < M.cols(); ++b) mean[static_cast<std::size_t>(b)] += M(i, b);
    }
    for (auto &m : mean) m /= static_cast<double>(group.size());
    return select_top(mean, t_c.dim(2), req.n_tr);
}

/// Fingerprint baseline: stored beams of the nearest observed label ranked by
/// r_bar; further observed labels (by distance, then label order) fill in when
/// the nearest one holds fewer than n_tr beams, then unused beams in (u, v)
/// order.
inline RecoResult type_b_baseline(const MeasurementDb &db, const GridSpec &grid,
                                  const ArraySpec &bs, const RecoRequest &req) {
    if (db.empty()) throw std::invalid_argument("type_b_baseline: empty database");
    const std::size_t k = bs.beams();
    if (req.n_tr < 1 || req.n_tr > k) throw std::invalid_argument("type_b_baseline: n_tr out of range");
    const Label q = pos_label(grid, req.g);
    std::vector<Label> observed;
    for (const auto &p : db.observed_positions()) observed.push_back(p);
    auto d2 = [&](Label p) {
        const double dx = static_cast<double>(p.px) - static_cast<double>(q.px);
        const double dy = static_cast<double>(p.py) - static_cast<double>(q.py);
        return dx * dx + dy * dy;
    };
    std::stable_sort(observed.begin(), observed.end(),
                     [&](Label a, Label b) { return d2(a) < d2(b); });
    RecoResult r;
    std::vector<bool> used(k, false);
    for (const auto &p : observed) {
        std::vector<std::pair<Beam, double>> stored;
        auto lo = db.records().lower_bound({p, {0, 0}});
        for (auto it = lo; it != db.records().end() && it->first.p == p; ++it)
            stored.emplace_back(it->first.b, it->second.r_bar);
        std::stable_sort(stored.begin(), stored.end(), [](const auto &a, const auto &b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        for (const auto &[b, rb] : stored) {
            const std::size_t col = b.u + bs.c_theta * b.v;
            if (used[col]) continue;
            used[col] = true;
            r.beams.push_back(b);
            r.scores.push_back(rb);
            if (r.beams.size() == req.n_tr) return r;
        }
    }
    for (std::size_t u = 0; u < bs.c_theta && r.beams.size() < req.n_tr; ++u)
        for (std::size_t v = 0; v < bs.c_phi && r.beams.size() < req.n_tr; ++v)
            if (!used[u + bs.c_theta * v]) {
                used[u + bs.c_theta * v] = true;
                r.beams.push_back({u, v});
                r.scores.push_back(0.0);
            }
    return r;
}

/// Uniform draw on the closed disk of radius d around g.
inline Point2 perturb_position(Point2 g, double d, std::mt19937_64 &rng) {
    if (d < 0) throw std::invalid_argument("perturb_position: negative radius");
    if (d == 0) return g;
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const double r = d * std::sqrt(u01(rng));
    const double a = 2 * std::numbers::pi * u01(rng);
    return {g.x + r * std::cos(a), g.y + r * std::sin(a)};
}

using RecoFn = std::function<RecoResult(Point2 reported, std::size_t n_tr)>;

struct PowerLossEstimate {
    std::size_t n_tr = 0;
    double probability = 0.0;
    std::size_t samples = 0;
    /// Per sample: best noiseless power in S divided by P_t ||H||_2^2. Only
    /// filled when requested.
    std::vector<double> gain_ratios;
};

/// Power-loss probability for several set sizes at once. Greedy selection is
/// prefix-consistent, so one recommendation of max(n_tr_list) beams per sample
/// serves every size. Each trial reports every reference coordinate once,
/// displaced uniformly within `error_radius` and projected back onto the area;
/// a sample is a loss when the set misses the coordinate's best BS beam
/// (judged on noiseless powers).
inline std::vector<PowerLossEstimate>
power_loss_curve(const ChannelSnapshot &snap, const Area &area, std::size_t c_theta,
                 const RecoFn &reco, const std::vector<std::size_t> &n_tr_list, std::size_t trials,
                 double error_radius, std::uint64_t seed, bool keep_gains = false) {
    if (trials < 1) throw std::invalid_argument("power_loss_curve: trials must be >= 1");
    if (c_theta < 1 || snap.nbeams() % c_theta != 0)
        throw std::invalid_argument("power_loss_curve: c_theta does not divide |K|");
    if (n_tr_list.empty()) return {};
    const std::size_t n_max = *std::max_element(n_tr_list.begin(), n_tr_list.end());
    std::vector<PowerLossEstimate> out(n_tr_list.size());
    std::vector<std::size_t> losses(n_tr_list.size(), 0);
    for (std::size_t j = 0; j < out.size(); ++j) out[j].n_tr = n_tr_list[j];
    std::mt19937_64 rng(mix_seed(seed, 0x910c));
    std::vector<double> prefix_best(n_max);
    for (std::size_t t = 0; t < trials; ++t)
        for (std::size_t c = 0; c < snap.ncoords(); ++c) {
            const Point2 rep = area.clamp(perturb_position(snap.coords[c], error_radius, rng));
            const auto res = reco(rep, n_max);
            const auto row = snap.power.row(static_cast<Eigen::Index>(c));
            const double best = row.maxCoeff();
            double got = 0;
            for (std::size_t i = 0; i < n_max; ++i) {
                const auto &b = res.beams.at(i);
                got = std::max(got, row(static_cast<Eigen::Index>(b.u + c_theta * b.v)));
                prefix_best[i] = got;
            }
            for (std::size_t j = 0; j < out.size(); ++j) {
                const double g = prefix_best[out[j].n_tr - 1];
                losses[j] += g < best;
                if (keep_gains) out[j].gain_ratios.push_back(g / (snap.p_t * snap.h_norm2[c]));
            }
        }
    const std::size_t n = trials * snap.ncoords();
    for (std::size_t j = 0; j < out.size(); ++j) {
        out[j].samples = n;
        out[j].probability = static_cast<double>(losses[j]) / static_cast<double>(n);
    }
    return out;
}

inline PowerLossEstimate power_loss_probability(const ChannelSnapshot &snap, const Area &area,
                                                std::size_t c_theta, const RecoFn &reco,
                                                std::size_t n_tr, std::size_t trials,
                                                double error_radius, std::uint64_t seed) {
    return power_loss_curve(snap, area, c_theta, reco, {n_tr}, trials, error_radius, seed).front();
}

struct SpectralEfficiency {
    double t_train = 0;
    double f_comm = 0;
    double se = 0;
    bool feasible = true;
};

/// SE = f_comm log2(1 + SNR_r * gain_ratio) with T_train = (n_tr |F| + 1) delta_S
/// and f_comm = (T_frame - T_train) / T_frame; zero and infeasible when the
/// training overhead reaches the frame duration.
inline SpectralEfficiency spectral_efficiency(double snr_r_db, double gain_ratio, std::size_t n_tr,
                                              std::size_t f_size, double delta_slot = 10e-6,
                                              double t_frame = 10e-3) {
    SpectralEfficiency out;
    out.t_train = static_cast<double>(n_tr * f_size + 1) * delta_slot;
    if (out.t_train >= t_frame) {
        out.feasible = false;
        return out;
    }
    out.f_comm = (t_frame - out.t_train) / t_frame;
    out.se = out.f_comm * std::log2(1.0 + std::pow(10.0, snr_r_db / 10.0) * gain_ratio);
    return out;
}

/// Sample mean of f_comm log2(1 + SNR_r g) over per-sample gain ratios.
inline SpectralEfficiency mean_spectral_efficiency(double snr_r_db, std::span<const double> gains,
                                                   std::size_t n_tr, std::size_t f_size,
                                                   double delta_slot = 10e-6,
                                                   double t_frame = 10e-3) {
    if (gains.empty()) throw std::invalid_argument("mean_spectral_efficiency: no samples");
    SpectralEfficiency out = spectral_efficiency(snr_r_db, 0.0, n_tr, f_size, delta_slot, t_frame);
    if (!out.feasible) return out;
    const double snr = std::pow(10.0, snr_r_db / 10.0);
    double acc = 0;
    for (double g : gains) acc += std::log2(1.0 + snr * g);
    out.se = out.f_comm * acc / static_cast<double>(gains.size());
    return out;
}

} // namespace hntc
