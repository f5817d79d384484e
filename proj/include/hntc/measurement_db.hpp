// SPDX-License-Identifier: Apache-2.0
//
// Position-labelled measurement database: discounted running averages of the
// best-UE received power per (position label, BS beam), and the data, count
// and weight tensors built from it.
//
// Labels and beam indices are 0-based in code; the database file uses the
// 1-based (p_x, p_y, u, v, r_bar, n_bar) row layout.

#pragma once

#include "hntc/channel.hpp"
#include "hntc/rng.hpp"
#include "hntc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

namespace hntc {

struct Label {
    std::size_t px = 0, py = 0;
    auto operator<=>(const Label &) const = default;
};

struct Beam {
    std::size_t u = 0, v = 0;
    auto operator<=>(const Beam &) const = default;
};

struct GridSpec {
    double x0 = 10, x_end = 60, y0 = -25, y_end = 25;
    double delta_s = 5;

    // Both rectangle edges map to a label, so the count is one more than the
    // number of delta_s steps spanning the side.
    std::size_t lx() const { return steps(x_end - x0) + 1; }
    std::size_t ly() const { return steps(y_end - y0) + 1; }
    std::size_t npos() const { return lx() * ly(); }
    Area area() const { return {x0, x_end, y0, y_end}; }

    /// Label center coordinate.
    Point2 center(Label p) const {
        return {x0 + static_cast<double>(p.px) * delta_s, y0 + static_cast<double>(p.py) * delta_s};
    }

    void validate() const {
        if (!(delta_s > 0)) throw std::invalid_argument("GridSpec: delta_s must be > 0");
        if (!(x_end > x0) || !(y_end > y0)) throw std::invalid_argument("GridSpec: empty rectangle");
    }

    static GridSpec from_scene(const Scene &s) {
        return {s.area.x0, s.area.x_end, s.area.y0, s.area.y_end, s.delta_s};
    }

  private:
    std::size_t steps(double span) const {
        return static_cast<std::size_t>(std::ceil(span / delta_s - 1e-9));
    }
};

/// Closest label: (round((g_x - X0)/delta_s), round((g_y - Y0)/delta_s)).
inline Label pos_label(const GridSpec &grid, Point2 g) {
    if (!grid.area().contains(g))
        throw std::out_of_range("pos_label: coordinate (" + std::to_string(g.x) + ", " +
                                std::to_string(g.y) + ") outside the area");
    auto lab = [](double off, double step, std::size_t n) {
        const auto r = static_cast<long>(std::floor(std::max(0.0, off) / step + 0.5));
        return std::min<std::size_t>(static_cast<std::size_t>(r), n - 1);
    };
    return {lab(g.x - grid.x0, grid.delta_s, grid.lx()), lab(g.y - grid.y0, grid.delta_s, grid.ly())};
}

/// Linear position index consistent with the leading (L_x, L_y) tensor dims.
inline std::size_t label_index(const GridSpec &grid, Label p) { return p.px + grid.lx() * p.py; }

struct DbKey {
    Label p;
    Beam b;
    auto operator<=>(const DbKey &) const = default;
};

struct DbRecord {
    double r_bar = 0.0;
    /// Weighted count as of the record's last update.
    double n_bar = 0.0;
    std::uint64_t last = 0;
};

/// Every record() call is one timeslot; the discount alpha is applied per
/// elapsed timeslot, so keys not measured in a slot decay as well.
class MeasurementDb {
  public:
    explicit MeasurementDb(double alpha = 1.0) : alpha_{alpha} {
        if (!(alpha > 0 && alpha <= 1))
            throw std::invalid_argument("MeasurementDb: alpha must be in (0, 1]");
    }

    double alpha() const { return alpha_; }
    std::uint64_t now() const { return now_; }
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }

    const DbRecord &record(Label p, Beam b, double r) {
        if (!(r >= 0) || !std::isfinite(r))
            throw std::invalid_argument("MeasurementDb::record: power must be finite and >= 0");
        ++now_;
        auto &rec = records_[{p, b}];
        rec.n_bar = decay(rec) * rec.n_bar + 1.0;
        rec.r_bar += (r - rec.r_bar) / rec.n_bar;
        rec.last = now_;
        return rec;
    }

    /// Inserts a record as-is at the current time (file loading).
    void put(Label p, Beam b, double r_bar, double n_bar) {
        if (!(n_bar > 0) || !(r_bar >= 0))
            throw std::invalid_argument("MeasurementDb::put: need n_bar > 0 and r_bar >= 0");
        records_[{p, b}] = {r_bar, n_bar, now_};
    }

    /// N_bar discounted to the current time.
    double weighted_count(const DbKey &k) const {
        auto it = records_.find(k);
        if (it == records_.end()) return 0.0;
        return decay(it->second) * it->second.n_bar;
    }

    const std::map<DbKey, DbRecord> &records() const { return records_; }

    std::set<Label> observed_positions() const {
        std::set<Label> s;
        for (const auto &[k, r] : records_) s.insert(k.p);
        return s;
    }

  private:
    double decay(const DbRecord &rec) const {
        if (alpha_ == 1.0 || rec.n_bar == 0.0) return 1.0;
        return std::pow(alpha_, static_cast<double>(now_ - rec.last));
    }

    double alpha_;
    std::uint64_t now_ = 0;
    std::map<DbKey, DbRecord> records_;
};

struct DataTensors {
    Tensor t; ///< r_bar on observed entries, 0 elsewhere
    Tensor v; ///< weighted counts
    Tensor w; ///< v / sum(v)
};

inline DataTensors build_tensors(const MeasurementDb &db, const GridSpec &grid,
                                 const ArraySpec &bs) {
    if (db.empty()) throw std::invalid_argument("build_tensors: empty database");
    const Shape shape{grid.lx(), grid.ly(), bs.c_theta, bs.c_phi};
    DataTensors out{Tensor(shape), Tensor(shape), Tensor(shape)};
    double total = 0.0;
    for (const auto &[k, rec] : db.records()) {
        const std::array<std::size_t, 4> idx{k.p.px, k.p.py, k.b.u, k.b.v};
        const double n = db.weighted_count(k);
        out.t.at(idx) = rec.r_bar;
        out.v.at(idx) = n;
        total += n;
    }
    for (std::size_t i = 0; i < out.w.size(); ++i) out.w[i] = out.v[i] / total;
    return out;
}

/// Weights uniform over the observed set (ablation of the count weighting).
inline Tensor uniform_weights(const Tensor &v) {
    Tensor w(v.shape());
    std::size_t n = 0;
    for (std::size_t i = 0; i < v.size(); ++i) n += v[i] > 0;
    if (n == 0) return w;
    for (std::size_t i = 0; i < v.size(); ++i) w[i] = v[i] > 0 ? 1.0 / static_cast<double>(n) : 0.0;
    return w;
}

/// Round half up; used for every fraction-to-count conversion.
inline std::size_t fraction_count(double fraction, std::size_t total) {
    return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(total) + 0.5));
}

/// ceil(k_op * L_x L_y) labels drawn uniformly without replacement, sorted.
inline std::vector<Label> choose_positions(const GridSpec &grid, double k_op, std::uint64_t seed) {
    if (!(k_op > 0 && k_op <= 1)) throw std::invalid_argument("choose_positions: k_op must be in (0, 1]");
    const std::size_t n = grid.npos();
    const auto count = std::min(n, static_cast<std::size_t>(std::ceil(k_op * static_cast<double>(n) - 1e-9)));
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(mix_seed(seed, 0x9051));
    // Partial Fisher-Yates with explicit draws keeps the result independent of
    // the standard library's shuffle implementation.
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng() % (n - i));
        std::swap(idx[i], idx[j]);
    }
    std::vector<Label> out;
    for (std::size_t i = 0; i < count; ++i) out.push_back({idx[i] % grid.lx(), idx[i] / grid.lx()});
    std::sort(out.begin(), out.end(), [&](Label a, Label b) {
        return label_index(grid, a) < label_index(grid, b);
    });
    return out;
}

enum class TopRanking { Measured, Noiseless };

struct SamplingOptions {
    /// Fraction of BS beams stored per observed coordinate.
    double top_fraction = 0.1;
    TopRanking ranking = TopRanking::Measured;
    MeasurementParams noise;
};

/// Measures every reference coordinate mapped to one of `positions` and
/// records its top beams. Noise draws are keyed by (seed, coordinate, beam).
inline void ingest_positions(MeasurementDb &db, const ChannelSnapshot &snap, const GridSpec &grid,
                             const std::vector<Label> &positions, const SamplingOptions &opt,
                             std::uint64_t seed, const ArraySpec &bs) {
    opt.noise.validate();
    if (!(opt.top_fraction > 0 && opt.top_fraction <= 1))
        throw std::invalid_argument("ingest_positions: top_fraction must be in (0, 1]");
    const std::set<Label> wanted(positions.begin(), positions.end());
    const std::size_t nbeam = snap.nbeams();
    const std::size_t keep = std::max<std::size_t>(1, fraction_count(opt.top_fraction, nbeam));
    std::vector<double> measured(nbeam);
    std::vector<std::size_t> order(nbeam);
    for (std::size_t c = 0; c < snap.ncoords(); ++c) {
        const Label p = pos_label(grid, snap.coords[c]);
        if (!wanted.count(p)) continue;
        const double sigma2 = opt.noise.noise_variance(snap.h_norm2[c]);
        const double amp_scale = std::sqrt(opt.noise.p_t / snap.p_t);
        for (std::size_t b = 0; b < nbeam; ++b) {
            std::mt19937_64 rng(mix_seed(seed, 0x3ea5, c, b));
            const ComplexVector amp =
                amp_scale * snap.amplitudes[c].row(static_cast<Eigen::Index>(b)).transpose();
            measured[b] = best_ue_power(amp, sigma2, rng);
        }
        const auto &rank_by = [&]() -> std::vector<double> {
            if (opt.ranking == TopRanking::Measured) return measured;
            std::vector<double> v(nbeam);
            for (std::size_t b = 0; b < nbeam; ++b)
                v[b] = snap.power(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(b));
            return v;
        }();
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return rank_by[a] > rank_by[b]; });
        for (std::size_t i = 0; i < keep; ++i) {
            const std::size_t b = order[i];
            db.record(p, {b % bs.c_theta, b / bs.c_theta}, measured[b]);
        }
    }
}

inline MeasurementDb sample_observations(const ChannelSnapshot &snap, const GridSpec &grid,
                                         const ArraySpec &bs, double k_op, double alpha,
                                         const SamplingOptions &opt, std::uint64_t seed) {
    MeasurementDb db(alpha);
    ingest_positions(db, snap, grid, choose_positions(grid, k_op, seed), opt, seed, bs);
    return db;
}

/// Ground truth: per label, the mean noiseless best-UE power over the
/// reference coordinates mapped to it.
inline Tensor truth_tensor(const ChannelSnapshot &snap, const GridSpec &grid, const ArraySpec &bs) {
    const Shape shape{grid.lx(), grid.ly(), bs.c_theta, bs.c_phi};
    Tensor t(shape);
    std::vector<std::size_t> count(grid.npos(), 0);
    auto M = t.as_matrix(2);
    for (std::size_t c = 0; c < snap.ncoords(); ++c) {
        const auto i = label_index(grid, pos_label(grid, snap.coords[c]));
        M.row(static_cast<Eigen::Index>(i)) += snap.power.row(static_cast<Eigen::Index>(c));
        ++count[i];
    }
    for (std::size_t i = 0; i < count.size(); ++i)
        if (count[i]) M.row(static_cast<Eigen::Index>(i)) /= static_cast<double>(count[i]);
    return t;
}

inline void write_db(std::ostream &os, const MeasurementDb &db) {
    os << "p_x,p_y,u,v,r_bar,n_bar\n";
    char buf[200];
    for (const auto &[k, rec] : db.records()) {
        std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%zu,%.17g,%.17g\n", k.p.px + 1, k.p.py + 1,
                      k.b.u + 1, k.b.v + 1, rec.r_bar, db.weighted_count(k));
        os << buf;
    }
}

inline MeasurementDb read_db(std::istream &is, double alpha = 1.0) {
    MeasurementDb db(alpha);
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("read_db: empty file");
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ss(line);
        std::size_t px, py, u, v;
        double r, n;
        if (!(ss >> px >> py >> u >> v >> r >> n) || px == 0 || py == 0 || u == 0 || v == 0)
            throw std::runtime_error("read_db: malformed row at line " + std::to_string(lineno));
        db.put({px - 1, py - 1}, {u - 1, v - 1}, r, n);
    }
    return db;
}

inline void save_db(const std::string &path, const MeasurementDb &db) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path);
    write_db(os, db);
}

inline MeasurementDb load_db(const std::string &path, double alpha = 1.0) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    return read_db(is, alpha);
}

} // namespace hntc
