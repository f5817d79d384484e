// SPDX-License-Identifier: Apache-2.0
//
// Experiment pipelines on synthetic scenes: RSE sweeps, beam-alignment
// curves, the warm-start study and the noisy-position study. Every experiment
// is a pure function of its config; rows come back ordered by (parameters,
// metric, seed) followed by per-group summaries.

#pragma once

#include "hntc/beam_reco.hpp"
#include "hntc/channel.hpp"
#include "hntc/hntc.hpp"
#include "hntc/measurement_db.hpp"
#include "hntc/rng.hpp"
#include "hntc/tensor.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace hntc {

inline constexpr const char *kVersion = "0.1.0";

/// How the noise budget eta is chosen for each solve.
struct EtaRule {
    /// Absolute eta for every solve; disables the automatic rule.
    std::optional<double> fixed;
    /// Floor relative to the weighted data energy sum W T^2.
    double rel_floor = 1e-7;
    /// Multiplier on the estimated weighted variance of the averaged measurements.
    double noise_factor = 8.0;
};

struct ExperimentConfig {
    std::optional<std::string> scene_file;
    bool full_profile = false;
    double delta_s = 5.0;
    ArraySpec bs{8, 8, 8, 8};
    ArraySpec ue{2, 2, 2, 2};
    double p_t = 1.0;
    std::vector<double> k_op{0.2, 0.4, 0.6, 0.8};
    std::vector<double> k_tr{0.02, 0.05, 0.1, 0.2, 0.5, 1.0};
    std::optional<double> snr_r_db;
    double alpha = 1.0;
    double top_fraction = 0.1;
    /// "count" (W proportional to the weighted counts) and/or "uniform".
    std::vector<std::string> weightings{"count"};
    HntcConfig hntc;
    EtaRule eta;
    std::size_t trials = 1;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    std::string output_dir = "out";
    // Beam alignment.
    double beam_k_op = 0.4;
    double se_k_tr = 0.02;
    std::vector<double> se_snr_db{-10, -5, 0, 5, 10, 15, 20, 25, 30};
    // Noisy position study.
    std::vector<double> gps_d{0, 10, 20};
    double zeta = 0.4;
    // Warm start.
    double k_ini = 0.3;
    std::size_t n_upd = 5;
    std::size_t instants = 5;

    void validate() const {
        auto fail = [](const std::string &m) { throw std::invalid_argument("ExperimentConfig: " + m); };
        auto frac = [&](double v, const char *name) {
            if (!(v > 0 && v <= 1)) fail(std::string(name) + " entries must be in (0, 1]");
        };
        if (!(delta_s > 0)) fail("delta_s must be > 0");
        for (const auto *a : {&bs, &ue})
            if (!a->cy || !a->cz || !a->c_theta || !a->c_phi) fail("array sizes must be >= 1");
        if (!(p_t > 0)) fail("p_t must be > 0");
        if (k_op.empty()) fail("k_op list is empty");
        for (double v : k_op) frac(v, "k_op");
        for (double v : k_tr) frac(v, "k_tr");
        frac(beam_k_op, "beam_k_op");
        frac(se_k_tr, "se_k_tr");
        frac(top_fraction, "top_fraction");
        frac(k_ini, "k_ini");
        if (!(alpha > 0 && alpha <= 1)) fail("alpha must be in (0, 1]");
        for (const auto &w : weightings)
            if (w != "count" && w != "uniform") fail("unknown weighting '" + w + "'");
        if (trials < 1) fail("trials must be >= 1");
        if (seeds.empty()) fail("at least one seed is required");
        for (double d : gps_d)
            if (!(d >= 0)) fail("gps_d entries must be >= 0");
        if (!(zeta >= 0)) fail("zeta must be >= 0");
        if (instants < 1) fail("instants must be >= 1");
        if (eta.fixed && !(*eta.fixed >= 0)) fail("eta must be >= 0");
        if (!(eta.rel_floor >= 0) || !(eta.noise_factor >= 0)) fail("eta rule factors must be >= 0");
        HntcConfig h = hntc;
        h.n1 = 2;
        h.n2 = 2;
        h.validate();
    }
};

// ---------------------------------------------------------------- config IO

inline nlohmann::json to_json(const HntcConfig &c) {
    nlohmann::json j{{"gamma", c.gamma},           {"lambda", c.lambda},   {"beta2_rel", c.beta2_rel},
                     {"eta_margin", c.eta_margin},
                     {"epsilon_rel", c.epsilon_rel}, {"max_iter", c.max_iter}, {"normalize", c.normalize},
                     {"alpha", c.alpha}};
    if (c.beta1) j["beta1"] = *c.beta1;
    if (c.beta2) j["beta2"] = *c.beta2;
    if (c.epsilon) j["epsilon"] = *c.epsilon;
    return j;
}

inline nlohmann::json to_json(const ExperimentConfig &c) {
    nlohmann::json j{{"full_profile", c.full_profile},
                     {"delta_s", c.delta_s},
                     {"bs", to_json(c.bs)},
                     {"ue", to_json(c.ue)},
                     {"p_t", c.p_t},
                     {"k_op", c.k_op},
                     {"k_tr", c.k_tr},
                     {"alpha", c.alpha},
                     {"top_fraction", c.top_fraction},
                     {"weightings", c.weightings},
                     {"hntc", to_json(c.hntc)},
                     {"eta_rel_floor", c.eta.rel_floor},
                     {"eta_noise_factor", c.eta.noise_factor},
                     {"trials", c.trials},
                     {"seeds", c.seeds},
                     {"beam_k_op", c.beam_k_op},
                     {"se_k_tr", c.se_k_tr},
                     {"se_snr_db", c.se_snr_db},
                     {"gps_d", c.gps_d},
                     {"zeta", c.zeta},
                     {"k_ini", c.k_ini},
                     {"n_upd", c.n_upd},
                     {"instants", c.instants}};
    j["scene_file"] = c.scene_file ? nlohmann::json(*c.scene_file) : nlohmann::json(nullptr);
    j["snr_r_db"] = c.snr_r_db ? nlohmann::json(*c.snr_r_db) : nlohmann::json(nullptr);
    j["eta"] = c.eta.fixed ? nlohmann::json(*c.eta.fixed) : nlohmann::json(nullptr);
    return j;
}

namespace detail {

template <class T> void take(const nlohmann::json &j, const char *key, T &out) {
    if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

template <class T> void take_opt(const nlohmann::json &j, const char *key, std::optional<T> &out) {
    if (!j.contains(key)) return;
    if (j.at(key).is_null())
        out.reset();
    else
        out = j.at(key).get<T>();
}

inline void take_array(const nlohmann::json &j, const char *key, ArraySpec &a) {
    if (!j.contains(key)) return;
    const auto &v = j.at(key);
    take(v, "cy", a.cy);
    take(v, "cz", a.cz);
    take(v, "c_theta", a.c_theta);
    take(v, "c_phi", a.c_phi);
}

} // namespace detail

/// Overlays the keys present in `j` onto `c`; unknown keys are rejected.
inline void merge_config(ExperimentConfig &c, const nlohmann::json &j) {
    static const std::vector<std::string> known{
        "scene_file", "full_profile", "delta_s", "bs", "ue", "p_t", "k_op", "k_tr", "snr_r_db",
        "alpha", "top_fraction", "weightings", "hntc", "eta", "eta_rel_floor", "eta_noise_factor",
        "trials", "seeds", "output_dir", "beam_k_op", "se_k_tr", "se_snr_db", "gps_d", "zeta",
        "k_ini", "n_upd", "instants"};
    if (!j.is_object()) throw std::invalid_argument("config: top level must be an object");
    for (const auto &[k, v] : j.items())
        if (std::find(known.begin(), known.end(), k) == known.end())
            throw std::invalid_argument("config: unknown key '" + k + "'");
    using detail::take;
    detail::take_opt(j, "scene_file", c.scene_file);
    take(j, "full_profile", c.full_profile);
    take(j, "delta_s", c.delta_s);
    detail::take_array(j, "bs", c.bs);
    detail::take_array(j, "ue", c.ue);
    take(j, "p_t", c.p_t);
    take(j, "k_op", c.k_op);
    take(j, "k_tr", c.k_tr);
    detail::take_opt(j, "snr_r_db", c.snr_r_db);
    take(j, "alpha", c.alpha);
    take(j, "top_fraction", c.top_fraction);
    take(j, "weightings", c.weightings);
    if (j.contains("hntc")) {
        const auto &h = j.at("hntc");
        take(h, "gamma", c.hntc.gamma);
        take(h, "lambda", c.hntc.lambda);
        take(h, "beta2_rel", c.hntc.beta2_rel);
        take(h, "eta_margin", c.hntc.eta_margin);
        detail::take_opt(h, "beta2", c.hntc.beta2);
        take(h, "epsilon_rel", c.hntc.epsilon_rel);
        take(h, "max_iter", c.hntc.max_iter);
        take(h, "normalize", c.hntc.normalize);
        take(h, "alpha", c.hntc.alpha);
        detail::take_opt(h, "beta1", c.hntc.beta1);
        detail::take_opt(h, "epsilon", c.hntc.epsilon);
    }
    detail::take_opt(j, "eta", c.eta.fixed);
    take(j, "eta_rel_floor", c.eta.rel_floor);
    take(j, "eta_noise_factor", c.eta.noise_factor);
    take(j, "trials", c.trials);
    take(j, "seeds", c.seeds);
    take(j, "output_dir", c.output_dir);
    take(j, "beam_k_op", c.beam_k_op);
    take(j, "se_k_tr", c.se_k_tr);
    take(j, "se_snr_db", c.se_snr_db);
    take(j, "gps_d", c.gps_d);
    take(j, "zeta", c.zeta);
    take(j, "k_ini", c.k_ini);
    take(j, "n_upd", c.n_upd);
    take(j, "instants", c.instants);
}

inline ExperimentConfig load_config(const std::string &path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config " + path);
    ExperimentConfig c;
    merge_config(c, nlohmann::json::parse(is));
    return c;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string &s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string config_hash(const ExperimentConfig &c) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(to_json(c).dump())));
    return buf;
}

// ---------------------------------------------------------------- result rows

using Params = std::vector<std::pair<std::string, std::string>>;

struct ResultRow {
    std::string experiment;
    Params params;
    std::string metric;
    double value = 0;
    double mean = 0;
    double std_err = 0;
    std::size_t n = 1;
    /// Producing seed, or the ';'-joined seed list for a summary row.
    std::string seed;
    bool summary = false;
};

inline std::string fmt_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

inline std::string params_string(const Params &p) {
    std::string s;
    for (const auto &[k, v] : p) {
        if (!s.empty()) s += ' ';
        s += k + '=' + v;
    }
    return s;
}

struct MeanStderr {
    double mean = 0, std_err = 0;
    std::size_t n = 0;
};

inline MeanStderr mean_stderr(const std::vector<double> &v) {
    MeanStderr m;
    m.n = v.size();
    if (v.empty()) return m;
    m.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0;
        for (double x : v) ss += (x - m.mean) * (x - m.mean);
        m.std_err = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
    }
    return m;
}

/// Per-seed rows grouped by (params, metric) in first-seen order, each group
/// sorted by seed position, then one summary row per group.
class RowCollector {
  public:
    RowCollector(std::string experiment, std::vector<std::uint64_t> seeds)
        : experiment_{std::move(experiment)}, seeds_{std::move(seeds)} {}

    void add(std::size_t seed_index, const Params &params, const std::string &metric, double value) {
        const std::string key = params_string(params) + '\x1f' + metric;
        auto it = index_.find(key);
        if (it == index_.end()) {
            it = index_.emplace(key, groups_.size()).first;
            groups_.push_back({params, metric, {}});
        }
        groups_[it->second].values.emplace_back(seed_index, value);
    }

    std::vector<ResultRow> rows() const {
        std::vector<ResultRow> out;
        for (auto g : groups_) {
            std::stable_sort(g.values.begin(), g.values.end(),
                             [](const auto &a, const auto &b) { return a.first < b.first; });
            std::vector<double> vals;
            std::string seeds;
            for (const auto &[si, v] : g.values) {
                ResultRow r{experiment_, g.params, g.metric, v, v, 0.0, 1, std::to_string(seeds_[si]), false};
                out.push_back(r);
                vals.push_back(v);
                if (!seeds.empty()) seeds += ';';
                seeds += std::to_string(seeds_[si]);
            }
            const auto ms = mean_stderr(vals);
            out.push_back({experiment_, g.params, g.metric, ms.mean, ms.mean, ms.std_err, ms.n, seeds, true});
        }
        return out;
    }

  private:
    struct Group {
        Params params;
        std::string metric;
        std::vector<std::pair<std::size_t, double>> values;
    };
    std::string experiment_;
    std::vector<std::uint64_t> seeds_;
    std::map<std::string, std::size_t> index_;
    std::vector<Group> groups_;
};

inline bool params_match(const Params &row, const Params &want) {
    for (const auto &w : want)
        if (std::find(row.begin(), row.end(), w) == row.end()) return false;
    return true;
}

/// Per-seed values of `metric` on rows whose params include `want`.
inline std::vector<double> seed_values(const std::vector<ResultRow> &rows, const std::string &metric,
                                       const Params &want) {
    std::vector<double> v;
    for (const auto &r : rows)
        if (!r.summary && r.metric == metric && params_match(r.params, want)) v.push_back(r.value);
    return v;
}

inline void write_csv(std::ostream &os, const std::vector<ResultRow> &rows) {
    os << "experiment,params,metric,value,mean,stderr,n,seed,row\n";
    for (const auto &r : rows)
        os << r.experiment << ',' << params_string(r.params) << ',' << r.metric << ','
           << fmt_num(r.value) << ',' << fmt_num(r.mean) << ',' << fmt_num(r.std_err) << ',' << r.n
           << ',' << r.seed << ',' << (r.summary ? "summary" : "seed") << '\n';
}

/// Writes <dir>/<experiment>.csv and <dir>/<experiment>.json; returns the CSV path.
inline std::string write_outputs(const std::string &dir, const std::string &experiment,
                                 const ExperimentConfig &cfg, const std::vector<ResultRow> &rows) {
    std::filesystem::create_directories(dir);
    const auto csv = (std::filesystem::path(dir) / (experiment + ".csv")).string();
    {
        std::ofstream os(csv, std::ios::binary);
        if (!os) throw std::runtime_error("cannot open " + csv);
        write_csv(os, rows);
    }
    nlohmann::json m{{"experiment", experiment},
                     {"version", kVersion},
                     {"config_hash", config_hash(cfg)},
                     {"seeds", cfg.seeds},
                     {"config", to_json(cfg)},
                     {"outputs", {experiment + ".csv"}},
                     {"rows", rows.size()}};
    const auto js = (std::filesystem::path(dir) / (experiment + ".json")).string();
    std::ofstream os(js, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + js);
    os << m.dump(2) << '\n';
    return csv;
}

// ---------------------------------------------------------------- metrics

/// ||T_c - T_avg||_F / ||T_avg||_F
inline double rse(const Tensor &t_c, const Tensor &t_avg) {
    t_c.require_same_shape(t_avg, "rse");
    const double den = frobenius(t_avg);
    if (!(den > 0)) throw std::invalid_argument("rse: ground truth is zero");
    return frobenius(t_c - t_avg) / den;
}

/// Label positions holding no record copy the slice of the nearest label that
/// does (squared label distance, ties to the smaller label index); observed
/// labels keep their own slice.
inline Tensor nearest_position_copy(const Tensor &t, const Tensor &v, const GridSpec &grid) {
    Tensor out = t;
    auto V = v.as_matrix(2);
    auto O = out.as_matrix(2);
    auto T = t.as_matrix(2);
    std::vector<std::size_t> observed;
    for (Eigen::Index i = 0; i < V.rows(); ++i)
        if ((V.row(i).array() > 0).any()) observed.push_back(static_cast<std::size_t>(i));
    if (observed.empty()) return out;
    for (std::size_t i = 0; i < grid.npos(); ++i) {
        if ((V.row(static_cast<Eigen::Index>(i)).array() > 0).any()) continue;
        const auto ix = static_cast<double>(i % grid.lx()), iy = static_cast<double>(i / grid.lx());
        std::size_t best = observed.front();
        double bd = std::numeric_limits<double>::infinity();
        for (std::size_t j : observed) {
            const double dx = static_cast<double>(j % grid.lx()) - ix;
            const double dy = static_cast<double>(j / grid.lx()) - iy;
            const double d = dx * dx + dy * dy;
            if (d < bd) {
                bd = d;
                best = j;
            }
        }
        O.row(static_cast<Eigen::Index>(i)) = T.row(static_cast<Eigen::Index>(best));
    }
    return out;
}

/// Per label: mean receiver noise variance over the reference coordinates
/// mapped to it (zero without measurement noise).
inline std::vector<double> noise_floor(const ChannelSnapshot &snap, const GridSpec &grid,
                                       const MeasurementParams &noise) {
    std::vector<double> s2(grid.npos(), 0.0);
    std::vector<std::size_t> n(grid.npos(), 0);
    for (std::size_t c = 0; c < snap.ncoords(); ++c) {
        const auto i = label_index(grid, pos_label(grid, snap.coords[c]));
        s2[i] += noise.noise_variance(snap.h_norm2[c]);
        ++n[i];
    }
    for (std::size_t i = 0; i < s2.size(); ++i)
        if (n[i]) s2[i] /= static_cast<double>(n[i]);
    return s2;
}

/// eta from the data: a floor relative to sum W T^2, plus, given the noise
/// variance per label, the expected weighted squared deviation of the
/// averaged entries: variance (2 r sigma^2 + sigma^4) / V and the sigma^2
/// bias of a noisy power reading, scaled by noise_factor.
inline double choose_eta(const DataTensors &d, const Tensor &w, const EtaRule &rule,
                         const std::vector<double> &sigma2 = {}) {
    if (rule.fixed) return *rule.fixed;
    double energy = 0;
    for (std::size_t i = 0; i < w.size(); ++i) energy += w[i] * d.t[i] * d.t[i];
    double eta = rule.rel_floor * energy;
    if (sigma2.empty() || rule.noise_factor == 0) return eta;
    auto T = d.t.as_matrix(2);
    auto V = d.v.as_matrix(2);
    auto W = w.as_matrix(2);
    if (sigma2.size() != static_cast<std::size_t>(T.rows()))
        throw std::invalid_argument("choose_eta: one noise variance per position is required");
    double dev = 0;
    for (Eigen::Index p = 0; p < T.rows(); ++p) {
        const double s2 = sigma2[static_cast<std::size_t>(p)];
        for (Eigen::Index b = 0; b < T.cols(); ++b)
            if (V(p, b) > 0) dev += W(p, b) * ((2 * T(p, b) * s2 + s2 * s2) / V(p, b) + s2 * s2);
    }
    return eta + rule.noise_factor * dev;
}

// ---------------------------------------------------------------- instances

struct Instance {
    Scene scene;
    GridSpec grid;
    ChannelSnapshot snap;
    Tensor truth;
};

inline Scene scene_for(const ExperimentConfig &cfg, std::uint64_t seed) {
    Scene s = cfg.scene_file ? load_scene(*cfg.scene_file)
                             : (cfg.full_profile ? full_profile_scene(seed) : default_scene(seed));
    if (!cfg.full_profile) {
        s.bs_array = cfg.bs;
        s.ue_array = cfg.ue;
    }
    s.delta_s = cfg.delta_s;
    s.validate();
    return s;
}

inline Instance make_instance(const ExperimentConfig &cfg, std::uint64_t seed) {
    Instance in;
    in.scene = scene_for(cfg, seed);
    in.grid = GridSpec::from_scene(in.scene);
    in.snap = snapshot(in.scene, cfg.p_t);
    in.truth = truth_tensor(in.snap, in.grid, in.scene.bs_array);
    return in;
}

inline SamplingOptions sampling_options(const ExperimentConfig &cfg) {
    SamplingOptions o;
    o.top_fraction = cfg.top_fraction;
    o.noise.p_t = cfg.p_t;
    o.noise.snr_r_db = cfg.snr_r_db;
    return o;
}

inline HntcProblem make_problem(const ExperimentConfig &cfg, const Instance &in, const DataTensors &d,
                                const std::string &weighting = "count") {
    HntcProblem p{d.t, weighting == "uniform" ? uniform_weights(d.v) : d.w, cfg.hntc};
    p.config.n1 = 2;
    p.config.n2 = 2;
    std::vector<double> sigma2;
    if (cfg.snr_r_db) sigma2 = noise_floor(in.snap, in.grid, sampling_options(cfg).noise);
    p.config.eta = choose_eta(d, p.w, cfg.eta, sigma2);
    return p;
}

/// Sampling seed for one (experiment, parameter point, seed) job.
inline std::uint64_t job_seed(std::uint64_t seed, std::uint64_t tag, std::size_t point) {
    return mix_seed(seed, tag, point);
}

inline std::size_t n_tr_for(double k_tr, std::size_t k) {
    return std::clamp<std::size_t>(fraction_count(k_tr, k), 1, k);
}

// ---------------------------------------------------------------- experiments

inline std::vector<ResultRow> run_rse_sweep(const ExperimentConfig &cfg) {
    cfg.validate();
    RowCollector rc("rse_sweep", cfg.seeds);
    for (std::size_t si = 0; si < cfg.seeds.size(); ++si) {
        const auto in = make_instance(cfg, cfg.seeds[si]);
        for (std::size_t ki = 0; ki < cfg.k_op.size(); ++ki) {
            const double k_op = cfg.k_op[ki];
            const auto db = sample_observations(in.snap, in.grid, in.scene.bs_array, k_op, cfg.alpha,
                                                sampling_options(cfg), job_seed(cfg.seeds[si], 1, ki));
            const auto d = build_tensors(db, in.grid, in.scene.bs_array);
            const std::string ks = fmt_num(k_op);
            for (const auto &wt : cfg.weightings) {
                const auto res = solve(make_problem(cfg, in, d, wt));
                const Params p{{"k_op", ks}, {"method", "hntc"}, {"weights", wt}};
                rc.add(si, p, "rse", rse(res.x, in.truth));
                rc.add(si, p, "iterations", static_cast<double>(res.iterations));
                rc.add(si, p, "converged", res.converged ? 1.0 : 0.0);
            }
            rc.add(si, {{"k_op", ks}, {"method", "zero_fill"}}, "rse", rse(d.t, in.truth));
            rc.add(si, {{"k_op", ks}, {"method", "nn_copy"}}, "rse",
                   rse(nearest_position_copy(d.t, d.v, in.grid), in.truth));
        }
    }
    return rc.rows();
}

struct CompletedInstance {
    Instance in;
    MeasurementDb db;
    Tensor completed;
    HntcResult result;
};

inline CompletedInstance complete_instance(const ExperimentConfig &cfg, std::size_t si) {
    CompletedInstance ci{make_instance(cfg, cfg.seeds[si]), MeasurementDb(cfg.alpha), {}, {}};
    ci.db = sample_observations(ci.in.snap, ci.in.grid, ci.in.scene.bs_array, cfg.beam_k_op, cfg.alpha,
                                sampling_options(cfg), job_seed(cfg.seeds[si], 2, 0));
    const auto d = build_tensors(ci.db, ci.in.grid, ci.in.scene.bs_array);
    ci.result = solve(make_problem(cfg, ci.in, d));
    ci.completed = ci.result.x;
    return ci;
}

inline std::vector<ResultRow> run_beam_alignment_eval(const ExperimentConfig &cfg) {
    cfg.validate();
    RowCollector rc("beam_alignment", cfg.seeds);
    for (std::size_t si = 0; si < cfg.seeds.size(); ++si) {
        const auto ci = complete_instance(cfg, si);
        const auto &in = ci.in;
        const auto &bs = in.scene.bs_array;
        const std::size_t k = bs.beams();
        const std::size_t f = in.scene.ue_array.beams();
        std::vector<std::size_t> n_tr;
        for (double kt : cfg.k_tr) n_tr.push_back(n_tr_for(kt, k));
        const std::size_t n_se = n_tr_for(cfg.se_k_tr, k);
        n_tr.push_back(n_se);
        n_tr.push_back(k);
        const std::vector<std::pair<std::string, RecoFn>> methods{
            {"hntc_bss", [&](Point2 g, std::size_t n) { return bss(ci.completed, in.grid, {g, n, 0}); }},
            {"genie", [&](Point2 g, std::size_t n) { return bss(in.truth, in.grid, {g, n, 0}); }},
            {"type_b", [&](Point2 g, std::size_t n) { return type_b_baseline(ci.db, in.grid, bs, {g, n, 0}); }}};
        std::vector<double> exhaustive_gains;
        for (const auto &[name, fn] : methods) {
            const auto curve = power_loss_curve(in.snap, in.grid.area(), bs.c_theta, fn, n_tr, 1, 0.0,
                                                job_seed(cfg.seeds[si], 3, 0), true);
            for (std::size_t j = 0; j < cfg.k_tr.size(); ++j)
                rc.add(si, {{"k_tr", fmt_num(cfg.k_tr[j])}, {"n_tr", std::to_string(n_tr[j])}, {"method", name}},
                       "power_loss", curve[j].probability);
            const auto &se_curve = curve[cfg.k_tr.size()];
            for (double snr : cfg.se_snr_db) {
                const auto se = mean_spectral_efficiency(snr, se_curve.gain_ratios, n_se, f);
                rc.add(si, {{"snr_r_db", fmt_num(snr)}, {"k_tr", fmt_num(cfg.se_k_tr)}, {"method", name}},
                       "spectral_efficiency", se.se);
            }
            if (name == "genie") exhaustive_gains = curve.back().gain_ratios;
        }
        for (double snr : cfg.se_snr_db) {
            const auto se = mean_spectral_efficiency(snr, exhaustive_gains, k, f);
            const Params p{{"snr_r_db", fmt_num(snr)}, {"method", "exhaustive"}};
            rc.add(si, p, "spectral_efficiency", se.se);
            rc.add(si, p, "feasible", se.feasible ? 1.0 : 0.0);
        }
        rc.add(si, {{"method", "hntc_bss"}}, "completion_rse", rse(ci.completed, in.truth));
        rc.add(si, {{"method", "hntc_bss"}}, "iterations", static_cast<double>(ci.result.iterations));
    }
    return rc.rows();
}

inline std::vector<ResultRow> run_warm_start_study(const ExperimentConfig &cfg) {
    cfg.validate();
    if (cfg.instants < 3) throw std::invalid_argument("warm start study needs >= 3 update instants");
    RowCollector rc("warm_start", cfg.seeds);
    for (std::size_t si = 0; si < cfg.seeds.size(); ++si) {
        const auto in = make_instance(cfg, cfg.seeds[si]);
        const auto &bs = in.scene.bs_array;
        const std::size_t npos = in.grid.npos();
        // A random visiting order over all labels; the first ceil(K_ini L)
        // are the initial set and every instant appends the next n_upd.
        const auto order = choose_positions(in.grid, 1.0, job_seed(cfg.seeds[si], 4, 0));
        std::vector<Label> perm = order;
        std::mt19937_64 rng(job_seed(cfg.seeds[si], 4, 1));
        for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng() % i]);
        const auto n0 = static_cast<std::size_t>(std::ceil(cfg.k_ini * static_cast<double>(npos) - 1e-9));
        MeasurementDb db(cfg.alpha);
        const auto opt = sampling_options(cfg);
        std::size_t used = 0;
        auto ingest = [&](std::size_t count) {
            const std::size_t end = std::min(perm.size(), used + count);
            std::vector<Label> batch(perm.begin() + static_cast<long>(used), perm.begin() + static_cast<long>(end));
            ingest_positions(db, in.snap, in.grid, batch, opt, job_seed(cfg.seeds[si], 5, 0), bs);
            used = end;
        };
        ingest(n0);
        std::optional<HntcState> prior;
        for (std::size_t t = 0; t <= cfg.instants; ++t) {
            if (t > 0) ingest(cfg.n_upd);
            const auto prob = make_problem(cfg, in, build_tensors(db, in.grid, bs));
            const auto cold = solve(prob);
            const auto warm = prior ? solve_warm(prob, *prior) : cold;
            prior = warm.state;
            const std::string ts = std::to_string(t);
            for (const auto &[name, r] : {std::pair<std::string, const HntcResult &>{"cold", cold},
                                          std::pair<std::string, const HntcResult &>{"warm", warm}}) {
                const Params p{{"instant", ts}, {"method", name}};
                rc.add(si, p, "iterations", static_cast<double>(r.iterations));
                rc.add(si, p, "rse", rse(r.x, in.truth));
                rc.add(si, p, "converged", r.converged ? 1.0 : 0.0);
            }
        }
    }
    return rc.rows();
}

inline std::vector<ResultRow> run_gps_noise_study(const ExperimentConfig &cfg) {
    cfg.validate();
    RowCollector rc("gps_noise", cfg.seeds);
    for (std::size_t si = 0; si < cfg.seeds.size(); ++si) {
        const auto ci = complete_instance(cfg, si);
        const auto &in = ci.in;
        const std::size_t k = in.scene.bs_array.beams();
        std::vector<std::size_t> n_tr;
        for (double kt : cfg.k_tr) n_tr.push_back(n_tr_for(kt, k));
        for (std::size_t di = 0; di < cfg.gps_d.size(); ++di) {
            const double d = cfg.gps_d[di];
            // Both algorithms see the same perturbed reports.
            const auto trial_seed = job_seed(cfg.seeds[si], 6, di);
            const std::vector<std::pair<std::string, RecoFn>> methods{
                {"bss", [&](Point2 g, std::size_t n) { return bss(ci.completed, in.grid, {g, n, d}); }},
                {"gbss", [&](Point2 g, std::size_t n) {
                     return gbss(ci.completed, in.grid, {g, n, d}, cfg.zeta);
                 }}};
            for (const auto &[name, fn] : methods) {
                const auto curve = power_loss_curve(in.snap, in.grid.area(), in.scene.bs_array.c_theta, fn,
                                                    n_tr, cfg.trials, d, trial_seed);
                for (std::size_t j = 0; j < cfg.k_tr.size(); ++j)
                    rc.add(si, {{"d", fmt_num(d)}, {"k_tr", fmt_num(cfg.k_tr[j])}, {"method", name}},
                           "power_loss", curve[j].probability);
            }
        }
    }
    return rc.rows();
}

} // namespace hntc
