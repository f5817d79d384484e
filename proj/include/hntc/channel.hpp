// SPDX-License-Identifier: Apache-2.0
//
// Synthetic geometric multipath scene: a fixed BS with a UPA, single-bounce
// scattering clusters plus an attenuated direct path, and per-path complex
// gains drawn from smooth random fields over the UE position. Provides UPA
// codebooks and best-UE-beam received power measurements.

#pragma once

#include "hntc/rng.hpp"
#include "hntc/tensor.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <complex>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace hntc {

struct Point2 {
    double x = 0, y = 0;
    bool operator==(const Point2 &) const = default;
};

struct Point3 {
    double x = 0, y = 0, z = 0;
};

inline double distance(Point2 a, Point2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

struct Area {
    double x0 = 10, x_end = 60, y0 = -25, y_end = 25;

    bool contains(Point2 g, double tol = 1e-9) const {
        return g.x >= x0 - tol && g.x <= x_end + tol && g.y >= y0 - tol && g.y <= y_end + tol;
    }
    Point2 clamp(Point2 g) const {
        return {std::clamp(g.x, x0, x_end), std::clamp(g.y, y0, y_end)};
    }
};

/// Antenna counts and angular quantization of one UPA codebook.
struct ArraySpec {
    std::size_t cy = 8, cz = 8, c_theta = 8, c_phi = 8;
    std::size_t antennas() const { return cy * cz; }
    std::size_t beams() const { return c_theta * c_phi; }
};

/// a(theta, phi) = 1/sqrt(cy cz) [z phasors] kron [y phasors],
/// Omega_z = pi sin(theta) sin(phi), Omega_y = pi sin(theta) cos(phi).
inline ComplexVector upa_phasors(double omega_y, double omega_z, std::size_t cy, std::size_t cz) {
    ComplexVector a(static_cast<Eigen::Index>(cy * cz));
    const double norm = 1.0 / std::sqrt(static_cast<double>(cy * cz));
    for (std::size_t iz = 0; iz < cz; ++iz)
        for (std::size_t iy = 0; iy < cy; ++iy)
            a(static_cast<Eigen::Index>(iz * cy + iy)) =
                norm * std::polar(1.0, static_cast<double>(iz) * omega_z +
                                           static_cast<double>(iy) * omega_y);
    return a;
}

inline ComplexVector upa_response(double theta, double phi, std::size_t cy, std::size_t cz) {
    const double s = std::sin(theta);
    return upa_phasors(std::numbers::pi * s * std::cos(phi), std::numbers::pi * s * std::sin(phi),
                       cy, cz);
}

/// Response toward a unit direction (dx, dy, dz) of an array in the y-z plane:
/// sin(theta) cos(phi) = dy and sin(theta) sin(phi) = dz.
inline ComplexVector upa_steering(const Point3 &dir, std::size_t cy, std::size_t cz) {
    return upa_phasors(std::numbers::pi * dir.y, std::numbers::pi * dir.z, cy, cz);
}

/// theta_u = -pi/2 + u pi / count, u = 0..count-1.
inline std::vector<double> quantized_angles(std::size_t count) {
    if (count == 0) throw std::invalid_argument("quantized_angles: count must be >= 1");
    std::vector<double> a(count);
    for (std::size_t u = 0; u < count; ++u)
        a[u] = -std::numbers::pi / 2 + static_cast<double>(u) * std::numbers::pi /
                                           static_cast<double>(count);
    return a;
}

/// Beam (u, v) is column u + c_theta * v, matching the trailing (C_theta,
/// C_phi) dimensions of a power tensor.
struct UpaCodebook {
    ArraySpec spec;
    ComplexMatrix beams;

    std::size_t size() const { return static_cast<std::size_t>(beams.cols()); }
    std::size_t column(std::size_t u, std::size_t v) const { return u + spec.c_theta * v; }
};

inline UpaCodebook make_codebook(const ArraySpec &spec) {
    if (spec.cy == 0 || spec.cz == 0)
        throw std::invalid_argument("make_codebook: antenna counts must be >= 1");
    const auto th = quantized_angles(spec.c_theta);
    const auto ph = quantized_angles(spec.c_phi);
    UpaCodebook cb{spec, ComplexMatrix(static_cast<Eigen::Index>(spec.antennas()),
                                       static_cast<Eigen::Index>(spec.beams()))};
    for (std::size_t v = 0; v < spec.c_phi; ++v)
        for (std::size_t u = 0; u < spec.c_theta; ++u)
            cb.beams.col(static_cast<Eigen::Index>(cb.column(u, v))) =
                upa_response(th[u], ph[v], spec.cy, spec.cz);
    return cb;
}

struct Cluster {
    Point3 position;
    /// Mean path power relative to free-space pathloss, dB.
    double power_db = 0.0;
    /// Ratio of the steady component to the fluctuating field component.
    double k_factor = 1.0;
};

struct Scene {
    Point3 bs{0, 0, 10};
    double ue_height = 1.5;
    Area area;
    std::vector<Cluster> clusters;
    /// Blockage attenuation of the direct BS-UE path; negative disables it.
    double direct_path_loss_db = 6.0;
    double direct_k_factor = 4.0;
    double pathloss_exponent = 2.5;
    double correlation_length = 10.0;
    std::uint64_t seed = 1;
    ArraySpec bs_array{8, 8, 8, 8};
    ArraySpec ue_array{2, 2, 2, 2};
    double delta_s = 5.0;
    std::size_t ref_per_axis = 51;

    void validate() const {
        if (clusters.empty() && direct_path_loss_db < 0)
            throw std::invalid_argument("Scene: needs at least one propagation path");
        if (!(area.x_end > area.x0) || !(area.y_end > area.y0))
            throw std::invalid_argument("Scene: empty area");
        if (!(correlation_length > 0)) throw std::invalid_argument("Scene: correlation_length <= 0");
        if (!(delta_s > 0)) throw std::invalid_argument("Scene: delta_s <= 0");
        if (ref_per_axis < 2) throw std::invalid_argument("Scene: ref_per_axis < 2");
    }
};

/// Desk profile: 8x8 BS UPA, 2x2 UE UPA, three clusters drawn from the seed.
inline Scene default_scene(std::uint64_t seed = 1) {
    Scene s;
    s.seed = seed;
    std::mt19937_64 rng(mix_seed(seed, 0x5ce4e));
    std::uniform_real_distribution<double> ux(15.0, 70.0), uy(-40.0, 40.0), uz(2.0, 15.0),
        up(-4.0, 0.0);
    for (int l = 0; l < 3; ++l) {
        Cluster c;
        c.position = {ux(rng), uy(rng), uz(rng)};
        c.power_db = up(rng);
        c.k_factor = 1.0;
        s.clusters.push_back(c);
    }
    return s;
}

/// Full array profile: 16x16 BS (256 beams), 4x4 UE (16 beams).
inline Scene full_profile_scene(std::uint64_t seed = 1) {
    Scene s = default_scene(seed);
    s.bs_array = {16, 16, 16, 16};
    s.ue_array = {4, 4, 4, 4};
    return s;
}

/// Zero-mean unit-variance smooth random field with Gaussian covariance
/// exp(-|d|^2 / (2 l^2)), realized by random Fourier features.
class SmoothField {
  public:
    SmoothField(std::uint64_t seed, double corr_len, std::size_t features = 96) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> nd(0.0, 1.0 / corr_len);
        std::uniform_real_distribution<double> ud(0.0, 2 * std::numbers::pi);
        w_.resize(features);
        for (auto &f : w_) f = {nd(rng), nd(rng), ud(rng)};
    }
    double operator()(Point2 g) const {
        double s = 0;
        for (const auto &f : w_) s += std::cos(f[0] * g.x + f[1] * g.y + f[2]);
        return s * std::sqrt(2.0 / static_cast<double>(w_.size()));
    }

  private:
    std::vector<std::array<double, 3>> w_;
};

namespace detail {

inline Point3 unit(Point3 d) {
    const double n = std::sqrt(d.x * d.x + d.y * d.y + d.z * d.z);
    return {d.x / n, d.y / n, d.z / n};
}

inline std::complex<double> path_gain(const Scene &s, std::size_t path, std::uint64_t draw,
                                      Point2 g, double mean_power, double k_factor) {
    const std::uint64_t base = mix_seed(s.seed, path, draw);
    const SmoothField re(mix_seed(base, 1), s.correlation_length);
    const SmoothField im(mix_seed(base, 2), s.correlation_length);
    std::mt19937_64 rng(mix_seed(base, 3));
    const double phase = std::uniform_real_distribution<double>(0, 2 * std::numbers::pi)(rng);
    const double ks = std::sqrt(k_factor / (1 + k_factor));
    const double kf = std::sqrt(1 / (1 + k_factor));
    const std::complex<double> fading =
        ks * std::polar(1.0, phase) + kf * std::complex<double>(re(g), im(g)) / std::sqrt(2.0);
    return std::sqrt(mean_power) * fading;
}

} // namespace detail

/// M_r x M_t uplink channel at UE position g. Deterministic in
/// (scene.seed, g, draw).
inline ComplexMatrix channel_at(const Scene &s, Point2 g, std::uint64_t draw = 0) {
    if (!s.area.contains(g))
        throw std::out_of_range("channel_at: position (" + std::to_string(g.x) + ", " +
                                std::to_string(g.y) + ") outside the service area");
    const Point3 ue{g.x, g.y, s.ue_height};
    const auto &bsa = s.bs_array;
    const auto &uea = s.ue_array;
    ComplexMatrix h = ComplexMatrix::Zero(static_cast<Eigen::Index>(bsa.antennas()),
                                          static_cast<Eigen::Index>(uea.antennas()));
    auto add_path = [&](Point3 bs_to, Point3 ue_to, double length, std::size_t idx,
                        double rel_power, double k) {
        const double pl = std::pow(length, -s.pathloss_exponent) * rel_power;
        const auto gain = detail::path_gain(s, idx, draw, g, pl, k);
        const ComplexVector ar = upa_steering(detail::unit(bs_to), bsa.cy, bsa.cz);
        const ComplexVector at = upa_steering(detail::unit(ue_to), uea.cy, uea.cz);
        h.noalias() += gain * ar * at.adjoint();
    };
    for (std::size_t l = 0; l < s.clusters.size(); ++l) {
        const auto &c = s.clusters[l].position;
        const Point3 bs_to{c.x - s.bs.x, c.y - s.bs.y, c.z - s.bs.z};
        const Point3 ue_to{c.x - ue.x, c.y - ue.y, c.z - ue.z};
        const double len = std::sqrt(bs_to.x * bs_to.x + bs_to.y * bs_to.y + bs_to.z * bs_to.z) +
                           std::sqrt(ue_to.x * ue_to.x + ue_to.y * ue_to.y + ue_to.z * ue_to.z);
        add_path(bs_to, ue_to, len, l + 1, std::pow(10.0, s.clusters[l].power_db / 10),
                 s.clusters[l].k_factor);
    }
    if (s.direct_path_loss_db >= 0) {
        const Point3 bs_to{ue.x - s.bs.x, ue.y - s.bs.y, ue.z - s.bs.z};
        const Point3 ue_to{-bs_to.x, -bs_to.y, -bs_to.z};
        const double len = std::sqrt(bs_to.x * bs_to.x + bs_to.y * bs_to.y + bs_to.z * bs_to.z);
        add_path(bs_to, ue_to, len, 0, std::pow(10.0, -s.direct_path_loss_db / 10),
                 s.direct_k_factor);
    }
    return h;
}

inline double spectral_norm_sq(const ComplexMatrix &h) {
    const double s = Eigen::JacobiSVD<ComplexMatrix>(h).singularValues()(0);
    return s * s;
}

struct MeasurementParams {
    double p_t = 1.0;
    /// Fixed noise variance, used when snr_r_db is unset.
    double sigma_n2 = 0.0;
    /// When set, sigma_n^2 = P_t ||H||_2^2 / 10^(snr/10) for each channel.
    std::optional<double> snr_r_db;

    double noise_variance(double h_norm2) const {
        if (snr_r_db) return p_t * h_norm2 / std::pow(10.0, *snr_r_db / 10.0);
        return sigma_n2;
    }
    void validate() const {
        if (!(p_t > 0)) throw std::invalid_argument("MeasurementParams: p_t must be > 0");
        if (!(sigma_n2 >= 0)) throw std::invalid_argument("MeasurementParams: sigma_n2 must be >= 0");
    }
};

/// max over UE beams f of |sqrt(P_t) w^H H f + n|^2 with n ~ CN(0, sigma^2).
/// `amplitudes` holds sqrt(P_t) w^H H f for each f.
inline double best_ue_power(const ComplexVector &amplitudes, double sigma2, std::mt19937_64 &rng) {
    std::normal_distribution<double> nd(0.0, std::sqrt(sigma2 / 2));
    double best = 0;
    for (Eigen::Index f = 0; f < amplitudes.size(); ++f) {
        std::complex<double> a = amplitudes(f);
        if (sigma2 > 0) {
            const double re = nd(rng);
            const double im = nd(rng);
            a += std::complex<double>(re, im);
        }
        best = std::max(best, std::norm(a));
    }
    return best;
}

inline double measure_best_ue_power(const Scene &s, const MeasurementParams &params,
                                    const UpaCodebook &bs_cb, const UpaCodebook &ue_cb,
                                    std::size_t beam, Point2 g, std::mt19937_64 &rng) {
    params.validate();
    if (beam >= bs_cb.size()) throw std::out_of_range("measure_best_ue_power: beam index");
    const ComplexMatrix h = channel_at(s, g);
    const ComplexVector amp = std::sqrt(params.p_t) *
                              (bs_cb.beams.col(static_cast<Eigen::Index>(beam)).adjoint() * h * ue_cb.beams)
                                  .transpose();
    return best_ue_power(amp, params.noise_variance(spectral_norm_sq(h)), rng);
}

/// Reference coordinates: ref_per_axis^2 points evenly covering the area,
/// x varying fastest.
inline std::vector<Point2> reference_coordinates(const Scene &s) {
    std::vector<Point2> pts;
    const std::size_t n = s.ref_per_axis;
    pts.reserve(n * n);
    for (std::size_t iy = 0; iy < n; ++iy)
        for (std::size_t ix = 0; ix < n; ++ix)
            pts.push_back({s.area.x0 + (s.area.x_end - s.area.x0) * static_cast<double>(ix) /
                                           static_cast<double>(n - 1),
                           s.area.y0 + (s.area.y_end - s.area.y0) * static_cast<double>(iy) /
                                           static_cast<double>(n - 1)});
    return pts;
}

/// Channels of a scene evaluated once at every reference coordinate.
struct ChannelSnapshot {
    std::vector<Point2> coords;
    /// Per coordinate: (|W| x |F|) matrix of sqrt(P_t) w^H H f.
    std::vector<ComplexMatrix> amplitudes;
    /// Per coordinate: ||H||_2^2.
    std::vector<double> h_norm2;
    /// (ncoords x |W|) noiseless best-UE power.
    Matrix power;
    double p_t = 1.0;

    std::size_t ncoords() const { return coords.size(); }
    std::size_t nbeams() const { return static_cast<std::size_t>(power.cols()); }
};

inline ChannelSnapshot snapshot(const Scene &s, double p_t = 1.0) {
    s.validate();
    const auto bs_cb = make_codebook(s.bs_array);
    const auto ue_cb = make_codebook(s.ue_array);
    ChannelSnapshot snap;
    snap.p_t = p_t;
    snap.coords = reference_coordinates(s);
    const auto n = snap.coords.size();
    snap.amplitudes.reserve(n);
    snap.h_norm2.reserve(n);
    snap.power.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(bs_cb.size()));
    const ComplexMatrix wh = bs_cb.beams.adjoint();
    for (std::size_t c = 0; c < n; ++c) {
        const ComplexMatrix h = channel_at(s, snap.coords[c]);
        ComplexMatrix amp = std::sqrt(p_t) * (wh * h * ue_cb.beams);
        snap.power.row(static_cast<Eigen::Index>(c)) =
            amp.cwiseAbs2().rowwise().maxCoeff().transpose();
        snap.amplitudes.push_back(std::move(amp));
        snap.h_norm2.push_back(spectral_norm_sq(h));
    }
    return snap;
}

// Scene description file (JSON).

inline nlohmann::json to_json(const ArraySpec &a) {
    return {{"cy", a.cy}, {"cz", a.cz}, {"c_theta", a.c_theta}, {"c_phi", a.c_phi}};
}

inline ArraySpec array_from_json(const nlohmann::json &j) {
    return {j.at("cy").get<std::size_t>(), j.at("cz").get<std::size_t>(),
            j.at("c_theta").get<std::size_t>(), j.at("c_phi").get<std::size_t>()};
}

inline nlohmann::json to_json(const Scene &s) {
    nlohmann::json clusters = nlohmann::json::array();
    for (const auto &c : s.clusters)
        clusters.push_back({{"position", {c.position.x, c.position.y, c.position.z}},
                            {"power_db", c.power_db},
                            {"k_factor", c.k_factor}});
    return {{"bs_position", {s.bs.x, s.bs.y, s.bs.z}},
            {"ue_height", s.ue_height},
            {"area", {{"x0", s.area.x0}, {"x_end", s.area.x_end}, {"y0", s.area.y0}, {"y_end", s.area.y_end}}},
            {"clusters", clusters},
            {"direct_path_loss_db", s.direct_path_loss_db},
            {"direct_k_factor", s.direct_k_factor},
            {"pathloss_exponent", s.pathloss_exponent},
            {"correlation_length", s.correlation_length},
            {"seed", s.seed},
            {"bs_array", to_json(s.bs_array)},
            {"ue_array", to_json(s.ue_array)},
            {"delta_s", s.delta_s},
            {"ref_per_axis", s.ref_per_axis}};
}

inline Scene scene_from_json(const nlohmann::json &j) {
    Scene s;
    const auto &bs = j.at("bs_position");
    s.bs = {bs.at(0).get<double>(), bs.at(1).get<double>(), bs.at(2).get<double>()};
    s.ue_height = j.value("ue_height", s.ue_height);
    const auto &a = j.at("area");
    s.area = {a.at("x0").get<double>(), a.at("x_end").get<double>(), a.at("y0").get<double>(),
              a.at("y_end").get<double>()};
    for (const auto &c : j.at("clusters")) {
        const auto &p = c.at("position");
        s.clusters.push_back({{p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()},
                              c.value("power_db", 0.0),
                              c.value("k_factor", 1.0)});
    }
    s.direct_path_loss_db = j.value("direct_path_loss_db", s.direct_path_loss_db);
    s.direct_k_factor = j.value("direct_k_factor", s.direct_k_factor);
    s.pathloss_exponent = j.value("pathloss_exponent", s.pathloss_exponent);
    s.correlation_length = j.value("correlation_length", s.correlation_length);
    s.seed = j.value("seed", s.seed);
    if (j.contains("bs_array")) s.bs_array = array_from_json(j.at("bs_array"));
    if (j.contains("ue_array")) s.ue_array = array_from_json(j.at("ue_array"));
    s.delta_s = j.value("delta_s", s.delta_s);
    s.ref_per_axis = j.value("ref_per_axis", s.ref_per_axis);
    s.validate();
    return s;
}

inline void save_scene(const std::string &path, const Scene &s) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path);
    os << to_json(s).dump(2) << "\n";
}

inline Scene load_scene(const std::string &path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    return scene_from_json(nlohmann::json::parse(is));
}

} // namespace hntc
