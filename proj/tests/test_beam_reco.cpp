// SPDX-License-Identifier: Apache-2.0
#include "hntc/beam_reco.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

using namespace hntc;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

const GridSpec kSmall{0, 5, 0, 5, 5}; // 2 x 2 labels

std::vector<Beam> sort_oracle(const std::vector<double> &s, std::size_t c_theta, std::size_t n) {
    std::vector<std::pair<double, Beam>> all;
    for (std::size_t b = 0; b < s.size(); ++b) all.push_back({s[b], {b % c_theta, b / c_theta}});
    std::stable_sort(all.begin(), all.end(), [](const auto &a, const auto &b) {
        return a.first > b.first || (a.first == b.first && a.second < b.second);
    });
    std::vector<Beam> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(all[i].second);
    return out;
}

struct Fixture {
    Scene scene;
    ChannelSnapshot snap;
    GridSpec grid;
    Tensor truth;

    Fixture() {
        scene = default_scene(4);
        scene.ref_per_axis = 21;
        snap = snapshot(scene);
        grid = GridSpec::from_scene(scene);
        truth = truth_tensor(snap, grid, scene.bs_array);
    }
    RecoFn genie() const {
        return [this](Point2 g, std::size_t n) { return bss(truth, grid, {g, n, 0.0}); };
    }
};

} // namespace

TEST_CASE("bss tie example") {
    Tensor t({2, 2, 2, 2});
    t({0, 0, 0, 0}) = 9;
    t({0, 0, 0, 1}) = 7;
    t({0, 0, 1, 0}) = 7;
    t({0, 0, 1, 1}) = 3;
    const auto r = bss(t, kSmall, {{1, 1}, 2, 0});
    REQUIRE(r.beams.size() == 2);
    CHECK(r.beams[0] == Beam{0, 0});
    CHECK(r.beams[1] == Beam{0, 1});
    CHECK(r.scores == std::vector<double>{9, 7});

    const auto all = bss(t, kSmall, {{1, 1}, 4, 0});
    CHECK(all.beams == std::vector<Beam>{{0, 0}, {0, 1}, {1, 0}, {1, 1}});
    CHECK(bss(t, kSmall, {{1, 1}, 1, 0}).beams == std::vector<Beam>{{0, 0}});
    CHECK_THROWS_AS(bss(t, kSmall, {{1, 1}, 0, 0}), std::invalid_argument);
    CHECK_THROWS_AS(bss(t, kSmall, {{1, 1}, 5, 0}), std::invalid_argument);
    CHECK_THROWS_AS(bss(t, kSmall, {{6, 1}, 1, 0}), std::out_of_range);
    CHECK_THROWS_AS(bss(Tensor({3, 2, 2, 2}), kSmall, {{1, 1}, 1, 0}), std::invalid_argument);
}

TEST_CASE("bss matches the sort oracle and is scale invariant") {
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> level(0, 5); // coarse levels force ties
    for (int trial = 0; trial < 100; ++trial) {
        Tensor t({2, 2, 4, 3});
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = level(rng);
        const Point2 g{(rng() % 6) * 1.0, (rng() % 6) * 1.0};
        const std::size_t n = 1 + rng() % 12;
        const auto r = bss(t, kSmall, {g, n, 0});
        const Label p = pos_label(kSmall, g);
        std::vector<double> slice;
        for (std::size_t v = 0; v < 3; ++v)
            for (std::size_t u = 0; u < 4; ++u) slice.push_back(t({p.px, p.py, u, v}));
        CHECK(r.beams == sort_oracle(slice, 4, n));
        for (std::size_t i = 1; i < r.scores.size(); ++i) CHECK(r.scores[i] <= r.scores[i - 1]);

        const auto scaled = bss(t * 3.7, kSmall, {g, n, 0});
        CHECK(scaled.beams == r.beams);
        // Power-of-two scale keeps averaged ties bit-exact.
        CHECK(gbss(t * 0.25, kSmall, {g, n, 4.0}).beams == gbss(t, kSmall, {g, n, 4.0}).beams);
        CHECK(gbss(t, kSmall, {g, n, 0.0}).beams == r.beams);
        CHECK(gbss(t, kSmall, {g, n, 0.0}).scores == r.scores);
    }
}

TEST_CASE("gbss averages over the position group") {
    Tensor t({2, 2, 2, 1});
    t({0, 0, 0, 0}) = 9;
    t({0, 0, 1, 0}) = 1;
    t({1, 0, 0, 0}) = 1;
    t({1, 0, 1, 0}) = 9;
    t({0, 1, 1, 0}) = 100;
    t({1, 1, 1, 0}) = 100;
    // zeta d = 1 around (2.5, 0) reaches the two bottom cells only.
    const auto group = labels_within(kSmall, {2.5, 0}, 1.0);
    CHECK(group == std::vector<Label>{{0, 0}, {1, 0}});
    const auto r = gbss(t, kSmall, {{2.5, 0}, 2, 2.5}, 0.4);
    CHECK(r.beams == std::vector<Beam>{{0, 0}, {1, 0}});
    CHECK(r.scores == std::vector<double>{5, 5});

    // Covering the whole grid: mean slice is [2.5, 52.5].
    CHECK(labels_within(kSmall, {2.5, 2.5}, 100).size() == 4);
    const auto wide = gbss(t, kSmall, {{2.5, 2.5}, 1, 1000}, 0.4);
    CHECK(wide.beams == std::vector<Beam>{{1, 0}});
    CHECK_THAT(wide.scores[0], WithinAbs(52.5, 1e-12));

    CHECK(labels_within(kSmall, {1, 1}, 0) == std::vector<Label>{{0, 0}});
    CHECK_THROWS_AS(gbss(t, kSmall, {{1, 1}, 1, -1}), std::invalid_argument);
    CHECK_THROWS_AS(gbss(t, kSmall, {{-1, 1}, 1, 3}), std::out_of_range);
}

TEST_CASE("type-B baseline") {
    const GridSpec grid{10, 60, -25, 25, 5};
    const ArraySpec bs{2, 2, 2, 2};
    MeasurementDb db;
    db.put({2, 2}, {0, 0}, 1.0, 1);
    db.put({2, 2}, {1, 1}, 3.0, 1);
    db.put({4, 2}, {0, 1}, 5.0, 1);
    db.put({0, 2}, {1, 0}, 4.0, 1);

    // At an observed label with enough stored beams.
    auto r = type_b_baseline(db, grid, bs, {grid.center({2, 2}), 2, 0});
    CHECK(r.beams == std::vector<Beam>{{1, 1}, {0, 0}});

    // (3, 2) is equidistant from (2, 2) and (4, 2); the lower label wins, then
    // (4, 2) pads the set.
    r = type_b_baseline(db, grid, bs, {grid.center({3, 2}), 3, 0});
    CHECK(r.beams == std::vector<Beam>{{1, 1}, {0, 0}, {0, 1}});

    // Every stored beam used: remaining beams follow in (u, v) order.
    r = type_b_baseline(db, grid, bs, {grid.center({2, 2}), 4, 0});
    CHECK(r.beams == std::vector<Beam>{{1, 1}, {0, 0}, {1, 0}, {0, 1}});

    MeasurementDb single;
    single.put({9, 9}, {1, 0}, 2.0, 1);
    single.put({9, 9}, {0, 1}, 1.0, 1);
    for (Label q : {Label{0, 0}, Label{10, 0}, Label{5, 5}})
        CHECK(type_b_baseline(single, grid, bs, {grid.center(q), 2, 0}).beams == std::vector<Beam>{{1, 0}, {0, 1}});
    r = type_b_baseline(single, grid, bs, {grid.center({0, 0}), 3, 0});
    CHECK(r.beams == std::vector<Beam>{{1, 0}, {0, 1}, {0, 0}});

    CHECK_THROWS_AS(type_b_baseline(MeasurementDb{}, grid, bs, {{20, 0}, 1, 0}), std::invalid_argument);
    CHECK_THROWS_AS(type_b_baseline(db, grid, bs, {{20, 0}, 5, 0}), std::invalid_argument);
}

TEST_CASE("perturb_position is uniform on the disk") {
    std::mt19937_64 rng(5);
    const Point2 g{3, -4};
    CHECK(perturb_position(g, 0, rng).x == 3);
    CHECK(perturb_position(g, 0, rng).y == -4);
    const double d = 10;
    double sum = 0;
    const int n = 100000;
    int inner_half = 0;
    for (int i = 0; i < n; ++i) {
        const double r = distance(perturb_position(g, d, rng), g);
        REQUIRE(r <= d);
        sum += r;
        inner_half += r <= d / std::sqrt(2.0);
    }
    CHECK_THAT(sum / n, WithinRel(2 * d / 3, 0.01));
    CHECK_THAT(static_cast<double>(inner_half) / n, WithinAbs(0.5, 0.01)); // half the area
    CHECK_THROWS_AS(perturb_position(g, -1, rng), std::invalid_argument);
}

TEST_CASE("spectral efficiency bookkeeping") {
    const auto a = spectral_efficiency(10, 0.5, 5, 16);
    CHECK_THAT(a.t_train, WithinAbs(0.81e-3, 1e-15));
    CHECK_THAT(a.f_comm, WithinAbs(0.919, 1e-12));
    CHECK(a.feasible);
    CHECK_THAT(a.se, WithinAbs(0.919 * std::log2(1 + 10 * 0.5), 1e-12));

    const auto ex = spectral_efficiency(10, 1.0, 256, 16);
    CHECK_THAT(ex.t_train, WithinAbs(40.97e-3, 1e-15));
    CHECK_FALSE(ex.feasible);
    CHECK(ex.se == 0);

    CHECK(spectral_efficiency(30, 0.0, 5, 16).se == 0);
    const auto desk = spectral_efficiency(0, 1.0, 64, 4);
    CHECK(desk.feasible);
    CHECK_THAT(desk.t_train, WithinAbs(2.57e-3, 1e-15));

    const std::vector<double> gains{0.0, 1.0, 3.0};
    const auto m = mean_spectral_efficiency(0, gains, 5, 16);
    CHECK_THAT(m.se, WithinAbs(0.919 * (0 + 1 + 2) / 3.0, 1e-12));
    CHECK(mean_spectral_efficiency(0, gains, 256, 16).se == 0);
}

TEST_CASE("power loss examples") {
    const Fixture f;
    const std::size_t k = f.snap.nbeams();
    const std::size_t c_theta = f.scene.bs_array.c_theta;
    const Area area = f.grid.area();

    CHECK(power_loss_probability(f.snap, area, c_theta, f.genie(), k, 1, 0.0, 1).probability == 0.0);

    // A beam that is never the best at any coordinate.
    std::vector<bool> is_best(k, false);
    for (std::size_t c = 0; c < f.snap.ncoords(); ++c) {
        Eigen::Index b;
        f.snap.power.row(static_cast<Eigen::Index>(c)).maxCoeff(&b);
        is_best[static_cast<std::size_t>(b)] = true;
    }
    const auto never = static_cast<std::size_t>(std::find(is_best.begin(), is_best.end(), false) - is_best.begin());
    REQUIRE(never < k);
    const RecoFn wrong = [&](Point2, std::size_t) {
        return RecoResult{{{never % c_theta, never / c_theta}}, {0.0}};
    };
    CHECK(power_loss_probability(f.snap, area, c_theta, wrong, 1, 2, 3.0, 1).probability == 1.0);

    // Genie with one beam: loss exactly where the label argmax differs from the
    // coordinate argmax.
    std::size_t hits = 0;
    for (std::size_t c = 0; c < f.snap.ncoords(); ++c) {
        const Label p = pos_label(f.grid, f.snap.coords[c]);
        auto M = f.truth.as_matrix(2);
        Eigen::Index lab_best, coord_best;
        M.row(static_cast<Eigen::Index>(label_index(f.grid, p))).maxCoeff(&lab_best);
        f.snap.power.row(static_cast<Eigen::Index>(c)).maxCoeff(&coord_best);
        hits += lab_best == coord_best;
    }
    const double frac = static_cast<double>(hits) / static_cast<double>(f.snap.ncoords());
    CHECK_THAT(power_loss_probability(f.snap, area, c_theta, f.genie(), 1, 1, 0.0, 9).probability,
               WithinAbs(1.0 - frac, 1e-15));
}

TEST_CASE("power loss is non-increasing in the set size") {
    const Fixture f;
    const std::size_t c_theta = f.scene.bs_array.c_theta;
    // A noisy completion stand-in: truth with a smooth multiplicative distortion.
    Tensor est = f.truth;
    for (std::size_t i = 0; i < est.size(); ++i) est[i] *= 1.0 + 0.5 * std::sin(0.37 * static_cast<double>(i));
    const RecoFn b = [&](Point2 g, std::size_t n) { return bss(est, f.grid, {g, n, 0.0}); };
    const std::vector<std::size_t> sizes{1, 2, 3, 5, 8, 13, 64};
    for (const RecoFn &fn : {f.genie(), b}) {
        const auto curve = power_loss_curve(f.snap, f.grid.area(), c_theta, fn, sizes, 2, 4.0, 3, true);
        for (std::size_t j = 1; j < curve.size(); ++j) CHECK(curve[j].probability <= curve[j - 1].probability);
        CHECK(curve.back().probability == 0.0);
        for (const auto &e : curve) {
            CHECK(e.samples == 2 * f.snap.ncoords());
            CHECK(e.gain_ratios.size() == e.samples);
            for (double g : e.gain_ratios) CHECK((g >= 0 && g <= 1 + 1e-12));
            // Consistent with the single-size estimate under the same seed.
            CHECK(power_loss_probability(f.snap, f.grid.area(), c_theta, fn, e.n_tr, 2, 4.0, 3).probability ==
                  e.probability);
        }
    }
}

TEST_CASE("G-BSS at zero error is identical to BSS inside the loss estimate") {
    const Fixture f;
    const std::size_t c_theta = f.scene.bs_array.c_theta;
    const RecoFn b = [&](Point2 g, std::size_t n) { return bss(f.truth, f.grid, {g, n, 0.0}); };
    const RecoFn gb = [&](Point2 g, std::size_t n) { return gbss(f.truth, f.grid, {g, n, 0.0}); };
    const std::vector<std::size_t> sizes{1, 2, 4};
    const auto x = power_loss_curve(f.snap, f.grid.area(), c_theta, b, sizes, 1, 0.0, 7, true);
    const auto y = power_loss_curve(f.snap, f.grid.area(), c_theta, gb, sizes, 1, 0.0, 7, true);
    for (std::size_t j = 0; j < sizes.size(); ++j) {
        CHECK(x[j].probability == y[j].probability);
        CHECK(x[j].gain_ratios == y[j].gain_ratios);
    }
}
