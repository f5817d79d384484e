// SPDX-License-Identifier: Apache-2.0
#include "hntc/measurement_db.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

using namespace hntc;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

const GridSpec kGrid{10, 60, -25, 25, 5};

} // namespace

TEST_CASE("grid geometry") {
    CHECK(kGrid.lx() == 11);
    CHECK(kGrid.ly() == 11);
    CHECK(kGrid.npos() == 121);
    const GridSpec odd{0, 12, 0, 5, 5};
    CHECK(odd.lx() == 4); // ceil(12/5) + 1
    CHECK(odd.ly() == 2);
    CHECK_THROWS_AS((GridSpec{0, 1, 0, 1, 0}.validate()), std::invalid_argument);
}

TEST_CASE("pos_label examples") {
    auto one_based = [](Label p) { return std::pair{p.px + 1, p.py + 1}; };
    CHECK(one_based(pos_label(kGrid, {10, -25})) == std::pair<std::size_t, std::size_t>{1, 1});
    CHECK(one_based(pos_label(kGrid, {60, 25})) == std::pair<std::size_t, std::size_t>{11, 11});
    CHECK(one_based(pos_label(kGrid, {22.4, -25})) == std::pair<std::size_t, std::size_t>{3, 1});
    CHECK(one_based(pos_label(kGrid, {22.5, -22.5})) == std::pair<std::size_t, std::size_t>{4, 2});
    CHECK_THROWS_AS(pos_label(kGrid, {9.99, 0}), std::out_of_range);
    CHECK_THROWS_AS(pos_label(kGrid, {30, 25.01}), std::out_of_range);
}

TEST_CASE("pos_label is surjective over the reference coordinates") {
    const auto pts = reference_coordinates(default_scene(1));
    std::set<Label> seen;
    std::vector<int> count(kGrid.npos(), 0);
    for (const auto &g : pts) {
        const Label p = pos_label(kGrid, g);
        seen.insert(p);
        ++count[label_index(kGrid, p)];
    }
    CHECK(seen.size() == 121);
    // About 2601 / 121 coordinates per label.
    CHECK(*std::min_element(count.begin(), count.end()) >= 9);
    CHECK(*std::max_element(count.begin(), count.end()) <= 36);
}

TEST_CASE("record examples") {
    const Label p{0, 0};
    const Beam b{1, 2};
    {
        MeasurementDb db;
        const auto &r = db.record(p, b, 5.2);
        CHECK(r.r_bar == 5.2);
        CHECK(r.n_bar == 1.0);
    }
    {
        MeasurementDb db(1.0);
        db.record(p, b, 4);
        const auto &r = db.record(p, b, 6);
        CHECK(r.r_bar == 5.0);
        CHECK(r.n_bar == 2.0);
    }
    {
        MeasurementDb db(0.5);
        db.record(p, b, 4);
        const auto &r = db.record(p, b, 6);
        CHECK(r.n_bar == 1.5);
        CHECK_THAT(r.r_bar, WithinAbs(16.0 / 3, 1e-15));
    }
    MeasurementDb db;
    CHECK_THROWS_AS(db.record(p, b, -1), std::invalid_argument);
    CHECK_THROWS_AS(MeasurementDb(0.0), std::invalid_argument);
    CHECK_THROWS_AS(MeasurementDb(1.5), std::invalid_argument);
}

TEST_CASE("recursion matches the explicit discounted average") {
    // Measurements land on a few keys in random order; each call is one slot.
    // Closed form per key: sum_l alpha^(t - l) chi_l r_l / sum_l alpha^(t - l) chi_l.
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> power(0.0, 10.0);
    for (double alpha : {0.5, 0.9, 1.0}) {
        for (int seq = 0; seq < 100; ++seq) {
            MeasurementDb db(alpha);
            const std::size_t nkeys = 1 + rng() % 4, len = 1 + rng() % 40;
            std::vector<std::vector<std::pair<std::size_t, double>>> hist(nkeys);
            for (std::size_t slot = 1; slot <= len; ++slot) {
                const std::size_t k = rng() % nkeys;
                const double r = power(rng);
                db.record({k, 0}, {0, 0}, r);
                hist[k].push_back({slot, r});
            }
            for (std::size_t k = 0; k < nkeys; ++k) {
                if (hist[k].empty()) continue;
                double num = 0, den = 0, sum = 0;
                const auto t_last = static_cast<double>(hist[k].back().first);
                const auto t_now = static_cast<double>(len);
                for (auto [slot, r] : hist[k]) {
                    const double w = std::pow(alpha, t_last - static_cast<double>(slot));
                    num += w * r;
                    den += w;
                    sum += r;
                }
                const auto &rec = db.records().at({{k, 0}, {0, 0}});
                CHECK_THAT(rec.r_bar, WithinAbs(num / den, 1e-10));
                CHECK_THAT(rec.n_bar, WithinAbs(den, 1e-10));
                CHECK_THAT(db.weighted_count({{k, 0}, {0, 0}}), WithinAbs(den * std::pow(alpha, t_now - t_last), 1e-10));
                if (alpha == 1.0) {
                    CHECK_THAT(rec.r_bar, WithinAbs(sum / static_cast<double>(hist[k].size()), 1e-12));
                }
            }
        }
    }
}

TEST_CASE("build_tensors weights") {
    const ArraySpec bs{4, 4, 4, 4};
    MeasurementDb one;
    one.record({2, 3}, {1, 1}, 7.0);
    const auto d1 = build_tensors(one, kGrid, bs);
    CHECK(d1.t.shape() == Shape{11, 11, 4, 4});
    CHECK(d1.w({2, 3, 1, 1}) == 1.0);
    CHECK(d1.t({2, 3, 1, 1}) == 7.0);

    MeasurementDb two;
    two.put({0, 0}, {0, 0}, 1.0, 1.0);
    two.put({5, 5}, {3, 2}, 2.0, 3.0);
    const auto d2 = build_tensors(two, kGrid, bs);
    CHECK(d2.w({0, 0, 0, 0}) == 0.25);
    CHECK(d2.w({5, 5, 3, 2}) == 0.75);
    double wsum = 0;
    for (std::size_t i = 0; i < d2.w.size(); ++i) {
        wsum += d2.w[i];
        CHECK((d2.w[i] > 0) == (d2.v[i] > 0));
        if (d2.v[i] == 0) CHECK(d2.t[i] == 0);
    }
    CHECK_THAT(wsum, WithinAbs(1.0, 1e-15));

    const Tensor u = uniform_weights(d2.v);
    CHECK(u({0, 0, 0, 0}) == 0.5);
    CHECK(u({5, 5, 3, 2}) == 0.5);
    CHECK_THROWS_AS(build_tensors(MeasurementDb{}, kGrid, bs), std::invalid_argument);
}

TEST_CASE("position sampling") {
    CHECK(choose_positions(kGrid, 0.4, 7).size() == 49);
    CHECK(choose_positions(kGrid, 1.0, 7).size() == 121);
    CHECK(choose_positions(kGrid, 0.3, 7).size() == 37);
    const auto a = choose_positions(kGrid, 0.4, 7), b = choose_positions(kGrid, 0.4, 7),
               c = choose_positions(kGrid, 0.4, 8);
    CHECK(a == b);
    CHECK(a != c);
    CHECK(std::set<Label>(a.begin(), a.end()).size() == a.size());
    CHECK_THROWS_AS(choose_positions(kGrid, 0.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(choose_positions(kGrid, 1.1, 1), std::invalid_argument);
    CHECK(fraction_count(0.1, 64) == 6);
    CHECK(fraction_count(0.02, 64) == 1);
    CHECK(fraction_count(0.25, 2) == 1); // half rounds up
}

TEST_CASE("full noiseless observation reproduces the ground truth") {
    Scene s = default_scene(5);
    s.ref_per_axis = 21;
    const auto snap = snapshot(s);
    const GridSpec grid = GridSpec::from_scene(s);
    SamplingOptions opt;
    opt.top_fraction = 1.0;
    const auto db = sample_observations(snap, grid, s.bs_array, 1.0, 1.0, opt, 3);
    const auto d = build_tensors(db, grid, s.bs_array);
    const Tensor truth = truth_tensor(snap, grid, s.bs_array);
    for (std::size_t i = 0; i < truth.size(); ++i) CHECK_THAT(d.t[i], WithinRel(truth[i], 1e-12));
}

TEST_CASE("top-fraction sampling stores the strongest beams per coordinate") {
    Scene s = default_scene(6);
    s.ref_per_axis = 11; // one coordinate per label
    const auto snap = snapshot(s);
    const GridSpec grid = GridSpec::from_scene(s);
    SamplingOptions opt;
    opt.ranking = TopRanking::Noiseless;
    const auto db = sample_observations(snap, grid, s.bs_array, 0.4, 1.0, opt, 11);
    CHECK(db.observed_positions().size() == 49);
    CHECK(db.size() == 49 * 6);
    for (const auto &[k, rec] : db.records()) {
        std::size_t c = 0;
        while (pos_label(grid, snap.coords[c]) != k.p) ++c;
        const auto row = snap.power.row(static_cast<Eigen::Index>(c));
        const double v = row(static_cast<Eigen::Index>(k.b.u + s.bs_array.c_theta * k.b.v));
        CHECK(std::count_if(row.begin(), row.end(), [&](double x) { return x > v; }) < 6);
    }

    SamplingOptions noisy;
    noisy.noise.snr_r_db = 10.0;
    const auto n1 = sample_observations(snap, grid, s.bs_array, 0.4, 1.0, noisy, 11);
    const auto n2 = sample_observations(snap, grid, s.bs_array, 0.4, 1.0, noisy, 11);
    REQUIRE(n1.size() == n2.size());
    for (const auto &[k, rec] : n1.records()) CHECK(n2.records().at(k).r_bar == rec.r_bar);
}

TEST_CASE("database file round trip") {
    MeasurementDb db(0.9);
    db.record({0, 1}, {2, 3}, 0.125);
    db.record({4, 4}, {0, 0}, 3.0);
    db.record({0, 1}, {2, 3}, 0.5);
    std::ostringstream os;
    write_db(os, db);
    CHECK(os.str().rfind("p_x,p_y,u,v,r_bar,n_bar\n1,2,3,4,", 0) == 0);
    std::istringstream is(os.str());
    const auto back = read_db(is);
    REQUIRE(back.size() == 2);
    for (const auto &[k, rec] : db.records()) {
        CHECK(back.records().at(k).r_bar == rec.r_bar);
        CHECK(back.weighted_count(k) == db.weighted_count(k));
    }
    std::istringstream bad("p_x,p_y,u,v,r_bar,n_bar\n0,1,1,1,1,1\n");
    CHECK_THROWS_AS(read_db(bad), std::runtime_error);
}
