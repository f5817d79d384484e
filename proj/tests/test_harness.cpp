// SPDX-License-Identifier: Apache-2.0
#include "hntc/harness.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <sstream>

using namespace hntc;
using Catch::Matchers::WithinAbs;

namespace {

std::string csv_of(const std::vector<ResultRow> &rows) {
    std::ostringstream os;
    write_csv(os, rows);
    return os.str();
}

ExperimentConfig tiny_config() {
    ExperimentConfig c;
    c.seeds = {1, 2};
    c.k_op = {0.4};
    c.k_tr = {0.02, 0.1};
    c.instants = 3;
    return c;
}

} // namespace

TEST_CASE("rse examples") {
    Tensor t({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
    CHECK(rse(t, t) == 0.0);
    CHECK(rse(Tensor(t.shape()), t) == 1.0);
    CHECK_THAT(rse(t * 2.0, t), WithinAbs(1.0, 1e-15));
    CHECK_THROWS_AS(rse(t, Tensor(t.shape())), std::invalid_argument);
    CHECK_THROWS_AS(rse(t, Tensor({3, 2})), std::invalid_argument);
}

TEST_CASE("summary statistics and formatting") {
    const auto m = mean_stderr({1, 2, 3, 4});
    CHECK(m.mean == 2.5);
    CHECK_THAT(m.std_err, WithinAbs(std::sqrt(5.0 / 3.0 / 4.0), 1e-15));
    CHECK(m.n == 4);
    CHECK(mean_stderr({7}).std_err == 0);
    CHECK(fmt_num(0.1) == "0.1");
    CHECK(fmt_num(1.0 / 3) == "0.3333333333");
    CHECK(params_string({{"a", "1"}, {"b", "x"}}) == "a=1 b=x");
    CHECK(n_tr_for(0.02, 64) == 1);
    CHECK(n_tr_for(0.05, 64) == 3);
    CHECK(n_tr_for(0.5, 64) == 32);
    CHECK(n_tr_for(1.0, 64) == 64);
    CHECK(n_tr_for(0.001, 64) == 1);
}

TEST_CASE("row collector groups per parameter point and carries seeds") {
    RowCollector rc("exp", {11, 12, 13});
    rc.add(1, {{"k", "a"}}, "m", 2.0);
    rc.add(0, {{"k", "a"}}, "m", 1.0);
    rc.add(0, {{"k", "b"}}, "m", 5.0);
    rc.add(2, {{"k", "a"}}, "m", 3.0);
    const auto rows = rc.rows();
    REQUIRE(rows.size() == 6);
    CHECK(rows[0].seed == "11");
    CHECK(rows[1].seed == "12");
    CHECK(rows[2].seed == "13");
    CHECK(rows[3].summary);
    CHECK(rows[3].seed == "11;12;13");
    CHECK(rows[3].mean == 2.0);
    CHECK(rows[3].n == 3);
    CHECK(rows[5].mean == 5.0);
    CHECK(rows[5].std_err == 0.0);
    CHECK(seed_values(rows, "m", {{"k", "a"}}) == std::vector<double>{1, 2, 3});
    CHECK(seed_values(rows, "m", {}).size() == 4);
    CHECK(seed_values(rows, "other", {}).empty());
    for (const auto &r : rows) CHECK(!r.seed.empty());

    const std::string csv = csv_of(rows);
    CHECK(csv.rfind("experiment,params,metric,value,mean,stderr,n,seed,row\nexp,k=a,m,1,1,0,1,11,seed\n", 0) == 0);
    CHECK(csv.find("exp,k=a,m,2,2,0.5773502692,3,11;12;13,summary\n") != std::string::npos);
}

TEST_CASE("config overlay, validation, and hashing") {
    ExperimentConfig c;
    CHECK_NOTHROW(c.validate());
    merge_config(c, nlohmann::json::parse(R"({"k_op": [0.5], "snr_r_db": 20, "hntc": {"lambda": 0.5},
                                             "eta": 0.01, "seeds": [3, 4]})"));
    CHECK(c.k_op == std::vector<double>{0.5});
    CHECK(c.snr_r_db == 20.0);
    CHECK(c.hntc.lambda == 0.5);
    CHECK(c.eta.fixed == 0.01);
    CHECK(c.seeds == std::vector<std::uint64_t>{3, 4});
    CHECK_THROWS_AS(merge_config(c, nlohmann::json::parse(R"({"k_opp": [0.5]})")), std::invalid_argument);
    CHECK_THROWS_AS(merge_config(c, nlohmann::json::parse("[1]")), std::invalid_argument);

    ExperimentConfig back;
    merge_config(back, to_json(c));
    CHECK(to_json(back) == to_json(c));
    CHECK(config_hash(back) == config_hash(c));
    CHECK(config_hash(ExperimentConfig{}) != config_hash(c));
    CHECK(config_hash(c).size() == 16);
    CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);

    auto bad = [](auto mutate) {
        ExperimentConfig c;
        mutate(c);
        CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    };
    bad([](ExperimentConfig &c) { c.k_op = {0.0}; });
    bad([](ExperimentConfig &c) { c.k_tr = {1.5}; });
    bad([](ExperimentConfig &c) { c.seeds.clear(); });
    bad([](ExperimentConfig &c) { c.alpha = 0; });
    bad([](ExperimentConfig &c) { c.weightings = {"equal"}; });
    bad([](ExperimentConfig &c) { c.gps_d = {-1}; });
    bad([](ExperimentConfig &c) { c.hntc.lambda = -1; });
    bad([](ExperimentConfig &c) { c.eta.fixed = -1.0; });
}

TEST_CASE("nearest position copy fills unobserved labels") {
    const GridSpec grid{0, 10, 0, 5, 5}; // 3 x 2 labels
    Tensor t({3, 2, 1, 2}), v({3, 2, 1, 2});
    t({0, 0, 0, 0}) = 1;
    v({0, 0, 0, 0}) = 1;
    t({2, 1, 0, 1}) = 4;
    v({2, 1, 0, 1}) = 2;
    const Tensor out = nearest_position_copy(t, v, grid);
    // (1, 0): squared distance 1 to (0, 0), 2 to (2, 1).
    CHECK(out({1, 0, 0, 0}) == 1);
    CHECK(out({0, 1, 0, 0}) == 1);
    CHECK(out({2, 0, 0, 1}) == 4);
    // (1, 1): distance 2 to (0, 0), 1 to (2, 1).
    CHECK(out({1, 1, 0, 1}) == 4);
    CHECK(out({0, 0, 0, 1}) == 0); // observed labels keep their own slice
    CHECK(out({2, 1, 0, 0}) == 0);
}

TEST_CASE("noise budget rule") {
    DataTensors d{Tensor({1, 1, 1, 2}, std::vector<double>{2, 1}), Tensor({1, 1, 1, 2}, std::vector<double>{1, 3}),
                  Tensor({1, 1, 1, 2}, std::vector<double>{0.25, 0.75})};
    EtaRule rule;
    CHECK_THAT(choose_eta(d, d.w, rule), WithinAbs(1e-7 * (0.25 * 4 + 0.75 * 1), 1e-20));
    rule.fixed = 0.3;
    CHECK(choose_eta(d, d.w, rule, {1.0}) == 0.3);
    rule = {};
    rule.rel_floor = 0;
    rule.noise_factor = 1;
    const double s2 = 0.5;
    const double want = 0.25 * ((2 * 2 * s2 + s2 * s2) / 1 + s2 * s2) + 0.75 * ((2 * 1 * s2 + s2 * s2) / 3 + s2 * s2);
    CHECK_THAT(choose_eta(d, d.w, rule, {s2}), WithinAbs(want, 1e-15));
    CHECK_THROWS_AS(choose_eta(d, d.w, rule, {s2, s2}), std::invalid_argument);
}

TEST_CASE("fully observed noiseless sweep recovers the truth") {
    ExperimentConfig c;
    c.seeds = {1};
    c.k_op = {1.0};
    c.top_fraction = 1.0;
    const auto rows = run_rse_sweep(c);
    const auto r = seed_values(rows, "rse", {{"method", "hntc"}});
    REQUIRE(r.size() == 1);
    CHECK(r[0] <= 1e-3);
    CHECK(seed_values(rows, "converged", {{"method", "hntc"}}) == std::vector<double>{1.0});
    CHECK(seed_values(rows, "rse", {{"method", "zero_fill"}}).at(0) <= 1e-12);
}

TEST_CASE("experiments are deterministic") {
    const auto c = tiny_config();
    CHECK(csv_of(run_rse_sweep(c)) == csv_of(run_rse_sweep(c)));
    CHECK(csv_of(run_gps_noise_study(c)) == csv_of(run_gps_noise_study(c)));
}

TEST_CASE("G-BSS equals BSS without position error") {
    auto c = tiny_config();
    c.gps_d = {0};
    const auto rows = run_gps_noise_study(c);
    for (double kt : c.k_tr) {
        const Params at{{"k_tr", fmt_num(kt)}};
        auto with = [&](const char *m) {
            Params p = at;
            p.push_back({"method", m});
            return seed_values(rows, "power_loss", p);
        };
        CHECK(with("bss") == with("gbss"));
        CHECK(with("bss").size() == 2);
    }
}

TEST_CASE("warm start instant zero is the cold solve") {
    auto c = tiny_config();
    c.seeds = {3};
    const auto rows = run_warm_start_study(c);
    for (const char *metric : {"iterations", "rse"})
        CHECK(seed_values(rows, metric, {{"instant", "0"}, {"method", "warm"}}) ==
              seed_values(rows, metric, {{"instant", "0"}, {"method", "cold"}}));
    CHECK(seed_values(rows, "iterations", {{"method", "warm"}}).size() == 4);
    c.instants = 2;
    CHECK_THROWS_AS(run_warm_start_study(c), std::invalid_argument);
}

TEST_CASE("outputs: CSV plus manifest") {
    const auto dir = std::filesystem::temp_directory_path() / "hntc_harness_test";
    std::filesystem::remove_all(dir);
    RowCollector rc("demo", {5});
    rc.add(0, {{"p", "1"}}, "m", 0.5);
    const auto c = tiny_config();
    const auto csv = write_outputs(dir.string(), "demo", c, rc.rows());
    std::ifstream is(csv);
    std::stringstream ss;
    ss << is.rdbuf();
    CHECK(ss.str() == csv_of(rc.rows()));
    std::ifstream js(dir / "demo.json");
    const auto m = nlohmann::json::parse(js);
    CHECK(m.at("config_hash") == config_hash(c));
    CHECK(m.at("version") == kVersion);
    CHECK(m.at("seeds") == nlohmann::json(c.seeds));
    std::filesystem::remove_all(dir);
}
