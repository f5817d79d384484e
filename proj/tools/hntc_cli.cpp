// SPDX-License-Identifier: Apache-2.0
#include "hntc/harness.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

namespace {

using namespace hntc;

struct SceneOpts {
    std::string scene_file;
    std::uint64_t seed = 1;
    bool full_profile = false;

    void add(CLI::App *app) {
        app->add_option("--scene", scene_file, "scene JSON file (default: generated from --seed)");
        app->add_option("--seed", seed, "scene seed");
        app->add_flag("--full-profile", full_profile, "16x16 BS / 4x4 UE arrays");
    }
    Scene load() const {
        if (!scene_file.empty()) return load_scene(scene_file);
        return full_profile ? full_profile_scene(seed) : default_scene(seed);
    }
};

struct ExperimentOpts {
    std::string config_file;
    std::string out_dir;
    std::vector<std::uint64_t> seeds;
    std::vector<double> k_op, k_tr, gps_d;
    std::optional<double> snr, alpha, top_fraction, lambda, gamma, eta;
    std::optional<std::size_t> trials, max_iter;
    std::vector<std::string> weightings;
    bool full_profile = false;

    void add(CLI::App *app) {
        app->add_option("--config", config_file, "JSON experiment config");
        app->add_option("--out-dir", out_dir, "output directory (overrides HNTC_OUTPUT_DIR)");
        app->add_option("--seeds", seeds, "seed list");
        app->add_option("--k-op", k_op, "observed position ratios");
        app->add_option("--k-tr", k_tr, "trained beam ratios");
        app->add_option("--gps-d", gps_d, "position error radii [m]");
        app->add_option("--snr-r-db", snr, "reference SNR of the measurement noise [dB]");
        app->add_option("--alpha", alpha, "database discount factor");
        app->add_option("--top-fraction", top_fraction, "fraction of BS beams stored per coordinate");
        app->add_option("--lambda", lambda, "ADMM penalty");
        app->add_option("--gamma", gamma, "LTTV weight");
        app->add_option("--eta", eta, "fixed noise budget");
        app->add_option("--trials", trials, "Monte Carlo trials");
        app->add_option("--max-iter", max_iter, "ADMM iteration cap");
        app->add_option("--weights", weightings, "count and/or uniform");
        app->add_flag("--full-profile", full_profile, "16x16 BS / 4x4 UE arrays");
    }

    ExperimentConfig build() const {
        ExperimentConfig c = config_file.empty() ? ExperimentConfig{} : load_config(config_file);
        if (const char *env = std::getenv("HNTC_OUTPUT_DIR"); env && *env) c.output_dir = env;
        if (!out_dir.empty()) c.output_dir = out_dir;
        if (!seeds.empty()) c.seeds = seeds;
        if (!k_op.empty()) c.k_op = k_op;
        if (!k_tr.empty()) c.k_tr = k_tr;
        if (!gps_d.empty()) c.gps_d = gps_d;
        if (snr) c.snr_r_db = snr;
        if (alpha) c.alpha = *alpha;
        if (top_fraction) c.top_fraction = *top_fraction;
        if (lambda) c.hntc.lambda = *lambda;
        if (gamma) c.hntc.gamma = *gamma;
        if (eta) c.eta.fixed = eta;
        if (trials) c.trials = *trials;
        if (max_iter) c.hntc.max_iter = *max_iter;
        if (!weightings.empty()) c.weightings = weightings;
        if (full_profile) c.full_profile = true;
        c.validate();
        return c;
    }
};

void print_summary(const std::vector<ResultRow> &rows) {
    for (const auto &r : rows)
        if (r.summary)
            std::cout << params_string(r.params) << "  " << r.metric << " = " << fmt_num(r.mean) << " +- "
                      << fmt_num(r.std_err) << " (n=" << r.n << ")\n";
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Position-aided beam recommendation with hybrid noisy tensor completion"};
    app.require_subcommand(1);

    SceneOpts gs_scene;
    std::string gs_out;
    auto *gen_scene = app.add_subcommand("gen-scene", "write a synthetic scene description");
    gs_scene.add(gen_scene);
    gen_scene->add_option("--out", gs_out, "output JSON")->required();

    SceneOpts gt_scene;
    std::string gt_out;
    auto *gen_truth = app.add_subcommand("gen-truth", "write the ground-truth power tensor");
    gt_scene.add(gen_truth);
    gen_truth->add_option("--out", gt_out, "output tensor file")->required();

    SceneOpts sd_scene;
    std::string sd_out;
    double sd_k_op = 0.4, sd_alpha = 1.0, sd_top = 0.1;
    std::optional<double> sd_snr;
    std::uint64_t sd_sample_seed = 1;
    auto *sample_db = app.add_subcommand("sample-db", "measure a random subset of positions into a database");
    sd_scene.add(sample_db);
    sample_db->add_option("--k-op", sd_k_op, "observed position ratio");
    sample_db->add_option("--alpha", sd_alpha, "discount factor");
    sample_db->add_option("--top-fraction", sd_top, "fraction of BS beams stored per coordinate");
    sample_db->add_option("--snr-r-db", sd_snr, "reference SNR [dB]; noiseless when omitted");
    sample_db->add_option("--sample-seed", sd_sample_seed, "sampling seed");
    sample_db->add_option("--out", sd_out, "output database CSV")->required();

    SceneOpts cp_scene;
    std::string cp_db, cp_out, cp_trace;
    HntcConfig cp_cfg;
    EtaRule cp_eta;
    std::optional<double> cp_snr;
    std::string cp_weights = "count";
    auto *complete = app.add_subcommand("complete", "run HNTC on a database file");
    cp_scene.add(complete);
    complete->add_option("--db", cp_db, "database CSV")->required();
    complete->add_option("--out", cp_out, "output tensor file")->required();
    complete->add_option("--trace", cp_trace, "per-iteration trace CSV");
    complete->add_option("--lambda", cp_cfg.lambda, "ADMM penalty");
    complete->add_option("--gamma", cp_cfg.gamma, "LTTV weight");
    complete->add_option("--beta2", cp_cfg.beta2, "fixed step for the noise-budget multiplier");
    complete->add_option("--beta2-rel", cp_cfg.beta2_rel, "multiplier step relative to the budget");
    complete->add_option("--max-iter", cp_cfg.max_iter, "iteration cap");
    complete->add_option("--eta", cp_eta.fixed, "fixed noise budget");
    complete->add_option("--snr-r-db", cp_snr, "measurement SNR; sizes the automatic noise budget");
    complete->add_option("--weights", cp_weights, "count or uniform")->check(CLI::IsMember({"count", "uniform"}));

    SceneOpts rc_scene;
    std::string rc_tensor;
    double rc_x = 0, rc_y = 0, rc_d = 0, rc_zeta = 0.4;
    std::size_t rc_ntr = 1;
    auto *recommend = app.add_subcommand("recommend", "recommend BS beams for one reported position");
    rc_scene.add(recommend);
    recommend->add_option("--tensor", rc_tensor, "completed tensor file")->required();
    recommend->add_option("--x", rc_x, "reported x [m]")->required();
    recommend->add_option("--y", rc_y, "reported y [m]")->required();
    recommend->add_option("--n-tr", rc_ntr, "number of beams");
    recommend->add_option("--d", rc_d, "position error radius [m]; > 0 selects G-BSS");
    recommend->add_option("--zeta", rc_zeta, "G-BSS grouping factor");

    ExperimentOpts eo[4];
    auto *sweep = app.add_subcommand("sweep-rse", "RSE versus observed position ratio");
    auto *beams = app.add_subcommand("eval-beams", "power loss and spectral efficiency curves");
    auto *warm = app.add_subcommand("warm-start", "warm versus cold start over database updates");
    auto *gps = app.add_subcommand("gps-noise", "BSS versus G-BSS under position error");
    CLI::App *exps[4] = {sweep, beams, warm, gps};
    for (int i = 0; i < 4; ++i) eo[i].add(exps[i]);

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen_scene->parsed()) {
            save_scene(gs_out, gs_scene.load());
        } else if (gen_truth->parsed()) {
            const Scene s = gt_scene.load();
            const auto snap = snapshot(s);
            save_tensor(gt_out, truth_tensor(snap, GridSpec::from_scene(s), s.bs_array));
        } else if (sample_db->parsed()) {
            const Scene s = sd_scene.load();
            SamplingOptions opt;
            opt.top_fraction = sd_top;
            opt.noise.snr_r_db = sd_snr;
            const auto db = sample_observations(snapshot(s), GridSpec::from_scene(s), s.bs_array, sd_k_op,
                                                sd_alpha, opt, sd_sample_seed);
            save_db(sd_out, db);
        } else if (complete->parsed()) {
            const Scene s = cp_scene.load();
            const auto db = load_db(cp_db);
            const GridSpec grid = GridSpec::from_scene(s);
            const auto d = build_tensors(db, grid, s.bs_array);
            cp_cfg.record_trace = !cp_trace.empty();
            HntcProblem p{d.t, cp_weights == "uniform" ? uniform_weights(d.v) : d.w, cp_cfg};
            std::vector<double> sigma2;
            if (cp_snr) {
                MeasurementParams noise;
                noise.snr_r_db = cp_snr;
                sigma2 = noise_floor(snapshot(s), grid, noise);
            }
            p.config.eta = choose_eta(d, p.w, cp_eta, sigma2);
            const auto res = solve(p);
            save_tensor(cp_out, res.x);
            if (!cp_trace.empty()) {
                std::ofstream os(cp_trace);
                write_trace_csv(os, res.trace);
            }
            std::cout << "iterations " << res.iterations << " converged " << res.converged << " gap "
                      << fmt_num(res.primal_gap) << " constraint " << fmt_num(res.constraint_value) << '\n';
            if (!res.converged) std::cerr << "warning: iteration cap reached before convergence\n";
        } else if (recommend->parsed()) {
            const Scene s = rc_scene.load();
            const auto t = load_tensor(rc_tensor);
            const GridSpec grid = GridSpec::from_scene(s);
            const RecoRequest req{{rc_x, rc_y}, rc_ntr, rc_d};
            const auto r = rc_d > 0 ? gbss(t, grid, req, rc_zeta) : bss(t, grid, req);
            const Label p = pos_label(grid, req.g);
            std::cout << "label " << p.px + 1 << ' ' << p.py + 1 << '\n';
            for (std::size_t i = 0; i < r.beams.size(); ++i)
                std::cout << r.beams[i].u + 1 << ' ' << r.beams[i].v + 1 << ' ' << fmt_num(r.scores[i]) << '\n';
        } else {
            const char *names[4] = {"rse_sweep", "beam_alignment", "warm_start", "gps_noise"};
            for (int i = 0; i < 4; ++i) {
                if (!exps[i]->parsed()) continue;
                const auto cfg = eo[i].build();
                std::vector<ResultRow> rows;
                switch (i) {
                case 0: rows = run_rse_sweep(cfg); break;
                case 1: rows = run_beam_alignment_eval(cfg); break;
                case 2: rows = run_warm_start_study(cfg); break;
                default: rows = run_gps_noise_study(cfg); break;
                }
                print_summary(rows);
                std::cout << "wrote " << write_outputs(cfg.output_dir, names[i], cfg, rows) << '\n';
            }
        }
    } catch (const SolverError &e) {
        std::cerr << "solver error: " << e.what() << '\n';
        return 3;
    } catch (const std::invalid_argument &e) {
        std::cerr << "invalid input: " << e.what() << '\n';
        return 2;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
