#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "cli_util.hpp"
#include "flab/analysis.hpp"
#include "flab/checkpoint.hpp"
#include "flab/diagnostics.hpp"
#include "flab/metrics.hpp"
#include "flab/svg_plot.hpp"
#include "flab/training.hpp"
#include "flab/vocab.hpp"

namespace flab::cli {

namespace {

// --- dynamics ----------------------------------------------------------------

struct DynamicsOpts {
    std::string run;         // directory with metrics.csv (+ train_loss.csv)
    std::string checkpoints; // alternative: recompute from a checkpoint series
    std::string corpus;      // probe corpus for --checkpoints mode
    std::string out;
    int probe_count = 32;
    int smooth_window = 100;
    bool no_plots = false;
};

std::vector<double> moving_average(const std::vector<double>& v, int window) {
    std::vector<double> out;
    if (v.empty() || window < 1) return out;
    double acc = 0;
    for (size_t i = 0; i < v.size(); ++i) {
        acc += v[i];
        if (i >= static_cast<size_t>(window)) acc -= v[i - static_cast<size_t>(window)];
        const int n = std::min<int>(window, static_cast<int>(i) + 1);
        out.push_back(acc / n);
    }
    return out;
}

void run_dynamics(const DynamicsOpts& o) {
    if (o.run.empty() == o.checkpoints.empty())
        throw ConfigError("give exactly one of --run or --checkpoints");
    const std::string out_dir = o.out.empty() ? (o.run.empty() ? "." : o.run) : o.out;
    require_out_dir(out_dir);

    RunManifest man;
    man.command = "analyze dynamics";
    man.version = kToolkitVersion;
    man.config = {{"run", o.run},           {"checkpoints", o.checkpoints},
                  {"corpus", o.corpus},     {"out", out_dir},
                  {"probe_count", o.probe_count}, {"smooth_window", o.smooth_window},
                  {"no_plots", o.no_plots}};
    man.started_at = iso8601_utc_now();
    man.write(out_dir + "/dynamics_manifest.json");

    diagnostics::ProbeTrajectory traj;
    std::vector<DynamicsRecord> records;

    if (!o.checkpoints.empty()) {
        if (o.corpus.empty()) throw ConfigError("--checkpoints mode needs --corpus");
        std::vector<std::string> paths;
        for (const auto& e : std::filesystem::directory_iterator(o.checkpoints)) {
            const std::string name = e.path().filename().string();
            if (name.rfind("ckpt_", 0) == 0) paths.push_back(e.path().string());
        }
        if (paths.empty()) throw IoError("no ckpt_* files under " + o.checkpoints);
        std::sort(paths.begin(), paths.end());

        // Probe prefixes come from the corpus tail, trimmed to the trained
        // prefix length recorded in the first checkpoint.
        const auto first = load_checkpoint(paths.front());
        const int k = first.model.ccfg.train_prefix_len;
        const auto lines = read_lines(o.corpus);
        std::vector<diagnostics::ProbeSample> probe;
        for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
            const auto words = metrics::split_words(*it);
            if (static_cast<int>(words.size()) < k) continue;
            diagnostics::ProbeSample ps;
            for (int i = 0; i < k; ++i) ps.prefix.push_back(first.model.vocab.id_of(words[size_t(i)]));
            probe.push_back(std::move(ps));
            if (static_cast<int>(probe.size()) >= o.probe_count) break;
        }
        if (probe.size() < 2) throw ConfigError("probe set has fewer than 2 usable lines");
        traj = diagnostics::probe_dynamics(paths, probe);

        std::ofstream os(out_dir + "/dynamics.csv");
        if (!os) throw IoError("cannot write dynamics.csv");
        os << "step,erank,entropy\n";
        for (const auto& p : traj.points)
            os << p.step << "," << fmt10(p.erank) << "," << fmt10(p.entropy) << "\n";
    } else {
        records = read_metrics_csv(o.run + "/metrics.csv");
        std::vector<diagnostics::ProbePoint> pts;
        for (const auto& r : records) pts.push_back({r.step, r.erank, r.entropy});
        traj = diagnostics::summarize_trajectory(std::move(pts));
    }

    // Smoothed per-step loss, when the run kept one.
    nlohmann::json smooth = nlohmann::json::object();
    std::vector<double> loss_steps, loss_total;
    const std::string loss_csv = o.run.empty() ? "" : o.run + "/train_loss.csv";
    if (!loss_csv.empty() && std::filesystem::exists(loss_csv)) {
        auto csv = read_csv(loss_csv);
        const int si = csv.column("step"), li = csv.column("loss_total");
        for (const auto& row : csv.rows) {
            loss_steps.push_back(std::stod(row[size_t(si)]));
            loss_total.push_back(std::stod(row[size_t(li)]));
        }
        // Slack of 1e-6 nats absorbs float jitter on a converged, numerically
        // flat curve; a behavioral increase sits orders of magnitude above it.
        const auto smoothed = moving_average(loss_total, o.smooth_window);
        bool non_increasing = true;
        for (size_t i = smoothed.size() / 2; i + 1 < smoothed.size(); ++i)
            if (smoothed[i + 1] > smoothed[i] + 1e-6) non_increasing = false;
        smooth = {{"window", o.smooth_window},
                  {"final_half_non_increasing", non_increasing},
                  {"final_smoothed_loss", smoothed.empty() ? 0.0 : smoothed.back()}};
    }

    nlohmann::json rep;
    rep["n_points"] = traj.points.size();
    rep["erank_peak_step"] = traj.erank_peak_step;
    rep["erank_peak_interior"] = traj.peak_interior;
    if (!traj.points.empty()) {
        rep["first_step"] = traj.points.front().step;
        rep["last_step"] = traj.points.back().step;
        rep["final_erank"] = traj.points.back().erank;
        rep["final_entropy"] = traj.points.back().entropy;
    }
    if (!smooth.empty()) rep["loss_smoothing"] = smooth;
    {
        std::ofstream os(out_dir + "/dynamics_report.json");
        if (!os) throw IoError("cannot write dynamics_report.json");
        os << rep.dump(2) << "\n";
    }

    if (!o.no_plots) {
        std::vector<double> xs, er, en;
        for (const auto& p : traj.points) {
            xs.push_back(static_cast<double>(p.step));
            er.push_back(p.erank);
            en.push_back(p.entropy);
        }
        svg::write_line_chart(out_dir + "/erank.svg", "Effective rank over training", "step",
                              "effective rank", {{"erank", xs, er}});
        svg::write_line_chart(out_dir + "/entropy.svg", "Conditional entropy over training",
                              "step", "entropy (nats)", {{"entropy", xs, en}});
        if (!loss_total.empty()) {
            svg::write_line_chart(out_dir + "/loss.svg", "Training loss", "step", "loss (nats)",
                                  {{"loss_total", loss_steps, loss_total},
                                   {"smoothed", loss_steps, moving_average(loss_total, o.smooth_window)}});
        }
    }

    man.status = "complete";
    man.finished_at = iso8601_utc_now();
    man.write(out_dir + "/dynamics_manifest.json");
    std::cout << "dynamics: " << traj.points.size() << " points, erank peak at step "
              << traj.erank_peak_step << (traj.peak_interior ? " (interior)" : " (boundary)")
              << "\n";
}

// --- correlate ----------------------------------------------------------------

struct CorrelateOpts {
    std::string csv;
    std::string x, y;
    std::string post_peak_of; // restrict to rows after this column's peak
    int bins = 8;
    std::string out;
    bool no_plots = false;
};

void run_correlate(const CorrelateOpts& o) {
    const std::string out_dir = o.out.empty() ? "." : o.out;
    require_out_dir(out_dir);
    auto csv = read_csv(o.csv);
    const int xi = csv.column(o.x), yi = csv.column(o.y);
    int peak_col = -1;
    if (!o.post_peak_of.empty()) peak_col = csv.column(o.post_peak_of);

    std::vector<double> xs, ys, peaks;
    for (const auto& row : csv.rows) {
        const std::string& xc = row[size_t(xi)];
        const std::string& yc = row[size_t(yi)];
        if (xc.empty() || yc.empty()) continue; // unprobed rows
        try {
            const double xv = std::stod(xc), yv = std::stod(yc);
            xs.push_back(xv);
            ys.push_back(yv);
            if (peak_col >= 0) peaks.push_back(std::stod(row[size_t(peak_col)]));
        } catch (const std::exception&) {
            throw SchemaError("correlate: non-numeric cell in " + o.csv);
        }
    }
    if (peak_col >= 0 && !peaks.empty()) {
        size_t peak_ix = 0;
        for (size_t i = 1; i < peaks.size(); ++i)
            if (peaks[i] >= peaks[peak_ix]) peak_ix = i;
        xs.erase(xs.begin(), xs.begin() + static_cast<long>(peak_ix));
        ys.erase(ys.begin(), ys.begin() + static_cast<long>(peak_ix));
    }

    auto res = analysis::correlate(xs, ys);
    std::vector<analysis::QuantileBand> bands;
    if (static_cast<int>(xs.size()) >= o.bins && o.bins >= 1)
        bands = analysis::quantile_bands(xs, ys, o.bins);

    nlohmann::json rep;
    rep["x"] = o.x;
    rep["y"] = o.y;
    rep["n"] = res.n;
    rep["pearson_r"] = res.pearson_r;
    rep["pearson_p"] = res.pearson_p;
    rep["spearman_rho"] = res.spearman_rho;
    rep["spearman_p"] = res.spearman_p;
    nlohmann::json jb = nlohmann::json::array();
    for (const auto& b : bands)
        jb.push_back({{"center", b.center},
                      {"mean", b.mean_y},
                      {"q25", b.q25},
                      {"q75", b.q75},
                      {"count", b.count}});
    rep["bands"] = std::move(jb);
    {
        std::ofstream os(out_dir + "/correlate.json");
        os << rep.dump(2) << "\n";
    }
    {
        std::ofstream os(out_dir + "/bands.csv");
        os << "center,mean,q25,q75,count\n";
        for (const auto& b : bands)
            os << fmt10(b.center) << "," << fmt10(b.mean_y) << "," << fmt10(b.q25) << ","
               << fmt10(b.q75) << "," << b.count << "\n";
    }
    if (!o.no_plots)
        svg::write_scatter_chart(out_dir + "/scatter.svg", o.y + " vs " + o.x, o.x, o.y, xs, ys,
                                 bands);

    std::printf("pearson r = %.6g (p = %.4g)\n", res.pearson_r, res.pearson_p);
    std::printf("spearman rho = %.6g (p = %.4g)\n", res.spearman_rho, res.spearman_p);
    std::printf("n = %d\n", res.n);
}

// --- decouple -----------------------------------------------------------------

struct DecoupleOpts {
    std::string runs;
    double delta = 0.05;
    std::string out;
};

void run_decouple(const DecoupleOpts& o) {
    const std::string out_dir = o.out.empty() ? "." : o.out;
    require_out_dir(out_dir);
    auto csv = read_csv(o.runs);
    const int li = csv.column("label"), bi = csv.column("bleu");
    const int oi = csv.column("overwrite"), di = csv.column("drift");

    std::vector<analysis::RunSummary> runs;
    long lineno = 1;
    for (const auto& row : csv.rows) {
        ++lineno;
        analysis::RunSummary r;
        r.label = row[size_t(li)];
        try {
            r.bleu = std::stod(row[size_t(bi)]);
            if (!row[size_t(oi)].empty()) r.overwrite_acc = std::stod(row[size_t(oi)]);
            if (!row[size_t(di)].empty()) r.drift_acc = std::stod(row[size_t(di)]);
        } catch (const std::exception&) {
            throw SchemaError("decouple: non-numeric cell", lineno);
        }
        runs.push_back(std::move(r));
    }
    auto rep = analysis::decoupling_report(runs, o.delta);

    nlohmann::json j;
    j["delta"] = rep.delta;
    nlohmann::json grid = nlohmann::json::array();
    for (const auto& r : rep.runs) {
        nlohmann::json e{{"label", r.label}, {"bleu", r.bleu}};
        if (r.overwrite_acc) e["overwrite"] = *r.overwrite_acc;
        if (r.drift_acc) e["drift"] = *r.drift_acc;
        grid.push_back(std::move(e));
    }
    j["runs"] = std::move(grid);
    nlohmann::json flags = nlohmann::json::array();
    for (const auto& f : rep.flags)
        flags.push_back({{"from", f.from_label},
                         {"to", f.to_label},
                         {"bleu_from", f.bleu_from},
                         {"bleu_to", f.bleu_to},
                         {"degraded", f.degraded_metrics},
                         {"max_drop", f.max_drop}});
    j["flags"] = std::move(flags);
    {
        std::ofstream os(out_dir + "/decouple.json");
        os << j.dump(2) << "\n";
    }
    {
        std::ofstream os(out_dir + "/decouple_grid.csv");
        os << "label,bleu,overwrite,drift\n";
        for (const auto& r : rep.runs) {
            os << r.label << "," << fmt10(r.bleu) << ",";
            if (r.overwrite_acc) os << fmt10(*r.overwrite_acc);
            os << ",";
            if (r.drift_acc) os << fmt10(*r.drift_acc);
            os << "\n";
        }
    }

    std::cout << "paradox flags: " << rep.flags.size() << "\n";
    for (const auto& f : rep.flags) {
        std::cout << "  " << f.from_label << " -> " << f.to_label << ": BLEU " << f.bleu_from
                  << " -> " << f.bleu_to << " while";
        for (const auto& m : f.degraded_metrics) std::cout << " " << m;
        std::cout << " dropped by > " << rep.delta << "\n";
    }
}

} // namespace

void register_analyze(CLI::App& app) {
    auto* an = app.add_subcommand("analyze", "Dynamics, correlation and decoupling reports");
    an->require_subcommand(1);

    auto dyn = std::make_shared<DynamicsOpts>();
    auto* d = an->add_subcommand("dynamics", "Loss/erank/entropy trajectories");
    d->add_option("--run", dyn->run, "Training run directory (reads metrics.csv)");
    d->add_option("--checkpoints", dyn->checkpoints, "Recompute probes over a checkpoint series");
    d->add_option("--corpus", dyn->corpus, "Probe corpus for --checkpoints mode");
    d->add_option("--probe-count", dyn->probe_count, "Probe samples");
    d->add_option("--smooth-window", dyn->smooth_window, "Loss smoothing window");
    d->add_option("--out", dyn->out, "Output directory (default: the run directory)");
    d->add_flag("--no-plots", dyn->no_plots, "Skip SVG plots");
    d->callback([dyn]() { run_dynamics(*dyn); });

    auto cor = std::make_shared<CorrelateOpts>();
    auto* c = an->add_subcommand("correlate", "Pearson/Spearman with quantile bands");
    c->add_option("--csv", cor->csv, "Input CSV")->required();
    c->add_option("--x", cor->x, "X column name")->required();
    c->add_option("--y", cor->y, "Y column name")->required();
    c->add_option("--post-peak-of", cor->post_peak_of,
                  "Keep only rows from this column's peak onward");
    c->add_option("--bins", cor->bins, "Quantile-band bins");
    c->add_option("--out", cor->out, "Output directory");
    c->add_flag("--no-plots", cor->no_plots, "Skip SVG plots");
    c->callback([cor]() { run_correlate(*cor); });

    auto dec = std::make_shared<DecoupleOpts>();
    auto* x = an->add_subcommand("decouple", "Flag BLEU-up / QA-down run pairs");
    x->add_option("--runs", dec->runs, "Runs CSV: label,bleu,overwrite,drift")->required();
    x->add_option("--delta", dec->delta, "QA drop threshold");
    x->add_option("--out", dec->out, "Output directory");
    x->callback([dec]() { run_decouple(*dec); });
}

} // namespace flab::cli
