#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "hemopinn/configfile.hpp"
#include "hemopinn/io.hpp"
#include "hemopinn/svg.hpp"

namespace hemopinn::cli {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Run directory layout and the manifest
// ---------------------------------------------------------------------------

struct RunDir {
    fs::path root;
    fs::path config() const { return root / "config"; }
    fs::path snapshots() const { return root / "snapshots"; }
    fs::path measurements() const { return root / "measurements"; }
    fs::path training() const { return root / "training"; }
    fs::path realization(int r) const { return training() / ("realization-" + std::to_string(r)); }
    fs::path postprocess() const { return root / "postprocess"; }
    fs::path report() const { return root / "report"; }
    fs::path manifest() const { return root / "manifest.json"; }
    fs::path timings() const { return root / "timings.json"; }
};

// Updates the stage entry of the manifest with checksums of the files the
// stage wrote. The manifest carries no timestamps, so reruns with identical
// inputs are byte-identical; wall-clock timings live in timings.json.
inline void update_manifest(const RunDir& rd, const RunConfig& rc, const std::string& stage,
                            const std::vector<fs::path>& files) {
    json m;
    if (fs::exists(rd.manifest())) m = json::parse(io::read_file(rd.manifest()));
    m["artifact"] = {{"name", "hemopinn"}, {"version", "0.1.0"}};
    m["seed"] = rc.seed;
    m["config_echo"] = rc.raw_text;
    json fsec;
    for (const auto& f : files) {
        const auto rel = fs::relative(f, rd.root).generic_string();
        fsec[rel] = io::fnv1a_hex(io::read_file(f));
    }
    m["stages"][stage] = {{"files", fsec}};
    io::write_file_atomic(rd.manifest(), m.dump(2) + "\n");
}

inline void record_timing(const RunDir& rd, const std::string& stage, double seconds) {
    json t;
    if (fs::exists(rd.timings())) t = json::parse(io::read_file(rd.timings()));
    t[stage] = seconds;
    io::write_file_atomic(rd.timings(), t.dump(2) + "\n");
}

inline void verify_manifest(const RunDir& rd) {
    if (!fs::exists(rd.manifest())) throw MissingHistory("missing manifest at " + rd.root.string());
    const json m = json::parse(io::read_file(rd.manifest()));
    for (const auto& [stage, body] : m.at("stages").items())
        for (const auto& [rel, sum] : body.at("files").items()) {
            const fs::path f = rd.root / rel;
            if (!fs::exists(f)) throw ChecksumMismatch("manifest file missing: " + rel);
            if (io::fnv1a_hex(io::read_file(f)) != sum.get<std::string>())
                throw ChecksumMismatch("checksum mismatch for " + rel + " (stage " + stage + ")");
        }
}

class StageTimer {
public:
    StageTimer(const RunDir& rd, std::string stage)
        : rd_(rd), stage_(std::move(stage)), t0_(std::chrono::steady_clock::now()) {}
    ~StageTimer() {
        const double sec =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
        try {
            record_timing(rd_, stage_, sec);
        } catch (...) {
        }
    }

private:
    RunDir rd_;
    std::string stage_;
    std::chrono::steady_clock::time_point t0_;
};

inline void copy_config(const RunDir& rd, const RunConfig& rc) {
    io::write_file_atomic(rd.config() / "run.cfg", rc.raw_text);
}

inline std::vector<fs::path> list_files(const fs::path& dir) {
    std::vector<fs::path> out;
    if (!fs::exists(dir)) return out;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

// ---------------------------------------------------------------------------
// simulate: reference solution
// ---------------------------------------------------------------------------

inline void cmd_simulate(const RunConfig& rc, const fs::path& out) {
    RunDir rd{out};
    StageTimer timer(rd, "simulate");
    copy_config(rd, rc);
    const auto mask = geom::build_mask(rc.spec, rc.h);

    std::vector<measure::CellField> fields;
    if (rc.mode == pinn::Mode::transient) {
        auto snaps = refsolver::run_transient(rc.spec, mask, rc.solver, rc.waveform,
                                              rc.wk_transient, rc.pi0);
        fields = measure::to_cell_fields(mask, snaps);
    } else {
        auto snap = refsolver::run_steady(rc.spec, mask, rc.solver, rc.q_steady, rc.wk_steady);
        fields = {measure::CellField::from_staggered(mask, snap)};
    }

    json echo;
    echo["mode"] = rc.mode == pinn::Mode::steady ? "steady" : "transient";
    echo["h"] = rc.h;
    echo["dt"] = rc.solver.dt;
    echo["T"] = rc.solver.T;
    echo["rho"] = rc.solver.rho;
    echo["mu"] = rc.solver.mu;
    io::write_snapshots(rd.snapshots(), mask, fields, echo);

    auto files = list_files(rd.snapshots());
    files.push_back(rd.config() / "run.cfg");
    update_manifest(rd, rc, "simulate", files);
}

// ---------------------------------------------------------------------------
// measure: synthetic PC-MRI acquisition
// ---------------------------------------------------------------------------

inline void cmd_measure(const RunConfig& rc, const fs::path& out) {
    RunDir rd{out};
    StageTimer timer(rd, "measure");
    const auto mask = geom::build_mask(rc.spec, rc.h);
    auto [idx, fields] = io::read_snapshots(rd.snapshots(), mask);
    (void)idx;
    const auto plan = rc.slice_plan();
    const auto ms = measure::acquire(fields, mask, rc.spec, plan, rc.snr_db, rc.seed);
    io::write_measurements(rd.measurements(), ms, plan);
    update_manifest(rd, rc, "measure", list_files(rd.measurements()));
}

// ---------------------------------------------------------------------------
// train: the inverse problem
// ---------------------------------------------------------------------------

inline pinn::TrainSetup make_setup(const RunConfig& rc, const RunDir& rd) {
    pinn::TrainSetup s;
    s.spec = rc.spec;
    s.scales = rc.scales();
    s.mode = rc.mode;
    s.meas = io::read_measurements(rd.measurements());
    s.ref_transient = rc.wk_transient;
    s.ref_steady = rc.wk_steady;
    s.net = rc.net;
    s.cfg = rc.train;
    // evaluate network curves at the reference snapshot times
    const auto mask = geom::build_mask(rc.spec, rc.h);
    if (fs::exists(rd.snapshots() / "index.json")) {
        const json idx = json::parse(io::read_file(rd.snapshots() / "index.json"));
        s.eval_times = idx.at("times").get<std::vector<double>>();
    }
    return s;
}

// mean over parameters of |log(est/ref)|: the median-selection metric
inline double parameter_log_error(const pinn::EstimatedParams& est, const RunConfig& rc) {
    double acc = 0.0;
    int n = 0;
    if (est.steady) {
        for (std::size_t k = 0; k < rc.wk_steady.size(); ++k) {
            acc += std::abs(std::log(est.rt[k] / rc.wk_steady[k].Rt));
            ++n;
        }
    } else {
        for (std::size_t k = 0; k < rc.wk_transient.size(); ++k) {
            acc += std::abs(std::log(est.rp[k] / rc.wk_transient[k].Rp));
            acc += std::abs(std::log(est.rd[k] / rc.wk_transient[k].Rd));
            acc += std::abs(std::log(est.c[k] / rc.wk_transient[k].C));
            n += 3;
        }
    }
    return acc / std::max(1, n);
}

inline json estimates_to_json(const std::vector<pinn::TrainResult>& results, const RunConfig& rc) {
    const bool steady = rc.mode == pinn::Mode::steady;
    const int K = static_cast<int>(rc.spec.outlets.size());
    json out;
    out["mode"] = steady ? "steady" : "transient";
    out["K"] = K;

    json refj;
    for (int k = 0; k < K; ++k) {
        if (steady) refj.push_back({{"Rt", rc.wk_steady[k].Rt}});
        else
            refj.push_back({{"Rp", rc.wk_transient[k].Rp},
                            {"Rd", rc.wk_transient[k].Rd},
                            {"C", rc.wk_transient[k].C}});
    }
    out["reference"] = refj;

    json reals = json::array();
    std::vector<int> ok;
    for (std::size_t r = 0; r < results.size(); ++r) {
        const auto& res = results[r];
        json rj;
        rj["seed"] = res.seed;
        rj["failed"] = res.failed;
        if (res.failed) {
            rj["error"] = res.error;
        } else {
            ok.push_back(static_cast<int>(r));
            if (steady) rj["Rt"] = res.estimates.rt;
            else {
                rj["Rp"] = res.estimates.rp;
                rj["Rd"] = res.estimates.rd;
                rj["C"] = res.estimates.c;
                rj["tau"] = res.estimates.tau;
            }
            rj["param_log_error"] = parameter_log_error(res.estimates, rc);
        }
        reals.push_back(rj);
    }
    out["realizations"] = reals;
    if (ok.empty()) return out;

    auto stats = [&](auto getter) {
        json mean = json::array(), stdev = json::array();
        for (int k = 0; k < K; ++k) {
            double m = 0.0;
            for (int r : ok) m += getter(results[r].estimates, k);
            m /= ok.size();
            mean.push_back(m);
            if (ok.size() > 1) {
                double s2 = 0.0;
                for (int r : ok) {
                    const double d = getter(results[r].estimates, k) - m;
                    s2 += d * d;
                }
                stdev.push_back(std::sqrt(s2 / (ok.size() - 1)));
            }
        }
        json j;
        j["mean"] = mean;
        if (ok.size() > 1) j["std"] = stdev;
        return j;
    };
    if (steady) {
        out["Rt"] = stats([](const pinn::EstimatedParams& e, int k) { return e.rt[k]; });
    } else {
        out["Rp"] = stats([](const pinn::EstimatedParams& e, int k) { return e.rp[k]; });
        out["Rd"] = stats([](const pinn::EstimatedParams& e, int k) { return e.rd[k]; });
        out["C"] = stats([](const pinn::EstimatedParams& e, int k) { return e.c[k]; });
    }

    // the realization with the median parameter error
    std::vector<std::pair<double, int>> errs;
    for (int r : ok) errs.push_back({parameter_log_error(results[r].estimates, rc), r});
    std::sort(errs.begin(), errs.end());
    out["median_realization"] = errs[errs.size() / 2].second;
    return out;
}

inline void cmd_train(const RunConfig& rc, const fs::path& out) {
    RunDir rd{out};
    StageTimer timer(rd, "train");
    auto setup = make_setup(rc, rd);
    const auto results = pinn::train_all(setup, rc.seed);

    const bool steady = rc.mode == pinn::Mode::steady;
    const int K = static_cast<int>(rc.spec.outlets.size());
    int n_failed = 0;
    for (std::size_t r = 0; r < results.size(); ++r) {
        const auto dir = rd.realization(static_cast<int>(r));
        fs::create_directories(dir);
        const auto& res = results[r];
        if (res.failed) {
            ++n_failed;
            io::write_file_atomic(dir / "failed.txt", res.error + "\n");
            continue;
        }
        io::write_file_atomic(dir / "history.csv", io::history_csv(res.history, steady, K));
        io::write_checkpoint(dir, res, setup);
        if (!res.curve_t.empty())
            io::write_file_atomic(dir / "curves.csv",
                                  io::curves_csv(res.curve_t, res.curve_Q, res.curve_P, res.inlet_Q));
    }
    io::write_file_atomic(rd.training() / "estimates.json",
                          estimates_to_json(results, rc).dump(2) + "\n");
    update_manifest(rd, rc, "train", list_files(rd.training()));
    if (n_failed == static_cast<int>(results.size()))
        throw Error("all training realizations failed");
}

// ---------------------------------------------------------------------------
// postprocess: re-simulate with the estimated parameters and the network
// inlet profile of the median-error realization
// ---------------------------------------------------------------------------

inline void cmd_postprocess(const RunConfig& rc, const fs::path& out) {
    RunDir rd{out};
    StageTimer timer(rd, "postprocess");
    const fs::path est_path = rd.training() / "estimates.json";
    if (!fs::exists(est_path))
        throw MissingEstimates("no estimates at " + est_path.string() + " (run 'train' first)");
    const json est = json::parse(io::read_file(est_path));
    if (!est.contains("median_realization"))
        throw MissingEstimates("estimates.json has no successful realizations");
    const int median = est.at("median_realization");

    // rebuild the trainer to evaluate the network inlet profile
    auto setup = make_setup(rc, rd);
    pinn::Trainer tr(setup, rc.seed + 1000ull * median);
    tr.mutable_params().data = io::read_checkpoint(rd.realization(median)).data;

    const auto mask = geom::build_mask(rc.spec, rc.h);
    const auto& realization = est.at("realizations").at(median);

    std::vector<measure::CellField> fields;
    if (rc.mode == pinn::Mode::transient) {
        std::vector<wk::Params> params;
        for (int k = 0; k < static_cast<int>(rc.spec.outlets.size()); ++k)
            params.push_back({realization.at("Rp").at(k), realization.at("Rd").at(k),
                              realization.at("C").at(k)});
        auto snaps = refsolver::run_transient(
            rc.spec, mask, rc.solver, rc.waveform, params, rc.pi0,
            [&tr](double y, double t) { return tr.inlet_velocity(y, t); });
        fields = measure::to_cell_fields(mask, snaps);
    } else {
        std::vector<wk::SteadyParams> params;
        for (int k = 0; k < static_cast<int>(rc.spec.outlets.size()); ++k)
            params.push_back({realization.at("Rt").at(k)});
        auto snap = refsolver::run_steady(rc.spec, mask, rc.solver, rc.q_steady, params);
        fields = {measure::CellField::from_staggered(mask, snap)};
    }

    json echo;
    echo["median_realization"] = median;
    io::write_snapshots(rd.postprocess(), mask, fields, echo);

    // flow/pressure curves of the re-simulation
    std::vector<double> t, qin;
    std::vector<std::vector<double>> Q(rc.spec.outlets.size()), P(rc.spec.outlets.size());
    for (const auto& f : fields) {
        t.push_back(f.t);
        qin.push_back(f.q_in);
        for (std::size_t k = 0; k < Q.size(); ++k) {
            Q[k].push_back(f.Q[k]);
            P[k].push_back(f.P[k]);
        }
    }
    io::write_file_atomic(rd.postprocess() / "curves.csv", io::curves_csv(t, Q, P, qin));
    update_manifest(rd, rc, "postprocess", list_files(rd.postprocess()));
}

// ---------------------------------------------------------------------------
// report: tables, metrics and SVG plots
// ---------------------------------------------------------------------------

namespace detail {

struct HistoryTable {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    int col(const std::string& name) const {
        for (std::size_t c = 0; c < columns.size(); ++c)
            if (columns[c] == name) return static_cast<int>(c);
        throw MissingHistory("history column not found: " + name);
    }
};

inline HistoryTable read_history(const fs::path& path) {
    if (!fs::exists(path)) throw MissingHistory("missing " + path.string());
    HistoryTable t;
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    std::stringstream hs(line);
    std::string col;
    while (std::getline(hs, col, ',')) t.columns.push_back(col);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
        t.rows.push_back(std::move(row));
    }
    return t;
}

inline HistoryTable read_curves(const fs::path& path) { return read_history(path); }

} // namespace detail

inline void cmd_report(const RunConfig& rc, const fs::path& out) {
    RunDir rd{out};
    StageTimer timer(rd, "report");
    verify_manifest(rd);

    const fs::path est_path = rd.training() / "estimates.json";
    if (!fs::exists(est_path)) throw MissingHistory("no training outputs (run 'train' first)");
    const json est = json::parse(io::read_file(est_path));
    const bool steady = rc.mode == pinn::Mode::steady;
    const int K = static_cast<int>(rc.spec.outlets.size());

    std::vector<int> ok;
    for (std::size_t r = 0; r < est.at("realizations").size(); ++r)
        if (!est.at("realizations").at(r).at("failed").get<bool>()) ok.push_back(static_cast<int>(r));
    if (ok.empty()) throw MissingHistory("no successful realizations to report");

    std::vector<detail::HistoryTable> hist;
    for (int r : ok) hist.push_back(detail::read_history(rd.realization(r) / "history.csv"));

    // --- parameter table ---------------------------------------------------
    std::ostringstream table;
    table << "outlet,parameter,reference,mean,std\n";
    auto emit_row = [&](int k, const std::string& name, double ref) {
        table << (k + 1) << ',' << name << ',' << io::fmt_g17(ref) << ','
              << io::fmt_g17(est.at(name).at("mean").at(k).get<double>());
        if (est.at(name).contains("std"))
            table << ',' << io::fmt_g17(est.at(name).at("std").at(k).get<double>());
        else
            table << ',';
        table << '\n';
    };
    for (int k = 0; k < K; ++k) {
        if (steady) {
            emit_row(k, "Rt", rc.wk_steady[k].Rt);
        } else {
            emit_row(k, "Rp", rc.wk_transient[k].Rp);
            emit_row(k, "Rd", rc.wk_transient[k].Rd);
            emit_row(k, "C", rc.wk_transient[k].C);
        }
    }
    fs::create_directories(rd.report());
    io::write_file_atomic(rd.report() / "parameters.csv", table.str());

    // --- parameter evolution plot -------------------------------------------
    {
        std::vector<std::string> pnames = steady ? std::vector<std::string>{"Rt"}
                                                 : std::vector<std::string>{"Rp", "Rd", "C"};
        svg::Figure fig(static_cast<int>(pnames.size()), K);
        for (int k = 0; k < K; ++k)
            for (const auto& pn : pnames) {
                const double ref = steady ? rc.wk_steady[k].Rt
                                          : (pn == "Rp"   ? rc.wk_transient[k].Rp
                                             : pn == "Rd" ? rc.wk_transient[k].Rd
                                                          : rc.wk_transient[k].C);
                svg::Panel panel;
                panel.title = pn + " outlet " + std::to_string(k + 1) + " (est / ref)";
                panel.hline = 1.0;
                const std::string cname = pn + "_" + std::to_string(k + 1);
                svg::Series mean;
                svg::Band band;
                const int col = hist[0].col(cname);
                for (std::size_t e = 0; e < hist[0].rows.size(); ++e) {
                    double lo = 1e300, hi = -1e300, m = 0.0;
                    for (const auto& h : hist) {
                        const double v = h.rows[e][col] / ref;
                        lo = std::min(lo, v);
                        hi = std::max(hi, v);
                        m += v / hist.size();
                    }
                    const double ep = hist[0].rows[e][hist[0].col("epoch")];
                    mean.x.push_back(ep);
                    mean.y.push_back(m);
                    band.x.push_back(ep);
                    band.ylo.push_back(lo);
                    band.yhi.push_back(hi);
                }
                mean.label = "mean";
                panel.bands.push_back(band);
                panel.series.push_back(mean);
                fig.add_panel(panel);
            }
        io::write_file_atomic(rd.report() / "params_evolution.svg", fig.render());
    }

    // --- outlet flow / pressure curves --------------------------------------
    json metrics;
    {
        const json idx = json::parse(io::read_file(rd.snapshots() / "index.json"));
        const auto times = idx.at("times").get<std::vector<double>>();
        const auto Qref = idx.at("Q").get<std::vector<std::vector<double>>>();
        const auto Pref = idx.at("P").get<std::vector<std::vector<double>>>();

        std::vector<detail::HistoryTable> curves;
        for (int r : ok) curves.push_back(detail::read_curves(rd.realization(r) / "curves.csv"));
        const bool post = fs::exists(rd.postprocess() / "curves.csv");
        detail::HistoryTable pcurves;
        if (post) pcurves = detail::read_curves(rd.postprocess() / "curves.csv");

        svg::Figure fig(2, K);
        json flow_rms = json::array(), pres_rms = json::array();
        for (int k = 0; k < K; ++k) {
            svg::Panel pq, pp;
            pq.title = "Q outlet " + std::to_string(k + 1) + " (cm^2/s)";
            pp.title = "P outlet " + std::to_string(k + 1) + " (dyn/cm^2)";
            svg::Series ref_q, ref_p;
            for (std::size_t s = 0; s < times.size(); ++s) {
                ref_q.x.push_back(times[s]);
                ref_q.y.push_back(Qref[s][k]);
                ref_p.x.push_back(times[s]);
                ref_p.y.push_back(Pref[s][k]);
            }
            ref_q.color = ref_p.color = "#000000";
            ref_q.dashed = ref_p.dashed = true;
            ref_q.label = ref_p.label = "reference";

            const int cq = curves[0].col("Q_" + std::to_string(k + 1));
            const int cp = curves[0].col("P_" + std::to_string(k + 1));
            const int ct = curves[0].col("t");
            svg::Series mq, mp;
            svg::Band bq, bp;
            double rms_q = 0.0, rms_p = 0.0;
            for (std::size_t s = 0; s < curves[0].rows.size(); ++s) {
                double mqv = 0.0, mpv = 0.0, loq = 1e300, hiq = -1e300, lop = 1e300, hip = -1e300;
                for (const auto& c : curves) {
                    const double qv = c.rows[s][cq], pv = c.rows[s][cp];
                    mqv += qv / curves.size();
                    mpv += pv / curves.size();
                    loq = std::min(loq, qv);
                    hiq = std::max(hiq, qv);
                    lop = std::min(lop, pv);
                    hip = std::max(hip, pv);
                }
                const double t = curves[0].rows[s][ct];
                mq.x.push_back(t);
                mq.y.push_back(mqv);
                mp.x.push_back(t);
                mp.y.push_back(mpv);
                bq.x.push_back(t);
                bq.ylo.push_back(loq);
                bq.yhi.push_back(hiq);
                bp.x.push_back(t);
                bp.ylo.push_back(lop);
                bp.yhi.push_back(hip);
                if (s < times.size()) {
                    rms_q += (mqv - Qref[s][k]) * (mqv - Qref[s][k]);
                    rms_p += (mpv - Pref[s][k]) * (mpv - Pref[s][k]);
                }
            }
            rms_q = std::sqrt(rms_q / times.size());
            rms_p = std::sqrt(rms_p / times.size());
            flow_rms.push_back(rms_q);
            pres_rms.push_back(rms_p);

            mq.color = "#d62728";
            mq.label = "pinn mean";
            bq.color = "#d62728";
            mp.color = "#1f9ede";
            mp.label = "pinn mean";
            bp.color = "#1f9ede";
            pq.bands.push_back(bq);
            pq.series.push_back(ref_q);
            pq.series.push_back(mq);
            pp.bands.push_back(bp);
            pp.series.push_back(ref_p);
            pp.series.push_back(mp);
            if (post) {
                svg::Series sq, sp;
                const int qcol = pcurves.col("Q_" + std::to_string(k + 1));
                const int pcol = pcurves.col("P_" + std::to_string(k + 1));
                const int tcol = pcurves.col("t");
                for (const auto& row : pcurves.rows) {
                    sq.x.push_back(row[tcol]);
                    sq.y.push_back(row[qcol]);
                    sp.x.push_back(row[tcol]);
                    sp.y.push_back(row[pcol]);
                }
                sq.color = "#e8952f";
                sq.dashed = true;
                sq.label = "postprocess";
                sp.color = "#e8952f";
                sp.dashed = true;
                sp.label = "postprocess";
                pq.series.push_back(sq);
                pp.series.push_back(sp);
            }
            fig.add_panel(pq);
            fig.add_panel(pp);
        }
        io::write_file_atomic(rd.report() / "outlet_curves.svg", fig.render());
        metrics["flow_rms_vs_reference"] = flow_rms;
        metrics["pressure_rms_vs_reference"] = pres_rms;
    }

    // --- velocity-field RMSE at selected times -------------------------------
    {
        const auto mask = geom::build_mask(rc.spec, rc.h);
        auto [idx, fields] = io::read_snapshots(rd.snapshots(), mask);
        std::vector<std::size_t> picks;
        if (fields.size() == 1) {
            picks = {0};
        } else {
            std::size_t peak = 0;
            for (std::size_t s = 0; s < idx.q_in.size(); ++s)
                if (idx.q_in[s] > idx.q_in[peak]) peak = s;
            picks = {peak, std::min(fields.size() - 1, fields.size() * 2 / 3)};
        }
        auto setup = make_setup(rc, rd);
        json rmse = json::array();
        std::vector<double> per_real;
        for (int r : ok) {
            pinn::Trainer tr(setup, rc.seed + 1000ull * r);
            tr.mutable_params().data = io::read_checkpoint(rd.realization(r)).data;
            double acc = 0.0;
            long n = 0;
            for (std::size_t s : picks) {
                const auto& f = fields[s];
                for (int j = 0; j < mask.ny; ++j)
                    for (int i = 0; i < mask.nx; ++i) {
                        if (!mask.is_fluid(i, j)) continue;
                        double u, v;
                        tr.velocity_at(mask.cx(i), mask.cy(j), f.t, u, v);
                        const int id = mask.ci(i, j);
                        acc += (u - f.u[id]) * (u - f.u[id]) + (v - f.v[id]) * (v - f.v[id]);
                        ++n;
                    }
            }
            per_real.push_back(std::sqrt(acc / n));
        }
        double mean = 0.0;
        for (double v : per_real) mean += v / per_real.size();
        json vel;
        json tsel = json::array();
        for (std::size_t s : picks) tsel.push_back(fields[s].t);
        vel["times"] = tsel;
        vel["per_realization"] = per_real;
        vel["mean"] = mean;
        if (per_real.size() > 1) {
            double s2 = 0.0;
            for (double v : per_real) s2 += (v - mean) * (v - mean);
            vel["std"] = std::sqrt(s2 / (per_real.size() - 1));
        }
        metrics["velocity_rmse"] = vel;
    }

    // --- history summaries ----------------------------------------------------
    {
        json rows = json::array();
        for (std::size_t h = 0; h < hist.size(); ++h) {
            const auto& tbl = hist[h];
            const auto& last = tbl.rows.back();
            rows.push_back({{"realization", ok[h]},
                            {"final_loss_total", last[tbl.col("loss_total")]},
                            {"final_loss_ns", last[tbl.col("loss_ns")]},
                            {"final_loss_udata", last[tbl.col("loss_udata")]}});
        }
        metrics["history_final"] = rows;
        metrics["checksums_verified"] = true;
        metrics["parameters"] = est;
        io::write_file_atomic(rd.report() / "metrics.json", metrics.dump(2) + "\n");
    }

    update_manifest(rd, rc, "report", list_files(rd.report()));
}

} // namespace hemopinn::cli
