#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "hemopinn/errors.hpp"
#include "hemopinn/geometry.hpp"
#include "hemopinn/measure.hpp"
#include "hemopinn/refsolver.hpp"
#include "hemopinn/train.hpp"
#include "hemopinn/windkessel.hpp"

namespace hemopinn::cli {

// Sectioned key-value configuration. '#' starts a comment, sections are
// [name] or [name.sub], keys may repeat (rect = ..., outlet = ...). Parsing
// is strict: every key must be consumed by a reader, unknown keys fail with
// a section-qualified message.
class ConfigFile {
public:
    static ConfigFile parse_text(const std::string& text) {
        ConfigFile cf;
        cf.raw_ = text;
        std::istringstream in(text);
        std::string line, section;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const auto trim = [](std::string s) {
                const auto a = s.find_first_not_of(" \t\r");
                if (a == std::string::npos) return std::string();
                const auto b = s.find_last_not_of(" \t\r");
                return s.substr(a, b - a + 1);
            };
            line = trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']')
                    throw ConfigError("config line " + std::to_string(lineno) + ": malformed section header");
                section = trim(line.substr(1, line.size() - 2));
                cf.sections_[section]; // section may stay empty
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos || section.empty())
                throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
            Entry e;
            e.key = trim(line.substr(0, eq));
            e.value = trim(line.substr(eq + 1));
            e.line = lineno;
            if (e.key.empty() || e.value.empty())
                throw ConfigError("config line " + std::to_string(lineno) + ": empty key or value");
            cf.sections_[section].push_back(e);
        }
        return cf;
    }

    static ConfigFile load(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw ConfigError("cannot open config file: " + path);
        std::ostringstream ss;
        ss << f.rdbuf();
        return parse_text(ss.str());
    }

    const std::string& raw_text() const { return raw_; }

    bool has_section(const std::string& s) const { return sections_.count(s) > 0; }

    std::vector<std::string> sections_with_prefix(const std::string& prefix) const {
        std::vector<std::string> out;
        for (const auto& [name, entries] : sections_)
            if (name.rfind(prefix, 0) == 0) out.push_back(name);
        return out;
    }

    bool has(const std::string& sec, const std::string& key) const {
        auto it = sections_.find(sec);
        if (it == sections_.end()) return false;
        for (const auto& e : it->second)
            if (e.key == key) return true;
        return false;
    }

    std::string get_string(const std::string& sec, const std::string& key) const {
        return fetch(sec, key).value;
    }
    std::string get_string(const std::string& sec, const std::string& key,
                           const std::string& fallback) const {
        return has(sec, key) ? get_string(sec, key) : fallback;
    }

    double get_double(const std::string& sec, const std::string& key) const {
        return to_double(sec, fetch(sec, key));
    }
    double get_double(const std::string& sec, const std::string& key, double fallback) const {
        return has(sec, key) ? get_double(sec, key) : fallback;
    }

    long get_int(const std::string& sec, const std::string& key) const {
        const auto& e = fetch(sec, key);
        try {
            std::size_t pos = 0;
            const long v = std::stol(e.value, &pos);
            if (pos != e.value.size()) throw std::invalid_argument("");
            return v;
        } catch (...) {
            throw ConfigError("[" + sec + "] " + key + ": not an integer: '" + e.value + "'");
        }
    }
    long get_int(const std::string& sec, const std::string& key, long fallback) const {
        return has(sec, key) ? get_int(sec, key) : fallback;
    }

    // all values of a repeated key, each split on whitespace
    std::vector<std::vector<std::string>> get_tuples(const std::string& sec,
                                                     const std::string& key) const {
        std::vector<std::vector<std::string>> out;
        auto it = sections_.find(sec);
        if (it == sections_.end()) return out;
        for (const auto& e : it->second)
            if (e.key == key) {
                e.used = true;
                std::istringstream ss(e.value);
                std::vector<std::string> parts;
                std::string p;
                while (ss >> p) parts.push_back(p);
                out.push_back(parts);
            }
        return out;
    }

    void ensure_all_used() const {
        for (const auto& [name, entries] : sections_)
            for (const auto& e : entries)
                if (!e.used)
                    throw ConfigError("[" + name + "] unknown key '" + e.key + "' (line " +
                                      std::to_string(e.line) + ")");
    }

private:
    struct Entry {
        std::string key, value;
        int line = 0;
        mutable bool used = false;
    };

    const Entry& fetch(const std::string& sec, const std::string& key) const {
        auto it = sections_.find(sec);
        if (it == sections_.end()) throw ConfigError("missing config section [" + sec + "]");
        for (const auto& e : it->second)
            if (e.key == key) {
                e.used = true;
                return e;
            }
        throw ConfigError("[" + sec + "] missing key '" + key + "'");
    }

    double to_double(const std::string& sec, const Entry& e) const {
        if (e.value == "inf") return std::numeric_limits<double>::infinity();
        try {
            std::size_t pos = 0;
            const double v = std::stod(e.value, &pos);
            if (pos != e.value.size()) throw std::invalid_argument("");
            return v;
        } catch (...) {
            throw ConfigError("[" + sec + "] " + e.key + ": not a number: '" + e.value + "'");
        }
    }

    std::map<std::string, std::vector<Entry>> sections_;
    std::string raw_;
};

// ---------------------------------------------------------------------------
// Full run configuration
// ---------------------------------------------------------------------------

struct RunConfig {
    pinn::Mode mode = pinn::Mode::transient;
    std::uint64_t seed = 1;

    geom::DomainSpec spec;
    double h = 0.0625;

    refsolver::SolverConfig solver;
    refsolver::InflowWaveform waveform;
    double q_steady = 0.0; // constant inflow in steady mode

    std::vector<wk::Params> wk_transient;
    std::vector<wk::SteadyParams> wk_steady;
    double pi0 = mmhg_to_dyn(78.8);

    double snr_db = 18.0;
    double pixel_spacing = 0.1;
    double cadence = 0.03;
    std::vector<geom::Segment> explicit_lines; // empty -> desk default plan

    pinn::NetworkConfig net;
    pinn::TrainConfig train;

    std::string raw_text;

    measure::SlicePlan slice_plan() const {
        measure::SlicePlan plan;
        if (explicit_lines.empty()) {
            plan = measure::SlicePlan::desk_default(spec, pixel_spacing, cadence,
                                                    mode == pinn::Mode::transient ? solver.T : 0.0);
        } else {
            plan.lines = explicit_lines;
            plan.spacing = pixel_spacing;
            for (double tm = 0.0;
                 tm < (mode == pinn::Mode::transient ? solver.T : cadence) - 1e-9; tm += cadence)
                plan.times.push_back(tm);
        }
        if (mode == pinn::Mode::steady) plan.times = {0.0};
        return plan;
    }

    pinn::Scales scales() const { return {spec.L, spec.U, solver.rho, solver.mu}; }

    static RunConfig load(const std::string& path) { return from_config(ConfigFile::load(path)); }
    static RunConfig from_text(const std::string& text) {
        return from_config(ConfigFile::parse_text(text));
    }

    static RunConfig from_config(const ConfigFile& cf) {
        RunConfig rc;
        rc.raw_text = cf.raw_text();

        const std::string mode = cf.get_string("run", "mode");
        if (mode == "steady") rc.mode = pinn::Mode::steady;
        else if (mode == "transient") rc.mode = pinn::Mode::transient;
        else throw ConfigError("[run] mode must be 'steady' or 'transient'");
        rc.seed = static_cast<std::uint64_t>(cf.get_int("run", "seed", 1));

        // geometry
        auto parse_axis = [](const std::string& sec, const std::string& a) {
            if (a == "vertical") return geom::Axis::vertical;
            if (a == "horizontal") return geom::Axis::horizontal;
            throw ConfigError("[" + sec + "] axis must be 'vertical' or 'horizontal'");
        };
        auto parse_num = [](const std::string& sec, const std::string& s) {
            try {
                return std::stod(s);
            } catch (...) {
                throw ConfigError("[" + sec + "] bad number '" + s + "'");
            }
        };
        for (const auto& t : cf.get_tuples("geometry", "rect")) {
            if (t.size() != 4) throw ConfigError("[geometry] rect needs 4 numbers: x0 y0 x1 y1");
            rc.spec.rectangles.push_back({parse_num("geometry", t[0]), parse_num("geometry", t[1]),
                                          parse_num("geometry", t[2]), parse_num("geometry", t[3])});
        }
        auto parse_seg = [&](const std::vector<std::string>& t) {
            if (t.size() != 4)
                throw ConfigError("[geometry] segment needs: axis coordinate from to");
            geom::Segment s;
            s.axis = parse_axis("geometry", t[0]);
            s.coord = parse_num("geometry", t[1]);
            s.lo = parse_num("geometry", t[2]);
            s.hi = parse_num("geometry", t[3]);
            return s;
        };
        const auto inlets = cf.get_tuples("geometry", "inlet");
        if (inlets.size() != 1) throw ConfigError("[geometry] exactly one inlet required");
        rc.spec.inlet = parse_seg(inlets[0]);
        for (const auto& t : cf.get_tuples("geometry", "outlet")) rc.spec.outlets.push_back(parse_seg(t));
        for (const auto& t : cf.get_tuples("geometry", "wall")) rc.spec.walls.push_back(parse_seg(t));
        rc.spec.L = cf.get_double("geometry", "L");
        rc.spec.U = cf.get_double("geometry", "U");
        try {
            rc.spec.validate();
        } catch (const Error& e) {
            throw ConfigError(e.what());
        }

        // solver
        rc.h = cf.get_double("solver", "h");
        rc.solver.rho = cf.get_double("solver", "rho", 1.06);
        rc.solver.mu = cf.get_double("solver", "mu", 0.035);
        rc.solver.dt = cf.get_double("solver", "dt", 1e-3);
        rc.solver.T = cf.get_double("solver", "T", 0.66);
        rc.solver.gamma = cf.get_double("solver", "gamma", 1e5);
        rc.solver.save_every = static_cast<int>(cf.get_int("solver", "save_every", 10));
        rc.solver.beta_backflow = cf.get_double("solver", "beta_backflow", 1.0);
        rc.solver.poisson_rtol = cf.get_double("solver", "poisson_rtol", 1e-10);
        rc.solver.steady_tol_factor = cf.get_double("solver", "steady_tol", 1e-8);
        if (!(rc.solver.rho > 0) || !(rc.solver.mu > 0) || !(rc.solver.dt > 0) || !(rc.solver.T > 0))
            throw ConfigError("[solver] rho, mu, dt, T must be positive");

        // waveform
        const std::string wtype = cf.get_string("waveform", "type", "pulse");
        if (rc.mode == pinn::Mode::steady) {
            if (wtype != "constant") throw ConfigError("[waveform] steady mode needs type = constant");
            rc.q_steady = cf.get_double("waveform", "Q");
            rc.waveform = refsolver::InflowWaveform::constant(rc.q_steady, std::max(rc.solver.T, 1.0));
        } else if (wtype == "pulse") {
            rc.waveform = refsolver::InflowWaveform::pulse(
                cf.get_double("waveform", "Q_sys"), cf.get_double("waveform", "Q_dia", 0.0),
                cf.get_double("waveform", "t_sys", 0.25), cf.get_double("waveform", "period", rc.solver.T));
        } else if (wtype == "samples") {
            refsolver::InflowWaveform w;
            w.period = cf.get_double("waveform", "period", rc.solver.T);
            for (const auto& t : cf.get_tuples("waveform", "sample")) {
                if (t.size() != 2) throw ConfigError("[waveform] sample needs: t q");
                w.t.push_back(parse_num("waveform", t[0]));
                w.q.push_back(parse_num("waveform", t[1]));
            }
            if (w.t.size() < 2) throw ConfigError("[waveform] need at least 2 samples");
            w.finalize();
            rc.waveform = w;
        } else {
            throw ConfigError("[waveform] unknown type '" + wtype + "'");
        }

        // windkessel truth, one section per outlet
        const int K = static_cast<int>(rc.spec.outlets.size());
        for (int k = 1; k <= K; ++k) {
            const std::string sec = "windkessel." + std::to_string(k);
            if (!cf.has_section(sec)) throw ConfigError("missing section [" + sec + "]");
            if (rc.mode == pinn::Mode::steady) {
                wk::SteadyParams p{cf.get_double(sec, "Rt")};
                if (!(p.Rt > 0)) throw ConfigError("[" + sec + "] Rt must be positive");
                rc.wk_steady.push_back(p);
            } else {
                wk::Params p{cf.get_double(sec, "Rp"), cf.get_double(sec, "Rd"),
                             cf.get_double(sec, "C")};
                if (!(p.Rp >= 0) || !(p.Rd > 0) || !(p.C > 0))
                    throw ConfigError("[" + sec + "] need Rp >= 0, Rd > 0, C > 0");
                rc.wk_transient.push_back(p);
            }
        }
        if (cf.has("initial", "pi0_mmhg")) rc.pi0 = mmhg_to_dyn(cf.get_double("initial", "pi0_mmhg"));

        // measurement
        rc.snr_db = cf.get_double("measurement", "snr_db", 18.0);
        rc.pixel_spacing = cf.get_double("measurement", "pixel_spacing", 0.1);
        rc.cadence = cf.get_double("measurement", "cadence", 0.03);
        for (const auto& t : cf.get_tuples("measurement", "line")) {
            if (t.size() != 4) throw ConfigError("[measurement] line needs: axis coordinate from to");
            geom::Segment s;
            s.axis = parse_axis("measurement", t[0]);
            s.coord = parse_num("measurement", t[1]);
            s.lo = parse_num("measurement", t[2]);
            s.hi = parse_num("measurement", t[3]);
            rc.explicit_lines.push_back(s);
        }

        // network
        rc.net.hidden_layers = static_cast<int>(cf.get_int("network", "hidden_layers", 4));
        rc.net.width = static_cast<int>(cf.get_int("network", "width", 64));
        rc.net.pi_hidden_layers = static_cast<int>(cf.get_int("network", "pi_hidden_layers", 6));
        rc.net.pi_width = static_cast<int>(cf.get_int("network", "pi_width", 10));

        // training
        rc.train.epochs_stage1 = static_cast<int>(cf.get_int("training", "epochs_stage1", 120));
        rc.train.epochs_stage2 = static_cast<int>(cf.get_int("training", "epochs_stage2", 1250));
        rc.train.lr_net = cf.get_double("training", "lr_net", 1e-3);
        rc.train.lr_params = cf.get_double("training", "lr_params", 1e-2);
        rc.train.collocation = static_cast<int>(cf.get_int("training", "collocation", 20000));
        rc.train.wall_points = static_cast<int>(cf.get_int("training", "wall_points", 2000));
        rc.train.batch = static_cast<int>(cf.get_int("training", "batch", 0));
        rc.train.realizations = static_cast<int>(cf.get_int("training", "realizations", 5));
        rc.train.quad_nodes = static_cast<int>(cf.get_int("training", "quad_nodes", 9));
        rc.train.ode_extra_times = static_cast<int>(cf.get_int("training", "ode_extra_times", 22));
        rc.train.outlet_time_batch =
            static_cast<int>(cf.get_int("training", "outlet_time_batch", 0));
        rc.train.t_close = cf.get_double("training", "t_close", 0.30);
        rc.train.t_end = cf.get_double("training", "t_end", rc.solver.T);
        rc.train.workers = static_cast<int>(cf.get_int("training", "workers", 2));
        const std::string wmode = cf.get_string("training", "weights",
                                                rc.mode == pinn::Mode::steady ? "manual" : "automatic");
        rc.train.manual_weights = (wmode == "manual");
        if (!rc.train.manual_weights && wmode != "automatic")
            throw ConfigError("[training] weights must be 'manual' or 'automatic'");
        rc.train.weights.ns = cf.get_double("training", "lambda_ns", rc.train.manual_weights ? 1.5 : 1.0);
        rc.train.weights.wk = cf.get_double("training", "lambda_wk", 1.0);
        rc.train.weights.bc = cf.get_double("training", "lambda_bc", rc.train.manual_weights ? 6.0 : 1.0);
        rc.train.weights.data = cf.get_double("training", "lambda_data", 1.0);
        rc.train.weights.gradp = cf.get_double("training", "lambda_gradp", 1.0);
        if (rc.train.epochs_stage1 + rc.train.epochs_stage2 < 0)
            throw ConfigError("[training] negative epoch counts");

        cf.ensure_all_used();
        return rc;
    }
};

} // namespace hemopinn::cli
