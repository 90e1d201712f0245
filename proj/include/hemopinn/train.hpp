#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "hemopinn/adam.hpp"
#include "hemopinn/errors.hpp"
#include "hemopinn/geometry.hpp"
#include "hemopinn/losses.hpp"
#include "hemopinn/measure.hpp"
#include "hemopinn/mlp.hpp"
#include "hemopinn/rng.hpp"
#include "hemopinn/scales.hpp"
#include "hemopinn/spline.hpp"
#include "hemopinn/windkessel.hpp"

namespace hemopinn::pinn {

enum class Mode { steady, transient };

struct NetworkConfig {
    int hidden_layers = 4;
    int width = 64;
    int pi_hidden_layers = 6;
    int pi_width = 10;
};

struct TrainConfig {
    int epochs_stage1 = 120;
    int epochs_stage2 = 1250;
    double lr_net = 1e-3;
    double lr_params = 1e-2;
    int collocation = 20000;
    int wall_points = 2000;
    int batch = 0; // 0 -> max(256, collocation / 100)
    int realizations = 5;
    int quad_nodes = 9;
    int ode_extra_times = 22; // extra random ODE residual times per epoch in stage 2
    int outlet_time_batch = 0; // measurement times per step in the outlet terms; 0 -> max(4, M/4)
    double t_close = 0.30;    // decay-fit window (seconds)
    double t_end = 0.66;
    bool manual_weights = false;
    LossWeights weights{}; // starting values; fixed when manual
    int workers = 2;

    int resolved_batch() const {
        if (batch > 0) return batch;
        return std::max(256, collocation / 100);
    }
    int total_epochs() const { return epochs_stage1 + epochs_stage2; }
};

struct TrainSetup {
    geom::DomainSpec spec;
    Scales scales;
    Mode mode = Mode::transient;
    measure::MeasurementSet meas; // dimensional (CGS)
    // reference parameters used only to seed the half-to-double initial guess
    std::vector<wk::Params> ref_transient;
    std::vector<wk::SteadyParams> ref_steady;
    NetworkConfig net;
    TrainConfig cfg;
    std::vector<double> eval_times; // seconds; output curve sampling
};

// one decoded parameter set, physical CGS units
struct EstimatedParams {
    bool steady = false;
    double tau = 0.0;            // seconds (transient)
    std::vector<double> rp, rd, c; // transient
    std::vector<double> rt;        // steady
};

struct TrainHistoryRow {
    int epoch = 0;
    double total = 0, ns = 0, wk = 0, bc = 0, udata = 0, pdata = 0, gradp = 0;
    LossWeights weights;
    EstimatedParams params;
};

struct TrainResult {
    bool failed = false;
    std::string error;
    std::uint64_t seed = 0;
    neural::ParamVector params;
    EstimatedParams estimates;
    std::vector<TrainHistoryRow> history;
    // network-predicted curves at eval_times (physical units)
    std::vector<double> curve_t;
    std::vector<std::vector<double>> curve_Q; // [K]
    std::vector<std::vector<double>> curve_P; // [K] outlet-mean pressure
    std::vector<double> inlet_Q;
};

// log-parameters drawn uniformly in [log(ref/2), log(2 ref)]
inline std::vector<double> init_windkessel_guess(std::span<const double> ref, std::uint64_t seed) {
    std::vector<double> out(ref.size());
    for (std::size_t q = 0; q < ref.size(); ++q) {
        if (!(ref[q] > 0.0)) throw Error("init_windkessel_guess: reference values must be positive");
        out[q] = rng::uniform(seed, rng::kStreamWkInit, q, std::log(ref[q] / 2.0),
                              std::log(2.0 * ref[q]));
    }
    return out;
}

// C_k = tau / Rd_k with tau fitted on the measured mean-pressure curve
inline std::vector<double> estimate_compliance(const std::vector<double>& pbar_t,
                                               const std::vector<double>& pbar, double t_close,
                                               double t_end, std::span<const double> rd) {
    const double tau = wk::fit_decay_time(pbar_t, pbar, t_close, t_end);
    std::vector<double> c(rd.size());
    for (std::size_t k = 0; k < rd.size(); ++k) c[k] = tau / rd[k];
    return c;
}

// Per-outlet flow interpolants Q_k(t) from quadrature of the network normal
// velocity at the measurement times (cubic spline with not-a-knot ends).
// Thin wrapper used by the trainer; refreshed once per epoch.
inline std::vector<CubicSpline> flow_interpolants(const std::vector<double>& times,
                                                  const std::vector<std::vector<double>>& q_samples) {
    if (times.size() < 4) throw TooFewTimes("flow interpolant needs at least 4 measurement times");
    std::vector<CubicSpline> out;
    for (const auto& q : q_samples) out.emplace_back(times, q);
    return out;
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

class Trainer {
public:
    Trainer(const TrainSetup& setup, std::uint64_t seed) : s_(setup), seed_(seed) {
        transient_ = s_.mode == Mode::transient;
        K_ = static_cast<int>(s_.spec.outlets.size());
        s_.scales.validate();
        re_ = s_.scales.reynolds();
        prepare_networks();
        prepare_data();
        prepare_outlets();
        weights_ = s_.cfg.weights;
        weights_.automatic = !s_.cfg.manual_weights;
        const int third = std::max(1, s_.cfg.total_epochs() / 3);
        adam_ = neural::AdamState::make(params_, lr_table(), neural::StepDecay{third, 0.5});
        grad_.assign(params_.data.size(), 0.0);
    }

    // --- public surface used by the pipeline and the tests ---------------

    int total_epochs() const { return s_.cfg.total_epochs(); }
    const neural::ParamVector& params() const { return params_; }
    neural::ParamVector& mutable_params() { return params_; }
    const LossWeights& weights() const { return weights_; }
    double tau_nd() const { return tau_nd_; }
    double tau_seconds() const { return tau_nd_ * s_.scales.time(); }
    int epoch() const { return epoch_; }

    // resumable state snapshot/restore (all mutable trainer state)
    struct State {
        std::vector<double> params;
        std::vector<double> adam_m, adam_v;
        long adam_step = 0;
        LossWeights weights;
        int epoch = 0;
    };
    State save_state() const {
        return {params_.data, adam_.m, adam_.v, adam_.step, weights_, epoch_};
    }
    void restore_state(const State& st) {
        params_.data = st.params;
        adam_.m = st.adam_m;
        adam_.v = st.adam_v;
        adam_.step = st.adam_step;
        weights_ = st.weights;
        epoch_ = st.epoch;
    }

    // freezes the per-epoch state: flow interpolants, ODE sample times and
    // the shuffled batch orders (all pure functions of params, seed, epoch)
    void prepare_epoch(int e) {
        refresh_flow_splines();
        refresh_ode_times(e);
        shuffle_sets(e);
    }

    TrainHistoryRow run_epoch() {
        const int e = epoch_;
        const bool stage1 = e < s_.cfg.epochs_stage1;
        adam_.lr_scale = adam_.schedule.scale_at(e);

        prepare_epoch(e);

        if (weights_.automatic && e % std::max(1, weights_.update_period) == 0)
            update_weights(e);

        const int nb = steps_per_epoch();
        TrainHistoryRow row;
        row.epoch = e;
        for (int b = 0; b < nb; ++b) {
            std::fill(grad_.begin(), grad_.end(), 0.0);
            const auto terms = accumulate_losses(b, nb, grad_);
            if (!std::isfinite(terms.total()))
                throw NonFiniteLoss("training loss diverged at epoch " + std::to_string(e));
            if (stage1) {
                const auto& sl = params_.find("wk");
                std::fill(grad_.begin() + sl.offset, grad_.begin() + sl.offset + sl.size, 0.0);
            }
            neural::adam_step(adam_, params_, grad_);
            row.ns += terms.ns / nb;
            row.wk += terms.wk / nb;
            row.bc += terms.bc / nb;
            row.udata += terms.udata / nb;
            row.pdata += terms.pdata / nb;
            row.gradp += terms.gradp / nb;
        }
        row.total = row.ns + row.wk + row.bc + row.udata + row.pdata + row.gradp;
        row.weights = weights_;
        row.params = decode_estimates();
        epoch_ += 1;
        return row;
    }

    EstimatedParams decode_estimates() const {
        EstimatedParams est;
        est.steady = !transient_;
        const auto wkp = params_.slice("wk");
        if (transient_) {
            est.tau = tau_seconds();
            for (int k = 0; k < K_; ++k) {
                est.rp.push_back(std::exp(wkp[k]) * s_.scales.resistance());
                est.rd.push_back(std::exp(wkp[K_ + k]) * s_.scales.resistance());
                est.c.push_back(est.tau / est.rd.back());
            }
        } else {
            for (int k = 0; k < K_; ++k) est.rt.push_back(std::exp(wkp[k]) * s_.scales.resistance());
        }
        return est;
    }

    // network flow curves (physical units) at the given times (seconds)
    void predict_curves(const std::vector<double>& times_s, std::vector<std::vector<double>>& Q,
                        std::vector<std::vector<double>>& P, std::vector<double>& Qin) {
        Q.assign(K_, {});
        P.assign(K_, {});
        Qin.clear();
        for (double ts : times_s) {
            const double t = ts / s_.scales.time();
            for (int k = 0; k < K_; ++k) {
                auto [q, pm] = outlet_flow_and_pressure(k, t);
                Q[k].push_back(q * s_.scales.flow());
                P[k].push_back(pm * s_.scales.pressure());
            }
            Qin.push_back(inlet_flow(t) * s_.scales.flow());
        }
    }

    // inward velocity at an inlet point (physical units; y in cm, t in s)
    double inlet_velocity(double y_cm, double t_s) {
        double x, y;
        if (s_.spec.inlet.axis == geom::Axis::vertical) {
            x = s_.spec.inlet.coord;
            y = y_cm;
        } else {
            x = y_cm;
            y = s_.spec.inlet.coord;
        }
        double u, v;
        velocity_value(x / s_.scales.L, y / s_.scales.L, t_s / s_.scales.time(), u, v);
        double nx, ny;
        s_.spec.inlet.normal(nx, ny);
        return -(u * nx + v * ny) * s_.scales.U;
    }

    // velocity at a physical point (cm, s) -> cm/s
    void velocity_at(double x_cm, double y_cm, double t_s, double& u_out, double& v_out) {
        double u, v;
        velocity_value(x_cm / s_.scales.L, y_cm / s_.scales.L, t_s / s_.scales.time(), u, v);
        u_out = u * s_.scales.U;
        v_out = v * s_.scales.U;
    }

    // term values + gradient for one chunk; exposed for gradient tests
    struct Terms {
        double ns = 0, wk = 0, bc = 0, udata = 0, pdata = 0, gradp = 0;
        double total() const { return ns + wk + bc + udata + pdata + gradp; }
    };
    Terms accumulate_losses(int chunk, int nchunks, std::vector<double>& grad,
                            const LossWeights* override_weights = nullptr) {
        const LossWeights& w = override_weights ? *override_weights : weights_;
        set_active_times(chunk);
        Terms t;
        t.ns = ns_term(chunk, nchunks, w.ns, &grad);
        t.bc = point_term(wall_, chunk, nchunks, w.bc, nullptr, &grad);
        t.udata = point_term(data_, chunk, nchunks, w.data, &data_targets_, &grad);
        const auto owt = outlet_terms(w, &grad);
        t.wk = owt[0];
        t.pdata = owt[1];
        t.gradp = owt[2];
        return t;
    }

    // rotating deterministic subset of measurement times for the outlet terms
    void set_active_times(int step) {
        const int M = ob_.M;
        int S = s_.cfg.outlet_time_batch > 0 ? s_.cfg.outlet_time_batch : std::max(4, M / 4);
        S = std::min(S, M);
        ob_.active.clear();
        if (S >= M) return; // all times
        for (int q = 0; q < S; ++q) ob_.active.push_back((step * S + q) % M);
    }

private:
    // --- setup ------------------------------------------------------------

    std::vector<std::pair<std::string, double>> lr_table() const {
        std::vector<std::pair<std::string, double>> t{{"net", s_.cfg.lr_net},
                                                      {"wk", s_.cfg.lr_params}};
        if (transient_) t.emplace_back("pi", s_.cfg.lr_net);
        return t;
    }

    void prepare_networks() {
        net_spec_ = neural::MlpSpec{transient_ ? 3 : 2, s_.net.hidden_layers, s_.net.width,
                                    transient_ ? 2 : 3};
        params_.add_slice("net", static_cast<std::size_t>(neural::mlp_param_count(net_spec_)));
        neural::init_mlp_params(net_spec_, params_.slice("net"), seed_, 0);
        if (transient_) {
            pi_spec_ = neural::MlpSpec{1, s_.net.pi_hidden_layers, s_.net.pi_width, K_};
            params_.add_slice("pi", static_cast<std::size_t>(neural::mlp_param_count(pi_spec_)));
            neural::init_mlp_params(pi_spec_, params_.slice("pi"), seed_, 1);
        }

        // Windkessel log-parameters, nondimensional, half-to-double guess
        std::vector<double> ref;
        if (transient_) {
            for (const auto& p : s_.ref_transient) ref.push_back(p.Rp / s_.scales.resistance());
            for (const auto& p : s_.ref_transient) ref.push_back(p.Rd / s_.scales.resistance());
        } else {
            for (const auto& p : s_.ref_steady) ref.push_back(p.Rt / s_.scales.resistance());
        }
        const auto guess = init_windkessel_guess(ref, seed_);
        params_.add_slice("wk", guess.size());
        auto wkp = params_.slice("wk");
        std::copy(guess.begin(), guess.end(), wkp.begin());
    }

    struct PointSet {
        std::vector<double> x, y, t; // nondimensional
        std::vector<int> order;
    };

    void prepare_data() {
        const auto& sc = s_.scales;
        const double tmax_s = s_.meas.t.empty() ? 0.0 : *std::max_element(s_.meas.t.begin(), s_.meas.t.end());

        auto colloc = geom::sample_collocation(s_.spec, s_.cfg.collocation,
                                               {0.0, transient_ ? tmax_s : 0.0}, seed_);
        for (const auto& p : colloc.pts) {
            colloc_.x.push_back(p.x / sc.L);
            colloc_.y.push_back(p.y / sc.L);
            colloc_.t.push_back(p.t / sc.time());
        }
        colloc_.order.resize(colloc_.x.size());
        std::iota(colloc_.order.begin(), colloc_.order.end(), 0);

        auto wall = geom::sample_boundary(s_.spec, geom::SegmentTag::wall, s_.cfg.wall_points, seed_);
        for (std::size_t q = 0; q < wall.pts.size(); ++q) {
            wall_.x.push_back(wall.pts[q].x / sc.L);
            wall_.y.push_back(wall.pts[q].y / sc.L);
            const double ts = transient_ ? rng::uniform(seed_, rng::kStreamWallTimes, q, 0.0, tmax_s)
                                         : 0.0;
            wall_.t.push_back(ts / sc.time());
        }
        wall_.order.resize(wall_.x.size());
        std::iota(wall_.order.begin(), wall_.order.end(), 0);

        for (std::size_t q = 0; q < s_.meas.x.size(); ++q) {
            data_.x.push_back(s_.meas.x[q] / sc.L);
            data_.y.push_back(s_.meas.y[q] / sc.L);
            data_.t.push_back(s_.meas.t[q] / sc.time());
            data_targets_.push_back({s_.meas.u_meas[q] / sc.U, s_.meas.v_meas[q] / sc.U});
        }
        data_.order.resize(data_.x.size());
        std::iota(data_.order.begin(), data_.order.end(), 0);

        // measurement times and anchor curve
        for (std::size_t q = 0; q < s_.meas.pbar_t.size(); ++q) {
            meas_times_.push_back(s_.meas.pbar_t[q] / sc.time());
            pbar_meas_.push_back(s_.meas.pbar[q] / sc.pressure());
        }

        if (transient_) {
            const double tau_s = wk::fit_decay_time(s_.meas.pbar_t, s_.meas.pbar, s_.cfg.t_close,
                                                    s_.cfg.t_end);
            tau_nd_ = tau_s / sc.time();
        }
    }

    void prepare_outlets() {
        ob_.K = K_;
        ob_.M = static_cast<int>(meas_times_.size());
        ob_.m = s_.cfg.quad_nodes;
        ob_.times = meas_times_;
        for (int k = 1; k <= K_; ++k) {
            auto [nodes, wts] = geom::outlet_quadrature(s_.spec, k, ob_.m);
            double len = 0.0;
            for (double wq : wts) len += wq;
            ob_.lengths.push_back(len / s_.scales.L);
            for (int q = 0; q < ob_.m; ++q) {
                ob_.weights.push_back(wts[q] / s_.scales.L);
                onode_x_.push_back(nodes.pts[q].x / s_.scales.L);
                onode_y_.push_back(nodes.pts[q].y / s_.scales.L);
            }
            double nx, ny;
            s_.spec.outlets[k - 1].normal(nx, ny);
            onormal_.push_back({nx, ny});
        }
        const int nn = ob_.K * ob_.M * ob_.m;
        ob_.p.assign(nn, 0.0);
        ob_.px.assign(nn, 0.0);
        ob_.py.assign(nn, 0.0);
        ob_.Q.assign(ob_.K * ob_.M, 0.0);
        if (transient_) ob_.pi.assign(ob_.K * ob_.M, 0.0);
        q_samples_.assign(K_, std::vector<double>(ob_.M, 0.0));
    }

    int steps_per_epoch() const {
        const int batch = s_.cfg.resolved_batch();
        return std::max<int>(1, (static_cast<int>(colloc_.x.size()) + batch - 1) / batch);
    }

    void shuffle_sets(int e) {
        auto do_shuffle = [&](PointSet& ps, std::uint64_t which) {
            rng::Stream st(seed_, rng::kStreamShuffle + (static_cast<std::uint64_t>(e + 1) << 16) +
                                      (which << 8));
            rng::shuffle(ps.order, st);
        };
        do_shuffle(colloc_, 1);
        do_shuffle(wall_, 2);
        do_shuffle(data_, 3);
    }

    void refresh_ode_times(int e) {
        ode_times_ = meas_times_;
        if (transient_ && e >= s_.cfg.epochs_stage1 && s_.cfg.ode_extra_times > 0) {
            const double lo = meas_times_.front(), hi = meas_times_.back();
            for (int q = 0; q < s_.cfg.ode_extra_times; ++q)
                ode_times_.push_back(rng::uniform(seed_, rng::kStreamOdeTimes,
                                                  static_cast<std::uint64_t>(e) * 4096 + q, lo, hi));
        }
        if (transient_) {
            odeb_.K = K_;
            odeb_.n = static_cast<int>(ode_times_.size());
            odeb_.pi.assign(odeb_.K * odeb_.n, 0.0);
            odeb_.pidot.assign(odeb_.K * odeb_.n, 0.0);
            odeb_.Q.assign(odeb_.K * odeb_.n, 0.0);
        }
    }

    // --- network evaluation helpers ----------------------------------------

    void velocity_value(double x, double y, double t, double& u, double& v) {
        if (transient_) {
            ws31_.resize(net_spec_);
            ws31_.in[0] = neural::Jet31::variable(x, 0);
            ws31_.in[1] = neural::Jet31::variable(y, 1);
            ws31_.in[2] = neural::Jet31::variable(t, 2);
            neural::mlp_forward(net_spec_, params_.slice("net"), ws31_);
            using T = neural::Jet31::Traits;
            u = ws31_.out[0].c[T::index_of(0, 1, 0)];
            v = -ws31_.out[0].c[T::index_of(1, 0, 0)];
        } else {
            ws20_.resize(net_spec_);
            ws20_.in[0] = neural::Jet<2, 0>::variable(x, 0);
            ws20_.in[1] = neural::Jet<2, 0>::variable(y, 1);
            neural::mlp_forward(net_spec_, params_.slice("net"), ws20_);
            u = ws20_.out[0].value();
            v = ws20_.out[1].value();
        }
    }

    std::pair<double, double> outlet_flow_and_pressure(int k, double t) {
        double q = 0.0, pm = 0.0;
        for (int n = 0; n < ob_.m; ++n) {
            const int id = k * ob_.m + n;
            double u, v;
            velocity_value(onode_x_[id], onode_y_[id], t, u, v);
            q += ob_.weights[id] * (u * onormal_[k].first + v * onormal_[k].second);
            // pressure value at the node
            double p;
            if (transient_) {
                using T = neural::Jet31::Traits;
                (void)T::index_of(0, 0, 0);
                p = ws31_.out[1].value(); // ws31_ still holds this node's forward
            } else {
                // direct mode: third output
                p = ws20_.out[2].value();
            }
            pm += ob_.weights[id] * p / ob_.lengths[k];
        }
        return {q, pm};
    }

    double inlet_flow(double t) {
        const auto& seg = s_.spec.inlet;
        const int m = 33;
        double nxd, nyd;
        seg.normal(nxd, nyd);
        double q = 0.0;
        const double len = seg.length() / s_.scales.L;
        for (int n = 0; n < m; ++n) {
            const double sarc = seg.lo + seg.length() * n / (m - 1.0);
            double x, y;
            seg.at(sarc - seg.lo, x, y);
            double u, v;
            velocity_value(x / s_.scales.L, y / s_.scales.L, t, u, v);
            const double wq = (n == 0 || n == m - 1) ? 0.5 : 1.0;
            q += wq * len / (m - 1.0) * (-(u * nxd + v * nyd));
        }
        return q;
    }

    void refresh_flow_splines() {
        for (int k = 0; k < K_; ++k)
            for (int t = 0; t < ob_.M; ++t) {
                double q = 0.0;
                for (int n = 0; n < ob_.m; ++n) {
                    const int id = k * ob_.m + n;
                    double u, v;
                    velocity_value(onode_x_[id], onode_y_[id], ob_.times[t], u, v);
                    q += ob_.weights[id] * (u * onormal_[k].first + v * onormal_[k].second);
                }
                q_samples_[k][t] = q;
                ob_.Q[ob_.kt(k, t)] = q;
            }
        if (transient_ && ob_.M >= 4) q_splines_ = flow_interpolants(ob_.times, q_samples_);
    }

    // --- loss assembly ------------------------------------------------------

    // interior physics term over one chunk of the shuffled collocation set
    double ns_term(int chunk, int nchunks, double lambda, std::vector<double>* grad) {
        const int n = static_cast<int>(colloc_.x.size());
        const int per = (n + nchunks - 1) / nchunks;
        const int lo = chunk * per, hi = std::min(n, lo + per);
        if (lo >= hi) return 0.0;
        auto gnet = grad ? std::span<double>(grad->data() + params_.find("net").offset,
                                             params_.find("net").size)
                         : std::span<double>();
        double acc = 0.0;
        const double lam_eff = lambda / (hi - lo);
        for (int q = lo; q < hi; ++q) {
            const int id = colloc_.order[q];
            FlowDerivs f;
            FlowDerivsBar b;
            if (transient_) {
                ws33_.resize(net_spec_);
                ws33_.in[0] = neural::Jet33::variable(colloc_.x[id], 0);
                ws33_.in[1] = neural::Jet33::variable(colloc_.y[id], 1);
                ws33_.in[2] = neural::Jet33::variable(colloc_.t[id], 2);
                neural::mlp_forward(net_spec_, params_.slice("net"), ws33_);
                f = flow_from_potential(ws33_.out[0], ws33_.out[1]);
                acc += loss_ns({&f, 1}, re_, lam_eff, {&b, 1});
                if (grad) {
                    neural::Jet33 bar[2];
                    flow_from_potential_adjoint(b, bar[0], bar[1]);
                    neural::mlp_backward(net_spec_, params_.slice("net"), gnet, ws33_, bar);
                }
            } else {
                ws22_.resize(net_spec_);
                ws22_.in[0] = neural::Jet22::variable(colloc_.x[id], 0);
                ws22_.in[1] = neural::Jet22::variable(colloc_.y[id], 1);
                neural::mlp_forward(net_spec_, params_.slice("net"), ws22_);
                f = flow_from_direct(ws22_.out[0], ws22_.out[1], ws22_.out[2]);
                acc += loss_ns({&f, 1}, re_, lam_eff, {&b, 1});
                if (grad) {
                    neural::Jet22 bar[3];
                    flow_from_direct_adjoint(b, bar[0], bar[1], bar[2]);
                    neural::mlp_backward(net_spec_, params_.slice("net"), gnet, ws22_, bar);
                }
            }
        }
        return acc;
    }

    // wall (targets == nullptr) or velocity-data chunks
    double point_term(const PointSet& ps, int chunk, int nchunks, double lambda,
                      const std::vector<std::pair<double, double>>* targets,
                      std::vector<double>* grad) {
        const int n = static_cast<int>(ps.x.size());
        if (n == 0) return 0.0;
        const int per = (n + nchunks - 1) / nchunks;
        const int lo = chunk * per, hi = std::min(n, lo + per);
        if (lo >= hi) return 0.0;
        auto gnet = grad ? std::span<double>(grad->data() + params_.find("net").offset,
                                             params_.find("net").size)
                         : std::span<double>();
        double acc = 0.0;
        const double lam_eff = lambda / (hi - lo);
        for (int q = lo; q < hi; ++q) {
            const int id = ps.order[q];
            double u, v, ub = 0.0, vb = 0.0;
            if (transient_) {
                ws31_.resize(net_spec_);
                ws31_.in[0] = neural::Jet31::variable(ps.x[id], 0);
                ws31_.in[1] = neural::Jet31::variable(ps.y[id], 1);
                ws31_.in[2] = neural::Jet31::variable(ps.t[id], 2);
                neural::mlp_forward(net_spec_, params_.slice("net"), ws31_);
                using T = neural::Jet31::Traits;
                u = ws31_.out[0].c[T::index_of(0, 1, 0)];
                v = -ws31_.out[0].c[T::index_of(1, 0, 0)];
            } else {
                ws20_.resize(net_spec_);
                ws20_.in[0] = neural::Jet<2, 0>::variable(ps.x[id], 0);
                ws20_.in[1] = neural::Jet<2, 0>::variable(ps.y[id], 1);
                neural::mlp_forward(net_spec_, params_.slice("net"), ws20_);
                u = ws20_.out[0].value();
                v = ws20_.out[1].value();
            }
            double lv;
            if (targets) {
                const auto [um, vm] = (*targets)[id];
                lv = loss_udata({&u, 1}, {&v, 1}, {&um, 1}, {&vm, 1}, lam_eff, {&ub, 1}, {&vb, 1});
            } else {
                lv = loss_bc({&u, 1}, {&v, 1}, lam_eff, {&ub, 1}, {&vb, 1});
            }
            acc += lv;
            if (grad) {
                if (transient_) {
                    using T = neural::Jet31::Traits;
                    neural::Jet31 bar[2];
                    bar[0].c[T::index_of(0, 1, 0)] += ub;
                    bar[0].c[T::index_of(1, 0, 0)] -= vb;
                    neural::mlp_backward(net_spec_, params_.slice("net"), gnet, ws31_, bar);
                } else {
                    neural::Jet<2, 0> bar[3];
                    bar[0].c[0] = ub;
                    bar[1].c[0] = vb;
                    neural::mlp_backward(net_spec_, params_.slice("net"), gnet, ws20_, bar);
                }
            }
        }
        return acc;
    }

    // Windkessel + anchor + flat-pressure terms on the outlet nodes.
    // Returns {wk, pdata, gradp}; gradient optional.
    std::array<double, 3> outlet_terms(const LossWeights& w, std::vector<double>* grad) {
        // forward evaluations with stored traces (active time subset only)
        const int nn = ob_.K * ob_.M * ob_.m;
        if (transient_) {
            if (otr31_.size() != static_cast<std::size_t>(nn)) otr31_.resize(nn);
            for (int k = 0; k < ob_.K; ++k)
                for (int slot = 0; slot < ob_.n_active(); ++slot) {
                    const int t = ob_.time_index(slot);
                    for (int n = 0; n < ob_.m; ++n) {
                        const int id = ob_.at(k, t, n);
                        auto& ws = otr31_[id];
                        ws.resize(net_spec_);
                        ws.in[0] = neural::Jet31::variable(onode_x_[k * ob_.m + n], 0);
                        ws.in[1] = neural::Jet31::variable(onode_y_[k * ob_.m + n], 1);
                        ws.in[2] = neural::Jet31::variable(ob_.times[t], 2);
                        neural::mlp_forward(net_spec_, params_.slice("net"), ws);
                        using T = neural::Jet31::Traits;
                        ob_.p[id] = ws.out[1].value();
                        ob_.px[id] = ws.out[1].c[T::index_of(1, 0, 0)];
                        ob_.py[id] = ws.out[1].c[T::index_of(0, 1, 0)];
                    }
                }
            // pi-net at the active measurement times
            if (pitr_.size() != static_cast<std::size_t>(ob_.M)) pitr_.resize(ob_.M);
            for (int slot = 0; slot < ob_.n_active(); ++slot) {
                const int t = ob_.time_index(slot);
                auto& ws = pitr_[t];
                ws.resize(pi_spec_);
                ws.in[0] = neural::Jet11::variable(ob_.times[t], 0);
                neural::mlp_forward(pi_spec_, params_.slice("pi"), ws);
                for (int k = 0; k < ob_.K; ++k) ob_.pi[ob_.kt(k, t)] = ws.out[k].value();
            }
            // pi-net at the ODE times, flows from the frozen splines
            if (odetr_.size() != static_cast<std::size_t>(odeb_.n)) odetr_.resize(odeb_.n);
            for (int t = 0; t < odeb_.n; ++t) {
                auto& ws = odetr_[t];
                ws.resize(pi_spec_);
                ws.in[0] = neural::Jet11::variable(ode_times_[t], 0);
                neural::mlp_forward(pi_spec_, params_.slice("pi"), ws);
                for (int k = 0; k < ob_.K; ++k) {
                    odeb_.pi[odeb_.at(k, t)] = ws.out[k].value();
                    odeb_.pidot[odeb_.at(k, t)] = ws.out[k].c[1];
                    odeb_.Q[odeb_.at(k, t)] =
                        q_splines_.empty() ? 0.0 : q_splines_[k](ode_times_[t]);
                }
            }
        } else {
            if (otr21_.size() != static_cast<std::size_t>(nn)) otr21_.resize(nn);
            for (int k = 0; k < ob_.K; ++k)
                for (int slot = 0; slot < ob_.n_active(); ++slot) {
                    const int t = ob_.time_index(slot);
                    for (int n = 0; n < ob_.m; ++n) {
                        const int id = ob_.at(k, t, n);
                        auto& ws = otr21_[id];
                        ws.resize(net_spec_);
                        ws.in[0] = neural::Jet21::variable(onode_x_[k * ob_.m + n], 0);
                        ws.in[1] = neural::Jet21::variable(onode_y_[k * ob_.m + n], 1);
                        neural::mlp_forward(net_spec_, params_.slice("net"), ws);
                        using T = neural::Jet21::Traits;
                        ob_.p[id] = ws.out[2].value();
                        ob_.px[id] = ws.out[2].c[T::index_of(1, 0)];
                        ob_.py[id] = ws.out[2].c[T::index_of(0, 1)];
                    }
                }
        }

        ob_.zero_bars();
        if (transient_) odeb_.zero_bars();

        // exponentiated parameters
        const auto wkp = params_.slice("wk");
        std::vector<double> rp(K_), rd(K_);
        if (transient_)
            for (int k = 0; k < K_; ++k) {
                rp[k] = std::exp(wkp[k]);
                rd[k] = std::exp(wkp[K_ + k]);
            }
        else
            for (int k = 0; k < K_; ++k) rp[k] = std::exp(wkp[k]); // Rt

        std::span<double> gwk;
        if (grad) {
            const auto& sl = params_.find("wk");
            gwk = std::span<double>(grad->data() + sl.offset, sl.size);
        }

        double wk_val = loss_wk_pressure(ob_, rp, w.wk,
                                         grad ? gwk.subspan(0, K_) : std::span<double>(),
                                         grad != nullptr);
        if (transient_)
            wk_val += loss_wk_ode(odeb_, rd, tau_nd_, w.wk,
                                  grad ? gwk.subspan(K_, K_) : std::span<double>(),
                                  grad != nullptr);
        const double pdata_val = loss_pdata(ob_, pbar_meas_, w.data, grad != nullptr);
        const double gradp_val = loss_gradp(ob_, w.gradp, grad != nullptr);

        if (grad) {
            auto gnet = std::span<double>(grad->data() + params_.find("net").offset,
                                          params_.find("net").size);
            if (transient_) {
                using T = neural::Jet31::Traits;
                for (int k = 0; k < ob_.K; ++k)
                    for (int slot = 0; slot < ob_.n_active(); ++slot)
                        for (int n = 0; n < ob_.m; ++n) {
                            const int id = ob_.at(k, ob_.time_index(slot), n);
                            neural::Jet31 bar[2];
                            bar[1].c[0] = ob_.bar_p[id];
                            bar[1].c[T::index_of(1, 0, 0)] = ob_.bar_px[id];
                            bar[1].c[T::index_of(0, 1, 0)] = ob_.bar_py[id];
                            neural::mlp_backward(net_spec_, params_.slice("net"), gnet, otr31_[id],
                                                 bar);
                        }
                auto gpi = std::span<double>(grad->data() + params_.find("pi").offset,
                                             params_.find("pi").size);
                for (int slot = 0; slot < ob_.n_active(); ++slot) {
                    const int t = ob_.time_index(slot);
                    std::vector<neural::Jet11> bar(K_);
                    bool any = false;
                    for (int k = 0; k < K_; ++k) {
                        bar[k].c[0] = ob_.bar_pi[ob_.kt(k, t)];
                        any = any || bar[k].c[0] != 0.0;
                    }
                    if (any)
                        neural::mlp_backward(pi_spec_, params_.slice("pi"), gpi, pitr_[t], bar.data());
                }
                for (int t = 0; t < odeb_.n; ++t) {
                    std::vector<neural::Jet11> bar(K_);
                    for (int k = 0; k < K_; ++k) {
                        bar[k].c[0] = odeb_.bar_pi[odeb_.at(k, t)];
                        bar[k].c[1] = odeb_.bar_pidot[odeb_.at(k, t)];
                    }
                    neural::mlp_backward(pi_spec_, params_.slice("pi"), gpi, odetr_[t], bar.data());
                }
            } else {
                using T = neural::Jet21::Traits;
                for (int k = 0; k < ob_.K; ++k)
                    for (int slot = 0; slot < ob_.n_active(); ++slot)
                        for (int n = 0; n < ob_.m; ++n) {
                            const int id = ob_.at(k, ob_.time_index(slot), n);
                            neural::Jet21 bar[3];
                            bar[2].c[0] = ob_.bar_p[id];
                            bar[2].c[T::index_of(1, 0)] = ob_.bar_px[id];
                            bar[2].c[T::index_of(0, 1)] = ob_.bar_py[id];
                            neural::mlp_backward(net_spec_, params_.slice("net"), gnet, otr21_[id],
                                                 bar);
                        }
            }
        }
        return {wk_val, pdata_val, gradp_val};
    }

    // automatic weight balancing: unweighted per-term gradients over the
    // network slices, first chunk of the epoch
    void update_weights(int /*epoch*/) {
        LossWeights unit;
        unit.ns = unit.wk = unit.bc = unit.data = unit.gradp = 1.0;
        const int nb = steps_per_epoch();
        const auto& net_sl = params_.find("net");
        const std::size_t net_end = transient_
                                        ? params_.find("pi").offset + params_.find("pi").size
                                        : net_sl.offset + net_sl.size;
        auto net_part = [&](const std::vector<double>& g) {
            return std::vector<double>(g.begin() + net_sl.offset, g.begin() + net_end);
        };

        std::vector<double> gns(params_.data.size(), 0.0), gwk(gns.size(), 0.0),
            gbc(gns.size(), 0.0), gdata(gns.size(), 0.0), ggradp(gns.size(), 0.0);
        ns_term(0, nb, 1.0, &gns);
        point_term(wall_, 0, nb, 1.0, nullptr, &gbc);
        point_term(data_, 0, nb, 1.0, &data_targets_, &gdata);
        {
            // outlet terms: three separate sweeps to split the gradients
            LossWeights only;
            std::vector<double> tmp(params_.data.size(), 0.0);
            only = unit;
            only.data = only.gradp = 0.0;
            outlet_terms(only, &gwk);
            only = unit;
            only.wk = only.gradp = 0.0;
            outlet_terms(only, &tmp);
            for (std::size_t q = 0; q < tmp.size(); ++q) gdata[q] += tmp[q];
            std::fill(tmp.begin(), tmp.end(), 0.0);
            only = unit;
            only.wk = only.data = 0.0;
            outlet_terms(only, &ggradp);
        }
        const auto pns = net_part(gns), pwk = net_part(gwk), pbc = net_part(gbc),
                   pdata = net_part(gdata), pgradp = net_part(ggradp);
        weights_ = update_weights_auto(weights_, pns, pwk, pbc, pdata, pgradp);
    }

    // --- members ------------------------------------------------------------

    TrainSetup s_;
    std::uint64_t seed_ = 0;
    bool transient_ = true;
    int K_ = 0;
    double re_ = 1.0;
    double tau_nd_ = 0.0;
    int epoch_ = 0;

    neural::MlpSpec net_spec_, pi_spec_;
    neural::ParamVector params_;
    neural::AdamState adam_;
    LossWeights weights_;
    std::vector<double> grad_;

    PointSet colloc_, wall_, data_;
    std::vector<std::pair<double, double>> data_targets_;
    std::vector<double> meas_times_, pbar_meas_;

    OutletPointBatch ob_;
    OdeBatch odeb_;
    std::vector<double> onode_x_, onode_y_;
    std::vector<std::pair<double, double>> onormal_;
    std::vector<std::vector<double>> q_samples_;
    std::vector<CubicSpline> q_splines_;
    std::vector<double> ode_times_;

    neural::MlpWorkspace<neural::Jet33> ws33_;
    neural::MlpWorkspace<neural::Jet22> ws22_;
    neural::MlpWorkspace<neural::Jet31> ws31_;
    neural::MlpWorkspace<neural::Jet21> ws21_;
    neural::MlpWorkspace<neural::Jet<2, 0>> ws20_;
    std::vector<neural::MlpWorkspace<neural::Jet31>> otr31_;
    std::vector<neural::MlpWorkspace<neural::Jet21>> otr21_;
    std::vector<neural::MlpWorkspace<neural::Jet11>> pitr_, odetr_;
};

inline TrainResult train_one(const TrainSetup& setup, std::uint64_t seed,
                             const Trainer::State* restore = nullptr,
                             Trainer::State* final_state = nullptr) {
    TrainResult res;
    res.seed = seed;
    try {
        Trainer tr(setup, seed);
        if (restore) tr.restore_state(*restore);
        while (tr.epoch() < tr.total_epochs()) res.history.push_back(tr.run_epoch());
        res.params = tr.params();
        res.estimates = tr.decode_estimates();
        if (!setup.eval_times.empty()) {
            res.curve_t = setup.eval_times;
            tr.predict_curves(setup.eval_times, res.curve_Q, res.curve_P, res.inlet_Q);
        }
        if (final_state) *final_state = tr.save_state();
    } catch (const Error& e) {
        res.failed = true;
        res.error = e.what();
    }
    return res;
}

// Independent realizations with distinct seeds, fanned out over a small
// worker pool; each realization owns its trainer, so runs are deterministic.
inline std::vector<TrainResult> train_all(const TrainSetup& setup, std::uint64_t base_seed) {
    const int R = std::max(1, setup.cfg.realizations);
    std::vector<TrainResult> out(R);
    const int workers = std::max(1, std::min(setup.cfg.workers, R));
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&]() {
            for (;;) {
                const int r = next.fetch_add(1);
                if (r >= R) return;
                out[r] = train_one(setup, base_seed + 1000ull * r);
            }
        });
    for (auto& th : pool) th.join();
    return out;
}

} // namespace hemopinn::pinn
