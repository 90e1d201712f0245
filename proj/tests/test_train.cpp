#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "hemopinn/train.hpp"

using namespace hemopinn;
using namespace hemopinn::pinn;

namespace {

measure::MeasurementSet synthetic_measurements(bool transient) {
    measure::MeasurementSet ms;
    ms.venc = 50.0;
    ms.snr_db = 18.0;
    const std::vector<double> times =
        transient ? std::vector<double>{0.0, 0.09, 0.18, 0.27, 0.36, 0.45, 0.54, 0.63}
                  : std::vector<double>{0.0};
    for (double t : times)
        for (double x : {0.5, 1.4, 2.3})
            for (double y : {0.3, 0.7}) {
                ms.x.push_back(x);
                ms.y.push_back(y);
                ms.t.push_back(t);
                ms.u_meas.push_back(20.0 * y * (1.0 - y) * (1.0 + 0.3 * std::sin(2.0 * t)));
                ms.v_meas.push_back(0.5 * std::cos(x));
            }
    if (transient) {
        for (double t = 0.0; t < 0.66; t += 0.03) {
            ms.pbar_t.push_back(t);
            ms.pbar.push_back(2.0 * mmhg_to_dyn(78.8) * std::exp(-t / 0.9926));
        }
    } else {
        ms.pbar_t = {0.0};
        ms.pbar = {2.0 * 43000.0};
    }
    return ms;
}

TrainSetup tiny_setup(Mode mode) {
    TrainSetup s;
    s.spec = geom::DomainSpec::desk_default();
    s.mode = mode;
    const bool transient = mode == Mode::transient;
    s.scales = transient ? Scales{1.0, 120.0, 1.06, 0.035} : Scales{1.0, 450.0, 1.06, 0.035};
    s.meas = synthetic_measurements(transient);
    s.ref_transient = {{713.0, 12023.0, 8.256e-5}, {98.0, 1650.0, 6.015e-4}};
    s.ref_steady = {{13000.0}, {6500.0}};
    s.net = {2, 8, 3, 6};
    s.cfg.collocation = 40;
    s.cfg.wall_points = 16;
    s.cfg.batch = 40;
    s.cfg.quad_nodes = 3;
    s.cfg.ode_extra_times = 4;
    s.cfg.epochs_stage1 = 2;
    s.cfg.epochs_stage2 = 3;
    s.cfg.realizations = 1;
    s.cfg.t_close = 0.30;
    s.cfg.t_end = 0.66;
    s.cfg.manual_weights = !transient;
    if (!transient) {
        s.cfg.weights.ns = 1.5;
        s.cfg.weights.bc = 6.0;
        s.cfg.weights.wk = 1.0;
        s.cfg.weights.data = 1.0;
        s.cfg.weights.gradp = 1.0;
    }
    return s;
}

} // namespace

TEST_CASE("zero-epoch training returns the initial guesses unchanged") {
    auto s = tiny_setup(Mode::transient);
    s.cfg.epochs_stage1 = 0;
    s.cfg.epochs_stage2 = 0;
    auto res = train_one(s, 5);
    REQUIRE(!res.failed);
    CHECK(res.history.empty());
    // decoded estimates equal the half-to-double guess
    std::vector<double> ref;
    for (const auto& p : s.ref_transient) ref.push_back(p.Rp / s.scales.resistance());
    for (const auto& p : s.ref_transient) ref.push_back(p.Rd / s.scales.resistance());
    const auto guess = init_windkessel_guess(ref, 5);
    for (int k = 0; k < 2; ++k) {
        CHECK(res.estimates.rp[k] ==
              Catch::Approx(std::exp(guess[k]) * s.scales.resistance()).epsilon(1e-12));
        CHECK(res.estimates.rd[k] ==
              Catch::Approx(std::exp(guess[2 + k]) * s.scales.resistance()).epsilon(1e-12));
        // compliance tied to the fitted decay time
        CHECK(res.estimates.c[k] ==
              Catch::Approx(res.estimates.tau / res.estimates.rd[k]).epsilon(1e-12));
    }
    CHECK(res.estimates.tau == Catch::Approx(0.9926).epsilon(1e-6));
}

TEST_CASE("full-loss parameter gradient matches directional finite differences") {
    for (Mode mode : {Mode::transient, Mode::steady}) {
        auto s = tiny_setup(mode);
        Trainer tr(s, 12);
        tr.prepare_epoch(0);

        auto loss_at = [&](const std::vector<double>& theta) {
            tr.mutable_params().data = theta;
            std::vector<double> scratch(theta.size(), 0.0);
            return tr.accumulate_losses(0, 1, scratch).total();
        };

        const auto theta0 = tr.params().data;
        std::vector<double> g(theta0.size(), 0.0);
        tr.mutable_params().data = theta0;
        const auto terms = tr.accumulate_losses(0, 1, g);
        REQUIRE(terms.total() > 0.0);

        rng::Stream rs(77, 3);
        for (int trial = 0; trial < 5; ++trial) {
            std::vector<double> dir(theta0.size());
            double norm = 0.0;
            for (auto& d : dir) {
                d = rs.u(-1, 1);
                norm += d * d;
            }
            norm = std::sqrt(norm);
            for (auto& d : dir) d /= norm;

            double analytic = 0.0;
            for (std::size_t q = 0; q < dir.size(); ++q) analytic += g[q] * dir[q];

            auto shifted = [&](double eps) {
                auto th = theta0;
                for (std::size_t q = 0; q < th.size(); ++q) th[q] += eps * dir[q];
                return loss_at(th);
            };
            const double e1 = 1e-5;
            const double d1 = (shifted(e1) - shifted(-e1)) / (2 * e1);
            const double d2 = (shifted(e1 / 2) - shifted(-e1 / 2)) / e1;
            const double fd = (4.0 * d2 - d1) / 3.0;
            CHECK(std::abs(analytic - fd) <= 1e-5 * std::max(1e-3, std::abs(fd)));
        }
        tr.mutable_params().data = theta0;
    }
}

TEST_CASE("stage 1 freezes the Windkessel parameters exactly") {
    auto s = tiny_setup(Mode::transient);
    Trainer tr(s, 21);
    const auto& sl = tr.params().find("wk");
    const std::vector<double> before(tr.params().data.begin() + sl.offset,
                                     tr.params().data.begin() + sl.offset + sl.size);
    tr.run_epoch();
    tr.run_epoch(); // both inside stage 1 (epochs_stage1 = 2)
    const std::vector<double> after(tr.params().data.begin() + sl.offset,
                                    tr.params().data.begin() + sl.offset + sl.size);
    CHECK(before == after);
    tr.run_epoch(); // stage 2 moves them
    const std::vector<double> after2(tr.params().data.begin() + sl.offset,
                                     tr.params().data.begin() + sl.offset + sl.size);
    CHECK(before != after2);
}

TEST_CASE("loss decomposition: total equals the sum of recorded components") {
    auto s = tiny_setup(Mode::transient);
    Trainer tr(s, 33);
    const auto row = tr.run_epoch();
    CHECK(row.total ==
          Catch::Approx(row.ns + row.wk + row.bc + row.udata + row.pdata + row.gradp)
              .margin(1e-12));
}

TEST_CASE("training histories are bitwise reproducible per seed") {
    auto s = tiny_setup(Mode::transient);
    auto a = train_one(s, 9);
    auto b = train_one(s, 9);
    REQUIRE(!a.failed);
    CHECK(a.params.data == b.params.data);
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t e = 0; e < a.history.size(); ++e) {
        CHECK(a.history[e].total == b.history[e].total);
        CHECK(a.history[e].weights.wk == b.history[e].weights.wk);
    }
    auto c = train_one(s, 10);
    CHECK(a.params.data != c.params.data);
}

TEST_CASE("checkpoint resume reproduces the trajectory bitwise") {
    auto s = tiny_setup(Mode::transient);
    auto full = train_one(s, 14);
    REQUIRE(!full.failed);

    // stop after 3 of 5 epochs, snapshot, then continue
    Trainer tr(s, 14);
    for (int e = 0; e < 3; ++e) tr.run_epoch();
    const auto snap = tr.save_state();

    Trainer tr2(s, 14);
    tr2.restore_state(snap);
    while (tr2.epoch() < tr2.total_epochs()) tr2.run_epoch();
    CHECK(tr2.params().data == full.params.data);
}

TEST_CASE("estimated parameters stay strictly positive through training") {
    auto s = tiny_setup(Mode::transient);
    auto res = train_one(s, 3);
    REQUIRE(!res.failed);
    for (const auto& row : res.history) {
        for (double v : row.params.rp) CHECK(v > 0.0);
        for (double v : row.params.rd) CHECK(v > 0.0);
        for (double v : row.params.c) CHECK(v > 0.0);
        CHECK(row.weights.wk > 0.0);
        CHECK(row.weights.bc > 0.0);
        CHECK(row.weights.data > 0.0);
        CHECK(row.weights.gradp > 0.0);
    }
}

TEST_CASE("steady mode trains single-stage with manual weights") {
    auto s = tiny_setup(Mode::steady);
    s.cfg.epochs_stage1 = 0;
    s.cfg.epochs_stage2 = 4;
    auto res = train_one(s, 8);
    REQUIRE(!res.failed);
    CHECK(res.history.size() == 4);
    CHECK(res.estimates.steady);
    CHECK(res.estimates.rt.size() == 2);
    for (const auto& row : res.history) {
        CHECK(row.weights.bc == 6.0); // manual weights never move
        CHECK(row.weights.ns == 1.5);
    }
}

TEST_CASE("training reduces the loss on a tiny problem") {
    auto s = tiny_setup(Mode::steady);
    s.cfg.epochs_stage1 = 0;
    s.cfg.epochs_stage2 = 40;
    s.cfg.collocation = 128;
    s.cfg.batch = 128;
    auto res = train_one(s, 4);
    REQUIRE(!res.failed);
    const double first = res.history.front().total;
    const double last = res.history.back().total;
    CHECK(last < 0.5 * first);
}

TEST_CASE("realizations fan out deterministically") {
    auto s = tiny_setup(Mode::steady);
    s.cfg.epochs_stage1 = 0;
    s.cfg.epochs_stage2 = 2;
    s.cfg.realizations = 3;
    s.cfg.workers = 2;
    auto all = train_all(s, 100);
    REQUIRE(all.size() == 3);
    auto again = train_all(s, 100);
    for (int r = 0; r < 3; ++r) {
        REQUIRE(!all[r].failed);
        CHECK(all[r].params.data == again[r].params.data);
        CHECK(all[r].seed == 100ull + 1000ull * r);
    }
    CHECK(all[0].params.data != all[1].params.data);
}
