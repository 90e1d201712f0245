#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "hemopinn/adam.hpp"

using namespace hemopinn;
using namespace hemopinn::neural;

namespace {
ParamVector two_slice_params() {
    ParamVector pv;
    pv.add_slice("net", 4);
    pv.add_slice("wk", 2);
    for (std::size_t q = 0; q < pv.data.size(); ++q) pv.data[q] = 0.1 * (q + 1);
    return pv;
}
} // namespace

TEST_CASE("zero gradient leaves parameters unchanged") {
    auto pv = two_slice_params();
    const auto before = pv.data;
    auto st = AdamState::make(pv, {{"net", 1e-3}, {"wk", 1e-2}});
    std::vector<double> g(pv.data.size(), 0.0);
    adam_step(st, pv, g);
    CHECK(pv.data == before);
}

TEST_CASE("first step follows the bias-corrected closed form") {
    auto pv = two_slice_params();
    const auto before = pv.data;
    auto st = AdamState::make(pv, {{"net", 1e-3}, {"wk", 1e-2}});
    std::vector<double> g = {0.5, -2.0, 1e-12, 3.0, -0.25, 0.75};
    adam_step(st, pv, g);
    for (std::size_t q = 0; q < pv.data.size(); ++q) {
        const double lr = q < 4 ? 1e-3 : 1e-2;
        const double expect = before[q] - lr * g[q] / (std::abs(g[q]) + st.eps);
        CHECK(pv.data[q] == Catch::Approx(expect).margin(1e-15));
    }
}

TEST_CASE("constant gradient: monotone bounded steps") {
    ParamVector pv;
    pv.add_slice("net", 1);
    pv.data[0] = 1.0;
    auto st = AdamState::make(pv, {{"net", 1e-3}});
    std::vector<double> g = {2.0};
    double prev = pv.data[0];
    for (int i = 0; i < 1000; ++i) {
        adam_step(st, pv, g);
        CHECK(pv.data[0] < prev);
        CHECK(prev - pv.data[0] <= 1e-3 * (1.0 + 1e-6));
        prev = pv.data[0];
    }
}

TEST_CASE("learning-rate schedule scales the step") {
    StepDecay sched{100, 0.5};
    CHECK(sched.scale_at(0) == 1.0);
    CHECK(sched.scale_at(99) == 1.0);
    CHECK(sched.scale_at(100) == 0.5);
    CHECK(sched.scale_at(250) == 0.25);

    auto pv = two_slice_params();
    const auto before = pv.data;
    auto st = AdamState::make(pv, {{"net", 1e-3}, {"wk", 1e-2}}, sched);
    st.lr_scale = 0.5;
    std::vector<double> g(pv.data.size(), 1.0);
    adam_step(st, pv, g);
    CHECK(before[0] - pv.data[0] == Catch::Approx(0.5e-3).epsilon(1e-6));
}
