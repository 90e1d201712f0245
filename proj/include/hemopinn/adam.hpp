#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "hemopinn/errors.hpp"
#include "hemopinn/mlp.hpp"

namespace hemopinn::neural {

// Multiplicative step decay applied by the trainer: lr_scale = factor^(epoch / every).
struct StepDecay {
    int every = 0; // epochs per drop; 0 disables the schedule
    double factor = 0.5;

    double scale_at(int epoch) const {
        if (every <= 0) return 1.0;
        return std::pow(factor, epoch / every);
    }
};

struct AdamState {
    std::vector<double> m, v;     // first/second moments
    long step = 0;
    std::vector<double> base_lr;  // per entry, filled from the named slices
    double lr_scale = 1.0;        // schedule factor for the current epoch
    StepDecay schedule;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    static AdamState make(const ParamVector& params,
                          const std::vector<std::pair<std::string, double>>& slice_lr,
                          StepDecay schedule = {}) {
        AdamState s;
        s.m.assign(params.data.size(), 0.0);
        s.v.assign(params.data.size(), 0.0);
        s.base_lr.assign(params.data.size(), 0.0);
        s.schedule = schedule;
        for (const auto& [name, lr] : slice_lr) {
            const auto& sl = params.find(name);
            for (std::size_t q = 0; q < sl.size; ++q) s.base_lr[sl.offset + q] = lr;
        }
        return s;
    }
};

// Standard ADAM update with bias correction and per-slice learning rates.
inline void adam_step(AdamState& s, ParamVector& params, std::span<const double> grad) {
    if (grad.size() != params.data.size() || s.m.size() != grad.size())
        throw Error("adam_step: shape mismatch");
    s.step += 1;
    const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
    const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
    for (std::size_t q = 0; q < grad.size(); ++q) {
        s.m[q] = s.beta1 * s.m[q] + (1.0 - s.beta1) * grad[q];
        s.v[q] = s.beta2 * s.v[q] + (1.0 - s.beta2) * grad[q] * grad[q];
        const double mh = s.m[q] / bc1;
        const double vh = s.v[q] / bc2;
        params.data[q] -= s.lr_scale * s.base_lr[q] * mh / (std::sqrt(vh) + s.eps);
    }
}

} // namespace hemopinn::neural
