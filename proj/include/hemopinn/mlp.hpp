#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hemopinn/errors.hpp"
#include "hemopinn/jet.hpp"
#include "hemopinn/rng.hpp"

namespace hemopinn::neural {

struct MlpSpec {
    int input_dim = 3;
    int hidden_layers = 4;
    int width = 64;
    int output_dim = 2;
    // activation is swish throughout

    void validate() const {
        if (hidden_layers < 1 || width < 1 || input_dim < 1 || output_dim < 1)
            throw Error("MlpSpec: all dimensions must be >= 1");
    }
};

inline long mlp_param_count(const MlpSpec& s) {
    long n = static_cast<long>(s.width) * (s.input_dim + 1);
    n += static_cast<long>(s.hidden_layers - 1) * s.width * (s.width + 1);
    n += static_cast<long>(s.output_dim) * (s.width + 1);
    return n;
}

// Flattened trainable parameters of one or more networks plus any extra
// trainable scalars, addressed through named slices.
struct ParamVector {
    std::vector<double> data;

    struct Slice {
        std::string name;
        std::size_t offset = 0;
        std::size_t size = 0;
    };
    std::vector<Slice> slices;

    std::size_t add_slice(const std::string& name, std::size_t size) {
        const std::size_t off = data.size();
        slices.push_back({name, off, size});
        data.resize(off + size, 0.0);
        return off;
    }

    const Slice& find(const std::string& name) const {
        for (const auto& s : slices)
            if (s.name == name) return s;
        throw Error("ParamVector: unknown slice '" + name + "'");
    }
    bool has(const std::string& name) const {
        for (const auto& s : slices)
            if (s.name == name) return true;
        return false;
    }
    std::span<double> slice(const std::string& name) {
        const auto& s = find(name);
        return {data.data() + s.offset, s.size};
    }
    std::span<const double> slice(const std::string& name) const {
        const auto& s = find(name);
        return {data.data() + s.offset, s.size};
    }
};

// Glorot-uniform weights, zero biases; deterministic per (seed, salt).
inline void init_mlp_params(const MlpSpec& spec, std::span<double> out, std::uint64_t seed,
                            std::uint64_t salt = 0) {
    spec.validate();
    std::size_t pos = 0;
    std::uint64_t counter = 0;
    for (int l = 0; l <= spec.hidden_layers; ++l) {
        const int nin = (l == 0) ? spec.input_dim : spec.width;
        const int nout = (l == spec.hidden_layers) ? spec.output_dim : spec.width;
        const double a = std::sqrt(6.0 / (nin + nout));
        for (int q = 0; q < nin * nout; ++q)
            out[pos++] = rng::uniform(seed, rng::kStreamNetInit + (salt << 8), counter++, -a, a);
        for (int q = 0; q < nout; ++q) out[pos++] = 0.0;
    }
}

// Per-point evaluation workspace holding the activations the reverse pass
// needs. Reused across points to avoid allocation churn.
template <class J>
struct MlpWorkspace {
    std::vector<J> in;
    std::vector<std::vector<J>> pre;       // pre-activations per hidden layer
    std::vector<std::vector<J>> act;       // post-activations per hidden layer
    std::vector<std::vector<double>> sig;  // sigmoid values, reused by the reverse pass
    std::vector<J> out;
    std::vector<J> bar_cur, bar_prev;

    void resize(const MlpSpec& s) {
        if (static_cast<int>(in.size()) == s.input_dim &&
            static_cast<int>(pre.size()) == s.hidden_layers && !pre.empty() &&
            static_cast<int>(pre[0].size()) == s.width &&
            static_cast<int>(out.size()) == s.output_dim)
            return;
        in.resize(s.input_dim);
        pre.assign(s.hidden_layers, std::vector<J>(s.width));
        act.assign(s.hidden_layers, std::vector<J>(s.width));
        sig.assign(s.hidden_layers, std::vector<double>(s.width));
        out.resize(s.output_dim);
        bar_cur.resize(std::max(s.width, s.output_dim));
        bar_prev.resize(std::max(s.width, s.input_dim));
    }
};

namespace detail {

template <class J>
inline void linear_layer(std::span<const double> P, std::size_t& pos, const J* in, int nin,
                         J* out, int nout) {
    constexpr int NC = J::N;
    const double* W = P.data() + pos;
    const double* b = W + static_cast<std::size_t>(nin) * nout;
    for (int i = 0; i < nout; ++i) {
        // accumulate in a local block the compiler can keep in registers
        std::array<double, NC> acc{};
        acc[0] = b[i];
        const double* wrow = W + static_cast<std::size_t>(i) * nin;
        for (int j = 0; j < nin; ++j) {
            const double w = wrow[j];
            const double* aj = in[j].c.data();
            for (int q = 0; q < NC; ++q) acc[q] += w * aj[q];
        }
        for (int q = 0; q < NC; ++q) out[i].c[q] = acc[q];
    }
    pos += static_cast<std::size_t>(nin) * nout + nout;
}

// reverse of linear_layer: accumulates weight/bias gradients and the
// adjoint of the layer input
template <class J>
inline void linear_layer_adjoint(std::span<const double> P, std::span<double> G, std::size_t pos,
                                 const J* in, int nin, const J* bar_out, int nout, J* bar_in) {
    constexpr int NC = J::N;
    const double* W = P.data() + pos;
    double* gW = G.data() + pos;
    double* gb = gW + static_cast<std::size_t>(nin) * nout;
    // pass 1: bias and weight gradients (fixed-order four-lane reductions)
    for (int i = 0; i < nout; ++i) {
        const double* zb = bar_out[i].c.data();
        gb[i] += zb[0];
        double* grow = gW + static_cast<std::size_t>(i) * nin;
        for (int j = 0; j < nin; ++j) {
            const double* aj = in[j].c.data();
            double d0 = 0.0, d1 = 0.0, d2 = 0.0, d3 = 0.0;
            int q = 0;
            for (; q + 4 <= NC; q += 4) {
                d0 += zb[q] * aj[q];
                d1 += zb[q + 1] * aj[q + 1];
                d2 += zb[q + 2] * aj[q + 2];
                d3 += zb[q + 3] * aj[q + 3];
            }
            for (; q < NC; ++q) d0 += zb[q] * aj[q];
            grow[j] += (d0 + d1) + (d2 + d3);
        }
    }
    // pass 2: input adjoints accumulated per column in registers
    for (int j = 0; j < nin; ++j) {
        std::array<double, NC> acc{};
        for (int i = 0; i < nout; ++i) {
            const double w = W[static_cast<std::size_t>(i) * nin + j];
            const double* zb = bar_out[i].c.data();
            for (int q = 0; q < NC; ++q) acc[q] += w * zb[q];
        }
        for (int q = 0; q < NC; ++q) bar_in[j].c[q] = acc[q];
    }
}

} // namespace detail

// Forward pass in jet arithmetic; ws.out carries the exact input-derivatives
// of every network output up to the jet degree.
template <class J>
inline void mlp_forward(const MlpSpec& spec, std::span<const double> P, MlpWorkspace<J>& ws) {
    std::size_t pos = 0;
    const J* cur = ws.in.data();
    int nin = spec.input_dim;
    for (int l = 0; l < spec.hidden_layers; ++l) {
        detail::linear_layer(P, pos, cur, nin, ws.pre[l].data(), spec.width);
        for (int i = 0; i < spec.width; ++i) {
            const double z = ws.pre[l][i].c[0];
            const double s = 1.0 / (1.0 + std::exp(-z));
            ws.sig[l][i] = s;
            double f[5];
            swish_derivs_from_s(z, s, f, J::degree);
            ws.act[l][i] = jet_compose<J::vars, J::degree>(ws.pre[l][i], f);
        }
        cur = ws.act[l].data();
        nin = spec.width;
    }
    detail::linear_layer(P, pos, cur, nin, ws.out.data(), spec.output_dim);
}

// Reverse pass: propagates output-jet adjoints back through the recorded
// activations, accumulating parameter gradients into G (same layout as P).
template <class J>
inline void mlp_backward(const MlpSpec& spec, std::span<const double> P, std::span<double> G,
                         MlpWorkspace<J>& ws, const J* bar_out) {
    // parameter offsets of each layer (hidden_layers is small, stack array)
    std::size_t offs[64];
    std::size_t pos = 0;
    for (int l = 0; l <= spec.hidden_layers; ++l) {
        const int nin = (l == 0) ? spec.input_dim : spec.width;
        const int nout = (l == spec.hidden_layers) ? spec.output_dim : spec.width;
        offs[l] = pos;
        pos += static_cast<std::size_t>(nin) * nout + nout;
    }

    // output layer
    {
        const int l = spec.hidden_layers;
        const J* in = (l == 0) ? ws.in.data() : ws.act[l - 1].data();
        const int nin = (l == 0) ? spec.input_dim : spec.width;
        detail::linear_layer_adjoint(P, G, offs[l], in, nin, bar_out, spec.output_dim,
                                     ws.bar_prev.data());
    }
    for (int l = spec.hidden_layers - 1; l >= 0; --l) {
        // through the activation: bar_z = corr(bar_a, jet(swish'(z))), with
        // the sigmoid values cached by the forward pass
        for (int i = 0; i < spec.width; ++i) {
            double f[6];
            swish_derivs_from_s(ws.pre[l][i].c[0], ws.sig[l][i], f, J::degree + 1);
            const J g = jet_compose<J::vars, J::degree>(ws.pre[l][i], f + 1);
            J& bz = ws.bar_cur[i];
            for (int q = 0; q < J::N; ++q) bz.c[q] = 0.0;
            jet_mul_adjoint<J::vars, J::degree>(ws.bar_prev[i].c.data(), g.c.data(), bz.c.data());
        }
        const J* in = (l == 0) ? ws.in.data() : ws.act[l - 1].data();
        const int nin = (l == 0) ? spec.input_dim : spec.width;
        detail::linear_layer_adjoint(P, G, offs[l], in, nin, ws.bar_cur.data(), spec.width,
                                     ws.bar_prev.data());
    }
}

// Evaluates a scalar loss summed over a batch and its exact gradient with
// respect to every trainable entry. The member closure returns one batch
// member's loss contribution and accumulates its gradient into the span.
template <class F>
inline std::pair<double, std::vector<double>> loss_gradient(const ParamVector& params,
                                                            int batch_size, F&& member) {
    std::vector<double> g(params.data.size(), 0.0);
    double total = 0.0;
    for (int b = 0; b < batch_size; ++b) total += member(b, std::span<double>(g));
    if (!std::isfinite(total)) throw NonFiniteLoss("loss diverged (non-finite value)");
    return {total, std::move(g)};
}

} // namespace hemopinn::neural
