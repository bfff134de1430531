#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "ids/tape.hpp"

namespace ids {

/// Named trainable tensor. Gradients land here after a training step
/// copies them back from the tape.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;

    Param() = default;
    Param(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {
        grad = Tensor::zeros(value.shape);
    }
    void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

/// Seeded initializer. Identical seed + shapes give identical parameters.
/// Conv/dense weights are fan-in-scaled uniform; GRU recurrent weights are
/// scaled by the hidden width; BN gamma/beta start at ones/zeros.
class InitPolicy {
public:
    explicit InitPolicy(std::uint64_t seed) : rng_(seed) {}

    /// Derives an independent stream for a sub-component (splitmix64 mix).
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t index);

    Tensor uniform_fan_in(Shape shape, std::size_t fan_in);
    Tensor zeros(Shape shape) { return Tensor::zeros(std::move(shape)); }
    Tensor ones(Shape shape) { return Tensor::full(std::move(shape), 1.0); }

private:
    std::mt19937_64 rng_;
};

struct Conv1dLayer {
    Param kernels;  // [Cout, K, Cin]
    Param bias;     // [Cout]
    Padding padding = Padding::Same;

    Conv1dLayer() = default;
    Conv1dLayer(std::string name, std::size_t out_ch, std::size_t kernel, std::size_t in_ch,
                InitPolicy& init, Padding pad = Padding::Same);

    Tape::Id forward(Tape& tape, Tape::Id input, Tape::Id kid, Tape::Id bid) const {
        return tape.conv1d(input, kid, bid, padding);
    }
};

struct BatchNormLayer {
    Param gamma;  // trainable
    Param beta;   // trainable
    BnStats stats;
    double eps = 1e-5;

    BatchNormLayer() = default;
    BatchNormLayer(std::string name, std::size_t features);
};

struct GruLayer {
    Param Wz, Wr, Wh;  // [H, Cin]
    Param Uz, Ur, Uh;  // [H, H]
    Param bz, br, bh;  // [H]
    std::size_t hidden = 0;

    GruLayer() = default;
    GruLayer(std::string name, std::size_t in_width, std::size_t hidden_units, InitPolicy& init);
};

struct DenseLayer {
    Param weights;  // [Out, In]
    Param bias;     // [Out]

    DenseLayer() = default;
    DenseLayer(std::string name, std::size_t out, std::size_t in, InitPolicy& init);

    /// x is a flat [In] vector; returns [Out].
    Tape::Id forward(Tape& tape, Tape::Id x, Tape::Id wid, Tape::Id bid) const;
};

/// Softmax over a flat [K] vector of logits (inference-side helper; training
/// uses the fused softmax_cross_entropy tape op).
std::vector<double> softmax(const std::vector<double>& logits);

/// Central finite-difference verification of reverse-mode gradients.
/// `build` must be a deterministic function of the parameter values (BN in
/// Frozen/Infer mode, dropout disabled); it receives a fresh tape plus the
/// leaf ids of `params` in order and returns the scalar loss id.
/// Returns max over all parameter elements of
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8), ignoring
/// discrepancies below the rounding resolution of the central difference
/// (~ulp(loss)/eps), which carry no gradient information.
/// `corrupt_analytic`, when set, mutates the analytic gradients before the
/// comparison; it exists as a negative-control hook for the verification
/// tooling itself.
double gradient_check(std::vector<Param*> params,
                      const std::function<Tape::Id(Tape&, const std::vector<Tape::Id>&)>& build,
                      double eps = 1e-5,
                      const std::function<void(std::vector<Tensor>&)>& corrupt_analytic = nullptr);

}  // namespace ids
