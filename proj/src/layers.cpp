#include "ids/layers.hpp"

#include <cmath>
#include <limits>

namespace ids {

std::uint64_t InitPolicy::derive(std::uint64_t seed, std::uint64_t index) {
    // splitmix64 step over seed + index
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

Tensor InitPolicy::uniform_fan_in(Shape shape, std::size_t fan_in) {
    if (fan_in == 0) throw std::invalid_argument("uniform_fan_in: fan_in must be positive");
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& v : t.data) v = dist(rng_);
    return t;
}

Conv1dLayer::Conv1dLayer(std::string name, std::size_t out_ch, std::size_t kernel, std::size_t in_ch,
                         InitPolicy& init, Padding pad)
    : padding(pad) {
    if (out_ch == 0 || kernel == 0 || in_ch == 0)
        throw std::invalid_argument("Conv1dLayer: zero-sized dimension");
    kernels = Param(name + ".kernels", init.uniform_fan_in({out_ch, kernel, in_ch}, kernel * in_ch));
    bias = Param(name + ".bias", init.zeros({out_ch}));
}

BatchNormLayer::BatchNormLayer(std::string name, std::size_t features) {
    gamma = Param(name + ".gamma", Tensor::full({features}, 1.0));
    beta = Param(name + ".beta", Tensor::zeros({features}));
    stats = BnStats::fresh(features);
}

GruLayer::GruLayer(std::string name, std::size_t in_width, std::size_t hidden_units, InitPolicy& init)
    : hidden(hidden_units) {
    if (in_width == 0 || hidden_units == 0)
        throw std::invalid_argument("GruLayer: zero-sized dimension");
    Wz = Param(name + ".Wz", init.uniform_fan_in({hidden, in_width}, in_width));
    Wr = Param(name + ".Wr", init.uniform_fan_in({hidden, in_width}, in_width));
    Wh = Param(name + ".Wh", init.uniform_fan_in({hidden, in_width}, in_width));
    Uz = Param(name + ".Uz", init.uniform_fan_in({hidden, hidden}, hidden));
    Ur = Param(name + ".Ur", init.uniform_fan_in({hidden, hidden}, hidden));
    Uh = Param(name + ".Uh", init.uniform_fan_in({hidden, hidden}, hidden));
    bz = Param(name + ".bz", init.zeros({hidden}));
    br = Param(name + ".br", init.zeros({hidden}));
    bh = Param(name + ".bh", init.zeros({hidden}));
}

DenseLayer::DenseLayer(std::string name, std::size_t out, std::size_t in, InitPolicy& init) {
    weights = Param(name + ".weights", init.uniform_fan_in({out, in}, in));
    bias = Param(name + ".bias", init.zeros({out}));
}

Tape::Id DenseLayer::forward(Tape& tape, Tape::Id x, Tape::Id wid, Tape::Id bid) const {
    const std::size_t in = tape.value(wid).cols();
    const std::size_t out = tape.value(wid).rows();
    Tape::Id col = tape.reshape(x, {in, 1});
    return tape.add(tape.reshape(tape.matmul(wid, col), {out}), bid);
}

std::vector<double> softmax(const std::vector<double>& logits) {
    double mx = logits.at(0);
    for (double v : logits) mx = std::max(mx, v);
    double z = 0.0;
    std::vector<double> p(logits.size());
    for (std::size_t i = 0; i < p.size(); ++i) z += (p[i] = std::exp(logits[i] - mx));
    for (auto& v : p) v /= z;
    return p;
}

double gradient_check(std::vector<Param*> params,
                      const std::function<Tape::Id(Tape&, const std::vector<Tape::Id>&)>& build,
                      double eps,
                      const std::function<void(std::vector<Tensor>&)>& corrupt_analytic) {
    if (eps <= 0.0) throw std::invalid_argument("gradient_check: eps must be > 0");

    auto run = [&](int perturbed_param, std::size_t elem, double delta, std::vector<Tensor>* grads) {
        Tape tape;
        std::vector<Tape::Id> ids;
        ids.reserve(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            Tensor v = params[i]->value;
            if (static_cast<int>(i) == perturbed_param) v.data[elem] += delta;
            ids.push_back(tape.leaf(std::move(v), true));
        }
        Tape::Id loss = build(tape, ids);
        double lv = tape.value(loss).data.at(0);
        if (grads) {
            tape.backward(loss);
            for (Tape::Id id : ids) grads->push_back(tape.grad(id));
        }
        return lv;
    };

    std::vector<Tensor> analytic;
    double base = run(-1, 0, 0.0, &analytic);
    {
        // determinism guard: a stochastic fragment cannot be checked
        double again = run(-1, 0, 0.0, nullptr);
        if (again != base)
            throw std::invalid_argument("gradient_check: fragment is not deterministic");
    }
    if (corrupt_analytic) corrupt_analytic(analytic);

    // Resolution limit of the central difference itself: each loss evaluation
    // carries O(ulp) rounding, so the quotient cannot resolve differences
    // below ~ulp(loss)/eps. Discrepancies under this floor are measurement
    // noise, not gradient disagreement (e.g. parameters whose true gradient
    // is exactly zero because a following normalization cancels them).
    const double noise_floor =
        16.0 * std::abs(base) * std::numeric_limits<double>::epsilon() / (2.0 * eps);

    double max_rel = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        for (std::size_t e = 0; e < params[i]->value.size(); ++e) {
            double plus = run(static_cast<int>(i), e, eps, nullptr);
            double minus = run(static_cast<int>(i), e, -eps, nullptr);
            double numeric = (plus - minus) / (2.0 * eps);
            double a = analytic[i].data[e];
            if (std::abs(a - numeric) <= noise_floor) continue;
            double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
            max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
        }
    }
    return max_rel;
}

}  // namespace ids
