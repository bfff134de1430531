#include "ids/network.hpp"

namespace ids {

void ModelConfig::validate() const {
    if (feature_count == 0) throw std::invalid_argument("ModelConfig: feature_count must be positive");
    if (num_classes < 2) throw std::invalid_argument("ModelConfig: num_classes must be >= 2");
    if (kernel_size == 0) throw std::invalid_argument("ModelConfig: kernel_size must be positive");
    if (pairs == 0) throw std::invalid_argument("ModelConfig: pairs must be >= 1");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
        throw std::invalid_argument("ModelConfig: dropout_rate must be in [0,1)");
}

ResidualUnit::ResidualUnit(std::string name, const ModelConfig& config, std::size_t input_channels,
                           std::uint64_t seed)
    : in_channels(input_channels), filters(config.feature_count) {
    if (in_channels == 0) throw std::invalid_argument("ResidualUnit: in_channels must be >= 1");
    config.validate();
    InitPolicy init(seed);
    bn1 = BatchNormLayer(name + ".bn1", in_channels);
    conv = Conv1dLayer(name + ".conv", filters, config.kernel_size, in_channels, init, Padding::Same);
    bn2 = BatchNormLayer(name + ".bn2", filters);
    gru = GruLayer(name + ".gru", filters, filters, init);
    if (in_channels != filters)
        shortcut = Conv1dLayer(name + ".shortcut", filters, 1, in_channels, init, Padding::Same);
}

void ResidualUnit::collect(std::vector<Param*>& out) {
    out.push_back(&bn1.gamma);
    out.push_back(&bn1.beta);
    out.push_back(&conv.kernels);
    out.push_back(&conv.bias);
    out.push_back(&bn2.gamma);
    out.push_back(&bn2.beta);
    for (Param* p : {&gru.Wz, &gru.Wr, &gru.Wh, &gru.Uz, &gru.Ur, &gru.Uh, &gru.bz, &gru.br, &gru.bh})
        out.push_back(p);
    if (shortcut) {
        out.push_back(&shortcut->kernels);
        out.push_back(&shortcut->bias);
    }
}

void ResidualUnit::collect_bn(std::vector<std::pair<std::string, BnStats*>>& out,
                              const std::string& prefix) {
    out.emplace_back(prefix + ".bn1", &bn1.stats);
    out.emplace_back(prefix + ".bn2", &bn2.stats);
}

WidePair::WidePair(std::string name, const ModelConfig& config, std::size_t input_channels,
                   std::uint64_t seed) {
    unit_a = ResidualUnit(name + ".a", config, input_channels, InitPolicy::derive(seed, 0));
    unit_b = ResidualUnit(name + ".b", config, input_channels, InitPolicy::derive(seed, 1));
    InitPolicy init(InitPolicy::derive(seed, 2));
    bridge = Conv1dLayer(name + ".bridge", config.bridge(), 1, 2 * config.feature_count, init,
                         Padding::Same);
}

void WidePair::collect(std::vector<Param*>& out) {
    unit_a.collect(out);
    unit_b.collect(out);
    out.push_back(&bridge.kernels);
    out.push_back(&bridge.bias);
}

void WidePair::collect_bn(std::vector<std::pair<std::string, BnStats*>>& out,
                          const std::string& prefix) {
    unit_a.collect_bn(out, prefix + ".a");
    unit_b.collect_bn(out, prefix + ".b");
}

Network::Network(ModelConfig config) : config_(config) {
    config_.validate();
    pairs.reserve(config_.pairs);
    for (std::size_t k = 0; k < config_.pairs; ++k) {
        pairs.emplace_back("p" + std::to_string(k), config_, pair_input_channels(k),
                           InitPolicy::derive(config_.seed, 1000 + k));
    }
    InitPolicy head_init(InitPolicy::derive(config_.seed, 9999));
    head = DenseLayer("head", config_.num_classes, config_.pairs * config_.bridge(), head_init);
}

std::vector<Param*> Network::params() {
    std::vector<Param*> out;
    for (auto& p : pairs) p.collect(out);
    out.push_back(&head.weights);
    out.push_back(&head.bias);
    return out;
}

std::vector<std::pair<std::string, BnStats*>> Network::bn_stats() {
    std::vector<std::pair<std::string, BnStats*>> out;
    for (std::size_t k = 0; k < pairs.size(); ++k)
        pairs[k].collect_bn(out, "p" + std::to_string(k));
    return out;
}

Binding Network::bind(Tape& tape) {
    Binding b;
    for (Param* p : params()) {
        Tape::Id id = tape.leaf(p->value, true);
        b.ids.push_back(id);
        b.by_param[p] = id;
    }
    return b;
}

namespace {

Tape::Id unit_forward(Tape& tape, const Binding& b, const ResidualUnit& u, Tape::Id x,
                      BnMode bn_mode, BnStats* s1, BnStats* s2) {
    const std::size_t L = tape.value(x).rows();
    Tape::Id h = tape.batchnorm(x, b.id(u.bn1.gamma), b.id(u.bn1.beta), s1, bn_mode, u.bn1.eps);
    h = tape.conv1d(h, b.id(u.conv.kernels), b.id(u.conv.bias), u.conv.padding);
    h = tape.batchnorm(h, b.id(u.bn2.gamma), b.id(u.bn2.beta), s2, bn_mode, u.bn2.eps);
    Tape::Id h0 = tape.leaf(Tensor::zeros({u.filters}), false);
    GruParamIds gp{b.id(u.gru.Wz), b.id(u.gru.Wr), b.id(u.gru.Wh),
                   b.id(u.gru.Uz), b.id(u.gru.Ur), b.id(u.gru.Uh),
                   b.id(u.gru.bz), b.id(u.gru.br), b.id(u.gru.bh)};
    h = gru_forward(tape, h, gp, h0);
    h = tape.reshape(h, {L, u.filters});  // RD: restore the sequence-by-channel grid
    Tape::Id sc = u.shortcut
                      ? tape.conv1d(x, b.id(u.shortcut->kernels), b.id(u.shortcut->bias), Padding::Same)
                      : x;
    return tape.add(h, sc);
}

}  // namespace

Tape::Id Network::forward_sample(Tape& tape, const Binding& b, Tape::Id x, BnMode bn_mode,
                                 RunMode mode, std::mt19937_64& rng) {
    const std::size_t F = config_.feature_count;
    if (tape.value(x).size() != F)
        throw std::invalid_argument("forward: feature-count mismatch (got " +
                                    std::to_string(tape.value(x).size()) + ", expected " +
                                    std::to_string(F) + ")");
    Tape::Id seq = tape.reshape(x, {F, 1});  // (F) -> (F,1): length F, one channel

    std::vector<Tape::Id> bridge_outs;
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        WidePair& pair = pairs[k];
        std::vector<Tape::Id> ins{seq};
        ins.insert(ins.end(), bridge_outs.begin(), bridge_outs.end());
        Tape::Id in = ins.size() == 1 ? seq : tape.concat_cols(ins);

        Tape::Id a = unit_forward(tape, b, pair.unit_a, in, bn_mode, &pair.unit_a.bn1.stats,
                                  &pair.unit_a.bn2.stats);
        Tape::Id bb = unit_forward(tape, b, pair.unit_b, in, bn_mode, &pair.unit_b.bn1.stats,
                                   &pair.unit_b.bn2.stats);
        a = tape.dropout(a, config_.dropout_rate, mode, rng);
        bb = tape.dropout(bb, config_.dropout_rate, mode, rng);
        std::vector<Tape::Id> halves{a, bb};
        Tape::Id wide = tape.concat_cols(halves);
        Tape::Id bridged = tape.conv1d(wide, b.id(pair.bridge.kernels), b.id(pair.bridge.bias),
                                       Padding::Same);
        try {
            tape.value(bridged).check_finite("pair output");
        } catch (const std::runtime_error&) {
            throw std::runtime_error("forward: non-finite intermediate at pair " + std::to_string(k));
        }
        bridge_outs.push_back(bridged);
    }

    Tape::Id all = bridge_outs.size() == 1 ? bridge_outs[0] : tape.concat_cols(bridge_outs);
    Tape::Id pooled = tape.global_average_pool(all);
    return head.forward(tape, pooled, b.id(head.weights), b.id(head.bias));
}

Tensor Network::forward_batch(const Tensor& batch, BnMode bn_mode, RunMode mode,
                              std::mt19937_64* rng) {
    if (batch.shape.size() != 2 || batch.cols() != config_.feature_count)
        throw std::invalid_argument("forward: batch must be [N," +
                                    std::to_string(config_.feature_count) + "]");
    std::mt19937_64 local(config_.seed);
    std::mt19937_64& r = rng ? *rng : local;
    const std::size_t N = batch.rows(), K = config_.num_classes;
    Tensor logits = Tensor::zeros({N, K});
    for (std::size_t n = 0; n < N; ++n) {
        Tape tape;
        Binding b = bind(tape);
        std::vector<double> row(batch.data.begin() + n * batch.cols(),
                                batch.data.begin() + (n + 1) * batch.cols());
        Tape::Id x = tape.leaf(Tensor::vec(std::move(row)), false);
        Tape::Id out = forward_sample(tape, b, x, bn_mode, mode, r);
        for (std::size_t k = 0; k < K; ++k) logits.at(n, k) = tape.value(out).data[k];
    }
    return logits;
}

ResidualUnit build_residual_unit(const ModelConfig& config, std::size_t in_channels) {
    return ResidualUnit("unit", config, in_channels, InitPolicy::derive(config.seed, 0));
}

Tape::Id residual_unit_forward(Tape& tape, ResidualUnit& unit, const Binding& b, Tape::Id x,
                               BnMode bn_mode) {
    return unit_forward(tape, b, unit, x, bn_mode, &unit.bn1.stats, &unit.bn2.stats);
}

}  // namespace ids
