#pragma once

#include <optional>
#include <unordered_map>

#include "ids/layers.hpp"

namespace ids {

struct ModelConfig {
    std::size_t feature_count = 0;  // F; conv filters and GRU units are pinned to this
    std::size_t num_classes = 0;    // K
    std::size_t kernel_size = 3;
    std::size_t pairs = 5;         // P wide pairs, i.e. 2*P residual units
    std::size_t bridge_width = 0;  // B; 0 means "use feature_count"
    double dropout_rate = 0.2;
    std::uint64_t seed = 0;

    std::size_t bridge() const { return bridge_width == 0 ? feature_count : bridge_width; }
    void validate() const;
};

/// One residual unit: main path BN -> Conv1D(F filters, same padding) ->
/// BN -> GRU(F units, full sequence) -> RD, plus an additive shortcut.
/// The shortcut is the identity when the input already has F channels and
/// a linear 1x1 convolution projection otherwise. Output is [L,F] for any
/// input [L,Cin].
struct ResidualUnit {
    std::size_t in_channels = 0;
    std::size_t filters = 0;
    BatchNormLayer bn1;
    Conv1dLayer conv;
    BatchNormLayer bn2;
    GruLayer gru;
    std::optional<Conv1dLayer> shortcut;

    ResidualUnit() = default;
    ResidualUnit(std::string name, const ModelConfig& config, std::size_t input_channels,
                 std::uint64_t seed);

    void collect(std::vector<Param*>& out);
    void collect_bn(std::vector<std::pair<std::string, BnStats*>>& out, const std::string& prefix);
};

/// Two residual units applied to the same input, concatenated on the
/// channel axis, followed by a linear bridge: an activation-free 1x1
/// convolution projecting 2F -> B channels.
struct WidePair {
    ResidualUnit unit_a;
    ResidualUnit unit_b;
    Conv1dLayer bridge;  // [B, 1, 2F]

    WidePair() = default;
    WidePair(std::string name, const ModelConfig& config, std::size_t input_channels,
             std::uint64_t seed);

    void collect(std::vector<Param*>& out);
    void collect_bn(std::vector<std::pair<std::string, BnStats*>>& out, const std::string& prefix);
};

/// Leaf ids for every parameter of a network on one tape, in params() order.
struct Binding {
    std::vector<Tape::Id> ids;
    std::unordered_map<const Param*, Tape::Id> by_param;

    Tape::Id id(const Param& p) const { return by_param.at(&p); }
};

/// The full detection network: input lift (F)->(F,1), P wide pairs where pair k
/// consumes the raw sequence concatenated with every earlier pair's bridge
/// output, then a concat of all bridge outputs -> global average pooling ->
/// dense(K) head producing logits.
class Network {
public:
    explicit Network(ModelConfig config);

    const ModelConfig& config() const { return config_; }

    std::vector<Param*> params();                                   // deterministic order
    std::vector<std::pair<std::string, BnStats*>> bn_stats();       // matching order

    /// Binds every parameter as a requires_grad leaf on the tape.
    Binding bind(Tape& tape);

    /// Builds the per-sample graph. `x` is a flat [F] leaf on the tape.
    Tape::Id forward_sample(Tape& tape, const Binding& b, Tape::Id x, BnMode bn_mode,
                            RunMode mode, std::mt19937_64& rng);

    /// Convenience batch forward outside any training loop: returns logits
    /// [N,K]. Deterministic in infer mode.
    Tensor forward_batch(const Tensor& batch, BnMode bn_mode = BnMode::Infer,
                         RunMode mode = RunMode::Infer, std::mt19937_64* rng = nullptr);

    /// Channel count entering pair k (0-based): 1 + k*B.
    std::size_t pair_input_channels(std::size_t k) const { return 1 + k * config_.bridge(); }

    std::vector<WidePair> pairs;
    DenseLayer head;

private:
    ModelConfig config_;
};

/// Builds a standalone residual unit (exposed for shape/gradient tests).
ResidualUnit build_residual_unit(const ModelConfig& config, std::size_t in_channels);

/// Runs one residual unit on an [L,Cin] tape tensor; `b` must bind every
/// parameter of `unit`. Exposed for shape/gradient tests.
Tape::Id residual_unit_forward(Tape& tape, ResidualUnit& unit, const Binding& b, Tape::Id x,
                               BnMode bn_mode);

}  // namespace ids
