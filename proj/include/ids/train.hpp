#pragma once

#include "ids/metrics.hpp"
#include "ids/network.hpp"
#include "ids/pipeline.hpp"

namespace ids {

enum class Optimizer { Sgd, Adam };

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 128;
    double learning_rate = 1e-3;
    Optimizer optimizer = Optimizer::Adam;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    bool shuffle = true;

    void validate() const;
};

struct TrainResult {
    std::vector<double> epoch_loss;  // mean batch loss per epoch
};

/// Mini-batch training with categorical cross-entropy. Deterministic for a
/// fixed seed and dataset. Aborts with the epoch/batch index on NaN loss.
TrainResult train(Network& network, const EncodedDataset& dataset, const TrainConfig& config);

/// Argmax of softmax per row, ties broken toward the lowest class index.
std::vector<int> predict(Network& network, const Tensor& features);

/// Runs prediction and derives the full metric suite against the labels.
MetricsReport evaluate(Network& network, const EncodedDataset& dataset,
                       const FeatureSchema& schema);

}  // namespace ids
