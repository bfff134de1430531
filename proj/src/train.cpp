#include "ids/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace ids {

void TrainConfig::validate() const {
    if (batch_size == 0) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (learning_rate <= 0.0) throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
}

namespace {

struct AdamState {
    std::vector<std::vector<double>> m, v;
    std::uint64_t t = 0;
};

void apply_update(std::vector<Param*>& params, const TrainConfig& cfg, AdamState& adam) {
    if (cfg.optimizer == Optimizer::Sgd) {
        for (Param* p : params)
            for (std::size_t i = 0; i < p->value.size(); ++i)
                p->value.data[i] -= cfg.learning_rate * p->grad.data[i];
        return;
    }
    ++adam.t;
    const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(adam.t));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(adam.t));
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Param* p = params[pi];
        auto& m = adam.m[pi];
        auto& v = adam.v[pi];
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            double g = p->grad.data[i];
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            double mhat = m[i] / bc1;
            double vhat = v[i] / bc2;
            p->value.data[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
        }
    }
}

}  // namespace

TrainResult train(Network& network, const EncodedDataset& dataset, const TrainConfig& config) {
    config.validate();
    const std::size_t N = dataset.size();
    const std::size_t F = network.config().feature_count;
    const std::size_t K = network.config().num_classes;
    if (dataset.features.cols() != F)
        throw std::invalid_argument("train: dataset width " + std::to_string(dataset.features.cols()) +
                                    " does not match network feature count " + std::to_string(F));
    for (int label : dataset.labels)
        if (label < 0 || static_cast<std::size_t>(label) >= K)
            throw std::invalid_argument("train: label out of range");

    std::vector<Param*> params = network.params();
    AdamState adam;
    adam.m.resize(params.size());
    adam.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        adam.m[i].assign(params[i]->value.size(), 0.0);
        adam.v[i].assign(params[i]->value.size(), 0.0);
    }

    std::mt19937_64 shuffle_rng(config.seed);
    std::mt19937_64 dropout_rng(InitPolicy::derive(config.seed, 1));

    TrainResult result;
    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        if (config.shuffle) std::shuffle(order.begin(), order.end(), shuffle_rng);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < N; start += config.batch_size, ++batches) {
            const std::size_t end = std::min(N, start + config.batch_size);
            Tape tape;
            Binding b = network.bind(tape);
            std::vector<Tape::Id> logit_rows;
            Tensor onehot = Tensor::zeros({end - start, K});
            for (std::size_t i = start; i < end; ++i) {
                const std::size_t n = order[i];
                std::vector<double> row(dataset.features.data.begin() + n * F,
                                        dataset.features.data.begin() + (n + 1) * F);
                Tape::Id x = tape.leaf(Tensor::vec(std::move(row)), false);
                logit_rows.push_back(
                    network.forward_sample(tape, b, x, BnMode::Train, RunMode::Train, dropout_rng));
            }
            std::vector<Tape::Id> rows2d;
            rows2d.reserve(logit_rows.size());
            for (std::size_t i = 0; i < logit_rows.size(); ++i) {
                rows2d.push_back(logit_rows[i]);
                onehot.at(i, static_cast<std::size_t>(dataset.labels[order[start + i]])) = 1.0;
            }
            Tape::Id logits = tape.stack_rows(rows2d);
            Tape::Id loss = tape.softmax_cross_entropy(logits, onehot);
            const double lv = tape.value(loss).data[0];
            if (!std::isfinite(lv))
                throw std::runtime_error("train: NaN loss at epoch " + std::to_string(epoch) +
                                         ", batch " + std::to_string(batches));
            tape.backward(loss);
            for (std::size_t pi = 0; pi < params.size(); ++pi) {
                params[pi]->grad = tape.grad(b.ids[pi]);
            }
            apply_update(params, config, adam);
            epoch_loss += lv;
        }
        result.epoch_loss.push_back(batches ? epoch_loss / static_cast<double>(batches) : 0.0);
    }
    return result;
}

std::vector<int> predict(Network& network, const Tensor& features) {
    Tensor logits = network.forward_batch(features, BnMode::Infer, RunMode::Infer);
    const std::size_t N = logits.rows(), K = logits.cols();
    std::vector<int> out(N);
    for (std::size_t n = 0; n < N; ++n) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < K; ++k)
            if (logits.at(n, k) > logits.at(n, best)) best = k;  // ties keep the lowest index
        out[n] = static_cast<int>(best);
    }
    return out;
}

MetricsReport evaluate(Network& network, const EncodedDataset& dataset,
                       const FeatureSchema& schema) {
    auto t0 = std::chrono::steady_clock::now();
    std::vector<int> pred = predict(network, dataset.features);
    std::uint64_t correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == dataset.labels[i]) ++correct;
    const int normal = schema.normal_id ? static_cast<int>(*schema.normal_id) : -1;
    ConfusionCounts counts = confusion_binary_classes(pred, dataset.labels, normal);
    MetricsReport report = compute_metrics(counts, correct, pred.size());
    report.runtime_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

}  // namespace ids
