#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>

#include "ids/tensor.hpp"

namespace ids {

enum class Padding { Same, Valid };

/// Batch-norm execution mode. Train normalizes with batch statistics and
/// updates the running stats; Frozen normalizes with batch statistics but
/// leaves the running stats untouched (used by the gradient checker);
/// Infer normalizes with the running stats.
enum class BnMode { Train, Frozen, Infer };

enum class RunMode { Train, Infer };

/// Running mean/variance owned by a batch-norm layer, updated by EMA.
struct BnStats {
    Tensor mean;
    Tensor var;
    double momentum = 0.9;

    static BnStats fresh(std::size_t features, double momentum = 0.9) {
        BnStats s;
        s.mean = Tensor::zeros({features});
        s.var = Tensor::full({features}, 1.0);
        s.momentum = momentum;
        return s;
    }
};

/// Reverse-mode differentiation tape. Records one node per operation in
/// topological order; backward() sweeps the nodes once in reverse,
/// accumulating gradients additively at fan-out points. Gradients are never
/// zeroed implicitly, so a second backward() doubles them.
class Tape {
public:
    using Id = std::size_t;

    Id leaf(Tensor value, bool requires_grad);

    const Tensor& value(Id id) const { return slot(id).value; }
    const Tensor& grad(Id id) const { return slot(id).grad; }
    bool requires_grad(Id id) const { return slot(id).req; }
    std::size_t num_nodes() const { return nodes_.size(); }

    // Elementwise, same shape.
    Id add(Id a, Id b);
    Id mul(Id a, Id b);
    // y = alpha * x + beta, elementwise with scalar constants.
    Id affine(Id a, double alpha, double beta);
    Id sigmoid(Id a);
    Id tanh_(Id a);

    Id matmul(Id a, Id b);  // [m,k] x [k,n] -> [m,n]
    Id reshape(Id a, Shape target);
    Id concat_cols(std::span<const Id> parts);  // [L,Ci] -> [L, sum Ci]
    Id row(Id a, std::size_t t);                // [L,C] -> [C]
    Id stack_rows(std::span<const Id> rows);    // L x [C] -> [L,C]

    Id conv1d(Id input, Id kernels, Id bias, Padding padding);
    Id batchnorm(Id x, Id gamma, Id beta, BnStats* stats, BnMode mode, double eps = 1e-5);
    Id global_average_pool(Id x);  // [L,C] -> [C]
    Id dropout(Id x, double rate, RunMode mode, std::mt19937_64& rng);
    // logits [N,K] vs one-hot targets; mean negative log-likelihood.
    Id softmax_cross_entropy(Id logits, const Tensor& onehot);

    /// Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse once.
    void backward(Id loss);

private:
    struct Slot {
        Tensor value;
        Tensor grad;
        bool req;
    };
    struct Node {
        std::function<void(Tape&)> back;
    };

    Slot& slot(Id id) {
        if (id >= slots_.size()) throw std::invalid_argument("tensor id not on this tape");
        return slots_[id];
    }
    const Slot& slot(Id id) const {
        if (id >= slots_.size()) throw std::invalid_argument("tensor id not on this tape");
        return slots_[id];
    }
    Id alloc(Tensor value, bool req);
    std::vector<double>& g(Id id) { return slots_[id].grad.data; }

    std::vector<Slot> slots_;
    std::vector<Node> nodes_;
};

struct GruParamIds {
    Tape::Id Wz, Wr, Wh;  // [H, Cin]
    Tape::Id Uz, Ur, Uh;  // [H, H]
    Tape::Id bz, br, bh;  // [H]
};

/// Full-sequence GRU: per step z = sig(Wz x + Uz h + bz),
/// r = sig(Wr x + Ur h + br), hc = tanh(Wh x + Uh (r*h) + bh),
/// h' = (1-z)*h + z*hc. Returns the [L,H] hidden sequence.
/// Built from tape primitives, so backward comes from composition.
Tape::Id gru_forward(Tape& tape, Tape::Id sequence, const GruParamIds& p, Tape::Id h0);

}  // namespace ids
