#include "ids/tape.hpp"

#include <algorithm>
#include <cmath>

namespace ids {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

Tape::Id Tape::alloc(Tensor value, bool req) {
    Tensor grad = Tensor::zeros(value.shape);
    slots_.push_back(Slot{std::move(value), std::move(grad), req});
    return slots_.size() - 1;
}

Tape::Id Tape::leaf(Tensor value, bool requires_grad) {
    value.check_finite("leaf tensor");
    return alloc(std::move(value), requires_grad);
}

Tape::Id Tape::add(Id a, Id b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    require(va.same_shape(vb), "add: shape mismatch " + shape_str(va.shape) + " vs " + shape_str(vb.shape));
    Tensor out = va;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += vb.data[i];
    Id o = alloc(std::move(out), slot(a).req || slot(b).req);
    nodes_.push_back({[a, b, o](Tape& t) {
        const auto& go = t.g(o);
        auto& ga = t.g(a);
        auto& gb = t.g(b);
        for (std::size_t i = 0; i < go.size(); ++i) {
            ga[i] += go[i];
            gb[i] += go[i];
        }
    }});
    return o;
}

Tape::Id Tape::mul(Id a, Id b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    require(va.same_shape(vb), "mul: shape mismatch");
    Tensor out = va;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= vb.data[i];
    Id o = alloc(std::move(out), slot(a).req || slot(b).req);
    nodes_.push_back({[a, b, o](Tape& t) {
        const auto& go = t.g(o);
        const auto& va = t.value(a).data;
        const auto& vb = t.value(b).data;
        auto& ga = t.g(a);
        auto& gb = t.g(b);
        for (std::size_t i = 0; i < go.size(); ++i) {
            ga[i] += go[i] * vb[i];
            gb[i] += go[i] * va[i];
        }
    }});
    return o;
}

Tape::Id Tape::affine(Id a, double alpha, double beta) {
    Tensor out = value(a);
    for (auto& v : out.data) v = alpha * v + beta;
    Id o = alloc(std::move(out), slot(a).req);
    nodes_.push_back({[a, o, alpha](Tape& t) {
        const auto& go = t.g(o);
        auto& ga = t.g(a);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += alpha * go[i];
    }});
    return o;
}

Tape::Id Tape::sigmoid(Id a) {
    Tensor out = value(a);
    for (auto& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
    Id o = alloc(std::move(out), slot(a).req);
    nodes_.push_back({[a, o](Tape& t) {
        const auto& go = t.g(o);
        const auto& vo = t.value(o).data;
        auto& ga = t.g(a);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * vo[i] * (1.0 - vo[i]);
    }});
    return o;
}

Tape::Id Tape::tanh_(Id a) {
    Tensor out = value(a);
    for (auto& v : out.data) v = std::tanh(v);
    Id o = alloc(std::move(out), slot(a).req);
    nodes_.push_back({[a, o](Tape& t) {
        const auto& go = t.g(o);
        const auto& vo = t.value(o).data;
        auto& ga = t.g(a);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * (1.0 - vo[i] * vo[i]);
    }});
    return o;
}

Tape::Id Tape::matmul(Id a, Id b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    require(va.shape.size() == 2 && vb.shape.size() == 2, "matmul: operands must be 2-D");
    require(va.cols() == vb.rows(), "matmul: inner dimension mismatch");
    const std::size_t m = va.rows(), k = va.cols(), n = vb.cols();
    Tensor out = Tensor::zeros({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            double av = va.at(i, p);
            for (std::size_t j = 0; j < n; ++j) out.at(i, j) += av * vb.at(p, j);
        }
    Id o = alloc(std::move(out), slot(a).req || slot(b).req);
    nodes_.push_back({[a, b, o, m, k, n](Tape& t) {
        const Tensor& go = t.slot(o).grad;
        const Tensor& va = t.value(a);
        const Tensor& vb = t.value(b);
        Tensor& ga = t.slot(a).grad;
        Tensor& gb = t.slot(b).grad;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                double gv = go.at(i, j);
                if (gv == 0.0) continue;
                for (std::size_t p = 0; p < k; ++p) {
                    ga.at(i, p) += gv * vb.at(p, j);
                    gb.at(p, j) += gv * va.at(i, p);
                }
            }
    }});
    return o;
}

Tape::Id Tape::reshape(Id a, Shape target) {
    const Tensor& va = value(a);
    require(shape_numel(target) == va.size(),
            "reshape: element count mismatch " + shape_str(va.shape) + " -> " + shape_str(target));
    Tensor out{target, va.data};
    Id o = alloc(std::move(out), slot(a).req);
    nodes_.push_back({[a, o](Tape& t) {
        const auto& go = t.g(o);
        auto& ga = t.g(a);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    }});
    return o;
}

Tape::Id Tape::concat_cols(std::span<const Id> parts) {
    require(!parts.empty(), "concat: no inputs");
    const std::size_t L = value(parts[0]).rows();
    std::size_t total = 0;
    bool req = false;
    for (Id p : parts) {
        const Tensor& v = value(p);
        require(v.shape.size() == 2, "concat: operands must be 2-D");
        require(v.rows() == L, "concat: row count mismatch");
        total += v.cols();
        req = req || slot(p).req;
    }
    Tensor out = Tensor::zeros({L, total});
    std::size_t off = 0;
    for (Id p : parts) {
        const Tensor& v = value(p);
        for (std::size_t r = 0; r < L; ++r)
            for (std::size_t c = 0; c < v.cols(); ++c) out.at(r, off + c) = v.at(r, c);
        off += v.cols();
    }
    std::vector<Id> ps(parts.begin(), parts.end());
    Id o = alloc(std::move(out), req);
    nodes_.push_back({[ps, o, L](Tape& t) {
        const Tensor& go = t.slot(o).grad;
        std::size_t off = 0;
        for (Id p : ps) {
            Tensor& gp = t.slot(p).grad;
            const std::size_t c = t.value(p).cols();
            for (std::size_t r = 0; r < L; ++r)
                for (std::size_t j = 0; j < c; ++j) gp.at(r, j) += go.at(r, off + j);
            off += c;
        }
    }});
    return o;
}

Tape::Id Tape::row(Id a, std::size_t t) {
    const Tensor& va = value(a);
    require(va.shape.size() == 2, "row: operand must be 2-D");
    require(t < va.rows(), "row: index out of range");
    const std::size_t C = va.cols();
    Tensor out = Tensor::zeros({C});
    for (std::size_t c = 0; c < C; ++c) out.data[c] = va.at(t, c);
    Id o = alloc(std::move(out), slot(a).req);
    nodes_.push_back({[a, o, t, C](Tape& tp) {
        const auto& go = tp.g(o);
        Tensor& ga = tp.slot(a).grad;
        for (std::size_t c = 0; c < C; ++c) ga.at(t, c) += go[c];
    }});
    return o;
}

Tape::Id Tape::stack_rows(std::span<const Id> rows) {
    require(!rows.empty(), "stack_rows: no inputs");
    const std::size_t C = value(rows[0]).size();
    bool req = false;
    for (Id r : rows) {
        require(value(r).shape.size() == 1 && value(r).size() == C, "stack_rows: row shape mismatch");
        req = req || slot(r).req;
    }
    const std::size_t L = rows.size();
    Tensor out = Tensor::zeros({L, C});
    for (std::size_t r = 0; r < L; ++r)
        for (std::size_t c = 0; c < C; ++c) out.at(r, c) = value(rows[r]).data[c];
    std::vector<Id> rs(rows.begin(), rows.end());
    Id o = alloc(std::move(out), req);
    nodes_.push_back({[rs, o, C](Tape& t) {
        const Tensor& go = t.slot(o).grad;
        for (std::size_t r = 0; r < rs.size(); ++r) {
            auto& gr = t.g(rs[r]);
            for (std::size_t c = 0; c < C; ++c) gr[c] += go.at(r, c);
        }
    }});
    return o;
}

Tape::Id Tape::conv1d(Id input, Id kernels, Id bias, Padding padding) {
    const Tensor& vin = value(input);
    const Tensor& vk = value(kernels);
    const Tensor& vb = value(bias);
    require(vin.shape.size() == 2, "conv1d: input must be [L,Cin]");
    require(vk.shape.size() == 3, "conv1d: kernels must be [Cout,K,Cin]");
    const std::size_t L = vin.shape[0], Cin = vin.shape[1];
    const std::size_t Cout = vk.shape[0], K = vk.shape[1];
    require(K >= 1, "conv1d: kernel size must be >= 1");
    require(L >= 1, "conv1d: empty input");
    require(vk.shape[2] == Cin, "conv1d: channel mismatch (kernel Cin " + std::to_string(vk.shape[2]) +
                                    " vs input Cin " + std::to_string(Cin) + ")");
    require(vb.shape.size() == 1 && vb.shape[0] == Cout, "conv1d: bias must be [Cout]");
    vin.check_finite("conv1d input");

    // Same padding is left-biased for even K: pad_left = K/2, total K-1.
    std::size_t Lout, pad_left;
    if (padding == Padding::Same) {
        Lout = L;
        pad_left = K / 2;
    } else {
        require(K <= L, "conv1d: valid padding requires K <= L");
        Lout = L - K + 1;
        pad_left = 0;
    }

    auto kidx = [K, Cin](std::size_t o, std::size_t k, std::size_t c) { return (o * K + k) * Cin + c; };

    Tensor out = Tensor::zeros({Lout, Cout});
    for (std::size_t t = 0; t < Lout; ++t)
        for (std::size_t o = 0; o < Cout; ++o) {
            double acc = vb.data[o];
            for (std::size_t k = 0; k < K; ++k) {
                std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t + k) - static_cast<std::ptrdiff_t>(pad_left);
                if (s < 0 || s >= static_cast<std::ptrdiff_t>(L)) continue;
                for (std::size_t c = 0; c < Cin; ++c)
                    acc += vin.at(static_cast<std::size_t>(s), c) * vk.data[kidx(o, k, c)];
            }
            out.at(t, o) = acc;
        }

    bool req = slot(input).req || slot(kernels).req || slot(bias).req;
    Id oid = alloc(std::move(out), req);
    nodes_.push_back({[input, kernels, bias, oid, L, Cin, Cout, K, Lout, pad_left, kidx](Tape& t) {
        const Tensor& go = t.slot(oid).grad;
        const Tensor& vin = t.value(input);
        const Tensor& vk = t.value(kernels);
        Tensor& gin = t.slot(input).grad;
        Tensor& gk = t.slot(kernels).grad;
        Tensor& gb = t.slot(bias).grad;
        for (std::size_t tt = 0; tt < Lout; ++tt)
            for (std::size_t o = 0; o < Cout; ++o) {
                double gv = go.at(tt, o);
                if (gv == 0.0) continue;
                gb.data[o] += gv;
                for (std::size_t k = 0; k < K; ++k) {
                    std::ptrdiff_t s = static_cast<std::ptrdiff_t>(tt + k) - static_cast<std::ptrdiff_t>(pad_left);
                    if (s < 0 || s >= static_cast<std::ptrdiff_t>(L)) continue;
                    for (std::size_t c = 0; c < Cin; ++c) {
                        gin.at(static_cast<std::size_t>(s), c) += gv * vk.data[kidx(o, k, c)];
                        gk.data[kidx(o, k, c)] += gv * vin.at(static_cast<std::size_t>(s), c);
                    }
                }
            }
    }});
    return oid;
}

Tape::Id Tape::batchnorm(Id x, Id gamma, Id beta, BnStats* stats, BnMode mode, double eps) {
    const Tensor& vx = value(x);
    require(vx.shape.size() == 2, "batchnorm: input must be [N,F]");
    require(eps > 0.0, "batchnorm: eps must be > 0");
    const std::size_t N = vx.rows(), F = vx.cols();
    require(value(gamma).size() == F && value(beta).size() == F, "batchnorm: gamma/beta must be [F]");
    // Frozen mode neither reads nor writes the running stats, so it tolerates
    // a null pointer (used by gradient checks on standalone fragments).
    require(stats != nullptr || mode == BnMode::Frozen, "batchnorm: missing running stats");

    std::vector<double> mean(F), invstd(F);
    if (mode == BnMode::Infer) {
        for (std::size_t f = 0; f < F; ++f) {
            mean[f] = stats->mean.data[f];
            invstd[f] = 1.0 / std::sqrt(stats->var.data[f] + eps);
        }
    } else {
        require(N >= 1, "batchnorm: empty batch in train mode");
        std::vector<double> var(F, 0.0);
        for (std::size_t f = 0; f < F; ++f) {
            double m = 0.0;
            for (std::size_t n = 0; n < N; ++n) m += vx.at(n, f);
            m /= static_cast<double>(N);
            double v = 0.0;
            for (std::size_t n = 0; n < N; ++n) {
                double d = vx.at(n, f) - m;
                v += d * d;
            }
            v /= static_cast<double>(N);  // population variance
            mean[f] = m;
            var[f] = v;
            invstd[f] = 1.0 / std::sqrt(v + eps);
        }
        if (mode == BnMode::Train) {
            const double mom = stats->momentum;
            for (std::size_t f = 0; f < F; ++f) {
                stats->mean.data[f] = mom * stats->mean.data[f] + (1.0 - mom) * mean[f];
                stats->var.data[f] = mom * stats->var.data[f] + (1.0 - mom) * var[f];
            }
        }
    }

    const Tensor& vg = value(gamma);
    const Tensor& vbta = value(beta);
    Tensor xhat = Tensor::zeros({N, F});
    Tensor out = Tensor::zeros({N, F});
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t f = 0; f < F; ++f) {
            double h = (vx.at(n, f) - mean[f]) * invstd[f];
            xhat.at(n, f) = h;
            out.at(n, f) = vg.data[f] * h + vbta.data[f];
        }

    bool req = slot(x).req || slot(gamma).req || slot(beta).req;
    Id o = alloc(std::move(out), req);
    const bool batch_stats = (mode != BnMode::Infer);
    nodes_.push_back({[x, gamma, beta, o, N, F, xhat, invstd, batch_stats](Tape& t) {
        const Tensor& go = t.slot(o).grad;
        const Tensor& vg = t.value(gamma);
        Tensor& gx = t.slot(x).grad;
        Tensor& gg = t.slot(gamma).grad;
        Tensor& gb = t.slot(beta).grad;
        for (std::size_t f = 0; f < F; ++f) {
            double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0, sum_g = 0.0, sum_g_xhat = 0.0;
            for (std::size_t n = 0; n < N; ++n) {
                double gv = go.at(n, f);
                double dxh = gv * vg.data[f];
                sum_g += gv;
                sum_g_xhat += gv * xhat.at(n, f);
                sum_dxhat += dxh;
                sum_dxhat_xhat += dxh * xhat.at(n, f);
            }
            gg.data[f] += sum_g_xhat;
            gb.data[f] += sum_g;
            if (batch_stats) {
                const double Nf = static_cast<double>(N);
                for (std::size_t n = 0; n < N; ++n) {
                    double dxh = go.at(n, f) * vg.data[f];
                    gx.at(n, f) += invstd[f] / Nf * (Nf * dxh - sum_dxhat - xhat.at(n, f) * sum_dxhat_xhat);
                }
            } else {
                for (std::size_t n = 0; n < N; ++n) gx.at(n, f) += go.at(n, f) * vg.data[f] * invstd[f];
            }
        }
    }});
    return o;
}

Tape::Id Tape::global_average_pool(Id x) {
    const Tensor& vx = value(x);
    require(vx.shape.size() == 2, "global_average_pool: input must be [L,C]");
    const std::size_t L = vx.rows(), C = vx.cols();
    require(L >= 1, "global_average_pool: empty sequence");
    Tensor out = Tensor::zeros({C});
    for (std::size_t t = 0; t < L; ++t)
        for (std::size_t c = 0; c < C; ++c) out.data[c] += vx.at(t, c);
    for (std::size_t c = 0; c < C; ++c) out.data[c] /= static_cast<double>(L);
    Id o = alloc(std::move(out), slot(x).req);
    nodes_.push_back({[x, o, L, C](Tape& t) {
        const auto& go = t.g(o);
        Tensor& gx = t.slot(x).grad;
        for (std::size_t tt = 0; tt < L; ++tt)
            for (std::size_t c = 0; c < C; ++c) gx.at(tt, c) += go[c] / static_cast<double>(L);
    }});
    return o;
}

Tape::Id Tape::dropout(Id x, double rate, RunMode mode, std::mt19937_64& rng) {
    require(rate >= 0.0 && rate < 1.0, "dropout: rate must be in [0,1)");
    if (mode == RunMode::Infer || rate == 0.0) return affine(x, 1.0, 0.0);
    const Tensor& vx = value(x);
    const double keep = 1.0 - rate;
    std::bernoulli_distribution bern(keep);
    std::vector<double> mask(vx.size());
    for (auto& m : mask) m = bern(rng) ? 1.0 / keep : 0.0;  // inverted dropout
    Tensor out = vx;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= mask[i];
    Id o = alloc(std::move(out), slot(x).req);
    nodes_.push_back({[x, o, mask](Tape& t) {
        const auto& go = t.g(o);
        auto& gx = t.g(x);
        for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * mask[i];
    }});
    return o;
}

Tape::Id Tape::softmax_cross_entropy(Id logits, const Tensor& onehot) {
    const Tensor& vl = value(logits);
    require(vl.shape.size() == 2, "softmax_cross_entropy: logits must be [N,K]");
    const std::size_t N = vl.rows(), K = vl.cols();
    require(K >= 2, "softmax_cross_entropy: need at least 2 classes");
    require(onehot.shape == vl.shape, "softmax_cross_entropy: target shape mismatch");
    constexpr double kClip = 1e-12;

    std::vector<std::size_t> true_class(N);
    for (std::size_t n = 0; n < N; ++n) {
        std::size_t ones = 0, cls = 0;
        double sum = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            double v = onehot.at(n, k);
            sum += v;
            if (v == 1.0) {
                ++ones;
                cls = k;
            } else if (v != 0.0) {
                throw std::invalid_argument("softmax_cross_entropy: malformed one-hot row");
            }
        }
        if (ones != 1 || sum != 1.0)
            throw std::invalid_argument("softmax_cross_entropy: one-hot row must contain a single 1");
        true_class[n] = cls;
    }

    Tensor probs = Tensor::zeros({N, K});
    std::vector<bool> clipped(N, false);
    double loss = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
        double mx = vl.at(n, 0);
        for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, vl.at(n, k));
        double z = 0.0;
        for (std::size_t k = 0; k < K; ++k) z += std::exp(vl.at(n, k) - mx);
        for (std::size_t k = 0; k < K; ++k) probs.at(n, k) = std::exp(vl.at(n, k) - mx) / z;
        double p = probs.at(n, true_class[n]);
        if (p < kClip) {
            p = kClip;
            clipped[n] = true;  // constant in this regime, zero gradient for the row
        }
        loss -= std::log(p);
    }
    loss /= static_cast<double>(N);

    Id o = alloc(Tensor::scalar(loss), slot(logits).req);
    nodes_.push_back({[logits, o, probs, true_class, clipped, N, K](Tape& t) {
        const double gv = t.g(o)[0];
        Tensor& gl = t.slot(logits).grad;
        for (std::size_t n = 0; n < N; ++n) {
            if (clipped[n]) continue;
            for (std::size_t k = 0; k < K; ++k) {
                double y = (k == true_class[n]) ? 1.0 : 0.0;
                gl.at(n, k) += gv * (probs.at(n, k) - y) / static_cast<double>(N);
            }
        }
    }});
    return o;
}

void Tape::backward(Id loss) {
    if (value(loss).size() != 1)
        throw std::invalid_argument("backward: loss must be a scalar");
    // Sweep on zeroed buffers so the pass computes exactly one gradient of
    // the loss, then fold the previous accumulation back in. Calling
    // backward() twice therefore doubles the accumulated gradients.
    std::vector<std::vector<double>> prior(slots_.size());
    for (std::size_t i = 0; i < slots_.size(); ++i) {
        prior[i] = std::move(slots_[i].grad.data);
        slots_[i].grad.data.assign(prior[i].size(), 0.0);
    }
    g(loss)[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->back(*this);
    for (std::size_t i = 0; i < slots_.size(); ++i) {
        auto& gd = slots_[i].grad.data;
        for (std::size_t j = 0; j < gd.size(); ++j) gd[j] += prior[i][j];
    }
}

Tape::Id gru_forward(Tape& tape, Tape::Id sequence, const GruParamIds& p, Tape::Id h0) {
    const Tensor& seq = tape.value(sequence);
    if (seq.shape.size() != 2) throw std::invalid_argument("gru_forward: sequence must be [L,Cin]");
    const std::size_t L = seq.rows(), Cin = seq.cols();
    if (L == 0) throw std::invalid_argument("gru_forward: empty sequence");
    const Tensor& wz = tape.value(p.Wz);
    if (wz.shape.size() != 2 || wz.cols() != Cin)
        throw std::invalid_argument("gru_forward: Wz shape inconsistent with input width");
    const std::size_t H = wz.rows();
    if (tape.value(h0).size() != H) throw std::invalid_argument("gru_forward: h0 must be [H]");
    seq.check_finite("gru_forward input");

    auto matvec = [&](Tape::Id W, Tape::Id v, std::size_t in_dim) {
        Tape::Id col = tape.reshape(v, {in_dim, 1});
        return tape.reshape(tape.matmul(W, col), {H});
    };

    Tape::Id h = h0;
    std::vector<Tape::Id> hidden;
    hidden.reserve(L);
    for (std::size_t t = 0; t < L; ++t) {
        Tape::Id x = tape.row(sequence, t);
        Tape::Id z = tape.sigmoid(tape.add(tape.add(matvec(p.Wz, x, Cin), matvec(p.Uz, h, H)), p.bz));
        Tape::Id r = tape.sigmoid(tape.add(tape.add(matvec(p.Wr, x, Cin), matvec(p.Ur, h, H)), p.br));
        Tape::Id rh = tape.mul(r, h);
        Tape::Id hc = tape.tanh_(tape.add(tape.add(matvec(p.Wh, x, Cin), matvec(p.Uh, rh, H)), p.bh));
        h = tape.add(tape.mul(tape.affine(z, -1.0, 1.0), h), tape.mul(z, hc));
        hidden.push_back(h);
    }
    Tape::Id out = tape.stack_rows(hidden);
    tape.value(out).check_finite("gru_forward output");
    return out;
}

}  // namespace ids
