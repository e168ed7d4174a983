#ifndef FTSNE_DISCRIMINATOR_HPP
#define FTSNE_DISCRIMINATOR_HPP

#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "common.hpp"

/**
 * @file discriminator.hpp
 *
 * @brief Pairwise scoring network D(x_i, x_j) = g([e(x_i) + e(x_j); e(x_i) * e(x_j)]).
 *
 * The point encoder e and the head g are small fully-connected rectifier networks.
 * Because the head only sees a sum and an elementwise product of the two encodings,
 * D(x_i, x_j) and D(x_j, x_i) are computed from identical floating-point inputs
 * and are therefore bit-identical.
 */

namespace ftsne {

/**
 * @brief Fully-connected layer, y = W x + b with W stored as out x in.
 */
struct DenseLayer {
    Matrix weights;
    std::vector<double> bias;

    std::size_t inputs() const { return weights.cols(); }
    std::size_t outputs() const { return weights.rows(); }
};

/**
 * @brief Hidden-layer widths of the encoder and the head.
 *
 * Every encoder layer and every head hidden layer is followed by a rectifier;
 * the head ends with a linear layer producing one score.
 */
struct DiscriminatorArchitecture {
    std::vector<std::size_t> encoder_widths{ 10 };
    std::vector<std::size_t> head_widths{ 20 };

    bool operator==(const DiscriminatorArchitecture&) const = default;
};

/**
 * @brief Weights of a discriminator, also used to hold their gradients.
 */
struct DiscriminatorParams {
    std::vector<DenseLayer> encoder;
    std::vector<DenseLayer> head;

    /** Same shapes, all zeros. */
    DiscriminatorParams zeros_like() const {
        DiscriminatorParams out = *this;
        out.for_each([](double& v) { v = 0; });
        return out;
    }

    template <typename Function>
    void for_each(Function&& fn) {
        for (auto* group : { &encoder, &head }) {
            for (auto& layer : *group) {
                for (auto& w : layer.weights.values()) {
                    fn(w);
                }
                for (auto& b : layer.bias) {
                    fn(b);
                }
            }
        }
    }

    template <typename Function>
    void for_each(Function&& fn) const {
        const_cast<DiscriminatorParams*>(this)->for_each([&](double& v) { fn(static_cast<const double&>(v)); });
    }

    std::size_t count() const {
        std::size_t n = 0;
        for_each([&](const double&) { ++n; });
        return n;
    }

    std::vector<double> flatten() const {
        std::vector<double> out;
        out.reserve(count());
        for_each([&](const double& v) { out.push_back(v); });
        return out;
    }

    void assign(std::span<const double> values) {
        if (values.size() != count()) {
            throw ParameterError("parameter vector has the wrong length");
        }
        std::size_t k = 0;
        for_each([&](double& v) { v = values[k++]; });
    }

    /** this += scale * other, for identically shaped parameters. */
    void add_scaled(const DiscriminatorParams& other, double scale) {
        const auto flat = other.flatten();
        std::size_t k = 0;
        for_each([&](double& v) { v += scale * flat[k++]; });
    }

    bool all_finite() const {
        bool ok = true;
        for_each([&](const double& v) { ok = ok && std::isfinite(v); });
        return ok;
    }
};

namespace detail {

// Dot product with four interleaved partial sums combined in a fixed order.
inline double dot(const double* a, const double* b, std::size_t n) {
    double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    std::size_t k = 0;
    for (; k + 4 <= n; k += 4) {
        s0 += a[k] * b[k];
        s1 += a[k + 1] * b[k + 1];
        s2 += a[k + 2] * b[k + 2];
        s3 += a[k + 3] * b[k + 3];
    }
    for (; k < n; ++k) {
        s0 += a[k] * b[k];
    }
    return (s0 + s1) + (s2 + s3);
}

inline void dense_forward(const DenseLayer& layer, std::span<const double> in, std::span<double> out, bool rectify) {
    for (std::size_t o = 0; o < layer.outputs(); ++o) {
        const double acc = layer.bias[o] + dot(layer.weights.row(o).data(), in.data(), in.size());
        out[o] = (rectify && acc < 0 ? 0.0 : acc);
    }
}

// Accumulates parameter gradients for upstream gradient `dout` (already masked by the
// rectifier) and writes the gradient with respect to the layer input into `din`.
inline void dense_backward(const DenseLayer& layer, DenseLayer& grad, std::span<const double> in, std::span<const double> dout, std::span<double> din, double weight) {
    std::fill(din.begin(), din.end(), 0.0);
    for (std::size_t o = 0; o < layer.outputs(); ++o) {
        const double g = dout[o];
        if (g == 0) {
            continue;
        }
        const auto w = layer.weights.row(o);
        auto gw = grad.weights.row(o);
        const double wg = weight * g;
        for (std::size_t k = 0; k < in.size(); ++k) {
            gw[k] += wg * in[k];
            din[k] += w[k] * g;
        }
        grad.bias[o] += wg;
    }
}

}

/**
 * @brief Order-invariant pairwise scoring network.
 */
class Discriminator {
public:
    Discriminator() = default;

    /**
     * Builds the network for `input_dim`-dimensional points with weights drawn
     * uniformly from +-sqrt(6 / (fan_in + fan_out)) and zero biases.
     */
    template <typename Engine>
    Discriminator(std::size_t input_dim, const DiscriminatorArchitecture& arch, Engine& rng) : input_dim_(input_dim), arch_(arch) {
        if (input_dim == 0) {
            throw ParameterError("discriminator input dimension must be positive");
        }
        for (auto w : arch.encoder_widths) {
            if (w == 0) {
                throw ParameterError("layer widths must be positive");
            }
        }
        for (auto w : arch.head_widths) {
            if (w == 0) {
                throw ParameterError("layer widths must be positive");
            }
        }

        auto make = [&](std::size_t in, std::size_t out) {
            DenseLayer layer{ Matrix(out, in), std::vector<double>(out, 0.0) };
            const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
            std::uniform_real_distribution<double> unif(-limit, limit);
            for (auto& w : layer.weights.values()) {
                w = unif(rng);
            }
            return layer;
        };

        std::size_t width = input_dim;
        for (auto w : arch.encoder_widths) {
            params_.encoder.push_back(make(width, w));
            width = w;
        }
        width *= 2;
        for (auto w : arch.head_widths) {
            params_.head.push_back(make(width, w));
            width = w;
        }
        params_.head.push_back(make(width, 1));
    }

    std::size_t input_dim() const { return input_dim_; }
    const DiscriminatorArchitecture& architecture() const { return arch_; }

    /** Width of e(x). */
    std::size_t encoding_dim() const { return params_.encoder.empty() ? input_dim_ : params_.encoder.back().outputs(); }

    DiscriminatorParams& params() { return params_; }
    const DiscriminatorParams& params() const { return params_; }

    /**
     * Encodes every row of `points`; returns an m x encoding_dim() matrix.
     */
    Matrix encode(const Matrix& points) const {
        check_input(points);
        Matrix out(points.rows(), encoding_dim());
        std::vector<double> a, b;
        for (std::size_t i = 0; i < points.rows(); ++i) {
            a.assign(points.row(i).begin(), points.row(i).end());
            for (const auto& layer : params_.encoder) {
                b.assign(layer.outputs(), 0);
                detail::dense_forward(layer, a, b, true);
                a.swap(b);
            }
            std::copy(a.begin(), a.end(), out.row(i).begin());
        }
        return out;
    }

    /**
     * Projection of each encoding through the half of the first head layer that sees
     * e_i + e_j; row i holds W_sum e_i. Shared by every pair that contains point i.
     */
    Matrix sum_projection(const Matrix& enc) const {
        const auto& first = params_.head.front();
        const std::size_t n = encoding_dim();
        Matrix out(enc.rows(), first.outputs());
        for (std::size_t i = 0; i < enc.rows(); ++i) {
            for (std::size_t o = 0; o < first.outputs(); ++o) {
                out(i, o) = detail::dot(first.weights.row(o).data(), enc.row(i).data(), n);
            }
        }
        return out;
    }

    /**
     * First head layer for one pair, from the sum projections `si`, `sj` and the encodings.
     * `product` receives e_i * e_j. Symmetric in (i, j) bit for bit.
     */
    void first_head_layer(std::span<const double> si, std::span<const double> sj, std::span<const double> ei, std::span<const double> ej, std::span<double> product, std::span<double> out) const {
        const auto& first = params_.head.front();
        const std::size_t n = ei.size();
        for (std::size_t k = 0; k < n; ++k) {
            product[k] = ei[k] * ej[k];
        }
        const bool rectify = params_.head.size() > 1;
        for (std::size_t o = 0; o < first.outputs(); ++o) {
            const double acc = first.bias[o] + (si[o] + sj[o]) + detail::dot(first.weights.row(o).data() + n, product.data(), n);
            out[o] = (rectify && acc < 0 ? 0.0 : acc);
        }
    }

    /** Reusable buffers for `head()`. */
    struct Scratch {
        std::vector<double> product, a, b;
    };

    /**
     * Head output for one pair given its sum projections and encodings.
     */
    double head(std::span<const double> si, std::span<const double> sj, std::span<const double> ei, std::span<const double> ej, Scratch& scratch) const {
        scratch.product.resize(ei.size());
        scratch.a.resize(params_.head.front().outputs());
        first_head_layer(si, sj, ei, ej, scratch.product, scratch.a);
        const std::size_t last = params_.head.size() - 1;
        for (std::size_t l = 1; l < params_.head.size(); ++l) {
            scratch.b.resize(params_.head[l].outputs());
            detail::dense_forward(params_.head[l], scratch.a, scratch.b, l != last);
            scratch.a.swap(scratch.b);
        }
        return scratch.a[0];
    }

    double score(std::span<const double> xi, std::span<const double> xj) const {
        Matrix pair(2, input_dim_);
        std::copy(xi.begin(), xi.end(), pair.row(0).begin());
        std::copy(xj.begin(), xj.end(), pair.row(1).begin());
        const auto enc = encode(pair);
        const auto proj = sum_projection(enc);
        Scratch scratch;
        return head(proj.row(0), proj.row(1), enc.row(0), enc.row(1), scratch);
    }

    void check_input(const Matrix& points) const {
        if (points.cols() != input_dim_) {
            throw ParameterError("data dimension does not match the discriminator input");
        }
    }

private:
    std::size_t input_dim_ = 0;
    DiscriminatorArchitecture arch_;
    DiscriminatorParams params_;
};

/**
 * Raw scores D(x_i, x_j) for all pairs, as a symmetric m x m matrix.
 * Each unordered pair is evaluated once and mirrored; the diagonal holds D(x_i, x_i).
 */
inline Matrix score_pairs(const Discriminator& disc, const Matrix& points) {
    const auto enc = disc.encode(points);
    const auto proj = disc.sum_projection(enc);
    const std::size_t m = points.rows();
    Matrix out(m, m);
    parallelize(m, [&](std::size_t start, std::size_t length) {
        Discriminator::Scratch scratch;
        for (std::size_t i = start; i < start + length; ++i) {
            for (std::size_t j = i; j < m; ++j) {
                out(i, j) = disc.head(proj.row(i), proj.row(j), enc.row(i), enc.row(j), scratch);
            }
        }
    });
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            out(i, j) = out(j, i);
        }
    }
    return out;
}

/**
 * Gradient of sum_{i < j} w_ij D(x_i, x_j) with respect to all weights, where the pair
 * weight w_ij = weight_of(i, j, D(x_i, x_j)) may depend on the pair's own score, which is
 * computed in the same pass. A zero weight skips the pair.
 *
 * Rows are grouped into fixed blocks whose partial gradients are reduced in block
 * order, so the result does not depend on the thread count.
 */
template <typename WeightFunction>
DiscriminatorParams backpropagate_pairs(const Discriminator& disc, const Matrix& points, WeightFunction&& weight_of) {
    disc.check_input(points);
    const std::size_t m = points.rows();
    const auto& params = disc.params();
    const std::size_t enc_dim = disc.encoding_dim();
    const std::size_t nhead = params.head.size();

    // Forward pass through the encoder, keeping every layer's activations.
    std::vector<Matrix> enc_acts;
    enc_acts.push_back(points);
    for (const auto& layer : params.encoder) {
        const Matrix& in = enc_acts.back();
        Matrix out(m, layer.outputs());
        for (std::size_t i = 0; i < m; ++i) {
            detail::dense_forward(layer, in.row(i), out.row(i), true);
        }
        enc_acts.push_back(std::move(out));
    }
    const Matrix& enc = enc_acts.back();
    const Matrix proj = disc.sum_projection(enc);
    const std::size_t width0 = params.head.front().outputs();

    // Per block: head gradients, encoding gradients from the product features, and the
    // summed first-layer deltas of every point (the e_i + e_j half is applied afterwards).
    constexpr std::size_t block = 32;
    const std::size_t nblocks = (m + block - 1) / block;
    const DiscriminatorParams zero = params.zeros_like();
    std::vector<DiscriminatorParams> block_grads(nblocks, zero);
    std::vector<Matrix> block_denc(nblocks, Matrix(m, enc_dim));
    std::vector<Matrix> block_sums(nblocks, Matrix(m, width0));

    parallelize(nblocks, [&](std::size_t bstart, std::size_t blength) {
        std::vector<std::vector<double>> acts(nhead);
        std::vector<double> product(enc_dim), delta, din;
        for (std::size_t b = bstart; b < bstart + blength; ++b) {
            auto& grad = block_grads[b];
            auto& denc = block_denc[b];
            auto& sums = block_sums[b];
            auto& first_grad = grad.head.front();
            const auto& first = params.head.front();
            const std::size_t row_end = std::min(m, (b + 1) * block);
            for (std::size_t i = b * block; i < row_end; ++i) {
                const auto ei = enc.row(i);
                for (std::size_t j = i + 1; j < m; ++j) {
                    const auto ej = enc.row(j);

                    // acts[l] is the output of head layer l.
                    acts[0].resize(width0);
                    disc.first_head_layer(proj.row(i), proj.row(j), ei, ej, product, acts[0]);
                    for (std::size_t l = 1; l < nhead; ++l) {
                        acts[l].resize(params.head[l].outputs());
                        detail::dense_forward(params.head[l], acts[l - 1], acts[l], l + 1 != nhead);
                    }
                    const double weight = weight_of(i, j, acts[nhead - 1][0]);
                    if (weight == 0) {
                        continue;
                    }

                    delta.assign(1, 1.0);
                    for (std::size_t l = nhead; l-- > 1;) {
                        din.resize(params.head[l].inputs());
                        detail::dense_backward(params.head[l], grad.head[l], acts[l - 1], delta, din, weight);
                        for (std::size_t k = 0; k < din.size(); ++k) {
                            if (acts[l - 1][k] <= 0) {
                                din[k] = 0;
                            }
                        }
                        delta.swap(din);
                    }

                    // First head layer: the product half here, the sum half via `sums`.
                    auto si = sums.row(i);
                    auto sj = sums.row(j);
                    auto di = denc.row(i);
                    auto dj = denc.row(j);
                    for (std::size_t o = 0; o < width0; ++o) {
                        const double g = delta[o];
                        if (g == 0) {
                            continue;
                        }
                        const double wg = weight * g;
                        si[o] += wg;
                        sj[o] += wg;
                        first_grad.bias[o] += wg;
                        const double* w = first.weights.row(o).data() + enc_dim;
                        double* gw = first_grad.weights.row(o).data() + enc_dim;
                        for (std::size_t k = 0; k < enc_dim; ++k) {
                            gw[k] += wg * product[k];
                            di[k] += wg * w[k] * ej[k];
                            dj[k] += wg * w[k] * ei[k];
                        }
                    }
                }
            }
        }
    });

    DiscriminatorParams total = zero;
    Matrix denc(m, enc_dim);
    Matrix sums(m, width0);
    for (std::size_t b = 0; b < nblocks; ++b) {
        for (std::size_t l = 0; l < nhead; ++l) {
            auto& dst = total.head[l];
            const auto& src = block_grads[b].head[l];
            for (std::size_t k = 0; k < dst.weights.size(); ++k) {
                dst.weights.values()[k] += src.weights.values()[k];
            }
            for (std::size_t k = 0; k < dst.bias.size(); ++k) {
                dst.bias[k] += src.bias[k];
            }
        }
        for (std::size_t k = 0; k < denc.size(); ++k) {
            denc.values()[k] += block_denc[b].values()[k];
        }
        for (std::size_t k = 0; k < sums.size(); ++k) {
            sums.values()[k] += block_sums[b].values()[k];
        }
    }

    // Sum half of the first head layer: sum over pairs of delta (e_i + e_j)^T.
    {
        const auto& first = params.head.front();
        auto& first_grad = total.head.front();
        for (std::size_t i = 0; i < m; ++i) {
            const auto ei = enc.row(i);
            const auto si = sums.row(i);
            auto di = denc.row(i);
            for (std::size_t o = 0; o < width0; ++o) {
                const double g = si[o];
                if (g == 0) {
                    continue;
                }
                const double* w = first.weights.row(o).data();
                double* gw = first_grad.weights.row(o).data();
                for (std::size_t k = 0; k < enc_dim; ++k) {
                    gw[k] += g * ei[k];
                    di[k] += g * w[k];
                }
            }
        }
    }

    // Backward through the encoder, one point at a time in index order.
    std::vector<double> delta, din;
    for (std::size_t i = 0; i < m; ++i) {
        delta.assign(denc.row(i).begin(), denc.row(i).end());
        for (std::size_t l = params.encoder.size(); l-- > 0;) {
            const auto out_act = enc_acts[l + 1].row(i);
            for (std::size_t k = 0; k < delta.size(); ++k) {
                if (out_act[k] <= 0) {
                    delta[k] = 0;
                }
            }
            din.assign(params.encoder[l].inputs(), 0);
            detail::dense_backward(params.encoder[l], total.encoder[l], enc_acts[l].row(i), delta, din, 1.0);
            delta.swap(din);
        }
    }
    return total;
}

/**
 * Gradient of sum_{i != j} G_ij D(x_i, x_j) with respect to all weights, where
 * `upstream` holds G_ij = dObjective/dD(x_i, x_j).
 */
inline DiscriminatorParams backpropagate_scores(const Discriminator& disc, const Matrix& points, const Matrix& upstream) {
    if (upstream.rows() != points.rows() || upstream.cols() != points.rows()) {
        throw ParameterError("upstream gradient must be m x m");
    }
    return backpropagate_pairs(disc, points, [&](std::size_t i, std::size_t j, double) { return upstream(i, j) + upstream(j, i); });
}

}

#endif
