#ifndef FTSNE_PRIMAL_HPP
#define FTSNE_PRIMAL_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "affinity.hpp"
#include "common.hpp"
#include "divergence.hpp"

/**
 * @file primal.hpp
 *
 * @brief Student-t embedding similarities, the primal f-divergence objective,
 * its gradient, and momentum gradient descent on the embedding.
 */

namespace ftsne {

/**
 * @brief Low-dimensional coordinates and their momentum buffer.
 */
struct Embedding {
    /** m x d coordinates. */
    Matrix coords;

    /** m x d momentum buffer. */
    Matrix velocity;

    /** Number of updates applied so far. */
    std::size_t epoch = 0;

    std::size_t size() const { return coords.rows(); }
    std::size_t dimension() const { return coords.cols(); }
};

/**
 * @brief Gradient descent schedule.
 *
 * The step size and momentum at update t are lr0 / (1 + t / lr_decay) and
 * momentum0 / (1 + t / momentum_decay).
 */
struct OptimizerSchedule {
    double lr0 = 100;
    double momentum0 = 0.5;
    double lr_decay = 500;
    double momentum_decay = 500;
    std::size_t epochs = 1000;
    std::uint64_t seed = 0;

    double learning_rate(std::size_t t) const { return lr0 / (1 + static_cast<double>(t) / lr_decay); }
    double momentum(std::size_t t) const { return momentum0 / (1 + static_cast<double>(t) / momentum_decay); }

    void validate() const {
        if (!(lr0 > 0) || !(momentum0 >= 0) || !(lr_decay > 0) || !(momentum_decay > 0)) {
            throw ParameterError("learning rate, momentum and decay constants must be positive");
        }
        if (!(momentum0 < 1)) {
            throw ParameterError("momentum must be below 1");
        }
    }
};

/**
 * Coordinates drawn i.i.d. from N(0, 1e-4^2); zero velocity.
 */
template <typename Engine>
Embedding init_embedding(std::size_t m, std::size_t d, Engine& rng) {
    if (m < 2) {
        throw ParameterError("embedding needs at least 2 points");
    }
    if (d < 1 || d > 3) {
        throw ParameterError("embedding dimension must be 1, 2 or 3");
    }
    Embedding out{ Matrix(m, d), Matrix(m, d), 0 };
    std::normal_distribution<double> normal(0.0, 1e-4);
    for (auto& v : out.coords.values()) {
        v = normal(rng);
    }
    return out;
}

inline Embedding init_embedding(std::size_t m, std::size_t d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return init_embedding(m, d, rng);
}

/**
 * @brief Joint Student-t similarities of an embedding.
 */
struct LowDimAffinity {
    /** q_ij = W_ij / Z. */
    Matrix probs;

    /** W_ij = (1 + ||y_i - y_j||^2)^{-1}, zero diagonal. */
    Matrix kernels;

    /** Z = sum over ordered pairs k != l of W_kl. */
    double normalizer = 0;
};

/**
 * Q normalized over all ordered pairs, so that it lives on the same pair space as P.
 */
inline LowDimAffinity low_dim_affinity(const Matrix& coords) {
    const std::size_t m = coords.rows();
    LowDimAffinity out{ Matrix(m, m), Matrix(m, m), 0 };
    std::vector<double> partial(m, 0);
    parallelize(m, [&](std::size_t start, std::size_t length) {
        for (std::size_t i = start; i < start + length; ++i) {
            const auto yi = coords.row(i);
            double acc = 0;
            for (std::size_t j = 0; j < m; ++j) {
                if (j != i) {
                    const double w = 1 / (1 + squared_distance(yi, coords.row(j)));
                    out.kernels(i, j) = w;
                    acc += w;
                }
            }
            partial[i] = acc;
        }
    });
    out.normalizer = ordered_sum(partial);
    const double inv = 1 / out.normalizer;
    for (std::size_t k = 0; k < out.probs.size(); ++k) {
        out.probs.values()[k] = out.kernels.values()[k] * inv;
    }
    return out;
}

inline LowDimAffinity low_dim_affinity(const Embedding& emb) {
    return low_dim_affinity(emb.coords);
}

/**
 * Row-normalized Student-t similarities q_{j|i}, used for retrieval metrics.
 */
inline Matrix student_t_conditional(const Matrix& coords) {
    const std::size_t m = coords.rows();
    Matrix out(m, m);
    parallelize(m, [&](std::size_t start, std::size_t length) {
        for (std::size_t i = start; i < start + length; ++i) {
            auto orow = out.row(i);
            double total = 0;
            for (std::size_t j = 0; j < m; ++j) {
                if (j != i) {
                    orow[j] = 1 / (1 + squared_distance(coords.row(i), coords.row(j)));
                    total += orow[j];
                }
            }
            for (auto& v : orow) {
                v /= total;
            }
        }
    });
    return out;
}

/**
 * Returns a copy of `p` with every off-diagonal entry raised to at least `floor`
 * and renormalized to sum to one. Keeps divergences whose p -> 0 limit is
 * unbounded (RKL) finite when Gaussian affinities underflow.
 */
inline AffinityMatrix floor_affinities(const AffinityMatrix& p, double floor = 1e-12) {
    AffinityMatrix out = p;
    const std::size_t m = p.size();
    double total = 0;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            if (i != j) {
                auto& v = out.probs(i, j);
                v = std::max(v, floor);
                total += v;
            }
        }
    }
    for (auto& v : out.probs.values()) {
        v /= total;
    }
    return out;
}

/**
 * D_f(P || Q(y)).
 */
inline double primal_loss(const Divergence& div, const AffinityMatrix& p, const Matrix& coords) {
    return primal_divergence(div, p.probs, low_dim_affinity(coords).probs);
}

inline double primal_loss(const Divergence& div, const AffinityMatrix& p, const Embedding& emb) {
    return primal_loss(div, p, emb.coords);
}

/**
 * @brief Loss and gradient with respect to the embedding coordinates.
 */
struct LossAndGradient {
    double loss = 0;
    Matrix gradient;
};

namespace detail {

/**
 * Given per-pair weights c_ij, computes
 *   sign * 4 / Z * sum_j (c_ij - <c>) W_ij^2 (y_i - y_j),  <c> = sum_kl c_kl q_kl.
 * This is the derivative of sum_kl c_kl q_kl(y) with respect to y_i when c is held fixed.
 */
inline Matrix q_weighted_gradient(const Matrix& coords, const LowDimAffinity& q, const Matrix& weights, double mean_weight, double sign) {
    const std::size_t m = coords.rows(), d = coords.cols();
    Matrix grad(m, d);
    const double scale = sign * 4 / q.normalizer;
    parallelize(m, [&](std::size_t start, std::size_t length) {
        std::vector<double> acc(d);
        for (std::size_t i = start; i < start + length; ++i) {
            std::fill(acc.begin(), acc.end(), 0.0);
            const auto yi = coords.row(i);
            for (std::size_t j = 0; j < m; ++j) {
                if (j == i) {
                    continue;
                }
                const double w = q.kernels(i, j);
                const double coef = (weights(i, j) - mean_weight) * w * w;
                const auto yj = coords.row(j);
                for (std::size_t k = 0; k < d; ++k) {
                    acc[k] += coef * (yi[k] - yj[k]);
                }
            }
            for (std::size_t k = 0; k < d; ++k) {
                grad(i, k) = scale * acc[k];
            }
        }
    });
    return grad;
}

}

/**
 * Evaluates D_f(P || Q(y)) and its exact gradient
 *   dJ/dy_i = -4 / Z sum_j (g_ij - <g>) W_ij^2 (y_i - y_j),
 * with g_ij = f(t) - t f'(t) at t = p_ij / q_ij and <g> = sum_kl g_kl q_kl.
 *
 * @throws DomainError if a pair has an unbounded term (RKL with p_ij = 0).
 */
inline LossAndGradient primal_loss_and_gradient(const Divergence& div, const Matrix& p, const Matrix& coords) {
    const std::size_t m = coords.rows();
    if (p.rows() != m || p.cols() != m) {
        throw ParameterError("affinity matrix does not match the embedding size");
    }

    const auto q = low_dim_affinity(coords);
    Matrix g(m, m);
    std::vector<double> loss_partial(m, 0), mean_partial(m, 0);
    parallelize(m, [&](std::size_t start, std::size_t length) {
        for (std::size_t i = start; i < start + length; ++i) {
            double loss = 0, mean = 0;
            for (std::size_t j = 0; j < m; ++j) {
                if (j == i) {
                    continue;
                }
                const double qij = q.probs(i, j);
                const auto term = pair_term(div, p(i, j), qij);
                g(i, j) = term.dq;
                loss += term.loss;
                mean += term.dq * qij;
            }
            loss_partial[i] = loss;
            mean_partial[i] = mean;
        }
    });

    LossAndGradient out;
    out.loss = ordered_sum(loss_partial);
    const double mean_g = ordered_sum(mean_partial);
    if (std::isinf(out.loss) || std::isinf(mean_g)) {
        throw DomainError(to_string(div) + " divergence is unbounded: some p_ij is zero");
    }
    out.gradient = detail::q_weighted_gradient(coords, q, g, mean_g, -1);
    return out;
}

inline Matrix primal_gradient(const Divergence& div, const AffinityMatrix& p, const Matrix& coords) {
    return primal_loss_and_gradient(div, p.probs, coords).gradient;
}

inline Matrix primal_gradient(const Divergence& div, const AffinityMatrix& p, const Embedding& emb) {
    return primal_gradient(div, p, emb.coords);
}

/**
 * @brief A run stopped because the loss or coordinates became non-finite.
 *
 * Carries the update index at which it happened and the last finite embedding.
 */
class NumericAbort : public NumericError {
public:
    NumericAbort(const std::string& msg, std::size_t step, Embedding last_good) :
        NumericError(msg), step_(step), last_good_(std::move(last_good)) {}

    std::size_t step() const { return step_; }
    const Embedding& last_good() const { return last_good_; }

private:
    std::size_t step_;
    Embedding last_good_;
};

/**
 * Scales each row of `grad` down to Euclidean norm `limit` if it exceeds it.
 * Returns the number of rows that were clipped.
 */
inline std::size_t clip_rows(Matrix& grad, double limit) {
    std::size_t clipped = 0;
    for (std::size_t i = 0; i < grad.rows(); ++i) {
        auto row = grad.row(i);
        double norm2 = 0;
        for (double v : row) {
            norm2 += v * v;
        }
        const double norm = std::sqrt(norm2);
        if (norm > limit) {
            for (auto& v : row) {
                v *= limit / norm;
            }
            ++clipped;
        }
    }
    return clipped;
}

/**
 * v <- momentum(t) v - lr(t) grad; y <- y + v; t <- t + 1.
 * Returns false if any coordinate became non-finite (the embedding is then left unchanged).
 */
inline bool momentum_step(Embedding& emb, const Matrix& grad, const OptimizerSchedule& schedule) {
    const double lr = schedule.learning_rate(emb.epoch);
    const double mom = schedule.momentum(emb.epoch);
    Matrix velocity = emb.velocity;
    Matrix coords = emb.coords;
    auto& v = velocity.values();
    auto& y = coords.values();
    const auto& gv = grad.values();
    for (std::size_t k = 0; k < y.size(); ++k) {
        v[k] = mom * v[k] - lr * gv[k];
        y[k] += v[k];
        if (!std::isfinite(y[k])) {
            return false;
        }
    }
    emb.velocity = std::move(velocity);
    emb.coords = std::move(coords);
    ++emb.epoch;
    return true;
}

/**
 * Knobs of `run_primal()` beyond the schedule.
 */
struct PrimalOptions {
    /** Record the loss every this many epochs (epoch 0, trace_every, ...). */
    std::size_t trace_every = 1;

    /** Multiply P by this factor during the first `exaggeration_epochs` epochs. */
    double exaggeration = 1;
    std::size_t exaggeration_epochs = 0;

    /** Per-point gradient norm limit. */
    double clip_norm = 1e6;
};

struct TracePoint {
    std::size_t step;
    double loss;
};

struct PrimalResult {
    Embedding embedding;

    /** Loss before the update at each recorded epoch. */
    std::vector<TracePoint> trace;

    /** Loss of the returned embedding. */
    double final_loss = 0;

    std::size_t clip_events = 0;
};

/**
 * Runs `schedule.epochs` momentum gradient-descent updates of D_f(P || Q) starting from `start`.
 *
 * @throws NumericAbort when the loss or coordinates stop being finite.
 */
inline PrimalResult run_primal(const Divergence& div, const AffinityMatrix& p, Embedding start, const OptimizerSchedule& schedule, const PrimalOptions& options = {}) {
    schedule.validate();
    if (options.trace_every == 0) {
        throw ParameterError("trace interval must be positive");
    }
    if (start.size() != p.size()) {
        throw ParameterError("embedding size does not match the affinity matrix");
    }

    PrimalResult out;
    out.embedding = std::move(start);
    Matrix exaggerated;
    if (options.exaggeration_epochs > 0 && options.exaggeration != 1) {
        exaggerated = p.probs;
        for (auto& v : exaggerated.values()) {
            v *= options.exaggeration;
        }
    }

    auto abort = [&](const std::string& why, std::size_t epoch) {
        throw NumericAbort(why + " at epoch " + std::to_string(epoch), epoch, out.embedding);
    };

    for (std::size_t epoch = 0; epoch < schedule.epochs; ++epoch) {
        const bool exaggerating = epoch < options.exaggeration_epochs && !exaggerated.empty();
        LossAndGradient lg;
        try {
            lg = primal_loss_and_gradient(div, exaggerating ? exaggerated : p.probs, out.embedding.coords);
        } catch (const DomainError& e) {
            abort(e.what(), epoch);
        }

        if (epoch % options.trace_every == 0) {
            const double loss = exaggerating ? primal_loss(div, p, out.embedding.coords) : lg.loss;
            if (!std::isfinite(loss)) {
                abort("non-finite loss", epoch);
            }
            out.trace.push_back({ epoch, loss });
        }
        if (!std::isfinite(lg.loss)) {
            abort("non-finite loss", epoch);
        }

        out.clip_events += clip_rows(lg.gradient, options.clip_norm);
        if (!momentum_step(out.embedding, lg.gradient, schedule)) {
            abort("non-finite coordinates", epoch);
        }
    }

    out.final_loss = primal_loss(div, p, out.embedding.coords);
    if (!std::isfinite(out.final_loss)) {
        abort("non-finite loss", schedule.epochs);
    }
    return out;
}

/**
 * Initializes an m x d embedding from `schedule.seed` and optimizes it.
 */
inline PrimalResult run_primal(const Divergence& div, const AffinityMatrix& p, const OptimizerSchedule& schedule, std::size_t d, const PrimalOptions& options = {}) {
    return run_primal(div, p, init_embedding(p.size(), d, schedule.seed), schedule, options);
}

}

#endif
