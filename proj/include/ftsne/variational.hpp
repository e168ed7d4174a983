#ifndef FTSNE_VARIATIONAL_HPP
#define FTSNE_VARIATIONAL_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <random>
#include <utility>
#include <string>
#include <vector>

#include "affinity.hpp"
#include "common.hpp"
#include "discriminator.hpp"
#include "divergence.hpp"
#include "primal.hpp"

/**
 * @file variational.hpp
 *
 * @brief Conjugate-dual lower bound of D_f(P||Q) and its alternating minimax optimization.
 *
 * For any witness T_ij in the domain of f*,
 *
 *     D_f(P||Q) >= sum_{i != j} [ T_ij p_ij - f*(T_ij) q_ij ],
 *
 * with equality at T_ij = f'(p_ij / q_ij). The witness is produced by a
 * `Discriminator` followed by the divergence's output activation. The discriminator
 * ascends the bound and the embedding descends it.
 */

namespace ftsne {

/** Raw discriminator scores are clamped to [-limit, limit] before the activation. */
inline constexpr double raw_score_limit = 500;

/**
 * @brief Witness values T_ij and the derivative dT_ij / draw_ij.
 */
struct Witness {
    Matrix values;
    Matrix slopes;

    /** Off-diagonal raw scores that had to be clamped. */
    std::size_t clamped = 0;
};

/**
 * Clamps raw scores and applies the divergence's output activation.
 */
namespace detail {

// Activated witness value and its slope in the raw score; clamped scores get zero slope.
inline std::pair<double, double> witness_entry(const Divergence& div, double raw) {
    if (raw > raw_score_limit || raw < -raw_score_limit) {
        return { activation(div, std::clamp(raw, -raw_score_limit, raw_score_limit)), 0.0 };
    }
    return { activation(div, raw), activation_prime(div, raw) };
}

}

inline Witness witness_from_scores(const Divergence& div, const Matrix& raw) {
    if (!div.has_conjugate()) {
        throw UnsupportedConfigurationError("the variational form is not available for " + to_string(div));
    }
    const std::size_t m = raw.rows();
    Witness out{ Matrix(m, m), Matrix(m, m), 0 };
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            if (i == j) {
                continue;
            }
            const double x = raw(i, j);
            if (std::isnan(x)) {
                throw NumericError("discriminator produced a NaN score");
            }
            const auto [value, slope] = detail::witness_entry(div, x);
            out.clamped += (x > raw_score_limit || x < -raw_score_limit);
            out.values(i, j) = value;
            out.slopes(i, j) = slope;
        }
    }
    return out;
}

/**
 * Witness T_ij = f'(p_ij / q_ij) at which the bound is tight.
 */
inline Matrix optimal_witness(const Divergence& div, const Matrix& p, const Matrix& q) {
    const std::size_t m = p.rows();
    Matrix out(m, m);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            if (i != j) {
                out(i, j) = f_prime(div, p(i, j) / q(i, j));
            }
        }
    }
    return out;
}

/**
 * sum_{i != j} [ T_ij p_ij - f*(T_ij) q_ij ] for an explicit witness.
 */
inline double variational_objective(const Divergence& div, const Matrix& p, const Matrix& q, const Matrix& witness) {
    const std::size_t m = p.rows();
    std::vector<double> partial(m, 0);
    parallelize(m, [&](std::size_t start, std::size_t length) {
        for (std::size_t i = start; i < start + length; ++i) {
            double acc = 0;
            for (std::size_t j = 0; j < m; ++j) {
                if (j != i) {
                    const double t = witness(i, j);
                    acc += t * p(i, j) - conjugate(div, t) * q(i, j);
                }
            }
            partial[i] = acc;
        }
    });
    const double out = ordered_sum(partial);
    if (std::isnan(out)) {
        throw NumericError("variational objective evaluated to NaN");
    }
    return out;
}

/**
 * Bound value with the witness produced by `disc` on `points`.
 */
inline double variational_objective(const Divergence& div, const AffinityMatrix& p, const Matrix& coords, const Discriminator& disc, const Matrix& points) {
    const auto w = witness_from_scores(div, score_pairs(disc, points));
    return variational_objective(div, p.probs, low_dim_affinity(coords).probs, w.values);
}

/**
 * Gradient of the bound with respect to every discriminator weight.
 */
inline DiscriminatorParams discriminator_gradient(const Divergence& div, const AffinityMatrix& p, const Matrix& coords, const Discriminator& disc, const Matrix& points) {
    if (!div.has_conjugate()) {
        throw UnsupportedConfigurationError("the variational form is not available for " + to_string(div));
    }
    const auto q = low_dim_affinity(coords);
    std::atomic<bool> saw_nan{ false };
    auto grad = backpropagate_pairs(disc, points, [&](std::size_t i, std::size_t j, double raw) {
        if (std::isnan(raw)) {
            saw_nan = true;
            return 0.0;
        }
        const auto [t, slope] = detail::witness_entry(div, raw);
        if (slope == 0) {
            return 0.0;
        }
        const double c = conjugate_prime(div, t);
        return ((p.probs(i, j) - c * q.probs(i, j)) + (p.probs(j, i) - c * q.probs(j, i))) * slope;
    });
    if (saw_nan) {
        throw NumericError("discriminator produced a NaN score");
    }
    return grad;
}

/**
 * Gradient of the bound with respect to the embedding for a fixed witness:
 *   dJ/dy_i = 4 / Z sum_j (c_ij - <c>) W_ij^2 (y_i - y_j),  c_ij = f*(T_ij), <c> = sum_kl c_kl q_kl.
 * Only the -f*(T) q term depends on y.
 */
inline Matrix embedding_gradient_variational(const Divergence& div, const Matrix& coords, const Matrix& witness) {
    const auto q = low_dim_affinity(coords);
    const std::size_t m = coords.rows();
    Matrix c(m, m);
    std::vector<double> partial(m, 0);
    for (std::size_t i = 0; i < m; ++i) {
        double acc = 0;
        for (std::size_t j = 0; j < m; ++j) {
            if (j != i) {
                c(i, j) = conjugate(div, witness(i, j));
                acc += c(i, j) * q.probs(i, j);
            }
        }
        partial[i] = acc;
    }
    return detail::q_weighted_gradient(coords, q, c, ordered_sum(partial), +1);
}

inline Matrix embedding_gradient_variational(const Divergence& div, const Matrix& coords, const Discriminator& disc, const Matrix& points) {
    return embedding_gradient_variational(div, coords, witness_from_scores(div, score_pairs(disc, points)).values);
}

/**
 * Centers each column and scales it to unit standard deviation; constant columns are only centered.
 */
inline Matrix standardize_columns(const Matrix& points) {
    const std::size_t m = points.rows(), d = points.cols();
    Matrix out = points;
    for (std::size_t c = 0; c < d; ++c) {
        double mean = 0;
        for (std::size_t i = 0; i < m; ++i) {
            mean += points(i, c);
        }
        mean /= static_cast<double>(m);
        double var = 0;
        for (std::size_t i = 0; i < m; ++i) {
            var += (points(i, c) - mean) * (points(i, c) - mean);
        }
        const double sd = std::sqrt(var / static_cast<double>(m));
        for (std::size_t i = 0; i < m; ++i) {
            out(i, c) = sd > 0 ? (points(i, c) - mean) / sd : points(i, c) - mean;
        }
    }
    return out;
}

/**
 * @brief Settings for `run_variational()`.
 */
struct MinimaxConfig {
    /** Discriminator ascent steps per round. */
    std::size_t j_steps = 10;

    /** Embedding descent steps per round. */
    std::size_t k_steps = 10;

    /** Constant ascent rate for the discriminator weights. */
    double disc_lr = 1e-3;

    /** Embedding step schedule; its seed drives all randomness of the run. The epoch count is unused. */
    OptimizerSchedule emb_schedule;

    std::size_t rounds = 100;

    DiscriminatorArchitecture architecture;

    /** Stop once the primal loss changes by less than 1e-6 (relative) over 20 rounds. */
    bool stop_on_plateau = false;

    /** Per-point embedding gradient norm limit. */
    double clip_norm = 1e6;

    void validate() const {
        if (j_steps < 1 || k_steps < 1) {
            throw ParameterError("J and K must both be at least 1");
        }
        if (!(disc_lr > 0)) {
            throw ParameterError("discriminator learning rate must be positive");
        }
        emb_schedule.validate();
    }
};

struct VariationalTracePoint {
    std::size_t round;
    double variational_objective;
    double primal_loss;

    /** Clamped raw scores plus clipped gradient rows during the round. */
    std::size_t clip_events;
};

struct VariationalResult {
    Embedding embedding;
    Discriminator discriminator;
    std::vector<VariationalTracePoint> trace;
    double final_loss = 0;
    bool plateaued = false;
};

/**
 * Alternating minimax optimization: each round takes `j_steps` gradient-ascent steps on the
 * discriminator, then `k_steps` momentum descent steps on the embedding. The momentum buffer
 * and the schedule's step counter persist across rounds. Both the bound and the primal loss
 * of the current embedding are recorded after every round. The discriminator sees the data
 * with standardized columns.
 *
 * @throws UnsupportedConfigurationError for the interpolated family.
 * @throws NumericAbort when any quantity becomes non-finite; `step()` is the round index.
 */
inline VariationalResult run_variational(const Divergence& div, const AffinityMatrix& p, const Dataset& data, const MinimaxConfig& config, std::size_t d) {
    if (!div.has_conjugate()) {
        throw UnsupportedConfigurationError("the variational optimizer does not support " + to_string(div));
    }
    config.validate();
    validate(data);
    if (data.size() != p.size()) {
        throw ParameterError("dataset size does not match the affinity matrix");
    }

    std::mt19937_64 rng(config.emb_schedule.seed);
    VariationalResult out;
    out.embedding = init_embedding(p.size(), d, rng);
    out.discriminator = Discriminator(data.dimension(), config.architecture, rng);

    const Matrix points = standardize_columns(data.points);
    auto abort = [&](const std::string& why, std::size_t round) {
        throw NumericAbort(why + " at round " + std::to_string(round), round, out.embedding);
    };

    std::vector<double> history;
    for (std::size_t round = 0; round < config.rounds; ++round) {
        std::size_t events = 0;

        for (std::size_t step = 0; step < config.j_steps; ++step) {
            const auto grad = discriminator_gradient(div, p, out.embedding.coords, out.discriminator, points);
            out.discriminator.params().add_scaled(grad, config.disc_lr);
            if (!out.discriminator.params().all_finite()) {
                abort("non-finite discriminator weights", round);
            }
        }

        const auto witness = witness_from_scores(div, score_pairs(out.discriminator, points));
        events += witness.clamped;
        for (std::size_t step = 0; step < config.k_steps; ++step) {
            auto grad = embedding_gradient_variational(div, out.embedding.coords, witness.values);
            events += clip_rows(grad, config.clip_norm);
            if (!momentum_step(out.embedding, grad, config.emb_schedule)) {
                abort("non-finite coordinates", round);
            }
        }

        const auto q = low_dim_affinity(out.embedding.coords);
        const double bound = variational_objective(div, p.probs, q.probs, witness.values);
        const double loss = primal_divergence(div, p.probs, q.probs);
        if (!std::isfinite(bound) || !std::isfinite(loss)) {
            abort("non-finite objective", round);
        }
        out.trace.push_back({ round, bound, loss, events });

        history.push_back(loss);
        if (config.stop_on_plateau && history.size() > 20) {
            const double before = history[history.size() - 21];
            if (std::abs(loss - before) <= 1e-6 * std::abs(before)) {
                out.plateaued = true;
                break;
            }
        }
    }

    out.final_loss = primal_loss(div, p, out.embedding.coords);
    return out;
}

}

#endif
