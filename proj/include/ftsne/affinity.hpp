#ifndef FTSNE_AFFINITY_HPP
#define FTSNE_AFFINITY_HPP

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "common.hpp"

/**
 * @file affinity.hpp
 *
 * @brief Perplexity-calibrated neighbor distributions in the input space and
 * similarity distributions over known latent values.
 */

namespace ftsne {

/**
 * @brief Points in the input space, with optional per-point latent values.
 */
struct Dataset {
    /** m x D coordinates. */
    Matrix points;

    /** m x L latent values (usually L = 1), either class ids or continuous coordinates. */
    std::optional<Matrix> labels;

    std::size_t size() const { return points.rows(); }
    std::size_t dimension() const { return points.cols(); }
};

/**
 * Checks the `Dataset` invariants, throwing a `ParameterError` on violation.
 */
inline void validate(const Dataset& data) {
    if (data.size() < 2) {
        throw ParameterError("dataset needs at least 2 points");
    }
    for (double v : data.points.values()) {
        if (!std::isfinite(v)) {
            throw ParameterError("dataset contains non-finite coordinates");
        }
    }
    if (data.labels && data.labels->rows() != data.size()) {
        throw ParameterError("dataset must have exactly one label per point");
    }
}

/**
 * @brief Row-stochastic neighbor distribution p_{j|i}.
 */
struct ConditionalAffinity {
    /** m x m, row i holds p_{.|i}; zero diagonal. */
    Matrix rows;

    /** Gaussian bandwidth for each row. */
    std::vector<double> sigmas;

    double perplexity = 0;
};

/**
 * @brief Symmetric joint distribution p_{ij} over ordered pairs i != j.
 */
struct AffinityMatrix {
    Matrix probs;

    std::size_t size() const { return probs.rows(); }
};

namespace detail {

struct RowEntropy {
    double entropy_bits;
    double normalizer;
};

// Entropy (in bits) of the row distribution proportional to exp(-(d_j - dmin) * beta).
inline RowEntropy gaussian_row_entropy(std::span<const double> dist, std::size_t self, double dmin, double beta) {
    double total = 0, weighted = 0;
    for (std::size_t j = 0; j < dist.size(); ++j) {
        if (j == self) {
            continue;
        }
        const double shifted = dist[j] - dmin;
        const double w = std::exp(-shifted * beta);
        total += w;
        weighted += shifted * w;
    }
    const double nats = std::log(total) + beta * weighted / total;
    return { nats / std::log(2.0), total };
}

}

/**
 * Options for the per-row bandwidth search in `conditional_affinities()`.
 */
struct CalibrationOptions {
    /** Accepted relative error between 2^H and the target perplexity. */
    double tolerance = 1e-4;

    /** Maximum bisection steps on log(sigma) once a bracket is found. */
    int max_iterations = 64;
};

/**
 * Computes p_{j|i} = exp(-||x_i - x_j||^2 / 2 sigma_i^2), normalized over j != i,
 * with each sigma_i chosen so that 2^H(p_{.|i}) matches `perplexity`.
 *
 * The bandwidth is found by bisection on log(sigma_i), starting from a bracket
 * obtained by repeated doubling/halving. A row whose off-diagonal distances are
 * all equal (e.g. m = 2) is uniform for every sigma and is returned as such.
 *
 * @throws ParameterError if `perplexity` is not in (1, m), or is at least m - 1 for a row
 *         whose distances are not all equal.
 * @throws DegenerateInputError if a row has all distances zero or cannot reach the target.
 */
inline ConditionalAffinity conditional_affinities(const Dataset& data, double perplexity, const CalibrationOptions& options = {}) {
    validate(data);
    const std::size_t m = data.size();
    if (!(perplexity > 1) || !(perplexity < static_cast<double>(m))) {
        throw ParameterError("perplexity must lie in (1, m) with m = " + std::to_string(m));
    }

    const Matrix dist = squared_distances(data.points);
    const double target = std::log2(perplexity);

    ConditionalAffinity out;
    out.rows = Matrix(m, m);
    out.sigmas.assign(m, 0);
    out.perplexity = perplexity;

    // Failures are recorded per row and raised after the parallel section.
    std::vector<int> failure(m, 0);

    parallelize(m, [&](std::size_t start, std::size_t length) {
        for (std::size_t i = start; i < start + length; ++i) {
            const auto drow = dist.row(i);
            double dmin = std::numeric_limits<double>::infinity(), dmax = 0, dsum = 0;
            for (std::size_t j = 0; j < m; ++j) {
                if (j != i) {
                    dmin = std::min(dmin, drow[j]);
                    dmax = std::max(dmax, drow[j]);
                    dsum += drow[j];
                }
            }

            auto orow = out.rows.row(i);
            if (dmax == 0) {
                failure[i] = 1;
                continue;
            }
            if (dmin == dmax) {
                for (std::size_t j = 0; j < m; ++j) {
                    orow[j] = (j == i ? 0.0 : 1.0 / static_cast<double>(m - 1));
                }
                out.sigmas[i] = std::sqrt(dmax / 2);
                continue;
            }

            // beta = 1 / (2 sigma^2); entropy increases with sigma.
            auto entropy_at = [&](double log_sigma) {
                const double sigma = std::exp(log_sigma);
                return detail::gaussian_row_entropy(drow, i, dmin, 1.0 / (2 * sigma * sigma)).entropy_bits;
            };

            const double log2_step = std::log(2.0);
            double lo = 0.5 * std::log(dsum / static_cast<double>(m - 1));
            double hi = lo;
            if (entropy_at(lo) < target) {
                int guard = 0;
                do {
                    lo = hi;
                    hi += log2_step;
                } while (entropy_at(hi) < target && ++guard < 2000);
            } else {
                int guard = 0;
                do {
                    hi = lo;
                    lo -= log2_step;
                } while (entropy_at(lo) > target && ++guard < 2000);
            }

            double mid = 0.5 * (lo + hi);
            for (int it = 0; it < options.max_iterations; ++it) {
                mid = 0.5 * (lo + hi);
                const double h = entropy_at(mid);
                if (std::abs(h - target) < 1e-13) {
                    break;
                }
                if (h < target) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }

            const double sigma = std::exp(mid);
            const double beta = 1.0 / (2 * sigma * sigma);
            const auto achieved = detail::gaussian_row_entropy(drow, i, dmin, beta);
            if (!(std::abs(std::exp2(achieved.entropy_bits) / perplexity - 1) <= options.tolerance)) {
                failure[i] = 2;
                continue;
            }

            for (std::size_t j = 0; j < m; ++j) {
                orow[j] = (j == i ? 0.0 : std::exp(-(drow[j] - dmin) * beta) / achieved.normalizer);
            }
            out.sigmas[i] = sigma;
        }
    });

    for (std::size_t i = 0; i < m; ++i) {
        if (failure[i] == 1) {
            throw DegenerateInputError("row " + std::to_string(i) + " is degenerate: all other points coincide with it", i);
        }
        if (failure[i] == 2 && perplexity >= static_cast<double>(m - 1)) {
            throw ParameterError("perplexity " + std::to_string(perplexity) + " is unreachable: rows with unequal distances stay below m - 1 = " + std::to_string(m - 1));
        }
        if (failure[i] == 2) {
            throw DegenerateInputError("row " + std::to_string(i) + " cannot reach the requested perplexity (duplicate points?)", i);
        }
    }
    return out;
}

/**
 * Joint affinities p_{ij} = (p_{j|i} + p_{i|j}) / 2m.
 */
inline AffinityMatrix symmetrize(const ConditionalAffinity& cond) {
    const std::size_t m = cond.rows.rows();
    AffinityMatrix out{ Matrix(m, m) };
    const double denom = 2.0 * static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i + 1; j < m; ++j) {
            const double v = (cond.rows(i, j) + cond.rows(j, i)) / denom;
            out.probs(i, j) = v;
            out.probs(j, i) = v;
        }
    }
    return out;
}

/**
 * How latent values are compared when building r_{j|i}.
 */
enum class LatentKind { discrete, continuous };

/**
 * @brief Row-stochastic similarity r_{j|i} over latent values.
 *
 * Rows for points without any same-class neighbor are all zero and flagged in `excluded`;
 * they must not contribute to latent-space retrieval metrics.
 */
struct LatentAffinity {
    Matrix rows;
    std::vector<char> excluded;
};

/**
 * Discrete: r_{j|i} uniform over points sharing i's label (compared exactly).
 * Continuous: r_{j|i} proportional to (1 + ||z_i - z_j||^2)^{-1}.
 */
inline LatentAffinity latent_affinity(const Matrix& labels, LatentKind kind) {
    const std::size_t m = labels.rows();
    if (m < 2) {
        throw ParameterError("latent affinity needs at least 2 labelled points");
    }

    LatentAffinity out{ Matrix(m, m), std::vector<char>(m, 0) };
    for (std::size_t i = 0; i < m; ++i) {
        auto orow = out.rows.row(i);
        const auto zi = labels.row(i);
        double total = 0;
        for (std::size_t j = 0; j < m; ++j) {
            if (j == i) {
                continue;
            }
            const auto zj = labels.row(j);
            double v;
            if (kind == LatentKind::discrete) {
                v = std::equal(zi.begin(), zi.end(), zj.begin()) ? 1.0 : 0.0;
            } else {
                v = 1.0 / (1.0 + squared_distance(zi, zj));
            }
            orow[j] = v;
            total += v;
        }

        if (total == 0) {
            out.excluded[i] = 1;
            continue;
        }
        for (auto& v : orow) {
            v /= total;
        }
    }
    return out;
}

}

#endif
