#ifndef FTSNE_METRICS_HPP
#define FTSNE_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "affinity.hpp"
#include "common.hpp"
#include "divergence.hpp"

/**
 * @file metrics.hpp
 *
 * @brief Neighborhood-retrieval quality of an embedding, and the binary-neighborhood
 * model relating f-divergences to precision and recall.
 */

namespace ftsne {

/**
 * @brief Precision/recall pairs swept over a threshold or neighborhood size.
 *
 * For K-nearest/K-farthest curves `precision` holds the NN-precision and
 * `recall` the FN-precision.
 */
struct RetrievalCurves {
    std::vector<double> params;
    std::vector<double> precision;
    std::vector<double> recall;
    std::vector<double> fscore;
    double max_fscore = 0;
};

inline double f_score(double precision, double recall) {
    const double denom = precision + recall;
    return denom > 0 ? 2 * precision * recall / denom : 0.0;
}

namespace detail {

inline void finish_curves(RetrievalCurves& curves) {
    curves.fscore.resize(curves.params.size());
    curves.max_fscore = 0;
    for (std::size_t k = 0; k < curves.params.size(); ++k) {
        curves.fscore[k] = f_score(curves.precision[k], curves.recall[k]);
        curves.max_fscore = std::max(curves.max_fscore, curves.fscore[k]);
    }
}

}

/**
 * N_eps(i) = { j != i : similarity(i, j) > eps }, as sorted index lists.
 */
inline std::vector<std::vector<std::size_t>> threshold_neighbors(const Matrix& similarity, double eps) {
    if (!(eps > 0)) {
        throw ParameterError("threshold must be positive");
    }
    const std::size_t m = similarity.rows();
    std::vector<std::vector<std::size_t>> out(m);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < similarity.cols(); ++j) {
            if (j != i && similarity(i, j) > eps) {
                out[i].push_back(j);
            }
        }
    }
    return out;
}

inline std::vector<std::vector<std::size_t>> threshold_neighbors(const ConditionalAffinity& cond, double eps) {
    return threshold_neighbors(cond.rows, eps);
}

namespace detail {

inline std::vector<double> positive_off_diagonal(const Matrix& mat) {
    std::vector<double> pool;
    for (std::size_t i = 0; i < mat.rows(); ++i) {
        for (std::size_t j = 0; j < mat.cols(); ++j) {
            const double v = mat(i, j);
            if (i != j && v > 0) {
                pool.push_back(v);
            }
        }
    }
    std::sort(pool.begin(), pool.end());
    return pool;
}

inline double percentile(const std::vector<double>& sorted, double frac) {
    return sorted[static_cast<std::size_t>(std::floor(frac * static_cast<double>(sorted.size() - 1)))];
}

}

/**
 * Threshold grid of `count` values log-spaced between the 1st and 99th percentiles of
 * the positive off-diagonal entries of `reference`. When those percentiles coincide
 * (e.g. class-indicator rows) the percentiles of `retrieved` are used instead.
 */
inline std::vector<double> epsilon_grid(const Matrix& reference, const Matrix& retrieved, std::size_t count = 50) {
    for (const Matrix* mat : { &reference, &retrieved }) {
        const auto pool = detail::positive_off_diagonal(*mat);
        if (pool.empty()) {
            continue;
        }
        const double lo = detail::percentile(pool, 0.01), hi = detail::percentile(pool, 0.99);
        if (lo < hi) {
            return log_spaced(lo, hi, count);
        }
    }
    throw ParameterError("similarity matrices have no spread of positive entries to build thresholds from");
}

/**
 * Mean precision and recall of thresholded neighbor sets, one entry per threshold:
 *   precision(eps) = mean_i |N_eps(y_i) & N_eps(x_i)| / |N_eps(y_i)|
 *   recall(eps)    = mean_i |N_eps(y_i) & N_eps(x_i)| / |N_eps(x_i)|
 * An empty retrieved set contributes precision 1, an empty relevant set recall 1.
 * Rows flagged in `excluded` are left out of the means.
 */
inline RetrievalCurves threshold_curves(const Matrix& reference, const Matrix& retrieved, std::span<const double> eps_grid, std::span<const char> excluded = {}) {
    const std::size_t m = reference.rows();
    if (retrieved.rows() != m || reference.cols() != m || retrieved.cols() != m) {
        throw ParameterError("similarity matrices must be m x m with the same m");
    }
    if (!excluded.empty() && excluded.size() != m) {
        throw ParameterError("exclusion mask must have one entry per point");
    }
    std::size_t used = 0;
    for (std::size_t i = 0; i < m; ++i) {
        if (excluded.empty() || !excluded[i]) {
            ++used;
        }
    }
    if (used == 0) {
        throw ParameterError("every point is excluded from the retrieval metrics");
    }

    RetrievalCurves out;
    out.params.assign(eps_grid.begin(), eps_grid.end());
    out.precision.assign(eps_grid.size(), 0);
    out.recall.assign(eps_grid.size(), 0);

    std::vector<double> prec_rows(m), rec_rows(m);
    for (std::size_t e = 0; e < eps_grid.size(); ++e) {
        const double eps = eps_grid[e];
        if (!(eps > 0)) {
            throw ParameterError("thresholds must be positive");
        }
        parallelize(m, [&](std::size_t start, std::size_t length) {
            for (std::size_t i = start; i < start + length; ++i) {
                prec_rows[i] = rec_rows[i] = 0;
                if (!excluded.empty() && excluded[i]) {
                    continue;
                }
                std::size_t relevant = 0, retrieved_count = 0, hits = 0;
                for (std::size_t j = 0; j < m; ++j) {
                    if (j == i) {
                        continue;
                    }
                    const bool rel = reference(i, j) > eps;
                    const bool ret = retrieved(i, j) > eps;
                    relevant += rel;
                    retrieved_count += ret;
                    hits += (rel && ret);
                }
                prec_rows[i] = retrieved_count ? static_cast<double>(hits) / static_cast<double>(retrieved_count) : 1.0;
                rec_rows[i] = relevant ? static_cast<double>(hits) / static_cast<double>(relevant) : 1.0;
            }
        });
        out.precision[e] = ordered_sum(prec_rows) / static_cast<double>(used);
        out.recall[e] = ordered_sum(rec_rows) / static_cast<double>(used);
    }
    detail::finish_curves(out);
    return out;
}

/**
 * Data-space vs embedding-space curves from p_{j|i} and q_{j|i}.
 */
inline RetrievalCurves pr_curve_xy(const Matrix& p_cond, const Matrix& q_cond, std::span<const double> eps_grid) {
    return threshold_curves(p_cond, q_cond, eps_grid);
}

/**
 * Latent-space vs embedding-space curves from r_{j|i} and q_{j|i}; flagged rows are skipped.
 */
inline RetrievalCurves pr_curve_zy(const LatentAffinity& r_cond, const Matrix& q_cond, std::span<const double> eps_grid) {
    return threshold_curves(r_cond.rows, q_cond, eps_grid, r_cond.excluded);
}

/**
 * For each point, all other indices ordered by increasing distance, ties by lower index.
 */
inline std::vector<std::vector<std::size_t>> distance_rankings(const Matrix& points) {
    const std::size_t m = points.rows();
    const Matrix dist = squared_distances(points);
    std::vector<std::vector<std::size_t>> out(m);
    parallelize(m, [&](std::size_t start, std::size_t length) {
        for (std::size_t i = start; i < start + length; ++i) {
            auto& order = out[i];
            order.reserve(m - 1);
            for (std::size_t j = 0; j < m; ++j) {
                if (j != i) {
                    order.push_back(j);
                }
            }
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist(i, a) < dist(i, b); });
        }
    });
    return out;
}

/**
 * NN-precision(K) = 1/(mK) sum_i |NN_K(y_i) & NN_K(x_i)| and the same with the K farthest
 * neighbors, for each K in `k_grid`. Farthest sets order by decreasing distance, ties by lower index.
 */
inline RetrievalCurves knn_kfn_curve(const Matrix& data, const Matrix& embedding, std::span<const std::size_t> k_grid) {
    const std::size_t m = data.rows();
    if (embedding.rows() != m) {
        throw ParameterError("data and embedding must have the same number of points");
    }
    for (auto k : k_grid) {
        if (k < 1 || k >= m) {
            throw ParameterError("K must satisfy 1 <= K < m");
        }
    }

    const auto rank_x = distance_rankings(data);
    const auto rank_y = distance_rankings(embedding);
    const Matrix dist_x = squared_distances(data);
    const Matrix dist_y = squared_distances(embedding);

    // Farthest-first order: decreasing distance, ties by lower index.
    auto farthest = [&](const Matrix& dist) {
        std::vector<std::vector<std::size_t>> out(m);
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < m; ++j) {
                if (j != i) {
                    out[i].push_back(j);
                }
            }
            std::stable_sort(out[i].begin(), out[i].end(), [&](std::size_t a, std::size_t b) { return dist(i, a) > dist(i, b); });
        }
        return out;
    };
    const auto far_x = farthest(dist_x);
    const auto far_y = farthest(dist_y);

    RetrievalCurves out;
    std::vector<double> nn_rows(m), fn_rows(m);
    std::vector<char> mark(m);
    auto overlap = [&](const std::vector<std::size_t>& a, const std::vector<std::size_t>& b, std::size_t k) {
        std::fill(mark.begin(), mark.end(), 0);
        for (std::size_t t = 0; t < k; ++t) {
            mark[a[t]] = 1;
        }
        std::size_t hits = 0;
        for (std::size_t t = 0; t < k; ++t) {
            hits += mark[b[t]];
        }
        return static_cast<double>(hits);
    };

    for (auto k : k_grid) {
        for (std::size_t i = 0; i < m; ++i) {
            nn_rows[i] = overlap(rank_x[i], rank_y[i], k);
            fn_rows[i] = overlap(far_x[i], far_y[i], k);
        }
        const double denom = static_cast<double>(m) * static_cast<double>(k);
        out.params.push_back(static_cast<double>(k));
        out.precision.push_back(ordered_sum(nn_rows) / denom);
        out.recall.push_back(ordered_sum(fn_rows) / denom);
    }
    detail::finish_curves(out);
    return out;
}

/**
 * @brief Per-point two-level neighbor distributions.
 *
 * For point i with r_i relevant neighbors in the data space and k_i retrieved in the
 * embedding, p_{j|i} is a_i = (1 - delta)/r_i on relevant points and b_i = delta/(m - r_i - 1)
 * elsewhere; q_{j|i} is c_i = (1 - delta)/k_i on retrieved points and d_i = delta/(m - k_i - 1)
 * elsewhere. `true_positives[i]` points are both relevant and retrieved.
 */
struct BinaryNeighborhood {
    std::size_t m = 0;
    std::vector<std::size_t> relevant;
    std::vector<std::size_t> retrieved;
    std::vector<std::size_t> true_positives;
    double delta = 1e-6;

    /** Every one of `points` points shares the same counts. */
    static BinaryNeighborhood uniform(std::size_t m, std::size_t points, std::size_t r, std::size_t k, std::size_t tp, double delta) {
        return { m, std::vector<std::size_t>(points, r), std::vector<std::size_t>(points, k), std::vector<std::size_t>(points, tp), delta };
    }

    void validate() const {
        if (m < 3) {
            throw ParameterError("binary neighborhood needs m >= 3");
        }
        if (!(delta > 0 && delta < 0.5)) {
            throw ParameterError("leakage mass delta must lie in (0, 0.5)");
        }
        if (relevant.size() != retrieved.size() || relevant.size() != true_positives.size() || relevant.empty()) {
            throw ParameterError("per-point counts must have equal, non-zero length");
        }
        for (std::size_t i = 0; i < relevant.size(); ++i) {
            const auto r = relevant[i], k = retrieved[i], tp = true_positives[i];
            if (r < 1 || k < 1 || r > m - 1 || k > m - 1) {
                throw ParameterError("relevant and retrieved counts must lie in [1, m - 1]");
            }
            if (tp > std::min(r, k) || r + k - tp > m - 1) {
                throw ParameterError("inconsistent true-positive count");
            }
        }
    }
};

/**
 * @brief The four cell values and counts of one point.
 */
struct BinaryCells {
    double a, b, c, d;
    double n_tp, n_fn, n_fp, n_tn;
};

inline BinaryCells binary_cells(const BinaryNeighborhood& bn, std::size_t i) {
    const double m = static_cast<double>(bn.m);
    const double r = static_cast<double>(bn.relevant[i]);
    const double k = static_cast<double>(bn.retrieved[i]);
    const double tp = static_cast<double>(bn.true_positives[i]);
    const double delta = bn.delta;
    return {
        (1 - delta) / r, delta / (m - r - 1), (1 - delta) / k, delta / (m - k - 1),
        tp, r - tp, k - tp, m - 1 - r - k + tp
    };
}

/**
 * Exact sum over points of sum_j q_{j|i} f(p_{j|i} / q_{j|i}), evaluated cell by cell:
 * true positives (a, c), false negatives (a, d), false positives (b, c), true negatives (b, d).
 */
inline double binary_divergence(const BinaryNeighborhood& bn, const Divergence& div) {
    bn.validate();
    double total = 0;
    for (std::size_t i = 0; i < bn.relevant.size(); ++i) {
        const auto cell = binary_cells(bn, i);
        auto term = [&](double count, double p, double q) { return count > 0 ? count * q * f(div, p / q) : 0.0; };
        total += term(cell.n_tp, cell.a, cell.c) + term(cell.n_fn, cell.a, cell.d) + term(cell.n_fp, cell.b, cell.c) + term(cell.n_tn, cell.b, cell.d);
    }
    return total;
}

/**
 * Small-delta closed forms, summed over points, with r, k the per-point counts:
 *  - KL:  (n_FN / r) C0,   C0 = log((1 - delta) / delta)
 *  - RKL: (n_FP / k) C0
 *  - JS:  half the sum of the KL and RKL forms
 *  - CH:  (n_TP / k)(1 - delta)(r/k - 1)^2 + (n_FN / r)(1 - delta)((1 - delta)/delta (m - k - 1)/r - 2) + (n_FP / k)(1 - delta)
 *  - HL:  (n_TP / k)(1 - delta)(sqrt(r/k) - 1)^2 + (n_FN / r)(1 - delta)(1 - 2 sqrt(k delta / (1 - delta)))
 *         + (n_FP / k)(1 - delta)(1 - 2 sqrt(r delta / (1 - delta)))
 *  - interpolated: alpha KL + (1 - alpha) RKL.
 */
inline double binary_closed_form(const BinaryNeighborhood& bn, const Divergence& div) {
    bn.validate();
    const double delta = bn.delta;
    const double c0 = std::log((1 - delta) / delta);
    double total = 0;
    for (std::size_t i = 0; i < bn.relevant.size(); ++i) {
        const auto cell = binary_cells(bn, i);
        const double r = static_cast<double>(bn.relevant[i]);
        const double k = static_cast<double>(bn.retrieved[i]);
        const double m = static_cast<double>(bn.m);
        const double kl = cell.n_fn / r * c0;
        const double rkl = cell.n_fp / k * c0;
        switch (div.kind) {
            case DivergenceKind::kl:
                total += kl;
                break;
            case DivergenceKind::rkl:
                total += rkl;
                break;
            case DivergenceKind::js:
                total += 0.5 * (kl + rkl);
                break;
            case DivergenceKind::ch: {
                const double ratio = r / k - 1;
                const double c1 = (1 - delta) / delta * (m - k - 1) / r - 2;
                total += cell.n_tp / k * (1 - delta) * ratio * ratio + cell.n_fn / r * (1 - delta) * c1 + cell.n_fp / k * (1 - delta);
                break;
            }
            case DivergenceKind::hl: {
                const double root = std::sqrt(r / k) - 1;
                const double c1 = 1 - 2 * std::sqrt(k * delta / (1 - delta));
                const double c2 = 1 - 2 * std::sqrt(r * delta / (1 - delta));
                total += cell.n_tp / k * (1 - delta) * root * root + cell.n_fn / r * (1 - delta) * c1 + cell.n_fp / k * (1 - delta) * c2;
                break;
            }
            case DivergenceKind::interpolated:
                total += div.alpha * kl + (1 - div.alpha) * rkl;
                break;
        }
    }
    return total;
}

}

#endif
