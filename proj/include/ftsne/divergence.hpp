#ifndef FTSNE_DIVERGENCE_HPP
#define FTSNE_DIVERGENCE_HPP

#include <cmath>
#include <cctype>
#include <limits>
#include <numbers>
#include <string>
#include <string_view>

#include "affinity.hpp"
#include "common.hpp"

/**
 * @file divergence.hpp
 *
 * @brief The f-divergence family used as embedding objectives.
 *
 * Each divergence is defined by a convex generator f with f(1) = 0, so that
 * D_f(P||Q) = sum_{i != j} q_ij f(p_ij / q_ij). The variational form also needs
 * the Fenchel conjugate f* and an output activation h that maps an unconstrained
 * score into the domain of f*.
 */

namespace ftsne {

enum class DivergenceKind { kl, rkl, js, ch, hl, interpolated };

/**
 * @brief An f-divergence instance.
 *
 * `alpha` is only meaningful for `DivergenceKind::interpolated`, where the generator
 * is alpha * f_KL + (1 - alpha) * f_RKL.
 */
struct Divergence {
    DivergenceKind kind = DivergenceKind::kl;
    double alpha = 1;

    static Divergence kl() { return { DivergenceKind::kl, 1 }; }
    static Divergence rkl() { return { DivergenceKind::rkl, 1 }; }
    static Divergence js() { return { DivergenceKind::js, 1 }; }
    static Divergence ch() { return { DivergenceKind::ch, 1 }; }
    static Divergence hl() { return { DivergenceKind::hl, 1 }; }

    static Divergence interpolated(double alpha) {
        if (!(alpha >= 0 && alpha <= 1)) {
            throw ParameterError("interpolation weight must lie in [0, 1]");
        }
        return { DivergenceKind::interpolated, alpha };
    }

    bool has_conjugate() const { return kind != DivergenceKind::interpolated; }

    bool operator==(const Divergence&) const = default;
};

/**
 * Short name: `kl`, `rkl`, `js`, `ch`, `hl` or `interp:<alpha>`.
 */
inline std::string to_string(const Divergence& div) {
    switch (div.kind) {
        case DivergenceKind::kl: return "kl";
        case DivergenceKind::rkl: return "rkl";
        case DivergenceKind::js: return "js";
        case DivergenceKind::ch: return "ch";
        case DivergenceKind::hl: return "hl";
        case DivergenceKind::interpolated: break;
    }
    std::string a = std::to_string(div.alpha);
    a.erase(a.find_last_not_of('0') + 1);
    if (!a.empty() && a.back() == '.') {
        a.pop_back();
    }
    return "interp:" + a;
}

/**
 * Inverse of `to_string()`; case-insensitive on the kind.
 */
inline Divergence parse_divergence(std::string_view text) {
    std::string lower(text);
    for (auto& c : lower) {
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    if (lower == "kl") return Divergence::kl();
    if (lower == "rkl") return Divergence::rkl();
    if (lower == "js") return Divergence::js();
    if (lower == "ch") return Divergence::ch();
    if (lower == "hl") return Divergence::hl();
    if (lower.rfind("interp:", 0) == 0) {
        const std::string rest = lower.substr(7);
        std::size_t used = 0;
        double alpha = 0;
        try {
            alpha = std::stod(rest, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != rest.size()) {
            throw ParameterError("malformed interpolation weight in '" + std::string(text) + "'");
        }
        return Divergence::interpolated(alpha);
    }
    throw ParameterError("unknown divergence '" + std::string(text) + "'");
}

namespace detail {

inline void require_positive(double t) {
    if (!(t > 0)) {
        throw DomainError("f-divergence generator requires t > 0");
    }
}

inline double softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

// Largest doubles strictly inside the conjugate domains of JS (u < log 2) and HL (u < 1).
inline const double js_ceiling = std::nextafter(std::numbers::ln2, 0.0);
inline const double hl_ceiling = std::nextafter(1.0, 0.0);

}

/**
 * Generator f(t) for t > 0.
 */
inline double f(const Divergence& div, double t) {
    detail::require_positive(t);
    switch (div.kind) {
        case DivergenceKind::kl:
            return t * std::log(t);
        case DivergenceKind::rkl:
            return -std::log(t);
        case DivergenceKind::js:
            return (t + 1) * std::log(2 / (t + 1)) + t * std::log(t);
        case DivergenceKind::ch:
            return (t - 1) * (t - 1);
        case DivergenceKind::hl: {
            const double r = std::sqrt(t) - 1;
            return r * r;
        }
        case DivergenceKind::interpolated:
            return div.alpha * (t * std::log(t)) - (1 - div.alpha) * std::log(t);
    }
    return 0;
}

/**
 * Analytic derivative f'(t) for t > 0.
 */
inline double f_prime(const Divergence& div, double t) {
    detail::require_positive(t);
    switch (div.kind) {
        case DivergenceKind::kl:
            return 1 + std::log(t);
        case DivergenceKind::rkl:
            return -1 / t;
        case DivergenceKind::js:
            return std::log(2 * t / (1 + t));
        case DivergenceKind::ch:
            return 2 * (t - 1);
        case DivergenceKind::hl:
            return 1 - 1 / std::sqrt(t);
        case DivergenceKind::interpolated:
            return div.alpha * (1 + std::log(t)) - (1 - div.alpha) / t;
    }
    return 0;
}

/**
 * Fenchel conjugate f*(u) = sup_t (t u - f(t)).
 *
 * Domains: KL and CH all reals; RKL u < 0; JS u < log 2; HL u < 1.
 * @throws DomainError outside the domain.
 * @throws UnsupportedConfigurationError for the interpolated family.
 */
inline double conjugate(const Divergence& div, double u) {
    switch (div.kind) {
        case DivergenceKind::kl:
            return std::exp(u - 1);
        case DivergenceKind::rkl:
            if (!(u < 0)) {
                throw DomainError("rkl conjugate requires u < 0");
            }
            return -1 - std::log(-u);
        case DivergenceKind::js:
            if (!(u < std::numbers::ln2)) {
                throw DomainError("js conjugate requires u < log 2");
            }
            // -log(2 - e^u) written so that u close to log 2 keeps its precision.
            return -std::numbers::ln2 - std::log(-std::expm1(u - std::numbers::ln2));
        case DivergenceKind::hl:
            if (!(u < 1)) {
                throw DomainError("hl conjugate requires u < 1");
            }
            return u / (1 - u);
        case DivergenceKind::ch:
            return u * u / 4 + u;
        case DivergenceKind::interpolated:
            break;
    }
    throw UnsupportedConfigurationError("interpolated divergences have no conjugate");
}

/**
 * Derivative of `conjugate()` with respect to u, on the same domain.
 */
inline double conjugate_prime(const Divergence& div, double u) {
    switch (div.kind) {
        case DivergenceKind::kl:
            return std::exp(u - 1);
        case DivergenceKind::rkl:
            if (!(u < 0)) {
                throw DomainError("rkl conjugate requires u < 0");
            }
            return -1 / u;
        case DivergenceKind::js:
            if (!(u < std::numbers::ln2)) {
                throw DomainError("js conjugate requires u < log 2");
            }
            return std::exp(u) / (-2 * std::expm1(u - std::numbers::ln2));
        case DivergenceKind::hl:
            if (!(u < 1)) {
                throw DomainError("hl conjugate requires u < 1");
            }
            return 1 / ((1 - u) * (1 - u));
        case DivergenceKind::ch:
            return u / 2 + 1;
        case DivergenceKind::interpolated:
            break;
    }
    throw UnsupportedConfigurationError("interpolated divergences have no conjugate");
}

/**
 * Output activation h mapping a raw score into the conjugate's domain.
 *
 * JS and HL approach their open domain bound exponentially fast; once the result
 * would round onto the bound it saturates at the largest double inside the domain,
 * and `activation_prime()` is zero there.
 */
inline double activation(const Divergence& div, double raw) {
    switch (div.kind) {
        case DivergenceKind::kl:
        case DivergenceKind::ch:
            return raw;
        case DivergenceKind::rkl:
            return -std::exp(-raw);
        case DivergenceKind::js:
            return std::min(std::numbers::ln2 - detail::softplus(-raw), detail::js_ceiling);
        case DivergenceKind::hl:
            return std::min(-std::expm1(-raw), detail::hl_ceiling);
        case DivergenceKind::interpolated:
            break;
    }
    throw UnsupportedConfigurationError("interpolated divergences have no output activation");
}

inline double activation_prime(const Divergence& div, double raw) {
    switch (div.kind) {
        case DivergenceKind::kl:
        case DivergenceKind::ch:
            return 1;
        case DivergenceKind::rkl:
            return std::exp(-raw);
        case DivergenceKind::js:
            if (std::numbers::ln2 - detail::softplus(-raw) >= detail::js_ceiling) {
                return 0;
            }
            return 1 / (1 + std::exp(raw));
        case DivergenceKind::hl:
            if (-std::expm1(-raw) >= detail::hl_ceiling) {
                return 0;
            }
            return std::exp(-raw);
        case DivergenceKind::interpolated:
            break;
    }
    throw UnsupportedConfigurationError("interpolated divergences have no output activation");
}

/**
 * @brief Contribution of one pair to D_f and its sensitivity to q.
 */
struct PairTerm {
    /** q f(p/q) */
    double loss;

    /** d[q f(p/q)]/dq = f(p/q) - (p/q) f'(p/q) */
    double dq;
};

/**
 * Evaluates a single pair term for p >= 0, q > 0, using the p -> 0 limits
 * (q f(0+) and f(0+)) when p is zero. The limit is +inf for RKL.
 */
inline PairTerm pair_term(const Divergence& div, double p, double q) {
    if (p > 0) {
        const double t = p / q;
        const double ft = f(div, t);
        return { q * ft, ft - t * f_prime(div, t) };
    }

    // t f'(t) -> 0 as t -> 0 for every generator except those containing -log t.
    double f0 = 0;
    switch (div.kind) {
        case DivergenceKind::kl:
            f0 = 0;
            break;
        case DivergenceKind::js:
            f0 = std::numbers::ln2;
            break;
        case DivergenceKind::ch:
        case DivergenceKind::hl:
            f0 = 1;
            break;
        case DivergenceKind::rkl:
            f0 = std::numeric_limits<double>::infinity();
            break;
        case DivergenceKind::interpolated:
            f0 = div.alpha == 1 ? 0 : std::numeric_limits<double>::infinity();
            break;
    }
    return { q * f0, f0 };
}

/**
 * D_f(P||Q) = sum_{i != j} q_ij f(p_ij / q_ij).
 *
 * Returns +inf when a zero p_ij makes the term unbounded (RKL).
 * @throws NumericError if the sum is NaN.
 */
inline double primal_divergence(const Divergence& div, const Matrix& p, const Matrix& q) {
    if (p.rows() != q.rows() || p.cols() != q.cols()) {
        throw ParameterError("P and Q must have the same shape");
    }
    const std::size_t m = p.rows();
    std::vector<double> partial(m, 0);
    parallelize(m, [&](std::size_t start, std::size_t length) {
        for (std::size_t i = start; i < start + length; ++i) {
            double acc = 0;
            for (std::size_t j = 0; j < p.cols(); ++j) {
                if (j != i) {
                    acc += pair_term(div, p(i, j), q(i, j)).loss;
                }
            }
            partial[i] = acc;
        }
    });
    const double out = ordered_sum(partial);
    if (std::isnan(out)) {
        throw NumericError("f-divergence evaluated to NaN");
    }
    return out;
}

inline double primal_divergence(const Divergence& div, const AffinityMatrix& p, const AffinityMatrix& q) {
    return primal_divergence(div, p.probs, q.probs);
}

/**
 * @brief Pairwise loss and q-gradient surfaces over a (p, q) grid.
 *
 * Entry (a, b) corresponds to p = p_values[a] and q = q_values[b].
 */
struct HeatmapGrids {
    std::vector<double> p_values;
    std::vector<double> q_values;
    Matrix loss;
    Matrix gradient;
};

inline std::vector<double> log_spaced(double lo, double hi, std::size_t n) {
    std::vector<double> out(n);
    const double a = std::log(lo), b = std::log(hi);
    for (std::size_t k = 0; k < n; ++k) {
        out[k] = (n == 1 ? lo : std::exp(a + (b - a) * static_cast<double>(k) / static_cast<double>(n - 1)));
    }
    if (n > 1) {
        out.front() = lo;
        out.back() = hi;
    }
    return out;
}

/**
 * Evaluates q f(p/q) and its derivative f(p/q) - (p/q) f'(p/q) on a log-spaced
 * `resolution` x `resolution` grid.
 */
inline HeatmapGrids heatmap_grids(const Divergence& div, double p_min, double p_max, double q_min, double q_max, std::size_t resolution) {
    if (!(p_min > 0 && q_min > 0 && p_max >= p_min && q_max >= q_min)) {
        throw ParameterError("heatmap ranges must be positive and ordered");
    }
    if (resolution < 2) {
        throw ParameterError("heatmap resolution must be at least 2");
    }

    HeatmapGrids out;
    out.p_values = log_spaced(p_min, p_max, resolution);
    out.q_values = log_spaced(q_min, q_max, resolution);
    out.loss = Matrix(resolution, resolution);
    out.gradient = Matrix(resolution, resolution);
    for (std::size_t a = 0; a < resolution; ++a) {
        for (std::size_t b = 0; b < resolution; ++b) {
            const auto term = pair_term(div, out.p_values[a], out.q_values[b]);
            out.loss(a, b) = term.loss;
            out.gradient(a, b) = term.dq;
        }
    }
    return out;
}

}

#endif
