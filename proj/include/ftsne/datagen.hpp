#ifndef FTSNE_DATAGEN_HPP
#define FTSNE_DATAGEN_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "affinity.hpp"
#include "common.hpp"

/**
 * @file datagen.hpp
 *
 * @brief Synthetic benchmark datasets with known latent structure.
 */

namespace ftsne {

/**
 * 3-D Swiss roll. Each point has t ~ U(1.5 pi, 4.5 pi) and height h ~ U(0, 21), sits at
 * (t cos t, h, t sin t) plus N(0, noise^2) noise per coordinate, and is labelled with t.
 */
inline Dataset swiss_roll(std::size_t m, double noise, std::uint64_t seed) {
    if (m < 10) {
        throw ParameterError("swiss roll needs at least 10 points");
    }
    if (!(noise >= 0)) {
        throw ParameterError("noise must be non-negative");
    }

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> angle(1.5 * std::numbers::pi, 4.5 * std::numbers::pi);
    std::uniform_real_distribution<double> height(0.0, 21.0);
    std::normal_distribution<double> jitter(0.0, 1.0);

    Dataset out{ Matrix(m, 3), Matrix(m, 1) };
    for (std::size_t i = 0; i < m; ++i) {
        const double t = angle(rng);
        const double h = height(rng);
        out.points(i, 0) = t * std::cos(t);
        out.points(i, 1) = h;
        out.points(i, 2) = t * std::sin(t);
        (*out.labels)(i, 0) = t;
    }
    if (noise > 0) {
        for (auto& v : out.points.values()) {
            v += noise * jitter(rng);
        }
    }
    return out;
}

/**
 * Three isotropic 2-D Gaussian blobs centred on the vertices of an equilateral triangle
 * with side `separation` (centroid at the origin). Points are grouped by blob; blob sizes
 * are floor(m/3) with the remainder going to blobs 0, 1 in turn. Labels are 0, 1, 2.
 */
inline Dataset gaussian_blobs(std::size_t m, double separation, double stddev, std::uint64_t seed) {
    if (m < 10) {
        throw ParameterError("gaussian blobs need at least 10 points");
    }
    if (!(separation >= 0) || !(stddev >= 0)) {
        throw ParameterError("separation and standard deviation must be non-negative");
    }

    const double radius = separation / std::sqrt(3.0);
    double centers[3][2];
    for (int c = 0; c < 3; ++c) {
        const double theta = std::numbers::pi / 2 + 2 * std::numbers::pi * c / 3;
        centers[c][0] = radius * std::cos(theta);
        centers[c][1] = radius * std::sin(theta);
    }

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Dataset out{ Matrix(m, 2), Matrix(m, 1) };
    std::size_t i = 0;
    for (std::size_t c = 0; c < 3; ++c) {
        const std::size_t count = m / 3 + (c < m % 3 ? 1 : 0);
        for (std::size_t n = 0; n < count; ++n, ++i) {
            out.points(i, 0) = centers[c][0] + stddev * normal(rng);
            out.points(i, 1) = centers[c][1] + stddev * normal(rng);
            (*out.labels)(i, 0) = static_cast<double>(c);
        }
    }
    return out;
}

}

#endif
