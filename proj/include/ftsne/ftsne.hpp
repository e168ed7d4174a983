#ifndef FTSNE_FTSNE_HPP
#define FTSNE_FTSNE_HPP

/**
 * @file ftsne.hpp
 *
 * @brief Umbrella header for f-divergence stochastic neighbor embedding.
 */

#include "common.hpp"
#include "affinity.hpp"
#include "divergence.hpp"
#include "primal.hpp"
#include "discriminator.hpp"
#include "variational.hpp"
#include "metrics.hpp"
#include "datagen.hpp"

#endif
