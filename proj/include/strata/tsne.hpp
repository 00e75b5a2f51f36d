// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "strata/core.hpp"

#include <vector>

namespace strata {

struct TsneConfig {
    int out_dims = 2;
    double perplexity = 30.0;
    int iterations = 1000;
    double early_exaggeration = 12.0;
    int exaggeration_iterations = 250;
    double learning_rate = 200.0;
    double initial_momentum = 0.5;
    double final_momentum = 0.8;
    int momentum_switch_iteration = 250;
    std::uint64_t seed = 0;
};

struct PerplexityFit {
    double beta = 1.0;           // precision 1 / (2 sigma^2)
    std::vector<double> probabilities;
    double entropy = 0.0;        // natural log
    int steps = 0;
};

/// Bisection on the precision so the conditional distribution over the row's
/// neighbours has entropy log(perplexity) (tolerance 1e-5, at most 50 steps).
/// `squared_distances` excludes the point itself. Throws DegenerateRow.
PerplexityFit perplexity_calibrate(std::span<const double> squared_distances, double perplexity);

/// Symmetrized affinities p_ij = (p_j|i + p_i|j) / 2N, floored at 1e-12.
Matrix tsne_affinities(const Matrix& points, double perplexity);

/// KL(P || Q) for a layout (rows = points) under Student-t similarities.
double tsne_kl(const Matrix& affinities, const Matrix& layout);

struct TsneResult {
    Matrix layout;                   // N x out_dims
    double initial_kl = 0.0;
    std::vector<double> kl_history;  // after each iteration, unexaggerated P
};

/// Exact O(N^2) t-SNE. Rows of `points` are observations.
/// Throws PerplexityTooLarge unless 1 <= perplexity < (N - 1) / 3.
TsneResult tsne_fit(const Matrix& points, const TsneConfig& config);

}  // namespace strata
