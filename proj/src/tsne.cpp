// SPDX-License-Identifier: Apache-2.0
#include "strata/tsne.hpp"

#include "strata/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace strata {

namespace {

constexpr double kAffinityFloor = 1e-12;
constexpr double kEntropyTolerance = 1e-5;
constexpr int kMaxBisectionSteps = 50;

Matrix squared_distances(const Matrix& points) {
    const Vector norms = points.rowwise().squaredNorm();
    Matrix d = (-2.0 * points * points.transpose()).colwise() + norms;
    d.rowwise() += norms.transpose();
    d = d.cwiseMax(0.0);
    d.diagonal().setZero();
    return d;
}

double entropy_at(std::span<const double> shifted, double beta, std::vector<double>& probs) {
    double sum = 0.0;
    for (std::size_t j = 0; j < shifted.size(); ++j) {
        probs[j] = std::exp(-beta * shifted[j]);
        sum += probs[j];
    }
    double weighted = 0.0;
    for (std::size_t j = 0; j < shifted.size(); ++j) {
        probs[j] /= sum;
        weighted += probs[j] * shifted[j];
    }
    return std::log(sum) + beta * weighted;
}

}  // namespace

PerplexityFit perplexity_calibrate(std::span<const double> squared_distances, double perplexity) {
    if (squared_distances.empty()) throw Error("DegenerateRow", "row has no neighbours");
    if (!(perplexity >= 1.0)) throw Error("PerplexityTooLarge", "perplexity must be >= 1");
    const double d_min = *std::min_element(squared_distances.begin(), squared_distances.end());
    const double d_max = *std::max_element(squared_distances.begin(), squared_distances.end());
    if (d_max <= 0.0) throw Error("DegenerateRow", "all distances in the row are zero");

    std::vector<double> shifted(squared_distances.size());
    double mean = 0.0;
    for (std::size_t j = 0; j < shifted.size(); ++j) {
        shifted[j] = squared_distances[j] - d_min;
        mean += shifted[j];
    }
    mean /= static_cast<double>(shifted.size());

    const double target = std::log(perplexity);
    PerplexityFit fit;
    fit.probabilities.resize(shifted.size());
    fit.beta = mean > 0.0 ? 1.0 / mean : 1.0;
    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    fit.entropy = entropy_at(shifted, fit.beta, fit.probabilities);
    while (std::abs(fit.entropy - target) > kEntropyTolerance && fit.steps < kMaxBisectionSteps) {
        if (fit.entropy > target) {
            lo = fit.beta;
            fit.beta = std::isinf(hi) ? fit.beta * 2.0 : 0.5 * (fit.beta + hi);
        } else {
            hi = fit.beta;
            fit.beta = 0.5 * (fit.beta + lo);
        }
        fit.entropy = entropy_at(shifted, fit.beta, fit.probabilities);
        ++fit.steps;
    }
    return fit;
}

Matrix tsne_affinities(const Matrix& points, double perplexity) {
    const auto n = points.rows();
    const Matrix d = squared_distances(points);
    Matrix conditional = Matrix::Zero(n, n);
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t ui) {
        const auto i = static_cast<Eigen::Index>(ui);
        std::vector<double> row;
        row.reserve(static_cast<std::size_t>(n - 1));
        for (Eigen::Index j = 0; j < n; ++j)
            if (j != i) row.push_back(d(i, j));
        const auto fit = perplexity_calibrate(row, perplexity);
        std::size_t k = 0;
        for (Eigen::Index j = 0; j < n; ++j)
            if (j != i) conditional(i, j) = fit.probabilities[k++];
    });
    Matrix p = (conditional + conditional.transpose()) / (2.0 * static_cast<double>(n));
    p = p.cwiseMax(kAffinityFloor);
    p.diagonal().setZero();
    return p;
}

namespace {

/// Student-t kernel with zero diagonal; returns the normalizer.
double student_kernel(const Matrix& layout, Matrix& kernel) {
    kernel = (1.0 + squared_distances(layout).array()).inverse().matrix();
    kernel.diagonal().setZero();
    return kernel.sum();
}

double kl_from_kernel(const Matrix& p, const Matrix& kernel, double normalizer) {
    double kl = 0.0;
    const auto n = p.rows();
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = 0; i < n; ++i) {
            if (i == j) continue;
            const double q = std::max(kernel(i, j) / normalizer, kAffinityFloor);
            kl += p(i, j) * std::log(p(i, j) / q);
        }
    return kl;
}

}  // namespace

double tsne_kl(const Matrix& affinities, const Matrix& layout) {
    Matrix kernel;
    const double z = student_kernel(layout, kernel);
    return kl_from_kernel(affinities, kernel, z);
}

TsneResult tsne_fit(const Matrix& points, const TsneConfig& config) {
    const auto n = points.rows();
    if (n < 4) throw Error("TooFewPoints", "t-SNE needs at least 4 points");
    if (config.out_dims < 1) throw Error("InvalidConfig", "tsne.out_dims must be >= 1");
    if (!(config.perplexity >= 1.0 && config.perplexity < static_cast<double>(n - 1) / 3.0))
        throw Error("PerplexityTooLarge", "perplexity must lie in [1, (N - 1) / 3) for N = " + std::to_string(n));

    const Matrix p = tsne_affinities(points, config.perplexity);

    TsneResult result;
    Rng rng(derive_seed(config.seed, "tsne-init"));
    Matrix y(n, config.out_dims);
    for (Eigen::Index c = 0; c < y.cols(); ++c)
        for (Eigen::Index r = 0; r < n; ++r) y(r, c) = 1e-4 * rng.normal();
    Matrix update = Matrix::Zero(n, config.out_dims);
    Matrix gains = Matrix::Ones(n, config.out_dims);
    Matrix kernel;

    result.kl_history.reserve(static_cast<std::size_t>(config.iterations));
    for (int it = 0; it < config.iterations; ++it) {
        const double z = student_kernel(y, kernel);
        const double kl = kl_from_kernel(p, kernel, z);
        if (it == 0) result.initial_kl = kl;
        else result.kl_history.push_back(kl);

        const double exaggeration = it < config.exaggeration_iterations ? config.early_exaggeration : 1.0;
        const double momentum = it < config.momentum_switch_iteration ? config.initial_momentum : config.final_momentum;
        // grad_i = 4 sum_j (exag p_ij - q_ij) k_ij (y_i - y_j)
        const Matrix w = ((exaggeration * p).array() - kernel.array() / z).matrix().cwiseProduct(kernel);
        const Matrix grad = 4.0 * (w.rowwise().sum().asDiagonal() * y - w * y);

        for (Eigen::Index c = 0; c < y.cols(); ++c)
            for (Eigen::Index r = 0; r < n; ++r) {
                const bool same_sign = (grad(r, c) > 0.0) == (update(r, c) > 0.0);
                gains(r, c) = same_sign ? std::max(gains(r, c) * 0.8, 0.01) : gains(r, c) + 0.2;
            }
        update = momentum * update - config.learning_rate * gains.cwiseProduct(grad);
        y += update;
        y.rowwise() -= y.colwise().mean();
        if (!y.allFinite()) throw Error("NonFiniteActivation", "t-SNE layout diverged", ErrorKind::internal);
    }
    result.kl_history.push_back(tsne_kl(p, y));
    if (config.iterations == 0) result.initial_kl = result.kl_history.back();
    result.layout = std::move(y);
    return result;
}

}  // namespace strata
