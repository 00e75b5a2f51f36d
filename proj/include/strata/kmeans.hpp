// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "strata/core.hpp"
#include "strata/parallel.hpp"

#include <limits>
#include <vector>

namespace strata {

struct KmeansConfig {
    int max_iter = 300;
    double tol = 1e-6;
    int n_init = 10;
};

template <typename Scalar>
struct KmeansResultT {
    std::vector<int> assignments;     // point -> cluster id in [0, k)
    MatrixX<Scalar> centroids;        // k x d
    Scalar inertia = 0;
    int iterations_run = 0;
    int best_restart = 0;
    /// Inertia after every Lloyd update, one list per restart.
    std::vector<std::vector<Scalar>> inertia_history;

    Eigen::Index k() const { return centroids.rows(); }
};
using KmeansResult = KmeansResultT<double>;

namespace detail {

// Below this many distance terms per pass, thread start-up costs more than it saves.
inline constexpr Eigen::Index kParallelWork = 1 << 18;

/// Nearest centroid; ties resolve to the lowest cluster id.
template <typename PointT, typename Scalar>
std::pair<int, Scalar> nearest_centroid(const PointT& point, const MatrixX<Scalar>& centroids) {
    int best = 0;
    Scalar best_d = std::numeric_limits<Scalar>::infinity();
    for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
        const Scalar d = (centroids.row(c) - point).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(c);
        }
    }
    return {best, best_d};
}

template <typename Derived>
MatrixX<typename Derived::Scalar> kmeanspp_seeds(const Eigen::MatrixBase<Derived>& x, int k, Rng& rng) {
    using Scalar = typename Derived::Scalar;
    const auto n = x.rows();
    MatrixX<Scalar> centroids(k, x.cols());
    std::vector<double> min_d(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
    auto first = static_cast<Eigen::Index>(rng.uniform_int(0, static_cast<long>(n) - 1));
    centroids.row(0) = x.row(first);
    for (int c = 1; c <= k; ++c) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const double d = static_cast<double>((x.row(i) - centroids.row(c - 1)).squaredNorm());
            min_d[static_cast<std::size_t>(i)] = std::min(min_d[static_cast<std::size_t>(i)], d);
        }
        if (c == k) break;
        centroids.row(c) = x.row(static_cast<Eigen::Index>(rng.discrete(min_d)));
    }
    return centroids;
}

template <typename Derived>
KmeansResultT<typename Derived::Scalar> lloyd(const Eigen::MatrixBase<Derived>& x,
                                             MatrixX<typename Derived::Scalar> centroids,
                                             const KmeansConfig& config) {
    using Scalar = typename Derived::Scalar;
    const auto n = x.rows();
    const auto k = centroids.rows();
    KmeansResultT<Scalar> r;
    r.assignments.assign(static_cast<std::size_t>(n), 0);
    r.inertia_history.emplace_back();
    std::vector<Scalar> dist(static_cast<std::size_t>(n));

    for (int iter = 0; iter < std::max(config.max_iter, 1); ++iter) {
        auto assign = [&](std::size_t i) {
            const auto [c, d] = nearest_centroid(x.row(static_cast<Eigen::Index>(i)), centroids);
            r.assignments[i] = c;
            dist[i] = d;
        };
        if (n * k * x.cols() >= kParallelWork) parallel_for(static_cast<std::size_t>(n), assign);
        else for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) assign(i);
        // Empty clusters take the point farthest from its centroid among
        // clusters that can spare one.
        std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
        for (int a : r.assignments) ++counts[static_cast<std::size_t>(a)];
        for (Eigen::Index c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) continue;
            Eigen::Index far = -1;
            for (Eigen::Index i = 0; i < n; ++i) {
                const auto a = static_cast<std::size_t>(r.assignments[static_cast<std::size_t>(i)]);
                if (counts[a] < 2) continue;
                if (far < 0 || dist[static_cast<std::size_t>(i)] > dist[static_cast<std::size_t>(far)]) far = i;
            }
            // Nothing to gain when every point already sits on its centroid.
            if (far < 0 || !(dist[static_cast<std::size_t>(far)] > 0)) break;
            --counts[static_cast<std::size_t>(r.assignments[static_cast<std::size_t>(far)])];
            r.assignments[static_cast<std::size_t>(far)] = static_cast<int>(c);
            dist[static_cast<std::size_t>(far)] = 0;
            counts[static_cast<std::size_t>(c)] = 1;
        }

        MatrixX<Scalar> updated = MatrixX<Scalar>::Zero(k, x.cols());
        for (Eigen::Index i = 0; i < n; ++i) updated.row(r.assignments[static_cast<std::size_t>(i)]) += x.row(i);
        for (Eigen::Index c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) updated.row(c) /= static_cast<Scalar>(counts[static_cast<std::size_t>(c)]);
            else updated.row(c) = centroids.row(c);
        }
        Scalar shift = 0;
        for (Eigen::Index c = 0; c < k; ++c) shift = std::max(shift, (updated.row(c) - centroids.row(c)).norm());
        centroids = std::move(updated);

        Scalar inertia = 0;
        for (Eigen::Index i = 0; i < n; ++i)
            inertia += (x.row(i) - centroids.row(r.assignments[static_cast<std::size_t>(i)])).squaredNorm();
        r.inertia_history.back().push_back(inertia);
        r.inertia = inertia;
        r.iterations_run = iter + 1;
        if (shift < config.tol) break;
    }
    r.centroids = std::move(centroids);
    return r;
}

}  // namespace detail

/// k-means++ seeding followed by Lloyd iterations; best of n_init restarts
/// by inertia (ties to the earlier restart). Restart r draws from the
/// sub-stream derive_seed(seed, "kmeans", r). Rows of `points` are points.
template <typename Derived>
KmeansResultT<typename Derived::Scalar> kmeans_fit(const Eigen::MatrixBase<Derived>& points, int k,
                                                  std::uint64_t seed, const KmeansConfig& config = {}) {
    const auto n = points.rows();
    if (k < 1) throw Error("InvalidArgument", "k must be >= 1");
    if (k > n) throw Error("KGreaterThanN", "k = " + std::to_string(k) + " exceeds N = " + std::to_string(n));
    KmeansResultT<typename Derived::Scalar> best;
    std::vector<std::vector<typename Derived::Scalar>> histories;
    for (int restart = 0; restart < std::max(config.n_init, 1); ++restart) {
        Rng rng(derive_seed(seed, "kmeans", static_cast<std::uint64_t>(restart)));
        auto r = detail::lloyd(points, detail::kmeanspp_seeds(points, k, rng), config);
        histories.push_back(r.inertia_history.front());
        if (restart == 0 || r.inertia < best.inertia) {
            best = std::move(r);
            best.best_restart = restart;
        }
    }
    best.inertia_history = std::move(histories);
    return best;
}

/// Nearest-centroid assignment of new points (same tie-break as fitting).
template <typename Scalar, typename Derived>
std::vector<int> kmeans_predict(const KmeansResultT<Scalar>& model, const Eigen::MatrixBase<Derived>& points) {
    if (points.cols() != model.centroids.cols())
        throw Error("DimMismatch", "points have " + std::to_string(points.cols()) + " dims, centroids " +
                                       std::to_string(model.centroids.cols()));
    std::vector<int> out(static_cast<std::size_t>(points.rows()));
    for (Eigen::Index i = 0; i < points.rows(); ++i)
        out[static_cast<std::size_t>(i)] = detail::nearest_centroid(points.row(i), model.centroids).first;
    return out;
}

/// Sum of squared distances of each point to its assigned centroid.
template <typename Derived, typename Scalar>
Scalar kmeans_inertia(const Eigen::MatrixBase<Derived>& points, std::span<const int> assignments,
                      const MatrixX<Scalar>& centroids) {
    Scalar total = 0;
    for (Eigen::Index i = 0; i < points.rows(); ++i)
        total += (points.row(i) - centroids.row(assignments[static_cast<std::size_t>(i)])).squaredNorm();
    return total;
}

}  // namespace strata
