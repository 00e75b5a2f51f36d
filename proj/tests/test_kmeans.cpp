// SPDX-License-Identifier: Apache-2.0
#include "strata/kmeans.hpp"

#include <doctest.h>

#include <algorithm>
#include <map>
#include <numeric>

using namespace strata;

namespace {

// Minimum within-cluster sum of squares over every 2-partition.
double best_two_partition(const Matrix& x) {
    const auto n = x.rows();
    double best = std::numeric_limits<double>::infinity();
    for (unsigned mask = 1; mask + 1 < (1u << n); ++mask) {
        double total = 0;
        for (int side = 0; side < 2; ++side) {
            Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(x.cols());
            int count = 0;
            for (Eigen::Index i = 0; i < n; ++i)
                if (((mask >> i) & 1u) == static_cast<unsigned>(side)) mean += x.row(i), ++count;
            mean /= count;
            for (Eigen::Index i = 0; i < n; ++i)
                if (((mask >> i) & 1u) == static_cast<unsigned>(side)) total += (x.row(i) - mean).squaredNorm();
        }
        best = std::min(best, total);
    }
    return best;
}

Matrix blobs(int per_blob, int k, std::uint64_t seed) {
    Rng rng(seed);
    Matrix x(per_blob * k, 3);
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = 0; j < 3; ++j) x(i, j) = 0.3 * rng.normal() + 20.0 * static_cast<double>(i / per_blob) * (j == 0);
    return x;
}

// Same partition up to relabeling.
bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
    std::map<int, int> ab, ba;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (ab.emplace(a[i], b[i]).first->second != b[i]) return false;
        if (ba.emplace(b[i], a[i]).first->second != a[i]) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("1-D four points reach the exhaustive optimum") {
    Matrix x(4, 1);
    x << 0, 1, 10, 11;
    const auto r = kmeans_fit(x, 2, 1);
    CHECK(r.inertia == doctest::Approx(1.0));
    CHECK(best_two_partition(x) == doctest::Approx(1.0));
    CHECK(r.assignments[0] == r.assignments[1]);
    CHECK(r.assignments[2] == r.assignments[3]);
    CHECK(r.assignments[0] != r.assignments[2]);
}

TEST_CASE("random small sets match the exhaustive 2-partition") {
    for (std::uint64_t s = 0; s < 10; ++s) {
        Rng rng(s);
        Matrix x(8, 2);
        for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.normal();
        const auto r = kmeans_fit(x, 2, s, {300, 1e-12, 20});
        CHECK(r.inertia == doctest::Approx(best_two_partition(x)).epsilon(1e-9));
    }
}

TEST_CASE("k = N and k = 1") {
    Matrix x(5, 2);
    x << 0, 0, 1, 2, 3, 1, -1, 4, 2, 2;
    CHECK(kmeans_fit(x, 5, 2).inertia == doctest::Approx(0.0));
    const auto one = kmeans_fit(x, 1, 2);
    CHECK((one.centroids.row(0) - x.colwise().mean()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("nearest centroid ties go to the lowest id") {
    Matrix c(2, 1);
    c << -1, 1;
    Eigen::RowVectorXd p(1);
    p << 0;
    CHECK(detail::nearest_centroid(p, c).first == 0);
}

TEST_CASE("inertia never increases and matches a recomputation") {
    const auto x = blobs(30, 4, 7);
    const auto r = kmeans_fit(x, 4, 9, {300, 1e-9, 5});
    for (const auto& h : r.inertia_history)
        for (std::size_t i = 1; i < h.size(); ++i) CHECK(h[i] <= h[i - 1] + 1e-9);
    CHECK(std::abs(kmeans_inertia(x, std::span<const int>(r.assignments), r.centroids) - r.inertia) < 1e-9);
    CHECK(kmeans_predict(r, x) == r.assignments);
}

TEST_CASE("partition does not depend on row order") {
    const auto x = blobs(25, 3, 8);
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(x.rows()));
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(1);
    shuffle(std::span<Eigen::Index>(perm), rng);
    Matrix y(x.rows(), x.cols());
    for (std::size_t i = 0; i < perm.size(); ++i) y.row(static_cast<Eigen::Index>(i)) = x.row(perm[i]);

    const auto a = kmeans_fit(x, 3, 4);
    const auto b = kmeans_fit(y, 3, 4);
    std::vector<int> back(a.assignments.size());
    for (std::size_t i = 0; i < perm.size(); ++i) back[static_cast<std::size_t>(perm[i])] = b.assignments[i];
    CHECK(same_partition(a.assignments, back));
    CHECK(a.inertia == doctest::Approx(b.inertia).epsilon(1e-9));
}

TEST_CASE("same seed, same result") {
    const auto x = blobs(20, 3, 2);
    const auto a = kmeans_fit(x, 3, 11);
    const auto b = kmeans_fit(x, 3, 11);
    CHECK(a.assignments == b.assignments);
    CHECK(a.centroids == b.centroids);
}

TEST_CASE("k-means errors") {
    Matrix x = Matrix::Zero(3, 2);
    CHECK_THROWS_WITH_AS(kmeans_fit(x, 4, 0), doctest::Contains("KGreaterThanN"), Error);
    const auto r = kmeans_fit(x, 2, 0);
    CHECK_THROWS_WITH_AS(kmeans_predict(r, Matrix::Zero(2, 3)), doctest::Contains("DimMismatch"), Error);
}
