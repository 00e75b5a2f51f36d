// SPDX-License-Identifier: Apache-2.0
#include "strata/metrics.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

using namespace strata;

namespace {

double entropy_of(const std::vector<int>& v) {
    std::map<int, double> n;
    for (int x : v) n[x] += 1;
    double h = 0;
    for (auto [_, c] : n) h -= c / static_cast<double>(v.size()) * std::log(c / static_cast<double>(v.size()));
    return h;
}

double joint_entropy(const std::vector<int>& a, const std::vector<int>& b) {
    std::vector<int> joint(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) joint[i] = a[i] * 1000 + b[i];
    return entropy_of(joint);
}

double mi_of(const std::vector<int>& a, const std::vector<int>& b) {
    return entropy_of(a) + entropy_of(b) - joint_entropy(a, b);
}

// E[MI] by averaging over every permutation of the predicted labels.
double brute_expected_mi(const std::vector<int>& a, std::vector<int> b) {
    std::sort(b.begin(), b.end());
    double sum = 0;
    long count = 0;
    std::vector<std::size_t> idx(b.size());
    std::iota(idx.begin(), idx.end(), 0);
    do {
        std::vector<int> p(b.size());
        for (std::size_t i = 0; i < b.size(); ++i) p[i] = b[idx[i]];
        sum += mi_of(a, p);
        ++count;
    } while (std::next_permutation(idx.begin(), idx.end()));
    return sum / static_cast<double>(count);
}

double brute_ami(const std::vector<int>& a, const std::vector<int>& b) {
    const double emi = brute_expected_mi(a, b);
    return (mi_of(a, b) - emi) / (0.5 * (entropy_of(a) + entropy_of(b)) - emi);
}

}  // namespace

TEST_CASE("v-measure examples") {
    const std::vector<int> t{0, 0, 1, 1};
    const auto perfect = v_measure(t, std::vector<int>{1, 1, 0, 0});
    CHECK(perfect.v == doctest::Approx(1.0));
    const auto single = v_measure(t, std::vector<int>{0, 0, 0, 0});
    CHECK(single.homogeneity == 0.0);
    CHECK(single.v == 0.0);

    const std::vector<int> p{0, 0, 0, 1};
    const auto r = v_measure(t, p);
    const double h = 1 - (joint_entropy(t, p) - entropy_of(p)) / entropy_of(t);
    const double c = 1 - (joint_entropy(t, p) - entropy_of(t)) / entropy_of(p);
    CHECK(r.homogeneity == doctest::Approx(h).epsilon(1e-12));
    CHECK(r.completeness == doctest::Approx(c).epsilon(1e-12));
    CHECK(r.v == doctest::Approx(2 * h * c / (h + c)).epsilon(1e-12));
    CHECK(r.homogeneity == doctest::Approx(0.3113).epsilon(1e-3));
    CHECK(r.completeness == doctest::Approx(0.3837).epsilon(1e-3));
    CHECK(r.v == doctest::Approx(0.3437).epsilon(1e-3));
}

TEST_CASE("v-measure errors") {
    CHECK_THROWS_WITH_AS(v_measure(std::vector<int>{0, 1}, std::vector<int>{0}), doctest::Contains("LengthMismatch"),
                         Error);
    CHECK_THROWS_WITH_AS(v_measure(std::vector<int>{}, std::vector<int>{}), doctest::Contains("Empty"), Error);
}

TEST_CASE("expected MI of the 2x2 table [[2,1],[1,2]]") {
    const std::vector<int> a{0, 0, 0, 1, 1, 1};
    const std::vector<int> b{0, 0, 1, 0, 1, 1};
    const auto table = ContingencyTable::from_labels(a, b);
    CHECK(table.counts(0, 0) == 2);
    CHECK(table.counts(0, 1) == 1);
    CHECK(expected_mutual_information(table) == doctest::Approx(brute_expected_mi(a, b)).epsilon(1e-9));
    CHECK(mutual_information(table) == doctest::Approx(mi_of(a, b)).epsilon(1e-12));
    CHECK(ami(a, b) == doctest::Approx(brute_ami(a, b)).epsilon(1e-9));
}

TEST_CASE("AMI matches the permutation oracle on random tables") {
    Rng rng(5);
    int checked = 0;
    while (checked < 20) {
        const auto n = static_cast<std::size_t>(rng.uniform_int(5, 8));
        std::vector<int> a(n), b(n);
        for (auto& v : a) v = static_cast<int>(rng.uniform_int(0, 2));
        for (auto& v : b) v = static_cast<int>(rng.uniform_int(0, 2));
        if (entropy_of(a) == 0 || entropy_of(b) == 0 || a == b) continue;
        const double denom = 0.5 * (entropy_of(a) + entropy_of(b)) - brute_expected_mi(a, b);
        if (std::abs(denom) < 1e-9) continue;
        CAPTURE(checked);
        CHECK(expected_mutual_information(ContingencyTable::from_labels(a, b)) ==
              doctest::Approx(brute_expected_mi(a, b)).epsilon(1e-9));
        CHECK(ami(a, b) == doctest::Approx(brute_ami(a, b)).epsilon(1e-9));
        ++checked;
    }
}

TEST_CASE("AMI properties") {
    const std::vector<int> a{0, 0, 1, 1, 2, 2};
    CHECK(ami(a, a) == doctest::Approx(1.0));
    CHECK(ami(a, std::vector<int>{5, 5, 3, 3, 9, 9}) == doctest::Approx(1.0));

    Rng rng(2024);
    std::vector<int> t(2000), p(2000);
    for (std::size_t i = 0; i < t.size(); ++i) {
        t[i] = i < 1000 ? 0 : 1;
        p[i] = static_cast<int>(rng.uniform_int(0, 1));
    }
    CHECK(std::abs(ami(t, p)) < 0.05);

    std::vector<int> q(2000);
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = static_cast<int>((i * 7 + i / 3) % 3);
    CHECK(ami(t, q) == doctest::Approx(ami(q, t)).epsilon(1e-12));
    std::vector<int> relabeled(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) relabeled[i] = 10 - q[i];
    CHECK(ami(t, q) == doctest::Approx(ami(t, relabeled)).epsilon(1e-12));
}

TEST_CASE("top-1 accuracy") {
    CHECK(accuracy(std::vector<int>{0, 1, 2}, std::vector<int>{0, 1, 1}) == doctest::Approx(2.0 / 3.0));
    const std::vector<std::string> t{"A", "B", "A"}, p{"A", "A", "A"};
    CHECK(accuracy(t, p) == doctest::Approx(2.0 / 3.0));
    CHECK_THROWS_WITH_AS(accuracy(std::vector<int>{0}, std::vector<int>{-1}), doctest::Contains("MissingClusterLabel"),
                         Error);
}

TEST_CASE("silhouette examples") {
    Matrix x(4, 1);
    x << 0, 1, 10, 11;
    const double expect = (2 * (1 - 1 / 10.5) + 2 * (1 - 1 / 9.5)) / 4;
    CHECK(silhouette(x, std::vector<int>{0, 0, 1, 1}) == doctest::Approx(expect).epsilon(1e-12));

    Matrix y(3, 1);
    y << 0, 2, 5;
    CHECK(silhouette(y, std::vector<int>{0, 0, 1}) == doctest::Approx((0.6 + 1.0 / 3.0) / 3).epsilon(1e-12));
    CHECK_THROWS_WITH_AS(silhouette(y, std::vector<int>{0, 0, 0}), doctest::Contains("SingleCluster"), Error);
}
