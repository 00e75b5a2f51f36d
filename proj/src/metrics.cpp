// SPDX-License-Identifier: Apache-2.0
#include "strata/metrics.hpp"

#include "strata/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace strata {

namespace {

void check_lengths(std::size_t a, std::size_t b) {
    if (a != b) throw Error("LengthMismatch", "label vectors differ in length (" + std::to_string(a) + " vs " +
                                                  std::to_string(b) + ")");
}

std::vector<int> compact(std::span<const int> labels) {
    std::map<int, int> ids;
    for (int l : labels) ids.emplace(l, 0);
    int next = 0;
    for (auto& [_, id] : ids) id = next++;
    std::vector<int> out;
    out.reserve(labels.size());
    for (int l : labels) out.push_back(ids.at(l));
    return out;
}

template <typename Counts>
double entropy_of(const Counts& counts, double total) {
    double h = 0.0;
    for (Eigen::Index i = 0; i < counts.size(); ++i) {
        if (counts[i] == 0) continue;
        const double p = static_cast<double>(counts[i]) / total;
        h -= p * std::log(p);
    }
    return h;
}

}  // namespace

ContingencyTable ContingencyTable::from_labels(std::span<const int> labels_true, std::span<const int> labels_pred) {
    check_lengths(labels_true.size(), labels_pred.size());
    const auto rows = compact(labels_true);
    const auto cols = compact(labels_pred);
    const int r = rows.empty() ? 0 : *std::max_element(rows.begin(), rows.end()) + 1;
    const int c = cols.empty() ? 0 : *std::max_element(cols.begin(), cols.end()) + 1;
    ContingencyTable t;
    t.counts = MatrixX<long>::Zero(r, c);
    for (std::size_t i = 0; i < rows.size(); ++i) ++t.counts(rows[i], cols[i]);
    t.class_totals = t.counts.rowwise().sum();
    t.cluster_totals = t.counts.colwise().sum().transpose();
    t.total = static_cast<long>(rows.size());
    return t;
}

std::vector<int> encode_labels(std::span<const std::string> labels) {
    const std::set<std::string> distinct(labels.begin(), labels.end());
    std::map<std::string, int> ids;
    int next = 0;
    for (const auto& l : distinct) ids.emplace(l, next++);
    std::vector<int> out;
    out.reserve(labels.size());
    for (const auto& l : labels) out.push_back(ids.at(l));
    return out;
}

VMeasure v_measure(std::span<const int> labels_true, std::span<const int> labels_pred) {
    check_lengths(labels_true.size(), labels_pred.size());
    if (labels_true.empty()) throw Error("Empty", "v-measure of zero samples");
    const auto t = ContingencyTable::from_labels(labels_true, labels_pred);
    const double n = static_cast<double>(t.total);
    const double h_c = entropy_of(t.class_totals, n);
    const double h_k = entropy_of(t.cluster_totals, n);
    double h_c_given_k = 0.0;
    double h_k_given_c = 0.0;
    for (Eigen::Index i = 0; i < t.counts.rows(); ++i)
        for (Eigen::Index j = 0; j < t.counts.cols(); ++j) {
            const auto nij = static_cast<double>(t.counts(i, j));
            if (nij == 0) continue;
            h_c_given_k -= nij / n * std::log(nij / static_cast<double>(t.cluster_totals[j]));
            h_k_given_c -= nij / n * std::log(nij / static_cast<double>(t.class_totals[i]));
        }
    VMeasure out;
    out.homogeneity = h_c == 0.0 ? 1.0 : 1.0 - h_c_given_k / h_c;
    out.completeness = h_k == 0.0 ? 1.0 : 1.0 - h_k_given_c / h_k;
    const double sum = out.homogeneity + out.completeness;
    out.v = sum == 0.0 ? 0.0 : 2.0 * out.homogeneity * out.completeness / sum;
    return out;
}

double mutual_information(const ContingencyTable& t) {
    const double n = static_cast<double>(t.total);
    double mi = 0.0;
    for (Eigen::Index i = 0; i < t.counts.rows(); ++i)
        for (Eigen::Index j = 0; j < t.counts.cols(); ++j) {
            const auto nij = static_cast<double>(t.counts(i, j));
            if (nij == 0) continue;
            mi += nij / n *
                  std::log(n * nij / (static_cast<double>(t.class_totals[i]) * static_cast<double>(t.cluster_totals[j])));
        }
    return std::max(mi, 0.0);
}

double expected_mutual_information(const ContingencyTable& t) {
    const long n = t.total;
    const double nd = static_cast<double>(n);
    const double lg_n = std::lgamma(nd + 1.0);
    double emi = 0.0;
    for (Eigen::Index i = 0; i < t.class_totals.size(); ++i) {
        const long a = t.class_totals[i];
        for (Eigen::Index j = 0; j < t.cluster_totals.size(); ++j) {
            const long b = t.cluster_totals[j];
            const double ad = static_cast<double>(a), bd = static_cast<double>(b);
            const double fixed = std::lgamma(ad + 1) + std::lgamma(bd + 1) + std::lgamma(nd - ad + 1) +
                                 std::lgamma(nd - bd + 1) - lg_n;
            for (long nij = std::max(1L, a + b - n); nij <= std::min(a, b); ++nij) {
                const double x = static_cast<double>(nij);
                const double log_p = fixed - std::lgamma(x + 1) - std::lgamma(ad - x + 1) - std::lgamma(bd - x + 1) -
                                     std::lgamma(nd - ad - bd + x + 1);
                emi += x / nd * std::log(nd * x / (ad * bd)) * std::exp(log_p);
            }
        }
    }
    return emi;
}

double ami(std::span<const int> labels_true, std::span<const int> labels_pred) {
    check_lengths(labels_true.size(), labels_pred.size());
    if (labels_true.empty()) throw Error("Empty", "AMI of zero samples");
    const auto t = ContingencyTable::from_labels(labels_true, labels_pred);
    // identical up to relabeling: one non-zero per row and per column
    if (t.counts.rows() == t.counts.cols() &&
        (t.counts.array() > 0).rowwise().count().maxCoeff() == 1 &&
        (t.counts.array() > 0).colwise().count().maxCoeff() == 1)
        return 1.0;
    const double n = static_cast<double>(t.total);
    const double mi = mutual_information(t);
    const double emi = expected_mutual_information(t);
    const double mean_h = 0.5 * (entropy_of(t.class_totals, n) + entropy_of(t.cluster_totals, n));
    const double denom = mean_h - emi;
    if (std::abs(denom) < 1e-15) return 0.0;
    return (mi - emi) / denom;
}

double accuracy(std::span<const int> labels_true, std::span<const int> labels_pred) {
    check_lengths(labels_true.size(), labels_pred.size());
    if (labels_true.empty()) throw Error("Empty", "accuracy of zero samples");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels_true.size(); ++i) {
        if (labels_pred[i] < 0) throw Error("MissingClusterLabel", "sample " + std::to_string(i) + " has no label");
        hits += labels_true[i] == labels_pred[i];
    }
    return static_cast<double>(hits) / static_cast<double>(labels_true.size());
}

double accuracy(std::span<const std::string> labels_true, std::span<const std::string> labels_pred) {
    check_lengths(labels_true.size(), labels_pred.size());
    if (labels_true.empty()) throw Error("Empty", "accuracy of zero samples");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels_true.size(); ++i) {
        if (labels_pred[i].empty()) throw Error("MissingClusterLabel", "sample " + std::to_string(i) + " has no label");
        hits += labels_true[i] == labels_pred[i];
    }
    return static_cast<double>(hits) / static_cast<double>(labels_true.size());
}

double silhouette(const Matrix& points, std::span<const int> assignments) {
    check_lengths(static_cast<std::size_t>(points.rows()), assignments.size());
    const auto ids = compact(assignments);
    const int k = ids.empty() ? 0 : *std::max_element(ids.begin(), ids.end()) + 1;
    if (k < 2) throw Error("SingleCluster", "silhouette needs at least two clusters");
    std::vector<long> sizes(static_cast<std::size_t>(k), 0);
    for (int c : ids) ++sizes[static_cast<std::size_t>(c)];

    const auto n = static_cast<std::size_t>(points.rows());
    std::vector<double> score(n, 0.0);
    parallel_for(n, [&](std::size_t i) {
        const int own = ids[i];
        if (sizes[static_cast<std::size_t>(own)] < 2) return;
        std::vector<double> sum(static_cast<std::size_t>(k), 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            sum[static_cast<std::size_t>(ids[j])] +=
                (points.row(static_cast<Eigen::Index>(i)) - points.row(static_cast<Eigen::Index>(j))).norm();
        }
        const double a = sum[static_cast<std::size_t>(own)] / static_cast<double>(sizes[static_cast<std::size_t>(own)] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c)
            if (c != own) b = std::min(b, sum[static_cast<std::size_t>(c)] / static_cast<double>(sizes[static_cast<std::size_t>(c)]));
        const double m = std::max(a, b);
        score[i] = m > 0.0 ? (b - a) / m : 0.0;
    });
    double total = 0.0;
    for (double s : score) total += s;
    return total / static_cast<double>(n);
}

}  // namespace strata
