// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "strata/core.hpp"

#include <span>
#include <string>
#include <vector>

namespace strata {

/// Counts n_ij between true classes (rows) and clusters (columns). Label
/// values are compacted to 0..r-1 / 0..c-1 in sorted order.
struct ContingencyTable {
    MatrixX<long> counts;
    VectorX<long> class_totals;    // a_i
    VectorX<long> cluster_totals;  // b_j
    long total = 0;

    static ContingencyTable from_labels(std::span<const int> labels_true, std::span<const int> labels_pred);
};

/// Maps string labels to dense ints (index in the sorted distinct set).
std::vector<int> encode_labels(std::span<const std::string> labels);

struct VMeasure {
    double homogeneity = 0.0;
    double completeness = 0.0;
    double v = 0.0;
};

/// Entropy-based homogeneity/completeness and their harmonic mean.
/// Throws LengthMismatch or Empty.
VMeasure v_measure(std::span<const int> labels_true, std::span<const int> labels_pred);

double mutual_information(const ContingencyTable& table);
/// E[MI] under the hypergeometric permutation model, by the exact sum over
/// every feasible cell count.
double expected_mutual_information(const ContingencyTable& table);

/// (MI - E[MI]) / (mean(H(U), H(V)) - E[MI]); 1 for identical partitions,
/// 0 when the denominator vanishes otherwise.
double ami(std::span<const int> labels_true, std::span<const int> labels_pred);

/// Fraction of stays whose predicted label equals the true one. A negative
/// predicted label means "no label" and raises MissingClusterLabel.
double accuracy(std::span<const int> labels_true, std::span<const int> labels_pred);
double accuracy(std::span<const std::string> labels_true, std::span<const std::string> labels_pred);

/// Mean silhouette with Euclidean distances; singletons contribute 0 and
/// 0/0 counts as 0. Throws SingleCluster when fewer than two clusters are used.
double silhouette(const Matrix& points, std::span<const int> assignments);

}  // namespace strata
