// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "strata/cohort.hpp"
#include "strata/embedding.hpp"
#include "strata/kmeans.hpp"
#include "strata/taxonomy.hpp"
#include "strata/tsne.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace strata {

/// y_{p,i} for every stay and level, projected from the leaf label.
struct LevelLabels {
    std::vector<std::string> stay_ids;
    std::array<std::vector<std::string>, kTaxonomyDepth> codes;

    static LevelLabels from_leaves(const TaxonomyTree& taxonomy, std::vector<std::string> stay_ids,
                                   std::span<const std::string> leaf_codes);
    static LevelLabels from_cohort(const TaxonomyTree& taxonomy, const Cohort& cohort);

    /// Rows reordered to follow `ids`. Throws MissingLabel for an unknown id.
    LevelLabels aligned(std::span<const std::string> ids) const;

    const std::vector<std::string>& at(int level) const { return codes.at(static_cast<std::size_t>(level - 1)); }
    std::size_t size() const { return stay_ids.size(); }
    /// Number of distinct codes of a level among the given stays (all when empty).
    std::size_t distinct(int level, std::span<const std::size_t> stays = {}) const;
};

struct Cluster {
    std::vector<std::size_t> members;  // stay indices
    int parent = -1;                   // cluster index at the previous level
    std::string label;                 // assigned label, empty until labeled
    bool evaluated = true;
    bool fallback = false;
};

/// K^(i): disjoint clusters of one level. `assignment` maps a stay to its
/// cluster index or -1 when the stay is not covered at this level.
struct ClusterLevelResult {
    int level = 1;
    std::vector<Cluster> clusters;
    std::vector<int> assignment;
    bool used_tsne = false;

    std::size_t n_evaluated() const;
    std::size_t n_skipped() const { return clusters.size() - n_evaluated(); }
};

struct ClusteringOptions {
    KmeansConfig kmeans;
    std::optional<TsneConfig> tsne;  // reduce before clustering when set
};

/// Embeddings in the space clustering runs in (t-SNE layout when requested).
Matrix clustering_space(const Matrix& embeddings, const ClusteringOptions& options);

struct ClusterMetrics {
    double v_measure = 0.0;
    double homogeneity = 0.0;
    double completeness = 0.0;
    double ami = 0.0;
    std::optional<double> silhouette;
};

struct FlatResult {
    ClusterLevelResult result;
    ClusterMetrics metrics;
    int k = 0;
};

/// k-means over all stays, scored against the level-i codes. k = 0 picks
/// the number of level-i codes present.
FlatResult stratify_flat(const EmbeddingMatrix& embeddings, const LevelLabels& labels, int level, int k,
                         std::uint64_t seed, const ClusteringOptions& options = {});

struct Transition {
    int from_level = 1;
    std::optional<double> mean_accuracy;  // empty when no cluster qualified
    std::size_t n_evaluated = 0;
    std::size_t n_skipped = 0;
    std::vector<double> cluster_accuracy;  // per evaluated parent cluster
};

struct Rediscovery {
    std::array<ClusterLevelResult, kTaxonomyDepth> levels;
    std::array<Transition, kTaxonomyDepth - 1> transitions;
};

/// Level 1 clusters all stays with k = |level-1 codes present|. Each cluster
/// with more than min_cluster_size members and at least two distinct
/// next-level codes is re-clustered among its members into that many
/// clusters; others are marked unevaluated and do not propagate. Transition
/// accuracy labels each child by majority vote at the next level.
Rediscovery rediscover(const EmbeddingMatrix& embeddings, const LevelLabels& labels, std::uint64_t seed,
                       std::size_t min_cluster_size = 10, const ClusteringOptions& options = {});

enum class LabelStrategy { centroid, medoid, majority };
std::string_view to_string(LabelStrategy s);
LabelStrategy strategy_from_string(std::string_view s);

/// Picks one representative train label per cluster. Clusters without train
/// members get the global train majority and fallback = true. Throws
/// NoTrainMembersAnywhere when the train split is empty.
void assign_cluster_labels(ClusterLevelResult& result, const Matrix& embeddings, const LevelLabels& labels,
                           const SplitAssignment& split, LabelStrategy strategy);

struct AssignmentScore {
    double accuracy = 0.0;
    std::size_t n = 0;
};

/// Stays of the given split inherit their cluster's label; top-1 accuracy
/// against their level code.
AssignmentScore evaluate_assignment(const ClusterLevelResult& result, const LevelLabels& labels,
                                    const SplitAssignment& split, Split which = Split::test);

}  // namespace strata
