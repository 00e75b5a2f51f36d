// SPDX-License-Identifier: Apache-2.0
#include "strata/stratify.hpp"

#include "strata/metrics.hpp"
#include "strata/parallel.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <unordered_map>

namespace strata {

LevelLabels LevelLabels::from_leaves(const TaxonomyTree& taxonomy, std::vector<std::string> stay_ids,
                                     std::span<const std::string> leaf_codes) {
    if (stay_ids.size() != leaf_codes.size())
        throw Error("LengthMismatch", "stay ids and leaf codes differ in length");
    LevelLabels out;
    out.stay_ids = std::move(stay_ids);
    for (int level = 1; level <= kTaxonomyDepth; ++level) {
        auto& codes = out.codes[static_cast<std::size_t>(level - 1)];
        codes.reserve(leaf_codes.size());
        for (const auto& leaf : leaf_codes) {
            if (!taxonomy.contains(leaf)) throw Error("UnknownLabelCode", "label '" + leaf + "' is not in the taxonomy");
            if (taxonomy.level_of(leaf) != kTaxonomyDepth)
                throw Error("UnknownLabelCode", "label '" + leaf + "' is not a level-4 code");
            codes.push_back(taxonomy.ancestor_at_level(leaf, level));
        }
    }
    return out;
}

LevelLabels LevelLabels::from_cohort(const TaxonomyTree& taxonomy, const Cohort& cohort) {
    std::vector<std::string> ids, leaves;
    ids.reserve(cohort.size());
    leaves.reserve(cohort.size());
    for (const auto& s : cohort.stays) {
        ids.push_back(s.stay_id);
        leaves.push_back(s.label_code);
    }
    return from_leaves(taxonomy, std::move(ids), leaves);
}

LevelLabels LevelLabels::aligned(std::span<const std::string> ids) const {
    std::unordered_map<std::string_view, std::size_t> pos;
    pos.reserve(stay_ids.size());
    for (std::size_t i = 0; i < stay_ids.size(); ++i) pos.emplace(stay_ids[i], i);
    LevelLabels out;
    out.stay_ids.assign(ids.begin(), ids.end());
    for (auto& c : out.codes) c.reserve(ids.size());
    for (const auto& id : ids) {
        const auto it = pos.find(id);
        if (it == pos.end()) throw Error("MissingLabel", "no label for stay " + id);
        for (std::size_t l = 0; l < codes.size(); ++l) out.codes[l].push_back(codes[l][it->second]);
    }
    return out;
}

std::size_t LevelLabels::distinct(int level, std::span<const std::size_t> stays) const {
    const auto& c = at(level);
    std::set<std::string_view> seen;
    if (stays.empty()) seen.insert(c.begin(), c.end());
    else
        for (auto i : stays) seen.insert(c[i]);
    return seen.size();
}

std::size_t ClusterLevelResult::n_evaluated() const {
    return static_cast<std::size_t>(std::count_if(clusters.begin(), clusters.end(),
                                                  [](const Cluster& c) { return c.evaluated; }));
}

Matrix clustering_space(const Matrix& embeddings, const ClusteringOptions& options) {
    if (!options.tsne) return embeddings;
    return tsne_fit(embeddings, *options.tsne).layout;
}

namespace {

// Most frequent code; ties go to the smallest code.
std::string majority_code(const std::vector<std::string>& codes, std::span<const std::size_t> rows) {
    std::map<std::string_view, std::size_t> counts;
    for (auto i : rows) ++counts[codes[i]];
    std::string_view best;
    std::size_t best_n = 0;
    for (const auto& [code, n] : counts)
        if (n > best_n) {
            best = code;
            best_n = n;
        }
    return std::string(best);
}

ClusterLevelResult from_assignments(int level, std::size_t n_stays, std::span<const std::size_t> rows,
                                    std::span<const int> assignments, int k) {
    ClusterLevelResult r;
    r.level = level;
    r.assignment.assign(n_stays, -1);
    r.clusters.resize(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        r.clusters[static_cast<std::size_t>(assignments[i])].members.push_back(rows[i]);
        r.assignment[rows[i]] = assignments[i];
    }
    return r;
}

void check_alignment(const EmbeddingMatrix& embeddings, const LevelLabels& labels) {
    if (embeddings.stay_ids != labels.stay_ids)
        throw Error("LabelMismatch", "labels must follow the embedding row order");
}

}  // namespace

FlatResult stratify_flat(const EmbeddingMatrix& embeddings, const LevelLabels& labels, int level, int k,
                         std::uint64_t seed, const ClusteringOptions& options) {
    check_alignment(embeddings, labels);
    if (level < 1 || level > kTaxonomyDepth) throw Error("LevelOutOfRange", "level must be 1..4");
    if (k == 0) k = static_cast<int>(labels.distinct(level));
    if (k < 2) throw Error("InvalidArgument", "stratification needs k >= 2");

    const Matrix space = clustering_space(embeddings.vectors, options);
    const auto model = kmeans_fit(space, k, derive_seed(seed, "stratify", static_cast<std::uint64_t>(level)),
                                  options.kmeans);
    std::vector<std::size_t> all(embeddings.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;

    FlatResult out;
    out.k = k;
    out.result = from_assignments(level, all.size(), all, model.assignments, k);
    out.result.used_tsne = options.tsne.has_value();
    const auto truth = encode_labels(labels.at(level));
    const auto v = v_measure(truth, model.assignments);
    out.metrics.v_measure = v.v;
    out.metrics.homogeneity = v.homogeneity;
    out.metrics.completeness = v.completeness;
    out.metrics.ami = ami(truth, model.assignments);
    if (std::set<int>(model.assignments.begin(), model.assignments.end()).size() >= 2)
        out.metrics.silhouette = silhouette(space, model.assignments);
    return out;
}

Rediscovery rediscover(const EmbeddingMatrix& embeddings, const LevelLabels& labels, std::uint64_t seed,
                       std::size_t min_cluster_size, const ClusteringOptions& options) {
    check_alignment(embeddings, labels);
    const Matrix space = clustering_space(embeddings.vectors, options);
    const std::size_t n = embeddings.size();
    const int k1 = static_cast<int>(labels.distinct(1));
    if (static_cast<std::size_t>(k1) >= n)
        throw Error("KGreaterThanN", "level-1 clustering needs N > k_1 (N = " + std::to_string(n) +
                                         ", k_1 = " + std::to_string(k1) + ")");

    Rediscovery out;
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    const auto top = kmeans_fit(space, k1, derive_seed(seed, "rediscover", 1), options.kmeans);
    out.levels[0] = from_assignments(1, n, all, top.assignments, k1);

    for (int level = 1; level < kTaxonomyDepth; ++level) {
        auto& parents = out.levels[static_cast<std::size_t>(level - 1)];
        const auto& child_codes = labels.at(level + 1);

        struct Child {
            bool evaluated = false;
            std::vector<Cluster> clusters;
            double accuracy = 0.0;
        };
        std::vector<Child> children(parents.clusters.size());
        parallel_for(parents.clusters.size(), [&](std::size_t j) {
            const auto& members = parents.clusters[j].members;
            if (!parents.clusters[j].evaluated || members.size() <= min_cluster_size) return;
            const int k_child = static_cast<int>(labels.distinct(level + 1, members));
            if (k_child < 2) return;

            Matrix sub(static_cast<Eigen::Index>(members.size()), space.cols());
            for (std::size_t m = 0; m < members.size(); ++m)
                sub.row(static_cast<Eigen::Index>(m)) = space.row(static_cast<Eigen::Index>(members[m]));
            const auto model =
                kmeans_fit(sub, k_child, derive_seed(seed, "rediscover-L" + std::to_string(level + 1), j), options.kmeans);

            auto& c = children[j];
            c.evaluated = true;
            c.clusters.resize(static_cast<std::size_t>(k_child));
            for (std::size_t m = 0; m < members.size(); ++m)
                c.clusters[static_cast<std::size_t>(model.assignments[m])].members.push_back(members[m]);
            std::size_t hits = 0;
            for (auto& child : c.clusters) {
                child.parent = static_cast<int>(j);
                if (child.members.empty()) continue;
                const auto label = majority_code(child_codes, child.members);
                for (auto p : child.members) hits += child_codes[p] == label;
            }
            c.accuracy = static_cast<double>(hits) / static_cast<double>(members.size());
        });

        auto& next = out.levels[static_cast<std::size_t>(level)];
        next.level = level + 1;
        next.assignment.assign(n, -1);
        auto& transition = out.transitions[static_cast<std::size_t>(level - 1)];
        transition.from_level = level;
        double sum = 0.0;
        for (std::size_t j = 0; j < children.size(); ++j) {
            if (!parents.clusters[j].evaluated) continue;  // never propagated to this level
            if (!children[j].evaluated) {
                parents.clusters[j].evaluated = false;
                ++transition.n_skipped;
                continue;
            }
            ++transition.n_evaluated;
            transition.cluster_accuracy.push_back(children[j].accuracy);
            sum += children[j].accuracy;
            for (auto& child : children[j].clusters) {
                const int id = static_cast<int>(next.clusters.size());
                for (auto p : child.members) next.assignment[p] = id;
                next.clusters.push_back(std::move(child));
            }
        }
        if (transition.n_evaluated > 0) transition.mean_accuracy = sum / static_cast<double>(transition.n_evaluated);
    }
    // Leaf-level clusters have no further transition to evaluate; they stay
    // marked evaluated exactly when they were produced.
    return out;
}

std::string_view to_string(LabelStrategy s) {
    switch (s) {
    case LabelStrategy::centroid: return "centroid";
    case LabelStrategy::medoid: return "medoid";
    case LabelStrategy::majority: return "majority";
    }
    return "majority";
}

LabelStrategy strategy_from_string(std::string_view s) {
    if (s == "centroid") return LabelStrategy::centroid;
    if (s == "medoid") return LabelStrategy::medoid;
    if (s == "majority") return LabelStrategy::majority;
    throw Error("UnknownStrategy", "unknown label strategy '" + std::string(s) + "'");
}

namespace {

std::vector<Split> splits_for(const LevelLabels& labels, const SplitAssignment& split) {
    std::unordered_map<std::string_view, Split> by_id;
    by_id.reserve(split.stay_ids.size());
    for (std::size_t i = 0; i < split.stay_ids.size(); ++i) by_id.emplace(split.stay_ids[i], split.splits[i]);
    std::vector<Split> out;
    out.reserve(labels.size());
    for (const auto& id : labels.stay_ids) {
        const auto it = by_id.find(id);
        if (it == by_id.end()) throw Error("SplitMismatch", "stay " + id + " has no split");
        out.push_back(it->second);
    }
    return out;
}

// Row with the smallest score; exact ties go to the smaller code, then the earlier row.
std::size_t argmin_by_code(std::span<const std::size_t> rows, std::span<const double> score,
                           const std::vector<std::string>& codes) {
    std::size_t best = 0;
    for (std::size_t m = 1; m < rows.size(); ++m) {
        if (score[m] < score[best] || (score[m] == score[best] && codes[rows[m]] < codes[rows[best]])) best = m;
    }
    return rows[best];
}

}  // namespace

void assign_cluster_labels(ClusterLevelResult& result, const Matrix& embeddings, const LevelLabels& labels,
                           const SplitAssignment& split, LabelStrategy strategy) {
    if (static_cast<std::size_t>(embeddings.rows()) != labels.size())
        throw Error("LabelMismatch", "embeddings and labels differ in length");
    const auto& codes = labels.at(result.level);
    const auto splits = splits_for(labels, split);
    std::vector<std::size_t> train;
    for (std::size_t i = 0; i < splits.size(); ++i)
        if (splits[i] == Split::train) train.push_back(i);
    if (train.empty()) throw Error("NoTrainMembersAnywhere", "the train split is empty");
    const auto fallback = majority_code(codes, train);

    for (auto& cluster : result.clusters) {
        std::vector<std::size_t> pool;
        for (auto p : cluster.members)
            if (splits[p] == Split::train) pool.push_back(p);
        cluster.fallback = pool.empty();
        if (pool.empty()) {
            cluster.label = fallback;
            continue;
        }
        std::vector<double> score(pool.size(), 0.0);
        switch (strategy) {
        case LabelStrategy::majority:
            cluster.label = majority_code(codes, pool);
            continue;
        case LabelStrategy::centroid: {
            Vector mu = Vector::Zero(embeddings.cols());
            for (auto p : pool) mu += embeddings.row(static_cast<Eigen::Index>(p)).transpose();
            mu /= static_cast<double>(pool.size());
            for (std::size_t m = 0; m < pool.size(); ++m)
                score[m] = (embeddings.row(static_cast<Eigen::Index>(pool[m])).transpose() - mu).norm();
            break;
        }
        case LabelStrategy::medoid:
            for (std::size_t m = 0; m < pool.size(); ++m)
                for (std::size_t q = 0; q < pool.size(); ++q)
                    score[m] += (embeddings.row(static_cast<Eigen::Index>(pool[m])) -
                                 embeddings.row(static_cast<Eigen::Index>(pool[q])))
                                    .norm();
            break;
        }
        cluster.label = codes[argmin_by_code(pool, score, codes)];
    }
}

AssignmentScore evaluate_assignment(const ClusterLevelResult& result, const LevelLabels& labels,
                                    const SplitAssignment& split, Split which) {
    const auto& codes = labels.at(result.level);
    const auto splits = splits_for(labels, split);
    AssignmentScore out;
    std::size_t hits = 0;
    for (std::size_t p = 0; p < splits.size(); ++p) {
        if (splits[p] != which || p >= result.assignment.size() || result.assignment[p] < 0) continue;
        const auto& cluster = result.clusters[static_cast<std::size_t>(result.assignment[p])];
        ++out.n;
        hits += cluster.label == codes[p];
    }
    out.accuracy = out.n == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(out.n);
    return out;
}

}  // namespace strata
