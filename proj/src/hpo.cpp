// SPDX-License-Identifier: Apache-2.0
#include "strata/hpo.hpp"

#include "strata/metrics.hpp"
#include "strata/parallel.hpp"
#include "strata/textio.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace strata {

HpoResult hpo_run(const EmbeddingMatrix& embeddings, const LevelLabels& labels, const SplitAssignment& split,
                  int level, const HpoSpace& space, int n_trials, std::uint64_t seed, const KmeansConfig& kmeans,
                  const TsneConfig& tsne) {
    if (embeddings.stay_ids != labels.stay_ids) throw Error("LabelMismatch", "labels must follow the embedding row order");
    std::unordered_map<std::string_view, Split> by_id;
    for (std::size_t i = 0; i < split.stay_ids.size(); ++i) by_id.emplace(split.stay_ids[i], split.splits[i]);
    std::vector<std::size_t> val;
    for (std::size_t i = 0; i < embeddings.size(); ++i) {
        const auto it = by_id.find(embeddings.stay_ids[i]);
        if (it == by_id.end()) throw Error("SplitMismatch", "stay " + embeddings.stay_ids[i] + " has no split");
        if (it->second == Split::val) val.push_back(i);
    }

    const int n = static_cast<int>(val.size());
    const int k_max = std::min(space.k_max, n - 1);
    if (n_trials < 1 || k_max < space.k_min || space.k_min < 2 || space.out_dims.empty() ||
        !(space.perplexity_min <= space.perplexity_max))
        throw Error("EmptySpace", "search space is empty for " + std::to_string(n) + " validation stays");

    Matrix points(n, embeddings.dim());
    std::vector<std::string> truth_codes;
    for (int r = 0; r < n; ++r) {
        points.row(r) = embeddings.vectors.row(static_cast<Eigen::Index>(val[static_cast<std::size_t>(r)]));
        truth_codes.push_back(labels.at(level)[val[static_cast<std::size_t>(r)]]);
    }
    const auto truth = encode_labels(truth_codes);

    HpoResult result;
    result.trials.resize(static_cast<std::size_t>(n_trials));
    parallel_for(result.trials.size(), [&](std::size_t t) {
        auto& rec = result.trials[t];
        rec.trial = static_cast<int>(t);
        Rng rng(derive_seed(seed, "hpo", t));
        rec.k = static_cast<int>(rng.uniform_int(space.k_min, k_max));
        const bool tsne_draw = rng.uniform() < 0.5;
        rec.use_tsne = space.allow_tsne && tsne_draw;
        rec.perplexity = rng.uniform(space.perplexity_min, space.perplexity_max);
        rec.out_dims = space.out_dims[static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<long>(space.out_dims.size()) - 1))];
        rec.seed = derive_seed(seed, "hpo-trial", t);
        try {
            ClusteringOptions options{kmeans, std::nullopt};
            if (rec.use_tsne) {
                options.tsne = tsne;
                options.tsne->perplexity = rec.perplexity;
                options.tsne->out_dims = rec.out_dims;
                options.tsne->seed = rec.seed;
            }
            const auto model = kmeans_fit(clustering_space(points, options), rec.k, rec.seed, kmeans);
            const double v = v_measure(truth, model.assignments).v;
            if (!std::isfinite(v)) throw Error("NonFiniteObjective", "objective is not finite");
            rec.objective = v;
        } catch (const Error& e) {
            rec.status = "failed:" + e.code();
        }
    });
    for (std::size_t t = 0; t < result.trials.size(); ++t) {
        const auto& obj = result.trials[t].objective;
        if (obj && (!result.best || *obj > *result.trials[*result.best].objective)) result.best = t;
    }
    return result;
}

std::string serialize_trials(const HpoResult& result, std::string_view comment) {
    std::string out;
    if (!comment.empty()) out += "# " + std::string(comment) + "\n";
    out += "trial,k,use_tsne,perplexity,out_dims,objective,status\n";
    for (const auto& t : result.trials) {
        out += std::to_string(t.trial) + ',' + std::to_string(t.k) + ',' + (t.use_tsne ? "true" : "false") + ',' +
               textio::format_double(t.perplexity) + ',' + std::to_string(t.out_dims) + ',' +
               (t.objective ? textio::format_double(*t.objective) : std::string()) + ',' + t.status + '\n';
    }
    return out;
}

}  // namespace strata
