// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "strata/stratify.hpp"

#include <optional>
#include <string>
#include <vector>

namespace strata {

struct HpoSpace {
    int k_min = 2;
    int k_max = 64;  // further capped at N - 1
    bool allow_tsne = true;
    double perplexity_min = 5.0;
    double perplexity_max = 50.0;
    std::vector<int> out_dims{2, 10};
};

struct TrialRecord {
    int trial = 0;
    int k = 2;
    bool use_tsne = false;
    double perplexity = 30.0;
    int out_dims = 2;
    std::optional<double> objective;  // empty when the trial failed
    std::string status = "ok";        // ok | failed:<error code>
    std::uint64_t seed = 0;
};

struct HpoResult {
    std::vector<TrialRecord> trials;  // ordered by trial index
    std::optional<std::size_t> best;  // index into trials; empty if every trial failed
};

/// Random search over (k, use_tsne, perplexity, out_dims). Each trial draws
/// its parameters from derive_seed(seed, "hpo", trial), clusters only the
/// validation stays, and scores their v-measure at `level`. Throws EmptySpace.
HpoResult hpo_run(const EmbeddingMatrix& embeddings, const LevelLabels& labels, const SplitAssignment& split,
                  int level, const HpoSpace& space, int n_trials, std::uint64_t seed,
                  const KmeansConfig& kmeans = {}, const TsneConfig& tsne = {});

/// trials.csv: `trial,k,use_tsne,perplexity,out_dims,objective,status`.
std::string serialize_trials(const HpoResult& result, std::string_view comment = {});

}  // namespace strata
