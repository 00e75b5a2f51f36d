// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "strata/cohort.hpp"
#include "strata/embedding.hpp"
#include "strata/hpo.hpp"
#include "strata/kmeans.hpp"
#include "strata/preprocess.hpp"
#include "strata/rnn.hpp"
#include "strata/stratify.hpp"
#include "strata/synth.hpp"
#include "strata/tsne.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace strata {

inline constexpr std::string_view kVersion = "1.0.0";
inline constexpr int kConfigSchemaVersion = 1;

struct EmbedSettings {
    std::string method = "stat";  // stat | gru | lstm
    StatConfig stat;
    RnnConfig rnn;
};

struct StratifySettings {
    std::vector<int> levels{1, 2, 3, 4};
    int k = 0;  // 0: number of codes present at the level
    bool use_tsne = false;
    std::size_t min_cluster_size = 10;
    std::vector<LabelStrategy> strategies{LabelStrategy::centroid, LabelStrategy::medoid, LabelStrategy::majority};
};

struct HpoSettings {
    int n_trials = 50;
    std::vector<int> levels{1};
    HpoSpace space;
};

/// Every tunable of a run. Module seeds are derived from `seed` when a
/// stage runs, so they are not keys of their own.
struct RunConfig {
    std::uint64_t seed = 42;
    unsigned threads = 0;  // 0: all cores
    CohortConfig cohort;
    SynthConfig synth;
    PreprocessConfig preprocess;
    EmbedSettings embed;
    TsneConfig tsne;
    KmeansConfig kmeans;
    StratifySettings stratify;
    HpoSettings hpo;
};

/// Sectioned `key = value` text; `#` and `;` start comments. Top-level keys
/// precede the first section. Unknown sections or keys throw UnknownKey,
/// unparsable values throw BadValue.
RunConfig parse_config(std::string_view text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

/// Applies `section.key=value` (or `key=value` for top-level keys).
void apply_override(RunConfig& config, std::string_view assignment);
void set_value(RunConfig& config, std::string_view section, std::string_view key, std::string_view value);

/// Canonical dump listing every key; parse_config(dump_config(c)) == c.
std::string dump_config(const RunConfig& config);
std::uint64_t config_hash(const RunConfig& config);
std::string hex64(std::uint64_t value);

}  // namespace strata
