// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "strata/preprocess.hpp"

#include <istream>
#include <string>
#include <vector>

namespace strata {

/// One fixed-size vector per stay (rows follow stay_ids).
struct EmbeddingMatrix {
    std::vector<std::string> stay_ids;
    Matrix vectors;          // N x d
    std::string provenance;  // stat | gru | lstm (| *_pf)

    Eigen::Index dim() const { return vectors.cols(); }
    std::size_t size() const { return stay_ids.size(); }
};

/// embeddings.csv: `stay_id,dim_0,...,dim_{d-1}`.
std::string serialize_embeddings(const EmbeddingMatrix& e, std::string_view comment = {});
EmbeddingMatrix parse_embeddings(std::istream& in, std::string provenance = {});

enum class Moment { mean, std, min, max, fraction_observed };
std::string_view to_string(Moment m);
Moment moment_from_string(std::string_view s);

struct StatConfig {
    int n_windows = 4;
    std::vector<Moment> moments{Moment::mean, Moment::std, Moment::min, Moment::max,
                                Moment::fraction_observed};
    bool include_statics = true;
};

/// Splits [0, hours) into n_windows contiguous ranges whose lengths differ
/// by at most one; earlier windows take the extra hour. Returns (begin, length).
std::vector<std::pair<Eigen::Index, Eigen::Index>> window_bounds(Eigen::Index hours, int n_windows);

/// Windowed moments of one stay, ordered window-major, then feature, then moment.
Vector stat_features(const Matrix& series, const MaskMatrix& observed, const StatConfig& config);

/// Concatenated windowed moments plus encoded statics; no training.
EmbeddingMatrix embed_stat(const PreparedCohort& cohort, const StatConfig& config = {});

}  // namespace strata
