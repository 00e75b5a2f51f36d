// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "strata/cohort.hpp"

#include <span>
#include <string>
#include <vector>

namespace strata {

/// Linear-interpolation quantile of sorted values (position (n - 1) * q).
double quantile_sorted(std::span<const double> sorted, double q);

/// Robust-scaler statistics for the series features and the numeric statics.
struct ScalerParams {
    std::vector<std::string> series_names;
    Vector series_median;
    Vector series_iqr;
    std::vector<std::string> static_names;  // numeric statics only
    Vector static_median;
    Vector static_iqr;
};

struct CategoricalEncoding {
    enum class Kind { onehot, ordinal };
    std::string name;
    Kind kind = Kind::onehot;
    std::vector<std::string> categories;  // distinct train values, sorted
};

struct EncodingSpec {
    std::vector<CategoricalEncoding> categoricals;

    const CategoricalEncoding* find(std::string_view static_name) const;
};

struct PreprocessConfig {
    std::vector<std::string> onehot;   // static columns to one-hot encode
    std::vector<std::string> ordinal;  // rank-encoded; "name:a|b|c" fixes the order, else sorted
};

/// Pools every observed train cell per feature. Throws NoObservedValues.
ScalerParams fit_scaler(const Cohort& cohort, const SplitAssignment& split,
                        const PreprocessConfig& config = {});

/// (x - median) / IQR on observed cells; features with IQR 0 map to 0.
Cohort transform(const Cohort& cohort, const ScalerParams& scaler);

/// Median of observed train cells per feature (computed on the scaled cohort).
Vector population_medians(const Cohort& scaled, const SplitAssignment& split);

struct ImputedSeries {
    Matrix values;
    MaskMatrix was_imputed;
};

/// Forward fill from the last observation; cells before the first
/// observation take the population median. Observed cells are untouched.
ImputedSeries impute(const Matrix& series, const MaskMatrix& mask, const Vector& population_medians);

EncodingSpec fit_encoding(const Cohort& cohort, const SplitAssignment& split, const PreprocessConfig& config);

/// N x S' numeric statics: scaled numeric columns (missing -> 0, the scaled
/// median), one-hot slots (unseen -> all zero), ordinal ranks (unseen -> -1).
Matrix encode_statics(const Cohort& cohort, const EncodingSpec& spec, const ScalerParams& scaler);
std::vector<std::string> encoded_static_names(const Cohort& cohort, const EncodingSpec& spec);

/// Scaled, imputed cohort ready for the embedders. `observed` is the mask
/// before imputation.
struct PreparedStay {
    std::string stay_id;
    Matrix series;
    MaskMatrix observed;
    Vector statics;
    std::string label_code;
};

struct PreparedCohort {
    std::vector<PreparedStay> stays;
    std::vector<std::string> feature_names;
    std::vector<std::string> static_names;  // encoded

    std::size_t size() const { return stays.size(); }
    Eigen::Index n_features() const { return static_cast<Eigen::Index>(feature_names.size()); }
    Eigen::Index static_width() const { return static_cast<Eigen::Index>(static_names.size()); }
};

struct PreprocessParams {
    ScalerParams scaler;
    Vector medians;
    EncodingSpec encoding;
};

/// resample (done at ingest) -> fit/transform scaler -> impute -> encode.
PreparedCohort prepare(const Cohort& cohort, const SplitAssignment& split, const PreprocessConfig& config,
                       PreprocessParams* fitted = nullptr);
PreparedCohort apply_preprocess(const Cohort& cohort, const PreprocessParams& params);

/// JSON sidecar with scaler statistics, imputation medians and encodings.
/// `extra` fields (e.g. provenance) are merged into the top-level object.
std::string serialize_preprocess_params(const PreprocessParams& params, const std::string& extra_json = "{}");
PreprocessParams parse_preprocess_params(const std::string& json_text);

}  // namespace strata
