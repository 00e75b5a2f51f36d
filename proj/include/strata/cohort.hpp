// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "strata/core.hpp"

#include <array>
#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace strata {

class TaxonomyTree;

/// One ICU stay: hourly T x F series with an observation mask, raw static
/// values and the leaf (level-4) label. Unobserved series cells hold NaN.
struct StayRecord {
    std::string stay_id;
    Matrix series;
    MaskMatrix mask;
    std::vector<std::string> statics;  // raw text; empty = missing
    std::string label_code;

    Eigen::Index hours() const { return series.rows(); }
};

struct Cohort {
    std::vector<StayRecord> stays;  // sorted by stay_id
    std::vector<std::string> feature_names;
    std::vector<std::string> static_names;

    std::size_t size() const { return stays.size(); }
    std::optional<std::size_t> index_of(std::string_view stay_id) const;
};

struct CohortConfig {
    int max_hours = 72;                    // keeps hours [0, max_hours)
    std::vector<std::string> features;     // empty: every feature seen, sorted
    std::array<double, 3> split_ratios{0.70, 0.15, 0.15};
    int top_codes = 0;                     // 0 keeps every code
};

/// One long-format hourly row; an empty value means "recorded as missing".
struct HourlyRow {
    std::string stay_id;
    long hour = 0;
    std::string feature;
    std::optional<double> value;
};

/// Sub-hour observation (minutes since admission).
struct RawObservation {
    std::string stay_id;
    double minutes = 0.0;
    std::string feature;
    std::optional<double> value;
};

/// Averages observations falling into the same (stay, hour, feature) bucket.
/// Output is sorted by (stay, hour, feature). Throws NegativeTimestamp.
std::vector<HourlyRow> resample_to_hours(std::span<const RawObservation> raw);

struct CohortSources {
    std::istream& timeseries;
    std::istream& statics;
    std::istream& labels;
};

/// Builds a cohort from the three long-format CSV files. When a taxonomy is
/// given, every label must be one of its level-4 codes.
Cohort ingest(CohortSources sources, const CohortConfig& config,
              const TaxonomyTree* taxonomy = nullptr);
Cohort ingest(const std::filesystem::path& timeseries_path, const std::filesystem::path& static_path,
              const std::filesystem::path& labels_path, const CohortConfig& config,
              const TaxonomyTree* taxonomy = nullptr);

struct CohortFiles {
    std::string timeseries;
    std::string statics;
    std::string labels;
};
/// Serializes in the ingest format; the comment becomes a leading '#' line.
CohortFiles serialize_cohort(const Cohort& cohort, std::string_view comment = {});

enum class Split : std::uint8_t { train, val, test };
std::string_view to_string(Split s);
Split split_from_string(std::string_view s);

struct SplitAssignment {
    std::vector<std::string> stay_ids;
    std::vector<Split> splits;

    std::size_t count(Split s) const;
    std::vector<std::size_t> indices(Split s) const;
};

/// Each stay goes to train/val/test by thresholding a seeded 64-bit hash of
/// its id, so the split is a pure function of (stay_id, seed).
SplitAssignment split(const Cohort& cohort, std::array<double, 3> ratios, std::uint64_t seed);
std::string serialize_split(const SplitAssignment& assignment, std::string_view comment = {});
SplitAssignment parse_split(std::istream& in);

/// Most frequent leaf codes by stay count; ties go to the smaller code.
std::vector<std::string> select_top_codes(const Cohort& cohort, std::size_t n);
Cohort restrict_to_codes(const Cohort& cohort, const std::vector<std::string>& codes);

}  // namespace strata
