// SPDX-License-Identifier: Apache-2.0
#include "strata/cohort.hpp"

#include "strata/taxonomy.hpp"
#include "strata/textio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <tuple>
#include <unordered_map>

namespace strata {

std::optional<std::size_t> Cohort::index_of(std::string_view stay_id) const {
    const auto it = std::lower_bound(stays.begin(), stays.end(), stay_id,
                                     [](const StayRecord& s, std::string_view id) { return s.stay_id < id; });
    if (it == stays.end() || it->stay_id != stay_id) return std::nullopt;
    return static_cast<std::size_t>(it - stays.begin());
}

std::vector<HourlyRow> resample_to_hours(std::span<const RawObservation> raw) {
    struct Bucket {
        double sum = 0.0;
        int observed = 0;
    };
    std::map<std::tuple<std::string, long, std::string>, Bucket> buckets;
    for (const auto& r : raw) {
        if (!(r.minutes >= 0.0))
            throw Error("NegativeTimestamp", "stay " + r.stay_id + " has timestamp " + textio::format_double(r.minutes));
        const auto hour = static_cast<long>(std::floor(r.minutes / 60.0));
        auto& b = buckets[{r.stay_id, hour, r.feature}];
        if (r.value) {
            b.sum += *r.value;
            ++b.observed;
        }
    }
    std::vector<HourlyRow> out;
    out.reserve(buckets.size());
    for (const auto& [key, b] : buckets) {
        HourlyRow row{std::get<0>(key), std::get<1>(key), std::get<2>(key), std::nullopt};
        if (b.observed > 0) row.value = b.sum / b.observed;
        out.push_back(std::move(row));
    }
    return out;
}

namespace {

[[noreturn]] void malformed(std::string_view file, std::size_t line_no, const std::string& why) {
    throw Error("MalformedRow", std::string(file) + " line " + std::to_string(line_no) + ": " + why);
}

std::vector<HourlyRow> read_timeseries(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    if (!textio::next_record(in, line, line_no)) throw Error("MalformedRow", "timeseries file is empty");
    const auto header = textio::split(line);
    const bool minutes = header.size() == 4 && header[1] == "minute";
    if (header.size() != 4 || header[0] != "stay_id" || (header[1] != "hour" && !minutes) ||
        header[2] != "feature" || header[3] != "value")
        malformed("timeseries", line_no, "header must be stay_id,hour,feature,value");

    std::vector<HourlyRow> rows;
    std::vector<RawObservation> raw;
    while (textio::next_record(in, line, line_no)) {
        auto f = textio::split(line);
        if (f.size() != 4) malformed("timeseries", line_no, "expected 4 fields, got " + std::to_string(f.size()));
        if (f[0].empty() || f[2].empty()) malformed("timeseries", line_no, "empty stay_id or feature");
        std::optional<double> value;
        if (!f[3].empty()) {
            value = textio::parse_double(f[3]);
            if (!value || !std::isfinite(*value)) malformed("timeseries", line_no, "bad value '" + f[3] + "'");
        }
        if (minutes) {
            const auto t = textio::parse_double(f[1]);
            if (!t) malformed("timeseries", line_no, "bad minute '" + f[1] + "'");
            raw.push_back({std::move(f[0]), *t, std::move(f[2]), value});
        } else {
            const auto hour = textio::parse_long(f[1]);
            if (!hour || *hour < 0) malformed("timeseries", line_no, "bad hour '" + f[1] + "'");
            rows.push_back({std::move(f[0]), *hour, std::move(f[2]), value});
        }
    }
    if (minutes) return resample_to_hours(raw);
    return rows;
}

}  // namespace

Cohort ingest(CohortSources sources, const CohortConfig& config, const TaxonomyTree* taxonomy) {
    if (config.max_hours < 1) throw Error("InvalidConfig", "cohort.max_hours must be >= 1");
    const auto rows = read_timeseries(sources.timeseries);

    Cohort cohort;
    if (!config.features.empty()) {
        cohort.feature_names = config.features;
    } else {
        std::set<std::string> seen;
        for (const auto& r : rows) seen.insert(r.feature);
        cohort.feature_names.assign(seen.begin(), seen.end());
    }
    std::unordered_map<std::string, Eigen::Index> feature_index;
    for (std::size_t i = 0; i < cohort.feature_names.size(); ++i)
        feature_index.emplace(cohort.feature_names[i], static_cast<Eigen::Index>(i));
    const auto n_features = static_cast<Eigen::Index>(cohort.feature_names.size());

    std::map<std::string, std::vector<const HourlyRow*>> by_stay;
    std::set<std::tuple<std::string_view, long, std::string_view>> cells;
    for (const auto& r : rows) {
        if (!feature_index.contains(r.feature))
            throw Error("UnknownFeature", "feature " + r.feature + " is not in the configured feature list");
        if (!cells.emplace(r.stay_id, r.hour, r.feature).second)
            throw Error("DuplicateCell", "stay " + r.stay_id + " hour " + std::to_string(r.hour) + " feature " +
                                             r.feature + " appears more than once");
        by_stay[r.stay_id].push_back(&r);
    }

    for (const auto& [stay_id, stay_rows] : by_stay) {
        long max_hour = 0;
        for (const auto* r : stay_rows) max_hour = std::max(max_hour, r->hour);
        const long t = std::min<long>(max_hour + 1, config.max_hours);
        StayRecord stay;
        stay.stay_id = stay_id;
        stay.series = Matrix::Constant(t, n_features, std::numeric_limits<double>::quiet_NaN());
        stay.mask = MaskMatrix::Constant(t, n_features, false);
        for (const auto* r : stay_rows) {
            if (r->hour >= t || !r->value) continue;
            const auto f = feature_index.at(r->feature);
            stay.series(r->hour, f) = *r->value;
            stay.mask(r->hour, f) = true;
        }
        cohort.stays.push_back(std::move(stay));
    }

    // statics
    {
        std::string line;
        std::size_t line_no = 0;
        if (!textio::next_record(sources.statics, line, line_no)) throw Error("MalformedRow", "static file is empty");
        auto header = textio::split(line);
        if (header.empty() || header[0] != "stay_id") malformed("static", line_no, "header must start with stay_id");
        cohort.static_names.assign(header.begin() + 1, header.end());
        std::unordered_map<std::string, std::vector<std::string>> values;
        while (textio::next_record(sources.statics, line, line_no)) {
            auto f = textio::split(line);
            if (f.size() != header.size())
                malformed("static", line_no, "expected " + std::to_string(header.size()) + " fields");
            std::string id = f[0];
            f.erase(f.begin());
            if (!values.emplace(std::move(id), std::move(f)).second)
                malformed("static", line_no, "duplicate stay_id");
        }
        for (auto& stay : cohort.stays) {
            auto it = values.find(stay.stay_id);
            if (it == values.end()) throw Error("MissingStatic", "stay " + stay.stay_id + " has no row in the static file");
            stay.statics = std::move(it->second);
        }
    }

    // labels
    {
        std::string line;
        std::size_t line_no = 0;
        if (!textio::next_record(sources.labels, line, line_no)) throw Error("MalformedRow", "labels file is empty");
        const auto header = textio::split(line);
        if (header.size() != 2 || header[0] != "stay_id" || header[1] != "code")
            malformed("labels", line_no, "header must be stay_id,code");
        std::unordered_map<std::string, std::string> labels;
        while (textio::next_record(sources.labels, line, line_no)) {
            auto f = textio::split(line);
            if (f.size() != 2 || f[1].empty()) malformed("labels", line_no, "expected stay_id,code");
            if (!labels.emplace(std::move(f[0]), std::move(f[1])).second)
                malformed("labels", line_no, "duplicate stay_id");
        }
        for (auto& stay : cohort.stays) {
            auto it = labels.find(stay.stay_id);
            if (it == labels.end()) throw Error("MissingLabel", "stay " + stay.stay_id + " has no label");
            if (taxonomy && (!taxonomy->contains(it->second) || taxonomy->level_of(it->second) != kTaxonomyDepth))
                throw Error("UnknownLabelCode", "label " + it->second + " of stay " + stay.stay_id +
                                                    " is not a level-4 taxonomy code");
            stay.label_code = it->second;
        }
    }
    return cohort;
}

Cohort ingest(const std::filesystem::path& timeseries_path, const std::filesystem::path& static_path,
              const std::filesystem::path& labels_path, const CohortConfig& config,
              const TaxonomyTree* taxonomy) {
    std::ifstream ts(timeseries_path), st(static_path), lb(labels_path);
    if (!ts) throw Error("FileNotFound", "cannot open " + timeseries_path.string());
    if (!st) throw Error("FileNotFound", "cannot open " + static_path.string());
    if (!lb) throw Error("FileNotFound", "cannot open " + labels_path.string());
    return ingest(CohortSources{ts, st, lb}, config, taxonomy);
}

CohortFiles serialize_cohort(const Cohort& cohort, std::string_view comment) {
    const std::string prefix = comment.empty() ? std::string{} : "# " + std::string(comment) + "\n";
    CohortFiles out;
    out.timeseries = prefix + "stay_id,hour,feature,value\n";
    out.statics = prefix + "stay_id";
    for (const auto& n : cohort.static_names) out.statics += "," + n;
    out.statics += "\n";
    out.labels = prefix + "stay_id,code\n";
    for (const auto& stay : cohort.stays) {
        const auto t_last = stay.hours() - 1;
        for (Eigen::Index t = 0; t <= t_last; ++t) {
            bool any = false;
            for (Eigen::Index f = 0; f < stay.series.cols(); ++f) {
                if (!stay.mask(t, f)) continue;
                any = true;
                out.timeseries += stay.stay_id + "," + std::to_string(t) + "," + cohort.feature_names[f] + "," +
                                  textio::format_double(stay.series(t, f)) + "\n";
            }
            // keep T recoverable when the last hour is fully missing
            if (!any && t == t_last && !cohort.feature_names.empty())
                out.timeseries += stay.stay_id + "," + std::to_string(t) + "," + cohort.feature_names[0] + ",\n";
        }
        out.statics += stay.stay_id;
        for (const auto& v : stay.statics) out.statics += "," + v;
        out.statics += "\n";
        out.labels += stay.stay_id + "," + stay.label_code + "\n";
    }
    return out;
}

std::string_view to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "train";
}

Split split_from_string(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw Error("MalformedRow", "unknown split '" + std::string(s) + "'", ErrorKind::internal);
}

std::size_t SplitAssignment::count(Split s) const {
    return static_cast<std::size_t>(std::count(splits.begin(), splits.end(), s));
}

std::vector<std::size_t> SplitAssignment::indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < splits.size(); ++i)
        if (splits[i] == s) out.push_back(i);
    return out;
}

SplitAssignment split(const Cohort& cohort, std::array<double, 3> ratios, std::uint64_t seed) {
    if (cohort.stays.empty()) throw Error("EmptyCohort", "cannot split an empty cohort");
    for (double r : ratios)
        if (!(r >= 0.0)) throw Error("InvalidRatios", "split ratios must be non-negative");
    if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9)
        throw Error("InvalidRatios", "split ratios must sum to 1");
    const std::uint64_t salt = derive_seed(seed, "split");
    SplitAssignment out;
    for (const auto& stay : cohort.stays) {
        const double u = unit_interval(splitmix64(fnv1a64(stay.stay_id) ^ salt));
        Split s = Split::test;
        if (u < ratios[0]) s = Split::train;
        else if (u < ratios[0] + ratios[1]) s = Split::val;
        else if (ratios[2] == 0.0) s = ratios[1] > 0.0 ? Split::val : Split::train;
        out.stay_ids.push_back(stay.stay_id);
        out.splits.push_back(s);
    }
    return out;
}

std::string serialize_split(const SplitAssignment& assignment, std::string_view comment) {
    std::string out = comment.empty() ? std::string{} : "# " + std::string(comment) + "\n";
    out += "stay_id,split\n";
    for (std::size_t i = 0; i < assignment.stay_ids.size(); ++i)
        out += assignment.stay_ids[i] + "," + std::string(to_string(assignment.splits[i])) + "\n";
    return out;
}

SplitAssignment parse_split(std::istream& in) {
    SplitAssignment out;
    std::string line;
    std::size_t line_no = 0;
    if (!textio::next_record(in, line, line_no) || line != "stay_id,split")
        throw Error("MalformedRow", "split file header must be stay_id,split", ErrorKind::internal);
    while (textio::next_record(in, line, line_no)) {
        auto f = textio::split(line);
        if (f.size() != 2) throw Error("MalformedRow", "split line " + std::to_string(line_no), ErrorKind::internal);
        out.stay_ids.push_back(f[0]);
        out.splits.push_back(split_from_string(f[1]));
    }
    return out;
}

std::vector<std::string> select_top_codes(const Cohort& cohort, std::size_t n) {
    if (n < 1) throw Error("InvalidArgument", "top code count must be >= 1");
    std::map<std::string, std::size_t> counts;
    for (const auto& s : cohort.stays) ++counts[s.label_code];
    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < std::min(n, ranked.size()); ++i) out.push_back(ranked[i].first);
    return out;
}

Cohort restrict_to_codes(const Cohort& cohort, const std::vector<std::string>& codes) {
    const std::set<std::string> keep(codes.begin(), codes.end());
    Cohort out;
    out.feature_names = cohort.feature_names;
    out.static_names = cohort.static_names;
    for (const auto& s : cohort.stays)
        if (keep.contains(s.label_code)) out.stays.push_back(s);
    return out;
}

}  // namespace strata
