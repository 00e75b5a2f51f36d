// SPDX-License-Identifier: Apache-2.0
#include "strata/preprocess.hpp"

#include "strata/parallel.hpp"
#include "strata/textio.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <set>

namespace strata {

double quantile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty()) throw Error("NoObservedValues", "quantile of an empty sample");
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

const CategoricalEncoding* EncodingSpec::find(std::string_view static_name) const {
    for (const auto& c : categoricals)
        if (c.name == static_name) return &c;
    return nullptr;
}

namespace {

void check_split(const Cohort& cohort, const SplitAssignment& split) {
    if (split.stay_ids.size() != cohort.size())
        throw Error("SplitMismatch", "split covers " + std::to_string(split.stay_ids.size()) +
                                         " stays, cohort has " + std::to_string(cohort.size()));
    for (std::size_t i = 0; i < cohort.size(); ++i)
        if (split.stay_ids[i] != cohort.stays[i].stay_id)
            throw Error("SplitMismatch", "split and cohort disagree at stay " + cohort.stays[i].stay_id);
}

bool is_categorical(const PreprocessConfig& config, const std::string& name) {
    if (std::find(config.onehot.begin(), config.onehot.end(), name) != config.onehot.end()) return true;
    for (const auto& entry : config.ordinal)
        if (entry.substr(0, entry.find(':')) == name) return true;
    return false;
}

std::pair<double, double> median_iqr(std::vector<double>& values) {
    std::sort(values.begin(), values.end());
    const double q1 = quantile_sorted(values, 0.25);
    const double q3 = quantile_sorted(values, 0.75);
    return {quantile_sorted(values, 0.5), q3 - q1};
}

double parse_numeric_static(const std::string& text, const std::string& column) {
    const auto v = textio::parse_double(text);
    if (!v || !std::isfinite(*v))
        throw Error("NonNumericStatic", "static column " + column + " has non-numeric value '" + text + "'");
    return *v;
}

}  // namespace

ScalerParams fit_scaler(const Cohort& cohort, const SplitAssignment& split, const PreprocessConfig& config) {
    check_split(cohort, split);
    const auto train = split.indices(Split::train);
    if (train.empty()) throw Error("EmptyTrainSplit", "scaler needs at least one train stay");

    ScalerParams p;
    p.series_names = cohort.feature_names;
    const auto n_features = static_cast<Eigen::Index>(cohort.feature_names.size());
    p.series_median.resize(n_features);
    p.series_iqr.resize(n_features);
    for (Eigen::Index f = 0; f < n_features; ++f) {
        std::vector<double> values;
        for (auto i : train) {
            const auto& s = cohort.stays[i];
            for (Eigen::Index t = 0; t < s.hours(); ++t)
                if (s.mask(t, f)) values.push_back(s.series(t, f));
        }
        if (values.empty())
            throw Error("NoObservedValues", "feature " + cohort.feature_names[f] + " has no observed train values");
        std::tie(p.series_median[f], p.series_iqr[f]) = median_iqr(values);
    }

    std::vector<double> med, iqr;
    for (std::size_t c = 0; c < cohort.static_names.size(); ++c) {
        const auto& name = cohort.static_names[c];
        if (is_categorical(config, name)) continue;
        std::vector<double> values;
        for (auto i : train) {
            const auto& text = cohort.stays[i].statics[c];
            if (!text.empty()) values.push_back(parse_numeric_static(text, name));
        }
        if (values.empty()) throw Error("NoObservedValues", "static " + name + " has no observed train values");
        const auto [m, q] = median_iqr(values);
        p.static_names.push_back(name);
        med.push_back(m);
        iqr.push_back(q);
    }
    p.static_median = Eigen::Map<Vector>(med.data(), static_cast<Eigen::Index>(med.size()));
    p.static_iqr = Eigen::Map<Vector>(iqr.data(), static_cast<Eigen::Index>(iqr.size()));
    return p;
}

Cohort transform(const Cohort& cohort, const ScalerParams& scaler) {
    if (scaler.series_names != cohort.feature_names)
        throw Error("FeatureMismatch", "scaler was fitted on a different feature list");
    Cohort out = cohort;
    parallel_for(out.stays.size(), [&](std::size_t i) {
        auto& s = out.stays[i];
        for (Eigen::Index f = 0; f < s.series.cols(); ++f) {
            const double med = scaler.series_median[f];
            const double iqr = scaler.series_iqr[f];
            for (Eigen::Index t = 0; t < s.hours(); ++t) {
                if (!s.mask(t, f)) continue;
                s.series(t, f) = iqr > 0.0 ? (s.series(t, f) - med) / iqr : 0.0;
            }
        }
    });
    return out;
}

Vector population_medians(const Cohort& scaled, const SplitAssignment& split) {
    check_split(scaled, split);
    const auto train = split.indices(Split::train);
    Vector out(static_cast<Eigen::Index>(scaled.feature_names.size()));
    for (Eigen::Index f = 0; f < out.size(); ++f) {
        std::vector<double> values;
        for (auto i : train) {
            const auto& s = scaled.stays[i];
            for (Eigen::Index t = 0; t < s.hours(); ++t)
                if (s.mask(t, f)) values.push_back(s.series(t, f));
        }
        if (values.empty())
            throw Error("NoObservedValues", "feature " + scaled.feature_names[f] + " has no observed train values");
        std::sort(values.begin(), values.end());
        out[f] = quantile_sorted(values, 0.5);
    }
    return out;
}

ImputedSeries impute(const Matrix& series, const MaskMatrix& mask, const Vector& population_medians) {
    ImputedSeries out{series, MaskMatrix::Constant(series.rows(), series.cols(), false)};
    for (Eigen::Index f = 0; f < series.cols(); ++f) {
        double last = population_medians[f];
        for (Eigen::Index t = 0; t < series.rows(); ++t) {
            if (mask(t, f)) {
                last = series(t, f);
            } else {
                out.values(t, f) = last;
                out.was_imputed(t, f) = true;
            }
        }
    }
    return out;
}

EncodingSpec fit_encoding(const Cohort& cohort, const SplitAssignment& split, const PreprocessConfig& config) {
    check_split(cohort, split);
    const auto train = split.indices(Split::train);
    EncodingSpec spec;
    auto add = [&](const std::string& entry, CategoricalEncoding::Kind kind) {
        // "name:low|mid|high" fixes the rank order of an ordinal column
        const auto colon = entry.find(':');
        const std::string name = entry.substr(0, colon);
        const auto it = std::find(cohort.static_names.begin(), cohort.static_names.end(), name);
        if (it == cohort.static_names.end())
            throw Error("UnknownStatic", "categorical static " + name + " is not a column of the static file");
        const auto c = static_cast<std::size_t>(it - cohort.static_names.begin());
        std::set<std::string> values;
        for (auto i : train)
            if (!cohort.stays[i].statics[c].empty()) values.insert(cohort.stays[i].statics[c]);
        if (colon != std::string::npos) {
            std::vector<std::string> order;
            for (const auto& v : textio::split(std::string_view(entry).substr(colon + 1), '|'))
                if (!v.empty()) order.push_back(v);
            spec.categoricals.push_back({name, kind, std::move(order)});
            return;
        }
        spec.categoricals.push_back({name, kind, {values.begin(), values.end()}});
    };
    for (const auto& name : config.onehot) add(name, CategoricalEncoding::Kind::onehot);
    for (const auto& name : config.ordinal) add(name, CategoricalEncoding::Kind::ordinal);
    return spec;
}

std::vector<std::string> encoded_static_names(const Cohort& cohort, const EncodingSpec& spec) {
    std::vector<std::string> out;
    for (const auto& name : cohort.static_names) {
        const auto* cat = spec.find(name);
        if (cat && cat->kind == CategoricalEncoding::Kind::onehot) {
            for (const auto& v : cat->categories) out.push_back(name + "=" + v);
        } else {
            out.push_back(name);
        }
    }
    return out;
}

Matrix encode_statics(const Cohort& cohort, const EncodingSpec& spec, const ScalerParams& scaler) {
    const auto width = static_cast<Eigen::Index>(encoded_static_names(cohort, spec).size());
    Matrix out = Matrix::Zero(static_cast<Eigen::Index>(cohort.size()), width);
    for (std::size_t i = 0; i < cohort.size(); ++i) {
        const auto& s = cohort.stays[i];
        Eigen::Index col = 0;
        for (std::size_t c = 0; c < cohort.static_names.size(); ++c) {
            const auto& name = cohort.static_names[c];
            const auto& text = s.statics[c];
            if (const auto* cat = spec.find(name)) {
                const auto it = std::find(cat->categories.begin(), cat->categories.end(), text);
                const auto rank = static_cast<Eigen::Index>(it - cat->categories.begin());
                const bool known = it != cat->categories.end();
                if (cat->kind == CategoricalEncoding::Kind::onehot) {
                    if (known) out(static_cast<Eigen::Index>(i), col + rank) = 1.0;
                    col += static_cast<Eigen::Index>(cat->categories.size());
                } else {
                    out(static_cast<Eigen::Index>(i), col++) = known ? static_cast<double>(rank) : -1.0;
                }
                continue;
            }
            const auto k = std::find(scaler.static_names.begin(), scaler.static_names.end(), name);
            if (k == scaler.static_names.end())
                throw Error("FeatureMismatch", "static " + name + " was not fitted by the scaler");
            const auto j = k - scaler.static_names.begin();
            double v = 0.0;
            if (!text.empty()) {
                const double x = parse_numeric_static(text, name);
                const double iqr = scaler.static_iqr[j];
                v = iqr > 0.0 ? (x - scaler.static_median[j]) / iqr : 0.0;
            }
            out(static_cast<Eigen::Index>(i), col++) = v;
        }
    }
    return out;
}

PreparedCohort apply_preprocess(const Cohort& cohort, const PreprocessParams& params) {
    const Cohort scaled = transform(cohort, params.scaler);
    const Matrix statics = encode_statics(cohort, params.encoding, params.scaler);
    PreparedCohort out;
    out.feature_names = cohort.feature_names;
    out.static_names = encoded_static_names(cohort, params.encoding);
    out.stays.resize(cohort.size());
    parallel_for(cohort.size(), [&](std::size_t i) {
        const auto& s = scaled.stays[i];
        auto imputed = impute(s.series, s.mask, params.medians);
        out.stays[i] = {s.stay_id, std::move(imputed.values), s.mask,
                        statics.row(static_cast<Eigen::Index>(i)).transpose(), s.label_code};
    });
    return out;
}

PreparedCohort prepare(const Cohort& cohort, const SplitAssignment& split, const PreprocessConfig& config,
                       PreprocessParams* fitted) {
    PreprocessParams params;
    params.scaler = fit_scaler(cohort, split, config);
    params.medians = population_medians(transform(cohort, params.scaler), split);
    params.encoding = fit_encoding(cohort, split, config);
    auto out = apply_preprocess(cohort, params);
    if (fitted) *fitted = std::move(params);
    return out;
}

namespace {

using nlohmann::json;

json vector_json(const Vector& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

Vector vector_from(const json& j) {
    const auto values = j.get<std::vector<double>>();
    return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace

std::string serialize_preprocess_params(const PreprocessParams& params, const std::string& extra_json) {
    json j = json::parse(extra_json);
    j["format"] = "strata-preprocess";
    j["version"] = 1;
    j["series"] = {{"names", params.scaler.series_names},
                   {"median", vector_json(params.scaler.series_median)},
                   {"iqr", vector_json(params.scaler.series_iqr)},
                   {"impute_median", vector_json(params.medians)}};
    j["statics"] = {{"names", params.scaler.static_names},
                    {"median", vector_json(params.scaler.static_median)},
                    {"iqr", vector_json(params.scaler.static_iqr)}};
    json cats = json::array();
    for (const auto& c : params.encoding.categoricals)
        cats.push_back({{"name", c.name},
                        {"kind", c.kind == CategoricalEncoding::Kind::onehot ? "onehot" : "ordinal"},
                        {"categories", c.categories}});
    j["categoricals"] = cats;
    return j.dump(2) + "\n";
}

PreprocessParams parse_preprocess_params(const std::string& json_text) {
    try {
        const json j = json::parse(json_text);
        if (j.at("format") != "strata-preprocess") throw Error("BadFormat", "not a preprocessing sidecar", ErrorKind::internal);
        PreprocessParams p;
        p.scaler.series_names = j.at("series").at("names").get<std::vector<std::string>>();
        p.scaler.series_median = vector_from(j.at("series").at("median"));
        p.scaler.series_iqr = vector_from(j.at("series").at("iqr"));
        p.medians = vector_from(j.at("series").at("impute_median"));
        p.scaler.static_names = j.at("statics").at("names").get<std::vector<std::string>>();
        p.scaler.static_median = vector_from(j.at("statics").at("median"));
        p.scaler.static_iqr = vector_from(j.at("statics").at("iqr"));
        for (const auto& c : j.at("categoricals")) {
            CategoricalEncoding e;
            e.name = c.at("name").get<std::string>();
            const auto kind = c.at("kind").get<std::string>();
            if (kind != "onehot" && kind != "ordinal") throw Error("BadFormat", "unknown encoding kind " + kind, ErrorKind::internal);
            e.kind = kind == "onehot" ? CategoricalEncoding::Kind::onehot : CategoricalEncoding::Kind::ordinal;
            e.categories = c.at("categories").get<std::vector<std::string>>();
            p.encoding.categoricals.push_back(std::move(e));
        }
        const auto f = p.scaler.series_names.size();
        if (static_cast<std::size_t>(p.scaler.series_median.size()) != f ||
            static_cast<std::size_t>(p.scaler.series_iqr.size()) != f || static_cast<std::size_t>(p.medians.size()) != f)
            throw Error("BadFormat", "series statistics do not match the feature list", ErrorKind::internal);
        return p;
    } catch (const json::exception& e) {
        throw Error("BadFormat", std::string("malformed preprocessing sidecar: ") + e.what(), ErrorKind::internal);
    }
}

}  // namespace strata
