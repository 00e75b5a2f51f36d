// SPDX-License-Identifier: Apache-2.0
#include "strata/embedding.hpp"

#include "strata/parallel.hpp"
#include "strata/textio.hpp"

#include <cmath>

namespace strata {

std::string_view to_string(Moment m) {
    switch (m) {
        case Moment::mean: return "mean";
        case Moment::std: return "std";
        case Moment::min: return "min";
        case Moment::max: return "max";
        case Moment::fraction_observed: return "fraction_observed";
    }
    return "mean";
}

Moment moment_from_string(std::string_view s) {
    for (auto m : {Moment::mean, Moment::std, Moment::min, Moment::max, Moment::fraction_observed})
        if (to_string(m) == s) return m;
    throw Error("InvalidConfig", "unknown moment '" + std::string(s) + "'");
}

std::vector<std::pair<Eigen::Index, Eigen::Index>> window_bounds(Eigen::Index hours, int n_windows) {
    std::vector<std::pair<Eigen::Index, Eigen::Index>> out;
    const Eigen::Index base = hours / n_windows;
    const Eigen::Index extra = hours % n_windows;
    Eigen::Index begin = 0;
    for (int w = 0; w < n_windows; ++w) {
        const Eigen::Index len = base + (w < extra ? 1 : 0);
        out.emplace_back(begin, len);
        begin += len;
    }
    return out;
}

Vector stat_features(const Matrix& series, const MaskMatrix& observed, const StatConfig& config) {
    if (series.rows() < 1) throw Error("EmptySeries", "stay has no hours");
    const auto n_features = series.cols();
    const auto n_moments = static_cast<Eigen::Index>(config.moments.size());
    Vector out = Vector::Zero(config.n_windows * n_features * n_moments);
    Eigen::Index k = 0;
    for (const auto& [begin, len] : window_bounds(series.rows(), config.n_windows)) {
        for (Eigen::Index f = 0; f < n_features; ++f, k += n_moments) {
            if (len == 0) continue;
            const auto w = series.col(f).segment(begin, len);
            const double mean = w.mean();
            for (Eigen::Index m = 0; m < n_moments; ++m) {
                double v = 0.0;
                switch (config.moments[static_cast<std::size_t>(m)]) {
                    case Moment::mean: v = mean; break;
                    case Moment::std: v = std::sqrt((w.array() - mean).square().mean()); break;
                    case Moment::min: v = w.minCoeff(); break;
                    case Moment::max: v = w.maxCoeff(); break;
                    case Moment::fraction_observed:
                        v = static_cast<double>(observed.col(f).segment(begin, len).count()) /
                            static_cast<double>(len);
                        break;
                }
                out[k + m] = v;
            }
        }
    }
    return out;
}

EmbeddingMatrix embed_stat(const PreparedCohort& cohort, const StatConfig& config) {
    if (config.n_windows < 1) throw Error("InvalidConfig", "embed.windows must be >= 1");
    if (config.moments.empty()) throw Error("InvalidConfig", "embed.moments must not be empty");
    const auto n_features = cohort.n_features();
    const Eigen::Index series_dim = config.n_windows * n_features * static_cast<Eigen::Index>(config.moments.size());
    const Eigen::Index static_dim = config.include_statics ? cohort.static_width() : 0;

    EmbeddingMatrix e;
    e.provenance = "stat";
    e.vectors.resize(static_cast<Eigen::Index>(cohort.size()), series_dim + static_dim);
    for (const auto& s : cohort.stays) e.stay_ids.push_back(s.stay_id);
    parallel_for(cohort.size(), [&](std::size_t i) {
        const auto& s = cohort.stays[i];
        const auto row = static_cast<Eigen::Index>(i);
        e.vectors.row(row).head(series_dim) = stat_features(s.series, s.observed, config).transpose();
        if (static_dim > 0) e.vectors.row(row).tail(static_dim) = s.statics.transpose();
    });
    return e;
}

std::string serialize_embeddings(const EmbeddingMatrix& e, std::string_view comment) {
    std::string out = comment.empty() ? std::string{} : "# " + std::string(comment) + "\n";
    out += "stay_id";
    for (Eigen::Index d = 0; d < e.dim(); ++d) out += ",dim_" + std::to_string(d);
    out += "\n";
    for (std::size_t i = 0; i < e.size(); ++i) {
        out += e.stay_ids[i];
        for (Eigen::Index d = 0; d < e.dim(); ++d)
            out += "," + textio::format_double(e.vectors(static_cast<Eigen::Index>(i), d));
        out += "\n";
    }
    return out;
}

EmbeddingMatrix parse_embeddings(std::istream& in, std::string provenance) {
    std::string line;
    std::size_t line_no = 0;
    if (!textio::next_record(in, line, line_no))
        throw Error("MalformedRow", "embeddings file is empty", ErrorKind::internal);
    const auto header = textio::split(line);
    if (header.empty() || header[0] != "stay_id")
        throw Error("MalformedRow", "embeddings header must start with stay_id", ErrorKind::internal);
    const auto dim = static_cast<Eigen::Index>(header.size() - 1);
    std::vector<std::vector<double>> rows;
    EmbeddingMatrix e;
    e.provenance = std::move(provenance);
    while (textio::next_record(in, line, line_no)) {
        const auto f = textio::split(line);
        if (static_cast<Eigen::Index>(f.size()) != dim + 1)
            throw Error("MalformedRow", "embeddings line " + std::to_string(line_no), ErrorKind::internal);
        e.stay_ids.push_back(f[0]);
        auto& row = rows.emplace_back();
        for (std::size_t k = 1; k < f.size(); ++k) {
            const auto v = textio::parse_double(f[k]);
            if (!v || !std::isfinite(*v))
                throw Error("MalformedRow", "embeddings line " + std::to_string(line_no) + " has a bad value",
                            ErrorKind::internal);
            row.push_back(*v);
        }
    }
    e.vectors.resize(static_cast<Eigen::Index>(rows.size()), dim);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (Eigen::Index d = 0; d < dim; ++d) e.vectors(static_cast<Eigen::Index>(i), d) = rows[i][static_cast<std::size_t>(d)];
    return e;
}

}  // namespace strata
