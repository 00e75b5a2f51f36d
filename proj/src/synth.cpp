// SPDX-License-Identifier: Apache-2.0
#include "strata/synth.hpp"

#include "strata/parallel.hpp"
#include "strata/textio.hpp"

#include <cmath>
#include <numeric>

namespace strata {

void SynthConfig::validate() const {
    for (int b : branching)
        if (b < 1) throw Error("InvalidConfig", "synth.branching entries must be >= 1");
    if (n_stays < 1 || n_features < 1 || n_statics < 0 || hours < 1)
        throw Error("InvalidConfig", "synth sizes must be positive");
    if (!(missing_rate >= 0.0 && missing_rate < 1.0))
        throw Error("InvalidConfig", "synth.missing_rate must be in [0, 1)");
    if (!(ar_coefficient >= 0.0 && ar_coefficient < 1.0))
        throw Error("InvalidConfig", "synth.ar_coefficient must be in [0, 1)");
    if (!(noise_std >= 0.0)) throw Error("InvalidConfig", "synth.noise_std must be >= 0");
}

TaxonomyTree generate_taxonomy(const SynthConfig& config) {
    config.validate();
    std::vector<TaxonomyNode> nodes;
    std::vector<std::string> frontier{std::string(kRootCode)};
    for (int level = 1; level <= kTaxonomyDepth; ++level) {
        std::vector<std::string> next;
        for (const auto& parent : frontier) {
            for (int c = 1; c <= config.branching[level - 1]; ++c) {
                std::string code = level == 1 ? "C" + std::to_string(c) : parent + "." + std::to_string(c);
                nodes.push_back({code, parent, level, "level " + std::to_string(level) + " group " + code});
                next.push_back(std::move(code));
            }
        }
        frontier = std::move(next);
    }
    return TaxonomyTree::from_nodes(std::move(nodes));
}

namespace {

void check_shape(const SynthConfig& config, const TaxonomyTree& taxonomy) {
    std::size_t expected = 1;
    for (int level = 1; level <= kTaxonomyDepth; ++level) {
        expected *= static_cast<std::size_t>(config.branching[level - 1]);
        if (taxonomy.codes_at_level(level).size() != expected)
            throw Error("ConfigMismatch", "taxonomy level " + std::to_string(level) + " does not match synth.branching");
    }
    for (const auto& n : taxonomy.nodes()) {
        if (n.level < kTaxonomyDepth &&
            taxonomy.children(n.code).size() != static_cast<std::size_t>(config.branching[n.level]))
            throw Error("ConfigMismatch", "node " + n.code + " does not have the configured branching");
    }
}

double round6(double x) { return std::round(x * 1e6) / 1e6; }

}  // namespace

Vector node_offset(const SynthConfig& config, const TaxonomyTree& taxonomy, std::string_view code) {
    const int level = taxonomy.level_of(code);
    Rng rng(derive_seed(config.seed, "offset:" + std::string(code)));
    Vector v(config.n_features);
    for (auto& x : v) x = rng.normal();
    return v * config.signal_strengths[level - 1];
}

Cohort generate_cohort(const SynthConfig& config, const TaxonomyTree& taxonomy) {
    config.validate();
    check_shape(config, taxonomy);

    const auto leaves = taxonomy.codes_at_level(kTaxonomyDepth);
    const auto n_leaves = leaves.size();

    // Zipf ranks are spread over the leaves by a seeded permutation.
    std::vector<std::size_t> rank_of(n_leaves);
    std::iota(rank_of.begin(), rank_of.end(), std::size_t{0});
    Rng perm_rng(derive_seed(config.seed, "zipf"));
    shuffle(std::span(rank_of), perm_rng);
    std::vector<double> weights(n_leaves);
    for (std::size_t i = 0; i < n_leaves; ++i)
        weights[i] = std::pow(static_cast<double>(rank_of[i] + 1), -config.zipf_exponent);

    std::vector<Vector> leaf_mean(n_leaves);
    std::vector<Vector> leaf_static(n_leaves);
    for (std::size_t i = 0; i < n_leaves; ++i) {
        Vector mu = Vector::Zero(config.n_features);
        for (int level = 1; level <= kTaxonomyDepth; ++level)
            mu += node_offset(config, taxonomy, taxonomy.ancestor_at_level(leaves[i], level));
        leaf_mean[i] = std::move(mu);
        const auto& chapter = taxonomy.ancestor_at_level(leaves[i], 1);
        Rng srng(derive_seed(config.seed, "static:" + chapter));
        Vector s(config.n_statics);
        for (auto& x : s) x = srng.normal() * config.signal_strengths[0];
        leaf_static[i] = std::move(s);
    }

    Cohort cohort;
    // Zero-padded so the sorted order used at ingest matches generation order.
    const auto digits = std::to_string(config.n_features).size();
    for (int f = 0; f < config.n_features; ++f) {
        const auto id = std::to_string(f + 1);
        cohort.feature_names.push_back("f" + std::string(digits - id.size(), '0') + id);
    }
    for (int s = 0; s < config.n_statics; ++s) cohort.static_names.push_back("static" + std::to_string(s + 1));

    const int width = std::max<int>(5, static_cast<int>(std::to_string(config.n_stays).size()));
    cohort.stays.resize(static_cast<std::size_t>(config.n_stays));
    const double a = config.ar_coefficient;
    const double stationary = config.noise_std / std::sqrt(1.0 - a * a);

    parallel_for(cohort.stays.size(), [&](std::size_t i) {
        Rng rng(derive_seed(config.seed, "stay", i));
        const std::size_t leaf = rng.discrete(weights);
        const Vector& mu = leaf_mean[leaf];

        StayRecord stay;
        std::string id = std::to_string(i);
        stay.stay_id = "s" + std::string(static_cast<std::size_t>(width) - std::min<std::size_t>(width, id.size()), '0') + id;
        stay.label_code = leaves[leaf];
        stay.series.resize(config.hours, config.n_features);
        stay.mask.resize(config.hours, config.n_features);
        Vector v(config.n_features);
        for (int f = 0; f < config.n_features; ++f) v[f] = mu[f] + stationary * rng.normal();
        for (int t = 0; t < config.hours; ++t) {
            if (t > 0)
                for (int f = 0; f < config.n_features; ++f)
                    v[f] = a * v[f] + (1.0 - a) * mu[f] + config.noise_std * rng.normal();
            for (int f = 0; f < config.n_features; ++f) {
                const bool missing = rng.uniform() < config.missing_rate;
                stay.mask(t, f) = !missing;
                stay.series(t, f) = missing ? std::numeric_limits<double>::quiet_NaN() : round6(v[f]);
            }
        }
        for (int s = 0; s < config.n_statics; ++s)
            stay.statics.push_back(textio::format_double(round6(leaf_static[leaf][s] + config.noise_std * rng.normal())));
        cohort.stays[i] = std::move(stay);
    });
    return cohort;
}

}  // namespace strata
