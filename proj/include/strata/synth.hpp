// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "strata/cohort.hpp"
#include "strata/taxonomy.hpp"

#include <array>
#include <cstdint>

namespace strata {

/// Synthetic cohort with a planted four-level signal. Each taxonomy node owns
/// a random mean offset scaled by its level's signal strength; a stay's
/// features follow an AR(1) process around the sum of its ancestors' offsets.
struct SynthConfig {
    std::array<int, 4> branching{3, 3, 3, 2};
    int n_stays = 2000;
    int n_features = 12;
    int n_statics = 4;
    int hours = 48;
    std::array<double, 4> signal_strengths{2.0, 1.0, 0.5, 0.25};
    double noise_std = 1.0;
    double ar_coefficient = 0.8;
    double missing_rate = 0.1;
    double zipf_exponent = 1.1;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Complete tree with path-named codes (C2, C2.1, C2.1.3, C2.1.3.2).
TaxonomyTree generate_taxonomy(const SynthConfig& config);

/// Throws ConfigMismatch when the taxonomy does not have the configured branching.
Cohort generate_cohort(const SynthConfig& config, const TaxonomyTree& taxonomy);

/// Mean offset of one taxonomy node in feature space (level strength included).
Vector node_offset(const SynthConfig& config, const TaxonomyTree& taxonomy, std::string_view code);

}  // namespace strata
