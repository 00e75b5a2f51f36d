// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "strata/cohort.hpp"
#include "strata/taxonomy.hpp"

#include <filesystem>
#include <random>
#include <sstream>

namespace strata::test {

inline Cohort cohort_from_text(const std::string& ts, const std::string& statics, const std::string& labels,
                               const CohortConfig& config = {}, const TaxonomyTree* taxonomy = nullptr) {
    std::istringstream a(ts), b(statics), c(labels);
    return ingest(CohortSources{a, b, c}, config, taxonomy);
}

inline TaxonomyTree taxonomy_from_text(const std::string& tsv) {
    std::istringstream in(tsv);
    return parse_taxonomy(in);
}

/// Two chapters, each with one block, one category and two leaves.
inline TaxonomyTree tiny_taxonomy() {
    return taxonomy_from_text(
        "code\tparent\tlevel\tname\n"
        "A\tROOT\t1\ta\nA.1\tA\t2\t\nA.1.1\tA.1\t3\t\nA.1.1.1\tA.1.1\t4\t\nA.1.1.2\tA.1.1\t4\t\n"
        "B\tROOT\t1\tb\nB.1\tB\t2\t\nB.1.1\tB.1\t3\t\nB.1.1.1\tB.1.1\t4\t\nB.1.1.2\tB.1.1\t4\t\n");
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("strata_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace strata::test
