// SPDX-License-Identifier: Apache-2.0
#include "strata/embedding.hpp"
#include "strata/hpo.hpp"
#include "strata/synth.hpp"

#include <doctest.h>

using namespace strata;

namespace {

struct Data {
    EmbeddingMatrix embeddings;
    LevelLabels labels;
    SplitAssignment split;
};

Data make_data(int n, std::uint64_t seed) {
    SynthConfig sc;
    sc.n_stays = n;
    sc.n_features = 6;
    sc.n_statics = 1;
    sc.hours = 12;
    sc.seed = seed;
    const auto tax = generate_taxonomy(sc);
    const auto cohort = generate_cohort(sc, tax);
    auto sp = split(cohort, {0.5, 0.4, 0.1}, seed);
    const auto emb = embed_stat(prepare(cohort, sp, {}));
    return {emb, LevelLabels::from_cohort(tax, cohort).aligned(emb.stay_ids), sp};
}

HpoSpace small_space() {
    HpoSpace s;
    s.k_max = 8;
    s.perplexity_max = 10.0;
    return s;
}

}  // namespace

TEST_CASE("best trial dominates every trial") {
    const auto d = make_data(150, 1);
    const auto r = hpo_run(d.embeddings, d.labels, d.split, 1, small_space(), 12, 3);
    REQUIRE(r.trials.size() == 12);
    REQUIRE(r.best.has_value());
    const auto best = *r.trials[*r.best].objective;
    for (std::size_t i = 0; i < r.trials.size(); ++i) {
        const auto& t = r.trials[i];
        CHECK(t.trial == static_cast<int>(i));
        CHECK((t.k >= 2 && t.k <= 8));
        if (!t.objective) continue;
        CHECK(*t.objective <= best);
        if (*t.objective == best) CHECK(i >= *r.best);
    }
}

TEST_CASE("one trial and determinism") {
    const auto d = make_data(120, 2);
    const auto one = hpo_run(d.embeddings, d.labels, d.split, 2, small_space(), 1, 5);
    CHECK(one.trials.size() == 1);
    CHECK(one.best == std::optional<std::size_t>{0});

    const auto a = hpo_run(d.embeddings, d.labels, d.split, 2, small_space(), 6, 5);
    const auto b = hpo_run(d.embeddings, d.labels, d.split, 2, small_space(), 6, 5);
    CHECK(serialize_trials(a) == serialize_trials(b));
    CHECK(a.trials[0].k == one.trials[0].k);
}

TEST_CASE("trials file layout") {
    const auto d = make_data(120, 3);
    const auto r = hpo_run(d.embeddings, d.labels, d.split, 1, small_space(), 3, 9);
    const auto text = serialize_trials(r, "note");
    CHECK(text.rfind("# note\ntrial,k,use_tsne,perplexity,out_dims,objective,status\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 5);
}

TEST_CASE("empty search space") {
    const auto d = make_data(120, 4);
    HpoSpace s;
    s.k_min = 500;
    CHECK_THROWS_WITH_AS(hpo_run(d.embeddings, d.labels, d.split, 1, s, 3, 1), doctest::Contains("EmptySpace"),
                         Error);
}
