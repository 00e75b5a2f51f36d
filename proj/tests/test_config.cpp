// SPDX-License-Identifier: Apache-2.0
#include "strata/config.hpp"

#include <doctest.h>

using namespace strata;

TEST_CASE("dump and parse round-trip") {
    RunConfig c;
    c.seed = 7;
    c.synth.n_stays = 321;
    c.synth.signal_strengths = {0.6, 0.3, 0.15, 0.1};
    c.embed.method = "lstm";
    c.embed.rnn.cell = CellType::lstm;
    c.embed.rnn.optimizer.learning_rate = 3e-4;
    c.stratify.levels = {1, 4};
    c.stratify.strategies = {LabelStrategy::majority};
    c.hpo.space.out_dims = {2, 3};
    c.preprocess.ordinal = {"acuity:low|mid|high"};
    const auto text = dump_config(c);
    const auto back = parse_config(text);
    CHECK(dump_config(back) == text);
    CHECK(config_hash(back) == config_hash(c));
    CHECK(back.embed.rnn.cell == CellType::lstm);
    CHECK(back.synth.signal_strengths[3] == 0.1);
}

TEST_CASE("comments, sections and overrides") {
    const auto c = parse_config("# top\n[synth]\nn_stays = 50 ; trailing\n\n[embed]\nmethod = gru\n");
    CHECK(c.synth.n_stays == 50);
    CHECK(c.embed.rnn.cell == CellType::gru);
    RunConfig d = c;
    apply_override(d, "kmeans.n_init=3");
    CHECK(d.kmeans.n_init == 3);
    CHECK(config_hash(d) != config_hash(c));
    apply_override(d, "seed=11");
    CHECK(d.seed == 11);
}

TEST_CASE("config errors") {
    CHECK_THROWS_WITH_AS(parse_config("[synth]\nbogus = 1\n"), doctest::Contains("UnknownKey"), Error);
    CHECK_THROWS_WITH_AS(parse_config("[nothing]\n"), doctest::Contains("UnknownKey"), Error);
    CHECK_THROWS_WITH_AS(parse_config("[synth]\nn_stays = many\n"), doctest::Contains("BadValue"), Error);
    CHECK_THROWS_WITH_AS(parse_config("[stratify]\nlevels = 1,5\n"), doctest::Contains("BadValue"), Error);
    RunConfig c;
    CHECK_THROWS_WITH_AS(apply_override(c, "kmeans.n_init"), doctest::Contains("BadValue"), Error);
    CHECK_THROWS_WITH_AS(load_config("/nonexistent/strata.conf"), doctest::Contains("MissingConfig"), Error);
}

TEST_CASE("hex rendering") {
    CHECK(hex64(0) == "0000000000000000");
    CHECK(hex64(0xabcULL) == "0000000000000abc");
}
