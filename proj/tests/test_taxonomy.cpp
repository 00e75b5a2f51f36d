// SPDX-License-Identifier: Apache-2.0
#include "strata/synth.hpp"
#include "strata/taxonomy.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace strata;

namespace {

std::string error_code(const std::string& tsv) {
    try {
        test::taxonomy_from_text(tsv);
    } catch (const Error& e) {
        return e.code();
    }
    return "";
}

}  // namespace

TEST_CASE("minimal two-level fixture is valid") {
    const auto t = test::taxonomy_from_text("code\tparent\tlevel\tname\nA\tROOT\t1\t\nA1\tA\t2\t\n");
    CHECK(t.size() == 2);
    CHECK(t.ancestor_at_level("A1", 1) == "A");
    CHECK(t.edge_count() == 1);
}

TEST_CASE("structural errors are reported by code") {
    const std::string h = "code\tparent\tlevel\tname\n";
    CHECK(error_code(h + "A\tROOT\t1\t\nB\tA\t2\t\nC\tA\t3\t\n") == "LevelSkip");
    CHECK(error_code(h + "A\tROOT\t1\t\nA\tROOT\t1\t\n") == "DuplicateCode");
    CHECK(error_code(h + "A\tROOT\t1\t\nB\tX\t2\t\n") == "OrphanCode");
    CHECK(error_code(h + "A\tB\t2\t\nB\tA\t2\t\n") == "CycleDetected");
    CHECK(error_code(h + "ROOT\tROOT\t1\t\n") == "ReservedCode");
    CHECK(error_code(h + "A\tROOT\t5\t\n") == "LevelOutOfRange");
}

TEST_CASE("ancestor projection on path-named codes") {
    SynthConfig c;
    const auto t = generate_taxonomy(c);
    CHECK(t.ancestor_at_level("C2.1.3.2", 1) == "C2");
    CHECK(t.ancestor_at_level("C2.1.3.2", 3) == "C2.1.3");
    CHECK(t.ancestor_at_level("C2.1.3.2", 4) == "C2.1.3.2");
    CHECK_THROWS_AS(t.ancestor_at_level("C2", 3), Error);
}

TEST_CASE("codes per level") {
    SynthConfig c;
    c.branching = {2, 2, 2, 2};
    CHECK(generate_taxonomy(c).codes_at_level(1).size() == 2);
    CHECK(generate_taxonomy(c).size() == 30);
    c.branching = {3, 3, 3, 2};
    CHECK(generate_taxonomy(c).codes_at_level(4).size() == 54);
    const auto one = test::taxonomy_from_text("code\tparent\tlevel\tname\nA\tROOT\t1\t\nA1\tA\t2\t\n");
    CHECK(one.codes_at_level(1) == std::vector<std::string>{"A"});
}

TEST_CASE("tree properties hold for generated trees") {
    SynthConfig c;
    c.branching = {3, 2, 4, 2};
    const auto t = generate_taxonomy(c);
    CHECK(t.edge_count() == t.size() - t.codes_at_level(1).size());
    for (int level = 2; level <= 4; ++level)
        for (const auto& code : t.codes_at_level(level)) {
            const auto& parent = t.ancestor_at_level(code, level - 1);
            CHECK(t.level_of(parent) == level - 1);
            CHECK(t.ancestor_at_level(code, 1) == t.ancestor_at_level(parent, 1));
        }
}

TEST_CASE("taxonomy serialization round-trips") {
    const auto t = test::tiny_taxonomy();
    const auto back = test::taxonomy_from_text(serialize_taxonomy(t, "comment"));
    CHECK(back.size() == t.size());
    for (const auto& n : t.nodes()) {
        CHECK(back.node(n.code).parent == n.parent);
        CHECK(back.node(n.code).level == n.level);
        CHECK(back.node(n.code).name == n.name);
    }
}
