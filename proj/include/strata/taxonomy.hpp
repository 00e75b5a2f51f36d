// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <istream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace strata {

/// Parent sentinel of level-1 codes. Never a valid code.
inline constexpr std::string_view kRootCode = "ROOT";
inline constexpr int kTaxonomyDepth = 4;

struct TaxonomyNode {
    std::string code;
    std::string parent;  // kRootCode for level 1
    int level = 0;       // 1..4
    std::string name;
};

/// Rooted code tree where every node at level i > 1 has exactly one parent
/// at level i - 1. Immutable once built.
class TaxonomyTree {
public:
    TaxonomyTree() = default;

    /// Validates and indexes the nodes. Throws Error with code DuplicateCode,
    /// OrphanCode, CycleDetected, LevelSkip, LevelOutOfRange or ReservedCode.
    static TaxonomyTree from_nodes(std::vector<TaxonomyNode> nodes);

    bool contains(std::string_view code) const;
    const TaxonomyNode& node(std::string_view code) const;
    int level_of(std::string_view code) const { return node(code).level; }
    const std::vector<std::string>& children(std::string_view code) const;

    /// Applies the parent mapping until target_level is reached.
    const std::string& ancestor_at_level(std::string_view code, int target_level) const;

    /// Codes of one level, sorted.
    std::vector<std::string> codes_at_level(int level) const;

    const std::vector<TaxonomyNode>& nodes() const { return nodes_; }
    std::size_t size() const { return nodes_.size(); }
    std::size_t edge_count() const;
    int max_level() const;

private:
    std::vector<TaxonomyNode> nodes_;
    std::unordered_map<std::string, std::size_t> index_;
    std::unordered_map<std::string, std::vector<std::string>> children_;
};

TaxonomyTree parse_taxonomy(std::istream& in);
TaxonomyTree load_taxonomy(const std::filesystem::path& path);
/// TSV with header `code\tparent\tlevel\tname`.
std::string serialize_taxonomy(const TaxonomyTree& tree, std::string_view comment = {});

}  // namespace strata
