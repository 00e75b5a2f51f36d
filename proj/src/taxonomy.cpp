// SPDX-License-Identifier: Apache-2.0
#include "strata/taxonomy.hpp"

#include "strata/core.hpp"
#include "strata/textio.hpp"

#include <algorithm>
#include <fstream>
#include <unordered_set>

namespace strata {

TaxonomyTree TaxonomyTree::from_nodes(std::vector<TaxonomyNode> nodes) {
    TaxonomyTree tree;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const auto& n = nodes[i];
        if (n.code == kRootCode) throw Error("ReservedCode", "ROOT cannot be used as a code");
        if (n.level < 1 || n.level > kTaxonomyDepth)
            throw Error("LevelOutOfRange", "code " + n.code + " has level " + std::to_string(n.level));
        if (!tree.index_.emplace(n.code, i).second)
            throw Error("DuplicateCode", "code " + n.code + " appears more than once");
    }
    for (const auto& n : nodes) {
        if (n.parent != kRootCode && !tree.index_.contains(n.parent))
            throw Error("OrphanCode", "parent " + n.parent + " of " + n.code + " is not defined");
    }
    // Walk each parent chain; a chain longer than the node count revisits a node.
    for (const auto& n : nodes) {
        std::unordered_set<std::string_view> seen{n.code};
        std::string_view cur = n.parent;
        while (cur != kRootCode) {
            if (!seen.insert(cur).second)
                throw Error("CycleDetected", "parent chain of " + n.code + " loops through " + std::string(cur));
            cur = nodes[tree.index_.at(std::string(cur))].parent;
        }
    }
    for (const auto& n : nodes) {
        const int parent_level = n.parent == kRootCode ? 0 : nodes[tree.index_.at(n.parent)].level;
        if (parent_level != n.level - 1)
            throw Error("LevelSkip", "code " + n.code + " at level " + std::to_string(n.level) +
                                         " has parent at level " + std::to_string(parent_level));
    }
    for (const auto& n : nodes) tree.children_[n.parent].push_back(n.code);
    tree.nodes_ = std::move(nodes);
    return tree;
}

bool TaxonomyTree::contains(std::string_view code) const {
    return index_.contains(std::string(code));
}

const TaxonomyNode& TaxonomyTree::node(std::string_view code) const {
    const auto it = index_.find(std::string(code));
    if (it == index_.end()) throw Error("UnknownCode", "code " + std::string(code) + " is not in the taxonomy");
    return nodes_[it->second];
}

const std::vector<std::string>& TaxonomyTree::children(std::string_view code) const {
    static const std::vector<std::string> none;
    const auto it = children_.find(std::string(code));
    return it == children_.end() ? none : it->second;
}

const std::string& TaxonomyTree::ancestor_at_level(std::string_view code, int target_level) const {
    const TaxonomyNode* cur = &node(code);
    if (target_level > cur->level || target_level < 1)
        throw Error("LevelAboveCode", "cannot project " + cur->code + " (level " +
                                          std::to_string(cur->level) + ") to level " +
                                          std::to_string(target_level));
    while (cur->level > target_level) cur = &nodes_[index_.at(cur->parent)];
    return cur->code;
}

std::vector<std::string> TaxonomyTree::codes_at_level(int level) const {
    std::vector<std::string> out;
    for (const auto& n : nodes_)
        if (n.level == level) out.push_back(n.code);
    std::sort(out.begin(), out.end());
    return out;
}

std::size_t TaxonomyTree::edge_count() const {
    return static_cast<std::size_t>(
        std::count_if(nodes_.begin(), nodes_.end(), [](const auto& n) { return n.level > 1; }));
}

int TaxonomyTree::max_level() const {
    int m = 0;
    for (const auto& n : nodes_) m = std::max(m, n.level);
    return m;
}

TaxonomyTree parse_taxonomy(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    if (!textio::next_record(in, line, line_no)) throw Error("MalformedRow", "taxonomy file is empty");
    const auto header = textio::split(line, '\t');
    if (header.size() < 3 || header[0] != "code" || header[1] != "parent" || header[2] != "level")
        throw Error("MalformedRow", "taxonomy header must be code\\tparent\\tlevel\\tname");
    std::vector<TaxonomyNode> nodes;
    while (textio::next_record(in, line, line_no)) {
        auto f = textio::split(line, '\t');
        if (f.size() != header.size())
            throw Error("MalformedRow", "taxonomy line " + std::to_string(line_no) + ": expected " +
                                            std::to_string(header.size()) + " fields");
        const auto level = textio::parse_long(f[2]);
        if (!level || f[0].empty() || f[1].empty())
            throw Error("MalformedRow", "taxonomy line " + std::to_string(line_no) + ": bad code/parent/level");
        nodes.push_back({std::move(f[0]), std::move(f[1]), static_cast<int>(*level),
                         f.size() > 3 ? std::move(f[3]) : std::string{}});
    }
    return TaxonomyTree::from_nodes(std::move(nodes));
}

TaxonomyTree load_taxonomy(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("FileNotFound", "cannot open taxonomy " + path.string());
    return parse_taxonomy(in);
}

std::string serialize_taxonomy(const TaxonomyTree& tree, std::string_view comment) {
    std::string out;
    if (!comment.empty()) (out += "# ") += std::string(comment) + "\n";
    out += "code\tparent\tlevel\tname\n";
    for (const auto& n : tree.nodes())
        out += n.code + '\t' + n.parent + '\t' + std::to_string(n.level) + '\t' + n.name + '\n';
    return out;
}

}  // namespace strata
