// SPDX-License-Identifier: Apache-2.0
#include "strata/config.hpp"

#include "strata/textio.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <limits>

namespace strata {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
    throw Error("BadValue", "'" + std::string(key) + "': cannot read '" + std::string(value) + "' as " +
                                std::string(expected));
}

// Value codecs, one overload per field type.

void decode(std::string_view key, std::string_view v, int& out) {
    const auto x = textio::parse_long(v);
    if (!x || *x < std::numeric_limits<int>::min() || *x > std::numeric_limits<int>::max()) bad_value(key, v, "integer");
    out = static_cast<int>(*x);
}
void decode(std::string_view key, std::string_view v, unsigned& out) {
    const auto x = textio::parse_long(v);
    if (!x || *x < 0) bad_value(key, v, "non-negative integer");
    out = static_cast<unsigned>(*x);
}
void decode(std::string_view key, std::string_view v, std::uint64_t& out) {
    const auto t = trim(v);
    const auto r = std::from_chars(t.data(), t.data() + t.size(), out);
    if (r.ec != std::errc() || r.ptr != t.data() + t.size() || t.empty()) bad_value(key, v, "unsigned 64-bit integer");
}
void decode(std::string_view key, std::string_view v, double& out) {
    const auto x = textio::parse_double(v);
    if (!x || !std::isfinite(*x)) bad_value(key, v, "finite number");
    out = *x;
}
void decode(std::string_view key, std::string_view v, bool& out) {
    const auto t = trim(v);
    if (t == "true" || t == "1" || t == "yes") out = true;
    else if (t == "false" || t == "0" || t == "no") out = false;
    else bad_value(key, v, "boolean");
}
void decode(std::string_view, std::string_view v, std::string& out) { out = std::string(trim(v)); }

void decode(std::string_view key, std::string_view v, Moment& out) {
    try {
        out = moment_from_string(trim(v));
    } catch (const Error&) {
        bad_value(key, v, "moment name");
    }
}
void decode(std::string_view key, std::string_view v, LabelStrategy& out) {
    try {
        out = strategy_from_string(trim(v));
    } catch (const Error&) {
        bad_value(key, v, "centroid, medoid or majority");
    }
}

std::vector<std::string_view> list_items(std::string_view v) {
    std::vector<std::string_view> items;
    v = trim(v);
    if (v.empty()) return items;
    std::size_t start = 0;
    while (true) {
        const auto comma = v.find(',', start);
        items.push_back(trim(v.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return items;
}

template <typename T>
void decode(std::string_view key, std::string_view v, std::vector<T>& out) {
    std::vector<T> items;
    for (auto item : list_items(v)) {
        T x{};
        decode(key, item, x);
        items.push_back(std::move(x));
    }
    out = std::move(items);
}
template <typename T, std::size_t N>
void decode(std::string_view key, std::string_view v, std::array<T, N>& out) {
    const auto items = list_items(v);
    if (items.size() != N) bad_value(key, v, std::to_string(N) + " comma-separated values");
    for (std::size_t i = 0; i < N; ++i) decode(key, items[i], out[i]);
}
std::string encode(int x) { return std::to_string(x); }
std::string encode(unsigned x) { return std::to_string(x); }
std::string encode(std::uint64_t x) { return std::to_string(x); }
std::string encode(double x) { return textio::format_double(x); }
std::string encode(bool x) { return x ? "true" : "false"; }
std::string encode(const std::string& x) { return x; }
std::string encode(Moment x) { return std::string(to_string(x)); }
std::string encode(LabelStrategy x) { return std::string(to_string(x)); }
template <typename Range>
std::string encode_list(const Range& r) {
    std::string out;
    for (const auto& x : r) {
        if (!out.empty()) out += ',';
        out += encode(x);
    }
    return out;
}
template <typename T>
std::string encode(const std::vector<T>& v) { return encode_list(v); }
template <typename T, std::size_t N>
std::string encode(const std::array<T, N>& v) { return encode_list(v); }

struct Key {
    std::string_view section;  // empty: top level
    std::string_view name;
    std::function<void(RunConfig&, std::string_view)> set;
    std::function<std::string(const RunConfig&)> get;
};

template <typename Access>
Key key(std::string_view section, std::string_view name, Access access) {
    return {section, name,
            [access, name](RunConfig& c, std::string_view v) { decode(name, v, access(c)); },
            [access](const RunConfig& c) { return encode(access(const_cast<RunConfig&>(c))); }};
}

#define STRATA_KEY(section, name, expr) key(section, name, [](RunConfig& c) -> auto& { return expr; })

const std::vector<Key>& keys() {
    static const std::vector<Key> table = {
        STRATA_KEY("", "seed", c.seed),
        STRATA_KEY("", "threads", c.threads),

        STRATA_KEY("cohort", "max_hours", c.cohort.max_hours),
        STRATA_KEY("cohort", "features", c.cohort.features),
        STRATA_KEY("cohort", "split_ratios", c.cohort.split_ratios),
        STRATA_KEY("cohort", "top_codes", c.cohort.top_codes),

        STRATA_KEY("synth", "branching", c.synth.branching),
        STRATA_KEY("synth", "n_stays", c.synth.n_stays),
        STRATA_KEY("synth", "n_features", c.synth.n_features),
        STRATA_KEY("synth", "n_statics", c.synth.n_statics),
        STRATA_KEY("synth", "hours", c.synth.hours),
        STRATA_KEY("synth", "signal_strengths", c.synth.signal_strengths),
        STRATA_KEY("synth", "noise_std", c.synth.noise_std),
        STRATA_KEY("synth", "ar_coefficient", c.synth.ar_coefficient),
        STRATA_KEY("synth", "missing_rate", c.synth.missing_rate),
        STRATA_KEY("synth", "zipf_exponent", c.synth.zipf_exponent),

        STRATA_KEY("preprocess", "onehot", c.preprocess.onehot),
        STRATA_KEY("preprocess", "ordinal", c.preprocess.ordinal),

        STRATA_KEY("embed", "method", c.embed.method),
        STRATA_KEY("embed", "stat_windows", c.embed.stat.n_windows),
        STRATA_KEY("embed", "stat_moments", c.embed.stat.moments),
        STRATA_KEY("embed", "include_statics", c.embed.stat.include_statics),
        STRATA_KEY("embed", "hidden_size", c.embed.rnn.hidden_size),
        STRATA_KEY("embed", "per_feature", c.embed.rnn.per_feature),
        STRATA_KEY("embed", "hidden_per_feature", c.embed.rnn.hidden_per_feature),
        STRATA_KEY("embed", "epochs", c.embed.rnn.epochs),
        STRATA_KEY("embed", "batch_size", c.embed.rnn.batch_size),
        STRATA_KEY("embed", "learning_rate", c.embed.rnn.optimizer.learning_rate),
        STRATA_KEY("embed", "weight_decay", c.embed.rnn.optimizer.weight_decay),
        STRATA_KEY("embed", "beta1", c.embed.rnn.optimizer.beta1),
        STRATA_KEY("embed", "beta2", c.embed.rnn.optimizer.beta2),
        STRATA_KEY("embed", "epsilon", c.embed.rnn.optimizer.eps),
        STRATA_KEY("embed", "grad_clip_norm", c.embed.rnn.grad_clip_norm),

        STRATA_KEY("tsne", "out_dims", c.tsne.out_dims),
        STRATA_KEY("tsne", "perplexity", c.tsne.perplexity),
        STRATA_KEY("tsne", "iterations", c.tsne.iterations),
        STRATA_KEY("tsne", "early_exaggeration", c.tsne.early_exaggeration),
        STRATA_KEY("tsne", "exaggeration_iterations", c.tsne.exaggeration_iterations),
        STRATA_KEY("tsne", "learning_rate", c.tsne.learning_rate),
        STRATA_KEY("tsne", "initial_momentum", c.tsne.initial_momentum),
        STRATA_KEY("tsne", "final_momentum", c.tsne.final_momentum),
        STRATA_KEY("tsne", "momentum_switch_iteration", c.tsne.momentum_switch_iteration),

        STRATA_KEY("kmeans", "max_iter", c.kmeans.max_iter),
        STRATA_KEY("kmeans", "tol", c.kmeans.tol),
        STRATA_KEY("kmeans", "n_init", c.kmeans.n_init),

        STRATA_KEY("stratify", "levels", c.stratify.levels),
        STRATA_KEY("stratify", "k", c.stratify.k),
        STRATA_KEY("stratify", "use_tsne", c.stratify.use_tsne),
        STRATA_KEY("stratify", "min_cluster_size", c.stratify.min_cluster_size),
        STRATA_KEY("stratify", "strategies", c.stratify.strategies),

        STRATA_KEY("hpo", "n_trials", c.hpo.n_trials),
        STRATA_KEY("hpo", "levels", c.hpo.levels),
        STRATA_KEY("hpo", "k_min", c.hpo.space.k_min),
        STRATA_KEY("hpo", "k_max", c.hpo.space.k_max),
        STRATA_KEY("hpo", "allow_tsne", c.hpo.space.allow_tsne),
        STRATA_KEY("hpo", "perplexity_min", c.hpo.space.perplexity_min),
        STRATA_KEY("hpo", "perplexity_max", c.hpo.space.perplexity_max),
        STRATA_KEY("hpo", "out_dims", c.hpo.space.out_dims),
    };
    return table;
}

#undef STRATA_KEY

void check_levels(std::string_view key, const std::vector<int>& levels) {
    for (int l : levels)
        if (l < 1 || l > kTaxonomyDepth) throw Error("BadValue", "'" + std::string(key) + "': levels must be 1..4");
}

}  // namespace

void set_value(RunConfig& config, std::string_view section, std::string_view name, std::string_view value) {
    for (const auto& k : keys()) {
        if (k.section != section || k.name != name) continue;
        k.set(config, value);
        if (section == "embed" && name == "method" && config.embed.method != "stat" && config.embed.method != "gru" &&
            config.embed.method != "lstm")
            bad_value(name, value, "stat, gru or lstm");
        if (name == "levels") check_levels(name, section == "hpo" ? config.hpo.levels : config.stratify.levels);
        if (section == "embed" && (name == "method")) {
            if (config.embed.method == "gru") config.embed.rnn.cell = CellType::gru;
            if (config.embed.method == "lstm") config.embed.rnn.cell = CellType::lstm;
        }
        return;
    }
    const std::string full = section.empty() ? std::string(name) : std::string(section) + "." + std::string(name);
    throw Error("UnknownKey", "unknown configuration key '" + full + "'");
}

RunConfig parse_config(std::string_view text, RunConfig base) {
    std::string section;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto end = text.find('\n', pos);
        auto line = text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
        pos = end == std::string_view::npos ? text.size() + 1 : end + 1;
        ++line_no;
        if (const auto hash = line.find_first_of("#;"); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw Error("BadValue", "line " + std::to_string(line_no) + ": unterminated section");
            section = std::string(trim(line.substr(1, line.size() - 2)));
            bool known = false;
            for (const auto& k : keys()) known = known || k.section == section;
            if (!known) throw Error("UnknownKey", "line " + std::to_string(line_no) + ": unknown section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw Error("BadValue", "line " + std::to_string(line_no) + ": expected key = value");
        set_value(base, section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
    std::string text;
    try {
        text = textio::read_file(path);
    } catch (const Error& e) {
        throw Error("MissingConfig", "cannot read config " + path.string());
    }
    return parse_config(text, std::move(base));
}

void apply_override(RunConfig& config, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos) throw Error("BadValue", "override must look like section.key=value");
    const auto lhs = trim(assignment.substr(0, eq));
    const auto dot = lhs.find('.');
    if (dot == std::string_view::npos) set_value(config, "", lhs, assignment.substr(eq + 1));
    else set_value(config, lhs.substr(0, dot), lhs.substr(dot + 1), assignment.substr(eq + 1));
}

std::string dump_config(const RunConfig& config) {
    std::string out;
    std::string_view section;
    for (const auto& k : keys()) {
        if (k.section != section) {
            section = k.section;
            out += "\n[" + std::string(section) + "]\n";
        }
        out += std::string(k.name) + " = " + k.get(config) + "\n";
    }
    return out;
}

std::uint64_t config_hash(const RunConfig& config) { return fnv1a64(dump_config(config)); }

std::string hex64(std::uint64_t value) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[value & 0xf];
        value >>= 4;
    }
    return out;
}

}  // namespace strata
