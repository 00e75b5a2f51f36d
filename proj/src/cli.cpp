// SPDX-License-Identifier: Apache-2.0
#include "strata/cli.hpp"

#include "strata/config.hpp"
#include "strata/metrics.hpp"
#include "strata/textio.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace strata {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

constexpr std::string_view kSubcommands[] = {"synth",         "ingest",   "preprocess", "embed",
                                             "reduce",        "cluster",  "stratify",   "rediscover",
                                             "assign-labels", "evaluate", "hpo",        "report"};

struct Options {
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::string run_dir = ".";

    // Stage inputs and selectors.
    std::string timeseries, statics, labels, taxonomy;
    std::string method;
    bool per_feature = false;
    std::string embedder;
    std::vector<int> levels;
    std::optional<int> k;
    bool tsne = false;
    std::optional<double> perplexity;
    std::vector<std::string> strategies;
    std::optional<int> trials;
};

class Run {
public:
    Run(std::string subcommand, RunConfig config, fs::path dir, std::ostream& out)
        : sub_(std::move(subcommand)), config_(std::move(config)), dir_(std::move(dir)), out_(out) {}

    const RunConfig& config() const { return config_; }
    RunConfig& config() { return config_; }
    fs::path path(const fs::path& relative) const { return dir_ / relative; }

    std::string provenance() const {
        return "producer=strata " + sub_ + " version=" + std::string(kVersion) +
               " config_hash=" + hex64(config_hash(config_)) + " seed=" + std::to_string(config_.seed);
    }
    ojson provenance_json() const {
        ojson j;
        j["producer"] = "strata " + sub_;
        j["version"] = std::string(kVersion);
        j["config_hash"] = hex64(config_hash(config_));
        j["seed"] = config_.seed;
        return j;
    }

    void emit(const fs::path& relative, std::string_view content) const {
        textio::write_file_atomic(path(relative), content);
        out_ << "wrote " << path(relative).string() << "\n";
    }
    std::ostream& log() const { return out_; }

private:
    std::string sub_;
    RunConfig config_;
    fs::path dir_;
    std::ostream& out_;
};

void require(const fs::path& p, const std::string& what) {
    if (!fs::exists(p)) throw Error("MissingInput", what + " (" + p.string() + " not found)");
}

// Files produced by earlier stages are trusted; anything wrong with them is internal.
template <typename Parse>
auto read_intermediate(const fs::path& p, Parse&& parse) {
    try {
        return parse(textio::read_file(p));
    } catch (const nlohmann::json::exception& e) {
        throw Error("MalformedIntermediate", p.string() + ": " + e.what(), ErrorKind::internal);
    } catch (const Error& e) {
        throw Error("MalformedIntermediate", p.string() + ": " + e.what(), ErrorKind::internal);
    }
}

struct StageData {
    TaxonomyTree taxonomy;
    Cohort cohort;
    SplitAssignment split;
};

StageData load_cohort(const Run& run) {
    const fs::path dir = run.path("cohort");
    require(dir / "labels.csv", "missing ingested cohort; run ingest first");
    StageData d;
    d.taxonomy = read_intermediate(dir / "taxonomy.tsv", [](const std::string& text) {
        std::istringstream in(text);
        return parse_taxonomy(in);
    });
    CohortConfig cc = run.config().cohort;
    cc.top_codes = 0;
    cc.features.clear();
    try {
        d.cohort = ingest(dir / "timeseries.csv", dir / "static.csv", dir / "labels.csv", cc, &d.taxonomy);
    } catch (const Error& e) {
        throw Error("MalformedIntermediate", dir.string() + ": " + e.what(), ErrorKind::internal);
    }
    d.split = read_intermediate(dir / "split.csv", [](const std::string& text) {
        std::istringstream in(text);
        return parse_split(in);
    });
    return d;
}

bool valid_tag(std::string_view tag) {
    return tag == "stat" || tag == "gru" || tag == "lstm" || tag == "gru_pf" || tag == "lstm_pf";
}

std::string default_tag(const RunConfig& c) {
    if (c.embed.method == "stat") return "stat";
    return c.embed.method + (c.embed.rnn.per_feature ? "_pf" : "");
}

std::string embedder_of(const Options& o, const RunConfig& c) {
    const std::string tag = o.embedder.empty() ? default_tag(c) : o.embedder;
    if (!valid_tag(tag)) throw Error("UnknownEmbedder", "unknown embedder '" + tag + "'");
    return tag;
}

EmbeddingMatrix load_embeddings(const Run& run, const std::string& tag) {
    const auto p = run.path("embeddings") / (tag + ".csv");
    require(p, "missing embeddings for '" + tag + "'; run embed first");
    return read_intermediate(p, [&](const std::string& text) {
        std::istringstream in(text);
        return parse_embeddings(in, tag);
    });
}

std::vector<int> levels_of(const Options& o, const std::vector<int>& fallback) {
    const auto& levels = o.levels.empty() ? fallback : o.levels;
    for (int l : levels)
        if (l < 1 || l > kTaxonomyDepth) throw Error("LevelOutOfRange", "levels must be 1..4");
    return levels;
}

ClusteringOptions clustering_options(const RunConfig& c, bool tsne) {
    ClusteringOptions o{c.kmeans, std::nullopt};
    if (tsne) {
        o.tsne = c.tsne;
        o.tsne->seed = c.seed;
    }
    return o;
}

ojson metrics_json(std::optional<double> v, std::optional<double> h, std::optional<double> c,
                   std::optional<double> a, std::optional<double> acc, std::optional<double> sil) {
    ojson m;
    auto put = [&m](const char* name, std::optional<double> x) {
        if (x) m[name] = *x;
        else m[name] = nullptr;
    };
    put("v_measure", v);
    put("homogeneity", h);
    put("completeness", c);
    put("ami", a);
    put("accuracy_top1", acc);
    put("silhouette", sil);
    return m;
}

ojson record(const char* task, int level, const std::string& embedder, const char* strategy, int k, bool tsne) {
    ojson r;
    r["task"] = task;
    r["level"] = level;
    r["embedder"] = embedder;
    if (strategy) r["strategy"] = strategy;
    else r["strategy"] = nullptr;
    r["k"] = k;
    r["used_tsne"] = tsne;
    return r;
}

void emit_records(const Run& run, const fs::path& relative, const ojson& records) {
    ojson doc;
    doc["format"] = "strata-results";
    doc["provenance"] = run.provenance_json();
    doc["records"] = records;
    run.emit(relative, doc.dump(2) + "\n");
}

std::string level_name(int level) { return "L" + std::to_string(level); }

// ---- subcommands ----------------------------------------------------------

void cmd_synth(Run& run) {
    auto sc = run.config().synth;
    sc.seed = run.config().seed;
    sc.validate();
    const auto taxonomy = generate_taxonomy(sc);
    const auto cohort = generate_cohort(sc, taxonomy);
    const auto files = serialize_cohort(cohort, run.provenance());
    run.emit("raw/timeseries.csv", files.timeseries);
    run.emit("raw/static.csv", files.statics);
    run.emit("raw/labels.csv", files.labels);
    run.emit("raw/taxonomy.tsv", serialize_taxonomy(taxonomy, run.provenance()));
}

void cmd_ingest(Run& run, const Options& o) {
    auto pick = [&](const std::string& flag, const char* name) {
        return flag.empty() ? run.path("raw") / name : fs::path(flag);
    };
    const auto ts = pick(o.timeseries, "timeseries.csv");
    const auto st = pick(o.statics, "static.csv");
    const auto lb = pick(o.labels, "labels.csv");
    const auto tx = pick(o.taxonomy, "taxonomy.tsv");
    for (const auto& p : {ts, st, lb, tx}) require(p, "missing ingest input");
    const auto taxonomy = load_taxonomy(tx);
    auto cohort = ingest(ts, st, lb, run.config().cohort, &taxonomy);
    if (run.config().cohort.top_codes > 0)
        cohort = restrict_to_codes(cohort, select_top_codes(cohort, static_cast<std::size_t>(run.config().cohort.top_codes)));
    const auto assignment = split(cohort, run.config().cohort.split_ratios, run.config().seed);
    const auto files = serialize_cohort(cohort, run.provenance());
    run.emit("cohort/timeseries.csv", files.timeseries);
    run.emit("cohort/static.csv", files.statics);
    run.emit("cohort/labels.csv", files.labels);
    run.emit("cohort/taxonomy.tsv", serialize_taxonomy(taxonomy, run.provenance()));
    run.emit("cohort/split.csv", serialize_split(assignment, run.provenance()));
    run.log() << "stays " << cohort.size() << " train " << assignment.count(Split::train) << " val "
              << assignment.count(Split::val) << " test " << assignment.count(Split::test) << "\n";
}

void cmd_preprocess(Run& run) {
    const auto d = load_cohort(run);
    PreprocessParams params;
    prepare(d.cohort, d.split, run.config().preprocess, &params);
    ojson extra;
    extra["provenance"] = run.provenance_json();
    run.emit("preprocess/params.json", serialize_preprocess_params(params, extra.dump()));
}

PreparedCohort load_prepared(const Run& run, const StageData& d) {
    const auto p = run.path("preprocess/params.json");
    if (!fs::exists(p)) throw Error("MissingInput", "missing preprocessed cohort; run preprocess first");
    const auto params = read_intermediate(p, [](const std::string& text) { return parse_preprocess_params(text); });
    return apply_preprocess(d.cohort, params);
}

void cmd_embed(Run& run) {
    if (!fs::exists(run.path("preprocess/params.json")))
        throw Error("MissingInput", "missing preprocessed cohort; run preprocess first");
    const auto d = load_cohort(run);
    const auto prepared = load_prepared(run, d);
    const auto& c = run.config();
    EmbeddingMatrix e;
    if (c.embed.method == "stat") {
        e = embed_stat(prepared, c.embed.stat);
    } else {
        auto rc = c.embed.rnn;
        rc.seed = c.seed;
        const auto trained = train(prepared, d.split, rc);
        const auto tag = model_tag(trained.model);
        auto model = nlohmann::ordered_json::parse(serialize_model(trained.model));
        model["provenance"] = run.provenance_json();
        run.emit("models/" + tag + ".json", model.dump(2) + "\n");
        run.emit("models/" + tag + "_loss.csv", serialize_loss_curve(trained.curve, run.provenance()));
        for (const auto& l : trained.curve)
            run.log() << "epoch " << l.epoch << " train_mse " << textio::format_double(l.train_mse) << " val_mse "
                      << textio::format_double(l.val_mse) << "\n";
        e = embed_rnn(trained.model, prepared);
    }
    run.emit("embeddings/" + e.provenance + ".csv", serialize_embeddings(e, run.provenance()));
}

void cmd_reduce(Run& run, const Options& o) {
    const auto tag = embedder_of(o, run.config());
    const auto e = load_embeddings(run, tag);
    auto tc = run.config().tsne;
    tc.seed = run.config().seed;
    const auto fit = tsne_fit(e.vectors, tc);
    EmbeddingMatrix reduced{e.stay_ids, fit.layout, tag + "_tsne"};
    run.emit("reduced/" + tag + ".csv", serialize_embeddings(reduced, run.provenance()));
    run.log() << "kl initial " << textio::format_double(fit.initial_kl) << " final "
              << textio::format_double(fit.kl_history.back()) << "\n";
}

void cmd_cluster(Run& run, const Options& o) {
    const auto d = load_cohort(run);
    const auto tag = embedder_of(o, run.config());
    const auto e = load_embeddings(run, tag);
    const auto labels = LevelLabels::from_cohort(d.taxonomy, d.cohort).aligned(e.stay_ids);
    const bool tsne = o.tsne || run.config().stratify.use_tsne;
    for (int level : levels_of(o, {1})) {
        int k = o.k.value_or(run.config().stratify.k);
        if (k == 0) k = static_cast<int>(labels.distinct(level));
        const auto space = clustering_space(e.vectors, clustering_options(run.config(), tsne));
        const auto model = kmeans_fit(space, k, derive_seed(run.config().seed, "stratify", static_cast<std::uint64_t>(level)),
                                      run.config().kmeans);
        std::string csv = "# " + run.provenance() + "\nstay_id,cluster\n";
        for (std::size_t i = 0; i < e.size(); ++i) csv += e.stay_ids[i] + "," + std::to_string(model.assignments[i]) + "\n";
        run.emit("clusters/" + tag + "_" + level_name(level) + ".csv", csv);
        run.log() << level_name(level) << " k " << k << " inertia " << textio::format_double(model.inertia) << "\n";
    }
}

void cmd_stratify(Run& run, const Options& o) {
    const auto d = load_cohort(run);
    const auto tag = embedder_of(o, run.config());
    const auto e = load_embeddings(run, tag);
    const auto labels = LevelLabels::from_cohort(d.taxonomy, d.cohort).aligned(e.stay_ids);
    const bool tsne = o.tsne || run.config().stratify.use_tsne;
    for (int level : levels_of(o, run.config().stratify.levels)) {
        const auto r = stratify_flat(e, labels, level, o.k.value_or(run.config().stratify.k), run.config().seed,
                                     clustering_options(run.config(), tsne));
        auto rec = record("flat", level, tag, nullptr, r.k, tsne);
        rec["metrics"] = metrics_json(r.metrics.v_measure, r.metrics.homogeneity, r.metrics.completeness, r.metrics.ami,
                                      std::nullopt, r.metrics.silhouette);
        rec["n_evaluated_clusters"] = r.result.n_evaluated();
        rec["n_skipped_clusters"] = r.result.n_skipped();
        emit_records(run, "results/flat_" + tag + "_" + level_name(level) + ".json", ojson::array({rec}));
        run.log() << level_name(level) << " v_measure " << textio::format_double(r.metrics.v_measure) << " ami "
                  << textio::format_double(r.metrics.ami) << "\n";
    }
}

void cmd_rediscover(Run& run, const Options& o) {
    const auto d = load_cohort(run);
    const auto tag = embedder_of(o, run.config());
    const auto e = load_embeddings(run, tag);
    const auto labels = LevelLabels::from_cohort(d.taxonomy, d.cohort).aligned(e.stay_ids);
    const bool tsne = o.tsne || run.config().stratify.use_tsne;
    const auto r = rediscover(e, labels, run.config().seed, run.config().stratify.min_cluster_size,
                              clustering_options(run.config(), tsne));

    ojson records = ojson::array();
    for (const auto& t : r.transitions) {
        auto rec = record("rediscover", t.from_level, tag, nullptr,
                          static_cast<int>(r.levels[static_cast<std::size_t>(t.from_level)].clusters.size()), tsne);
        rec["transition"] = level_name(t.from_level) + "->" + level_name(t.from_level + 1);
        rec["metrics"] = metrics_json(std::nullopt, std::nullopt, std::nullopt, std::nullopt, t.mean_accuracy, std::nullopt);
        rec["n_evaluated_clusters"] = t.n_evaluated;
        rec["n_skipped_clusters"] = t.n_skipped;
        records.push_back(rec);
        run.log() << rec["transition"].get<std::string>() << " accuracy "
                  << (t.mean_accuracy ? textio::format_double(*t.mean_accuracy) : "n/a") << " evaluated "
                  << t.n_evaluated << " skipped " << t.n_skipped << "\n";
    }
    emit_records(run, "results/rediscover_" + tag + ".json", records);

    std::string chain = "# " + run.provenance() + "\nstay_id,level_1,level_2,level_3,level_4\n";
    for (std::size_t i = 0; i < e.size(); ++i) {
        chain += e.stay_ids[i];
        for (const auto& lvl : r.levels) chain += "," + std::to_string(lvl.assignment[i]);
        chain += "\n";
    }
    run.emit("rediscover/" + tag + "_assignments.csv", chain);
    std::string summary = "# " + run.provenance() + "\nlevel,cluster,parent,members,evaluated\n";
    for (const auto& lvl : r.levels)
        for (std::size_t j = 0; j < lvl.clusters.size(); ++j) {
            const auto& c = lvl.clusters[j];
            summary += std::to_string(lvl.level) + "," + std::to_string(j) + "," + std::to_string(c.parent) + "," +
                       std::to_string(c.members.size()) + "," + (c.evaluated ? "true" : "false") + "\n";
        }
    run.emit("rediscover/" + tag + "_clusters.csv", summary);
}

std::vector<LabelStrategy> strategies_of(const Options& o, const RunConfig& c) {
    if (o.strategies.empty()) return c.stratify.strategies;
    std::vector<LabelStrategy> out;
    for (const auto& s : o.strategies) out.push_back(strategy_from_string(s));
    return out;
}

void cmd_assign_labels(Run& run, const Options& o) {
    const auto d = load_cohort(run);
    const auto tag = embedder_of(o, run.config());
    const auto e = load_embeddings(run, tag);
    const auto labels = LevelLabels::from_cohort(d.taxonomy, d.cohort).aligned(e.stay_ids);
    const bool tsne = o.tsne || run.config().stratify.use_tsne;
    for (int level : levels_of(o, run.config().stratify.levels)) {
        auto flat = stratify_flat(e, labels, level, o.k.value_or(run.config().stratify.k), run.config().seed,
                                  clustering_options(run.config(), tsne));
        const std::string stem = "assign/" + tag + "_" + level_name(level);
        std::string clusters = "# " + run.provenance() + "\nstay_id,cluster\n";
        for (std::size_t i = 0; i < e.size(); ++i)
            clusters += e.stay_ids[i] + "," + std::to_string(flat.result.assignment[i]) + "\n";
        run.emit(stem + "_clusters.csv", clusters);
        for (auto s : strategies_of(o, run.config())) {
            assign_cluster_labels(flat.result, e.vectors, labels, d.split, s);
            std::string out = "# " + run.provenance() + "\ncluster,label,fallback,used_tsne\n";
            for (std::size_t j = 0; j < flat.result.clusters.size(); ++j) {
                const auto& c = flat.result.clusters[j];
                out += std::to_string(j) + "," + c.label + "," + (c.fallback ? "true" : "false") + "," +
                       (tsne ? "true" : "false") + "\n";
            }
            run.emit(stem + "_" + std::string(to_string(s)) + "_labels.csv", out);
        }
    }
}

struct LabeledClusters {
    ClusterLevelResult result;
    bool used_tsne = false;
};

LabeledClusters load_labeled(const Run& run, const EmbeddingMatrix& e, int level, const std::string& tag,
                             LabelStrategy s) {
    const fs::path stem = run.path("assign") / (tag + "_" + level_name(level));
    const fs::path cpath = stem.string() + "_clusters.csv";
    const fs::path lpath = stem.string() + "_" + std::string(to_string(s)) + "_labels.csv";
    require(cpath, "missing label assignment; run assign-labels first");
    require(lpath, "missing label assignment; run assign-labels first");

    LabeledClusters out;
    out.result.level = level;
    read_intermediate(lpath, [&](const std::string& text) {
        std::istringstream in(text);
        std::string line;
        std::size_t n = 0;
        if (!textio::next_record(in, line, n) || line != "cluster,label,fallback,used_tsne")
            throw Error("MalformedRow", "bad header");
        while (textio::next_record(in, line, n)) {
            const auto f = textio::split(line);
            const auto id = f.size() == 4 ? textio::parse_long(f[0]) : std::nullopt;
            if (!id || *id != static_cast<long>(out.result.clusters.size()))
                throw Error("MalformedRow", "line " + std::to_string(n));
            Cluster c;
            c.label = f[1];
            c.fallback = f[2] == "true";
            out.used_tsne = f[3] == "true";
            out.result.clusters.push_back(std::move(c));
        }
        return 0;
    });
    read_intermediate(cpath, [&](const std::string& text) {
        std::istringstream in(text);
        std::string line;
        std::size_t n = 0;
        if (!textio::next_record(in, line, n) || line != "stay_id,cluster") throw Error("MalformedRow", "bad header");
        std::map<std::string, int> by_id;
        while (textio::next_record(in, line, n)) {
            const auto f = textio::split(line);
            const auto c = f.size() == 2 ? textio::parse_long(f[1]) : std::nullopt;
            if (!c || *c < 0 || *c >= static_cast<long>(out.result.clusters.size()))
                throw Error("MalformedRow", "line " + std::to_string(n));
            by_id[f[0]] = static_cast<int>(*c);
        }
        out.result.assignment.assign(e.size(), -1);
        for (std::size_t i = 0; i < e.size(); ++i) {
            const auto it = by_id.find(e.stay_ids[i]);
            if (it == by_id.end()) throw Error("MalformedRow", "no cluster for stay " + e.stay_ids[i]);
            out.result.assignment[i] = it->second;
            out.result.clusters[static_cast<std::size_t>(it->second)].members.push_back(i);
        }
        return 0;
    });
    return out;
}

void cmd_evaluate(Run& run, const Options& o) {
    const auto d = load_cohort(run);
    const auto tag = embedder_of(o, run.config());
    const auto e = load_embeddings(run, tag);
    const auto labels = LevelLabels::from_cohort(d.taxonomy, d.cohort).aligned(e.stay_ids);
    for (int level : levels_of(o, run.config().stratify.levels)) {
        for (auto s : strategies_of(o, run.config())) {
            const auto labeled = load_labeled(run, e, level, tag, s);
            const auto score = evaluate_assignment(labeled.result, labels, d.split, Split::test);
            const auto name = std::string(to_string(s));
            auto rec = record("assign", level, tag, name.c_str(), static_cast<int>(labeled.result.clusters.size()),
                              labeled.used_tsne);
            rec["metrics"] = metrics_json(std::nullopt, std::nullopt, std::nullopt, std::nullopt, score.accuracy, std::nullopt);
            const auto fallbacks = static_cast<std::size_t>(std::count_if(
                labeled.result.clusters.begin(), labeled.result.clusters.end(), [](const Cluster& c) { return c.fallback; }));
            rec["n_evaluated_clusters"] = labeled.result.clusters.size() - fallbacks;
            rec["n_skipped_clusters"] = fallbacks;
            rec["n_test_stays"] = score.n;
            emit_records(run, "results/assign_" + tag + "_" + level_name(level) + "_" + name + ".json", ojson::array({rec}));
            run.log() << level_name(level) << " " << name << " accuracy " << textio::format_double(score.accuracy) << "\n";
        }
    }
}

void cmd_hpo(Run& run, const Options& o) {
    const auto d = load_cohort(run);
    const auto tag = embedder_of(o, run.config());
    const auto e = load_embeddings(run, tag);
    const auto labels = LevelLabels::from_cohort(d.taxonomy, d.cohort).aligned(e.stay_ids);
    const auto& c = run.config();
    for (int level : levels_of(o, c.hpo.levels)) {
        const auto result = hpo_run(e, labels, d.split, level, c.hpo.space, o.trials.value_or(c.hpo.n_trials),
                                    derive_seed(c.seed, "hpo-" + tag, static_cast<std::uint64_t>(level)), c.kmeans, c.tsne);
        run.emit("hpo/" + tag + "_" + level_name(level) + "_trials.csv", serialize_trials(result, run.provenance()));
        if (!result.best) throw Error("AllTrialsFailed", "every HPO trial failed at " + level_name(level));
        const auto& best = result.trials[*result.best];
        auto rec = record("hpo", level, tag, nullptr, best.k, best.use_tsne);
        rec["metrics"] = metrics_json(best.objective, std::nullopt, std::nullopt, std::nullopt, std::nullopt, std::nullopt);
        rec["n_evaluated_clusters"] = best.k;
        rec["n_skipped_clusters"] = 0;
        rec["hpo"] = "random";
        rec["best_trial"] = best.trial;
        rec["perplexity"] = best.perplexity;
        rec["out_dims"] = best.out_dims;
        rec["n_trials"] = result.trials.size();
        emit_records(run, "results/hpo_" + tag + "_" + level_name(level) + ".json", ojson::array({rec}));
        run.log() << level_name(level) << " best trial " << best.trial << " k " << best.k << " objective "
                  << textio::format_double(*best.objective) << "\n";
    }
}

void cmd_report(Run& run) {
    const fs::path dir = run.path("results");
    std::vector<fs::path> files;
    if (fs::exists(dir))
        for (const auto& entry : fs::directory_iterator(dir))
            if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
    std::sort(files.begin(), files.end());

    std::vector<ojson> records;
    for (const auto& f : files) {
        read_intermediate(f, [&](const std::string& text) {
            const auto doc = ojson::parse(text);
            if (doc.at("format") != "strata-results") throw Error("BadFormat", "not a results file");
            for (auto rec : doc.at("records")) {
                for (const char* key : {"task", "level", "embedder", "metrics"})
                    if (!rec.contains(key)) throw Error("BadFormat", std::string("record without ") + key);
                rec["source"] = f.filename().string();
                rec["config_hash"] = doc.at("provenance").at("config_hash");
                records.push_back(std::move(rec));
            }
            return 0;
        });
    }
    if (records.empty()) throw Error("NoResults", "no completed evaluations under " + dir.string());

    auto text_of = [](const ojson& v) { return v.is_null() ? std::string() : v.get<std::string>(); };
    std::stable_sort(records.begin(), records.end(), [&](const ojson& a, const ojson& b) {
        const auto ka = std::make_tuple(a["task"].get<std::string>(), a["level"].get<int>(), a["embedder"].get<std::string>(),
                                        text_of(a["strategy"]));
        const auto kb = std::make_tuple(b["task"].get<std::string>(), b["level"].get<int>(), b["embedder"].get<std::string>(),
                                        text_of(b["strategy"]));
        return ka < kb;
    });

    ojson report;
    report["format"] = "strata-report";
    report["provenance"] = run.provenance_json();
    report["hpo"] = "random";
    report["config"] = dump_config(run.config());
    report["records"] = records;
    run.emit("report.json", report.dump(2) + "\n");

    std::string csv = "# " + run.provenance() + "\ntask,level,embedder,strategy,metric,value\n";
    for (const auto& r : records) {
        const std::string level =
            r.contains("transition") ? r["transition"].get<std::string>() : std::to_string(r["level"].get<int>());
        for (const auto& [metric, value] : r["metrics"].items()) {
            if (value.is_null()) continue;
            csv += r["task"].get<std::string>() + "," + level + "," + r["embedder"].get<std::string>() + "," +
                   text_of(r["strategy"]) + "," + metric + "," + textio::format_double(value.get<double>()) + "\n";
        }
    }
    run.emit("report.csv", csv);
}

}  // namespace

int run_subcommand(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Benchmark pipeline for clustering ICU stay embeddings against a code taxonomy", "strata"};
    app.set_version_flag("--version", "strata " + std::string(kVersion) + " (config schema " +
                                          std::to_string(kConfigSchemaVersion) + ")");
    app.require_subcommand(1, 1);

    Options o;
    auto add_common = [&](CLI::App* a) {
        a->add_option("--config", o.config_path, "configuration file");
        a->add_option("--set", o.overrides, "override, section.key=value (repeatable)");
        a->add_option("--seed", o.seed, "global seed");
        a->add_option("--threads", o.threads, "worker threads (default: all cores)");
        a->add_option("--run-dir,--out-dir", o.run_dir, "run directory");
    };
    std::map<std::string, CLI::App*> subs;
    for (auto name : kSubcommands) {
        auto* s = app.add_subcommand(std::string(name));
        add_common(s);
        subs[std::string(name)] = s;
    }
    subs["ingest"]->add_option("--timeseries", o.timeseries);
    subs["ingest"]->add_option("--statics", o.statics);
    subs["ingest"]->add_option("--labels", o.labels);
    subs["ingest"]->add_option("--taxonomy", o.taxonomy);
    subs["embed"]->add_option("--method", o.method, "stat, gru or lstm");
    subs["embed"]->add_flag("--per-feature", o.per_feature, "one recurrent cell per feature");
    for (auto name : {"reduce", "cluster", "stratify", "rediscover", "assign-labels", "evaluate", "hpo"})
        subs[name]->add_option("--embedder", o.embedder, "stat, gru, lstm, gru_pf or lstm_pf");
    for (auto name : {"cluster", "stratify", "assign-labels", "evaluate", "hpo"})
        subs[name]->add_option("--level", o.levels, "taxonomy level(s)");
    for (auto name : {"cluster", "stratify", "assign-labels"}) subs[name]->add_option("--k", o.k, "number of clusters");
    for (auto name : {"cluster", "stratify", "rediscover", "assign-labels"})
        subs[name]->add_flag("--tsne", o.tsne, "reduce with t-SNE before clustering");
    for (auto name : {"reduce", "cluster", "stratify", "rediscover", "assign-labels", "hpo"})
        subs[name]->add_option("--perplexity", o.perplexity, "t-SNE perplexity (fixes the HPO range)");
    for (auto name : {"assign-labels", "evaluate"})
        subs[name]->add_option("--strategy", o.strategies, "centroid, medoid or majority");
    subs["hpo"]->add_option("--trials", o.trials, "number of trials");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForVersion& e) {
        out << e.what() << "\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return 1;
    }
    const auto chosen = app.get_subcommands().front()->get_name();

    try {
        RunConfig config;
        if (!o.config_path.empty()) config = load_config(o.config_path);
        for (const auto& s : o.overrides) apply_override(config, s);
        if (o.seed) config.seed = *o.seed;
        if (o.threads) config.threads = *o.threads;
        if (!o.method.empty()) set_value(config, "embed", "method", o.method);
        if (o.per_feature) config.embed.rnn.per_feature = true;
        if (o.perplexity) {
            config.tsne.perplexity = *o.perplexity;
            config.hpo.space.perplexity_min = config.hpo.space.perplexity_max = *o.perplexity;
        }
        set_thread_count(config.threads);

        Run run(chosen, config, o.run_dir, out);
        if (chosen == "synth") cmd_synth(run);
        else if (chosen == "ingest") cmd_ingest(run, o);
        else if (chosen == "preprocess") cmd_preprocess(run);
        else if (chosen == "embed") cmd_embed(run);
        else if (chosen == "reduce") cmd_reduce(run, o);
        else if (chosen == "cluster") cmd_cluster(run, o);
        else if (chosen == "stratify") cmd_stratify(run, o);
        else if (chosen == "rediscover") cmd_rediscover(run, o);
        else if (chosen == "assign-labels") cmd_assign_labels(run, o);
        else if (chosen == "evaluate") cmd_evaluate(run, o);
        else if (chosen == "hpo") cmd_hpo(run, o);
        else cmd_report(run);
        return 0;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return e.kind() == ErrorKind::validation ? 1 : 2;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace strata
