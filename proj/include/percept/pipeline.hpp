#pragma once

// End-to-end orchestration: ingest -> split -> pretrain -> embed -> train ->
// evaluate -> score -> motifs, plus the no-retraining cross-city transfer
// report. Configuration is a flat key=value file; command-line flags override
// file values. All randomness flows from one 64-bit seed through named
// substreams ("split", and per-stage streams inside pretraining and ranker
// training), so stages are independently reproducible and re-running a
// config reproduces every numeric output byte.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "percept/analysis.hpp"
#include "percept/errors.hpp"
#include "percept/mgae.hpp"
#include "percept/ranker.hpp"
#include "percept/reports.hpp"
#include "percept/rng.hpp"
#include "percept/scene_graph.hpp"
#include "percept/text_embedding.hpp"
#include "percept/util.hpp"

namespace percept {

struct RunConfig {
    std::string scenes_path;
    std::string comparisons_path;
    std::string embeddings_path;  // empty: hashed features
    std::string out_dir;
    std::array<int, 3> ratio{6, 3, 1};  // train : val : test
    std::uint64_t seed = 0;
    std::size_t hash_dim = 64;
    std::uint64_t hash_seed = 0;
    int pretrain_epochs = 200;
    int pretrain_batch = 32;
    double pretrain_lr = 1e-3;
    double mask_rate = 0.5;
    double gamma = 2.0;
    std::size_t hidden = 256;
    int ranker_epochs = 100;
    int ranker_batch = 64;
    double ranker_lr = 1e-3;
    bool fine_tune = false;
    double motif_q = 0.25;
    std::size_t motif_min_support = 5;
    bool aggregate_votes = false;
};

namespace detail {

inline std::array<int, 3> parse_ratio(const std::string& text) {
    std::array<int, 3> r{};
    std::size_t pos = 0;
    for (int i = 0; i < 3; ++i) {
        std::size_t next = i < 2 ? text.find(':', pos) : text.size();
        if (next == std::string::npos) throw DataError("ratio must look like 6:3:1");
        const std::string part = text.substr(pos, next - pos);
        try {
            r[static_cast<std::size_t>(i)] = std::stoi(part);
        } catch (...) {
            throw DataError("ratio must look like 6:3:1");
        }
        if (r[static_cast<std::size_t>(i)] <= 0)
            throw DataError("ratio components must be positive");
        pos = next + 1;
    }
    return r;
}

inline bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw DataError("expected a boolean, got '" + v + "'");
}

}  // namespace detail

// Applies one key=value pair; shared by the config-file parser and the CLI
// flag overrides (flags win because they are applied last).
inline void set_config_key(RunConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "scenes") cfg.scenes_path = value;
    else if (key == "comparisons") cfg.comparisons_path = value;
    else if (key == "embeddings") cfg.embeddings_path = value;
    else if (key == "out") cfg.out_dir = value;
    else if (key == "ratio") cfg.ratio = detail::parse_ratio(value);
    else if (key == "seed") cfg.seed = std::stoull(value);
    else if (key == "hash_dim") cfg.hash_dim = std::stoull(value);
    else if (key == "hash_seed") cfg.hash_seed = std::stoull(value);
    else if (key == "pretrain_epochs") cfg.pretrain_epochs = std::stoi(value);
    else if (key == "pretrain_batch") cfg.pretrain_batch = std::stoi(value);
    else if (key == "pretrain_lr") cfg.pretrain_lr = parse_double(value);
    else if (key == "mask_rate") cfg.mask_rate = parse_double(value);
    else if (key == "gamma") cfg.gamma = parse_double(value);
    else if (key == "hidden") cfg.hidden = std::stoull(value);
    else if (key == "ranker_epochs") cfg.ranker_epochs = std::stoi(value);
    else if (key == "ranker_batch") cfg.ranker_batch = std::stoi(value);
    else if (key == "ranker_lr") cfg.ranker_lr = parse_double(value);
    else if (key == "fine_tune") cfg.fine_tune = detail::parse_bool(value);
    else if (key == "motif_q") cfg.motif_q = parse_double(value);
    else if (key == "motif_min_support") cfg.motif_min_support = std::stoull(value);
    else if (key == "aggregate_votes") cfg.aggregate_votes = detail::parse_bool(value);
    else throw DataError("unknown config key '" + key + "'");
}

// Flat key = value lines; '#' starts a comment.
inline RunConfig load_config(const std::filesystem::path& path) {
    RunConfig cfg;
    std::istringstream in(read_text_file(path));
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::string trimmed = normalize_label(line);
        if (trimmed.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw DataError(path.string() + ":" + std::to_string(line_no) +
                            ": expected key = value");
        auto strip = [](std::string s) {
            const auto b = s.find_first_not_of(" \t");
            const auto e = s.find_last_not_of(" \t");
            return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
        };
        try {
            set_config_key(cfg, strip(line.substr(0, eq)), strip(line.substr(eq + 1)));
        } catch (const DataError& e) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        } catch (const std::exception&) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": bad value");
        }
    }
    return cfg;
}

// Canonical rendering of the resolved config; hashing this ties every output
// file to the exact settings that produced it.
inline std::string config_canonical(const RunConfig& cfg) {
    std::string out;
    auto kv = [&](const std::string& k, const std::string& v) { out += k + "=" + v + "\n"; };
    kv("aggregate_votes", cfg.aggregate_votes ? "true" : "false");
    kv("comparisons", cfg.comparisons_path);
    kv("embeddings", cfg.embeddings_path);
    kv("fine_tune", cfg.fine_tune ? "true" : "false");
    kv("gamma", format_double(cfg.gamma));
    kv("hash_dim", std::to_string(cfg.hash_dim));
    kv("hash_seed", std::to_string(cfg.hash_seed));
    kv("hidden", std::to_string(cfg.hidden));
    kv("mask_rate", format_double(cfg.mask_rate));
    kv("motif_min_support", std::to_string(cfg.motif_min_support));
    kv("motif_q", format_double(cfg.motif_q));
    kv("out", cfg.out_dir);
    kv("pretrain_batch", std::to_string(cfg.pretrain_batch));
    kv("pretrain_epochs", std::to_string(cfg.pretrain_epochs));
    kv("pretrain_lr", format_double(cfg.pretrain_lr));
    kv("ranker_batch", std::to_string(cfg.ranker_batch));
    kv("ranker_epochs", std::to_string(cfg.ranker_epochs));
    kv("ranker_lr", format_double(cfg.ranker_lr));
    kv("ratio", std::to_string(cfg.ratio[0]) + ":" + std::to_string(cfg.ratio[1]) + ":" +
                    std::to_string(cfg.ratio[2]));
    kv("scenes", cfg.scenes_path);
    kv("seed", std::to_string(cfg.seed));
    return out;
}

inline std::string config_hash(const RunConfig& cfg) {
    return to_hex16(fnv1a64(config_canonical(cfg)));
}

struct DatasetSplit {
    std::vector<std::string> train, val, test;
};

// Seeded Fisher-Yates over the sorted id set, then fixed-size cuts:
// test = floor(n * r_test / sum), val = floor(n * r_val / sum), train = rest.
inline DatasetSplit split_dataset(std::vector<std::string> scene_ids,
                                  std::array<int, 3> ratio, std::uint64_t seed) {
    for (int r : ratio)
        if (r <= 0) throw DataError("split ratio components must be positive");
    const std::size_t total =
        static_cast<std::size_t>(ratio[0]) + static_cast<std::size_t>(ratio[1]) +
        static_cast<std::size_t>(ratio[2]);
    if (scene_ids.size() < total)
        throw DataError("too few scenes to split: " + std::to_string(scene_ids.size()) +
                        " < " + std::to_string(total));
    std::sort(scene_ids.begin(), scene_ids.end());
    Rng rng(seed, "split");
    rng.shuffle(scene_ids);
    const std::size_t n = scene_ids.size();
    const std::size_t n_test = n * static_cast<std::size_t>(ratio[2]) / total;
    const std::size_t n_val = n * static_cast<std::size_t>(ratio[1]) / total;
    const std::size_t n_train = n - n_val - n_test;
    DatasetSplit split;
    split.train.assign(scene_ids.begin(), scene_ids.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.val.assign(scene_ids.begin() + static_cast<std::ptrdiff_t>(n_train),
                     scene_ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    split.test.assign(scene_ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val),
                      scene_ids.end());
    return split;
}

struct ComparisonSplit {
    std::vector<ComparisonRecord> train, val, test;
    std::size_t dropped = 0;  // straddling comparisons
};

// A comparison belongs to a split iff BOTH scenes are in it; straddlers are
// dropped (and counted) so no information crosses split boundaries.
inline ComparisonSplit assign_comparisons(const DatasetSplit& split,
                                          const std::vector<ComparisonRecord>& comparisons) {
    std::map<std::string, int> side;
    for (const auto& id : split.train) side[id] = 0;
    for (const auto& id : split.val) side[id] = 1;
    for (const auto& id : split.test) side[id] = 2;
    ComparisonSplit out;
    for (const auto& c : comparisons) {
        auto l = side.find(c.left), r = side.find(c.right);
        if (l == side.end() || r == side.end() || l->second != r->second) {
            ++out.dropped;
            continue;
        }
        (l->second == 0 ? out.train : l->second == 1 ? out.val : out.test).push_back(c);
    }
    return out;
}

// Post-hoc leakage audit: counts comparisons assigned to a split whose scenes
// are not both inside it. Must be zero by construction.
inline std::size_t audit_comparison_assignment(const DatasetSplit& split,
                                               const ComparisonSplit& assigned) {
    auto violations = [](const std::vector<std::string>& members,
                         const std::vector<ComparisonRecord>& comps) {
        std::set<std::string> in(members.begin(), members.end());
        std::size_t bad = 0;
        for (const auto& c : comps)
            if (!in.contains(c.left) || !in.contains(c.right)) ++bad;
        return bad;
    };
    return violations(split.train, assigned.train) + violations(split.val, assigned.val) +
           violations(split.test, assigned.test);
}

// Majority aggregation per (dimension, unordered scene pair): the pair is
// reoriented to (min id, max id) and the majority vote wins, with exact
// splits becoming ties.
inline std::vector<ComparisonRecord> aggregate_votes(
    const std::vector<ComparisonRecord>& comparisons) {
    struct Tally {
        std::size_t first_wins = 0, second_wins = 0, ties = 0;
    };
    std::map<std::tuple<Dimension, std::string, std::string>, Tally> tallies;
    for (const auto& c : comparisons) {
        const bool ordered = c.left < c.right;
        const std::string& a = ordered ? c.left : c.right;
        const std::string& b = ordered ? c.right : c.left;
        Tally& t = tallies[{c.dimension, a, b}];
        if (c.winner == Winner::tie) ++t.ties;
        else if ((c.winner == Winner::left) == ordered) ++t.first_wins;
        else ++t.second_wins;
    }
    std::vector<ComparisonRecord> out;
    out.reserve(tallies.size());
    for (const auto& [key, t] : tallies) {
        ComparisonRecord r;
        r.dimension = std::get<0>(key);
        r.left = std::get<1>(key);
        r.right = std::get<2>(key);
        r.winner = t.first_wins > t.second_wins   ? Winner::left
                   : t.second_wins > t.first_wins ? Winner::right
                                                  : Winner::tie;
        out.push_back(std::move(r));
    }
    return out;
}

// ---------------------------------------------------------------------------
// file helpers shared by the pipeline and the CLI subcommands

inline std::string output_header(const std::string& cfg_hash, std::uint64_t seed) {
    return "# config_hash=" + cfg_hash + " seed=" + std::to_string(seed) + "\n";
}

inline std::string serialize_embedding_table(const EmbeddingTable& table) {
    std::string out;
    for (const auto& [id, vec] : table) {
        out += id;
        for (double v : vec) {
            out += '\t';
            out += format_double(v);
        }
        out += '\n';
    }
    return out;
}

inline EmbeddingTable parse_embedding_table(const std::string& text) {
    EmbeddingTable table;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::vector<double> vec;
        std::size_t pos = line.find('\t');
        if (pos == std::string::npos)
            throw DataError("embedding tsv line " + std::to_string(line_no) + ": no columns");
        const std::string id = line.substr(0, pos);
        while (pos != std::string::npos) {
            const std::size_t next = line.find('\t', pos + 1);
            const std::string cell =
                line.substr(pos + 1, next == std::string::npos ? next : next - pos - 1);
            vec.push_back(parse_double(cell));
            pos = next;
        }
        if (!table.emplace(id, std::move(vec)).second)
            throw DataError("embedding tsv line " + std::to_string(line_no) +
                            ": duplicate scene '" + id + "'");
    }
    return table;
}

inline std::string serialize_split_manifest(const DatasetSplit& split, std::size_t dropped) {
    std::map<std::string, const char*> rows;
    for (const auto& id : split.train) rows[id] = "train";
    for (const auto& id : split.val) rows[id] = "val";
    for (const auto& id : split.test) rows[id] = "test";
    std::string out = "# dropped_straddling=" + std::to_string(dropped) + "\n";
    out += "scene_id\tsplit\n";
    for (const auto& [id, split_name] : rows) out += id + "\t" + split_name + "\n";
    return out;
}

inline DatasetSplit parse_split_manifest(const std::string& text) {
    DatasetSplit split;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("scene_id\t", 0) == 0) continue;
        const std::size_t tab = line.find('\t');
        if (tab == std::string::npos) throw DataError("split manifest: malformed line");
        const std::string id = line.substr(0, tab), which = line.substr(tab + 1);
        if (which == "train") split.train.push_back(id);
        else if (which == "val") split.val.push_back(id);
        else if (which == "test") split.test.push_back(id);
        else throw DataError("split manifest: unknown split '" + which + "'");
    }
    return split;
}

namespace detail {

inline nlohmann::ordered_json report_to_json(const MetricReport& r) {
    nlohmann::ordered_json j;
    j["auc"] = r.auc;
    j["accuracy"] = r.accuracy;
    j["recall"] = r.recall;
    j["f1"] = r.f1;
    j["precision"] = r.precision;
    j["n_pairs"] = r.n_pairs;
    j["n_ties"] = r.n_ties;
    return j;
}

inline MetricReport report_from_json(const nlohmann::json& j) {
    MetricReport r;
    r.auc = j.at("auc").get<double>();
    r.accuracy = j.at("accuracy").get<double>();
    r.recall = j.at("recall").get<double>();
    r.f1 = j.at("f1").get<double>();
    r.precision = j.at("precision").get<double>();
    r.n_pairs = j.at("n_pairs").get<std::size_t>();
    r.n_ties = j.at("n_ties").get<std::size_t>();
    return r;
}

inline nlohmann::ordered_json embedder_spec(const RunConfig& cfg) {
    nlohmann::ordered_json j;
    j["mode"] = cfg.embeddings_path.empty() ? "hashed" : "table";
    j["hash_dim"] = cfg.hash_dim;
    j["hash_seed"] = cfg.hash_seed;
    if (!cfg.embeddings_path.empty()) j["path"] = cfg.embeddings_path;
    return j;
}

}  // namespace detail

// In-memory handles to everything a run produced, for chaining and tests.
struct RunArtifacts {
    std::vector<SceneGraph> scenes;
    DatasetSplit split;
    ComparisonSplit comparisons;
    mgae::EncoderModel encoder;
    EmbeddingTable embeddings;  // shared-encoder mode
    std::map<Dimension, EmbeddingTable> per_dim_embeddings;  // fine-tune mode
    std::map<Dimension, ScorerParams> scorers;
    std::map<Dimension, MetricReport> per_dim_test;
    MetricReport pooled_test;
    DimensionAccuracies accuracies;
    std::vector<PerceptionScore> scores;
};

// Runs every stage in order and writes the full artifact set under
// cfg.out_dir. Any stage failure leaves a FAILED marker naming the stage and
// cause; re-running an identical config reproduces every output byte.
inline RunArtifacts run_pipeline(const RunConfig& cfg) {
    namespace fs = std::filesystem;
    if (cfg.out_dir.empty()) throw DataError("run: output directory not set");
    fs::create_directories(cfg.out_dir);
    const fs::path out = cfg.out_dir;
    fs::remove(out / "FAILED");
    const std::string hash = config_hash(cfg);
    const std::string hdr = output_header(hash, cfg.seed);
    write_text_file(out / "config_resolved.txt", hdr + config_canonical(cfg));

    RunArtifacts art;
    std::string stage = "ingest";
    try {
        // ---- ingest ----
        art.scenes = parse_scene_jsonl(read_text_file(cfg.scenes_path));
        if (art.scenes.empty()) throw DataError("no scenes in " + cfg.scenes_path);
        auto comparisons = parse_comparisons_jsonl(read_text_file(cfg.comparisons_path));
        std::set<std::string> scene_ids;
        for (const auto& g : art.scenes) scene_ids.insert(g.scene_id);
        for (const auto& c : comparisons)
            for (const auto& id : {c.left, c.right})
                if (!scene_ids.contains(id))
                    throw DataError("comparison references unknown scene '" + id + "'");
        if (cfg.aggregate_votes) comparisons = aggregate_votes(comparisons);
        TextEmbedder embedder =
            cfg.embeddings_path.empty()
                ? TextEmbedder::hashed(cfg.hash_dim, cfg.hash_seed)
                : load_embedding_table(read_text_file(cfg.embeddings_path), cfg.hash_seed);

        {
            TableCells cells{{"key", "value"}};
            std::size_t nodes = 0, edges = 0, self_loops = 0, zero_edge = 0;
            std::set<std::string> labels, predicates;
            for (const auto& g : art.scenes) {
                nodes += g.nodes.size();
                edges += g.edges.size();
                if (g.edges.empty()) ++zero_edge;
                for (const auto& n : g.nodes) labels.insert(n.label);
                for (const auto& e : g.edges) {
                    predicates.insert(e.predicate);
                    if (e.src == e.dst) ++self_loops;
                }
            }
            cells.push_back({"scenes", std::to_string(art.scenes.size())});
            cells.push_back({"nodes_total", std::to_string(nodes)});
            cells.push_back({"edges_total", std::to_string(edges)});
            cells.push_back({"distinct_node_labels", std::to_string(labels.size())});
            cells.push_back({"distinct_predicates", std::to_string(predicates.size())});
            cells.push_back({"self_loop_warnings", std::to_string(self_loops)});
            cells.push_back({"zero_edge_scenes", std::to_string(zero_edge)});
            cells.push_back({"comparisons", std::to_string(comparisons.size())});
            std::size_t ties = 0;
            std::map<Dimension, std::size_t> per_dim;
            for (const auto& c : comparisons) {
                if (c.winner == Winner::tie) ++ties;
                ++per_dim[c.dimension];
            }
            cells.push_back({"ties", std::to_string(ties)});
            for (Dimension d : kAllDimensions)
                cells.push_back({"comparisons_" + to_string(d),
                                 std::to_string(per_dim.contains(d) ? per_dim.at(d) : 0)});
            cells.push_back({"embedder", embedder.is_table() ? "table" : "hashed"});
            cells.push_back({"feature_dim", std::to_string(embedder.dim())});
            write_text_file(out / "summary.tsv", hdr + render_tsv(cells));
            write_text_file(out / "summary.txt", hdr + render_aligned(cells));
        }

        // ---- split ----
        stage = "split";
        std::vector<std::string> ids(scene_ids.begin(), scene_ids.end());
        art.split = split_dataset(ids, cfg.ratio, cfg.seed);
        art.comparisons = assign_comparisons(art.split, comparisons);
        if (audit_comparison_assignment(art.split, art.comparisons) != 0)
            throw DataError("internal: comparison assignment leaked across splits");
        write_text_file(out / "split_manifest.tsv",
                        hdr + serialize_split_manifest(art.split, art.comparisons.dropped));

        // ---- pretrain ----
        stage = "pretrain";
        std::map<std::string, FeaturizedGraph> featurized;
        for (const auto& g : art.scenes) featurized.emplace(g.scene_id, featurize_graph(embedder, g));
        std::vector<FeaturizedGraph> train_graphs;
        train_graphs.reserve(art.split.train.size());
        for (const auto& id : art.split.train) train_graphs.push_back(featurized.at(id));
        mgae::PretrainConfig pcfg;
        pcfg.mask_rate = cfg.mask_rate;
        pcfg.gamma = cfg.gamma;
        pcfg.epochs = cfg.pretrain_epochs;
        pcfg.batch_size = cfg.pretrain_batch;
        pcfg.seed = cfg.seed;
        pcfg.lr = cfg.pretrain_lr;
        pcfg.hidden = cfg.hidden;
        mgae::PretrainResult pre = mgae::pretrain(train_graphs, pcfg);
        art.encoder = std::move(pre.encoder);
        {
            nlohmann::ordered_json header;
            header["config_hash"] = hash;
            header["seed"] = cfg.seed;
            header["mask_rate"] = cfg.mask_rate;
            header["gamma"] = cfg.gamma;
            header["embedder"] = detail::embedder_spec(cfg);
            write_text_file(out / "encoder.json", mgae::save_encoder(art.encoder, header));
            TableCells cells{{"epoch", "mean_sce_loss"}};
            for (std::size_t e = 0; e < pre.epoch_loss.size(); ++e)
                cells.push_back({std::to_string(e), format_double(pre.epoch_loss[e])});
            write_text_file(out / "pretrain_log.tsv", hdr + render_tsv(cells));
        }

        // ---- embed ----
        stage = "embed";
        for (const auto& [id, fg] : featurized)
            art.embeddings.emplace(id, mgae::scene_embedding(fg, art.encoder));
        write_text_file(out / "scene_embeddings.tsv",
                        hdr + serialize_embedding_table(art.embeddings));

        // ---- train ----
        stage = "train";
        fs::create_directories(out / "scorers");
        std::map<Dimension, std::vector<ComparisonRecord>> train_by_dim, val_by_dim, test_by_dim;
        for (const auto& c : art.comparisons.train) train_by_dim[c.dimension].push_back(c);
        for (const auto& c : art.comparisons.val) val_by_dim[c.dimension].push_back(c);
        for (const auto& c : art.comparisons.test) test_by_dim[c.dimension].push_back(c);
        if (train_by_dim.empty())
            throw DataError("no training comparisons survive the split");
        TableCells ranker_log{{"dimension", "epoch", "train_loss", "val_loss"}};
        for (Dimension dim : kAllDimensions) {
            if (!train_by_dim.contains(dim)) continue;
            RankerConfig rcfg;
            rcfg.epochs = cfg.ranker_epochs;
            rcfg.lr = cfg.ranker_lr;
            rcfg.batch = cfg.ranker_batch;
            rcfg.seed = derive_seed(cfg.seed, "train:" + to_string(dim));
            rcfg.fine_tune = cfg.fine_tune;
            nlohmann::ordered_json header;
            header["config_hash"] = hash;
            header["seed"] = cfg.seed;
            if (cfg.fine_tune) {
                std::map<std::string, const FeaturizedGraph*> graph_ptrs;
                for (const auto& [id, fg] : featurized) graph_ptrs.emplace(id, &fg);
                FineTuneResult ft = train_dimension_finetune(train_by_dim.at(dim), graph_ptrs,
                                                             art.encoder, rcfg);
                EmbeddingTable dim_table;
                for (const auto& [id, fg] : featurized)
                    dim_table.emplace(id, mgae::scene_embedding(fg, ft.encoder));
                art.per_dim_embeddings.emplace(dim, std::move(dim_table));
                write_text_file(out / "scorers" / ("encoder_" + to_string(dim) + ".json"),
                                mgae::save_encoder(ft.encoder, header));
                for (std::size_t e = 0; e < ft.train_loss.size(); ++e)
                    ranker_log.push_back({to_string(dim), std::to_string(e),
                                          format_double(ft.train_loss[e]), ""});
                art.scorers.emplace(dim, std::move(ft.scorer));
            } else {
                DimTrainResult r = train_dimension(train_by_dim.at(dim), art.embeddings, rcfg,
                                                   val_by_dim.contains(dim) ? val_by_dim.at(dim)
                                                                            : std::vector<ComparisonRecord>{});
                for (std::size_t e = 0; e < r.train_loss.size(); ++e)
                    ranker_log.push_back({to_string(dim), std::to_string(e),
                                          format_double(r.train_loss[e]),
                                          e < r.val_loss.size() ? format_double(r.val_loss[e])
                                                                : ""});
                art.scorers.emplace(dim, std::move(r.params));
            }
            write_text_file(out / "scorers" / ("scorer_" + to_string(dim) + ".json"),
                            save_scorer(art.scorers.at(dim), dim, header));
        }
        write_text_file(out / "ranker_log.tsv", hdr + render_tsv(ranker_log));

        // ---- evaluate ----
        stage = "evaluate";
        auto table_for = [&](Dimension dim) -> const EmbeddingTable& {
            auto it = art.per_dim_embeddings.find(dim);
            return it == art.per_dim_embeddings.end() ? art.embeddings : it->second;
        };
        if (art.comparisons.test.empty())
            throw DataError("no test comparisons survive the split");
        std::vector<MetricReport> dim_reports;
        for (const auto& [dim, subset] : test_by_dim) {
            if (!art.scorers.contains(dim))
                throw DataError("dimension '" + to_string(dim) +
                                "' appears in the test split but has no trained scorer");
            MetricReport rep = evaluate(subset, table_for(dim), art.scorers.at(dim));
            art.per_dim_test.emplace(dim, rep);
            art.accuracies.per_dimension[dim] = rep.accuracy;
            dim_reports.push_back(rep);
        }
        double acc_sum = 0.0;
        for (const auto& [dim, acc] : art.accuracies.per_dimension) acc_sum += acc;
        art.accuracies.mean = acc_sum / static_cast<double>(art.accuracies.per_dimension.size());
        std::map<Dimension, const EmbeddingTable*> tables_by_dim;
        for (const auto& [dim, _] : art.scorers) tables_by_dim.emplace(dim, &table_for(dim));
        art.pooled_test = evaluate_pooled(art.comparisons.test, tables_by_dim, art.scorers);

        std::vector<LabeledReport> t1{{"mgae-pooled", art.pooled_test},
                                      {"mgae-dim-mean", mean_report(dim_reports)}};
        write_text_file(out / "metrics_table1.tsv", hdr + render_tsv(table1_cells(t1, true)));
        write_text_file(out / "metrics_table1.txt", hdr + render_aligned(table1_cells(t1, false)));
        write_text_file(out / "metrics_table2.tsv",
                        hdr + render_tsv(table2_cells("mgae", art.accuracies, true)));
        write_text_file(out / "metrics_table2.txt",
                        hdr + render_aligned(table2_cells("mgae", art.accuracies, false)));
        {
            nlohmann::ordered_json j;
            j["config_hash"] = hash;
            j["seed"] = cfg.seed;
            j["pooled"] = detail::report_to_json(art.pooled_test);
            j["dimension_mean"] = detail::report_to_json(mean_report(dim_reports));
            nlohmann::ordered_json per;
            for (const auto& [dim, rep] : art.per_dim_test)
                per[to_string(dim)] = detail::report_to_json(rep);
            j["per_dimension"] = std::move(per);
            j["mean_accuracy"] = art.accuracies.mean;
            write_text_file(out / "metrics.json", j.dump());
        }

        // ---- score ----
        stage = "score";
        if (art.per_dim_embeddings.empty()) {
            art.scores = score_dataset(ids, art.embeddings, art.scorers);
        } else {
            for (const auto& id : ids)
                for (Dimension dim : kAllDimensions) {
                    auto it = art.scorers.find(dim);
                    if (it == art.scorers.end()) continue;
                    art.scores.push_back(
                        {id, dim, score(detail::embedding_of(table_for(dim), id), it->second)});
                }
        }
        {
            TableCells cells{{"scene_id", "dimension", "score"}};
            for (const auto& s : art.scores)
                cells.push_back({s.scene_id, to_string(s.dimension), format_double(s.score)});
            write_text_file(out / "scores.tsv", hdr + render_tsv(cells));
        }

        // ---- motifs ----
        stage = "motifs";
        fs::create_directories(out / "motifs");
        std::map<std::string, const SceneGraph*> graph_of;
        for (const auto& g : art.scenes) graph_of.emplace(g.scene_id, &g);
        for (Dimension dim : kAllDimensions) {
            if (!art.scorers.contains(dim)) continue;
            std::vector<ScoredGraph> scored;
            for (const auto& s : art.scores)
                if (s.dimension == dim) scored.push_back({graph_of.at(s.scene_id), s.score});
            auto rows = motif_lift(std::move(scored), cfg.motif_q, cfg.motif_min_support);
            write_text_file(out / "motifs" / (to_string(dim) + ".tsv"),
                            hdr + render_tsv(motif_cells(rows)));
            write_text_file(out / "motifs" / (to_string(dim) + ".txt"),
                            hdr + render_aligned(motif_cells(rows)));
        }
    } catch (const DataError& e) {
        write_text_file(out / "FAILED", "stage: " + stage + "\ncause: " + e.what() + "\n");
        throw DataError("stage " + stage + ": " + e.what());
    } catch (const TrainingDivergence& e) {
        write_text_file(out / "FAILED", "stage: " + stage + "\ncause: " + e.what() + "\n");
        throw TrainingDivergence("stage " + stage + ": " + e.what());
    } catch (const std::exception& e) {
        write_text_file(out / "FAILED", "stage: " + stage + "\ncause: " + e.what() + "\n");
        throw DataError("stage " + stage + ": " + e.what());
    }
    return art;
}

struct CrossCityInputs {
    std::string run_dir;  // directory of a completed run
    std::string target_scenes_path;
    std::string target_comparisons_path;
    std::string embeddings_path;  // optional override for table-mode features
    std::string source_label = "source";
    std::string target_label = "target";
    std::string out_dir;  // empty: report not written, only returned
};

// Applies a trained run to a new city's scenes without retraining and
// reports the metric shift against the run's own test metrics.
inline std::vector<CrossCityRow> cross_city(const CrossCityInputs& in) {
    namespace fs = std::filesystem;
    const fs::path run_dir = in.run_dir;
    mgae::EncoderModel encoder = mgae::load_encoder(read_text_file(run_dir / "encoder.json"));
    const nlohmann::json encoder_header =
        nlohmann::json::parse(read_text_file(run_dir / "encoder.json")).at("header");

    std::map<Dimension, ScorerParams> scorers;
    std::map<Dimension, mgae::EncoderModel> dim_encoders;
    for (Dimension dim : kAllDimensions) {
        const fs::path p = run_dir / "scorers" / ("scorer_" + to_string(dim) + ".json");
        if (!fs::exists(p)) continue;
        auto [loaded_dim, params] = load_scorer(read_text_file(p));
        if (loaded_dim != dim) throw DataError("scorer file " + p.string() + " dimension mismatch");
        scorers.emplace(dim, std::move(params));
        const fs::path pe = run_dir / "scorers" / ("encoder_" + to_string(dim) + ".json");
        if (fs::exists(pe)) dim_encoders.emplace(dim, mgae::load_encoder(read_text_file(pe)));
    }
    if (scorers.empty()) throw DataError("no trained scorers under " + in.run_dir);

    const nlohmann::json metrics = nlohmann::json::parse(read_text_file(run_dir / "metrics.json"));
    const MetricReport source = detail::report_from_json(metrics.at("pooled"));

    auto scenes = parse_scene_jsonl(read_text_file(in.target_scenes_path));
    auto comparisons = parse_comparisons_jsonl(read_text_file(in.target_comparisons_path));
    std::set<std::string> scene_ids;
    for (const auto& g : scenes) scene_ids.insert(g.scene_id);
    std::string missing;
    for (const auto& c : comparisons) {
        for (const auto& id : {c.left, c.right})
            if (!scene_ids.contains(id))
                throw DataError("target comparison references unknown scene '" + id + "'");
        if (!scorers.contains(c.dimension)) {
            const std::string name = to_string(c.dimension);
            if (missing.find(name) == std::string::npos)
                missing += (missing.empty() ? "" : ", ") + name;
        }
    }
    if (!missing.empty())
        throw DataError("target data contains untrained dimension(s): " + missing);

    const nlohmann::json spec = encoder_header.at("embedder");
    TextEmbedder embedder =
        spec.at("mode").get<std::string>() == "hashed"
            ? TextEmbedder::hashed(spec.at("hash_dim").get<std::size_t>(),
                                   spec.at("hash_seed").get<std::uint64_t>())
            : load_embedding_table(
                  read_text_file(in.embeddings_path.empty() ? spec.at("path").get<std::string>()
                                                            : in.embeddings_path),
                  spec.at("hash_seed").get<std::uint64_t>());

    std::map<std::string, FeaturizedGraph> featurized;
    for (const auto& g : scenes) featurized.emplace(g.scene_id, featurize_graph(embedder, g));
    EmbeddingTable shared_table;
    std::map<Dimension, EmbeddingTable> dim_tables;
    if (dim_encoders.empty()) {
        for (const auto& [id, fg] : featurized)
            shared_table.emplace(id, mgae::scene_embedding(fg, encoder));
    } else {
        for (const auto& [dim, enc] : dim_encoders) {
            EmbeddingTable t;
            for (const auto& [id, fg] : featurized)
                t.emplace(id, mgae::scene_embedding(fg, enc));
            dim_tables.emplace(dim, std::move(t));
        }
    }
    std::map<Dimension, const EmbeddingTable*> tables_by_dim;
    for (const auto& [dim, _] : scorers)
        tables_by_dim.emplace(dim, dim_tables.contains(dim) ? &dim_tables.at(dim) : &shared_table);

    const MetricReport target = evaluate_pooled(comparisons, tables_by_dim, scorers);
    std::vector<CrossCityRow> rows = cross_city_report(source, target);
    if (!in.out_dir.empty()) {
        fs::create_directories(in.out_dir);
        const std::string hdr = "# config_hash=" +
                                encoder_header.value("config_hash", std::string("n/a")) +
                                " seed=" + std::to_string(encoder_header.value("seed", 0ull)) +
                                "\n";
        write_text_file(fs::path(in.out_dir) / "cross_city.tsv",
                        hdr + render_tsv(table3_cells(rows, in.source_label, in.target_label, true)));
        write_text_file(fs::path(in.out_dir) / "cross_city.txt",
                        hdr + render_aligned(
                                  table3_cells(rows, in.source_label, in.target_label, false)));
    }
    return rows;
}

}  // namespace percept
