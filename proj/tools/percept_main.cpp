// percept: scene-graph perception ranking pipeline.
//
// Subcommands: validate, split, pretrain, embed, train, evaluate, score,
// motifs, cross-city, run. Options can come from a flat key=value config
// file (--config); explicit flags always win. Exit codes: 0 success,
// 1 usage error, 2 data error, 3 training divergence.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "percept/pipeline.hpp"

namespace fs = std::filesystem;
using namespace percept;

namespace {

struct ConfigFlags {
    std::string config_path;
    std::vector<std::pair<std::string, std::string>> overrides;  // applied in flag order
};

void add_config_option(CLI::App* cmd, ConfigFlags& cf) {
    cmd->add_option("--config", cf.config_path, "flat key=value config file");
}

void add_override(CLI::App* cmd, ConfigFlags& cf, const std::string& flag,
                  const std::string& key, const std::string& desc) {
    cmd->add_option_function<std::string>(
        flag, [&cf, key](const std::string& v) { cf.overrides.emplace_back(key, v); }, desc);
}

void add_bool_override(CLI::App* cmd, ConfigFlags& cf, const std::string& flag,
                       const std::string& key, const std::string& desc) {
    cmd->add_flag_callback(
        flag, [&cf, key] { cf.overrides.emplace_back(key, "true"); }, desc);
}

void add_data_flags(CLI::App* cmd, ConfigFlags& cf) {
    add_override(cmd, cf, "--scenes", "scenes", "scene JSONL file");
    add_override(cmd, cf, "--comparisons", "comparisons", "comparisons JSONL file");
    add_override(cmd, cf, "--embeddings", "embeddings", "text embedding table JSONL (else hashed)");
    add_override(cmd, cf, "--out", "out", "output directory");
    add_override(cmd, cf, "--seed", "seed", "master seed");
    add_override(cmd, cf, "--hash-dim", "hash_dim", "hashed feature width (>= 8)");
    add_override(cmd, cf, "--hash-seed", "hash_seed", "hashed feature seed");
}

void add_train_flags(CLI::App* cmd, ConfigFlags& cf) {
    add_override(cmd, cf, "--ratio", "ratio", "train:val:test ratio, e.g. 6:3:1");
    add_override(cmd, cf, "--pretrain-epochs", "pretrain_epochs", "autoencoder epochs");
    add_override(cmd, cf, "--pretrain-batch", "pretrain_batch", "autoencoder batch size");
    add_override(cmd, cf, "--pretrain-lr", "pretrain_lr", "autoencoder learning rate");
    add_override(cmd, cf, "--mask-rate", "mask_rate", "node mask rate in (0,1)");
    add_override(cmd, cf, "--gamma", "gamma", "scaled-cosine-error exponent (>= 1)");
    add_override(cmd, cf, "--hidden", "hidden", "encoder hidden width");
    add_override(cmd, cf, "--ranker-epochs", "ranker_epochs", "ranker epochs");
    add_override(cmd, cf, "--ranker-batch", "ranker_batch", "ranker batch size");
    add_override(cmd, cf, "--ranker-lr", "ranker_lr", "ranker learning rate");
    add_bool_override(cmd, cf, "--fine-tune", "fine_tune",
                      "backpropagate ranking loss into the encoder");
    add_override(cmd, cf, "--motif-q", "motif_q", "motif quantile in (0, 0.5]");
    add_override(cmd, cf, "--min-support", "motif_min_support", "motif support floor");
    add_bool_override(cmd, cf, "--aggregate-votes", "aggregate_votes",
                      "majority-aggregate repeated pair votes");
}

RunConfig resolve(const ConfigFlags& cf) {
    RunConfig cfg = cf.config_path.empty() ? RunConfig{} : load_config(cf.config_path);
    for (const auto& [key, value] : cf.overrides) set_config_key(cfg, key, value);
    return cfg;
}

void require(const std::string& value, const std::string& what) {
    if (value.empty()) throw DataError(what + " is required (flag or config key)");
}

std::map<Dimension, ScorerParams> load_scorers(const fs::path& dir) {
    std::map<Dimension, ScorerParams> scorers;
    for (Dimension dim : kAllDimensions) {
        const fs::path p = dir / ("scorer_" + to_string(dim) + ".json");
        if (!fs::exists(p)) continue;
        auto [loaded, params] = load_scorer(read_text_file(p));
        scorers.emplace(loaded, std::move(params));
    }
    if (scorers.empty()) throw DataError("no scorer checkpoints under " + dir.string());
    return scorers;
}

TextEmbedder embedder_from(const RunConfig& cfg) {
    return cfg.embeddings_path.empty()
               ? TextEmbedder::hashed(cfg.hash_dim, cfg.hash_seed)
               : load_embedding_table(read_text_file(cfg.embeddings_path), cfg.hash_seed);
}

int cmd_validate(const RunConfig& cfg, const std::string& dot_dir) {
    require(cfg.scenes_path, "--scenes");
    auto scenes = parse_scene_jsonl(read_text_file(cfg.scenes_path));
    std::size_t warnings = 0;
    for (const auto& g : scenes) {
        for (const auto& w : validate_graph(g).warnings) {
            std::cout << "warning: scene '" << g.scene_id << "': " << w << "\n";
            ++warnings;
        }
    }
    std::size_t nodes = 0, edges = 0;
    for (const auto& g : scenes) {
        nodes += g.nodes.size();
        edges += g.edges.size();
    }
    std::cout << "scenes: " << scenes.size() << "\nnodes: " << nodes << "\nedges: " << edges
              << "\nwarnings: " << warnings << "\n";
    if (!cfg.comparisons_path.empty()) {
        auto comparisons = parse_comparisons_jsonl(read_text_file(cfg.comparisons_path));
        std::set<std::string> ids;
        for (const auto& g : scenes) ids.insert(g.scene_id);
        for (const auto& c : comparisons)
            for (const auto& id : {c.left, c.right})
                if (!ids.contains(id))
                    throw DataError("comparison references unknown scene '" + id + "'");
        std::cout << "comparisons: " << comparisons.size() << "\n";
    }
    if (!dot_dir.empty()) {
        fs::create_directories(dot_dir);
        for (const auto& g : scenes)
            write_text_file(fs::path(dot_dir) / (g.scene_id + ".dot"), export_dot(g));
        std::cout << "dot files: " << scenes.size() << " under " << dot_dir << "\n";
    }
    return 0;
}

int cmd_split(const RunConfig& cfg) {
    require(cfg.scenes_path, "--scenes");
    require(cfg.out_dir, "--out");
    auto scenes = parse_scene_jsonl(read_text_file(cfg.scenes_path));
    std::vector<std::string> ids;
    for (const auto& g : scenes) ids.push_back(g.scene_id);
    DatasetSplit split = split_dataset(ids, cfg.ratio, cfg.seed);
    std::size_t dropped = 0;
    if (!cfg.comparisons_path.empty()) {
        auto comparisons = parse_comparisons_jsonl(read_text_file(cfg.comparisons_path));
        dropped = assign_comparisons(split, comparisons).dropped;
    }
    fs::create_directories(cfg.out_dir);
    write_text_file(fs::path(cfg.out_dir) / "split_manifest.tsv",
                    output_header(config_hash(cfg), cfg.seed) +
                        serialize_split_manifest(split, dropped));
    std::cout << "train/val/test: " << split.train.size() << "/" << split.val.size() << "/"
              << split.test.size() << " (dropped straddling comparisons: " << dropped << ")\n";
    return 0;
}

int cmd_pretrain(const RunConfig& cfg, const std::string& manifest_path) {
    require(cfg.scenes_path, "--scenes");
    require(cfg.out_dir, "--out");
    auto scenes = parse_scene_jsonl(read_text_file(cfg.scenes_path));
    TextEmbedder embedder = embedder_from(cfg);
    std::set<std::string> keep;
    if (!manifest_path.empty()) {
        DatasetSplit split = parse_split_manifest(read_text_file(manifest_path));
        keep.insert(split.train.begin(), split.train.end());
    }
    std::vector<FeaturizedGraph> graphs;
    for (const auto& g : scenes)
        if (keep.empty() || keep.contains(g.scene_id))
            graphs.push_back(featurize_graph(embedder, g));
    mgae::PretrainConfig pcfg;
    pcfg.mask_rate = cfg.mask_rate;
    pcfg.gamma = cfg.gamma;
    pcfg.epochs = cfg.pretrain_epochs;
    pcfg.batch_size = cfg.pretrain_batch;
    pcfg.seed = cfg.seed;
    pcfg.lr = cfg.pretrain_lr;
    pcfg.hidden = cfg.hidden;
    mgae::PretrainResult result = mgae::pretrain(graphs, pcfg);
    fs::create_directories(cfg.out_dir);
    nlohmann::ordered_json header;
    header["config_hash"] = config_hash(cfg);
    header["seed"] = cfg.seed;
    header["mask_rate"] = cfg.mask_rate;
    header["gamma"] = cfg.gamma;
    header["embedder"] = detail::embedder_spec(cfg);
    write_text_file(fs::path(cfg.out_dir) / "encoder.json",
                    mgae::save_encoder(result.encoder, header));
    TableCells cells{{"epoch", "mean_sce_loss"}};
    for (std::size_t e = 0; e < result.epoch_loss.size(); ++e)
        cells.push_back({std::to_string(e), format_double(result.epoch_loss[e])});
    write_text_file(fs::path(cfg.out_dir) / "pretrain_log.tsv",
                    output_header(config_hash(cfg), cfg.seed) + render_tsv(cells));
    std::cout << "pretrained on " << graphs.size() << " graphs; first/last epoch loss: "
              << (result.epoch_loss.empty() ? 0.0 : result.epoch_loss.front()) << " / "
              << (result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back()) << "\n";
    return 0;
}

int cmd_embed(const RunConfig& cfg, const std::string& encoder_path) {
    require(cfg.scenes_path, "--scenes");
    require(encoder_path, "--encoder");
    require(cfg.out_dir, "--out");
    auto scenes = parse_scene_jsonl(read_text_file(cfg.scenes_path));
    const std::string encoder_text = read_text_file(encoder_path);
    mgae::EncoderModel encoder = mgae::load_encoder(encoder_text);
    const nlohmann::json spec =
        nlohmann::json::parse(encoder_text).at("header").at("embedder");
    RunConfig effective = cfg;
    if (spec.at("mode").get<std::string>() == "hashed") {
        effective.embeddings_path.clear();
        effective.hash_dim = spec.at("hash_dim").get<std::size_t>();
        effective.hash_seed = spec.at("hash_seed").get<std::uint64_t>();
    } else if (effective.embeddings_path.empty()) {
        effective.embeddings_path = spec.at("path").get<std::string>();
    }
    TextEmbedder embedder = embedder_from(effective);
    EmbeddingTable table;
    for (const auto& g : scenes)
        table.emplace(g.scene_id,
                      mgae::scene_embedding(featurize_graph(embedder, g), encoder));
    fs::create_directories(cfg.out_dir);
    write_text_file(fs::path(cfg.out_dir) / "scene_embeddings.tsv",
                    output_header(config_hash(cfg), cfg.seed) +
                        serialize_embedding_table(table));
    std::cout << "embedded " << table.size() << " scenes\n";
    return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& embeddings_file,
              const std::string& manifest_path) {
    require(cfg.comparisons_path, "--comparisons");
    require(embeddings_file, "--embeddings-file");
    require(cfg.out_dir, "--out");
    auto comparisons = parse_comparisons_jsonl(read_text_file(cfg.comparisons_path));
    EmbeddingTable table = parse_embedding_table(read_text_file(embeddings_file));
    std::vector<ComparisonRecord> train = comparisons, val;
    if (!manifest_path.empty()) {
        DatasetSplit split = parse_split_manifest(read_text_file(manifest_path));
        ComparisonSplit cs = assign_comparisons(split, comparisons);
        train = std::move(cs.train);
        val = std::move(cs.val);
    }
    std::map<Dimension, std::vector<ComparisonRecord>> train_by_dim, val_by_dim;
    for (const auto& c : train) train_by_dim[c.dimension].push_back(c);
    for (const auto& c : val) val_by_dim[c.dimension].push_back(c);
    if (train_by_dim.empty()) throw DataError("no training comparisons");
    fs::create_directories(fs::path(cfg.out_dir) / "scorers");
    for (Dimension dim : kAllDimensions) {
        if (!train_by_dim.contains(dim)) continue;
        RankerConfig rcfg;
        rcfg.epochs = cfg.ranker_epochs;
        rcfg.lr = cfg.ranker_lr;
        rcfg.batch = cfg.ranker_batch;
        rcfg.seed = derive_seed(cfg.seed, "train:" + to_string(dim));
        DimTrainResult r = train_dimension(train_by_dim.at(dim), table, rcfg,
                                           val_by_dim.contains(dim)
                                               ? val_by_dim.at(dim)
                                               : std::vector<ComparisonRecord>{});
        nlohmann::ordered_json header;
        header["config_hash"] = config_hash(cfg);
        header["seed"] = cfg.seed;
        write_text_file(fs::path(cfg.out_dir) / "scorers" / ("scorer_" + to_string(dim) + ".json"),
                        save_scorer(r.params, dim, header));
        std::cout << "trained " << to_string(dim) << " on " << train_by_dim.at(dim).size()
                  << " pairs; final train loss " << r.train_loss.back() << "\n";
    }
    return 0;
}

int cmd_evaluate(const RunConfig& cfg, const std::string& embeddings_file,
                 const std::string& scorers_dir, const std::string& manifest_path) {
    require(cfg.comparisons_path, "--comparisons");
    require(embeddings_file, "--embeddings-file");
    require(scorers_dir, "--scorers");
    require(cfg.out_dir, "--out");
    auto comparisons = parse_comparisons_jsonl(read_text_file(cfg.comparisons_path));
    EmbeddingTable table = parse_embedding_table(read_text_file(embeddings_file));
    auto scorers = load_scorers(scorers_dir);
    if (!manifest_path.empty()) {
        DatasetSplit split = parse_split_manifest(read_text_file(manifest_path));
        comparisons = assign_comparisons(split, comparisons).test;
    }
    if (comparisons.empty()) throw DataError("no comparisons to evaluate");
    std::map<Dimension, std::vector<ComparisonRecord>> by_dim;
    for (const auto& c : comparisons) by_dim[c.dimension].push_back(c);
    std::vector<MetricReport> dim_reports;
    DimensionAccuracies accuracies;
    for (const auto& [dim, subset] : by_dim) {
        if (!scorers.contains(dim))
            throw DataError("no trained scorer for dimension '" + to_string(dim) + "'");
        MetricReport rep = evaluate(subset, table, scorers.at(dim));
        accuracies.per_dimension[dim] = rep.accuracy;
        dim_reports.push_back(rep);
    }
    double acc = 0.0;
    for (const auto& [d, a] : accuracies.per_dimension) acc += a;
    accuracies.mean = acc / static_cast<double>(accuracies.per_dimension.size());
    std::map<Dimension, const EmbeddingTable*> tables;
    for (const auto& [dim, _] : scorers) tables.emplace(dim, &table);
    MetricReport pooled = evaluate_pooled(comparisons, tables, scorers);

    const std::string hdr = output_header(config_hash(cfg), cfg.seed);
    std::vector<LabeledReport> t1{{"mgae-pooled", pooled},
                                  {"mgae-dim-mean", mean_report(dim_reports)}};
    fs::create_directories(cfg.out_dir);
    write_text_file(fs::path(cfg.out_dir) / "metrics_table1.tsv",
                    hdr + render_tsv(table1_cells(t1, true)));
    write_text_file(fs::path(cfg.out_dir) / "metrics_table1.txt",
                    hdr + render_aligned(table1_cells(t1, false)));
    write_text_file(fs::path(cfg.out_dir) / "metrics_table2.tsv",
                    hdr + render_tsv(table2_cells("mgae", accuracies, true)));
    write_text_file(fs::path(cfg.out_dir) / "metrics_table2.txt",
                    hdr + render_aligned(table2_cells("mgae", accuracies, false)));
    nlohmann::ordered_json j;
    j["config_hash"] = config_hash(cfg);
    j["seed"] = cfg.seed;
    j["pooled"] = detail::report_to_json(pooled);
    j["dimension_mean"] = detail::report_to_json(mean_report(dim_reports));
    nlohmann::ordered_json per;
    for (const auto& [dim, subset] : by_dim)
        per[to_string(dim)] = detail::report_to_json(evaluate(subset, table, scorers.at(dim)));
    j["per_dimension"] = std::move(per);
    j["mean_accuracy"] = accuracies.mean;
    write_text_file(fs::path(cfg.out_dir) / "metrics.json", j.dump());
    std::cout << render_aligned(table1_cells(t1, false));
    std::cout << render_aligned(table2_cells("mgae", accuracies, false));
    return 0;
}

int cmd_score(const RunConfig& cfg, const std::string& embeddings_file,
              const std::string& scorers_dir) {
    require(embeddings_file, "--embeddings-file");
    require(scorers_dir, "--scorers");
    require(cfg.out_dir, "--out");
    EmbeddingTable table = parse_embedding_table(read_text_file(embeddings_file));
    auto scorers = load_scorers(scorers_dir);
    std::vector<std::string> ids;
    for (const auto& [id, _] : table) ids.push_back(id);
    auto scores = score_dataset(ids, table, scorers);
    TableCells cells{{"scene_id", "dimension", "score"}};
    for (const auto& s : scores)
        cells.push_back({s.scene_id, to_string(s.dimension), format_double(s.score)});
    fs::create_directories(cfg.out_dir);
    write_text_file(fs::path(cfg.out_dir) / "scores.tsv",
                    output_header(config_hash(cfg), cfg.seed) + render_tsv(cells));
    std::cout << "scored " << ids.size() << " scenes x " << scorers.size() << " dimensions\n";
    return 0;
}

int cmd_motifs(const RunConfig& cfg, const std::string& scores_file,
               const std::string& dimension_flag) {
    require(cfg.scenes_path, "--scenes");
    require(scores_file, "--scores");
    require(cfg.out_dir, "--out");
    auto scenes = parse_scene_jsonl(read_text_file(cfg.scenes_path));
    std::map<std::string, const SceneGraph*> graph_of;
    for (const auto& g : scenes) graph_of.emplace(g.scene_id, &g);

    std::map<Dimension, std::vector<ScoredGraph>> scored;
    std::istringstream in(read_text_file(scores_file));
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("scene_id\t", 0) == 0) continue;
        const std::size_t t1p = line.find('\t');
        const std::size_t t2p = line.find('\t', t1p + 1);
        if (t1p == std::string::npos || t2p == std::string::npos)
            throw DataError("scores file: malformed line");
        const std::string id = line.substr(0, t1p);
        const Dimension dim = parse_dimension(line.substr(t1p + 1, t2p - t1p - 1));
        const double value = parse_double(line.substr(t2p + 1));
        auto it = graph_of.find(id);
        if (it == graph_of.end()) throw DataError("scores file references unknown scene '" + id + "'");
        scored[dim].push_back({it->second, value});
    }
    fs::create_directories(cfg.out_dir);
    const std::string hdr = output_header(config_hash(cfg), cfg.seed);
    for (const auto& [dim, graphs] : scored) {
        if (!dimension_flag.empty() && parse_dimension(dimension_flag) != dim) continue;
        auto rows = motif_lift(graphs, cfg.motif_q, cfg.motif_min_support);
        write_text_file(fs::path(cfg.out_dir) / (to_string(dim) + ".tsv"),
                        hdr + render_tsv(motif_cells(rows)));
        write_text_file(fs::path(cfg.out_dir) / (to_string(dim) + ".txt"),
                        hdr + render_aligned(motif_cells(rows)));
        std::cout << to_string(dim) << ": " << rows.size() << " motifs\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"scene-graph perception ranking pipeline"};
    app.require_subcommand(1);

    ConfigFlags cf;
    std::string dot_dir, encoder_path, embeddings_file, scorers_dir, manifest_path;
    std::string scores_file, dimension_flag;
    CrossCityInputs cc;

    CLI::App* validate = app.add_subcommand("validate", "check scene/comparison files");
    add_config_option(validate, cf);
    add_data_flags(validate, cf);
    validate->add_option("--dot", dot_dir, "write one DOT file per scene into this directory");

    CLI::App* split = app.add_subcommand("split", "deterministic train/val/test split");
    add_config_option(split, cf);
    add_data_flags(split, cf);
    add_override(split, cf, "--ratio", "ratio", "train:val:test ratio, e.g. 6:3:1");

    CLI::App* pretrain = app.add_subcommand("pretrain", "masked-autoencoder pretraining");
    add_config_option(pretrain, cf);
    add_data_flags(pretrain, cf);
    add_train_flags(pretrain, cf);
    pretrain->add_option("--split-manifest", manifest_path, "restrict to the manifest's train split");

    CLI::App* embed = app.add_subcommand("embed", "scene embeddings under a trained encoder");
    add_config_option(embed, cf);
    add_data_flags(embed, cf);
    embed->add_option("--encoder", encoder_path, "encoder checkpoint")->required();

    CLI::App* train = app.add_subcommand("train", "per-dimension ranking heads");
    add_config_option(train, cf);
    add_data_flags(train, cf);
    add_train_flags(train, cf);
    train->add_option("--embeddings-file", embeddings_file, "scene_embeddings.tsv");
    train->add_option("--split-manifest", manifest_path, "train on the manifest's train split");

    CLI::App* evaluate = app.add_subcommand("evaluate", "metric reports");
    add_config_option(evaluate, cf);
    add_data_flags(evaluate, cf);
    evaluate->add_option("--embeddings-file", embeddings_file, "scene_embeddings.tsv");
    evaluate->add_option("--scorers", scorers_dir, "directory with scorer checkpoints");
    evaluate->add_option("--split-manifest", manifest_path, "evaluate the manifest's test split");

    CLI::App* score_cmd = app.add_subcommand("score", "continuous perception scores");
    add_config_option(score_cmd, cf);
    add_data_flags(score_cmd, cf);
    score_cmd->add_option("--embeddings-file", embeddings_file, "scene_embeddings.tsv");
    score_cmd->add_option("--scorers", scorers_dir, "directory with scorer checkpoints");

    CLI::App* motifs = app.add_subcommand("motifs", "low-vs-high score motif lift");
    add_config_option(motifs, cf);
    add_data_flags(motifs, cf);
    add_train_flags(motifs, cf);
    motifs->add_option("--scores", scores_file, "scores.tsv from the score stage");
    motifs->add_option("--dimension", dimension_flag, "restrict to one dimension");

    CLI::App* cross = app.add_subcommand("cross-city", "no-retraining transfer report");
    cross->add_option("--run-dir", cc.run_dir, "directory of a completed run")->required();
    cross->add_option("--target-scenes", cc.target_scenes_path, "target city scenes JSONL")
        ->required();
    cross->add_option("--target-comparisons", cc.target_comparisons_path,
                      "target city comparisons JSONL")
        ->required();
    cross->add_option("--embeddings", cc.embeddings_path, "override embedding table path");
    cross->add_option("--source-label", cc.source_label, "source column label");
    cross->add_option("--target-label", cc.target_label, "target column label");
    cross->add_option("--out", cc.out_dir, "output directory")->required();

    CLI::App* run = app.add_subcommand("run", "all stages in order");
    add_config_option(run, cf);
    add_data_flags(run, cf);
    add_train_flags(run, cf);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (validate->parsed()) return cmd_validate(resolve(cf), dot_dir);
        if (split->parsed()) return cmd_split(resolve(cf));
        if (pretrain->parsed()) return cmd_pretrain(resolve(cf), manifest_path);
        if (embed->parsed()) return cmd_embed(resolve(cf), encoder_path);
        if (train->parsed()) return cmd_train(resolve(cf), embeddings_file, manifest_path);
        if (evaluate->parsed())
            return cmd_evaluate(resolve(cf), embeddings_file, scorers_dir, manifest_path);
        if (score_cmd->parsed()) return cmd_score(resolve(cf), embeddings_file, scorers_dir);
        if (motifs->parsed()) return cmd_motifs(resolve(cf), scores_file, dimension_flag);
        if (cross->parsed()) {
            auto rows = cross_city(cc);
            std::cout << render_aligned(table3_cells(rows, cc.source_label, cc.target_label, false));
            return 0;
        }
        if (run->parsed()) {
            RunConfig cfg = resolve(cf);
            run_pipeline(cfg);
            std::cout << "run complete: " << cfg.out_dir << "\n";
            return 0;
        }
    } catch (const TrainingDivergence& e) {
        std::cerr << "training divergence: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
