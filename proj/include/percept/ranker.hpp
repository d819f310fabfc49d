#pragma once

// Pairwise-comparison ranking head.
//
// One scorer per perceptual dimension: an MLP 128 -> 64 -> 1 applied with
// shared weights to both members of a pair. P(left beats right) =
// sigmoid(s_left - s_right); training minimizes the binary cross-entropy
// against the vote (left=1, right=0, tie=0.5). Ties train with the soft
// target but are excluded from every metric (counted separately). The
// positive class for precision/recall/F1 is "left wins"; prediction is
// p > 0.5 with exact 0.5 breaking toward "right". AUC is the Mann-Whitney
// statistic with midranks for tied probabilities.

#include <array>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "percept/autodiff.hpp"
#include "percept/checkpoint.hpp"
#include "percept/errors.hpp"
#include "percept/mgae.hpp"
#include "percept/optimizer.hpp"
#include "percept/rng.hpp"
#include "percept/util.hpp"

namespace percept {

enum class Dimension { safe, lively, boring, wealthy, depressing, beautiful };

// Alphabetical; also the column order of the per-dimension report.
inline constexpr std::array<Dimension, 6> kAllDimensions = {
    Dimension::beautiful, Dimension::boring, Dimension::depressing,
    Dimension::lively,    Dimension::safe,   Dimension::wealthy};

inline std::string to_string(Dimension d) {
    switch (d) {
        case Dimension::safe: return "safe";
        case Dimension::lively: return "lively";
        case Dimension::boring: return "boring";
        case Dimension::wealthy: return "wealthy";
        case Dimension::depressing: return "depressing";
        case Dimension::beautiful: return "beautiful";
    }
    throw DataError("invalid dimension value");
}

// Canonical names plus the "safety" report-header alias.
inline Dimension parse_dimension(std::string_view text) {
    const std::string t = normalize_label(text);
    if (t == "safe" || t == "safety") return Dimension::safe;
    if (t == "lively") return Dimension::lively;
    if (t == "boring") return Dimension::boring;
    if (t == "wealthy") return Dimension::wealthy;
    if (t == "depressing") return Dimension::depressing;
    if (t == "beautiful") return Dimension::beautiful;
    throw DataError("unknown perceptual dimension '" + std::string(text) + "'");
}

enum class Winner { left, right, tie };

inline std::string to_string(Winner w) {
    switch (w) {
        case Winner::left: return "left";
        case Winner::right: return "right";
        case Winner::tie: return "tie";
    }
    throw DataError("invalid winner value");
}

inline Winner parse_winner(std::string_view text) {
    const std::string t = normalize_label(text);
    if (t == "left") return Winner::left;
    if (t == "right") return Winner::right;
    if (t == "tie") return Winner::tie;
    throw DataError("unknown winner '" + std::string(text) + "'");
}

struct ComparisonRecord {
    std::string left;
    std::string right;
    Dimension dimension = Dimension::safe;
    Winner winner = Winner::left;

    bool operator==(const ComparisonRecord&) const = default;
};

// {"left": str, "right": str, "dimension": str, "winner": "left"|"right"|"tie"}
inline std::vector<ComparisonRecord> parse_comparisons_jsonl(std::istream& in) {
    std::vector<ComparisonRecord> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object())
            throw DataError("comparisons line " + std::to_string(line_no) + ": malformed JSON");
        try {
            for (const char* key : {"left", "right", "dimension", "winner"})
                if (!j.contains(key) || !j[key].is_string())
                    throw DataError(std::string("missing or non-string '") + key + "'");
            ComparisonRecord r;
            r.left = j["left"].get<std::string>();
            r.right = j["right"].get<std::string>();
            r.dimension = parse_dimension(j["dimension"].get<std::string>());
            r.winner = parse_winner(j["winner"].get<std::string>());
            if (r.left == r.right)
                throw DataError("left and right refer to the same scene '" + r.left + "'");
            out.push_back(std::move(r));
        } catch (const DataError& e) {
            throw DataError("comparisons line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

inline std::vector<ComparisonRecord> parse_comparisons_jsonl(const std::string& text) {
    std::istringstream in(text);
    return parse_comparisons_jsonl(in);
}

struct ScorerParams {
    ad::Tensor w1{mgae::kEmbedDim, 64, true};
    ad::Tensor b1{1, 64, true};
    ad::Tensor w2{64, 1, true};
    ad::Tensor b2{1, 1, true};

    static ScorerParams init(Rng& rng) {
        ScorerParams p;
        p.w1 = mgae::LayerParams::xavier(mgae::kEmbedDim, 64, rng);
        p.w2 = mgae::LayerParams::xavier(64, 1, rng);
        return p;
    }

    std::vector<ad::Tensor*> tensors() { return {&w1, &b1, &w2, &b2}; }
};

// scene_id -> 128-wide embedding
using EmbeddingTable = std::map<std::string, std::vector<double>>;

inline double pair_prob(double s_left, double s_right) {
    return ad::Tape::stable_sigmoid(s_left - s_right);
}

// Cross-entropy of predicted win probability against target in {0, 0.5, 1};
// p is clamped to [1e-12, 1 - 1e-12].
inline double pair_loss(double p, double target) {
    const double c = std::clamp(p, 1e-12, 1.0 - 1e-12);
    return -(target * std::log(c) + (1.0 - target) * std::log(1.0 - c));
}

inline double winner_target(Winner w) {
    switch (w) {
        case Winner::left: return 1.0;
        case Winner::right: return 0.0;
        case Winner::tie: return 0.5;
    }
    throw DataError("invalid winner value");
}

// Shared-weight MLP score of one embedding.
inline double score(std::span<const double> z, const ScorerParams& p) {
    if (z.size() != mgae::kEmbedDim)
        throw ShapeError("score: embedding width " + std::to_string(z.size()) + ", expected " +
                         std::to_string(mgae::kEmbedDim));
    double s = p.b2.data[0];
    for (std::size_t jh = 0; jh < 64; ++jh) {
        double acc = p.b1.data[jh];
        for (std::size_t i = 0; i < mgae::kEmbedDim; ++i) acc += z[i] * p.w1.at(i, jh);
        const double h = acc > 0.0 ? acc : mgae::kLeakyAlpha * acc;
        s += h * p.w2.at(jh, 0);
    }
    return s;
}

namespace detail {

inline const std::vector<double>& embedding_of(const EmbeddingTable& table,
                                               const std::string& scene_id) {
    auto it = table.find(scene_id);
    if (it == table.end())
        throw DataError("no embedding for scene '" + scene_id + "'");
    return it->second;
}

// Batched taped forward: stacks both sides, scores with shared parameters,
// returns the mean BCE over the batch.
inline ad::Tensor* pair_batch_loss(ad::Tape& tape, const std::vector<const ComparisonRecord*>& batch,
                                   const EmbeddingTable& embeddings, ScorerParams& p) {
    const std::size_t n = batch.size();
    ad::Tensor zl(n, mgae::kEmbedDim), zr(n, mgae::kEmbedDim);
    std::vector<double> targets(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& l = embedding_of(embeddings, batch[i]->left);
        const auto& r = embedding_of(embeddings, batch[i]->right);
        std::copy(l.begin(), l.end(), zl.data.begin() + static_cast<std::ptrdiff_t>(i * mgae::kEmbedDim));
        std::copy(r.begin(), r.end(), zr.data.begin() + static_cast<std::ptrdiff_t>(i * mgae::kEmbedDim));
        targets[i] = winner_target(batch[i]->winner);
    }
    auto mlp = [&](ad::Tensor* z) {
        ad::Tensor* h = tape.leaky_relu(tape.add(tape.matmul(z, &p.w1), &p.b1), mgae::kLeakyAlpha);
        return tape.add(tape.matmul(h, &p.w2), &p.b2);
    };
    ad::Tensor* sl = mlp(tape.constant(std::move(zl)));
    ad::Tensor* sr = mlp(tape.constant(std::move(zr)));
    ad::Tensor* diff = tape.add(sl, tape.scale(sr, -1.0));
    return tape.bce_with_logits(diff, std::move(targets));
}

}  // namespace detail

struct RankerConfig {
    int epochs = 100;
    double lr = 1e-3;
    int batch = 64;
    std::uint64_t seed = 0;
    bool fine_tune = false;
};

struct DimTrainResult {
    ScorerParams params;
    std::vector<double> train_loss;  // per epoch
    std::vector<double> val_loss;    // per epoch, empty when no val set given
};

// Trains one dimension's scorer on its comparisons against frozen embeddings.
// Deterministic given (comparisons order, embeddings, cfg.seed).
inline DimTrainResult train_dimension(const std::vector<ComparisonRecord>& comparisons,
                                      const EmbeddingTable& embeddings, const RankerConfig& cfg,
                                      const std::vector<ComparisonRecord>& val = {}) {
    if (comparisons.empty()) throw DataError("train_dimension: no comparisons");
    for (const auto& c : comparisons) {
        detail::embedding_of(embeddings, c.left);
        detail::embedding_of(embeddings, c.right);
    }

    Rng init_rng(cfg.seed, "init");
    Rng batch_rng(cfg.seed, "batch");
    DimTrainResult result{ScorerParams::init(init_rng), {}, {}};
    ad::Adam adam(result.params.tensors(), {.lr = cfg.lr});

    std::vector<std::size_t> order(comparisons.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const std::size_t batch_size =
        cfg.batch > 0 ? static_cast<std::size_t>(cfg.batch) : comparisons.size();

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        batch_rng.shuffle(order);
        double epoch_acc = 0.0;
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            const std::size_t end = std::min(order.size(), start + batch_size);
            std::vector<const ComparisonRecord*> batch;
            batch.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) batch.push_back(&comparisons[order[i]]);
            ad::Tape tape;
            ad::Tensor* loss;
            try {
                loss = detail::pair_batch_loss(tape, batch, embeddings, result.params);
                epoch_acc += loss->data[0] * static_cast<double>(end - start);
                tape.backward(loss);
            } catch (const TrainingDivergence& e) {
                throw TrainingDivergence("ranker diverged at epoch " + std::to_string(epoch) +
                                         ": " + e.what());
            }
            adam.step();
        }
        result.train_loss.push_back(epoch_acc / static_cast<double>(comparisons.size()));
        if (!val.empty()) {
            double vacc = 0.0;
            for (const auto& c : val) {
                const double sl = score(detail::embedding_of(embeddings, c.left), result.params);
                const double sr = score(detail::embedding_of(embeddings, c.right), result.params);
                vacc += pair_loss(pair_prob(sl, sr), winner_target(c.winner));
            }
            result.val_loss.push_back(vacc / static_cast<double>(val.size()));
        }
    }
    return result;
}

struct FineTuneResult {
    ScorerParams scorer;
    mgae::EncoderModel encoder;  // dimension-specific copy
    std::vector<double> train_loss;
};

// Joint scorer + encoder training for one dimension, starting from a
// pretrained encoder copy. Off by default (RankerConfig::fine_tune); the
// frozen-encoder two-stage path is the primary route.
inline FineTuneResult train_dimension_finetune(
    const std::vector<ComparisonRecord>& comparisons,
    const std::map<std::string, const FeaturizedGraph*>& graphs,
    const mgae::EncoderModel& pretrained, const RankerConfig& cfg) {
    if (comparisons.empty()) throw DataError("train_dimension_finetune: no comparisons");
    for (const auto& c : comparisons)
        for (const auto& id : {c.left, c.right})
            if (!graphs.contains(id))
                throw DataError("train_dimension_finetune: no graph for scene '" + id + "'");

    Rng init_rng(cfg.seed, "init");
    Rng batch_rng(cfg.seed, "batch");
    FineTuneResult result{ScorerParams::init(init_rng), pretrained, {}};

    std::vector<ad::Tensor*> params = result.scorer.tensors();
    for (ad::Tensor* t : result.encoder.tensors()) params.push_back(t);
    ad::Adam adam(params, {.lr = cfg.lr});

    std::vector<std::size_t> order(comparisons.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const std::size_t batch_size =
        cfg.batch > 0 ? static_cast<std::size_t>(cfg.batch) : comparisons.size();

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        batch_rng.shuffle(order);
        double epoch_acc = 0.0;
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            const std::size_t end = std::min(order.size(), start + batch_size);
            ad::Tape tape;
            std::map<std::string, ad::Tensor*> scene_score;
            auto score_of = [&](const std::string& id) {
                auto it = scene_score.find(id);
                if (it != scene_score.end()) return it->second;
                const FeaturizedGraph& fg = *graphs.at(id);
                ad::Tensor* z = tape.row_mean(mgae::encode(tape, fg, result.encoder));
                ad::Tensor* h = tape.leaky_relu(
                    tape.add(tape.matmul(z, &result.scorer.w1), &result.scorer.b1),
                    mgae::kLeakyAlpha);
                ad::Tensor* s =
                    tape.add(tape.matmul(h, &result.scorer.w2), &result.scorer.b2);
                scene_score.emplace(id, s);
                return s;
            };
            ad::Tensor* batch_loss = nullptr;
            try {
                for (std::size_t i = start; i < end; ++i) {
                    const ComparisonRecord& c = comparisons[order[i]];
                    ad::Tensor* diff =
                        tape.add(score_of(c.left), tape.scale(score_of(c.right), -1.0));
                    ad::Tensor* loss =
                        tape.bce_with_logits(diff, {winner_target(c.winner)});
                    epoch_acc += loss->data[0];
                    batch_loss = batch_loss ? tape.add(batch_loss, loss) : loss;
                }
                tape.backward(tape.scale(batch_loss, 1.0 / static_cast<double>(end - start)));
            } catch (const TrainingDivergence& e) {
                throw TrainingDivergence("fine-tune diverged at epoch " +
                                         std::to_string(epoch) + ": " + e.what());
            }
            adam.step();
        }
        result.train_loss.push_back(epoch_acc / static_cast<double>(comparisons.size()));
    }
    return result;
}

struct MetricReport {
    double auc = 0.0;
    double accuracy = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double precision = 0.0;
    std::size_t n_pairs = 0;  // scoreable (non-tie) comparisons
    std::size_t n_ties = 0;
};

namespace detail {

// Mann-Whitney AUC via the midrank rank-sum formula. Degenerate single-class
// inputs score 0.5 (no ranking information).
inline double auc_midrank(std::vector<std::pair<double, bool>> scored) {
    std::size_t pos = 0;
    for (const auto& [p, is_pos] : scored) pos += is_pos ? 1u : 0u;
    const std::size_t neg = scored.size() - pos;
    if (pos == 0 || neg == 0) return 0.5;
    std::sort(scored.begin(), scored.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < scored.size()) {
        std::size_t j = i;
        while (j < scored.size() && scored[j].first == scored[i].first) ++j;
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // average of ranks i+1..j
        for (std::size_t k = i; k < j; ++k)
            if (scored[k].second) rank_sum_pos += midrank;
        i = j;
    }
    const double u = rank_sum_pos -
                     static_cast<double>(pos) * static_cast<double>(pos + 1) / 2.0;
    return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

}  // namespace detail

namespace detail {

// Shared metric core: `prob_of` maps a non-tie comparison to P(left wins).
template <typename ProbFn>
MetricReport accumulate_metrics(const std::vector<ComparisonRecord>& comparisons,
                                ProbFn&& prob_of) {
    if (comparisons.empty()) throw DataError("evaluate: no comparisons");
    MetricReport rep;
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    std::vector<std::pair<double, bool>> scored;
    for (const auto& c : comparisons) {
        if (c.winner == Winner::tie) {
            ++rep.n_ties;
            continue;
        }
        const double p = prob_of(c);
        const bool actual_left = c.winner == Winner::left;
        const bool predicted_left = p > 0.5;
        tp += (predicted_left && actual_left) ? 1u : 0u;
        fp += (predicted_left && !actual_left) ? 1u : 0u;
        fn += (!predicted_left && actual_left) ? 1u : 0u;
        tn += (!predicted_left && !actual_left) ? 1u : 0u;
        scored.emplace_back(p, actual_left);
    }
    rep.n_pairs = scored.size();
    if (rep.n_pairs == 0) throw DataError("evaluate: no scoreable pairs (all ties)");
    rep.accuracy = static_cast<double>(tp + tn) / static_cast<double>(rep.n_pairs);
    rep.precision = (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    rep.recall = (tp + fn) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    rep.f1 = (rep.precision + rep.recall) > 0.0
                 ? 2.0 * rep.precision * rep.recall / (rep.precision + rep.recall)
                 : 0.0;
    rep.auc = auc_midrank(std::move(scored));
    return rep;
}

}  // namespace detail

// Binary metrics over non-tie comparisons. Positive class is "left wins";
// prediction is pair_prob > 0.5 (exact 0.5 predicts "right").
inline MetricReport evaluate(const std::vector<ComparisonRecord>& comparisons,
                             const EmbeddingTable& embeddings, const ScorerParams& params) {
    return detail::accumulate_metrics(comparisons, [&](const ComparisonRecord& c) {
        const double sl = score(detail::embedding_of(embeddings, c.left), params);
        const double sr = score(detail::embedding_of(embeddings, c.right), params);
        return pair_prob(sl, sr);
    });
}

// Pooled metrics across dimensions: each comparison is scored by its own
// dimension's scorer (and, in fine-tuned mode, that dimension's embeddings).
inline MetricReport evaluate_pooled(
    const std::vector<ComparisonRecord>& comparisons,
    const std::map<Dimension, const EmbeddingTable*>& embeddings_by_dim,
    const std::map<Dimension, ScorerParams>& params) {
    return detail::accumulate_metrics(comparisons, [&](const ComparisonRecord& c) {
        auto pit = params.find(c.dimension);
        auto eit = embeddings_by_dim.find(c.dimension);
        if (pit == params.end() || eit == embeddings_by_dim.end())
            throw DataError("evaluate_pooled: no trained scorer for dimension '" +
                            to_string(c.dimension) + "'");
        const double sl = score(detail::embedding_of(*eit->second, c.left), pit->second);
        const double sr = score(detail::embedding_of(*eit->second, c.right), pit->second);
        return pair_prob(sl, sr);
    });
}

// Unweighted mean of several reports (the "dimension-mean" table-1 variant).
inline MetricReport mean_report(const std::vector<MetricReport>& reports) {
    if (reports.empty()) throw DataError("mean_report: no reports");
    MetricReport out;
    for (const auto& r : reports) {
        out.auc += r.auc;
        out.accuracy += r.accuracy;
        out.recall += r.recall;
        out.f1 += r.f1;
        out.precision += r.precision;
        out.n_pairs += r.n_pairs;
        out.n_ties += r.n_ties;
    }
    const double n = static_cast<double>(reports.size());
    out.auc /= n;
    out.accuracy /= n;
    out.recall /= n;
    out.f1 /= n;
    out.precision /= n;
    return out;
}

struct DimensionAccuracies {
    std::map<Dimension, double> per_dimension;
    double mean = 0.0;
};

// Per-dimension accuracy plus the unweighted mean over present dimensions.
inline DimensionAccuracies evaluate_all(const std::vector<ComparisonRecord>& comparisons,
                                        const EmbeddingTable& embeddings,
                                        const std::map<Dimension, ScorerParams>& params) {
    std::map<Dimension, std::vector<ComparisonRecord>> by_dim;
    for (const auto& c : comparisons) by_dim[c.dimension].push_back(c);
    if (by_dim.empty()) throw DataError("evaluate_all: no comparisons");
    std::string missing;
    for (const auto& [dim, _] : by_dim)
        if (!params.contains(dim)) missing += (missing.empty() ? "" : ", ") + to_string(dim);
    if (!missing.empty())
        throw DataError("evaluate_all: no trained scorer for dimension(s): " + missing);
    DimensionAccuracies out;
    double acc_sum = 0.0;
    for (const auto& [dim, subset] : by_dim) {
        const double acc = evaluate(subset, embeddings, params.at(dim)).accuracy;
        out.per_dimension[dim] = acc;
        acc_sum += acc;
    }
    out.mean = acc_sum / static_cast<double>(out.per_dimension.size());
    return out;
}

struct PerceptionScore {
    std::string scene_id;
    Dimension dimension = Dimension::safe;
    double score = 0.0;
};

// One score per (scene, trained dimension), ordered by (scene_id, dimension
// name).
inline std::vector<PerceptionScore> score_dataset(
    const std::vector<std::string>& scene_ids, const EmbeddingTable& embeddings,
    const std::map<Dimension, ScorerParams>& params) {
    std::vector<std::string> ordered = scene_ids;
    std::sort(ordered.begin(), ordered.end());
    std::vector<PerceptionScore> out;
    out.reserve(ordered.size() * params.size());
    for (const auto& id : ordered) {
        const auto& z = detail::embedding_of(embeddings, id);
        for (Dimension dim : kAllDimensions) {
            auto it = params.find(dim);
            if (it == params.end()) continue;
            out.push_back({id, dim, score(z, it->second)});
        }
    }
    return out;
}

inline constexpr const char* kScorerKind = "dimension-scorer";

inline std::string save_scorer(const ScorerParams& p, Dimension dim,
                               nlohmann::ordered_json header) {
    header["kind"] = kScorerKind;
    header["dimension"] = to_string(dim);
    std::map<std::string, const ad::Tensor*> params{
        {"w1", &p.w1}, {"b1", &p.b1}, {"w2", &p.w2}, {"b2", &p.b2}};
    return ad::save_checkpoint(params, header);
}

inline std::pair<Dimension, ScorerParams> load_scorer(const std::string& text) {
    ad::Checkpoint ck = ad::load_checkpoint(text);
    if (ck.header.value("kind", "") != kScorerKind)
        throw DataError("not a scorer checkpoint");
    ScorerParams p;
    ad::restore_param(ck, "w1", p.w1);
    ad::restore_param(ck, "b1", p.b1);
    ad::restore_param(ck, "w2", p.w2);
    ad::restore_param(ck, "b2", p.b2);
    return {parse_dimension(ck.header.at("dimension").get<std::string>()), std::move(p)};
}

}  // namespace percept
