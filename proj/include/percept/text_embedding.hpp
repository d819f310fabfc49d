#pragma once

// Text -> unit-norm feature vectors.
//
// Two modes. Table mode serves precomputed sentence embeddings from a JSONL
// file ({"text": ..., "vector": [...]}, re-normalized on load); texts missing
// from the table fall back to the hashed embedder and bump a miss counter, so
// an unseen vocabulary degrades instead of aborting. Hashed mode buckets
// boundary-padded character 3-grams ("car" -> ^^c ^ca car ar$ r$$) through a
// seeded 64-bit hash into d_t signed buckets and L2-normalizes. Both modes
// are deterministic across runs and platforms.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "percept/autodiff.hpp"
#include "percept/errors.hpp"
#include "percept/rng.hpp"
#include "percept/scene_graph.hpp"
#include "percept/util.hpp"

namespace percept {

using FeatureVector = std::vector<double>;

namespace detail {

inline std::uint64_t seeded_hash(std::string_view s, std::uint64_t seed) {
    std::uint64_t state = fnv1a64(s) ^ seed;
    return splitmix64(state);
}

inline void l2_normalize(FeatureVector& v) {
    double sq = 0.0;
    for (double x : v) sq += x * x;
    const double norm = std::sqrt(sq);
    if (norm > 0.0)
        for (double& x : v) x /= norm;
}

}  // namespace detail

inline constexpr std::size_t kMinHashDim = 8;

// Deterministic hashed character-3-gram embedding. The text is normalized,
// padded with "^^" / "$$", and each 3-gram adds +-1 to one of d_t buckets.
// In the vanishingly rare case that signs cancel to the zero vector, the
// grams are re-hashed with an incremented salt (zero embeddings are
// forbidden).
inline FeatureVector hashed_embed(std::string_view text, std::size_t d_t, std::uint64_t seed) {
    if (d_t < kMinHashDim)
        throw DataError("hashed_embed: dimension must be >= " + std::to_string(kMinHashDim));
    const std::string norm = normalize_label(text);
    if (norm.empty()) throw DataError("hashed_embed: empty text");
    const std::string padded = "^^" + norm + "$$";
    for (std::uint64_t salt = 0;; ++salt) {
        FeatureVector v(d_t, 0.0);
        for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
            const std::uint64_t h =
                detail::seeded_hash(std::string_view(padded).substr(i, 3), seed + salt);
            const std::size_t bucket = static_cast<std::size_t>((h >> 1) % d_t);
            v[bucket] += (h & 1) ? 1.0 : -1.0;
        }
        double sq = 0.0;
        for (double x : v) sq += x * x;
        if (sq > 0.0) {
            detail::l2_normalize(v);
            return v;
        }
    }
}

class TextEmbedder {
public:
    static TextEmbedder hashed(std::size_t d_t, std::uint64_t seed) {
        if (d_t < kMinHashDim)
            throw DataError("hashed embedder: dimension must be >= " +
                            std::to_string(kMinHashDim));
        TextEmbedder e;
        e.d_t_ = d_t;
        e.seed_ = seed;
        return e;
    }

    static TextEmbedder from_table(std::map<std::string, FeatureVector> table,
                                   std::uint64_t fallback_seed = 0) {
        if (table.empty()) throw DataError("embedding table is empty");
        TextEmbedder e;
        e.table_mode_ = true;
        e.d_t_ = table.begin()->second.size();
        e.seed_ = fallback_seed;
        for (auto& [text, vec] : table) {
            if (vec.size() != e.d_t_)
                throw DataError("embedding table: inconsistent vector widths (" +
                                std::to_string(vec.size()) + " vs " + std::to_string(e.d_t_) +
                                ")");
            double sq = 0.0;
            for (double x : vec) sq += x * x;
            if (sq == 0.0) throw DataError("embedding table: zero vector for '" + text + "'");
            detail::l2_normalize(vec);
        }
        e.table_ = std::move(table);
        return e;
    }

    std::size_t dim() const { return d_t_; }
    bool is_table() const { return table_mode_; }
    std::uint64_t seed() const { return seed_; }

    // Out-of-table texts this embedder has served via the hashed fallback.
    std::uint64_t misses() const { return misses_->load(std::memory_order_relaxed); }

    // Deterministic unit-norm embedding of normalized text. Table texts never
    // route to the fallback.
    FeatureVector embed(std::string_view text) const {
        const std::string norm = normalize_label(text);
        if (norm.empty()) throw DataError("embed_text: empty text");
        if (table_mode_) {
            auto it = table_.find(norm);
            if (it != table_.end()) return it->second;
            misses_->fetch_add(1, std::memory_order_relaxed);
            if (d_t_ < kMinHashDim)
                throw DataError("embed_text: '" + norm + "' is not in the table and the table "
                                "width " + std::to_string(d_t_) +
                                " is below the hashed-fallback minimum of " +
                                std::to_string(kMinHashDim));
        }
        return hashed_embed(norm, d_t_, seed_);
    }

    // Canonical JSONL writer (texts in sorted order, unit-norm vectors).
    std::string serialize_table() const {
        std::string out;
        for (const auto& [text, vec] : table_) {
            nlohmann::ordered_json j;
            j["text"] = text;
            j["vector"] = vec;
            out += j.dump();
            out += '\n';
        }
        return out;
    }

private:
    TextEmbedder() : misses_(std::make_shared<std::atomic<std::uint64_t>>(0)) {}

    bool table_mode_ = false;
    std::map<std::string, FeatureVector> table_;
    std::size_t d_t_ = 0;
    std::uint64_t seed_ = 0;
    std::shared_ptr<std::atomic<std::uint64_t>> misses_;  // shared across copies
};

// Loads {"text": str, "vector": [floats]} JSONL. Widths must agree, zero
// vectors and duplicate texts are errors; vectors are re-normalized.
inline TextEmbedder load_embedding_table(std::istream& in, std::uint64_t fallback_seed = 0) {
    std::map<std::string, FeatureVector> table;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("text") ||
            !j["text"].is_string() || !j.contains("vector") || !j["vector"].is_array())
            throw DataError("embedding table line " + std::to_string(line_no) +
                            ": expected {\"text\": str, \"vector\": [floats]}");
        std::string text = normalize_label(j["text"].get<std::string>());
        if (text.empty())
            throw DataError("embedding table line " + std::to_string(line_no) + ": empty text");
        auto vec = j["vector"].get<FeatureVector>();
        if (!table.emplace(std::move(text), std::move(vec)).second)
            throw DataError("embedding table line " + std::to_string(line_no) +
                            ": duplicate text '" + j["text"].get<std::string>() + "'");
    }
    return TextEmbedder::from_table(std::move(table), fallback_seed);
}

inline TextEmbedder load_embedding_table(const std::string& text, std::uint64_t fallback_seed = 0) {
    std::istringstream in(text);
    return load_embedding_table(in, fallback_seed);
}

// A scene graph plus per-node / per-edge feature rows and the index-space
// topology used by the message-passing layers. Aggregation matrices are
// n x m with 1/indegree (respectively 1/outdegree) entries, so that a matmul
// against per-edge messages computes the per-node neighbor means.
struct FeaturizedGraph {
    SceneGraph graph;
    ad::Tensor node_features;  // n x d_t
    ad::Tensor edge_features;  // m x d_t
    std::vector<std::size_t> edge_src;  // node positions, not ids
    std::vector<std::size_t> edge_dst;
    ad::Tensor agg_in;   // n x m, averages messages over incoming edges
    ad::Tensor agg_out;  // n x m, averages messages over outgoing edges

    std::size_t node_count() const { return graph.nodes.size(); }
    std::size_t edge_count() const { return graph.edges.size(); }
    std::size_t feature_dim() const { return node_features.cols; }
};

inline FeaturizedGraph featurize_graph(const TextEmbedder& embedder, const SceneGraph& g) {
    ValidationReport report = validate_graph(g);
    if (!report.ok())
        throw DataError("featurize_graph: invalid scene '" + g.scene_id + "': " +
                        report.errors.front());
    FeaturizedGraph fg;
    fg.graph = g;
    const std::size_t n = g.nodes.size(), m = g.edges.size(), d = embedder.dim();
    fg.node_features = ad::Tensor(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        FeatureVector v = embedder.embed(g.nodes[i].label);
        std::copy(v.begin(), v.end(), fg.node_features.data.begin() + static_cast<std::ptrdiff_t>(i * d));
    }
    fg.edge_features = ad::Tensor(m, d);
    fg.edge_src.resize(m);
    fg.edge_dst.resize(m);
    std::map<std::int64_t, std::size_t> index;
    for (std::size_t i = 0; i < n; ++i) index[g.nodes[i].id] = i;
    std::vector<double> indeg(n, 0.0), outdeg(n, 0.0);
    for (std::size_t e = 0; e < m; ++e) {
        FeatureVector v = embedder.embed(g.edges[e].predicate);
        std::copy(v.begin(), v.end(), fg.edge_features.data.begin() + static_cast<std::ptrdiff_t>(e * d));
        fg.edge_src[e] = index.at(g.edges[e].src);
        fg.edge_dst[e] = index.at(g.edges[e].dst);
        outdeg[fg.edge_src[e]] += 1.0;
        indeg[fg.edge_dst[e]] += 1.0;
    }
    fg.agg_in = ad::Tensor(n, m);
    fg.agg_out = ad::Tensor(n, m);
    for (std::size_t e = 0; e < m; ++e) {
        fg.agg_in.at(fg.edge_dst[e], e) = 1.0 / indeg[fg.edge_dst[e]];
        fg.agg_out.at(fg.edge_src[e], e) = 1.0 / outdeg[fg.edge_src[e]];
    }
    return fg;
}

}  // namespace percept
