#include "percept/text_embedding.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

using namespace percept;

namespace {

double norm(const FeatureVector& v) {
    double sq = 0.0;
    for (double x : v) sq += x * x;
    return std::sqrt(sq);
}

double cosine(const FeatureVector& a, const FeatureVector& b) {
    double dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
    return dot / (norm(a) * norm(b));
}

TEST(LoadEmbeddingTable, TwoLinesWidthFour) {
    const std::string jsonl =
        R"({"text":"car","vector":[1,0,0,0]})"
        "\n"
        R"({"text":"road","vector":[0,2,0,0]})"
        "\n";
    auto e = load_embedding_table(jsonl);
    EXPECT_EQ(e.dim(), 4u);
    EXPECT_TRUE(e.is_table());
    // renormalized on load
    EXPECT_NEAR(e.embed("road")[1], 1.0, 1e-12);
}

TEST(LoadEmbeddingTable, InconsistentWidthsRejected) {
    const std::string jsonl =
        R"({"text":"a","vector":[1,0,0,0]})"
        "\n"
        R"({"text":"b","vector":[1,0,0,0,0]})"
        "\n";
    EXPECT_THROW(load_embedding_table(jsonl), DataError);
}

TEST(LoadEmbeddingTable, ZeroVectorRejected) {
    EXPECT_THROW(load_embedding_table(std::string(R"({"text":"a","vector":[0,0,0,0]})") + "\n"),
                 DataError);
}

TEST(LoadEmbeddingTable, DuplicateTextRejected) {
    const std::string jsonl =
        R"({"text":"a","vector":[1,0]})"
        "\n"
        R"({"text":"A ","vector":[0,1]})"
        "\n";
    EXPECT_THROW(load_embedding_table(jsonl), DataError);
}

TEST(EmbedText, Deterministic) {
    auto e = TextEmbedder::hashed(64, 0);
    EXPECT_EQ(e.embed("car"), e.embed("car"));
}

TEST(EmbedText, UnitNorm) {
    auto e = TextEmbedder::hashed(64, 0);
    EXPECT_NEAR(norm(e.embed("sidewalk")), 1.0, 1e-6);
}

TEST(EmbedText, DistinctTextsDistinctDirections) {
    auto e = TextEmbedder::hashed(64, 0);
    EXPECT_LT(cosine(e.embed("car"), e.embed("building")), 1.0 - 1e-9);
}

TEST(EmbedText, EmptyTextRejected) {
    auto e = TextEmbedder::hashed(64, 0);
    EXPECT_THROW(e.embed("   "), DataError);
}

TEST(EmbedText, TableFallbackCountsMisses) {
    auto e = load_embedding_table(std::string(R"({"text":"car","vector":[1,0,0,0,0,0,0,0]})") +
                                  "\n");
    EXPECT_EQ(e.misses(), 0u);
    e.embed("car");
    EXPECT_EQ(e.misses(), 0u);
    FeatureVector v = e.embed("zeppelin");
    EXPECT_EQ(e.misses(), 1u);
    EXPECT_EQ(v.size(), 8u);
    EXPECT_NEAR(norm(v), 1.0, 1e-6);
    // fallback is the hashed embedder at the table's width
    EXPECT_EQ(v, hashed_embed("zeppelin", 8, 0));
}

TEST(EmbedText, NarrowTableFallbackRejected) {
    auto e = load_embedding_table(std::string(R"({"text":"car","vector":[1,0,0,0]})") + "\n");
    EXPECT_NO_THROW(e.embed("car"));
    EXPECT_THROW(e.embed("zeppelin"), DataError);
}

TEST(HashedEmbed, StableAcrossCalls) {
    EXPECT_EQ(hashed_embed("parked on", 64, 7), hashed_embed("parked on", 64, 7));
}

TEST(HashedEmbed, SingleCharHitsExactlyItsPaddedTrigrams) {
    // "a" pads to "^^a$$": trigrams ^^a, ^a$, a$$
    const FeatureVector v = hashed_embed("a", 8, 0);
    std::set<std::size_t> expected;
    for (const char* gram : {"^^a", "^a$", "a$$"}) {
        const std::uint64_t h = detail::seeded_hash(gram, 0);
        expected.insert(static_cast<std::size_t>((h >> 1) % 8));
    }
    for (std::size_t i = 0; i < v.size(); ++i)
        EXPECT_EQ(v[i] != 0.0, expected.contains(i)) << "bucket " << i;
}

TEST(HashedEmbed, DifferentSeedsDiverge) {
    int differing = 0;
    for (int w = 0; w < 100; ++w) {
        const std::string word = "word" + std::to_string(w);
        if (hashed_embed(word, 64, 1) != hashed_embed(word, 64, 2)) ++differing;
    }
    EXPECT_GE(differing, 99);
}

TEST(HashedEmbed, DimensionFloor) {
    EXPECT_THROW(hashed_embed("car", 4, 0), DataError);
    EXPECT_NO_THROW(hashed_embed("car", 8, 0));
}

TEST(FeaturizeGraph, ShapesMatchGraph) {
    auto e = TextEmbedder::hashed(16, 0);
    auto g = from_triplets("s", {{"car", "parked on", "sidewalk", 0, 0}});
    auto fg = featurize_graph(e, g);
    EXPECT_EQ(fg.node_features.rows, 2u);
    EXPECT_EQ(fg.node_features.cols, 16u);
    EXPECT_EQ(fg.edge_features.rows, 1u);
    EXPECT_EQ(fg.edge_features.cols, 16u);
}

TEST(FeaturizeGraph, IdenticalLabelsIdenticalRows) {
    auto e = TextEmbedder::hashed(16, 0);
    auto g = from_triplets("s", {{"car", "near", "car", 0, 1}});
    auto fg = featurize_graph(e, g);
    for (std::size_t j = 0; j < 16; ++j)
        EXPECT_EQ(fg.node_features.at(0, j), fg.node_features.at(1, j));
}

TEST(FeaturizeGraph, ZeroEdgeGraphOk) {
    auto e = TextEmbedder::hashed(16, 0);
    SceneGraph g;
    g.scene_id = "solo";
    g.nodes = {{0, "tree"}};
    auto fg = featurize_graph(e, g);
    EXPECT_EQ(fg.edge_features.rows, 0u);
    EXPECT_EQ(fg.node_features.rows, 1u);
}

TEST(FeaturizeGraph, RowsAreUnitNorm) {
    auto e = TextEmbedder::hashed(32, 3);
    auto g = from_triplets("s", {{"graffiti", "on", "wall", 0, 0}, {"car", "near", "wall", 0, 0}});
    auto fg = featurize_graph(e, g);
    for (std::size_t i = 0; i < fg.node_features.rows; ++i) {
        double sq = 0.0;
        for (std::size_t j = 0; j < fg.node_features.cols; ++j)
            sq += fg.node_features.at(i, j) * fg.node_features.at(i, j);
        EXPECT_NEAR(std::sqrt(sq), 1.0, 1e-6);
    }
}

TEST(FeaturizeGraph, DeterministicAcrossCalls) {
    auto e = TextEmbedder::hashed(32, 3);
    auto g = from_triplets("s", {{"tree", "along", "sidewalk", 0, 0}});
    auto a = featurize_graph(e, g);
    auto b = featurize_graph(e, g);
    EXPECT_EQ(a.node_features.data, b.node_features.data);
    EXPECT_EQ(a.edge_features.data, b.edge_features.data);
}

TEST(SerializeTable, RoundTripBytes) {
    const std::string jsonl =
        R"({"text":"car","vector":[0.6,0.8]})"
        "\n"
        R"({"text":"tree","vector":[1.0,0.0]})"
        "\n";
    auto e = load_embedding_table(jsonl);
    const std::string once = e.serialize_table();
    auto e2 = load_embedding_table(once);
    EXPECT_EQ(e2.serialize_table(), once);
}

}  // namespace
