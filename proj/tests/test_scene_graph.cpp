#include "percept/scene_graph.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "percept/rng.hpp"

using namespace percept;

namespace {

SceneGraph two_node_graph() {
    SceneGraph g;
    g.scene_id = "s1";
    g.nodes = {{0, "car"}, {1, "sidewalk"}};
    g.edges = {{0, 1, "parked on"}};
    return g;
}

TEST(ParseSceneJsonl, SingleLine) {
    const std::string line =
        R"({"scene_id":"s1","nodes":[{"id":0,"label":"car"},{"id":1,"label":"sidewalk"}],)"
        R"("edges":[{"src":0,"dst":1,"predicate":"parked on"}]})"
        "\n";
    auto graphs = parse_scene_jsonl(line);
    ASSERT_EQ(graphs.size(), 1u);
    EXPECT_EQ(graphs[0].scene_id, "s1");
    EXPECT_EQ(graphs[0].nodes.size(), 2u);
    EXPECT_EQ(graphs[0].edges.size(), 1u);
    EXPECT_EQ(graphs[0].edges[0].predicate, "parked on");
}

TEST(ParseSceneJsonl, EmptyFileGivesEmptyList) {
    EXPECT_TRUE(parse_scene_jsonl(std::string{}).empty());
}

TEST(ParseSceneJsonl, DanglingEndpointNamesSceneAndEdge) {
    const std::string line =
        R"({"scene_id":"s1","nodes":[{"id":0,"label":"car"},{"id":1,"label":"road"}],)"
        R"("edges":[{"src":5,"dst":1,"predicate":"on"}]})";
    try {
        parse_scene_jsonl(line);
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("s1"), std::string::npos) << msg;
        EXPECT_NE(msg.find("dangling"), std::string::npos) << msg;
        EXPECT_NE(msg.find("#0"), std::string::npos) << msg;
    }
}

TEST(ParseSceneJsonl, MalformedJsonCarriesLineNumber) {
    const std::string text =
        R"({"scene_id":"a","nodes":[{"id":0,"label":"x"}]})"
        "\n{oops\n";
    try {
        parse_scene_jsonl(text);
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
    }
}

TEST(ParseSceneJsonl, DuplicateSceneIdRejected) {
    const std::string one = R"({"scene_id":"a","nodes":[{"id":0,"label":"x"}]})";
    EXPECT_THROW(parse_scene_jsonl(one + "\n" + one + "\n"), DataError);
}

TEST(ParseSceneJsonl, UnknownFieldsIgnored) {
    const std::string line =
        R"({"scene_id":"s1","extra":42,"nodes":[{"id":0,"label":"car","score":0.9}],"edges":[]})";
    auto graphs = parse_scene_jsonl(line);
    ASSERT_EQ(graphs.size(), 1u);
    EXPECT_EQ(graphs[0].nodes[0].label, "car");
}

TEST(ParseSceneJsonl, LabelsNormalized) {
    const std::string line =
        R"({"scene_id":"s1","nodes":[{"id":0,"label":"  Car "}],"edges":[]})";
    auto graphs = parse_scene_jsonl(line);
    EXPECT_EQ(graphs[0].nodes[0].label, "car");
}

TEST(ValidateGraph, ValidGraphCleanReport) {
    auto report = validate_graph(two_node_graph());
    EXPECT_TRUE(report.errors.empty());
    EXPECT_TRUE(report.warnings.empty());
}

TEST(ValidateGraph, ZeroNodesIsError) {
    SceneGraph g;
    g.scene_id = "empty";
    EXPECT_EQ(validate_graph(g).errors.size(), 1u);
}

TEST(ValidateGraph, NodeOnlyGraphWarnsOnly) {
    SceneGraph g;
    g.scene_id = "lonely";
    g.nodes = {{0, "tree"}};
    auto report = validate_graph(g);
    EXPECT_TRUE(report.errors.empty());
    EXPECT_EQ(report.warnings.size(), 1u);
}

TEST(ValidateGraph, SelfLoopWarns) {
    SceneGraph g = two_node_graph();
    g.edges.push_back({0, 0, "near"});
    auto report = validate_graph(g);
    EXPECT_TRUE(report.errors.empty());
    EXPECT_EQ(report.warnings.size(), 1u);
}

TEST(ValidateGraph, DuplicateNodeIdIsError) {
    SceneGraph g = two_node_graph();
    g.nodes.push_back({0, "extra"});
    EXPECT_FALSE(validate_graph(g).ok());
}

TEST(FromTriplets, SingleTriplet) {
    auto g = from_triplets("t1", {{"car", "parked on", "sidewalk", 0, 0}});
    EXPECT_EQ(g.nodes.size(), 2u);
    EXPECT_EQ(g.edges.size(), 1u);
    EXPECT_TRUE(validate_graph(g).ok());
}

TEST(FromTriplets, RepeatedEntityClassGetsTwoNodes) {
    auto g = from_triplets("t2", {{"car", "near", "car", 0, 1}});
    ASSERT_EQ(g.nodes.size(), 2u);
    EXPECT_EQ(g.nodes[0].label, "car");
    EXPECT_EQ(g.nodes[1].label, "car");
    EXPECT_EQ(g.edges.size(), 1u);
}

TEST(FromTriplets, SharedSubjectInstance) {
    // same (car, instance 0) in both triplets -> one shared node
    auto g = from_triplets("t3", {{"car", "on", "road", 0, 0}, {"car", "near", "tree", 0, 0}});
    EXPECT_EQ(g.nodes.size(), 3u);
    EXPECT_EQ(g.edges.size(), 2u);
}

TEST(FromTriplets, DenseIdsInFirstAppearanceOrder) {
    auto g = from_triplets("t4", {{"a", "p", "b", 0, 0}, {"c", "q", "a", 0, 0}});
    ASSERT_EQ(g.nodes.size(), 3u);
    for (std::size_t i = 0; i < g.nodes.size(); ++i)
        EXPECT_EQ(g.nodes[i].id, static_cast<std::int64_t>(i));
    EXPECT_EQ(g.nodes[0].label, "a");
    EXPECT_EQ(g.nodes[1].label, "b");
    EXPECT_EQ(g.nodes[2].label, "c");
}

TEST(FromTriplets, EmptyListRejected) {
    EXPECT_THROW(from_triplets("t", {}), DataError);
}

TEST(GraphStats, TwoLabelEntropyIsLn2) {
    auto s = graph_stats(two_node_graph());
    EXPECT_EQ(s.node_count, 2u);
    EXPECT_EQ(s.edge_count, 1u);
    EXPECT_EQ(s.distinct_node_labels, 2u);
    EXPECT_EQ(s.distinct_predicates, 1u);
    // H = -2 * (1/2) ln(1/2) = ln 2
    EXPECT_NEAR(s.label_entropy, 0.6931471805599453, 1e-12);
}

TEST(GraphStats, SingleLabelEntropyZero) {
    SceneGraph g;
    g.scene_id = "roads";
    g.nodes = {{0, "road"}, {1, "road"}, {2, "road"}};
    EXPECT_EQ(graph_stats(g).label_entropy, 0.0);
}

TEST(GraphStats, InstanceNodesShareLabel) {
    auto g = from_triplets("t", {{"car", "near", "car", 0, 1}});
    auto s = graph_stats(g);
    EXPECT_EQ(s.node_count, 2u);
    EXPECT_EQ(s.distinct_node_labels, 1u);
}

TEST(ExportDot, SingleNode) {
    SceneGraph g;
    g.scene_id = "one";
    g.nodes = {{0, "tree"}};
    const std::string dot = export_dot(g);
    EXPECT_NE(dot.find("digraph"), std::string::npos);
    EXPECT_EQ(dot.find("->"), std::string::npos);
    EXPECT_NE(dot.find("0 [label=\"tree\"];"), std::string::npos);
}

TEST(ExportDot, EdgeWithLabel) {
    SceneGraph g = two_node_graph();
    const std::string dot = export_dot(g);
    EXPECT_NE(dot.find("0 -> 1 [label=\"parked on\"];"), std::string::npos);
}

TEST(ExportDot, Deterministic) {
    SceneGraph g = two_node_graph();
    EXPECT_EQ(export_dot(g), export_dot(g));
}

// --- property tests over generated graphs ---

SceneGraph random_graph(Rng& rng) {
    static const char* kLabels[] = {"car", "road", "tree", "building", "person", "sign"};
    static const char* kPreds[] = {"on", "near", "beside", "behind"};
    SceneGraph g;
    g.scene_id = "g" + std::to_string(rng.below(1000000));
    if (rng.below(2)) g.city = rng.below(2) ? "tokyo" : "amsterdam";
    const std::size_t n = 1 + rng.below(8);
    for (std::size_t i = 0; i < n; ++i)
        g.nodes.push_back({static_cast<std::int64_t>(i), kLabels[rng.below(6)]});
    const std::size_t m = rng.below(12);
    for (std::size_t j = 0; j < m; ++j)
        g.edges.push_back({static_cast<std::int64_t>(rng.below(n)),
                           static_cast<std::int64_t>(rng.below(n)), kPreds[rng.below(4)]});
    return g;
}

TEST(SceneJsonlProperty, SerializeParseRoundTrip) {
    Rng rng(42);
    for (int iter = 0; iter < 50; ++iter) {
        std::vector<SceneGraph> graphs;
        std::set<std::string> used;
        const std::size_t count = 1 + rng.below(5);
        for (std::size_t i = 0; i < count; ++i) {
            SceneGraph g = random_graph(rng);
            g.scene_id += "_" + std::to_string(i);
            graphs.push_back(std::move(g));
        }
        const std::string once = serialize_scene_jsonl(graphs);
        auto parsed = parse_scene_jsonl(once);
        EXPECT_EQ(parsed, graphs);
        EXPECT_EQ(serialize_scene_jsonl(parsed), once);
    }
}

TEST(GraphStatsProperty, ConsistentOnValidGraphs) {
    Rng rng(7);
    for (int iter = 0; iter < 100; ++iter) {
        SceneGraph g = random_graph(rng);
        ASSERT_TRUE(validate_graph(g).ok());
        auto s = graph_stats(g);
        EXPECT_LE(s.distinct_node_labels, s.node_count);
        EXPECT_GE(s.label_entropy, 0.0);
        EXPECT_LE(s.label_entropy,
                  std::log(static_cast<double>(std::max<std::size_t>(s.distinct_node_labels, 1))) +
                      1e-12);
    }
}

TEST(FromTripletsProperty, NodeIdsAreExactlyZeroToNMinusOne) {
    Rng rng(11);
    static const char* kEnt[] = {"car", "wall", "graffiti", "bench"};
    for (int iter = 0; iter < 50; ++iter) {
        std::vector<Triplet> triplets;
        const std::size_t count = 1 + rng.below(6);
        for (std::size_t i = 0; i < count; ++i)
            triplets.push_back({kEnt[rng.below(4)], "p", kEnt[rng.below(4)],
                                static_cast<std::int64_t>(rng.below(3)),
                                static_cast<std::int64_t>(rng.below(3))});
        auto g = from_triplets("t", triplets);
        std::set<std::int64_t> ids;
        for (const auto& n : g.nodes) ids.insert(n.id);
        EXPECT_EQ(ids.size(), g.nodes.size());
        EXPECT_EQ(*ids.begin(), 0);
        EXPECT_EQ(*ids.rbegin(), static_cast<std::int64_t>(g.nodes.size()) - 1);
        EXPECT_EQ(g.edges.size(), triplets.size());
    }
}

}  // namespace
