#pragma once

// Scene-graph data model and JSONL interchange.
//
// One street scene is a directed labelled multigraph: nodes are urban
// entities ("car", "sidewalk"), edges carry relation predicates
// ("parked on"). Interchange is one JSON object per line:
//
//   {"scene_id": "s1", "city": "tokyo",
//    "nodes": [{"id": 0, "label": "car"}, {"id": 1, "label": "sidewalk"}],
//    "edges": [{"src": 0, "dst": 1, "predicate": "parked on"}]}
//
// "city" is optional, unknown fields are ignored. Labels and predicates are
// normalized (trimmed, lowercased) on every construction path. Node ids are
// arbitrary non-negative integers unique within a scene; they are not
// required to be dense.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "percept/errors.hpp"
#include "percept/util.hpp"

namespace percept {

struct NodeRecord {
    std::int64_t id = 0;
    std::string label;

    bool operator==(const NodeRecord&) const = default;
};

struct EdgeRecord {
    std::int64_t src = 0;
    std::int64_t dst = 0;
    std::string predicate;

    bool operator==(const EdgeRecord&) const = default;
};

struct SceneGraph {
    std::string scene_id;
    std::optional<std::string> city;
    std::vector<NodeRecord> nodes;
    std::vector<EdgeRecord> edges;

    bool operator==(const SceneGraph&) const = default;

    // position of a node id in `nodes`, or npos
    std::size_t node_index(std::int64_t id) const {
        for (std::size_t i = 0; i < nodes.size(); ++i)
            if (nodes[i].id == id) return i;
        return npos;
    }
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

struct GraphStats {
    std::size_t node_count = 0;
    std::size_t edge_count = 0;
    std::size_t distinct_node_labels = 0;
    std::size_t distinct_predicates = 0;
    double label_entropy = 0.0;  // nats
};

struct ValidationReport {
    std::vector<std::string> errors;
    std::vector<std::string> warnings;

    bool ok() const { return errors.empty(); }
};

// Structural check against the SceneGraph invariants. Self-loops and
// zero-edge graphs are warnings, everything else that breaks an invariant
// is an error.
inline ValidationReport validate_graph(const SceneGraph& g) {
    ValidationReport report;
    if (g.scene_id.empty()) report.errors.push_back("scene_id is empty");
    if (g.nodes.empty()) report.errors.push_back("graph has no nodes");

    std::unordered_set<std::int64_t> ids;
    for (const auto& n : g.nodes) {
        if (n.id < 0)
            report.errors.push_back("node id " + std::to_string(n.id) + " is negative");
        if (!ids.insert(n.id).second)
            report.errors.push_back("duplicate node id " + std::to_string(n.id));
        if (normalize_label(n.label).empty())
            report.errors.push_back("node " + std::to_string(n.id) + " has empty label");
    }
    for (std::size_t i = 0; i < g.edges.size(); ++i) {
        const auto& e = g.edges[i];
        if (!ids.contains(e.src) || !ids.contains(e.dst))
            report.errors.push_back("scene '" + g.scene_id + "' edge #" + std::to_string(i) +
                                    ": dangling endpoint");
        if (normalize_label(e.predicate).empty())
            report.errors.push_back("edge #" + std::to_string(i) + " has empty predicate");
        if (e.src == e.dst)
            report.warnings.push_back("edge #" + std::to_string(i) + " is a self-loop");
    }
    if (g.nodes.size() >= 1 && g.edges.empty())
        report.warnings.push_back("graph has no edges");
    return report;
}

namespace detail {

inline SceneGraph scene_from_json(const nlohmann::json& j) {
    SceneGraph g;
    if (!j.is_object()) throw DataError("line is not a JSON object");
    if (!j.contains("scene_id") || !j["scene_id"].is_string())
        throw DataError("missing or non-string 'scene_id'");
    g.scene_id = j["scene_id"].get<std::string>();
    if (j.contains("city") && !j["city"].is_null()) {
        if (!j["city"].is_string()) throw DataError("'city' must be a string");
        g.city = normalize_label(j["city"].get<std::string>());
    }
    if (!j.contains("nodes") || !j["nodes"].is_array())
        throw DataError("missing or non-array 'nodes'");
    for (const auto& jn : j["nodes"]) {
        if (!jn.contains("id") || !jn["id"].is_number_integer())
            throw DataError("node without integer 'id'");
        if (!jn.contains("label") || !jn["label"].is_string())
            throw DataError("node without string 'label'");
        g.nodes.push_back({jn["id"].get<std::int64_t>(),
                           normalize_label(jn["label"].get<std::string>())});
    }
    if (j.contains("edges")) {
        if (!j["edges"].is_array()) throw DataError("'edges' must be an array");
        for (const auto& je : j["edges"]) {
            if (!je.contains("src") || !je["src"].is_number_integer() ||
                !je.contains("dst") || !je["dst"].is_number_integer())
                throw DataError("edge without integer 'src'/'dst'");
            if (!je.contains("predicate") || !je["predicate"].is_string())
                throw DataError("edge without string 'predicate'");
            g.edges.push_back({je["src"].get<std::int64_t>(), je["dst"].get<std::int64_t>(),
                               normalize_label(je["predicate"].get<std::string>())});
        }
    }
    return g;
}

}  // namespace detail

// Parses scene JSONL. Every returned graph passes validate_graph with zero
// errors; scene_ids are unique across the stream. Throws DataError with the
// 1-based line number on any malformed line.
inline std::vector<SceneGraph> parse_scene_jsonl(std::istream& in) {
    std::vector<SceneGraph> graphs;
    std::unordered_set<std::string> seen_ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw DataError("line " + std::to_string(line_no) + ": malformed JSON");
        SceneGraph g;
        try {
            g = detail::scene_from_json(j);
        } catch (const DataError& e) {
            throw DataError("line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!seen_ids.insert(g.scene_id).second)
            throw DataError("line " + std::to_string(line_no) + ": duplicate scene_id '" +
                            g.scene_id + "'");
        ValidationReport report = validate_graph(g);
        if (!report.ok())
            throw DataError("line " + std::to_string(line_no) + ": " + report.errors.front());
        graphs.push_back(std::move(g));
    }
    return graphs;
}

inline std::vector<SceneGraph> parse_scene_jsonl(const std::string& text) {
    std::istringstream in(text);
    return parse_scene_jsonl(in);
}

// Canonical writer; parse_scene_jsonl(serialize_scene_jsonl(gs)) == gs and the
// bytes are stable across runs.
inline std::string serialize_scene_jsonl(const std::vector<SceneGraph>& graphs) {
    std::string out;
    for (const auto& g : graphs) {
        nlohmann::ordered_json j;
        j["scene_id"] = g.scene_id;
        if (g.city) j["city"] = *g.city;
        j["nodes"] = nlohmann::ordered_json::array();
        for (const auto& n : g.nodes)
            j["nodes"].push_back({{"id", n.id}, {"label", n.label}});
        j["edges"] = nlohmann::ordered_json::array();
        for (const auto& e : g.edges)
            j["edges"].push_back({{"src", e.src}, {"dst", e.dst}, {"predicate", e.predicate}});
        out += j.dump();
        out += '\n';
    }
    return out;
}

struct Triplet {
    std::string subject;
    std::string predicate;
    std::string object;
    std::int64_t subject_instance = 0;
    std::int64_t object_instance = 0;
};

// Builds a scene from parser triplets. Node identity is instance-level: one
// node per distinct (normalized text, instance) pair, ids assigned densely
// 0..n-1 in first-appearance order, one edge per triplet.
inline SceneGraph from_triplets(const std::string& scene_id, const std::vector<Triplet>& triplets) {
    if (triplets.empty())
        throw DataError("scene '" + scene_id + "': cannot build a graph from zero triplets");
    SceneGraph g;
    g.scene_id = scene_id;
    std::map<std::pair<std::string, std::int64_t>, std::int64_t> ids;
    auto intern = [&](const std::string& text, std::int64_t instance) {
        std::string label = normalize_label(text);
        if (label.empty()) throw DataError("scene '" + scene_id + "': empty entity text");
        auto [it, inserted] = ids.try_emplace({label, instance},
                                              static_cast<std::int64_t>(g.nodes.size()));
        if (inserted) g.nodes.push_back({it->second, label});
        return it->second;
    };
    for (const auto& t : triplets) {
        std::int64_t s = intern(t.subject, t.subject_instance);
        std::int64_t o = intern(t.object, t.object_instance);
        std::string pred = normalize_label(t.predicate);
        if (pred.empty()) throw DataError("scene '" + scene_id + "': empty predicate text");
        g.edges.push_back({s, o, pred});
    }
    return g;
}

// Counts plus Shannon entropy (nats) of the node-label distribution.
inline GraphStats graph_stats(const SceneGraph& g) {
    GraphStats s;
    s.node_count = g.nodes.size();
    s.edge_count = g.edges.size();
    std::map<std::string, std::size_t> label_counts;
    for (const auto& n : g.nodes) ++label_counts[n.label];
    std::set<std::string> predicates;
    for (const auto& e : g.edges) predicates.insert(e.predicate);
    s.distinct_node_labels = label_counts.size();
    s.distinct_predicates = predicates.size();
    double entropy = 0.0;
    const double n = static_cast<double>(g.nodes.size());
    for (const auto& [label, count] : label_counts) {
        double p = static_cast<double>(count) / n;
        entropy -= p * std::log(p);
    }
    // single-label graphs must come out exactly 0, not -0 or 1e-17
    s.label_entropy = label_counts.size() <= 1 ? 0.0 : entropy;
    return s;
}

namespace detail {

inline std::string dot_quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out.push_back('\\');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

}  // namespace detail

// Deterministic DOT digraph: nodes by id, edges in list order.
inline std::string export_dot(const SceneGraph& g) {
    std::string out = "digraph " + detail::dot_quote(g.scene_id) + " {\n";
    std::vector<NodeRecord> nodes = g.nodes;
    std::sort(nodes.begin(), nodes.end(),
              [](const NodeRecord& a, const NodeRecord& b) { return a.id < b.id; });
    for (const auto& n : nodes)
        out += "  " + std::to_string(n.id) + " [label=" + detail::dot_quote(n.label) + "];\n";
    for (const auto& e : g.edges)
        out += "  " + std::to_string(e.src) + " -> " + std::to_string(e.dst) +
               " [label=" + detail::dot_quote(e.predicate) + "];\n";
    out += "}\n";
    return out;
}

}  // namespace percept
