// Copyright 2026 The shopgraph Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Result graphs: customer <-> item purchases and customer <-> dictionary
// element affinities, with embeddings attached.
//
// Export layout (one directory per graph):
//   nodes.jsonl    {"_key", "collection", "kind", ["embedding", "embedding_source"], ["cluster"]}
//   edges.jsonl    {"_from": "<collection>/<key>", "_to": "<collection>/<key>", "weight"}
//   graph.graphml  GraphML with kind / cluster / embedding node data and weight edge data
// Both JSONL files load with a document-store bulk importer as-is. Objects are
// written with sorted keys and shortest round-trip numbers, so an
// export -> import -> export cycle is byte-identical.

#ifndef SHOPGRAPH_GRAPH_HPP
#define SHOPGRAPH_GRAPH_HPP

#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <unordered_map>

#include "shopgraph/cluster.hpp"
#include "shopgraph/ingest.hpp"
#include "shopgraph/nmf.hpp"

namespace shopgraph {

enum class NodeKind { customer, item, dictionary_element };

inline std::string_view to_string(NodeKind k) {
  switch (k) {
    case NodeKind::customer: return "customer";
    case NodeKind::item: return "item";
    case NodeKind::dictionary_element: return "dictionary_element";
  }
  return "unknown";
}

inline std::string_view collection_of(NodeKind k) {
  switch (k) {
    case NodeKind::customer: return "customers";
    case NodeKind::item: return "items";
    case NodeKind::dictionary_element: return "elements";
  }
  return "unknown";
}

inline NodeKind node_kind_from(std::string_view s) {
  if (s == "customer") return NodeKind::customer;
  if (s == "item") return NodeKind::item;
  if (s == "dictionary_element") return NodeKind::dictionary_element;
  throw Error("unknown node kind '" + std::string(s) + "'");
}

struct GraphNode {
  std::string id;
  NodeKind kind = NodeKind::customer;
};

struct GraphEdge {
  std::size_t left = 0;   // index into left_nodes
  std::size_t right = 0;  // index into right_nodes
  double weight = 0.0;    // > 0
};

struct BipartiteGraph {
  std::vector<GraphNode> left_nodes;
  std::vector<GraphNode> right_nodes;
  std::vector<GraphEdge> edges;
};

inline std::string element_id(std::size_t c) { return "element_" + std::to_string(c); }

/// One edge per stored entry, weight = spend.
inline BipartiteGraph build_purchase_graph(const PurchaseMatrix& p) {
  BipartiteGraph g;
  for (const auto& id : p.row_ids()) g.left_nodes.push_back({id, NodeKind::customer});
  for (const auto& id : p.col_ids()) g.right_nodes.push_back({id, NodeKind::item});
  for (const auto& e : p.entries()) g.edges.push_back({e.row, e.col, e.value});
  return g;
}

/// Customer -> dictionary element edges for every affinity above `threshold`.
inline BipartiteGraph build_affinity_graph(const Factorization& f, double threshold = 0.0) {
  if (threshold < 0.0) throw Error("build_affinity_graph: threshold must be >= 0");
  BipartiteGraph g;
  for (Eigen::Index i = 0; i < f.w.rows(); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    g.left_nodes.push_back({idx < f.row_ids.size() ? f.row_ids[idx] : std::to_string(i), NodeKind::customer});
  }
  for (Eigen::Index c = 0; c < f.w.cols(); ++c)
    g.right_nodes.push_back({element_id(static_cast<std::size_t>(c)), NodeKind::dictionary_element});
  for (Eigen::Index i = 0; i < f.w.rows(); ++i)
    for (Eigen::Index c = 0; c < f.w.cols(); ++c)
      if (f.w(i, c) > threshold)
        g.edges.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(c), f.w(i, c)});
  return g;
}

enum class EmbeddingSource { affinity_row, dictionary_column };

struct NodeDocument {
  std::string key;
  NodeKind kind = NodeKind::customer;
  std::optional<std::vector<double>> embedding;
  std::optional<EmbeddingSource> source;
  std::optional<int> cluster;

  friend bool operator==(const NodeDocument&, const NodeDocument&) = default;
};

struct EdgeDocument {
  std::string from;  // "<collection>/<key>"
  std::string to;
  double weight = 0.0;

  friend bool operator==(const EdgeDocument&, const EdgeDocument&) = default;
};

struct GraphDocument {
  std::vector<NodeDocument> nodes;
  std::vector<EdgeDocument> edges;

  friend bool operator==(const GraphDocument&, const GraphDocument&) = default;
};

/// Customers carry their W row (and cluster id when labels are given), items
/// their H column. Dictionary-element nodes carry no embedding.
inline GraphDocument attach_embeddings(const BipartiteGraph& g, const Factorization& f,
                                       const ClusterLabeling* labels = nullptr) {
  if (labels && labels->labels.size() != f.row_ids.size())
    throw Error("attach_embeddings: labels do not match factorization rows");
  std::unordered_map<std::string, Eigen::Index> row_of, col_of;
  for (std::size_t i = 0; i < f.row_ids.size(); ++i) row_of.emplace(f.row_ids[i], static_cast<Eigen::Index>(i));
  for (std::size_t j = 0; j < f.col_ids.size(); ++j) col_of.emplace(f.col_ids[j], static_cast<Eigen::Index>(j));

  GraphDocument doc;
  std::vector<std::string> missing;
  auto add = [&](const GraphNode& node) {
    NodeDocument d{node.id, node.kind, std::nullopt, std::nullopt, std::nullopt};
    if (node.kind == NodeKind::customer) {
      auto it = row_of.find(node.id);
      if (it == row_of.end()) {
        missing.push_back("customers/" + node.id);
      } else {
        const Eigen::VectorXd v = f.w.row(it->second).transpose();
        d.embedding = std::vector<double>(v.data(), v.data() + v.size());
        d.source = EmbeddingSource::affinity_row;
        if (labels) d.cluster = labels->labels[static_cast<std::size_t>(it->second)];
      }
    } else if (node.kind == NodeKind::item) {
      auto it = col_of.find(node.id);
      if (it == col_of.end()) {
        missing.push_back("items/" + node.id);
      } else {
        const Eigen::VectorXd v = f.h.col(it->second);
        d.embedding = std::vector<double>(v.data(), v.data() + v.size());
        d.source = EmbeddingSource::dictionary_column;
      }
    }
    doc.nodes.push_back(std::move(d));
  };
  for (const auto& n : g.left_nodes) add(n);
  for (const auto& n : g.right_nodes) add(n);
  if (!missing.empty()) {
    std::string msg = "attach_embeddings: ids not in factorization:";
    for (const auto& m : missing) msg += " " + m;
    throw Error(msg);
  }
  for (const auto& e : g.edges) {
    const auto& l = g.left_nodes.at(e.left);
    const auto& r = g.right_nodes.at(e.right);
    doc.edges.push_back({std::string(collection_of(l.kind)) + "/" + l.id,
                         std::string(collection_of(r.kind)) + "/" + r.id, e.weight});
  }
  return doc;
}

// ---------------------------------------------------------------------------
// Serialisation

inline nlohmann::json to_json(const NodeDocument& n) {
  nlohmann::json j{{"_key", n.key}, {"collection", collection_of(n.kind)}, {"kind", to_string(n.kind)}};
  if (n.embedding) j["embedding"] = *n.embedding;
  if (n.source) j["embedding_source"] = *n.source == EmbeddingSource::affinity_row ? "affinity_row" : "dictionary_column";
  if (n.cluster) j["cluster"] = *n.cluster;
  return j;
}

inline NodeDocument node_from_json(const nlohmann::json& j) {
  NodeDocument n;
  n.key = j.at("_key").get<std::string>();
  n.kind = node_kind_from(j.at("kind").get<std::string>());
  if (j.contains("embedding")) n.embedding = j.at("embedding").get<std::vector<double>>();
  if (j.contains("embedding_source")) {
    const auto s = j.at("embedding_source").get<std::string>();
    if (s == "affinity_row") n.source = EmbeddingSource::affinity_row;
    else if (s == "dictionary_column") n.source = EmbeddingSource::dictionary_column;
    else throw Error("unknown embedding source '" + s + "'");
  }
  if (j.contains("cluster")) n.cluster = j.at("cluster").get<int>();
  return n;
}

inline std::string format_nodes_jsonl(const GraphDocument& doc) {
  std::string out;
  for (const auto& n : doc.nodes) {
    out += to_json(n).dump();
    out += '\n';
  }
  return out;
}

inline std::string format_edges_jsonl(const GraphDocument& doc) {
  std::string out;
  for (const auto& e : doc.edges) {
    out += nlohmann::json{{"_from", e.from}, {"_to", e.to}, {"weight", e.weight}}.dump();
    out += '\n';
  }
  return out;
}

namespace detail {

inline std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::vector<std::string> jsonl_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string line(text.substr(pos, nl - pos));
    if (!trim(line).empty()) lines.push_back(std::move(line));
    pos = nl + 1;
  }
  return lines;
}

}  // namespace detail

inline std::string format_graphml(const GraphDocument& doc) {
  std::string out =
      "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      "<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n"
      "  <key id=\"kind\" for=\"node\" attr.name=\"kind\" attr.type=\"string\"/>\n"
      "  <key id=\"cluster\" for=\"node\" attr.name=\"cluster\" attr.type=\"int\"/>\n"
      "  <key id=\"embedding\" for=\"node\" attr.name=\"embedding\" attr.type=\"string\"/>\n"
      "  <key id=\"weight\" for=\"edge\" attr.name=\"weight\" attr.type=\"double\"/>\n"
      "  <graph id=\"G\" edgedefault=\"undirected\">\n";
  for (const auto& n : doc.nodes) {
    out += "    <node id=\"" + detail::xml_escape(std::string(collection_of(n.kind)) + "/" + n.key) + "\">";
    out += "<data key=\"kind\">" + std::string(to_string(n.kind)) + "</data>";
    if (n.cluster) out += "<data key=\"cluster\">" + std::to_string(*n.cluster) + "</data>";
    if (n.embedding) {
      out += "<data key=\"embedding\">";
      for (std::size_t i = 0; i < n.embedding->size(); ++i) {
        if (i) out += ' ';
        out += format_double((*n.embedding)[i]);
      }
      out += "</data>";
    }
    out += "</node>\n";
  }
  std::size_t eid = 0;
  for (const auto& e : doc.edges) {
    out += "    <edge id=\"e" + std::to_string(eid++) + "\" source=\"" + detail::xml_escape(e.from) +
           "\" target=\"" + detail::xml_escape(e.to) + "\"><data key=\"weight\">" + format_double(e.weight) +
           "</data></edge>\n";
  }
  out += "  </graph>\n</graphml>\n";
  return out;
}

inline GraphDocument parse_graph_jsonl(std::string_view nodes_text, std::string_view edges_text) {
  GraphDocument doc;
  for (const auto& line : detail::jsonl_lines(nodes_text)) doc.nodes.push_back(node_from_json(nlohmann::json::parse(line)));
  for (const auto& line : detail::jsonl_lines(edges_text)) {
    const auto j = nlohmann::json::parse(line);
    doc.edges.push_back({j.at("_from").get<std::string>(), j.at("_to").get<std::string>(), j.at("weight").get<double>()});
  }
  return doc;
}

inline void export_graph(const GraphDocument& doc, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_file((dir / "nodes.jsonl").string(), format_nodes_jsonl(doc));
  write_file((dir / "edges.jsonl").string(), format_edges_jsonl(doc));
  write_file((dir / "graph.graphml").string(), format_graphml(doc));
}

inline GraphDocument import_graph(const std::filesystem::path& dir) {
  return parse_graph_jsonl(read_file((dir / "nodes.jsonl").string()), read_file((dir / "edges.jsonl").string()));
}

// ---------------------------------------------------------------------------
// Queries

inline double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw Error("cosine_similarity: length mismatch");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

/// Same-kind nodes ranked by cosine similarity of embeddings (descending, ties
/// by key). Nodes with zero or missing embeddings are skipped.
inline std::vector<std::pair<std::string, double>> similar_nodes(const GraphDocument& doc, const std::string& node_id,
                                                                 std::size_t top_n,
                                                                 std::optional<NodeKind> kind = std::nullopt) {
  const NodeDocument* query = nullptr;
  for (const auto& n : doc.nodes)
    if (n.key == node_id && (!kind || n.kind == *kind)) {
      query = &n;
      break;
    }
  if (!query) throw Error("similar_nodes: unknown node '" + node_id + "'");
  if (!query->embedding) throw Error("similar_nodes: node '" + node_id + "' has no embedding");
  const auto& q = *query->embedding;
  if (std::all_of(q.begin(), q.end(), [](double x) { return x == 0.0; }))
    throw Error("similar_nodes: node '" + node_id + "' has a zero embedding");

  std::vector<std::pair<std::string, double>> out;
  for (const auto& n : doc.nodes) {
    if (&n == query || n.kind != query->kind || !n.embedding) continue;
    if (std::all_of(n.embedding->begin(), n.embedding->end(), [](double x) { return x == 0.0; })) continue;
    out.emplace_back(n.key, cosine_similarity(q, *n.embedding));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (out.size() > top_n) out.resize(top_n);
  return out;
}

}  // namespace shopgraph

#endif  // SHOPGRAPH_GRAPH_HPP
