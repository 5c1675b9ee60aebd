#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "stagger/error.hpp"
#include "stagger/text.hpp"

namespace stagger {

/// Undirected unit adjacency (shared borders), optionally with distances.
class AdjacencyGraph {
 public:
  struct Edge {
    std::string a;
    std::string b;
    std::optional<double> distance;

    friend bool operator==(const Edge&, const Edge&) = default;
  };

  AdjacencyGraph() = default;

  /// Normalises each pair to (min, max) and removes exact duplicates, so the
  /// result does not depend on edge order or orientation.
  static AdjacencyGraph from_edges(std::vector<Edge> edges) {
    for (auto& e : edges) {
      if (e.a == e.b) throw Error(ErrorCode::kInvalidArgument, "self-edge on unit " + e.a, {e.a});
      if (e.distance && (!(*e.distance >= 0.0) || !std::isfinite(*e.distance))) {
        throw Error(ErrorCode::kInvalidArgument, "edge " + e.a + "-" + e.b + " has an invalid distance");
      }
      if (e.b < e.a) std::swap(e.a, e.b);
    }
    std::sort(edges.begin(), edges.end(), [](const Edge& x, const Edge& y) {
      return std::tie(x.a, x.b) < std::tie(y.a, y.b);
    });
    AdjacencyGraph g;
    for (auto& e : edges) {
      if (!g.edges_.empty() && g.edges_.back().a == e.a && g.edges_.back().b == e.b) {
        if (g.edges_.back().distance != e.distance) {
          throw Error(ErrorCode::kInvalidArgument, "edge " + e.a + "-" + e.b + " listed with conflicting distances");
        }
        continue;
      }
      g.edges_.push_back(std::move(e));
    }
    return g;
  }

  const std::vector<Edge>& edges() const { return edges_; }
  bool empty() const { return edges_.empty(); }

  /// unit -> (neighbour, distance) in neighbour id order.
  std::map<std::string, std::vector<std::pair<std::string, std::optional<double>>>> neighbors() const {
    std::map<std::string, std::vector<std::pair<std::string, std::optional<double>>>> out;
    for (const auto& e : edges_) {
      out[e.a].emplace_back(e.b, e.distance);
      out[e.b].emplace_back(e.a, e.distance);
    }
    for (auto& [unit, list] : out) std::sort(list.begin(), list.end());
    return out;
  }

 private:
  std::vector<Edge> edges_;
};

/// Delimited text `unit_a,unit_b[,distance]` with a header row.
inline AdjacencyGraph read_adjacency(std::string_view content, char delim = ',') {
  const auto table = text::Table::parse(content, delim);
  const auto ca = table.require_column("unit_a");
  const auto cb = table.require_column("unit_b");
  const auto cd = table.find_column("distance");
  std::vector<AdjacencyGraph::Edge> edges;
  for (std::size_t i = 0; i < table.rows().size(); ++i) {
    const auto& f = table.rows()[i];
    AdjacencyGraph::Edge e{f[ca], f[cb], std::nullopt};
    if (cd >= 0 && !f[static_cast<std::size_t>(cd)].empty()) {
      e.distance = text::parse_double(f[static_cast<std::size_t>(cd)],
                                      "distance (line " + std::to_string(table.line_number(i)) + ")");
    }
    edges.push_back(std::move(e));
  }
  return AdjacencyGraph::from_edges(std::move(edges));
}

inline std::string write_adjacency(const AdjacencyGraph& graph) {
  const bool with_distance = std::any_of(graph.edges().begin(), graph.edges().end(),
                                         [](const auto& e) { return e.distance.has_value(); });
  std::string out = with_distance ? "unit_a,unit_b,distance\n" : "unit_a,unit_b\n";
  for (const auto& e : graph.edges()) {
    out += text::quote_if_needed(e.a, ',') + "," + text::quote_if_needed(e.b, ',');
    if (with_distance) out += "," + (e.distance ? text::format_double(*e.distance) : std::string());
    out += "\n";
  }
  return out;
}

}  // namespace stagger
