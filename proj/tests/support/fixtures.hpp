#pragma once

// Test-only fixture builders and brute-force oracles. Nothing here calls the
// routing, spatial or predict implementations it is used to check.

#include "safebike/geo.hpp"
#include "safebike/model.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace safebike::testing {

inline constexpr double kBaseLat = 40.7300;
inline constexpr double kBaseLon = -73.9950;
inline constexpr double kMetersPerDegLat = geo::kEarthRadiusM * geo::kDegToRad;

inline double meters_per_deg_lon(double lat) { return kMetersPerDegLat * std::cos(lat * geo::kDegToRad); }

/// Point offset from (lat, lon) by dx meters east and dy meters north.
inline GeoPoint offset(double lat, double lon, double dx, double dy) {
  return GeoPoint{lat + dy / kMetersPerDegLat, lon + dx / meters_per_deg_lon(lat)};
}

struct GridFixture {
  RoadNetwork network;
  int rows = 0;
  int cols = 0;

  NodeId node_at(int r, int c) const { return static_cast<NodeId>(r * cols + c); }
};

/// rows x cols lattice with `spacing` meters between neighbours; nodes are
/// numbered row-major. Jitter (meters) perturbs node positions so path
/// lengths are pairwise distinct.
inline GridFixture make_grid(int rows, int cols, double spacing, double jitter = 0.0, unsigned seed = 1,
                             double lat0 = kBaseLat, double lon0 = kBaseLon) {
  GridFixture g;
  g.rows = rows;
  g.cols = cols;
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> j(-jitter, jitter);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double dx = c * spacing + (jitter > 0 ? j(rng) : 0.0);
      const double dy = r * spacing + (jitter > 0 ? j(rng) : 0.0);
      g.network.add_node(offset(lat0, lon0, dx, dy));
    }
  }
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (c + 1 < cols) {
        const NodeId a = g.node_at(r, c);
        const NodeId b = g.node_at(r, c + 1);
        g.network.add_edge("h" + std::to_string(r) + "_" + std::to_string(c), a, b,
                           Polyline{{g.network.node(a), g.network.node(b)}});
      }
      if (r + 1 < rows) {
        const NodeId a = g.node_at(r, c);
        const NodeId b = g.node_at(r + 1, c);
        g.network.add_edge("v" + std::to_string(r) + "_" + std::to_string(c), a, b,
                           Polyline{{g.network.node(a), g.network.node(b)}});
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Oracles

inline std::optional<NodeId> brute_nearest_node(const RoadNetwork& net, const GeoPoint& p) {
  std::optional<std::pair<double, NodeId>> best;
  for (NodeId n = 0; n < net.node_count(); ++n) {
    std::pair key{geo::haversine(p, net.node(n)), n};
    if (!best || key < *best) {
      best = key;
    }
  }
  if (!best) {
    return std::nullopt;
  }
  return best->second;
}

struct EnumeratedPath {
  std::vector<NodeId> nodes;
  std::vector<EdgeIndex> edges;
};

/// Every simple path from src to dst (depth-first).
inline std::vector<EnumeratedPath> enumerate_simple_paths(const RoadNetwork& net, NodeId src, NodeId dst) {
  std::vector<EnumeratedPath> out;
  EnumeratedPath cur;
  std::vector<bool> on_path(net.node_count(), false);
  std::function<void(NodeId)> dfs = [&](NodeId u) {
    if (u == dst) {
      out.push_back(cur);
      return;
    }
    for (const auto& arc : net.arcs(u)) {
      if (on_path[arc.to]) {
        continue;
      }
      on_path[arc.to] = true;
      cur.nodes.push_back(arc.to);
      cur.edges.push_back(arc.edge);
      dfs(arc.to);
      cur.nodes.pop_back();
      cur.edges.pop_back();
      on_path[arc.to] = false;
    }
  };
  on_path[src] = true;
  cur.nodes.push_back(src);
  dfs(src);
  return out;
}

struct BestPath {
  EnumeratedPath path;
  double cost = 0.0;
  double length = 0.0;
};

/// Lexicographic (sum cost, sum length) minimum over all simple paths; sums
/// accumulate from the source in path order.
inline std::optional<BestPath> best_path_by_enumeration(const RoadNetwork& net, NodeId src, NodeId dst,
                                                        const std::function<double(const RoadEdge&)>& cost) {
  std::optional<BestPath> best;
  for (auto& p : enumerate_simple_paths(net, src, dst)) {
    double c = 0.0;
    double len = 0.0;
    for (EdgeIndex e : p.edges) {
      c += cost(net.edge(e));
      len += net.edge(e).length;
    }
    if (!best || std::pair{c, len} < std::pair{best->cost, best->length}) {
      best = BestPath{std::move(p), c, len};
    }
  }
  return best;
}

/// Edge cost re-derived from the weights: unit-sum rescaled (alpha, beta)
/// over graph-wide maxima, length-only when both are zero.
inline std::function<double(const RoadEdge&)> oracle_edge_cost(const RoadNetwork& net, double alpha, double beta) {
  double lmax = 0.0;
  std::int64_t cmax = 0;
  for (const auto& e : net.edges()) {
    lmax = std::max(lmax, e.length);
    cmax = std::max(cmax, e.crime_count);
  }
  const double L = lmax > 0 ? lmax : 1.0;
  const double C = cmax > 0 ? static_cast<double>(cmax) : 1.0;
  double a = 1.0;
  double b = 0.0;
  if (alpha + beta > 0) {
    a = alpha / (alpha + beta);
    b = beta / (alpha + beta);
  }
  return [a, b, L, C](const RoadEdge& e) { return a * (e.length / L) + b * (static_cast<double>(e.crime_count) / C); };
}

/// Crime count per edge by checking every (crime, edge) pair.
inline std::vector<std::int64_t> brute_crime_counts(const RoadNetwork& net, const std::vector<CrimeRecord>& crimes,
                                                    double d) {
  std::vector<std::int64_t> counts(net.edge_count(), 0);
  for (EdgeIndex e = 0; e < net.edge_count(); ++e) {
    const auto pts = net.edge(e).geometry.points();
    for (const auto& c : crimes) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t s = 1; s < pts.size(); ++s) {
        best = std::min(best, geo::point_to_segment_distance(c.location, pts[s - 1], pts[s]));
      }
      if (best <= d) {
        ++counts[e];
      }
    }
  }
  return counts;
}

inline std::vector<CrimeRecord> random_crimes(std::mt19937& rng, int n, double lat0, double lon0, double width_m,
                                              double height_m) {
  std::uniform_real_distribution<double> ux(0.0, width_m);
  std::uniform_real_distribution<double> uy(0.0, height_m);
  std::vector<CrimeRecord> out;
  for (int i = 0; i < n; ++i) {
    out.push_back(CrimeRecord{"c" + std::to_string(i), offset(lat0, lon0, ux(rng), uy(rng)),
                              Date{std::chrono::year{2017}, std::chrono::May, std::chrono::day{1}}, "test"});
  }
  return out;
}

}  // namespace safebike::testing
