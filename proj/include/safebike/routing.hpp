#pragma once

// Walk-bike-walk route recommendation: Dijkstra over blended length/crime
// edge costs for each leg, candidate routes over all admissible station
// pairs, and candidate-set normalized scoring with the availability term.

#include "safebike/geo.hpp"
#include "safebike/model.hpp"
#include "safebike/predict.hpp"
#include "safebike/spatial.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace safebike::routing {

enum class Scheme { shortest, safest, optimal };

inline const char* to_string(Scheme s) {
  switch (s) {
    case Scheme::shortest:
      return "shortest";
    case Scheme::safest:
      return "safest";
    case Scheme::optimal:
      return "optimal";
  }
  return "optimal";
}

inline std::optional<Scheme> parse_scheme(std::string_view s) {
  if (s == "shortest") {
    return Scheme::shortest;
  }
  if (s == "safest") {
    return Scheme::safest;
  }
  if (s == "optimal") {
    return Scheme::optimal;
  }
  return std::nullopt;
}

class RouteError : public std::runtime_error {
public:
  enum class Code { no_station_in_range, no_route };

  RouteError(Code code, const std::string& msg) : std::runtime_error(msg), code_(code) {}

  Code code() const { return code_; }

  const char* code_name() const { return code_ == Code::no_station_in_range ? "no_station_in_range" : "no_route"; }

private:
  Code code_;
};

struct Speeds {
  double walk_kmh = 5.0;
  double bike_kmh = 15.0;

  double meters_per_second(TravelMode m) const { return (m == TravelMode::walk ? walk_kmh : bike_kmh) / 3.6; }

  void validate() const {
    if (!(walk_kmh > 0.0) || !(bike_kmh > 0.0)) {
      throw std::invalid_argument("speeds must be > 0");
    }
  }
};

// ---------------------------------------------------------------------------
// Snapping

/// Grid-indexed node positions; nearest node by great-circle distance, ties
/// by node id.
class NodeLocator {
public:
  NodeLocator() = default;

  explicit NodeLocator(const RoadNetwork& net) {
    std::vector<geo::GridIndex<NodeId>::Entry> entries;
    entries.reserve(net.node_count());
    for (NodeId n = 0; n < net.node_count(); ++n) {
      entries.push_back({net.node(n), n});
    }
    index_ = geo::GridIndex<NodeId>::build(entries);
  }

  NodeId nearest(const GeoPoint& p) const {
    auto n = index_.nearest(p);
    if (!n) {
      throw std::invalid_argument("cannot snap to an empty road network");
    }
    return *n;
  }

private:
  geo::GridIndex<NodeId> index_;
};

inline NodeId snap_to_node(const NodeLocator& locator, const GeoPoint& p) { return locator.nearest(p); }

inline NodeId snap_to_node(const RoadNetwork& net, const GeoPoint& p) { return NodeLocator(net).nearest(p); }

// ---------------------------------------------------------------------------
// Dijkstra

struct Path {
  std::vector<NodeId> nodes;
  std::vector<EdgeIndex> edges;
  double cost = 0.0;
  double length = 0.0;
};

/// Minimum-cost path under a non-negative edge cost. Equal costs are broken
/// by accumulated length, then by settle order (node id).
template <typename CostFn>
std::optional<Path> dijkstra(const RoadNetwork& net, NodeId src, NodeId dst, CostFn&& cost) {
  if (src >= net.node_count() || dst >= net.node_count()) {
    throw std::out_of_range("dijkstra: node id out of range");
  }
  using Label = std::pair<double, double>;  // (cost, length)
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const std::size_t n = net.node_count();
  std::vector<Label> dist(n, Label{kInf, kInf});
  std::vector<std::optional<EdgeIndex>> via(n);
  std::vector<bool> settled(n, false);
  using Item = std::pair<Label, NodeId>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  dist[src] = Label{0.0, 0.0};
  pq.push({dist[src], src});
  while (!pq.empty()) {
    const auto [label, u] = pq.top();
    pq.pop();
    if (settled[u]) {
      continue;
    }
    settled[u] = true;
    if (u == dst) {
      break;
    }
    for (const auto& arc : net.arcs(u)) {
      const RoadEdge& e = net.edge(arc.edge);
      const double c = cost(e);
      if (!(c >= 0.0) || !std::isfinite(c)) {
        throw std::invalid_argument("edge " + e.id + " has negative or non-finite cost");
      }
      const Label cand{label.first + c, label.second + e.length};
      if (cand < dist[arc.to]) {
        dist[arc.to] = cand;
        via[arc.to] = arc.edge;
        pq.push({cand, arc.to});
      }
    }
  }
  if (!settled[dst]) {
    return std::nullopt;
  }
  Path path;
  path.cost = dist[dst].first;
  path.length = dist[dst].second;
  for (NodeId v = dst; v != src;) {
    const EdgeIndex e = *via[v];
    path.nodes.push_back(v);
    path.edges.push_back(e);
    v = net.edge(e).other(v);
  }
  path.nodes.push_back(src);
  std::reverse(path.nodes.begin(), path.nodes.end());
  std::reverse(path.edges.begin(), path.edges.end());
  return path;
}

/// cost(e) = a*length/Lmax + b*crime/Cmax with (a, b) = (alpha, beta)
/// rescaled to unit sum and graph-wide maxima; length only when alpha and
/// beta are both zero.
class BlendedEdgeCost {
public:
  BlendedEdgeCost(const RoadNetwork& net, const FactorWeights& w) {
    const double ab = w.alpha() + w.beta();
    if (ab > 0.0) {
      length_w_ = w.alpha() / ab;
      crime_w_ = w.beta() / ab;
    } else {
      length_w_ = 1.0;
      crime_w_ = 0.0;
    }
    const double lmax = net.max_edge_length();
    const auto cmax = net.max_crime_count();
    lmax_ = lmax > 0.0 ? lmax : 1.0;
    cmax_ = cmax > 0 ? static_cast<double>(cmax) : 1.0;
  }

  double operator()(const RoadEdge& e) const {
    return length_w_ * (e.length / lmax_) + crime_w_ * (static_cast<double>(e.crime_count) / cmax_);
  }

  double length_weight() const { return length_w_; }
  double crime_weight() const { return crime_w_; }

private:
  double length_w_ = 1.0;
  double crime_w_ = 0.0;
  double lmax_ = 1.0;
  double cmax_ = 1.0;
};

/// Builds a leg from a node path (geometry oriented along travel).
inline RouteLeg make_leg(const RoadNetwork& net, const Path& path, TravelMode mode, const Speeds& speeds) {
  RouteLeg leg;
  leg.mode = mode;
  leg.node_path = path.nodes;
  leg.edge_path = path.edges;
  std::vector<GeoPoint> pts;
  if (path.edges.empty()) {
    const auto& p = net.node(path.nodes.front());
    pts = {p, p};
  }
  for (std::size_t k = 0; k < path.edges.size(); ++k) {
    const RoadEdge& e = net.edge(path.edges[k]);
    const auto g = e.geometry.points();
    const bool forward = e.from == path.nodes[k];
    const std::size_t skip = pts.empty() ? 0 : 1;
    if (forward) {
      pts.insert(pts.end(), g.begin() + static_cast<std::ptrdiff_t>(skip), g.end());
    } else {
      pts.insert(pts.end(), g.rbegin() + static_cast<std::ptrdiff_t>(skip), g.rend());
    }
    leg.length += e.length;
    leg.crime_total += e.crime_count;
  }
  leg.geometry = Polyline{std::move(pts)};
  leg.duration_s = leg.length / speeds.meters_per_second(mode);
  return leg;
}

inline std::optional<RouteLeg> leg_route(const RoadNetwork& net, NodeId src, NodeId dst, const FactorWeights& w,
                                         TravelMode mode, const Speeds& speeds = {}) {
  const auto path = dijkstra(net, src, dst, BlendedEdgeCost(net, w));
  if (!path) {
    return std::nullopt;
  }
  return make_leg(net, *path, mode, speeds);
}

// ---------------------------------------------------------------------------
// Candidates and scoring

struct RouteQuery {
  GeoPoint origin;
  GeoPoint destination;
  Instant departure_time{};
  FactorWeights weights = FactorWeights::defaults();
  Scheme scheme = Scheme::optimal;
};

/// Predicted bikes/docks for a station at an instant.
using AvailabilityFn = std::function<predict::PredictedCounts(const std::string& station_id, Instant at)>;

/// Everything route evaluation reads; all referenced state must outlive it.
struct RoutingContext {
  const RoadNetwork& network;
  const NodeLocator& nodes;
  const StationRegistry& registry;
  const spatial::StationLocator& stations;
  spatial::BufferConfig buffers;
  Speeds speeds;
  AvailabilityFn availability;
};

inline FactorWeights effective_weights(const RouteQuery& q) {
  switch (q.scheme) {
    case Scheme::shortest:
      return FactorWeights::shortest();
    case Scheme::safest:
      return FactorWeights::safest();
    case Scheme::optimal:
      break;
  }
  return q.weights;
}

/// One walk-bike-walk candidate per (origin station, destination station)
/// pair with distinct stations and all three legs reachable, in pair order.
inline std::vector<CandidateRoute> generate_candidates(const RouteQuery& query, const RoutingContext& ctx,
                                                       const FactorWeights& weights) {
  const auto origin_stations = ctx.stations.within(query.origin, ctx.buffers);
  const auto dest_stations = ctx.stations.within(query.destination, ctx.buffers);
  if (origin_stations.empty()) {
    throw RouteError(RouteError::Code::no_station_in_range, "no station within " +
                                                                std::to_string(ctx.buffers.station_buffer_k) +
                                                                " m of the origin");
  }
  if (dest_stations.empty()) {
    throw RouteError(RouteError::Code::no_station_in_range, "no station within " +
                                                                std::to_string(ctx.buffers.station_buffer_k) +
                                                                " m of the destination");
  }
  const NodeId origin_node = ctx.nodes.nearest(query.origin);
  const NodeId dest_node = ctx.nodes.nearest(query.destination);
  auto station_node = [&](const std::string& id) { return ctx.nodes.nearest(ctx.registry.find(id)->location); };

  std::vector<std::optional<RouteLeg>> first_walk;
  for (const auto& i : origin_stations) {
    first_walk.push_back(leg_route(ctx.network, origin_node, station_node(i), weights, TravelMode::walk, ctx.speeds));
  }
  std::vector<std::optional<RouteLeg>> last_walk;
  for (const auto& j : dest_stations) {
    last_walk.push_back(leg_route(ctx.network, station_node(j), dest_node, weights, TravelMode::walk, ctx.speeds));
  }

  std::vector<CandidateRoute> out;
  for (std::size_t a = 0; a < origin_stations.size(); ++a) {
    if (!first_walk[a]) {
      continue;
    }
    for (std::size_t b = 0; b < dest_stations.size(); ++b) {
      const auto& i = origin_stations[a];
      const auto& j = dest_stations[b];
      if (i == j || !last_walk[b]) {
        continue;
      }
      auto bike = leg_route(ctx.network, station_node(i), station_node(j), weights, TravelMode::bike, ctx.speeds);
      if (!bike) {
        continue;
      }
      CandidateRoute c;
      c.origin_station_id = i;
      c.destination_station_id = j;
      c.legs = {*first_walk[a], std::move(*bike), *last_walk[b]};
      c.total_length = c.legs[0].length + c.legs[1].length + c.legs[2].length;
      c.total_crime = c.legs[0].crime_total + c.legs[1].crime_total + c.legs[2].crime_total;
      c.check_out = query.departure_time + std::chrono::seconds{std::llround(c.legs[0].duration_s)};
      c.check_in = c.check_out + std::chrono::seconds{std::llround(c.legs[1].duration_s)};
      const auto out_pred = ctx.availability(i, c.check_out);
      const auto in_pred = ctx.availability(j, c.check_in);
      c.predicted_bikes_out = out_pred.bikes;
      c.predicted_docks_in = in_pred.docks;
      c.degraded = out_pred.degraded || in_pred.degraded;
      c.avl = c.predicted_bikes_out * c.predicted_docks_in;
      out.push_back(std::move(c));
    }
  }
  if (out.empty()) {
    throw RouteError(RouteError::Code::no_route, "no reachable route through distinct origin and destination stations");
  }
  return out;
}

struct RouteResult {
  std::vector<CandidateRoute> alternatives;
  std::size_t chosen_index = 0;
  FactorWeights weights;
  double max_length = 0.0;
  std::int64_t max_crime = 0;
  double max_avl = 0.0;

  const CandidateRoute& chosen() const { return alternatives.at(chosen_index); }
};

/// Normalizes length, crime and availability by their maxima over the
/// candidate set and picks the minimum of
///   alpha*nlength + beta*ncrime + gamma*(1 - navl),
/// ties by total length, then origin id, then destination id.
inline RouteResult score_candidates(std::vector<CandidateRoute> cands, const FactorWeights& w) {
  if (cands.empty()) {
    throw std::invalid_argument("score_candidates: empty candidate set");
  }
  RouteResult r;
  r.weights = w;
  for (const auto& c : cands) {
    r.max_length = std::max(r.max_length, c.total_length);
    r.max_crime = std::max(r.max_crime, c.total_crime);
    r.max_avl = std::max(r.max_avl, c.avl);
  }
  for (auto& c : cands) {
    c.nlength = r.max_length > 0.0 ? c.total_length / r.max_length : 0.0;
    c.ncrime = r.max_crime > 0 ? static_cast<double>(c.total_crime) / static_cast<double>(r.max_crime) : 0.0;
    c.navl = r.max_avl > 0.0 ? c.avl / r.max_avl : 0.0;
    c.score = w.alpha() * c.nlength + w.beta() * c.ncrime + w.gamma() * (1.0 - c.navl);
  }
  auto better = [](const CandidateRoute& x, const CandidateRoute& y) {
    if (x.score != y.score) {
      return x.score < y.score;
    }
    if (x.total_length != y.total_length) {
      return x.total_length < y.total_length;
    }
    if (x.origin_station_id != y.origin_station_id) {
      return x.origin_station_id < y.origin_station_id;
    }
    return x.destination_station_id < y.destination_station_id;
  };
  for (std::size_t k = 1; k < cands.size(); ++k) {
    if (better(cands[k], cands[r.chosen_index])) {
      r.chosen_index = k;
    }
  }
  r.alternatives = std::move(cands);
  return r;
}

/// Full pipeline. shortest and safest fix the weights to (1,0,0) and (0,1,0).
inline RouteResult route(const RouteQuery& query, const RoutingContext& ctx) {
  ctx.buffers.validate();
  ctx.speeds.validate();
  const FactorWeights w = effective_weights(query);
  return score_candidates(generate_candidates(query, ctx, w), w);
}

}  // namespace safebike::routing
