#pragma once

// Domain types shared across the engine: stations, availability snapshots,
// crime records, the road graph and route structures.

#include "safebike/geo.hpp"
#include "safebike/time.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace safebike {

using geo::GeoPoint;
using geo::Polyline;

struct Station {
  std::string id;
  std::string name;
  GeoPoint location;
  int capacity = 0;

  friend bool operator==(const Station&, const Station&) = default;
};

/// Stations keyed by id; iteration is in id order.
class StationRegistry {
public:
  /// Returns true when an existing station was replaced.
  bool insert_or_assign(Station s) {
    if (s.capacity < 0) {
      throw std::invalid_argument("station " + s.id + ": negative capacity");
    }
    auto id = s.id;
    auto [it, inserted] = stations_.insert_or_assign(std::move(id), std::move(s));
    return !inserted;
  }

  const Station* find(const std::string& id) const {
    auto it = stations_.find(id);
    return it == stations_.end() ? nullptr : &it->second;
  }

  bool contains(const std::string& id) const { return stations_.contains(id); }
  std::size_t size() const { return stations_.size(); }
  bool empty() const { return stations_.empty(); }
  auto begin() const { return stations_.begin(); }
  auto end() const { return stations_.end(); }

  friend bool operator==(const StationRegistry&, const StationRegistry&) = default;

private:
  std::map<std::string, Station> stations_;
};

struct StationStatus {
  std::string station_id;
  int bikes = 0;
  int docks = 0;
  Instant timestamp{};

  friend bool operator==(const StationStatus&, const StationStatus&) = default;
};

struct Counts {
  int bikes = 0;
  int docks = 0;

  friend bool operator==(const Counts&, const Counts&) = default;
};

using DayBuckets = std::array<std::optional<Counts>, kBucketsPerDay>;

/// Historical bike/dock counts for one station, one 144-slot array per local
/// date. Later writes to a slot overwrite earlier ones.
class SnapshotSeries {
public:
  SnapshotSeries() = default;
  explicit SnapshotSeries(std::string station_id) : station_id_(std::move(station_id)) {}

  const std::string& station_id() const { return station_id_; }

  void set(const Date& date, int bucket, Counts c) {
    if (bucket < 0 || bucket >= kBucketsPerDay) {
      throw std::out_of_range("bucket out of range: " + std::to_string(bucket));
    }
    days_[date][static_cast<std::size_t>(bucket)] = c;
  }

  std::optional<Counts> get(const Date& date, int bucket) const {
    auto it = days_.find(date);
    if (it == days_.end() || bucket < 0 || bucket >= kBucketsPerDay) {
      return std::nullopt;
    }
    return it->second[static_cast<std::size_t>(bucket)];
  }

  const std::map<Date, DayBuckets>& days() const { return days_; }

  std::size_t filled() const {
    std::size_t n = 0;
    for (const auto& [d, b] : days_) {
      for (const auto& slot : b) {
        n += slot.has_value() ? 1 : 0;
      }
    }
    return n;
  }

  /// Latest filled (date, bucket) at or before the given local slot.
  std::optional<std::pair<Date, int>> latest_at_or_before(const Date& date, int bucket) const {
    for (auto it = days_.upper_bound(date); it != days_.begin();) {
      --it;
      const int start = it->first == date ? bucket : kBucketsPerDay - 1;
      for (int b = start; b >= 0; --b) {
        if (it->second[static_cast<std::size_t>(b)]) {
          return std::pair{it->first, b};
        }
      }
    }
    return std::nullopt;
  }

  friend bool operator==(const SnapshotSeries&, const SnapshotSeries&) = default;

private:
  std::string station_id_;
  std::map<Date, DayBuckets> days_;
};

/// All stations' series, keyed by station id.
class SnapshotStore {
public:
  SnapshotSeries& series_for(const std::string& station_id) {
    auto it = series_.find(station_id);
    if (it == series_.end()) {
      it = series_.emplace(station_id, SnapshotSeries{station_id}).first;
    }
    return it->second;
  }

  const SnapshotSeries* find(const std::string& station_id) const {
    auto it = series_.find(station_id);
    return it == series_.end() ? nullptr : &it->second;
  }

  std::size_t size() const { return series_.size(); }
  auto begin() const { return series_.begin(); }
  auto end() const { return series_.end(); }

  std::size_t filled() const {
    std::size_t n = 0;
    for (const auto& [id, s] : series_) {
      n += s.filled();
    }
    return n;
  }

  friend bool operator==(const SnapshotStore&, const SnapshotStore&) = default;

private:
  std::map<std::string, SnapshotSeries> series_;
};

struct CrimeRecord {
  std::string id;
  GeoPoint location;
  Date occurred_at;
  std::string category;

  friend bool operator==(const CrimeRecord&, const CrimeRecord&) = default;
};

using NodeId = std::uint32_t;
using EdgeIndex = std::size_t;

inline constexpr double kNodeSnapToleranceM = 1.0;

struct RoadEdge {
  std::string id;
  NodeId from = 0;
  NodeId to = 0;
  Polyline geometry;
  double length = 0.0;
  std::int64_t crime_count = 0;

  NodeId other(NodeId n) const { return n == from ? to : from; }

  friend bool operator==(const RoadEdge&, const RoadEdge&) = default;
};

/// Undirected road graph shared by walking and biking.
class RoadNetwork {
public:
  struct Arc {
    NodeId to;
    EdgeIndex edge;
  };

  NodeId add_node(const GeoPoint& p) {
    nodes_.push_back(p);
    adjacency_.emplace_back();
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  /// Validates node references and endpoint coincidence; the edge's length
  /// is computed from its geometry.
  EdgeIndex add_edge(std::string id, NodeId from, NodeId to, Polyline geometry) {
    if (from >= nodes_.size() || to >= nodes_.size()) {
      throw std::invalid_argument("edge " + id + " references missing node " +
                                  std::to_string(from >= nodes_.size() ? from : to));
    }
    constexpr double kSlack = 1e-6;
    if (geo::haversine(geometry.front(), nodes_[from]) > kNodeSnapToleranceM + kSlack ||
        geo::haversine(geometry.back(), nodes_[to]) > kNodeSnapToleranceM + kSlack) {
      throw std::invalid_argument("edge " + id + " geometry endpoints do not match its nodes");
    }
    RoadEdge e{std::move(id), from, to, std::move(geometry), 0.0, 0};
    e.length = geo::polyline_length(e.geometry);
    edges_.push_back(std::move(e));
    const EdgeIndex idx = edges_.size() - 1;
    adjacency_[from].push_back({to, idx});
    if (to != from) {
      adjacency_[to].push_back({from, idx});
    }
    return idx;
  }

  void set_crime_count(EdgeIndex e, std::int64_t count) { edges_.at(e).crime_count = count; }

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t edge_count() const { return edges_.size(); }
  bool empty() const { return nodes_.empty(); }
  const GeoPoint& node(NodeId n) const { return nodes_.at(n); }
  const std::vector<GeoPoint>& nodes() const { return nodes_; }
  const RoadEdge& edge(EdgeIndex e) const { return edges_.at(e); }
  const std::vector<RoadEdge>& edges() const { return edges_; }
  const std::vector<Arc>& arcs(NodeId n) const { return adjacency_.at(n); }

  double max_edge_length() const {
    double m = 0.0;
    for (const auto& e : edges_) {
      m = std::max(m, e.length);
    }
    return m;
  }

  std::int64_t max_crime_count() const {
    std::int64_t m = 0;
    for (const auto& e : edges_) {
      m = std::max(m, e.crime_count);
    }
    return m;
  }

  friend bool operator==(const RoadNetwork& a, const RoadNetwork& b) {
    return a.nodes_ == b.nodes_ && a.edges_ == b.edges_;
  }

private:
  std::vector<GeoPoint> nodes_;
  std::vector<RoadEdge> edges_;
  std::vector<std::vector<Arc>> adjacency_;
};

/// Length / crime / availability weights, normalized to sum to 1.
class FactorWeights {
public:
  FactorWeights() = default;

  /// Any non-negative, finite, not-all-zero triple; rescaled to unit sum.
  static FactorWeights normalized(double alpha, double beta, double gamma) {
    for (auto [name, v] : {std::pair{"alpha", alpha}, {"beta", beta}, {"gamma", gamma}}) {
      if (!std::isfinite(v) || v < 0.0) {
        throw std::invalid_argument(std::string("weight ") + name + " must be a finite non-negative number");
      }
    }
    const double sum = alpha + beta + gamma;
    if (sum <= 0.0) {
      throw std::invalid_argument("weights alpha, beta, gamma must not all be zero");
    }
    FactorWeights w;
    if (std::abs(sum - 1.0) <= 1e-12) {
      w.alpha_ = alpha;
      w.beta_ = beta;
      w.gamma_ = gamma;
    } else {
      w.alpha_ = alpha / sum;
      w.beta_ = beta / sum;
      w.gamma_ = gamma / sum;
    }
    return w;
  }

  static FactorWeights shortest() { return normalized(1.0, 0.0, 0.0); }
  static FactorWeights safest() { return normalized(0.0, 1.0, 0.0); }
  static FactorWeights defaults() { return normalized(0.3, 0.3, 0.4); }

  double alpha() const { return alpha_; }
  double beta() const { return beta_; }
  double gamma() const { return gamma_; }

  friend bool operator==(const FactorWeights&, const FactorWeights&) = default;

private:
  double alpha_ = 0.3;
  double beta_ = 0.3;
  double gamma_ = 0.4;
};

enum class TravelMode { walk, bike };

inline const char* to_string(TravelMode m) { return m == TravelMode::walk ? "walk" : "bike"; }

struct RouteLeg {
  TravelMode mode = TravelMode::walk;
  std::vector<NodeId> node_path;
  std::vector<EdgeIndex> edge_path;
  Polyline geometry;
  double length = 0.0;
  std::int64_t crime_total = 0;
  double duration_s = 0.0;

  friend bool operator==(const RouteLeg&, const RouteLeg&) = default;
};

/// A walk-bike-walk route through one (origin station, destination station)
/// pair, with its availability product and score terms.
struct CandidateRoute {
  std::string origin_station_id;
  std::string destination_station_id;
  std::array<RouteLeg, 3> legs;
  double total_length = 0.0;
  std::int64_t total_crime = 0;
  Instant check_out{};
  Instant check_in{};
  double predicted_bikes_out = 0.0;
  double predicted_docks_in = 0.0;
  bool degraded = false;
  double avl = 0.0;
  // Filled in by scoring.
  double nlength = 0.0;
  double ncrime = 0.0;
  double navl = 0.0;
  double score = 0.0;

  friend bool operator==(const CandidateRoute&, const CandidateRoute&) = default;
};

}  // namespace safebike
