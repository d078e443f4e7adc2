#pragma once

// Buffer queries: crime counts within distance d of each road edge, and the
// stations within distance k of a trip endpoint.

#include "safebike/geo.hpp"
#include "safebike/model.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace safebike::spatial {

struct BufferConfig {
  double crime_buffer_d = 50.0;
  double station_buffer_k = 500.0;
  int max_candidate_stations = 5;

  void validate() const {
    if (!(crime_buffer_d > 0.0)) {
      throw std::invalid_argument("crime_buffer_d must be > 0");
    }
    if (!(station_buffer_k > 0.0)) {
      throw std::invalid_argument("station_buffer_k must be > 0");
    }
    if (max_candidate_stations < 1) {
      throw std::invalid_argument("max_candidate_stations must be >= 1");
    }
  }
};

/// Copy of the network where each edge's crime_count is the number of crimes
/// within d of any segment of its geometry. A crime may count toward several
/// edges.
inline RoadNetwork annotate_crime(const RoadNetwork& network, const std::vector<CrimeRecord>& crimes,
                                  const BufferConfig& cfg) {
  cfg.validate();
  RoadNetwork out = network;
  std::vector<geo::GridIndex<std::size_t>::Entry> entries;
  entries.reserve(crimes.size());
  for (std::size_t i = 0; i < crimes.size(); ++i) {
    entries.push_back({crimes[i].location, i});
  }
  const auto index = geo::GridIndex<std::size_t>::build(entries, std::max(cfg.crime_buffer_d, geo::kDefaultCellSizeM));
  const double d = cfg.crime_buffer_d;

  std::vector<std::size_t> cand;
  for (EdgeIndex e = 0; e < network.edge_count(); ++e) {
    const auto& geom = network.edge(e).geometry;
    const auto pts = geom.points();
    cand.clear();
    for (std::size_t s = 1; s < pts.size(); ++s) {
      const auto& a = pts[s - 1];
      const auto& b = pts[s];
      const GeoPoint mid{(a.lat() + b.lat()) / 2.0, (a.lon() + b.lon()) / 2.0};
      const double half = std::max(geo::haversine(a, mid), geo::haversine(b, mid));
      // Padded so planar-vs-spherical differences cannot drop a candidate.
      const double r = (d + half) * 1.01 + 1.0;
      const auto hits = index.query_radius(mid, r);
      cand.insert(cand.end(), hits.begin(), hits.end());
    }
    std::sort(cand.begin(), cand.end());
    cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
    std::int64_t count = 0;
    for (std::size_t c : cand) {
      if (geo::point_to_polyline_distance(crimes[c].location, geom) <= d) {
        ++count;
      }
    }
    out.set_crime_count(e, count);
  }
  return out;
}

/// Grid-indexed station positions for repeated buffer queries.
class StationLocator {
public:
  StationLocator() = default;

  explicit StationLocator(const StationRegistry& registry) {
    std::vector<geo::GridIndex<std::size_t>::Entry> entries;
    for (const auto& [id, s] : registry) {
      entries.push_back({s.location, ids_.size()});
      ids_.push_back(id);
      locations_.push_back(s.location);
    }
    index_ = geo::GridIndex<std::size_t>::build(entries);
  }

  /// Stations within k of p, nearest first (ties by id), at most m.
  std::vector<std::string> within(const GeoPoint& p, const BufferConfig& cfg) const {
    cfg.validate();
    std::vector<std::pair<double, const std::string*>> hits;
    for (std::size_t i : index_.query_radius(p, cfg.station_buffer_k)) {
      hits.emplace_back(geo::haversine(p, locations_[i]), &ids_[i]);
    }
    std::sort(hits.begin(), hits.end(), [](const auto& x, const auto& y) {
      return x.first != y.first ? x.first < y.first : *x.second < *y.second;
    });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < hits.size() && out.size() < static_cast<std::size_t>(cfg.max_candidate_stations); ++i) {
      out.push_back(*hits[i].second);
    }
    return out;
  }

private:
  std::vector<std::string> ids_;
  std::vector<GeoPoint> locations_;
  geo::GridIndex<std::size_t> index_;
};

inline std::vector<std::string> candidate_stations(const StationLocator& locator, const GeoPoint& p,
                                                   const BufferConfig& cfg) {
  return locator.within(p, cfg);
}

inline std::vector<std::string> candidate_stations(const GeoPoint& p, const StationRegistry& registry,
                                                   const BufferConfig& cfg) {
  return StationLocator(registry).within(p, cfg);
}

}  // namespace safebike::spatial
