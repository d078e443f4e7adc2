#pragma once

// Coordinate primitives, great-circle measurement and a uniform grid index
// for radius queries over static point sets.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace safebike::geo {

inline constexpr double kEarthRadiusM = 6'371'000.0;
inline constexpr double kDegToRad = std::numbers::pi / 180.0;

/// A WGS84-style coordinate on a spherical Earth. Construction validates ranges.
class GeoPoint {
public:
  GeoPoint() = default;
  GeoPoint(double lat, double lon) : lat_(lat), lon_(lon) {
    if (!(lat >= -90.0 && lat <= 90.0)) {
      throw std::invalid_argument("lat out of range: " + std::to_string(lat));
    }
    if (!(lon >= -180.0 && lon <= 180.0)) {
      throw std::invalid_argument("lon out of range: " + std::to_string(lon));
    }
  }

  static bool valid(double lat, double lon) {
    return lat >= -90.0 && lat <= 90.0 && lon >= -180.0 && lon <= 180.0;
  }

  double lat() const { return lat_; }
  double lon() const { return lon_; }

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;

private:
  double lat_ = 0.0;
  double lon_ = 0.0;
};

/// Great-circle distance in meters (sphere of radius kEarthRadiusM).
inline double haversine(const GeoPoint& a, const GeoPoint& b) {
  const double phi1 = a.lat() * kDegToRad;
  const double phi2 = b.lat() * kDegToRad;
  const double sdphi = std::sin((phi2 - phi1) / 2.0);
  const double sdlam = std::sin((b.lon() - a.lon()) * kDegToRad / 2.0);
  double h = sdphi * sdphi + std::cos(phi1) * std::cos(phi2) * sdlam * sdlam;
  h = std::clamp(h, 0.0, 1.0);
  return 2.0 * kEarthRadiusM * std::asin(std::sqrt(h));
}

/// Distance from p to segment [a, b]. Interior projections are measured in a
/// local equirectangular plane centered at a; endpoint-nearest cases use the
/// great-circle distance to that endpoint. Never exceeds the distance to
/// either endpoint.
inline double point_to_segment_distance(const GeoPoint& p, const GeoPoint& a, const GeoPoint& b) {
  const double da = haversine(p, a);
  if (a == b) {
    return da;
  }
  const double db = haversine(p, b);
  const double kx = std::cos(a.lat() * kDegToRad) * kDegToRad * kEarthRadiusM;
  const double ky = kDegToRad * kEarthRadiusM;
  const double bx = (b.lon() - a.lon()) * kx;
  const double by = (b.lat() - a.lat()) * ky;
  const double px = (p.lon() - a.lon()) * kx;
  const double py = (p.lat() - a.lat()) * ky;
  const double len2 = bx * bx + by * by;
  if (len2 == 0.0) {
    return std::min(da, db);
  }
  const double t = (px * bx + py * by) / len2;
  if (t <= 0.0) {
    return da;
  }
  if (t >= 1.0) {
    return db;
  }
  const double dx = px - t * bx;
  const double dy = py - t * by;
  return std::min({std::hypot(dx, dy), da, db});
}

/// Ordered list of at least two points.
class Polyline {
public:
  Polyline() = default;
  explicit Polyline(std::vector<GeoPoint> points) : points_(std::move(points)) {
    if (points_.size() < 2) {
      throw std::invalid_argument("polyline needs at least 2 points");
    }
  }

  std::span<const GeoPoint> points() const { return points_; }
  const GeoPoint& front() const { return points_.front(); }
  const GeoPoint& back() const { return points_.back(); }
  std::size_t size() const { return points_.size(); }

  friend bool operator==(const Polyline&, const Polyline&) = default;

private:
  std::vector<GeoPoint> points_;
};

inline double polyline_length(const Polyline& pl) {
  double total = 0.0;
  const auto pts = pl.points();
  for (std::size_t i = 1; i < pts.size(); ++i) {
    total += haversine(pts[i - 1], pts[i]);
  }
  return total;
}

/// Minimum segment distance from p to any segment of the polyline.
inline double point_to_polyline_distance(const GeoPoint& p, const Polyline& pl) {
  const auto pts = pl.points();
  double best = point_to_segment_distance(p, pts[0], pts[1]);
  for (std::size_t i = 2; i < pts.size(); ++i) {
    best = std::min(best, point_to_segment_distance(p, pts[i - 1], pts[i]));
  }
  return best;
}

inline constexpr double kDefaultCellSizeM = 100.0;

/// Uniform grid over an equirectangular projection at the dataset centroid.
/// Immutable after build; queries are exact (candidate cells, then a
/// haversine filter).
template <typename Id = std::size_t>
class GridIndex {
public:
  struct Entry {
    GeoPoint point;
    Id id;
  };

  GridIndex() = default;

  static GridIndex build(std::span<const Entry> entries, double cell_size = kDefaultCellSizeM) {
    if (!(cell_size > 0.0)) {
      throw std::invalid_argument("cell_size must be > 0");
    }
    GridIndex idx;
    idx.cell_size_ = cell_size;
    idx.entries_.assign(entries.begin(), entries.end());
    if (idx.entries_.empty()) {
      return idx;
    }
    double lat_sum = 0.0;
    double lon_sum = 0.0;
    for (const auto& e : idx.entries_) {
      lat_sum += e.point.lat();
      lon_sum += e.point.lon();
    }
    const auto n = static_cast<double>(idx.entries_.size());
    idx.lat0_ = lat_sum / n;
    idx.lon0_ = lon_sum / n;
    idx.kx_ = std::max(std::cos(idx.lat0_ * kDegToRad), 1e-6) * kDegToRad * kEarthRadiusM;
    idx.ky_ = kDegToRad * kEarthRadiusM;
    for (std::size_t i = 0; i < idx.entries_.size(); ++i) {
      const auto& p = idx.entries_[i].point;
      idx.cells_[idx.key_of(idx.cell_x(p.lon()), idx.cell_y(p.lat()))].push_back(i);
    }
    return idx;
  }

  static GridIndex build(const std::vector<Entry>& entries, double cell_size = kDefaultCellSizeM) {
    return build(std::span<const Entry>(entries), cell_size);
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  double cell_size() const { return cell_size_; }

  /// Ids whose great-circle distance to center is <= r, ascending.
  std::vector<Id> query_radius(const GeoPoint& center, double r) const {
    std::vector<Id> out;
    for (std::size_t i : candidates(center, r)) {
      if (haversine(center, entries_[i].point) <= r) {
        out.push_back(entries_[i].id);
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  /// Nearest stored id (ties by id ascending); nullopt when empty.
  std::optional<Id> nearest(const GeoPoint& center) const {
    if (entries_.empty()) {
      return std::nullopt;
    }
    double r = cell_size_;
    for (;;) {
      auto cand = candidates(center, r);
      std::optional<std::pair<double, Id>> best;
      for (std::size_t i : cand) {
        const double d = haversine(center, entries_[i].point);
        if (d > r) {
          continue;
        }
        std::pair<double, Id> key{d, entries_[i].id};
        if (!best || key < *best) {
          best = key;
        }
      }
      if (best) {
        return best->second;
      }
      if (r > std::numbers::pi * kEarthRadiusM) {
        return std::nullopt;  // unreachable for valid points
      }
      r *= 2.0;
    }
  }

private:
  using CellKey = std::pair<std::int64_t, std::int64_t>;
  struct CellHash {
    std::size_t operator()(const CellKey& k) const noexcept {
      return std::hash<std::int64_t>{}(k.first * 73856093LL) ^ std::hash<std::int64_t>{}(k.second * 19349663LL);
    }
  };

  std::int64_t cell_x(double lon) const {
    return static_cast<std::int64_t>(std::floor((lon - lon0_) * kx_ / cell_size_));
  }
  std::int64_t cell_y(double lat) const {
    return static_cast<std::int64_t>(std::floor((lat - lat0_) * ky_ / cell_size_));
  }
  static CellKey key_of(std::int64_t x, std::int64_t y) { return {x, y}; }

  std::vector<std::size_t> all_indices() const {
    std::vector<std::size_t> v(entries_.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = i;
    }
    return v;
  }

  // Superset of entries within r of center, from the lat/lon bounding box of
  // the spherical cap.
  std::vector<std::size_t> candidates(const GeoPoint& center, double r) const {
    if (entries_.empty() || r < 0.0) {
      return {};
    }
    const double delta = r / kEarthRadiusM;
    if (delta >= std::numbers::pi / 2.0) {
      return all_indices();
    }
    constexpr double kMarginDeg = 1e-9;
    const double dlat = delta / kDegToRad + kMarginDeg;
    const double lat_min = center.lat() - dlat;
    const double lat_max = center.lat() + dlat;
    if (lat_min <= -90.0 || lat_max >= 90.0) {
      return all_indices();
    }
    const double s = std::sin(delta) / std::cos(center.lat() * kDegToRad);
    if (s >= 1.0) {
      return all_indices();
    }
    const double dlon = std::asin(s) / kDegToRad + kMarginDeg;
    const double lon_min = center.lon() - dlon;
    const double lon_max = center.lon() + dlon;
    if (lon_min < -180.0 || lon_max > 180.0) {
      return all_indices();
    }
    const std::int64_t x0 = cell_x(lon_min);
    const std::int64_t x1 = cell_x(lon_max);
    const std::int64_t y0 = cell_y(lat_min);
    const std::int64_t y1 = cell_y(lat_max);
    std::vector<std::size_t> out;
    const double span_cells = static_cast<double>(x1 - x0 + 1) * static_cast<double>(y1 - y0 + 1);
    if (span_cells > static_cast<double>(cells_.size())) {
      for (const auto& [key, idxs] : cells_) {
        if (key.first >= x0 && key.first <= x1 && key.second >= y0 && key.second <= y1) {
          out.insert(out.end(), idxs.begin(), idxs.end());
        }
      }
      return out;
    }
    for (std::int64_t x = x0; x <= x1; ++x) {
      for (std::int64_t y = y0; y <= y1; ++y) {
        auto it = cells_.find(key_of(x, y));
        if (it != cells_.end()) {
          out.insert(out.end(), it->second.begin(), it->second.end());
        }
      }
    }
    return out;
  }

  double cell_size_ = kDefaultCellSizeM;
  double lat0_ = 0.0;
  double lon0_ = 0.0;
  double kx_ = 1.0;
  double ky_ = 1.0;
  std::vector<Entry> entries_;
  std::unordered_map<CellKey, std::vector<std::size_t>, CellHash> cells_;
};

template <typename Id>
GridIndex<Id> build_index(const std::vector<typename GridIndex<Id>::Entry>& entries,
                          double cell_size = kDefaultCellSizeM) {
  return GridIndex<Id>::build(entries, cell_size);
}

template <typename Id>
std::vector<Id> query_radius(const GridIndex<Id>& idx, const GeoPoint& center, double r) {
  return idx.query_radius(center, r);
}

}  // namespace safebike::geo
