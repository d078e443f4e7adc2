#pragma once

// Weekday/weekend average availability profiles and delta forecasting:
// future count = current count + (profile at future slot - profile at
// current slot), clamped to station capacity.

#include "safebike/model.hpp"

#include <algorithm>
#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace safebike::predict {

inline constexpr int kDefaultHorizon = 6;
inline constexpr int kMaxLookaheadSeconds = kSecondsPerDay;

/// Inclusive local-date bounds; unset bounds are open.
struct DateWindow {
  std::optional<Date> from;
  std::optional<Date> to;

  bool contains(const Date& d) const { return (!from || d >= *from) && (!to || d <= *to); }
};

struct ProfileValue {
  double bikes = 0.0;
  double docks = 0.0;
};

/// Per weekday-flag, per-bucket mean bikes/docks for one station.
struct AvgProfile {
  struct FlagProfile {
    std::array<std::optional<double>, kBucketsPerDay> avg_bikes{};
    std::array<std::optional<double>, kBucketsPerDay> avg_docks{};
    std::array<int, kBucketsPerDay> contributing_dates{};

    bool any_defined() const {
      return std::any_of(contributing_dates.begin(), contributing_dates.end(), [](int c) { return c > 0; });
    }
  };

  std::string station_id;
  std::array<FlagProfile, 2> by_flag{};  // index = weekday_flag

  const FlagProfile& flag(int w) const { return by_flag.at(static_cast<std::size_t>(w)); }
};

/// Averages each bucket over the dates in the window that share the weekday
/// flag and have a value in that bucket.
inline AvgProfile build_profile(const SnapshotStore& store, const std::string& station_id,
                                const DateWindow& window = {}) {
  AvgProfile p;
  p.station_id = station_id;
  const SnapshotSeries* series = store.find(station_id);
  if (series == nullptr) {
    return p;
  }
  std::array<std::array<double, kBucketsPerDay>, 2> sum_b{};
  std::array<std::array<double, kBucketsPerDay>, 2> sum_d{};
  for (const auto& [date, buckets] : series->days()) {
    if (!window.contains(date)) {
      continue;
    }
    const auto w = static_cast<std::size_t>(weekday_flag(date));
    for (std::size_t t = 0; t < buckets.size(); ++t) {
      if (const auto& c = buckets[t]) {
        sum_b[w][t] += c->bikes;
        sum_d[w][t] += c->docks;
        ++p.by_flag[w].contributing_dates[t];
      }
    }
  }
  for (std::size_t w = 0; w < 2; ++w) {
    auto& f = p.by_flag[w];
    for (std::size_t t = 0; t < kBucketsPerDay; ++t) {
      if (const int n = f.contributing_dates[t]; n > 0) {
        f.avg_bikes[t] = sum_b[w][t] / n;
        f.avg_docks[t] = sum_d[w][t] / n;
      }
    }
  }
  return p;
}

/// Stored average, or a linear interpolation between the nearest defined
/// buckets in circular order. nullopt means the flag has no data at all.
inline std::optional<ProfileValue> profile_value(const AvgProfile& p, int w, int bucket) {
  if (bucket < 0 || bucket >= kBucketsPerDay) {
    throw std::out_of_range("bucket out of range: " + std::to_string(bucket));
  }
  const auto& f = p.flag(w);
  const auto at = [&](int t) { return static_cast<std::size_t>(((t % kBucketsPerDay) + kBucketsPerDay) % kBucketsPerDay); };
  if (f.avg_bikes[at(bucket)]) {
    return ProfileValue{*f.avg_bikes[at(bucket)], *f.avg_docks[at(bucket)]};
  }
  int back = 1;
  while (back < kBucketsPerDay && !f.avg_bikes[at(bucket - back)]) {
    ++back;
  }
  if (back == kBucketsPerDay) {
    return std::nullopt;
  }
  int fwd = 1;
  while (!f.avg_bikes[at(bucket + fwd)]) {
    ++fwd;
  }
  const std::size_t lo = at(bucket - back);
  const std::size_t hi = at(bucket + fwd);
  const double frac = static_cast<double>(back) / static_cast<double>(back + fwd);
  return ProfileValue{*f.avg_bikes[lo] + (*f.avg_bikes[hi] - *f.avg_bikes[lo]) * frac,
                      *f.avg_docks[lo] + (*f.avg_docks[hi] - *f.avg_docks[lo]) * frac};
}

struct PredictionVector {
  std::string station_id;
  Instant anchor_time{};          // timestamp of the current status
  Instant anchor_bucket_start{};  // start of the bucket holding anchor_time
  int horizon = 0;
  std::vector<double> predicted_bikes;
  std::vector<double> predicted_docks;
  std::vector<Instant> times;  // start of each predicted bucket
  bool degraded = false;
};

struct PredictedCounts {
  double bikes = 0.0;
  double docks = 0.0;
  bool degraded = false;
};

namespace detail {

inline double clamp_capacity(double v, int capacity) {
  return std::clamp(v, 0.0, static_cast<double>(std::max(capacity, 0)));
}

}  // namespace detail

inline PredictionVector predict(const AvgProfile& profile, const StationStatus& current, int n, int capacity,
                                const TimeZone& tz = TimeZone{}) {
  if (n < 1) {
    throw std::invalid_argument("horizon must be >= 1, got " + std::to_string(n));
  }
  const LocalDateTime local = tz.to_local(current.timestamp);
  const int t_c = bucket_of(local);
  const int w_c = weekday_flag(local.date);
  const auto base = profile_value(profile, w_c, t_c);

  PredictionVector out;
  out.station_id = current.station_id;
  out.anchor_time = current.timestamp;
  out.anchor_bucket_start = current.timestamp - std::chrono::seconds{local.seconds_of_day % kBucketSeconds};
  out.horizon = n;
  out.predicted_bikes.reserve(static_cast<std::size_t>(n));
  out.predicted_docks.reserve(static_cast<std::size_t>(n));
  for (int i = 1; i <= n; ++i) {
    // Steps in local wall time; a slot past midnight takes its own date's flag.
    const int slot = t_c + i;
    const Date date_i = add_days(local.date, slot / kBucketsPerDay);
    const int bucket_i = slot % kBucketsPerDay;
    const auto future = profile_value(profile, weekday_flag(date_i), bucket_i);
    double db = 0.0;
    double dd = 0.0;
    if (base && future) {
      db = future->bikes - base->bikes;
      dd = future->docks - base->docks;
    } else {
      out.degraded = true;
    }
    out.predicted_bikes.push_back(detail::clamp_capacity(current.bikes + db, capacity));
    out.predicted_docks.push_back(detail::clamp_capacity(current.docks + dd, capacity));
    out.times.push_back(tz.to_utc(date_i, bucket_i * kBucketSeconds));
  }
  return out;
}

/// Number of 10-minute steps from the anchor bucket start to target, rounded
/// to nearest with ties up.
inline int steps_ahead(const StationStatus& current, Instant target, const TimeZone& tz = TimeZone{}) {
  if (target < current.timestamp) {
    throw std::invalid_argument("target time precedes the current status");
  }
  if ((target - current.timestamp).count() > kMaxLookaheadSeconds) {
    throw std::invalid_argument("target time more than 24 h after the current status");
  }
  const LocalDateTime local = tz.to_local(current.timestamp);
  const auto bucket_start = current.timestamp - std::chrono::seconds{local.seconds_of_day % kBucketSeconds};
  const auto elapsed = (target - bucket_start).count();
  return static_cast<int>((elapsed + kBucketSeconds / 2) / kBucketSeconds);
}

inline PredictedCounts predict_at(const AvgProfile& profile, const StationStatus& current, Instant target,
                                  int capacity, const TimeZone& tz = TimeZone{}) {
  const int i = steps_ahead(current, target, tz);
  if (i == 0) {
    return PredictedCounts{static_cast<double>(current.bikes), static_cast<double>(current.docks), false};
  }
  const auto v = predict(profile, current, i, capacity, tz);
  return PredictedCounts{v.predicted_bikes.back(), v.predicted_docks.back(), v.degraded};
}

}  // namespace safebike::predict
