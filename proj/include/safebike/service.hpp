#pragma once

// Engine lifecycle and the JSON API: configuration, immutable engine state,
// request handlers shared by the HTTP server and the CLI.

#include "safebike/ingest.hpp"
#include "safebike/model.hpp"
#include "safebike/predict.hpp"
#include "safebike/routing.hpp"
#include "safebike/spatial.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace safebike::service {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline constexpr int kApiVersion = 1;

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct EngineConfig {
  fs::path station_info;
  fs::path status_archive;
  fs::path crime_csv;
  fs::path road_geojson;
  fs::path snapshot_store;
  fs::path network_out;
  spatial::BufferConfig buffers;
  routing::Speeds speeds;
  std::string timezone = "America/New_York";
  int horizon = predict::kDefaultHorizon;
  std::string listen_host = "127.0.0.1";
  int listen_port = 8080;
  std::optional<Instant> now;
  predict::DateWindow profile_window;
  int poll_interval_s = 0;
  fs::path static_dir;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) {
    return {};
  }
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc{} || p != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  }
  return out;
}

inline int to_int(const std::string& key, const std::string& v) {
  int out = 0;
  if (!safebike::detail::parse_int(v, out)) {
    throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
  }
  return out;
}

}  // namespace detail

/// Sets one documented key. Relative paths resolve against base_dir.
inline void apply_config_value(EngineConfig& cfg, const std::string& key, const std::string& value,
                               const fs::path& base_dir = {}) {
  auto path_of = [&](const std::string& v) {
    fs::path p(v);
    return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  };
  if (key == "station_info") {
    cfg.station_info = path_of(value);
  } else if (key == "status_archive") {
    cfg.status_archive = path_of(value);
  } else if (key == "crime_csv") {
    cfg.crime_csv = path_of(value);
  } else if (key == "road_geojson") {
    cfg.road_geojson = path_of(value);
  } else if (key == "snapshot_store") {
    cfg.snapshot_store = path_of(value);
  } else if (key == "network_out") {
    cfg.network_out = path_of(value);
  } else if (key == "static_dir") {
    cfg.static_dir = path_of(value);
  } else if (key == "crime_buffer_m") {
    cfg.buffers.crime_buffer_d = detail::to_double(key, value);
  } else if (key == "station_buffer_m") {
    cfg.buffers.station_buffer_k = detail::to_double(key, value);
  } else if (key == "max_candidate_stations") {
    cfg.buffers.max_candidate_stations = detail::to_int(key, value);
  } else if (key == "walk_speed_kmh") {
    cfg.speeds.walk_kmh = detail::to_double(key, value);
  } else if (key == "bike_speed_kmh") {
    cfg.speeds.bike_kmh = detail::to_double(key, value);
  } else if (key == "timezone") {
    cfg.timezone = value;
  } else if (key == "horizon") {
    cfg.horizon = detail::to_int(key, value);
  } else if (key == "listen") {
    const auto colon = value.rfind(':');
    if (colon == std::string::npos) {
      throw ConfigError("config key 'listen': expected host:port, got '" + value + "'");
    }
    cfg.listen_host = value.substr(0, colon);
    cfg.listen_port = detail::to_int(key, value.substr(colon + 1));
  } else if (key == "now") {
    auto t = parse_instant(value);
    if (!t) {
      throw ConfigError("config key 'now': expected an ISO-8601 instant, got '" + value + "'");
    }
    cfg.now = *t;
  } else if (key == "profile_from" || key == "profile_to") {
    auto d = parse_date(value);
    if (!d) {
      throw ConfigError("config key '" + key + "': expected YYYY-MM-DD, got '" + value + "'");
    }
    (key == "profile_from" ? cfg.profile_window.from : cfg.profile_window.to) = *d;
  } else if (key == "poll_interval_s") {
    cfg.poll_interval_s = detail::to_int(key, value);
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

inline void validate_config(const EngineConfig& cfg) {
  try {
    cfg.buffers.validate();
    cfg.speeds.validate();
    TimeZone{cfg.timezone};
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (cfg.horizon < 1) {
    throw ConfigError("config key 'horizon' must be >= 1");
  }
  if (cfg.poll_interval_s < 0) {
    throw ConfigError("config key 'poll_interval_s' must be >= 0");
  }
}

/// "key = value" lines; '#' starts a comment.
inline EngineConfig parse_config(std::string_view text, const fs::path& base_dir = {}) {
  EngineConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) {
      line.erase(hash);
    }
    const std::string t = detail::trim(line);
    if (t.empty()) {
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    apply_config_value(cfg, detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)), base_dir);
  }
  validate_config(cfg);
  return cfg;
}

inline EngineConfig load_config(const fs::path& path) {
  std::string text;
  try {
    text = ingest::read_file(path);
  } catch (const std::exception&) {
    throw ConfigError("cannot read config file " + path.string());
  }
  return parse_config(text, path.parent_path());
}

// ---------------------------------------------------------------------------
// Engine state

/// Everything a request reads. Built once, never mutated afterwards.
struct EngineState {
  EngineConfig config;
  TimeZone tz;
  StationRegistry registry;
  SnapshotStore store;
  std::vector<CrimeRecord> crimes;
  RoadNetwork network;  // crime-annotated
  routing::NodeLocator nodes;
  spatial::StationLocator stations;
  std::map<std::string, predict::AvgProfile> profiles;
  Instant now{};
  std::map<std::string, ingest::IngestReport> reports;

  /// Latest stored snapshot at or before t, timestamped at its bucket start.
  std::optional<StationStatus> status_at(const std::string& id, Instant t) const {
    const SnapshotSeries* s = store.find(id);
    if (s == nullptr) {
      return std::nullopt;
    }
    const LocalDateTime local = tz.to_local(t);
    auto slot = s->latest_at_or_before(local.date, bucket_of(local));
    if (!slot) {
      return std::nullopt;
    }
    const Counts c = *s->get(slot->first, slot->second);
    return StationStatus{id, c.bikes, c.docks, tz.to_utc(slot->first, slot->second * kBucketSeconds)};
  }

  const predict::AvgProfile& profile(const std::string& id) const {
    static const predict::AvgProfile empty;
    auto it = profiles.find(id);
    return it == profiles.end() ? empty : it->second;
  }

  /// Forecast at `at` anchored on the status current at `anchor`. Stations
  /// without a usable status (none, or older than the 24 h profile span)
  /// contribute zero availability and are flagged degraded.
  predict::PredictedCounts availability(const std::string& id, Instant at, Instant anchor) const {
    const Station* st = registry.find(id);
    auto cur = status_at(id, anchor);
    if (st == nullptr || !cur) {
      return {0.0, 0.0, true};
    }
    if (at < cur->timestamp) {
      at = cur->timestamp;
    }
    if ((at - cur->timestamp).count() > predict::kMaxLookaheadSeconds) {
      return {0.0, 0.0, true};
    }
    return predict::predict_at(profile(id), *cur, at, st->capacity, tz);
  }

  routing::RoutingContext routing_context(Instant anchor) const {
    return routing::RoutingContext{
        network, nodes, registry, stations, config.buffers, config.speeds,
        [this, anchor](const std::string& id, Instant at) { return availability(id, at, anchor); }};
  }
};

enum class LoadMode {
  serve,   // every configured path must exist
  ingest,  // the snapshot store may not exist yet
};

inline void require_exists(const fs::path& p, const char* key) {
  if (!fs::exists(p)) {
    throw ConfigError(std::string(key) + ": file not found: " + p.string());
  }
}

/// Loads and cross-links all inputs. Any missing or corrupt input throws
/// before anything is served.
inline std::shared_ptr<const EngineState> load_engine(const EngineConfig& cfg, LoadMode mode = LoadMode::serve) {
  validate_config(cfg);
  if (cfg.station_info.empty()) {
    throw ConfigError("config key 'station_info' is required");
  }
  if (cfg.road_geojson.empty()) {
    throw ConfigError("config key 'road_geojson' is required");
  }
  require_exists(cfg.station_info, "station_info");
  require_exists(cfg.road_geojson, "road_geojson");
  if (!cfg.crime_csv.empty()) {
    require_exists(cfg.crime_csv, "crime_csv");
  }
  if (!cfg.status_archive.empty()) {
    require_exists(cfg.status_archive, "status_archive");
  }
  if (!cfg.snapshot_store.empty() && mode == LoadMode::serve) {
    require_exists(cfg.snapshot_store, "snapshot_store");
  }
  if (!cfg.static_dir.empty() && mode == LoadMode::serve && !fs::is_directory(cfg.static_dir)) {
    throw ConfigError("static_dir: not a directory: " + cfg.static_dir.string());
  }

  auto st = std::make_shared<EngineState>();
  st->config = cfg;
  st->tz = TimeZone{cfg.timezone};

  auto stations = ingest::parse_station_info(ingest::read_file(cfg.station_info));
  st->registry = std::move(stations.value);
  st->reports["station_info"] = stations.report;

  if (!cfg.snapshot_store.empty() && fs::exists(cfg.snapshot_store)) {
    st->store = ingest::load_store(cfg.snapshot_store);
  }
  if (!cfg.status_archive.empty()) {
    auto archive = ingest::read_status_archive(cfg.status_archive, &st->registry);
    st->reports["status_archive"] = archive.report;
    st->reports["snapshots"] = ingest::append_snapshots(st->store, archive.value, st->tz, &st->registry);
  }

  if (!cfg.crime_csv.empty()) {
    auto crimes = ingest::parse_crime_csv(ingest::read_file(cfg.crime_csv));
    st->crimes = std::move(crimes.value);
    st->reports["crime_csv"] = crimes.report;
  }

  auto roads = ingest::parse_road_geojson(ingest::read_file(cfg.road_geojson));
  st->reports["road_geojson"] = roads.report;
  st->network = spatial::annotate_crime(roads.value, st->crimes, cfg.buffers);
  if (mode == LoadMode::serve && st->network.empty()) {
    throw ConfigError("road_geojson: network has no edges");
  }

  st->nodes = routing::NodeLocator(st->network);
  st->stations = spatial::StationLocator(st->registry);
  for (const auto& [id, series] : st->store) {
    st->profiles.emplace(id, predict::build_profile(st->store, id, cfg.profile_window));
  }

  if (cfg.now) {
    st->now = *cfg.now;
  } else {
    std::optional<Instant> latest;
    for (const auto& [id, series] : st->store) {
      if (!series.days().empty()) {
        const auto& [date, buckets] = *series.days().rbegin();
        for (int b = kBucketsPerDay - 1; b >= 0; --b) {
          if (buckets[static_cast<std::size_t>(b)]) {
            const Instant t = st->tz.to_utc(date, b * kBucketSeconds);
            latest = latest ? std::max(*latest, t) : t;
            break;
          }
        }
      }
    }
    st->now = latest.value_or(std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now()));
  }
  return st;
}

/// Holder for the current engine snapshot; readers copy the pointer, a
/// reload swaps it whole.
class EngineHandle {
public:
  explicit EngineHandle(std::shared_ptr<const EngineState> s) : state_(std::move(s)) {}

  std::shared_ptr<const EngineState> get() const {
    std::lock_guard lock(mu_);
    return state_;
  }

  void swap_in(std::shared_ptr<const EngineState> s) {
    std::lock_guard lock(mu_);
    state_ = std::move(s);
  }

private:
  mutable std::mutex mu_;
  std::shared_ptr<const EngineState> state_;
};

// ---------------------------------------------------------------------------
// API documents

struct ApiResponse {
  int status = 200;
  json body;
};

inline ApiResponse api_error(int status, const std::string& code, const std::string& message) {
  return {status, json{{"api_version", kApiVersion}, {"error", {{"code", code}, {"message", message}}}}};
}

inline double round_half_up(double v) { return std::floor(v + 0.5); }

inline json point_json(const GeoPoint& p) { return json::array({p.lon(), p.lat()}); }

inline ApiResponse get_stations(const EngineState& st) {
  json arr = json::array();
  for (const auto& [id, s] : st.registry) {
    json rec{{"id", id},
             {"name", s.name},
             {"lat", s.location.lat()},
             {"lon", s.location.lon()},
             {"capacity", s.capacity}};
    if (auto cur = st.status_at(id, st.now)) {
      rec["status"] = "ok";
      rec["bikes"] = cur->bikes;
      rec["docks"] = cur->docks;
      rec["ratio"] = s.capacity > 0 ? static_cast<double>(cur->bikes) / s.capacity : 0.0;
      rec["time"] = format_instant(cur->timestamp);
    } else {
      rec["status"] = "unknown";
      rec["bikes"] = nullptr;
      rec["docks"] = nullptr;
      rec["ratio"] = nullptr;
      rec["time"] = nullptr;
    }
    arr.push_back(std::move(rec));
  }
  return {200, json{{"api_version", kApiVersion}, {"now", format_instant(st.now)}, {"stations", arr}}};
}

inline ApiResponse get_history(const EngineState& st, const std::string& id, int hours) {
  if (st.registry.find(id) == nullptr) {
    return api_error(404, "unknown_station", "unknown station id '" + id + "'");
  }
  if (hours < 0) {
    return api_error(400, "invalid_argument", "hours must be >= 0");
  }
  const Instant end = st.now;
  const Instant begin = end - std::chrono::hours{hours};
  std::vector<std::pair<Instant, Counts>> points;
  if (const SnapshotSeries* series = st.store.find(id)) {
    const Date first = add_days(st.tz.to_local(begin).date, -1);
    const Date last = add_days(st.tz.to_local(end).date, 1);
    for (auto it = series->days().lower_bound(first); it != series->days().end() && it->first <= last; ++it) {
      for (int b = 0; b < kBucketsPerDay; ++b) {
        if (const auto& c = it->second[static_cast<std::size_t>(b)]) {
          const Instant t = st.tz.to_utc(it->first, b * kBucketSeconds);
          if (t >= begin && t <= end) {
            points.emplace_back(t, *c);
          }
        }
      }
    }
  }
  std::stable_sort(points.begin(), points.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  json arr = json::array();
  for (const auto& [t, c] : points) {
    arr.push_back(json{{"time", format_instant(t)}, {"bikes", c.bikes}, {"docks", c.docks}});
  }
  return {200, json{{"api_version", kApiVersion},
                    {"station_id", id},
                    {"hours", hours},
                    {"from", format_instant(begin)},
                    {"to", format_instant(end)},
                    {"points", arr}}};
}

inline ApiResponse get_prediction(const EngineState& st, const std::string& id, int horizon) {
  const Station* s = st.registry.find(id);
  if (s == nullptr) {
    return api_error(404, "unknown_station", "unknown station id '" + id + "'");
  }
  if (horizon < 1) {
    return api_error(400, "invalid_argument", "horizon must be >= 1");
  }
  auto cur = st.status_at(id, st.now);
  if (!cur) {
    return api_error(409, "no_current_status", "station '" + id + "' has no current status");
  }
  const auto pv = predict::predict(st.profile(id), *cur, horizon, s->capacity, st.tz);
  json times = json::array();
  json disp_b = json::array();
  json disp_d = json::array();
  for (std::size_t i = 0; i < pv.times.size(); ++i) {
    times.push_back(format_instant(pv.times[i]));
    disp_b.push_back(round_half_up(pv.predicted_bikes[i]));
    disp_d.push_back(round_half_up(pv.predicted_docks[i]));
  }
  return {200, json{{"api_version", kApiVersion},
                    {"station_id", id},
                    {"capacity", s->capacity},
                    {"current", {{"bikes", cur->bikes}, {"docks", cur->docks}, {"time", format_instant(cur->timestamp)}}},
                    {"anchor_time", format_instant(pv.anchor_time)},
                    {"horizon", pv.horizon},
                    {"times", times},
                    {"predicted_bikes", pv.predicted_bikes},
                    {"predicted_docks", pv.predicted_docks},
                    {"display_bikes", disp_b},
                    {"display_docks", disp_d},
                    {"degraded", pv.degraded}}};
}

class RequestError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline GeoPoint point_field(const json& body, const char* name) {
  auto it = body.find(name);
  if (it == body.end() || !it->is_object()) {
    throw RequestError(std::string(name) + " must be an object {lat, lon}");
  }
  for (const char* k : {"lat", "lon"}) {
    if (!it->contains(k) || !(*it)[k].is_number()) {
      throw RequestError(std::string(name) + "." + k + " must be a number");
    }
  }
  const double lat = (*it)["lat"].get<double>();
  const double lon = (*it)["lon"].get<double>();
  if (!GeoPoint::valid(lat, lon)) {
    throw RequestError(std::string(name) + " coordinates out of range");
  }
  return GeoPoint{lat, lon};
}

}  // namespace detail

/// Validates a POST /route body. Missing departure_time means the engine's now.
inline routing::RouteQuery parse_route_request(const json& body, const EngineState& st) {
  if (!body.is_object()) {
    throw RequestError("request body must be a JSON object");
  }
  routing::RouteQuery q;
  q.origin = detail::point_field(body, "origin");
  q.destination = detail::point_field(body, "destination");
  q.departure_time = st.now;
  if (auto it = body.find("departure_time"); it != body.end() && !it->is_null()) {
    std::optional<Instant> t;
    if (it->is_string()) {
      t = parse_instant(it->get<std::string>());
    } else if (it->is_number_integer()) {
      t = instant_from_epoch(it->get<std::int64_t>());
    }
    if (!t) {
      throw RequestError("departure_time must be an ISO-8601 instant or epoch seconds");
    }
    q.departure_time = *t;
  }
  if (auto it = body.find("scheme"); it != body.end() && !it->is_null()) {
    auto s = it->is_string() ? routing::parse_scheme(it->get<std::string>()) : std::nullopt;
    if (!s) {
      throw RequestError("scheme must be one of shortest, safest, optimal");
    }
    q.scheme = *s;
  }
  if (auto it = body.find("weights"); it != body.end() && !it->is_null()) {
    if (!it->is_object()) {
      throw RequestError("weights must be an object {alpha, beta, gamma}");
    }
    double v[3] = {0.0, 0.0, 0.0};
    const char* names[3] = {"alpha", "beta", "gamma"};
    for (int k = 0; k < 3; ++k) {
      auto f = it->find(names[k]);
      if (f == it->end() || !f->is_number() || !std::isfinite(f->get<double>()) || f->get<double>() < 0.0) {
        throw RequestError(std::string("weights.") + names[k] + " must be a non-negative number");
      }
      v[k] = f->get<double>();
    }
    try {
      q.weights = FactorWeights::normalized(v[0], v[1], v[2]);
    } catch (const std::invalid_argument& e) {
      throw RequestError(e.what());
    }
  }
  return q;
}

inline json weights_json(const FactorWeights& w) {
  return json{{"alpha", w.alpha()}, {"beta", w.beta()}, {"gamma", w.gamma()}};
}

inline json route_document(const EngineState& st, const routing::RouteQuery& q, const routing::RouteResult& r) {
  const auto& c = r.chosen();
  json features = json::array();
  for (std::size_t k = 0; k < c.legs.size(); ++k) {
    const auto& leg = c.legs[k];
    json coords = json::array();
    for (const auto& p : leg.geometry.points()) {
      coords.push_back(point_json(p));
    }
    features.push_back(json{{"type", "Feature"},
                            {"geometry", {{"type", "LineString"}, {"coordinates", coords}}},
                            {"properties",
                             {{"kind", "leg"},
                              {"leg", k},
                              {"mode", to_string(leg.mode)},
                              {"length_m", leg.length},
                              {"crime_total", leg.crime_total},
                              {"duration_s", leg.duration_s}}}});
  }
  const Station& o = *st.registry.find(c.origin_station_id);
  const Station& d = *st.registry.find(c.destination_station_id);
  features.push_back(json{{"type", "Feature"},
                          {"geometry", {{"type", "Point"}, {"coordinates", point_json(o.location)}}},
                          {"properties",
                           {{"kind", "station"},
                            {"role", "origin"},
                            {"station_id", o.id},
                            {"name", o.name},
                            {"time", format_instant(c.check_out)},
                            {"predicted_bikes", c.predicted_bikes_out}}}});
  features.push_back(json{{"type", "Feature"},
                          {"geometry", {{"type", "Point"}, {"coordinates", point_json(d.location)}}},
                          {"properties",
                           {{"kind", "station"},
                            {"role", "destination"},
                            {"station_id", d.id},
                            {"name", d.name},
                            {"time", format_instant(c.check_in)},
                            {"predicted_docks", c.predicted_docks_in}}}});
  json alternatives = json::array();
  for (const auto& a : r.alternatives) {
    alternatives.push_back(json{{"origin_station_id", a.origin_station_id},
                                {"destination_station_id", a.destination_station_id},
                                {"total_length_m", a.total_length},
                                {"total_crime", a.total_crime},
                                {"avl", a.avl},
                                {"nlength", a.nlength},
                                {"ncrime", a.ncrime},
                                {"navl", a.navl},
                                {"score", a.score}});
  }
  return json{{"api_version", kApiVersion},
              {"scheme", routing::to_string(q.scheme)},
              {"weights", weights_json(r.weights)},
              {"departure_time", format_instant(q.departure_time)},
              {"route", {{"type", "FeatureCollection"}, {"features", features}}},
              {"chosen",
               {{"origin_station_id", c.origin_station_id},
                {"destination_station_id", c.destination_station_id},
                {"total_length_m", c.total_length},
                {"total_crime", c.total_crime},
                {"duration_s", c.legs[0].duration_s + c.legs[1].duration_s + c.legs[2].duration_s},
                {"check_out", format_instant(c.check_out)},
                {"check_in", format_instant(c.check_in)},
                {"predicted_bikes_out", c.predicted_bikes_out},
                {"predicted_docks_in", c.predicted_docks_in},
                {"avl", c.avl},
                {"degraded", c.degraded},
                {"nlength", c.nlength},
                {"ncrime", c.ncrime},
                {"navl", c.navl},
                {"score", c.score}}},
              {"normalization", {{"max_length_m", r.max_length}, {"max_crime", r.max_crime}, {"max_avl", r.max_avl}}},
              {"alternatives", alternatives}};
}

inline ApiResponse post_route(const EngineState& st, const json& body) {
  routing::RouteQuery q;
  try {
    q = parse_route_request(body, st);
  } catch (const RequestError& e) {
    return api_error(400, "invalid_request", e.what());
  }
  try {
    const Instant anchor = std::min(st.now, q.departure_time);
    const auto result = routing::route(q, st.routing_context(anchor));
    return {200, route_document(st, q, result)};
  } catch (const routing::RouteError& e) {
    return api_error(422, e.code_name(), e.what());
  }
}

inline ApiResponse post_route(const EngineState& st, std::string_view raw_body) {
  json body;
  try {
    body = json::parse(raw_body.begin(), raw_body.end());
  } catch (const json::parse_error& e) {
    return api_error(400, "invalid_json", std::string("malformed JSON at byte ") + std::to_string(e.byte));
  }
  return post_route(st, body);
}

}  // namespace safebike::service
