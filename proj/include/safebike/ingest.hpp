#pragma once

// Parsers and writers for the engine's input files: station information,
// station-status snapshots, crime CSV and road-network GeoJSON, plus the
// persisted snapshot store.

#include "safebike/model.hpp"

#include <boost/crc.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <cmath>
#include <limits>
#include <tuple>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <unordered_map>
#include <vector>

namespace safebike::ingest {

using json = nlohmann::json;

/// Structural failure that aborts a whole file (as opposed to a rejected record).
class ParseError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct IngestReport {
  std::size_t records_read = 0;
  std::size_t records_kept = 0;
  std::size_t records_rejected = 0;
  std::map<std::string, std::size_t> rejection_reasons;
  // Kept-but-noteworthy records, e.g. statuses for stations missing from the registry.
  std::map<std::string, std::size_t> warnings;
  std::vector<std::string> details;

  static constexpr std::size_t kMaxDetails = 50;

  void keep() {
    ++records_read;
    ++records_kept;
  }

  void reject(const std::string& reason, const std::string& detail = {}) {
    ++records_read;
    ++records_rejected;
    ++rejection_reasons[reason];
    note(detail.empty() ? reason : detail + ": " + reason);
  }

  // Turns an already-kept record into a rejected one (superseded duplicates).
  void unkeep(const std::string& reason, const std::string& detail = {}) {
    --records_kept;
    ++records_rejected;
    ++rejection_reasons[reason];
    note(detail.empty() ? reason : detail + ": " + reason);
  }

  void warn(const std::string& what) { ++warnings[what]; }

  void merge(const IngestReport& o) {
    records_read += o.records_read;
    records_kept += o.records_kept;
    records_rejected += o.records_rejected;
    for (const auto& [k, v] : o.rejection_reasons) {
      rejection_reasons[k] += v;
    }
    for (const auto& [k, v] : o.warnings) {
      warnings[k] += v;
    }
    for (const auto& d : o.details) {
      note(d);
    }
  }

  bool consistent() const { return records_read == records_kept + records_rejected; }

  json to_json() const {
    return json{{"records_read", records_read},
                {"records_kept", records_kept},
                {"records_rejected", records_rejected},
                {"rejection_reasons", rejection_reasons},
                {"warnings", warnings}};
  }

private:
  void note(std::string d) {
    if (details.size() < kMaxDetails) {
      details.push_back(std::move(d));
    }
  }
};

template <typename T>
struct Parsed {
  T value;
  IngestReport report;
};

namespace detail {

inline json parse_json(std::string_view bytes, const std::string& what) {
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw ParseError("malformed JSON in " + what + " at byte " + std::to_string(e.byte) + ": " + e.what());
  }
}

inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline std::optional<double> parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) {
    s.remove_suffix(1);
  }
  if (!s.empty() && s.front() == '+') {
    s.remove_prefix(1);
  }
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) {
    return std::nullopt;
  }
  return v;
}

// Station ids arrive as strings or integers depending on the feed.
inline std::optional<std::string> id_field(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    return std::nullopt;
  }
  if (it->is_string()) {
    return it->get<std::string>();
  }
  if (it->is_number_integer()) {
    return std::to_string(it->get<std::int64_t>());
  }
  return std::nullopt;
}

inline std::optional<std::int64_t> integer_field(const json& v) {
  if (v.is_number_integer()) {
    return v.get<std::int64_t>();
  }
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (std::isfinite(d) && std::floor(d) == d && std::abs(d) < 9e15) {
      return static_cast<std::int64_t>(d);
    }
  }
  return std::nullopt;
}

inline const json* stations_array(const json& doc) {
  if (!doc.is_object()) {
    return nullptr;
  }
  if (auto it = doc.find("stations"); it != doc.end() && it->is_array()) {
    return &*it;
  }
  // Nested feed envelope: {"data": {"stations": [...]}}.
  if (auto d = doc.find("data"); d != doc.end() && d->is_object()) {
    if (auto it = d->find("stations"); it != d->end() && it->is_array()) {
      return &*it;
    }
  }
  return nullptr;
}

}  // namespace detail

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Station information

inline Parsed<StationRegistry> parse_station_info(std::string_view bytes) {
  const json doc = detail::parse_json(bytes, "station info");
  const json* arr = detail::stations_array(doc);
  if (arr == nullptr) {
    throw ParseError("station info: expected an object with a \"stations\" array");
  }
  Parsed<StationRegistry> out;
  auto& rep = out.report;
  for (std::size_t i = 0; i < arr->size(); ++i) {
    const json& rec = (*arr)[i];
    const std::string where = "station[" + std::to_string(i) + "]";
    if (!rec.is_object()) {
      rep.reject("not an object", where);
      continue;
    }
    auto id = detail::id_field(rec, "station_id");
    if (!id) {
      rep.reject("missing field: station_id", where);
      continue;
    }
    const char* missing = nullptr;
    for (const char* key : {"name", "lat", "lon", "capacity"}) {
      if (!rec.contains(key)) {
        missing = key;
        break;
      }
    }
    if (missing != nullptr) {
      rep.reject(std::string("missing field: ") + missing, where);
      continue;
    }
    if (!rec["name"].is_string()) {
      rep.reject("invalid field: name", where);
      continue;
    }
    if (!rec["lat"].is_number() || !rec["lon"].is_number()) {
      rep.reject("invalid coordinate", where);
      continue;
    }
    const double lat = rec["lat"].get<double>();
    const double lon = rec["lon"].get<double>();
    if (!(lat >= -90.0 && lat <= 90.0)) {
      rep.reject("lat out of range", where);
      continue;
    }
    if (!(lon >= -180.0 && lon <= 180.0)) {
      rep.reject("lon out of range", where);
      continue;
    }
    auto cap = detail::integer_field(rec["capacity"]);
    if (!cap || *cap < 0 || *cap > std::numeric_limits<int>::max()) {
      rep.reject("invalid capacity", where);
      continue;
    }
    Station s{*id, rec["name"].get<std::string>(), GeoPoint{lat, lon}, static_cast<int>(*cap)};
    rep.keep();
    if (out.value.insert_or_assign(std::move(s))) {
      rep.unkeep("duplicate station_id (superseded)", *id);
    }
  }
  return out;
}

inline std::string serialize_station_info(const StationRegistry& reg) {
  json arr = json::array();
  for (const auto& [id, s] : reg) {
    arr.push_back(json{{"station_id", s.id},
                       {"name", s.name},
                       {"lat", s.location.lat()},
                       {"lon", s.location.lon()},
                       {"capacity", s.capacity}});
  }
  return json{{"stations", arr}}.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Station status snapshots

/// One feed snapshot. When a registry is given, statuses for unknown ids are
/// kept and counted under warnings["unknown station_id"].
inline Parsed<std::vector<StationStatus>> parse_status_snapshot(std::string_view bytes,
                                                                const StationRegistry* registry = nullptr) {
  const json doc = detail::parse_json(bytes, "status snapshot");
  if (!doc.is_object()) {
    throw ParseError("status snapshot: expected a JSON object");
  }
  auto lu = doc.find("last_updated");
  if (lu == doc.end()) {
    throw ParseError("status snapshot: missing last_updated");
  }
  auto ts = detail::integer_field(*lu);
  if (!ts) {
    throw ParseError("status snapshot: last_updated must be integer epoch seconds");
  }
  const json* arr = detail::stations_array(doc);
  if (arr == nullptr) {
    throw ParseError("status snapshot: expected a \"stations\" array");
  }
  Parsed<std::vector<StationStatus>> out;
  auto& rep = out.report;
  for (std::size_t i = 0; i < arr->size(); ++i) {
    const json& rec = (*arr)[i];
    const std::string where = "station[" + std::to_string(i) + "]";
    if (!rec.is_object()) {
      rep.reject("not an object", where);
      continue;
    }
    auto id = detail::id_field(rec, "station_id");
    if (!id) {
      rep.reject("missing field: station_id", where);
      continue;
    }
    auto b = rec.find("num_bikes_available");
    auto d = rec.find("num_docks_available");
    if (b == rec.end() || d == rec.end()) {
      rep.reject(std::string("missing field: ") + (b == rec.end() ? "num_bikes_available" : "num_docks_available"),
                 where);
      continue;
    }
    auto bikes = detail::integer_field(*b);
    auto docks = detail::integer_field(*d);
    if (!bikes || !docks) {
      rep.reject("invalid count", where);
      continue;
    }
    if (*bikes < 0 || *docks < 0) {
      rep.reject("negative count", where);
      continue;
    }
    if (*bikes > std::numeric_limits<int>::max() || *docks > std::numeric_limits<int>::max()) {
      rep.reject("invalid count", where);
      continue;
    }
    if (registry != nullptr && !registry->contains(*id)) {
      rep.warn("unknown station_id");
    }
    out.value.push_back(
        StationStatus{*id, static_cast<int>(*bikes), static_cast<int>(*docks), instant_from_epoch(*ts)});
    rep.keep();
  }
  return out;
}

/// All statuses share one last_updated; pass it explicitly for empty lists.
inline std::string serialize_status_snapshot(const std::vector<StationStatus>& statuses, Instant last_updated) {
  json arr = json::array();
  for (const auto& s : statuses) {
    if (s.timestamp != last_updated) {
      throw std::invalid_argument("status for " + s.station_id + " has a different timestamp than the snapshot");
    }
    arr.push_back(json{{"station_id", s.station_id},
                       {"num_bikes_available", s.bikes},
                       {"num_docks_available", s.docks}});
  }
  return json{{"last_updated", epoch_seconds(last_updated)}, {"stations", arr}}.dump() + "\n";
}

/// Reads a status archive: either a directory of snapshot files (*.json, in
/// file-name order) or a single file with one snapshot JSON object per line.
inline Parsed<std::vector<StationStatus>> read_status_archive(const std::filesystem::path& path,
                                                              const StationRegistry* registry = nullptr) {
  namespace fs = std::filesystem;
  Parsed<std::vector<StationStatus>> out;
  auto absorb = [&](std::string_view text, const std::string& where) {
    try {
      auto p = parse_status_snapshot(text, registry);
      out.report.merge(p.report);
      out.value.insert(out.value.end(), p.value.begin(), p.value.end());
    } catch (const ParseError& e) {
      throw ParseError(where + ": " + e.what());
    }
  };
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& ent : fs::directory_iterator(path)) {
      if (ent.is_regular_file() && ent.path().extension() == ".json") {
        files.push_back(ent.path());
      }
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      absorb(read_file(f), f.string());
    }
    return out;
  }
  const std::string text = read_file(path);
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) {
      nl = text.size();
    }
    ++line_no;
    std::string_view line(text.data() + pos, nl - pos);
    pos = nl + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
      continue;
    }
    absorb(line, path.string() + ":" + std::to_string(line_no));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Crime CSV (RFC 4180)

namespace detail {

struct CsvRow {
  std::size_t line = 0;  // 1-based line where the record starts
  std::vector<std::string> fields;
  bool unterminated = false;
};

inline std::vector<CsvRow> split_csv(std::string_view text) {
  std::vector<CsvRow> rows;
  std::size_t i = 0;
  std::size_t line = 1;
  if (text.substr(0, 3) == "\xEF\xBB\xBF") {
    i = 3;
  }
  while (i < text.size()) {
    CsvRow row;
    row.line = line;
    std::string field;
    bool done = false;
    while (!done) {
      if (i < text.size() && text[i] == '"') {
        ++i;
        bool closed = false;
        while (i < text.size()) {
          const char c = text[i];
          if (c == '"') {
            if (i + 1 < text.size() && text[i + 1] == '"') {
              field.push_back('"');
              i += 2;
              continue;
            }
            ++i;
            closed = true;
            break;
          }
          if (c == '\n') {
            ++line;
          }
          field.push_back(c);
          ++i;
        }
        if (!closed) {
          row.unterminated = true;
        }
      }
      while (i < text.size() && text[i] != ',' && text[i] != '\n' && text[i] != '\r') {
        field.push_back(text[i]);
        ++i;
      }
      row.fields.push_back(std::move(field));
      field.clear();
      if (i >= text.size()) {
        done = true;
      } else if (text[i] == ',') {
        ++i;
      } else {
        if (text[i] == '\r') {
          ++i;
        }
        if (i < text.size() && text[i] == '\n') {
          ++i;
        }
        ++line;
        done = true;
      }
    }
    const bool blank = row.fields.size() == 1 && row.fields[0].empty() && !row.unterminated;
    if (!blank) {
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

inline std::string lower_trim(std::string s) {
  const auto b = s.find_first_not_of(" \t");
  const auto e = s.find_last_not_of(" \t");
  s = b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos && !s.empty() && s.front() != ' ' && s.back() != ' ') {
    return s;
  }
  if (s.empty()) {
    return s;
  }
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') {
      out += "\"\"";
    } else {
      out.push_back(c);
    }
  }
  out.push_back('"');
  return out;
}

}  // namespace detail

inline Parsed<std::vector<CrimeRecord>> parse_crime_csv(std::string_view bytes) {
  const auto rows = detail::split_csv(bytes);
  Parsed<std::vector<CrimeRecord>> out;
  if (rows.empty()) {
    throw ParseError("crime CSV: missing header row");
  }
  std::map<std::string, std::size_t> col;
  for (std::size_t c = 0; c < rows[0].fields.size(); ++c) {
    col.try_emplace(detail::lower_trim(rows[0].fields[c]), c);
  }
  for (const char* req : {"id", "latitude", "longitude", "date", "category"}) {
    if (!col.contains(req)) {
      throw ParseError(std::string("crime CSV: missing required column '") + req + "'");
    }
  }
  const std::size_t width = rows[0].fields.size();
  auto& rep = out.report;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const std::string where = "row " + std::to_string(r) + " (line " + std::to_string(row.line) + ")";
    if (row.unterminated) {
      rep.reject("unterminated quoted field", where);
      continue;
    }
    if (row.fields.size() != width) {
      rep.reject("wrong field count", where);
      continue;
    }
    const auto& f = row.fields;
    const std::string& id = f[col["id"]];
    if (id.empty()) {
      rep.reject("missing id", where);
      continue;
    }
    const std::string& lat_s = f[col["latitude"]];
    const std::string& lon_s = f[col["longitude"]];
    if (lat_s.find_first_not_of(" \t") == std::string::npos || lon_s.find_first_not_of(" \t") == std::string::npos) {
      rep.reject("missing coordinate", where);
      continue;
    }
    auto lat = detail::parse_double(lat_s);
    auto lon = detail::parse_double(lon_s);
    if (!lat || !lon) {
      rep.reject("unparseable coordinate", where);
      continue;
    }
    if (!GeoPoint::valid(*lat, *lon)) {
      rep.reject("coordinate out of range", where);
      continue;
    }
    auto date = parse_date(f[col["date"]]);
    if (!date) {
      rep.reject("unparseable date", where);
      continue;
    }
    out.value.push_back(CrimeRecord{id, GeoPoint{*lat, *lon}, *date, f[col["category"]]});
    rep.keep();
  }
  return out;
}

inline std::string serialize_crime_csv(const std::vector<CrimeRecord>& crimes) {
  std::string out = "id,latitude,longitude,date,category\r\n";
  for (const auto& c : crimes) {
    out += detail::csv_quote(c.id);
    out += ',';
    out += detail::format_double(c.location.lat());
    out += ',';
    out += detail::format_double(c.location.lon());
    out += ',';
    out += format_date(c.occurred_at);
    out += ',';
    out += detail::csv_quote(c.category);
    out += "\r\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Road network GeoJSON

namespace detail {

// Mutable snapping grid used while the graph is being assembled.
class NodeSnapper {
public:
  explicit NodeSnapper(RoadNetwork& net) : net_(net) {}

  NodeId snap(const GeoPoint& p) {
    if (!anchored_) {
      lat0_ = p.lat();
      kx_ = std::max(std::cos(lat0_ * geo::kDegToRad), 1e-6) * geo::kDegToRad * geo::kEarthRadiusM;
      anchored_ = true;
    }
    const auto [cx, cy] = cell(p);
    std::optional<std::pair<double, NodeId>> best;
    for (std::int64_t dx = -1; dx <= 1; ++dx) {
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        auto it = cells_.find({cx + dx, cy + dy});
        if (it == cells_.end()) {
          continue;
        }
        for (NodeId n : it->second) {
          const double d = geo::haversine(p, net_.node(n));
          if (d <= kNodeSnapToleranceM) {
            std::pair key{d, n};
            if (!best || key < *best) {
              best = key;
            }
          }
        }
      }
    }
    if (best) {
      return best->second;
    }
    const NodeId n = net_.add_node(p);
    cells_[{cx, cy}].push_back(n);
    return n;
  }

private:
  // 4 m cells: a 1 m neighbourhood stays inside the 3x3 block for any
  // city-sized extent around the anchor latitude.
  static constexpr double kCell = 4.0;

  std::pair<std::int64_t, std::int64_t> cell(const GeoPoint& p) const {
    return {static_cast<std::int64_t>(std::floor(p.lon() * kx_ / kCell)),
            static_cast<std::int64_t>(std::floor(p.lat() * geo::kDegToRad * geo::kEarthRadiusM / kCell))};
  }

  RoadNetwork& net_;
  bool anchored_ = false;
  double lat0_ = 0.0;
  double kx_ = 1.0;
  std::map<std::pair<std::int64_t, std::int64_t>, std::vector<NodeId>> cells_;
};

}  // namespace detail

/// FeatureCollection of LineStrings with properties.edge_id. Endpoints within
/// 1 m share a node; node ids follow first appearance. crime_count starts at 0.
inline Parsed<RoadNetwork> parse_road_geojson(std::string_view bytes) {
  const json doc = detail::parse_json(bytes, "road network");
  if (!doc.is_object() || doc.value("type", "") != "FeatureCollection") {
    throw ParseError("road network: expected a GeoJSON FeatureCollection");
  }
  auto feats = doc.find("features");
  if (feats == doc.end() || !feats->is_array()) {
    throw ParseError("road network: missing \"features\" array");
  }
  Parsed<RoadNetwork> out;
  auto& rep = out.report;
  detail::NodeSnapper snapper(out.value);
  for (std::size_t i = 0; i < feats->size(); ++i) {
    const json& f = (*feats)[i];
    const std::string where = "feature[" + std::to_string(i) + "]";
    if (!f.is_object()) {
      rep.reject("not an object", where);
      continue;
    }
    auto g = f.find("geometry");
    if (g == f.end() || g->is_null()) {
      rep.reject("missing geometry", where);
      continue;
    }
    if (!g->is_object() || g->value("type", "") != "LineString") {
      rep.reject("unsupported geometry type", where);
      continue;
    }
    auto coords = g->find("coordinates");
    if (coords == g->end() || !coords->is_array()) {
      rep.reject("missing coordinates", where);
      continue;
    }
    if (coords->size() < 2) {
      rep.reject("linestring needs at least 2 coordinates", where);
      continue;
    }
    std::vector<GeoPoint> pts;
    bool bad = false;
    for (const json& c : *coords) {
      if (!c.is_array() || c.size() < 2 || !c[0].is_number() || !c[1].is_number() ||
          !GeoPoint::valid(c[1].get<double>(), c[0].get<double>())) {
        bad = true;
        break;
      }
      pts.emplace_back(c[1].get<double>(), c[0].get<double>());
    }
    if (bad) {
      rep.reject("invalid coordinate", where);
      continue;
    }
    std::optional<std::string> edge_id;
    if (auto props = f.find("properties"); props != f.end() && props->is_object()) {
      edge_id = detail::id_field(*props, "edge_id");
    }
    if (!edge_id) {
      rep.reject("missing edge_id", where);
      continue;
    }
    const NodeId a = snapper.snap(pts.front());
    const NodeId b = snapper.snap(pts.back());
    out.value.add_edge(*edge_id, a, b, Polyline{std::move(pts)});
    rep.keep();
  }
  return out;
}

inline std::string serialize_road_geojson(const RoadNetwork& net) {
  json feats = json::array();
  for (const auto& e : net.edges()) {
    json coords = json::array();
    for (const auto& p : e.geometry.points()) {
      coords.push_back(json::array({p.lon(), p.lat()}));
    }
    feats.push_back(json{{"type", "Feature"},
                         {"geometry", {{"type", "LineString"}, {"coordinates", coords}}},
                         {"properties", {{"edge_id", e.id}, {"length_m", e.length}, {"crime_count", e.crime_count}}}});
  }
  return json{{"type", "FeatureCollection"}, {"features", feats}}.dump() + "\n";
}

// ---------------------------------------------------------------------------
// Snapshot store

/// Files each status into its (station, local date, bucket) slot. With a
/// registry, statuses exceeding station capacity are rejected and unknown
/// station ids are kept with a warning.
inline IngestReport append_snapshots(SnapshotStore& store, const std::vector<StationStatus>& statuses,
                                     const TimeZone& tz, const StationRegistry* registry = nullptr) {
  IngestReport rep;
  for (const auto& s : statuses) {
    if (s.bikes < 0 || s.docks < 0) {
      rep.reject("negative count", s.station_id);
      continue;
    }
    if (registry != nullptr) {
      if (const Station* st = registry->find(s.station_id)) {
        if (static_cast<std::int64_t>(s.bikes) + s.docks > st->capacity) {
          rep.reject("exceeds capacity", s.station_id);
          continue;
        }
      } else {
        rep.warn("unknown station_id");
      }
    }
    const LocalDateTime local = tz.to_local(s.timestamp);
    store.series_for(s.station_id).set(local.date, bucket_of(local), Counts{s.bikes, s.docks});
    rep.keep();
  }
  return rep;
}

inline constexpr std::string_view kStoreMagic = "SAFEBIKE-STORE";
inline constexpr int kStoreVersion = 1;

/// Text form: header line, one tab-separated record per filled slot sorted by
/// (station_id, date, bucket), and an END line with record count and CRC-32
/// of the record lines.
inline std::string serialize_store(const SnapshotStore& store) {
  std::string body;
  std::size_t count = 0;
  for (const auto& [id, series] : store) {
    if (id.empty() || id.find_first_of("\t\r\n") != std::string::npos) {
      throw std::invalid_argument("station id not storable: '" + id + "'");
    }
    for (const auto& [date, buckets] : series.days()) {
      const std::string ds = format_date(date);
      for (int b = 0; b < kBucketsPerDay; ++b) {
        const auto& slot = buckets[static_cast<std::size_t>(b)];
        if (!slot) {
          continue;
        }
        body += id + '\t' + ds + '\t' + std::to_string(b) + '\t' + std::to_string(slot->bikes) + '\t' +
                std::to_string(slot->docks) + '\n';
        ++count;
      }
    }
  }
  boost::crc_32_type crc;
  crc.process_bytes(body.data(), body.size());
  char tail[64];
  std::snprintf(tail, sizeof tail, "END\t%zu\t%08x\n", count, static_cast<unsigned>(crc.checksum()));
  return std::string(kStoreMagic) + " v" + std::to_string(kStoreVersion) + "\n" + body + tail;
}

inline SnapshotStore parse_store(std::string_view text) {
  auto fail = [](const std::string& msg) -> ParseError { return ParseError("snapshot store: " + msg); };
  const auto first_nl = text.find('\n');
  if (first_nl == std::string_view::npos) {
    throw fail("truncated header");
  }
  const std::string_view header = text.substr(0, first_nl);
  const std::string expected = std::string(kStoreMagic) + " v";
  if (header.substr(0, expected.size()) != expected) {
    throw fail("not a snapshot store (bad header)");
  }
  int version = 0;
  if (!safebike::detail::parse_int(header.substr(expected.size()), version)) {
    throw fail("bad version in header");
  }
  if (version != kStoreVersion) {
    throw fail("unsupported version " + std::to_string(version) + " (expected " + std::to_string(kStoreVersion) + ")");
  }
  const auto end_pos = text.rfind("END\t");
  if (end_pos == std::string_view::npos || end_pos < first_nl + 1 || (end_pos > 0 && text[end_pos - 1] != '\n')) {
    throw fail("truncated file (no END line)");
  }
  const std::string_view body = text.substr(first_nl + 1, end_pos - first_nl - 1);
  std::string_view tail = text.substr(end_pos + 4);
  if (tail.empty() || tail.back() != '\n') {
    throw fail("truncated END line");
  }
  tail.remove_suffix(1);
  const auto tab = tail.find('\t');
  if (tab == std::string_view::npos) {
    throw fail("malformed END line");
  }
  std::size_t declared = 0;
  {
    auto s = tail.substr(0, tab);
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), declared);
    if (ec != std::errc{} || p != s.data() + s.size()) {
      throw fail("malformed END line");
    }
  }
  unsigned declared_crc = 0;
  {
    auto s = tail.substr(tab + 1);
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), declared_crc, 16);
    if (s.size() != 8 || ec != std::errc{} || p != s.data() + s.size()) {
      throw fail("malformed END line");
    }
  }
  boost::crc_32_type crc;
  crc.process_bytes(body.data(), body.size());
  if (crc.checksum() != declared_crc) {
    throw fail("checksum mismatch (file corrupted)");
  }

  SnapshotStore store;
  std::size_t count = 0;
  std::size_t line_no = 1;
  std::optional<std::tuple<std::string, Date, int>> prev;
  std::size_t pos = 0;
  while (pos < body.size()) {
    const auto nl = body.find('\n', pos);
    if (nl == std::string_view::npos) {
      throw fail("truncated record");
    }
    const std::string_view line = body.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    std::vector<std::string_view> parts;
    std::size_t s = 0;
    for (;;) {
      const auto t = line.find('\t', s);
      parts.push_back(line.substr(s, t == std::string_view::npos ? std::string_view::npos : t - s));
      if (t == std::string_view::npos) {
        break;
      }
      s = t + 1;
    }
    const std::string where = "line " + std::to_string(line_no);
    if (parts.size() != 5 || parts[0].empty()) {
      throw fail(where + ": expected 5 tab-separated fields");
    }
    auto date = parse_date(parts[1]);
    int bucket = 0;
    int bikes = 0;
    int docks = 0;
    if (!date || parts[1].size() != 10 || parts[1][4] != '-' || !safebike::detail::parse_int(parts[2], bucket) ||
        !safebike::detail::parse_int(parts[3], bikes) || !safebike::detail::parse_int(parts[4], docks) || bucket < 0 ||
        bucket >= kBucketsPerDay || bikes < 0 || docks < 0) {
      throw fail(where + ": invalid record");
    }
    std::tuple<std::string, Date, int> key{std::string(parts[0]), *date, bucket};
    if (prev && !(*prev < key)) {
      throw fail(where + ": records out of order or duplicated");
    }
    store.series_for(std::get<0>(key)).set(*date, bucket, Counts{bikes, docks});
    prev = std::move(key);
    ++count;
  }
  if (count != declared) {
    throw fail("record count mismatch (END says " + std::to_string(declared) + ", found " + std::to_string(count) + ")");
  }
  return store;
}

inline void save_store(const SnapshotStore& store, const std::filesystem::path& path) {
  const std::string text = serialize_store(store);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw std::runtime_error("cannot write " + tmp);
    }
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) {
      throw std::runtime_error("write failed: " + tmp);
    }
  }
  std::filesystem::rename(tmp, path);
}

inline SnapshotStore load_store(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ParseError("cannot open snapshot store " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_store(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}


}  // namespace safebike::ingest
