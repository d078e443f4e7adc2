#include "safebike/server.hpp"
#include "safebike/service.hpp"
#include "support/route_oracle.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <thread>

namespace safebike::service {
namespace {

namespace fs = std::filesystem;

const fs::path kFixtures{SAFEBIKE_FIXTURES};

EngineConfig fixture_config() { return load_config(kFixtures / "engine.conf"); }

const EngineState& fixture_engine() {
  static const auto st = load_engine(fixture_config());
  return *st;
}

GeoPoint grid_point(double dx, double dy) { return testing::offset(testing::kBaseLat, testing::kBaseLon, dx, dy); }

json point(const GeoPoint& p) { return json{{"lat", p.lat()}, {"lon", p.lon()}}; }

json route_body(const GeoPoint& o, const GeoPoint& d) {
  return json{{"origin", point(o)}, {"destination", point(d)}};
}

TEST(Config, ParsesKeysAndResolvesPaths) {
  const auto cfg = fixture_config();
  EXPECT_EQ(cfg.station_info, kFixtures / "station_info.json");
  EXPECT_EQ(cfg.listen_host, "127.0.0.1");
  EXPECT_EQ(cfg.listen_port, 0);
  EXPECT_EQ(cfg.horizon, 6);
  EXPECT_EQ(format_instant(*cfg.now), "2017-05-23T18:27:00Z");
}

TEST(Config, Errors) {
  EXPECT_THROW(parse_config("bogus = 1\n"), ConfigError);
  EXPECT_THROW(parse_config("horizon = 0\n"), ConfigError);
  EXPECT_THROW(parse_config("horizon = six\n"), ConfigError);
  EXPECT_THROW(parse_config("timezone = Nowhere/Land\n"), ConfigError);
  EXPECT_THROW(parse_config("just a line\n"), ConfigError);
  EXPECT_THROW(load_config(kFixtures / "missing.conf"), ConfigError);
}

TEST(Engine, MissingInputFailsBeforeServing) {
  auto cfg = fixture_config();
  cfg.crime_csv = kFixtures / "nope.csv";
  try {
    load_engine(cfg);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("crime_csv"), std::string::npos);
  }
}

TEST(Engine, CorruptInputFails) {
  const fs::path bad = fs::temp_directory_path() / "safebike_bad_roads.geojson";
  std::ofstream(bad) << "{\"type\": \"FeatureCollection\", \"features\": [";
  auto cfg = fixture_config();
  cfg.road_geojson = bad;
  EXPECT_THROW(load_engine(cfg), ingest::ParseError);
  fs::remove(bad);
}

TEST(Engine, ReportsMatchFixtureSizes) {
  const auto& st = fixture_engine();
  EXPECT_EQ(st.reports.at("station_info").records_kept, 5u);
  EXPECT_EQ(st.reports.at("crime_csv").records_kept, 12u);
  EXPECT_EQ(st.reports.at("road_geojson").records_kept, 12u);
  EXPECT_EQ(st.reports.at("status_archive").records_kept, 288u * 4 + 1);
  EXPECT_EQ(st.reports.at("status_archive").warnings.at("unknown station_id"), 1u);
  EXPECT_EQ(st.network.node_count(), 9u);
}

TEST(Stations, ListWithStatus) {
  const auto r = get_stations(fixture_engine());
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.body["api_version"], 1);
  const auto& arr = r.body["stations"];
  ASSERT_EQ(arr.size(), 5u);
  for (const auto& s : arr) {
    if (s["id"] == "72") {
      EXPECT_EQ(s["status"], "ok");
      EXPECT_EQ(s["bikes"], 10);
      EXPECT_DOUBLE_EQ(s["ratio"].get<double>(), 10.0 / 39.0);
    }
    if (s["id"] == "90") {
      EXPECT_EQ(s["status"], "unknown");
      EXPECT_TRUE(s["ratio"].is_null());
    }
  }
}

TEST(Stations, EmptyRegistry) {
  EngineState st;
  EXPECT_EQ(get_stations(st).body["stations"], json::array());
}

TEST(History, WindowArithmetic) {
  const auto& st = fixture_engine();
  // now is 14:27 local; a one-hour window holds bucket starts 13:30 .. 14:20.
  const auto r = get_history(st, "79", 1);
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.body["points"].size(), 6u);
  EXPECT_EQ(r.body["points"][0]["time"], "2017-05-23T17:30:00Z");
  EXPECT_EQ(get_history(st, "79", 24).body["points"].size(), 144u);
  EXPECT_EQ(get_history(st, "90", 24).body["points"], json::array());
  EXPECT_EQ(get_history(st, "nope", 24).status, 404);
  EXPECT_EQ(get_history(st, "79", -1).status, 400);
}

TEST(Prediction, FlatStationIsConstant) {
  const auto r = get_prediction(fixture_engine(), "72", 6);
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.body["predicted_bikes"], json::array({10, 10, 10, 10, 10, 10}));
  EXPECT_EQ(r.body["degraded"], false);
  EXPECT_EQ(r.body["times"][0], "2017-05-23T18:30:00Z");
}

TEST(Prediction, PeriodicStationReproducesPattern) {
  // Station 82 repeats bikes = (7 * bucket) mod 20 every day; now is bucket 86.
  const auto r = get_prediction(fixture_engine(), "82", 6);
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.body["current"]["bikes"], 2);
  EXPECT_EQ(r.body["predicted_bikes"], json::array({9, 16, 3, 10, 17, 4}));
}

TEST(Prediction, Errors) {
  const auto& st = fixture_engine();
  EXPECT_EQ(get_prediction(st, "nope", 6).status, 404);
  EXPECT_EQ(get_prediction(st, "72", 0).status, 400);
  const auto r = get_prediction(st, "90", 6);
  EXPECT_EQ(r.status, 409);
  EXPECT_EQ(r.body["error"]["code"], "no_current_status");
}

TEST(Route, DocumentShape) {
  const auto r = post_route(fixture_engine(), route_body(grid_point(0, 0), grid_point(400, 400)));
  ASSERT_EQ(r.status, 200) << r.body.dump();
  const auto& f = r.body["route"]["features"];
  ASSERT_EQ(f.size(), 5u);
  EXPECT_EQ(f[0]["properties"]["mode"], "walk");
  EXPECT_EQ(f[1]["properties"]["mode"], "bike");
  EXPECT_EQ(f[3]["geometry"]["type"], "Point");
  EXPECT_EQ(r.body["scheme"], "optimal");
  EXPECT_EQ(r.body["departure_time"], "2017-05-23T18:27:00Z");
  EXPECT_DOUBLE_EQ(r.body["weights"]["gamma"].get<double>(), 0.4);
  double max_score = 0;
  for (const auto& a : r.body["alternatives"]) {
    EXPECT_LE(r.body["chosen"]["score"].get<double>(), a["score"].get<double>());
    max_score = std::max(max_score, a["score"].get<double>());
  }
  EXPECT_LE(max_score, 1.0);
}

TEST(Route, LengthOnlyWeightsEqualShortestScheme) {
  const auto& st = fixture_engine();
  auto body = route_body(grid_point(10, 0), grid_point(390, 410));
  auto w = body;
  w["weights"] = {{"alpha", 1}, {"beta", 0}, {"gamma", 0}};
  auto s = body;
  s["scheme"] = "shortest";
  const auto a = post_route(st, w);
  const auto b = post_route(st, s);
  ASSERT_EQ(a.status, 200);
  EXPECT_EQ(a.body["route"], b.body["route"]);
  EXPECT_EQ(a.body["chosen"], b.body["chosen"]);
}

TEST(Route, DefaultWeightsMatchOracle) {
  const auto& st = fixture_engine();
  const GeoPoint o = grid_point(5, 5);
  const GeoPoint d = grid_point(395, 400);
  const auto r = post_route(st, route_body(o, d));
  ASSERT_EQ(r.status, 200);

  RoadNetwork ref = ingest::parse_road_geojson(ingest::read_file(kFixtures / "roads.geojson")).value;
  const auto counts = testing::brute_crime_counts(ref, st.crimes, 50.0);
  for (EdgeIndex e = 0; e < ref.edge_count(); ++e) {
    ref.set_crime_count(e, counts[e]);
  }
  auto avail = [&](const std::string& id, Instant t) { return st.availability(id, t, st.now); };
  const auto want = testing::oracle_route(ref, st.registry, avail, o, d, st.now, 0.3, 0.3, 0.4);
  ASSERT_TRUE(want);
  EXPECT_EQ(r.body["chosen"]["origin_station_id"], want->best().origin_id);
  EXPECT_EQ(r.body["chosen"]["destination_station_id"], want->best().destination_id);
  EXPECT_EQ(r.body["chosen"]["score"].get<double>(), want->best().score);
}

TEST(Route, RequestErrors) {
  const auto& st = fixture_engine();
  auto body = route_body(grid_point(0, 0), grid_point(400, 400));
  body["weights"] = {{"alpha", -1}, {"beta", 0}, {"gamma", 0}};
  auto r = post_route(st, body);
  EXPECT_EQ(r.status, 400);
  EXPECT_NE(r.body["error"]["message"].get<std::string>().find("weights.alpha"), std::string::npos);
  body["weights"] = {{"alpha", 0}, {"beta", 0}, {"gamma", 0}};
  EXPECT_EQ(post_route(st, body).status, 400);
  EXPECT_EQ(post_route(st, json{{"origin", 1}}).status, 400);
  EXPECT_EQ(post_route(st, std::string_view("{\"origin\":")).body["error"]["code"], "invalid_json");
  body.erase("weights");
  body["scheme"] = "fastest";
  EXPECT_EQ(post_route(st, body).status, 400);
}

TEST(Route, StructuredRouteErrors) {
  const auto& st = fixture_engine();
  const auto far = post_route(st, route_body(GeoPoint{40.0, -75.0}, grid_point(400, 400)));
  EXPECT_EQ(far.status, 422);
  EXPECT_EQ(far.body["error"]["code"], "no_station_in_range");

  auto cfg = fixture_config();
  cfg.buffers.station_buffer_k = 60;
  const auto small = load_engine(cfg);
  // Only station 90 lies within 60 m of the south-east corner.
  const auto same = post_route(*small, route_body(grid_point(400, 0), grid_point(400, 0)));
  EXPECT_EQ(same.status, 422);
  EXPECT_EQ(same.body["error"]["code"], "no_route");
}

TEST(Route, Deterministic) {
  const auto& st = fixture_engine();
  const auto body = route_body(grid_point(30, 10), grid_point(380, 390));
  EXPECT_EQ(post_route(st, body).body.dump(), post_route(st, body).body.dump());
}

TEST(Handle, SwapIsAtomic) {
  EngineHandle h(load_engine(fixture_config()));
  const auto before = h.get();
  auto cfg = fixture_config();
  cfg.now = *parse_instant("2017-05-23T12:00:00Z");
  h.swap_in(load_engine(cfg));
  EXPECT_NE(h.get()->now, before->now);
  EXPECT_EQ(before->now, *fixture_config().now);  // old snapshot untouched
}

TEST(Http, EndpointsMatchHandlers) {
  auto cfg = fixture_config();
  Server server(cfg, load_engine(cfg));
  const int port = server.bind_any("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  httplib::Client cli("127.0.0.1", port);
  const auto& st = *server.engine().get();

  auto health = cli.Get("/health");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);

  auto stations = cli.Get("/stations");
  ASSERT_TRUE(stations);
  EXPECT_EQ(json::parse(stations->body), get_stations(st).body);
  EXPECT_EQ(stations->get_header_value("Access-Control-Allow-Origin"), "*");

  auto hist = cli.Get("/stations/79/history?hours=1");
  ASSERT_TRUE(hist);
  EXPECT_EQ(json::parse(hist->body), get_history(st, "79", 1).body);
  EXPECT_EQ(cli.Get("/stations/79/history?hours=x")->status, 400);

  auto pred = cli.Get("/stations/82/prediction");
  ASSERT_TRUE(pred);
  EXPECT_EQ(json::parse(pred->body), get_prediction(st, "82", 6).body);
  EXPECT_EQ(cli.Get("/stations/nope/prediction")->status, 404);

  const auto body = route_body(grid_point(0, 0), grid_point(400, 400));
  auto route = cli.Post("/route", body.dump(), "application/json");
  ASSERT_TRUE(route);
  EXPECT_EQ(route->status, 200);
  EXPECT_EQ(json::parse(route->body), post_route(st, body).body);
  EXPECT_EQ(cli.Post("/route", "{", "application/json")->status, 400);

  server.stop();
  t.join();
}

TEST(Http, PollerReloadsState) {
  auto cfg = fixture_config();
  cfg.poll_interval_s = 1;
  Server server(cfg, load_engine(cfg));
  const auto first = server.engine().get();
  const int port = server.bind_any("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  for (int i = 0; i < 40 && server.engine().get() == first; ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
  EXPECT_NE(server.engine().get(), first);
  server.stop();
  t.join();
}

}  // namespace
}  // namespace safebike::service
